"""Command-line front end: every subcommand writes its results and a run manifest to --out.

Exit codes: 0 ok, 1 a check failed, 2 bad configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dislocation import BUILTINS, check_validity, measure_from_json, split_rate
from .errors import FragtreeError, NoMalthusianExponent

EXIT_OK, EXIT_CHECK, EXIT_CONFIG = 0, 1, 2

CONFIG_FIELDS = {
    "measure", "alpha", "c", "n", "horizon", "replicates", "seed", "out", "tol",
    "mass_floor", "t", "ks", "cs", "diag", "budget", "probs", "p_inf", "a", "generations", "gammas", "format",
}


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------- output formatting


def dump_json(obj) -> str:
    """JSON with floats at 17 significant digits; non-finite floats become null."""

    def enc(x, indent):
        pad = "  " * (indent + 1)
        end = "  " * indent
        if isinstance(x, bool) or x is None:
            return json.dumps(x)
        if isinstance(x, (float, np.floating)):
            x = float(x)
            return format(x, ".17g") if math.isfinite(x) else "null"
        if isinstance(x, (int, np.integer)):
            return str(int(x))
        if isinstance(x, str):
            return json.dumps(x)
        if isinstance(x, dict):
            if not x:
                return "{}"
            items = [f"{pad}{json.dumps(str(k))}: {enc(v, indent + 1)}" for k, v in x.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(x, (list, tuple, np.ndarray)):
            if len(x) == 0:
                return "[]"
            return "[" + ", ".join(enc(v, indent + 1) for v in x) + "]"
        raise TypeError(f"cannot serialize {type(x).__name__}")

    return enc(obj, 0) + "\n"


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else format(float(v), ".9g") if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


class Run:
    """Collects output files and writes the manifest."""

    def __init__(self, command: str, config: dict):
        self.command = command
        self.config = config
        self.out = Path(config["out"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def write(self, name: str, text: str) -> None:
        (self.out / name).write_text(text)
        self.files.append(name)

    def write_json(self, name: str, obj) -> None:
        self.write(name, dump_json(obj))

    def finish(self, status: int) -> int:
        import scipy

        manifest = {
            "command": self.command,
            "config": {k: v for k, v in self.config.items() if k != "out"},
            "seed": self.config.get("seed"),
            "outputs": self.files,
            "status": status,
            "versions": {"fragtree": __version__, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__},
        }
        (self.out / "manifest.json").write_text(dump_json(manifest))
        return status


def rng_for(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent stream per replicate index, derived from the master seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))


# ---------------------------------------------------------------- config


def _load_measure(source):
    if source is None:
        source = "binary"
    if isinstance(source, str):
        if source in BUILTINS:
            source = {"kind": source}
        elif Path(source).is_file():
            source = _read_json(Path(source), "measure file")
        else:
            try:
                source = json.loads(source)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"measure: not a builtin ({', '.join(BUILTINS)}), file or JSON ({exc.msg} at line {exc.lineno} column {exc.colno})")
    if not isinstance(source, dict):
        raise ConfigError("measure: expected an object with kind/atoms/params")
    try:
        return measure_from_json(source)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"measure: {exc}")


def _read_json(path: Path, what: str):
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} {path}: {exc.msg} at line {exc.lineno} column {exc.colno}")
    except OSError as exc:
        raise ConfigError(f"{what} {path}: {exc}")


DEFAULTS = {
    "alpha": 0.0, "c": 0.0, "n": 8, "horizon": None, "replicates": 1000, "seed": 0, "out": "out",
    "tol": 1e-10, "mass_floor": 0.0, "t": [0.5, 1.0, 2.0], "ks": None, "cs": None, "diag": 20,
    "budget": 1000, "probs": [0.25, 0.0, 0.75], "p_inf": 0.0, "a": 2.0, "generations": 30,
    "gammas": None, "format": "json",
}

TYPES = {
    "alpha": float, "c": float, "n": int, "horizon": float, "replicates": int, "seed": int, "out": str,
    "tol": float, "mass_floor": float, "diag": int, "budget": int, "p_inf": float, "a": float,
    "generations": int, "format": str,
}


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    config = dict(DEFAULTS)
    if args.config:
        data = _read_json(Path(args.config), "config")
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be an object")
        for key, value in data.items():
            if key not in CONFIG_FIELDS:
                raise ConfigError(f"config: unknown field {key!r}")
            config[key] = value
    for key in CONFIG_FIELDS:
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    for key, typ in TYPES.items():
        if config.get(key) is not None:
            try:
                config[key] = typ(config[key])
            except (TypeError, ValueError):
                raise ConfigError(f"config: field {key!r} must be {typ.__name__}, got {config[key]!r}")
    for key in ("t", "ks", "cs", "probs", "gammas"):
        value = config.get(key)
        if isinstance(value, str):
            try:
                config[key] = [float(x) for x in value.split(",") if x.strip()]
            except ValueError:
                raise ConfigError(f"config: field {key!r} must be a comma-separated list of numbers")
    return config


def _params(config, measure, **overrides):
    from .fragmentation import FragmentationParams

    kw = dict(nu=measure, alpha=config["alpha"], c=config["c"], n=config["n"], horizon=config["horizon"], mass_floor=config["mass_floor"])
    kw.update(overrides)
    try:
        return FragmentationParams(**kw)
    except (FragtreeError, ValueError) as exc:
        raise ConfigError(f"parameters: {exc}")


# ---------------------------------------------------------------- subcommands


def cmd_measure_validate(run: Run, config, measure) -> int:
    try:
        value = check_validity(measure, max(config["tol"], 1e-6))
    except FragtreeError as exc:
        run.write_json("measure.json", {"measure": measure.to_json(), "valid": False, "error": str(exc)})
        return EXIT_CHECK
    rates = {str(b): split_rate(measure, b, 1e-6) for b in (1, 2, 3, 4)}
    run.write_json("measure.json", {
        "measure": measure.to_json(), "kind": measure.kind, "valid": True,
        "integral_one_minus_largest": value, "kill_rate": measure.kill_rate, "split_rates": rates,
    })
    return EXIT_OK


def _solve(measure, c, tol):
    from .malthus import solve_malthus

    try:
        return solve_malthus(measure, c, tol, psi_tol=_psi_tol(measure))
    except NoMalthusianExponent as exc:
        return exc.report


def _psi_tol(measure) -> float:
    from .malthus import PSI_TOL

    return 1e-4 if measure.name == "nu2" else PSI_TOL


def cmd_malthus_solve(run, config, measure) -> int:
    report = _solve(measure, config["c"], config["tol"])
    out = report.to_json() if report is not None else {"p_star": None}
    run.write_json("malthus.json", out)
    print(dump_json(out), end="")
    return EXIT_OK


def cmd_malthus_sweep_kill(run, config, measure) -> int:
    from .malthus import kill_threshold, malthus_vs_kill

    ks = config["ks"]
    if ks is None:
        kmax = kill_threshold(measure, config["c"])
        top = kmax if math.isfinite(kmax) else 1.0
        ks = list(np.linspace(0.0, top, 11)[:-1])
    rows = []
    for k in ks:
        try:
            rows.append((float(k), malthus_vs_kill(measure, config["c"], float(k), config["tol"])))
        except NoMalthusianExponent:
            rows.append((float(k), None))
    run.write("sweep_kill.csv", csv_text(["k", "p_star"], rows))
    return EXIT_OK


def cmd_malthus_sweep_erosion(run, config, measure) -> int:
    from .malthus import malthus_vs_erosion

    cs = config["cs"] or [0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0]
    rows = []
    for c in cs:
        try:
            rows.append((float(c), malthus_vs_erosion(measure, float(c), config["tol"])))
        except NoMalthusianExponent:
            rows.append((float(c), None))
    run.write("sweep_erosion.csv", csv_text(["c", "p_star"], rows))
    return EXIT_OK


def _simulate(config, measure, rng):
    from .fragmentation import apply_lamperti, simulate_homogeneous

    params = _params(config, measure)
    try:
        path = simulate_homogeneous(params, rng)
    except FragtreeError as exc:
        raise ConfigError(f"simulate: {exc}")
    if params.alpha < 0:
        path = apply_lamperti(path, params.alpha)
    return path


def cmd_simulate(run, config, measure) -> int:
    path = _simulate(config, measure, rng_for(config["seed"]))
    run.write_json("path.json", path.to_json())
    return EXIT_OK


def _tree(config, measure):
    from .tree import build_tree

    if config["alpha"] >= 0:
        raise ConfigError("tree: needs --alpha < 0")
    if config["horizon"] is None and config["mass_floor"] == 0:
        config["mass_floor"] = 1e-6
    path = _simulate(config, measure, rng_for(config["seed"]))
    try:
        return build_tree(path), path
    except FragtreeError as exc:
        raise ConfigError(f"tree: {exc}")


def cmd_tree_build(run, config, measure) -> int:
    tree, _ = _tree(config, measure)
    run.write_json("tree.json", tree.to_json())
    run.write("tree.nwk", tree.to_newick() + "\n")
    return EXIT_OK


def cmd_tree_export(run, config, measure) -> int:
    tree, _ = _tree(config, measure)
    if config["format"] == "newick":
        run.write("tree.nwk", tree.to_newick() + "\n")
    elif config["format"] == "json":
        run.write_json("tree.json", tree.to_json())
    else:
        raise ConfigError("format: expected json or newick")
    return EXIT_OK


def cmd_tree_stats(run, config, measure) -> int:
    from .tree import classify_point, four_point_gap

    tree, path = _tree(config, measure)
    d = tree.distance_matrix()
    rng = rng_for(config["seed"], 1)
    gap = 0.0
    if tree.n >= 4:
        for _ in range(1000):
            gap = max(gap, four_point_gap(d, *rng.choice(tree.n, 4, replace=False)))
    coords = tree.embed_l1()
    norm_err = max(abs(sum(v for _, v in coords[i]) - tree.D(i)) for i in tree.labels)
    kinds: dict[str, int] = {}
    for i in tree.labels:
        k = classify_point(tree, path, (i, tree.D(i)))
        kinds[k] = kinds.get(k, 0) + 1
    run.write_json("tree_stats.json", {
        "leaves": tree.n, "height": float(tree.death_heights.max()), "diameter": float(d.max()),
        "four_point_gap": gap, "l1_norm_error": norm_err, "leaf_kinds": kinds,
    })
    return EXIT_OK


def _tagged_identity(config, measure, p_star, t_values):
    from .fragmentation import simulate_homogeneous

    rows = []
    horizon = max(t_values)
    params = _params(config, measure, alpha=0.0, n=1, horizon=horizon, mass_floor=0.0)
    vals = np.zeros((len(t_values), config["replicates"]))
    for r in range(config["replicates"]):
        path = simulate_homogeneous(params, rng_for(config["seed"], r))
        for k, t in enumerate(t_values):
            m = path.mass_of(1, t)
            vals[k, r] = m ** (p_star - 1) if m > 0 else 0.0
    for k, t in enumerate(t_values):
        mean = float(vals[k].mean())
        se = float(vals[k].std(ddof=1) / math.sqrt(vals.shape[1]))
        z = (mean - 1.0) / se if se > 0 else (0.0 if abs(mean - 1) < 1e-12 else math.inf)
        rows.append((t, mean, se, z))
    return rows


def cmd_martingale_check(run, config, measure) -> int:
    report = _solve(measure, config["c"], config["tol"])
    if report is None or report.p_star is None:
        raise ConfigError("martingale: measure has no Malthusian exponent")
    rows = _tagged_identity(config, measure, report.p_star, config["t"])
    run.write("martingale.csv", csv_text(["t", "mean", "se", "z"], rows))
    ok = all(abs(z) <= 3 for *_, z in rows)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_tilt_check(run, config, measure) -> int:
    from .tilted import tilted_marginal_check

    report = _solve(measure, config["c"], config["tol"])
    if report is None or report.p_star is None:
        raise ConfigError("tilt: measure has no Malthusian exponent")
    t = config["t"][0] if isinstance(config["t"], list) else float(config["t"])
    results = tilted_marginal_check(measure, config["c"], report.p_star, t, None, config["replicates"], rng_for(config["seed"]), n=config["n"])
    out = [r.to_json() for r in results]
    run.write_json("tilt.json", out)
    return EXIT_OK if all(abs(r.z_score) <= 3 for r in results) else EXIT_CHECK


def cmd_reduced_sweep(run, config, measure) -> int:
    from .reduced import diagonal_sweep

    rows = diagonal_sweep(measure, config["c"], range(2, config["diag"] + 1), config["tol"])
    run.write("reduced.csv", csv_text(["N", "eps", "p_star_reduced"], rows))
    return EXIT_OK


def cmd_dimension_estimate(run, config, measure) -> int:
    from .dimension import dimension_report
    from .errors import ExtinctionOnly

    if config["alpha"] >= 0:
        raise ConfigError("dimension: needs --alpha < 0")
    params = _params(config, measure, n=1, horizon=None, mass_floor=0.0)
    try:
        rep = dimension_report(params, config["budget"], config["replicates"], rng_for(config["seed"]), config["gammas"])
    except ExtinctionOnly:
        run.write_json("dimension.json", {"estimate": 0.0, "ci_low": 0.0, "ci_high": 0.0, "theory": 0.0, "branch": "countable"})
        return EXIT_OK
    rows = [(k, float(s), int(c)) for k, fit in enumerate(rep.fits) for s, c in zip(fit.scales, fit.counts)]
    run.write("covers.csv", csv_text(["replicate", "scale", "cover_count"], rows))
    run.write_json("dimension.json", rep.to_json())
    return EXIT_OK


def _offspring(config):
    from .gw import OffspringDistribution

    try:
        return OffspringDistribution(tuple(config["probs"]), config["p_inf"])
    except FragtreeError as exc:
        raise ConfigError(f"offspring: {exc}")


def cmd_gw_extinction(run, config, measure) -> int:
    dist = _offspring(config)
    run.write_json("gw_extinction.json", {"probs": list(dist.probs), "p_inf": dist.p_inf, "mean": dist.mean(), "q": dist.extinction_probability()})
    return EXIT_OK


def cmd_gw_simulate(run, config, measure) -> int:
    from .gw import simulate_gw

    dist = _offspring(config)
    sample = simulate_gw(dist, config["generations"], config["replicates"], rng_for(config["seed"]))
    rows = [(g + 1, float(f)) for g, f in enumerate(sample.extinct_by_generation)]
    run.write("gw_extinction_by_generation.csv", csv_text(["generation", "extinct_fraction"], rows))
    q = dist.extinction_probability()
    z = (sample.survival_fraction - (1 - q)) / sample.survival_se if sample.survival_se > 0 else 0.0
    run.write_json("gw_simulate.json", {"survival_fraction": sample.survival_fraction, "se": sample.survival_se, "q": q, "z": z})
    return EXIT_OK if abs(z) <= 3 else EXIT_CHECK


def cmd_gw_boundary_dim(run, config, measure) -> int:
    from .gw import boundary_dimension_experiment

    dist = _offspring(config)
    try:
        rep = boundary_dimension_experiment(dist, config["a"], config["budget"], rng_for(config["seed"]), replicates=min(config["replicates"], 50))
    except FragtreeError as exc:
        raise ConfigError(f"boundary-dim: {exc}")
    run.write_json("gw_boundary.json", rep.to_json())
    return EXIT_OK


def cmd_experiment(name):
    def run_experiment(run, config, measure) -> int:
        from . import dislocation as dl
        from .malthus import check_Hprime, psi

        if name == "nu1":
            nu = dl.nu1()
            report = _solve(nu, 0.0, config["tol"])
            out = {
                "integral_one_minus_largest": check_validity(nu, 1e-6),
                "Hprime": check_Hprime(nu),
                "holds_H": report.holds_H,
                "psi": {str(p): psi(nu, 0.0, p) for p in (0.5, 0.9, 0.99, 1.0)},
                "malthus": report.to_json(),
            }
        elif name == "nu2":
            nu = dl.nu2()
            report = _solve(nu, 0.0, config["tol"])
            out = {
                "psi_0.75": psi(nu, 0.0, 0.75, 1e-4),
                "Hprime": check_Hprime(nu),
                "Hprime_divergent": math.isinf(check_Hprime(nu)),
                "holds_H": report.holds_H,
                "malthus": report.to_json(),
            }
        elif name == "binary":
            from .dimension import dimension_report
            from .fragmentation import FragmentationParams

            nu = dl.binary(0.5)
            report = _solve(nu, 0.0, config["tol"])
            rep = dimension_report(FragmentationParams(nu, alpha=-1.0), config["budget"], min(config["replicates"], 20), rng_for(config["seed"]))
            out = {"malthus": report.to_json(), "dimension": rep.to_json()}
        else:
            from .gw import OffspringDistribution, boundary_dimension_experiment

            dist = OffspringDistribution((0.25, 0.0, 0.75))
            out = boundary_dimension_experiment(dist, 2.0, config["budget"], rng_for(config["seed"]), replicates=min(config["replicates"], 20)).to_json()
        run.write_json(f"experiment_{name}.json", out)
        return EXIT_OK

    return run_experiment


COMMANDS = {
    ("measure", "validate"): cmd_measure_validate,
    ("malthus", "solve"): cmd_malthus_solve,
    ("malthus", "sweep-kill"): cmd_malthus_sweep_kill,
    ("malthus", "sweep-erosion"): cmd_malthus_sweep_erosion,
    ("simulate", None): cmd_simulate,
    ("tree", "build"): cmd_tree_build,
    ("tree", "export"): cmd_tree_export,
    ("tree", "stats"): cmd_tree_stats,
    ("martingale", "check"): cmd_martingale_check,
    ("tilt", "check"): cmd_tilt_check,
    ("reduced", "sweep"): cmd_reduced_sweep,
    ("dimension", "estimate"): cmd_dimension_estimate,
    ("gw", "extinction"): cmd_gw_extinction,
    ("gw", "simulate"): cmd_gw_simulate,
    ("gw", "boundary-dim"): cmd_gw_boundary_dim,
    **{("experiment", name): cmd_experiment(name) for name in ("nu1", "nu2", "binary", "gw73")},
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with any of the options below")
    p.add_argument("--measure", help="builtin name, JSON file, or inline JSON")
    p.add_argument("--alpha", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--horizon", type=float)
    p.add_argument("--mass-floor", dest="mass_floor", type=float)
    p.add_argument("--replicates", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--tol", type=float)
    p.add_argument("--t", help="comma-separated times")
    p.add_argument("--ks", help="comma-separated kill rates")
    p.add_argument("--cs", help="comma-separated erosion rates")
    p.add_argument("--diag", type=int, help="largest N on the diagonal eps = 1/N")
    p.add_argument("--budget", type=int, help="leaf budget per replicate")
    p.add_argument("--gammas", help="comma-separated exponents for the covering scan")
    p.add_argument("--probs", help="comma-separated offspring probabilities p_0, p_1, ...")
    p.add_argument("--p-inf", dest="p_inf", type=float)
    p.add_argument("--a", type=float, help="edge-length ratio per generation")
    p.add_argument("--generations", type=int)
    p.add_argument("--format", choices=["json", "newick"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fragtree", description="Self-similar fragmentations and their genealogy trees")
    groups = parser.add_subparsers(dest="group", required=True)
    actions: dict[str, list[str]] = {}
    for group, action in COMMANDS:
        actions.setdefault(group, [])
        if action is not None:
            actions[group].append(action)
    for group, names in actions.items():
        gp = groups.add_parser(group)
        if not names:
            _add_common(gp)
            continue
        sub = gp.add_subparsers(dest="action", required=True)
        for name in names:
            _add_common(sub.add_parser(name))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    command = (args.group, getattr(args, "action", None))
    try:
        config = resolve_config(args)
        measure = _load_measure(config.get("measure"))
        config["measure"] = measure.to_json()
        run = Run(" ".join(c for c in command if c), config)
        status = COMMANDS[command](run, config, measure)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run.finish(status)


if __name__ == "__main__":
    sys.exit(main())
