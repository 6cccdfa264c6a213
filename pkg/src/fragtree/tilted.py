"""The tilted fragmentation seen from an immortal tagged fragment, leaf-measure weights and energy factors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dislocation import DislocationMeasure, truncate
from .errors import HorizonExhausted, InconclusiveTail, ZeroSpineRate
from .fragmentation import FragmentationParams, FragmentationPath, _time_change, simulate_homogeneous
from .malthus import phi_star, phi_star_slope_at_zero


class SpineSampler:
    """Draws (atom, fragment index) pairs with probability proportional to w_k (s_i^k)^p*.

    Infinite families are truncated first; `tol` bounds the discarded mass of (1 - s_1).
    """

    def __init__(self, nu: DislocationMeasure, p_star: float, tol: float = 1e-9):
        finite = nu if nu.is_finite else truncate(nu, tol=tol)
        table = finite.table()
        atoms, index, factor, weight = [], [], [], []
        for k in range(len(table.weights)):
            parts = np.asarray(table.atom(k).parts)
            if parts.size == 0:
                continue  # the tilt gives kill atoms zero weight
            atoms.append(np.full(parts.size, k))
            index.append(np.arange(parts.size))
            factor.append(parts)
            weight.append(table.weights[k] * parts**p_star)
        if weight:
            self.atom = np.concatenate(atoms)
            self.index = np.concatenate(index)
            self.factor = np.concatenate(factor)
            w = np.concatenate(weight)
        else:
            self.atom = self.index = np.zeros(0, dtype=int)
            self.factor = w = np.zeros(0)
        self.rate = float(w.sum())
        self.cdf = np.cumsum(w) / self.rate if self.rate > 0 else w
        self.table = table

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Positions into the flattened (atom, index) arrays."""
        pos = np.searchsorted(self.cdf, rng.random(size), side="right")
        return np.minimum(pos, len(self.cdf) - 1)


@dataclass
class SpinePath:
    """Atom times of the spine, the chosen atoms and indices, and the spine mass after each atom."""

    sampler: SpineSampler = field(repr=False)
    c: float
    horizon: float
    times: list[float] = field(default_factory=list)
    atoms: list[int] = field(default_factory=list)
    indices: list[int] = field(default_factory=list)
    masses: list[float] = field(default_factory=list)  # spine mass just after each atom
    rng: np.random.Generator | None = field(default=None, repr=False)

    def mass(self, t: float) -> float:
        k = int(np.searchsorted(self.times, t, side="right"))
        base = self.masses[k - 1] if k else 1.0
        return base * math.exp(-self.c * t)

    def extend(self, horizon: float) -> None:
        """Continue the spine up to a later horizon."""
        if horizon <= self.horizon:
            return
        rate = self.sampler.rate
        t = self.horizon if not self.times else max(self.horizon, self.times[-1])
        # a fresh exponential is valid by memorylessness
        while rate > 0:
            t += self.rng.exponential(1.0 / rate)
            if t > horizon:
                break
            pos = int(self.sampler.draw(self.rng, 1)[0])
            prev = self.masses[-1] if self.masses else 1.0
            self.times.append(t)
            self.atoms.append(int(self.sampler.atom[pos]))
            self.indices.append(int(self.sampler.index[pos]))
            self.masses.append(prev * float(self.sampler.factor[pos]))
        self.horizon = horizon

    def offspring(self) -> list[tuple[float, float]]:
        """Off-spine children as (birth time, mass at birth)."""
        out = []
        for t, k, i, m in zip(self.times, self.atoms, self.indices, self.masses):
            parts = self.sampler.table.atom(k).parts
            before = m / parts[i] * math.exp(-self.c * t)
            out.extend((t, before * s) for j, s in enumerate(parts) if j != i)
        return out


def simulate_spine(nu: DislocationMeasure, c: float, p_star: float, horizon: float, rng: np.random.Generator, tol: float = 1e-9) -> SpinePath:
    """Spine atoms on [0, horizon] at rate sum_k w_k sum_i (s_i^k)^p*; erosion never kills the spine."""
    sampler = SpineSampler(nu, p_star, tol)
    if sampler.rate == 0 and c == 0:
        raise ZeroSpineRate("the spine neither jumps nor erodes")
    path = SpinePath(sampler, c, 0.0, rng=rng)
    path.extend(horizon)
    return path


def _tail_bound(c: float, a: float, p_star: float, nu: DislocationMeasure) -> float:
    """Bound on the remaining integral of (m_t/m)^a after the current time."""
    if c > 0:
        return 1.0 / (c * a)
    # with no erosion, use the mean of the remaining functional
    return 1.0 / phi_star(nu, c, p_star, a)


def spine_height(spine: SpinePath, alpha: float, nu: DislocationMeasure, p_star: float, tol: float = 1e-12, max_events: int = 100_000) -> float:
    """Integral over [0, inf) of the spine mass to the power |alpha|, extending the spine as needed."""
    if alpha >= 0:
        raise ValueError("alpha must be negative")
    a = -alpha
    c = spine.c
    if spine.sampler.rate == 0:
        return 1.0 / (c * a)
    bound = _tail_bound(c, a, p_star, nu)
    while True:
        last = spine.masses[-1] * math.exp(-c * spine.horizon) if spine.masses else math.exp(-c * spine.horizon)
        if last**a * bound < tol:
            break
        if len(spine.times) > max_events:
            raise HorizonExhausted(f"tail bound above {tol} after {max_events} spine atoms")
        spine.extend(spine.horizon + 10.0 / spine.sampler.rate)
    total, t0, m = 0.0, 0.0, 1.0
    for t, after in zip(spine.times, spine.masses):
        total += _time_change(m * math.exp(-c * t0), t - t0, c, a)
        t0, m = t, after
    total += _time_change(m * math.exp(-c * t0), spine.horizon - t0, c, a)
    return total


def exponential_functional(
    nu: DislocationMeasure,
    c: float,
    p_star: float,
    alpha: float,
    size: int,
    rng: np.random.Generator,
    tol: float = 1e-12,
    max_rounds: int = 100_000,
) -> np.ndarray:
    """`size` independent copies of the tagged-leaf height, simulated in lockstep."""
    if alpha >= 0:
        raise ValueError("alpha must be negative")
    a = -alpha
    sampler = SpineSampler(nu, p_star)
    if sampler.rate == 0:
        if c == 0:
            raise ZeroSpineRate("the spine neither jumps nor erodes")
        return np.full(size, 1.0 / (c * a))
    bound = _tail_bound(c, a, p_star, nu)
    logfac = np.log(sampler.factor)
    total = np.zeros(size)
    logm = np.zeros(size)  # log of spine mass
    active = np.arange(size)
    for _ in range(max_rounds):
        if active.size == 0:
            return total
        dt = rng.exponential(1.0 / sampler.rate, size=active.size)
        ma = np.exp(a * logm[active])
        if c > 0:
            total[active] += ma * -np.expm1(-c * a * dt) / (c * a)
        else:
            total[active] += ma * dt
        logm[active] += -c * dt + logfac[sampler.draw(rng, active.size)]
        active = active[np.exp(a * logm[active]) * bound >= tol]
    raise HorizonExhausted(f"tail bound above {tol} after {max_rounds} spine atoms")


# ---------------------------------------------------------------- leaf-measure weights


@dataclass
class LeafMeasureApprox:
    """Block weights sum over surviving descendants of mass(horizon)^p*."""

    horizon: float
    weights: dict[int, float]
    total: float

    def weight(self, block_id: int) -> float:
        return self.weights[block_id]


def mu_star_weights(path: FragmentationPath, p_star: float, horizon: float) -> LeafMeasureApprox:
    """Weights of the blocks of a homogeneous path born by `horizon`; the root weight is M(horizon)."""
    if path.alpha != 0:
        raise ValueError("weights are defined on homogeneous paths")
    weights: dict[int, float] = {}
    for b in reversed(path.blocks):
        if b.birth > horizon:
            continue
        alive = b.end > horizon or (b.fate == "horizon" and b.end >= horizon)
        if alive or not b.children:
            m = path.mass_at(b, horizon) if alive else 0.0
            weights[b.id] = m**p_star if m > 0 else 0.0
        else:
            weights[b.id] = sum(weights[k] for k in b.children if k in weights)
    return LeafMeasureApprox(horizon, weights, weights[0])


# ---------------------------------------------------------------- tilted marginals


def _stat_one(path, t):
    return 1.0


def _stat_tagged_mass(path, t):
    return path.mass_of(1, t)


def _stat_tagged_above_quarter(path, t):
    return float(path.mass_of(1, t) > 0.25)


def _stat_live_blocks(path, t):
    return float(sum(1 for _, m in path.masses_at(t) if m > 0))


def _stat_tagged_block_size(path, t):
    return float(len(path.block_at(1, t).labels))


STATISTICS: dict[str, Callable] = {
    "one": _stat_one,
    "tagged_mass": _stat_tagged_mass,
    "tagged_mass_above_quarter": _stat_tagged_above_quarter,
    "live_blocks": _stat_live_blocks,
    "tagged_block_size": _stat_tagged_block_size,
}


@dataclass
class TiltComparison:
    statistic: str
    estimate_spine: float
    se_spine: float
    estimate_reweighted: float
    se_reweighted: float

    @property
    def se_joint(self) -> float:
        return math.hypot(self.se_spine, self.se_reweighted)

    @property
    def z_score(self) -> float:
        diff = self.estimate_spine - self.estimate_reweighted
        if self.se_joint == 0:
            return 0.0 if abs(diff) < 1e-12 else math.inf
        return diff / self.se_joint

    def to_json(self) -> dict:
        return {
            "statistic": self.statistic,
            "estimate_spine": self.estimate_spine,
            "estimate_reweighted": self.estimate_reweighted,
            "se_joint": self.se_joint,
            "z_score": self.z_score,
        }


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def tilted_marginal_check(
    nu: DislocationMeasure,
    c: float,
    p_star: float,
    t: float,
    statistics: list[str] | None,
    replicates: int,
    rng: np.random.Generator,
    n: int = 4,
) -> list[TiltComparison]:
    """Spine simulation against plain simulation reweighted by |block of 1|^(p*-1), on labels 1..n at time t."""
    names = list(statistics or STATISTICS)
    params = FragmentationParams(nu, 0.0, c, n, horizon=t)
    spine_vals = np.empty((len(names), replicates))
    plain_vals = np.empty((len(names), replicates))
    for r in range(replicates):
        sp = simulate_homogeneous(params, rng, spine_p_star=p_star)
        pl = simulate_homogeneous(params, rng)
        m = pl.mass_of(1, t)
        w = m ** (p_star - 1.0) if m > 0 else 0.0
        for k, name in enumerate(names):
            f = STATISTICS[name]
            spine_vals[k, r] = f(sp, t)
            plain_vals[k, r] = w * f(pl, t) if w else 0.0
    out = []
    for k, name in enumerate(names):
        a, sa = _mean_se(spine_vals[k])
        b, sb = _mean_se(plain_vals[k])
        out.append(TiltComparison(name, a, sa, b, sb))
    return out


# ---------------------------------------------------------------- energy


def inverse_height_moment(
    nu: DislocationMeasure, c: float, p_star: float, alpha: float, gamma: float, rng: np.random.Generator, replicates: int = 10_000
) -> float:
    """E[I^-gamma], by Monte Carlo on (0, 1] and by the moment recursion above 1."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    a = -alpha
    factor = 1.0
    g = gamma
    while g > 1:
        factor *= -phi_star(nu, c, p_star, -a * (g - 1)) / (g - 1)
        g -= 1
    heights = exponential_functional(nu, c, p_star, alpha, replicates, rng)
    return factor * float(np.mean(heights**-g))


def pair_integral(nu: DislocationMeasure, p: float, q: float) -> float:
    """sum_k w_k sum_{i != j} (s_i^k)^p (s_j^k)^q for a finite measure."""
    if not nu.is_finite:
        raise InconclusiveTail("pair integral needs a finite measure")
    table = nu.table()
    total = 0.0
    for k, w in enumerate(table.weights):
        s = np.asarray(table.atom(k).parts)
        if s.size < 2:
            continue
        total += w * (np.sum(s**p) * np.sum(s**q) - np.sum(s ** (p + q)))
    return float(total)


@dataclass
class EnergyFactors:
    height_moment: float
    spine_integral: float
    pair_integral: float

    @property
    def energy(self) -> float:
        vals = (self.height_moment, self.spine_integral, self.pair_integral)
        if any(math.isinf(v) for v in vals):
            return math.inf
        return vals[0] * vals[1] * vals[2]


def frostman_energy(
    nu: DislocationMeasure,
    c: float,
    p_star: float,
    alpha: float,
    gamma: float,
    rng: np.random.Generator | None = None,
    replicates: int = 10_000,
    height_moment: float | None = None,
) -> EnergyFactors:
    """The three factors of the two-point gamma-energy of the leaf measure."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    q = p_star + alpha * gamma
    rate = phi_star(nu, c, p_star, q)
    spine = 1.0 / rate if rate > 0 else math.inf
    if height_moment is None:
        if rng is None:
            raise ValueError("need an rng or a precomputed height moment")
        height_moment = inverse_height_moment(nu, c, p_star, alpha, gamma, rng, replicates)
    pairs = pair_integral(nu, p_star, q) if q > 0 or nu.is_finite else math.inf
    return EnergyFactors(height_moment, spine, pairs)


def expected_inverse_height(nu: DislocationMeasure, c: float, p_star: float, alpha: float = -1.0) -> float:
    """Analytic value of E[1/I]: |alpha| times the right slope of phi* at 0."""
    return -alpha * phi_star_slope_at_zero(nu, c, p_star)
