"""Laplace exponents, the Malthusian exponent, integrability hypotheses and additive martingales."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dislocation import DislocationMeasure, integrate, with_kill
from .errors import InconclusiveTail, NoMalthusianExponent

PSI_TOL = 1e-6
P_TOL = 1e-10


def _bound_const(p: float) -> float:
    """sup over x in [0,1) of (1 - x^p)/(1 - x), clipped at 0 for p <= 0."""
    if p <= 0:
        return 0.0
    return max(1.0, p)


def domain_contains(nu: DislocationMeasure, p: float) -> bool:
    """Whether every atom has a finite power sum at p."""
    return all(comp.power_sum_finite(p) for comp in nu.components)


def domain_lower(nu: DislocationMeasure) -> tuple[float, bool]:
    """Infimum of the exponents with finite power sums, and whether it is included."""
    lower, included = -math.inf, True
    for comp in nu.components:
        lo, inc = comp.domain_lower()
        if lo > lower:
            lower, included = lo, inc
        elif lo == lower:
            included = included and inc
    return lower, included


def psi(nu: DislocationMeasure, c: float, p: float, tol: float = PSI_TOL) -> float:
    """c p + integral of (1 - sum_i s_i^p); -inf when the power sums diverge."""
    if not domain_contains(nu, p):
        return -math.inf
    cp = _bound_const(p)
    return c * p + integrate(
        nu,
        lambda comp, lo, hi: 1.0 - comp.power_sum(lo, hi, p),
        lambda comp, K: cp * comp.tail_one_minus_largest(K) + comp.tail_power_excess(K, p),
        tol,
    )


def phi(nu: DislocationMeasure, c: float, q: float, tol: float = PSI_TOL) -> float:
    """Laplace exponent of minus the log of the tagged mass."""
    return psi(nu, c, q + 1.0, tol)


def phi_star(nu: DislocationMeasure, c: float, p_star: float, p: float, tol: float = PSI_TOL) -> float:
    """Laplace exponent of the spine subordinator: psi shifted by p_star."""
    return psi(nu, c, p + p_star, tol)


def phi_star_slope_at_zero(nu: DislocationMeasure, c: float, p_star: float, tol: float = PSI_TOL) -> float:
    """Right derivative of phi_star at 0: c + integral of sum_i (-log s_i) s_i^p_star."""
    return c + integrate(
        nu,
        lambda comp, lo, hi: comp.log_moment(lo, hi, p_star),
        lambda comp, K: comp.tail_log_moment(K, p_star),
        tol,
    )


def check_Hprime(nu: DislocationMeasure, tol: float = 1e-6) -> float:
    """Integral of (1/s_1 - 1); +inf when certified divergent."""
    if any(comp.inverse_largest_divergent() for comp in nu.components):
        return math.inf

    def term(comp, lo, hi):
        s1 = comp.largest(lo, hi)
        out = np.full(s1.shape, math.inf)
        pos = s1 > 0
        out[pos] = 1.0 / s1[pos] - 1.0
        return out

    return integrate(nu, term, lambda comp, K: comp.tail_inverse_largest(K), tol)


def check_Mq(nu: DislocationMeasure, p_star: float, q: float, tol: float = 1e-6) -> bool:
    """Whether the integral of |1 - sum_i s_i^p_star|^q is finite.

    Finite lists are always integrable. Families need either their own bound
    (`mq_tail`) or a vanishing power excess, in which case the integrand is
    at most C_p (1 - s_1).
    """
    if q <= 1:
        raise ValueError("q must exceed 1")
    if not domain_contains(nu, p_star):
        return False
    cp = _bound_const(p_star)

    def tail(comp, K):
        own = getattr(comp, "mq_tail", None)
        if own is not None:
            return own(K, p_star, q)
        if comp.tail_power_excess(K, p_star) == 0.0:
            return cp**q * comp.tail_one_minus_largest(K)
        return math.inf

    try:
        value = integrate(nu, lambda comp, lo, hi: np.abs(1.0 - comp.power_sum(lo, hi, p_star)) ** q, tail, tol)
    except InconclusiveTail:
        raise
    return math.isfinite(value)


def _bisect(pred, lo: float, hi: float, tol: float) -> float:
    """Boundary of a monotone predicate that is False at lo and True at hi."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class MalthusReport:
    nu: DislocationMeasure = field(repr=False)
    c: float
    p_star: float | None
    holds_H: bool
    p0: float
    p_prime: float
    p_lower: float | None
    p_lower_endpoint_inconclusive: bool
    mq_flags: dict[float, bool]
    psi_tol: float = PSI_TOL

    def psi(self, p: float) -> float:
        return psi(self.nu, self.c, p, self.psi_tol)

    def phi(self, q: float) -> float:
        return self.psi(q + 1.0)

    def phi_star(self, p: float) -> float:
        if self.p_star is None:
            raise NoMalthusianExponent("no Malthusian exponent", self)
        return self.psi(p + self.p_star)

    def to_json(self) -> dict:
        return {
            "measure": self.nu.to_json(),
            "c": self.c,
            "p_star": self.p_star,
            "holds_H": self.holds_H,
            "p0": self.p0,
            "p_prime": self.p_prime,
            "p_lower": self.p_lower,
            "p_lower_endpoint_inconclusive": self.p_lower_endpoint_inconclusive,
            "mq_flags": {str(q): v for q, v in self.mq_flags.items()},
        }


def solve_malthus(
    nu: DislocationMeasure,
    c: float = 0.0,
    tol: float = P_TOL,
    psi_tol: float = PSI_TOL,
    mq_orders: tuple[float, ...] = (1.5, 2.0, 4.0),
) -> MalthusReport:
    """Locate the root of psi in (0, 1] and evaluate the integrability hypotheses.

    Raises NoMalthusianExponent (carrying the partial report) when psi has no
    root in (0, 1].
    """
    f = lambda p: psi(nu, c, p, psi_tol)

    def f_or_none(p):
        try:
            return f(p)
        except InconclusiveTail:
            return None

    lower, included = domain_lower(nu)
    p0, p0_attained = (0.0, True) if lower < 0 else (lower, included)

    # points approaching p0 from above, then a regular grid up to 1
    approach = [p0 + (1 - p0) * 2.0**-k for k in range(40, 0, -1)]
    grid = ([p0] if p0_attained else []) + approach + list(np.linspace(p0, 1.0, 65)[1:])
    grid = sorted(set(x for x in grid if p0 <= x <= 1.0))

    # psi is exact up to rounding on finite measures, within psi_tol otherwise
    slack = 1e-13 if nu.is_finite else psi_tol
    negative = None
    for x in grid:
        v = f_or_none(x)
        if v is not None and math.isfinite(v) and v < -slack:
            negative = x
            break
    holds_H = negative is not None

    if f(1.0) <= slack:
        p_star = 1.0
    elif negative is not None:
        p_star = _bisect(lambda p: f(p) >= 0, negative, 1.0, tol)
    else:
        p_star = None

    if p_star is not None and negative is not None:
        p_prime = p_star
    elif p0_attained and f(p0) >= -slack:
        p_prime = p0
    else:
        p_prime = _bisect(lambda p: (f_or_none(p) or -math.inf) >= -slack, p0, 1.0, tol)

    if p_star is None:
        p_lower, inconclusive = None, False
    elif lower == -math.inf:
        p_lower, inconclusive = math.inf, False
    else:
        p_lower, inconclusive = p_star - lower, True

    mq = {}
    if p_star is not None:
        for q in mq_orders:
            try:
                mq[q] = check_Mq(nu, p_star, q)
            except InconclusiveTail:
                mq[q] = False
    report = MalthusReport(nu, c, p_star, holds_H, p0, p_prime, p_lower, inconclusive, mq, psi_tol)
    if p_star is None:
        raise NoMalthusianExponent("psi has no root in (0, 1]", report)
    return report


def malthus_vs_kill(nu: DislocationMeasure, c: float, k: float, tol: float = P_TOL) -> float:
    """Malthusian exponent after adding k times the kill atom."""
    return solve_malthus(with_kill(nu, k), c, tol).p_star


def malthus_vs_erosion(nu: DislocationMeasure, c: float, tol: float = P_TOL) -> float:
    return solve_malthus(nu, c, tol).p_star


def kill_threshold(nu: DislocationMeasure, c: float = 0.0) -> float:
    """Largest kill rate that keeps a Malthusian exponent: |psi(p0+)|."""
    lower, included = domain_lower(nu)
    if lower > 0 and not included:
        return math.inf
    return -psi(nu, c, max(lower, 0.0))


# ---------------------------------------------------------------- martingales


@dataclass(frozen=True)
class AdditiveMartingaleSample:
    t: float
    value: float
    n: int


def additive_martingale(path, p_star: float, t: float) -> AdditiveMartingaleSample:
    """Sum of mass^p_star over the blocks alive at t that contain an observed label."""
    total = 0.0
    for _, mass in path.masses_at(t):
        if mass > 0:
            total += mass**p_star
    return AdditiveMartingaleSample(t, total, path.n)


@dataclass
class WEstimate:
    mean: float
    se: float
    extinct_fraction: float
    values: np.ndarray = field(repr=False)


def estimate_W(params, t_max: float, n: int, replicates: int, rng: np.random.Generator, p_star: float | None = None) -> WEstimate:
    """Monte Carlo of the martingale limit through M_n(t_max); finite-n bias is not corrected."""
    from dataclasses import replace

    from .fragmentation import simulate_homogeneous

    if p_star is None:
        p_star = solve_malthus(params.nu, params.c).p_star
    run = replace(params, alpha=0.0, n=n, horizon=t_max)
    values = np.empty(replicates)
    for r in range(replicates):
        path = simulate_homogeneous(run, rng)
        values[r] = additive_martingale(path, p_star, t_max).value
    se = float(values.std(ddof=1) / math.sqrt(replicates)) if replicates > 1 else math.nan
    return WEstimate(float(values.mean()), se, float(np.mean(values == 0.0)), values)
