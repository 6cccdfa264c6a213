"""Galton-Watson processes with possibly infinite offspring, and Galton-Watson trees as fragmentation trees."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dislocation import uniform_n
from .errors import DegenerateParameters, ExtinctionOnly, InfiniteSupport
from .fragmentation import FragmentationParams

SUM_TOL = 1e-12


@dataclass(frozen=True)
class OffspringDistribution:
    """probs[k] = P(Z = k) for k = 0..K, plus p_inf = P(Z = infinity)."""

    probs: tuple[float, ...]
    p_inf: float = 0.0

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        if any(p < 0 for p in probs) or self.p_inf < 0:
            raise DegenerateParameters("probabilities must be nonnegative")
        total = sum(probs) + self.p_inf
        if abs(total - 1.0) > SUM_TOL:
            raise DegenerateParameters(f"probabilities sum to {total!r}, not 1")
        while len(probs) > 1 and probs[-1] == 0:
            probs = probs[:-1]
        object.__setattr__(self, "probs", probs)

    @property
    def max_offspring(self) -> float:
        return math.inf if self.p_inf > 0 else len(self.probs) - 1

    def pgf(self, x: float) -> float:
        """E[x^Z] with x^infinity = 0 below 1."""
        if not 0 <= x <= 1:
            raise ValueError("pgf is evaluated on [0, 1]")
        value = float(np.polynomial.polynomial.polyval(x, self.probs))
        return value + self.p_inf if x == 1 else value

    def mean(self) -> float:
        if self.p_inf > 0:
            return math.inf
        return float(sum(k * p for k, p in enumerate(self.probs)))

    def extinction_probability(self, tol: float = 1e-14, max_iter: int = 10_000) -> float:
        """Smallest fixed point of the pgf on [0, 1].

        Iterating from 0 increases monotonically to it; near criticality the
        iteration is slow, so it is finished by bisection on pgf(x) - x, which
        is positive below the fixed point and negative between it and 1.
        """
        if self.p_inf == 0 and len(self.probs) > 1 and self.probs[1] == 1.0:
            return 0.0
        if self.p_inf == 0 and self.mean() <= 1:
            return 1.0
        q = 0.0
        for _ in range(max_iter):
            nxt = self.pgf(q)
            if nxt - q < tol:
                return nxt
            q = nxt
        below_one = [x for x in (1.0 - 2.0**-k for k in range(1, 53)) if x > q and self.pgf(x) < x]
        if not below_one:
            # critical to machine precision: the fixed point is 1
            return 1.0
        lo, hi = q, below_one[0]
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if self.pgf(mid) >= mid:
                lo = mid
            else:
                hi = mid
        return lo

    def truncated(self, N: int) -> "OffspringDistribution":
        """Law of min(Z, N)."""
        probs = list(self.probs[:N]) + [sum(self.probs[N:]) + self.p_inf]
        probs += [0.0] * (N + 1 - len(probs))
        return OffspringDistribution(tuple(probs), 0.0)


def from_pmf(pmf: Callable[[int], float], tail: Callable[[int], float], tol: float = 1e-12) -> OffspringDistribution:
    """Enumerate k = 0, 1, ... until the certified tail mass P(Z > k) is below tol; the rest goes to the last entry."""
    probs = []
    k = 0
    while tail(k) >= tol:
        probs.append(pmf(k))
        k += 1
        if k > 1_000_000:
            raise InfiniteSupport("tail bound does not fall below tol")
    probs.append(1.0 - sum(probs))
    return OffspringDistribution(tuple(probs))


def gw_fragmentation_params(dist: OffspringDistribution, a: float) -> FragmentationParams:
    """Fragmentation parameters of the tree whose edge lengths shrink by a factor a per generation.

    Children of an individual receive mass 1/N each, N the maximal offspring,
    and alpha = -log a / log N.
    """
    if dist.p_inf > 0:
        raise InfiniteSupport("infinite offspring has no finite dislocation measure; truncate first")
    if a <= 1:
        raise DegenerateParameters("a must exceed 1")
    N = len(dist.probs) - 1
    if N < 2:
        raise DegenerateParameters("need at least two offspring")
    return FragmentationParams(uniform_n(dist.probs), alpha=-math.log(a) / math.log(N), c=0.0, n=1)


def boundary_dimension_theory(dist: OffspringDistribution, a: float) -> float:
    return math.log(dist.mean()) / math.log(a)


@dataclass
class GWSample:
    generations: int
    sizes: np.ndarray  # final population, capped
    extinct: np.ndarray
    escaped: np.ndarray
    extinct_by_generation: np.ndarray

    @property
    def survival_fraction(self) -> float:
        return float(1.0 - self.extinct.mean())

    @property
    def survival_se(self) -> float:
        f = self.survival_fraction
        return math.sqrt(f * (1 - f) / len(self.extinct))


def simulate_gw(dist: OffspringDistribution, generations: int, replicates: int, rng: np.random.Generator, cap: int = 100_000) -> GWSample:
    """Generation sizes of independent processes; a population above `cap` (or with an infinite child) escapes."""
    probs = np.asarray(dist.probs + (dist.p_inf,), dtype=float)
    probs = probs / probs.sum()
    offspring = np.arange(len(dist.probs), dtype=np.int64)
    Z = np.ones(replicates, dtype=np.int64)
    escaped = np.zeros(replicates, dtype=bool)
    extinct_by_gen = np.empty(generations)
    for g in range(generations):
        active = (Z > 0) & ~escaped
        if active.any():
            counts = rng.multinomial(Z[active], probs)
            infinite = counts[:, -1] > 0
            nxt = counts[:, :-1] @ offspring
            idx = np.flatnonzero(active)
            # an infinite child means the population never dies out
            nxt[infinite] = np.maximum(nxt[infinite], cap + 1)
            Z[idx] = nxt
            escaped[idx[infinite | (nxt > cap)]] = True
        extinct_by_gen[g] = np.mean(Z == 0)
    return GWSample(generations, Z, Z == 0, escaped, extinct_by_gen)


@dataclass
class BoundaryReport:
    theory: float
    estimate: float | None
    ci: tuple[float, float] | None
    survival_fraction: float
    survival_se: float
    extinction_q: float

    @property
    def survival_z(self) -> float:
        return (self.survival_fraction - (1 - self.extinction_q)) / self.survival_se if self.survival_se > 0 else 0.0

    def to_json(self) -> dict:
        return {
            "theory": self.theory,
            "estimate": self.estimate,
            "ci": list(self.ci) if self.ci else None,
            "survival_fraction": self.survival_fraction,
            "survival_se": self.survival_se,
            "extinction_q": self.extinction_q,
            "survival_z": self.survival_z,
        }


def boundary_dimension_experiment(
    dist: OffspringDistribution,
    a: float,
    budget: int,
    rng: np.random.Generator,
    replicates: int = 20,
    gw_replicates: int = 10_000,
    generations: int = 30,
) -> BoundaryReport:
    """Theory log m / log a, a box-counting estimate on the mapped fragmentation, and survival against 1 - q."""
    from .dimension import dimension_report

    params = gw_fragmentation_params(dist, a)
    sample = simulate_gw(dist, generations, gw_replicates, rng)
    try:
        rep = dimension_report(params, budget, replicates, rng)
        estimate, ci = rep.estimate, (rep.ci_low, rep.ci_high)
    except ExtinctionOnly:
        estimate, ci = 0.0, None
    return BoundaryReport(
        boundary_dimension_theory(dist, a),
        estimate,
        ci,
        sample.survival_fraction,
        sample.survival_se,
        dist.extinction_probability(),
    )


def truncation_sweep(dist: OffspringDistribution, Ns: Sequence[int], a: float) -> list[tuple[int, float, float]]:
    """(N, mean of min(Z, N), dimension log m_N / log a) for increasing truncation levels."""
    out = []
    for N in Ns:
        d = dist.truncated(N)
        m = d.mean()
        out.append((N, m, math.log(m) / math.log(a) if m > 1 else 0.0))
    return out
