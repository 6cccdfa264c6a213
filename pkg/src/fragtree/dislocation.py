"""Discrete dislocation measures, their integrals, and split-atom sampling.

A measure is a sum of components. A component is either a finite list of
weighted atoms or a countable family whose per-atom quantities are available
in closed form together with certified bounds on the unenumerated tail. All
integrals against a measure go through `integrate`, which enumerates a family
until its declared tail bound falls below the requested tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import mpmath
import numpy as np
from scipy.special import zeta

from .errors import DivergentIntegral, ForbiddenAtom, InconclusiveTail, NoTailBound, ZeroRate
from .partitions import MassPartition, validate_mass_partition

CHUNK = 1 << 20
MAX_ATOMS = 1 << 24
FIRST_K = 1 << 10


def _powers(x: np.ndarray, p: float) -> np.ndarray:
    """x**p with the convention 0**p = 0, for every real p."""
    out = np.zeros_like(x, dtype=float)
    pos = x > 0
    out[pos] = x[pos] ** p
    return out


class FiniteAtoms:
    """Finitely many weighted atoms stored as a zero-padded matrix of parts."""

    size: int

    def __init__(self, weights: Sequence[float], atoms: Sequence[MassPartition]):
        if len(weights) != len(atoms):
            raise ValueError("weights and atoms differ in length")
        for w in weights:
            if not w > 0:
                raise ValueError(f"atom weight must be positive, got {w}")
        for s in atoms:
            if s.parts and s.parts[0] >= 1.0:
                raise ForbiddenAtom("the measure may not charge (1, 0, 0, ...)")
        self.w = np.asarray(weights, dtype=float)
        self.atoms = tuple(atoms)
        self.size = len(atoms)
        width = max([len(s) for s in atoms] + [1])
        self.parts = np.zeros((self.size, width))
        for k, s in enumerate(atoms):
            self.parts[k, : len(s)] = s.parts

    def weights(self, lo: int, hi: int) -> np.ndarray:
        return self.w[lo:hi]

    def largest(self, lo: int, hi: int) -> np.ndarray:
        return self.parts[lo:hi, 0]

    def power_sum(self, lo: int, hi: int, p: float) -> np.ndarray:
        return _powers(self.parts[lo:hi], p).sum(axis=1)

    def power_sum_finite(self, p: float) -> bool:
        return True

    def domain_lower(self) -> tuple[float, bool]:
        return -math.inf, True

    def top_power_sum(self, lo: int, hi: int, count: int, p: float) -> np.ndarray:
        return _powers(self.parts[lo:hi, :count], p).sum(axis=1)

    def log_moment(self, lo: int, hi: int, p: float) -> np.ndarray:
        x = self.parts[lo:hi]
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = -np.log(x[pos]) * x[pos] ** p
        return out.sum(axis=1)

    def atom(self, k: int) -> MassPartition:
        return self.atoms[k]

    # a finite list has no tail
    def tail_one_minus_largest(self, K: int) -> float:
        return 0.0

    def tail_power_excess(self, K: int, p: float) -> float:
        return 0.0

    def tail_inverse_largest(self, K: int) -> float:
        return 0.0

    def tail_log_moment(self, K: int, p: float) -> float:
        return 0.0

    def inverse_largest_divergent(self) -> bool:
        return False


class AtomFamily:
    """Countable family of atoms indexed by position k = 0, 1, 2, ...

    Subclasses supply vectorized per-atom quantities on position ranges and
    certified bounds on sums over positions k >= K. A bound of +inf means the
    family cannot certify that tail.
    """

    size = None
    max_parts = 4096

    def weights(self, lo, hi):
        raise NotImplementedError

    def largest(self, lo, hi):
        raise NotImplementedError

    def power_sum(self, lo, hi, p):
        raise NotImplementedError

    def power_sum_finite(self, p):
        raise NotImplementedError

    def domain_lower(self):
        """(inf of p with finite power sums, whether that infimum is included)."""
        raise NotImplementedError

    def top_power_sum(self, lo, hi, count, p):
        raise NotImplementedError

    def log_moment(self, lo, hi, p):
        raise InconclusiveTail(f"{type(self).__name__} has no log-moment evaluator")

    def atom(self, k):
        raise NotImplementedError

    def tail_one_minus_largest(self, K):
        return math.inf

    def tail_power_excess(self, K, p):
        return math.inf

    def tail_inverse_largest(self, K):
        return math.inf

    def tail_log_moment(self, K, p):
        return math.inf

    def inverse_largest_divergent(self):
        return False

    def tail_weight(self, K):
        """Bound on the total weight of positions k >= K."""
        return math.inf

    def largest_lower_bound(self, K):
        """Lower bound on s_1 over positions k >= K."""
        return 0.0

    def largest_upper_bound(self, K):
        """Upper bound on s_1 over positions k >= K."""
        return 1.0


@lru_cache(maxsize=None)
def log_series(p: float, cutoff: int = 10_000) -> float:
    """Sum over i >= 2 of (i log^2 i)^(-p); +inf for p < 1.

    Direct sum below `cutoff`, Euler-Maclaurin remainder above it (error of
    order cutoff**-4).
    """
    if p < 1:
        return math.inf
    i = np.arange(2, cutoff, dtype=float)
    head = float(np.sum((i * np.log(i) ** 2) ** -p))
    f = lambda x: (x * mpmath.log(x) ** 2) ** -p
    # with u = log x the tail integral is an upper incomplete gamma function
    L = math.log(cutoff)
    integral = 1.0 / L if p == 1 else (p - 1) ** (2 * p - 1) * mpmath.gammainc(1 - 2 * p, (p - 1) * L)
    d1 = mpmath.diff(f, cutoff, 1)
    d3 = mpmath.diff(f, cutoff, 3)
    tail = integral + f(cutoff) / 2 - d1 / 12 + d3 / 720
    return head + float(tail)


@lru_cache(maxsize=64)
def _log_series_prefix(p: float, count: int) -> np.ndarray:
    """Cumulative sums c[j] = sum_{i=2}^{j+1} (i log^2 i)^(-p), c[0] = 0."""
    i = np.arange(2, count + 1, dtype=float)
    return np.concatenate(([0.0], np.cumsum((i * np.log(i) ** 2) ** -p)))


class Nu1Family(AtomFamily):
    """Atom n >= 2 with weight 1/n: largest part 1 - 1/n, then (S/n)/(i log^2 i) for i >= 2.

    S normalizes the log series, so every atom is conservative. Power sums
    diverge for p < 1 by comparison with the harmonic series.
    """

    def __init__(self):
        self.norm = 1.0 / log_series(1.0)

    @staticmethod
    def _n(lo, hi):
        return np.arange(lo + 2, hi + 2, dtype=float)

    def weights(self, lo, hi):
        return 1.0 / self._n(lo, hi)

    def largest(self, lo, hi):
        return 1.0 - 1.0 / self._n(lo, hi)

    def power_sum_finite(self, p):
        return p >= 1

    def domain_lower(self):
        return 1.0, True

    def power_sum(self, lo, hi, p):
        n = self._n(lo, hi)
        if p < 1:
            return np.full(n.shape, math.inf)
        return (1.0 - 1.0 / n) ** p + (self.norm / n) ** p * log_series(float(p))

    def top_power_sum(self, lo, hi, count, p):
        n = self._n(lo, hi)
        head = (1.0 - 1.0 / n) ** p
        if count <= 1:
            return head
        return head + (self.norm / n) ** p * _log_series_prefix(float(p), count)[count - 1]

    def atom(self, k):
        n = k + 2
        i = np.arange(2, self.max_parts + 1, dtype=float)
        rest = (self.norm / n) / (i * np.log(i) ** 2)
        return validate_mass_partition(np.concatenate(([1.0 - 1.0 / n], rest)))

    def tail_one_minus_largest(self, K):
        # sum_{n >= K+2} 1/n^2 <= 1/(K+1)
        return 1.0 / (K + 1)

    def tail_power_excess(self, K, p):
        return 0.0 if p >= 1 else math.inf

    def tail_inverse_largest(self, K):
        # sum_{n >= K+2} 1/(n(n-1)) telescopes to 1/(K+1)
        return 1.0 / (K + 1)

    def largest_lower_bound(self, K):
        return 1.0 - 1.0 / (K + 2)


class Nu2Family(AtomFamily):
    """Atom n >= 2 with weight 1/n^2 built from t_1 = 1/n, t_k = T(1 - 1/n)/k^2 (k >= 2).

    Each t_k with k >= 2 is cut into N(n) = ceil(t_2/t_1) equal pieces, so
    the largest part is 1/n. Power sums are finite exactly for p > 1/2.
    """

    def __init__(self):
        self.T = 1.0 / (math.pi**2 / 6 - 1)

    @staticmethod
    def _n(lo, hi):
        return np.arange(lo + 2, hi + 2, dtype=float)

    def copies(self, n):
        return np.ceil(self.T * (n - 1) / 4)

    def weights(self, lo, hi):
        return 1.0 / self._n(lo, hi) ** 2

    def largest(self, lo, hi):
        return 1.0 / self._n(lo, hi)

    def tail_weight(self, K):
        return 1.0 / (K + 1)

    def largest_upper_bound(self, K):
        return 1.0 / (K + 2)

    def power_sum_finite(self, p):
        return p > 0.5

    def domain_lower(self):
        return 0.5, False

    def power_sum(self, lo, hi, p):
        n = self._n(lo, hi)
        if p <= 0.5:
            return np.full(n.shape, math.inf)
        m = self.copies(n)
        return n**-p + m ** (1 - p) * (self.T * (1 - 1 / n)) ** p * (zeta(2 * p) - 1)

    def top_power_sum(self, lo, hi, count, p):
        n = self._n(lo, hi)
        out = n**-p
        if count <= 1:
            return out
        m = self.copies(n)
        rest = count - 1
        full = np.floor(rest / m)
        partial = rest - full * m
        k = np.arange(2, int(full.max()) + 3, dtype=float)
        cum = np.concatenate(([0.0], np.cumsum(k ** (-2 * p))))
        piece = self.T * (1 - 1 / n) / m
        out = out + m * piece**p * cum[full.astype(int)]
        out = out + partial * (piece / (full + 2) ** 2) ** p
        return out

    def atom(self, k):
        n = k + 2
        m = int(self.copies(float(n)))
        parts = [1.0 / n]
        j = 2
        while len(parts) < self.max_parts:
            parts.extend([self.T * (1 - 1 / n) / j**2 / m] * m)
            j += 1
        return validate_mass_partition(parts[: self.max_parts])

    def tail_one_minus_largest(self, K):
        return 1.0 / (K + 1)

    def tail_power_excess(self, K, p):
        if p >= 1:
            return 0.0
        if p <= 0.5:
            return math.inf
        # N(n) <= T n, so the excess term is at most n^(-2-p) + T (zeta(2p) - 1) n^(-1-p)
        first = K + 1.0
        return first ** (-1 - p) / (1 + p) + self.T * (zeta(2 * p) - 1) * first**-p / p

    def tail_inverse_largest(self, K):
        return math.inf

    def inverse_largest_divergent(self):
        # each term (1/n^2)(n - 1) >= 1/(2n): harmonic comparison
        return True


def _ratio_tail(first_term: float, ratio: float) -> float:
    """Geometric bound on a tail whose successive term ratios never exceed `ratio`."""
    if first_term == 0:
        return 0.0
    if ratio >= 1:
        return math.inf
    return first_term / (1 - ratio)


class GeometricUniformFamily(AtomFamily):
    """Atom i >= 2 with weight mass (1-r) r^(i-2): i equal parts theta/i, dust 1 - theta.

    An offspring law with unbounded support in which every child receives the
    same share of the parent mass.
    """

    def __init__(self, mass: float, r: float, theta: float = 1.0):
        if not (0 < r < 1 and 0 < theta <= 1 and mass > 0):
            raise ValueError("need mass > 0, 0 < r < 1, 0 < theta <= 1")
        self.mass, self.r, self.theta = float(mass), float(r), float(theta)

    @staticmethod
    def _i(lo, hi):
        return np.arange(lo + 2, hi + 2, dtype=float)

    def weights(self, lo, hi):
        i = self._i(lo, hi)
        return self.mass * (1 - self.r) * self.r ** (i - 2)

    def largest(self, lo, hi):
        return self.theta / self._i(lo, hi)

    def tail_weight(self, K):
        return self.mass * self.r**K

    def largest_upper_bound(self, K):
        return self.theta / (K + 2)

    def power_sum_finite(self, p):
        return True

    def domain_lower(self):
        return -math.inf, True

    def power_sum(self, lo, hi, p):
        i = self._i(lo, hi)
        return i * (self.theta / i) ** p

    def top_power_sum(self, lo, hi, count, p):
        i = self._i(lo, hi)
        return np.minimum(i, count) * (self.theta / i) ** p

    def log_moment(self, lo, hi, p):
        i = self._i(lo, hi)
        return i * np.log(i / self.theta) * (self.theta / i) ** p

    def atom(self, k):
        i = k + 2
        return validate_mass_partition([self.theta / i] * i)

    def _poly_tail(self, K, a, scale=1.0):
        # bound sum_{i >= K+2} w_i i^a; term ratios are decreasing in i
        i = K + 2.0
        first = scale * self.mass * (1 - self.r) * self.r ** (i - 2) * i**a
        return _ratio_tail(first, self.r * (1 + 1 / i) ** max(a, 0.0))

    def tail_one_minus_largest(self, K):
        return self._poly_tail(K, 0.0)

    def tail_power_excess(self, K, p):
        return self._poly_tail(K, 1 - p, self.theta**p)

    def tail_inverse_largest(self, K):
        return self._poly_tail(K, 1.0, 1 / self.theta)

    def tail_log_moment(self, K, p):
        # i log(i/theta) (theta/i)^p <= theta^p i^(2-p) once i >= 2/theta
        if K + 2 < 2 / self.theta:
            return math.inf
        return self._poly_tail(K, 2 - p, self.theta**p)


@dataclass(frozen=True, eq=False)
class DislocationMeasure:
    """Sum of atom components; `name` and `params` record the builtin it came from."""

    components: tuple = ()
    name: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return "finite" if all(c.size is not None for c in self.components) else "truncatable-family"

    @property
    def is_finite(self) -> bool:
        return self.kind == "finite"

    @property
    def kill_rate(self) -> float:
        total = 0.0
        for comp in self.components:
            if isinstance(comp, FiniteAtoms):
                total += float(sum(w for w, s in zip(comp.w, comp.atoms) if not s.parts))
        return total

    @property
    def is_zero(self) -> bool:
        return all(c.size == 0 for c in self.components)

    def table(self) -> "AtomTable":
        """Flat weight vector and atom lookup for simulation (finite measures only)."""
        cached = self.__dict__.get("_table")
        if cached is None:
            if not self.is_finite:
                raise NoTailBound("simulation needs a finite measure; call truncate first")
            cached = AtomTable(self)
            object.__setattr__(self, "_table", cached)
        return cached

    @property
    def atoms(self) -> list[tuple[float, MassPartition]]:
        t = self.table()
        return [(float(t.weights[k]), t.atom(k)) for k in range(len(t.weights))]

    def to_json(self) -> dict:
        out = {"kind": self.name, "params": dict(self.params)}
        if self.name == "custom":
            # kill atoms are listed explicitly, so the kill param would count them twice
            out["params"].pop("kill", None)
            out["atoms"] = [{"w": w, "s": list(s.parts)} for w, s in self.atoms]
        return out


class AtomTable:
    def __init__(self, measure: DislocationMeasure):
        self.components = [c for c in measure.components if c.size]
        self.offsets = np.cumsum([0] + [c.size for c in self.components])
        self.weights = (
            np.concatenate([c.weights(0, c.size) for c in self.components]) if self.components else np.zeros(0)
        )
        self._cache: dict[int, MassPartition] = {}

    def atom(self, k: int) -> MassPartition:
        s = self._cache.get(k)
        if s is None:
            j = int(np.searchsorted(self.offsets, k, side="right")) - 1
            s = self.components[j].atom(k - int(self.offsets[j]))
            self._cache[k] = s
        return s

    def power_sums(self, p: float) -> np.ndarray:
        if not self.components:
            return np.zeros(0)
        return np.concatenate([c.power_sum(0, c.size, p) for c in self.components])


class TruncatedFamily:
    """The first K atoms of a family, viewed as a finite component."""

    def __init__(self, family: AtomFamily, K: int):
        self.family = family
        self.size = int(K)
        self.discarded = family.tail_one_minus_largest(K)

    def __getattr__(self, name):
        return getattr(self.family, name)

    def _clip(self, hi):
        return min(hi, self.size)

    def weights(self, lo, hi):
        return self.family.weights(lo, self._clip(hi))

    def largest(self, lo, hi):
        return self.family.largest(lo, self._clip(hi))

    def power_sum(self, lo, hi, p):
        return self.family.power_sum(lo, self._clip(hi), p)

    def top_power_sum(self, lo, hi, count, p):
        return self.family.top_power_sum(lo, self._clip(hi), count, p)

    def log_moment(self, lo, hi, p):
        return self.family.log_moment(lo, self._clip(hi), p)

    def tail_one_minus_largest(self, K):
        return 0.0

    def tail_power_excess(self, K, p):
        return 0.0

    def tail_inverse_largest(self, K):
        return 0.0

    def tail_log_moment(self, K, p):
        return 0.0

    def inverse_largest_divergent(self):
        return False


# ---------------------------------------------------------------- integration


def _weighted_sum(w: np.ndarray, v: np.ndarray) -> float:
    pos = w > 0
    v = v[pos]
    if np.any(v == -math.inf):
        return -math.inf if not np.any(v == math.inf) else math.nan
    if np.any(v == math.inf):
        return math.inf
    return float(np.dot(w[pos], v))


def integrate(
    measure: DislocationMeasure,
    term: Callable,
    tail: Callable,
    tol: float,
) -> float:
    """Sum over atoms of weight * term, within `tol`.

    `term(component, lo, hi)` gives per-atom values on a position range.
    `tail(component, K)` bounds the absolute contribution of positions >= K.
    Infinite families are enumerated by doubling K until the bound is below
    their share of `tol`; if it never is, InconclusiveTail is raised.
    """
    families = [c for c in measure.components if c.size is None]
    # half the budget per family keeps the reported error strictly inside tol
    share = tol / (2 * max(1, len(families)))
    total = 0.0
    for comp in measure.components:
        if comp.size is not None:
            if comp.size:
                total += _weighted_sum(comp.weights(0, comp.size), term(comp, 0, comp.size))
            continue
        K = FIRST_K
        while tail(comp, K) > share:
            K *= 2
            if K > MAX_ATOMS:
                raise InconclusiveTail(f"tail bound of {type(comp).__name__} stays above {share:g}")
        for lo in range(0, K, CHUNK):
            hi = min(K, lo + CHUNK)
            total += _weighted_sum(comp.weights(lo, hi), term(comp, lo, hi))
            if math.isinf(total) or math.isnan(total):
                return total
    return total


def truncation_size(family, tol: float) -> int:
    K = FIRST_K
    while family.tail_one_minus_largest(K) > tol:
        K *= 2
        if K > MAX_ATOMS:
            raise NoTailBound(f"{type(family).__name__} tail does not fall below {tol:g}")
    return K


# ---------------------------------------------------------------- operations


def check_validity(nu: DislocationMeasure, tol: float = 1e-9) -> float:
    """Integral of (1 - s_1) against nu; raises if it cannot be shown finite."""
    for comp in nu.components:
        if isinstance(comp, FiniteAtoms) and comp.size and np.any(comp.largest(0, comp.size) >= 1.0):
            raise ForbiddenAtom("the measure may not charge (1, 0, 0, ...)")
    try:
        return integrate(
            nu,
            lambda c, lo, hi: 1.0 - c.largest(lo, hi),
            lambda c, K: c.tail_one_minus_largest(K),
            tol,
        )
    except InconclusiveTail as exc:
        raise DivergentIntegral(str(exc)) from exc


def split_rate(nu: DislocationMeasure, b: int, tol: float = 1e-9) -> float:
    """Rate at which a block of b labels visibly changes: integral of 1 - sum s_i^b.

    For b = 1 this is the rate at which a single label falls into the dust.
    """
    if b < 1:
        raise ValueError("block size must be at least 1")
    value = integrate(
        nu,
        lambda c, lo, hi: 1.0 - c.power_sum(lo, hi, b),
        lambda c, K: b * c.tail_one_minus_largest(K),
        tol,
    )
    if math.isinf(value):
        raise DivergentIntegral(f"visible rate for block size {b} is infinite")
    return max(value, 0.0)


def truncate(nu: DislocationMeasure, tol: float | None = None, K: int | None = None) -> DislocationMeasure:
    """Finite measure keeping the first atoms of every family.

    The discarded mass of (1 - s_1) is at most `tol` per family, so the lost
    visible rate for a block of size b is at most b times that.
    """
    if nu.is_finite:
        return nu
    if (tol is None) == (K is None):
        raise ValueError("give exactly one of tol or K")
    comps = []
    for comp in nu.components:
        if comp.size is not None:
            comps.append(comp)
            continue
        size = K if K is not None else truncation_size(comp, tol)
        if not math.isfinite(comp.tail_one_minus_largest(size)):
            raise NoTailBound(f"{type(comp).__name__} has no tail bound")
        comps.append(TruncatedFamily(comp, size))
    params = dict(nu.params, truncated_at=tol if tol is not None else K)
    return DislocationMeasure(tuple(comps), nu.name, params)


def discarded_visible_rate_bound(truncated: DislocationMeasure, b: int) -> float:
    return b * sum(c.discarded for c in truncated.components if isinstance(c, TruncatedFamily))


class VisibleSplitSampler:
    """Draws atoms with probability proportional to w_k (1 - sum_i (s_i^k)^b)."""

    def __init__(self, nu: DislocationMeasure, b: int, tol: float = 1e-9):
        finite = truncate(nu, tol=tol / max(b, 1)) if not nu.is_finite else nu
        self.table = finite.table()
        visible = self.table.weights * (1.0 - self.table.power_sums(b))
        visible = np.clip(visible, 0.0, None)
        self.rate = float(visible.sum())
        if self.rate <= 0:
            raise ZeroRate(f"no atom visibly splits a block of size {b}")
        self.cdf = np.cumsum(visible) / self.rate

    def indices(self, rng: np.random.Generator, size: int | None = None):
        u = rng.random(size)
        return np.minimum(np.searchsorted(self.cdf, u, side="right"), len(self.cdf) - 1)

    def sample(self, rng: np.random.Generator) -> MassPartition:
        return self.table.atom(int(self.indices(rng)))


def sample_split_atom(nu: DislocationMeasure, b: int, rng: np.random.Generator, tol: float = 1e-9) -> MassPartition:
    return VisibleSplitSampler(nu, b, tol).sample(rng)


# ---------------------------------------------------------------- builtins


def custom(atoms: Sequence[tuple[float, Sequence[float]]], name: str = "custom", params=None) -> DislocationMeasure:
    weights = [float(w) for w, _ in atoms]
    parts = [validate_mass_partition(s) for _, s in atoms]
    return DislocationMeasure((FiniteAtoms(weights, parts),), name, dict(params or {}))


def binary(a: float = 0.5) -> DislocationMeasure:
    """Unit-rate split into two pieces a and 1 - a."""
    if not 0 < a < 1:
        raise ValueError("a must lie in (0, 1)")
    return custom([(1.0, (a, 1 - a))], "binary", {"a": a})


def uniform_n(probs: Sequence[float]) -> DislocationMeasure:
    """Offspring law probs[i] of i children, each child getting mass 1/N with N = len(probs) - 1.

    probs[0] is the kill weight.
    """
    N = len(probs) - 1
    if N < 2:
        raise ValueError("need at least two offspring slots")
    atoms = [(p, [1.0 / N] * i) for i, p in enumerate(probs) if p > 0]
    return custom(atoms, "uniformN", {"probs": [float(p) for p in probs]})


def nu1() -> DislocationMeasure:
    return DislocationMeasure((Nu1Family(),), "nu1", {})


def nu2() -> DislocationMeasure:
    return DislocationMeasure((Nu2Family(),), "nu2", {})


def geometric_uniform(p0: float = 0.25, r: float = 0.5, theta: float = 1.0) -> DislocationMeasure:
    """Kill weight p0 plus an unbounded-offspring family of equal splits (see GeometricUniformFamily)."""
    comps = [GeometricUniformFamily(1 - p0, r, theta)]
    if p0 > 0:
        comps.append(FiniteAtoms([p0], [MassPartition(())]))
    return DislocationMeasure(tuple(comps), "geomUniform", {"p0": p0, "r": r, "theta": theta})


def kill_only(w: float) -> DislocationMeasure:
    return custom([(w, ())], "custom", {})


def zero_measure() -> DislocationMeasure:
    return DislocationMeasure((), "custom", {})


def with_kill(nu: DislocationMeasure, k: float) -> DislocationMeasure:
    """nu plus k times the atom that turns the whole block into dust."""
    if k < 0:
        raise ValueError("kill rate must be nonnegative")
    if k == 0:
        return nu
    comps = nu.components + (FiniteAtoms([k], [MassPartition(())]),)
    return DislocationMeasure(comps, nu.name, dict(nu.params, kill=nu.params.get("kill", 0.0) + k))


BUILTINS = {
    "binary": lambda params: binary(params.get("a", 0.5)),
    "uniformN": lambda params: uniform_n(params.get("probs", [0.25, 0.0, 0.75])),
    "nu1": lambda params: nu1(),
    "nu2": lambda params: nu2(),
    "geomUniform": lambda params: geometric_uniform(params.get("p0", 0.25), params.get("r", 0.5), params.get("theta", 1.0)),
}


def measure_from_json(source: dict) -> DislocationMeasure:
    """Build a measure from {"kind", "atoms", "params"}; a "kill" param adds a kill atom."""
    kind = source.get("kind", "custom")
    params = dict(source.get("params") or {})
    if kind == "custom":
        atoms = source.get("atoms")
        if atoms is None:
            raise ValueError("custom measure needs an 'atoms' list")
        nu = custom([(a["w"], a["s"]) for a in atoms], "custom", {k: v for k, v in params.items() if k != "kill"})
    elif kind in BUILTINS:
        nu = BUILTINS[kind](params)
    else:
        raise ValueError(f"unknown measure kind {kind!r}; expected one of custom, {', '.join(BUILTINS)}")
    return with_kill(nu, float(params.get("kill", 0.0)))
