"""Reduced dislocation measures: keep the N largest fragments, or only the largest when it exceeds 1 - eps."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dislocation import DislocationMeasure, FiniteAtoms
from .errors import DegenerateParameters, NoMalthusianExponent
from .fragmentation import Block, Event, FragmentationPath
from .malthus import PSI_TOL, _bound_const, psi, solve_malthus
from .partitions import MassPartition, SetPartition


@dataclass(frozen=True)
class ReductionParams:
    N: int
    eps: float

    def __post_init__(self):
        if self.N < 1:
            raise DegenerateParameters("N must be at least 1")
        if not 0 < self.eps < 1:
            raise DegenerateParameters("eps must lie in (0, 1)")


def reduce_mass_partition(s: MassPartition, N: int, eps: float) -> MassPartition:
    ReductionParams(N, eps)
    if s.largest > 1 - eps:
        return MassPartition(s.parts[:1])
    return MassPartition(s.parts[:N])


class ReducedFamily:
    """Image of an infinite atom family under the reduction, evaluated without materializing atoms."""

    def __init__(self, base, N: int, eps: float):
        self.base = base
        self.N = N
        self.eps = eps
        self.size = base.size
        self.max_parts = min(N, getattr(base, "max_parts", N))

    def weights(self, lo, hi):
        return self.base.weights(lo, hi)

    def largest(self, lo, hi):
        return self.base.largest(lo, hi)

    def power_sum(self, lo, hi, p):
        s1 = self.base.largest(lo, hi)
        top = self.base.top_power_sum(lo, hi, self.N, p)
        return np.where(s1 > 1 - self.eps, np.where(s1 > 0, s1**p, 0.0), top)

    def top_power_sum(self, lo, hi, count, p):
        s1 = self.base.largest(lo, hi)
        top = self.base.top_power_sum(lo, hi, min(count, self.N), p)
        return np.where(s1 > 1 - self.eps, np.where(s1 > 0, s1**p, 0.0), top)

    def power_sum_finite(self, p):
        return True

    def domain_lower(self):
        return -math.inf, True

    def log_moment(self, lo, hi, p):
        raise NotImplementedError("log moments of reduced families are not needed")

    def atom(self, k):
        return reduce_mass_partition(self.base.atom(k), self.N, self.eps)

    def tail_one_minus_largest(self, K):
        return self.base.tail_one_minus_largest(K)

    def _extra_parts_tail(self, K, p, q=1.0):
        """Bound on the tail integral of (sum_{2 <= i <= N} s_i^p)^q."""
        if p < 0:
            return math.inf
        if self.N == 1 or self.base.largest_lower_bound(K) > 1 - self.eps:
            return 0.0
        extra = (self.N - 1) ** q
        # at most N - 1 extra parts; they only occur where s_1 <= 1 - eps
        by_largest = extra * self.base.tail_one_minus_largest(K) / self.eps
        by_weight = extra * self.base.largest_upper_bound(K) ** (p * q) * self.base.tail_weight(K)
        return min(by_largest, by_weight)

    def tail_power_excess(self, K, p):
        return self._extra_parts_tail(K, p)

    def tail_inverse_largest(self, K):
        return self.base.tail_inverse_largest(K)

    def tail_log_moment(self, K, p):
        return math.inf

    def inverse_largest_divergent(self):
        return self.base.inverse_largest_divergent()

    def mq_tail(self, K, p, q):
        """Bound on the tail of |1 - sum s_i^p|^q, using (1 - s_1)^q <= 1 - s_1 and convexity."""
        if p < 0:
            return math.inf
        cp = _bound_const(p)
        return 2 ** (q - 1) * (cp**q * self.base.tail_one_minus_largest(K) + self._extra_parts_tail(K, p, q))


def reduce_measure(nu: DislocationMeasure, N: int, eps: float) -> DislocationMeasure:
    ReductionParams(N, eps)
    comps = []
    for comp in nu.components:
        if isinstance(comp, FiniteAtoms):
            comps.append(FiniteAtoms(list(comp.w), [reduce_mass_partition(s, N, eps) for s in comp.atoms]))
        else:
            comps.append(ReducedFamily(comp, N, eps))
    return DislocationMeasure(tuple(comps), nu.name, dict(nu.params, reduced=[N, eps]))


def psi_reduced(nu: DislocationMeasure, c: float, N: int, eps: float, p: float, tol: float = PSI_TOL) -> float:
    return psi(reduce_measure(nu, N, eps), c, p, tol)


def malthus_reduced(nu: DislocationMeasure, c: float, N: int, eps: float, tol: float = 1e-10) -> float | None:
    """Malthusian exponent of the reduced measure, or None when its psi stays nonnegative."""
    try:
        return solve_malthus(reduce_measure(nu, N, eps), c, tol).p_star
    except NoMalthusianExponent:
        return None


def diagonal_sweep(nu: DislocationMeasure, c: float, Ns, tol: float = 1e-10) -> list[tuple[int, float, float | None]]:
    """(N, 1/N, reduced exponent) along the diagonal eps = 1/N."""
    return [(N, 1.0 / N, malthus_reduced(nu, c, N, 1.0 / N, tol)) for N in Ns]


# ---------------------------------------------------------------- coupled paths


def reduce_path(path: FragmentationPath, nu: DislocationMeasure, N: int, eps: float) -> FragmentationPath:
    """Replay a homogeneous path with every atom reduced, sharing its clocks and paintbox marks.

    A label that fell into fragment j stays in fragment j when the reduced
    atom keeps it, and becomes dust otherwise. The result is finer than the
    input at every time.
    """
    if path.alpha != 0:
        raise ValueError("reduce a homogeneous path")
    table = nu.table()
    blocks: list[Block] = [Block(0, tuple(range(1, path.n + 1)), 0.0, 1.0, None)]
    events: list[Event] = []
    current = {i: 0 for i in range(1, path.n + 1)}

    def mass_now(b: Block, t: float) -> float:
        return b.mass * math.exp(-path.c * (t - b.birth)) if path.c else b.mass

    def new_block(labels, t, mass, parent, fate="alive"):
        b = Block(len(blocks), tuple(labels), t, mass, parent, fate=fate)
        blocks.append(b)
        for i in labels:
            current[i] = b.id
        return b

    for ev in path.events:
        original = path.blocks[ev.block]
        if ev.kind == "erosion":
            label = next(path.blocks[k].labels[0] for k, s in zip(ev.children, ev.s_index) if s == -1)
            hit = [blocks[current[label]]]
            assign = {label: -1}
            kept = 0
        else:
            reduced = reduce_mass_partition(table.atom(ev.atom), N, eps)
            kept = len(reduced.parts)
            assign = {}
            for k, s in zip(ev.children, ev.s_index):
                for i in path.blocks[k].labels:
                    assign[i] = s if s is not None and 0 <= s < kept else -1
            hit = {current[i]: blocks[current[i]] for i in original.labels if blocks[current[i]].fate == "alive"}
            hit = sorted(hit.values(), key=lambda b: b.labels[0])
        for b in hit:
            if b.fate != "alive":
                continue
            m = mass_now(b, ev.t)
            b.end, b.fate, b.event = ev.t, "split", len(events)
            new = Event(ev.t, b.id, ev.kind, ev.atom, [], [], ev.kind == "atom" and kept == 0)
            events.append(new)
            groups: dict[int, list[int]] = {}
            for i in b.labels:
                # erosion leaves the other labels in place
                groups.setdefault(assign.get(i, -2), []).append(i)
            for j in sorted(groups):
                if j == -2:
                    child = new_block(groups[j], ev.t, m, b.id)
                    new.children.append(child.id)
                    new.s_index.append(None)
                elif j >= 0:
                    child = new_block(groups[j], ev.t, m * reduced.parts[j], b.id)
                    new.children.append(child.id)
                    new.s_index.append(j)
                else:
                    for i in groups[j]:
                        child = new_block((i,), ev.t, 0.0, b.id, fate="dust")
                        new.children.append(child.id)
                        new.s_index.append(-1)
            b.children = list(new.children)
    for b in blocks:
        if b.fate == "alive":
            b.fate = "horizon"
            b.end = path.horizon if path.horizon is not None else math.inf
    return FragmentationPath(0.0, path.c, path.n, blocks, events, path.erosion_times.copy(), path.horizon)


def is_finer(pi: SetPartition, other: SetPartition) -> bool:
    """Whether every block of pi lies inside a block of other."""
    index = other.block_index()
    return all(len({index[i] for i in b}) == 1 for b in pi.blocks)
