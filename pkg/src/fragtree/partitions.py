"""Mass partitions, finite set partitions, paintbox sampling and the partition metric."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EntryAboveOne, LabelOutOfRange, NegativeEntry, SizeMismatch, SumExceedsOne

SUM_TOL = 1e-12


@dataclass(frozen=True)
class MassPartition:
    """Nonincreasing masses with total at most one; the deficit is dust."""

    parts: tuple[float, ...]

    @property
    def dust(self) -> float:
        return max(0.0, 1.0 - sum(self.parts))

    @property
    def largest(self) -> float:
        return self.parts[0] if self.parts else 0.0

    def __len__(self) -> int:
        return len(self.parts)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.parts, dtype=float)

    def power_sum(self, p: float) -> float:
        """Sum of s_i**p over the nonzero entries (so 0**p counts as 0 for every p)."""
        return float(sum(x**p for x in self.parts))

    def to_json(self) -> list[float]:
        return list(self.parts)


def validate_mass_partition(raw: Iterable[float]) -> MassPartition:
    values = [float(x) for x in raw]
    for x in values:
        if x < 0 or np.isnan(x):
            raise NegativeEntry(f"negative entry {x}")
        if x > 1.0:
            raise EntryAboveOne(f"entry {x} exceeds 1")
    total = sum(values)
    if total > 1.0 + SUM_TOL:
        raise SumExceedsOne(f"entries sum to {total!r}")
    values.sort(reverse=True)
    while values and values[-1] == 0.0:
        values.pop()
    return MassPartition(tuple(values))


@dataclass(frozen=True)
class SetPartition:
    """Partition of a finite label set; blocks sorted by their least element.

    Labels are positive integers. `ground` is the sorted label set.
    """

    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        blocks = tuple(sorted((tuple(sorted(b)) for b in self.blocks if len(b)), key=lambda b: b[0]))
        seen: set[int] = set()
        for b in blocks:
            for x in b:
                if x in seen:
                    raise ValueError(f"label {x} appears in two blocks")
                seen.add(x)
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def from_labels(cls, assignment: Sequence[int], labels: Sequence[int] | None = None) -> "SetPartition":
        """Group `labels` (default 1..len) by the value of `assignment`."""
        if labels is None:
            labels = range(1, len(assignment) + 1)
        groups: dict[int, list[int]] = {}
        for lab, key in zip(labels, assignment):
            groups.setdefault(int(key), []).append(int(lab))
        return cls(tuple(tuple(g) for g in groups.values()))

    @classmethod
    def one_block(cls, n: int) -> "SetPartition":
        return cls((tuple(range(1, n + 1)),))

    @classmethod
    def singletons(cls, n: int) -> "SetPartition":
        return cls(tuple((i,) for i in range(1, n + 1)))

    @property
    def ground(self) -> tuple[int, ...]:
        return tuple(sorted(x for b in self.blocks for x in b))

    @property
    def n(self) -> int:
        return sum(len(b) for b in self.blocks)

    def block_of(self, label: int) -> tuple[int, ...]:
        for b in self.blocks:
            if label in b:
                return b
        raise LabelOutOfRange(f"label {label} not in ground set")

    def block_index(self) -> dict[int, int]:
        return {x: k for k, b in enumerate(self.blocks) for x in b}

    def to_json(self) -> dict:
        return {"n": self.n, "blocks": [list(b) for b in self.blocks]}


def paintbox_sample(s: MassPartition, n: int, rng: np.random.Generator) -> SetPartition:
    """Kingman paintbox on labels 1..n: shared interval means shared block; dust gives singletons."""
    idx = paintbox_indices(s, n, rng)
    dust = len(s.parts)
    keys = [int(k) if k < dust else -(i + 1) for i, k in enumerate(idx)]
    return SetPartition.from_labels(keys)


def paintbox_indices(s: MassPartition, n: int, rng: np.random.Generator) -> np.ndarray:
    """Interval index of each of n uniform marks; len(s.parts) marks the dust."""
    edges = np.cumsum(s.parts)
    return np.searchsorted(edges, rng.random(n), side="right")


def restrict(pi: SetPartition, subset: Iterable[int]) -> SetPartition:
    keep = set(int(x) for x in subset)
    missing = keep.difference(pi.ground)
    if missing:
        raise LabelOutOfRange(f"labels {sorted(missing)} not in ground set")
    return SetPartition(tuple(tuple(x for x in b if x in keep) for b in pi.blocks))


def intersect(pi: SetPartition, other: SetPartition) -> SetPartition:
    if pi.ground != other.ground:
        raise SizeMismatch("partitions have different ground sets")
    a = pi.block_index()
    b = other.block_index()
    groups: dict[tuple[int, int], list[int]] = {}
    for x in pi.ground:
        groups.setdefault((a[x], b[x]), []).append(x)
    return SetPartition(tuple(tuple(g) for g in groups.values()))


def partition_distance(pi: SetPartition, other: SetPartition) -> float:
    """2**-k where k is the largest k with equal restrictions to the first k labels; 0 if equal."""
    if pi.ground != other.ground:
        raise SizeMismatch("partitions have different ground sets")
    ground = pi.ground
    a = pi.block_index()
    b = other.block_index()
    # two partitions agree on a prefix iff the first-seen block renumberings agree
    ren_a: dict[int, int] = {}
    ren_b: dict[int, int] = {}
    for k, x in enumerate(ground):
        ca = ren_a.setdefault(a[x], len(ren_a))
        cb = ren_b.setdefault(b[x], len(ren_b))
        if ca != cb:
            return 2.0**-k
    return 0.0


def block_frequency_estimate(pi: SetPartition, label: int) -> float:
    return len(pi.block_of(label)) / pi.n
