"""Genealogy trees of self-similar fragmentations.

A tree on labels 1..n is determined by the death heights D_i and the
pairwise separation heights D_ij. Points are addressed as (label, height)
pairs; (i, t) and (j, t) name the same point whenever t <= D_ij.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InfiniteDeathTime, InvalidPreCutset, NotNested, PointNotInTree
from .partitions import SetPartition

ADD_TOL = 1e-12


@dataclass
class TreeNode:
    id: int
    parent: int | None
    height: float
    kind: str  # root, branch, leaf
    label: int  # least label in the subtree
    labels: tuple[int, ...]
    mass_left_limit: float | None = None


@dataclass
class GenealogyTree:
    """Tree with death points Q_1..Q_n.

    `sep` holds D_ij off the diagonal and D_i on it. `path` is the
    self-similar path the tree came from, when there is one; it supplies the
    masses.
    """

    sep: np.ndarray
    path: object | None = None
    labels: tuple[int, ...] = ()
    nodes: list[TreeNode] = field(default_factory=list)

    def __post_init__(self):
        self.sep = np.asarray(self.sep, dtype=float)
        n = self.sep.shape[0]
        if not self.labels:
            self.labels = tuple(range(1, n + 1))
        self._index = {lab: k for k, lab in enumerate(self.labels)}
        if not self.nodes:
            self.nodes = self._cluster()

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def death_heights(self) -> np.ndarray:
        return np.diag(self.sep).copy()

    def D(self, i: int) -> float:
        k = self._index[i]
        return float(self.sep[k, k])

    def Dij(self, i: int, j: int) -> float:
        return float(self.sep[self._index[i], self._index[j]])

    # ---------------------------------------------------------------- construction

    def _cluster(self) -> list[TreeNode]:
        nodes = [TreeNode(0, None, 0.0, "root", self.labels[0], self.labels)]
        # stack entries: (member indices, parent node id)
        stack = [(list(range(self.n)), 0)]
        while stack:
            members, parent = stack.pop()
            if len(members) == 1:
                k = members[0]
                nodes.append(TreeNode(len(nodes), parent, float(self.sep[k, k]), "leaf", self.labels[k], (self.labels[k],)))
                continue
            sub = self.sep[np.ix_(members, members)]
            off = sub[~np.eye(len(members), dtype=bool)]
            h = float(off.min())
            node = TreeNode(len(nodes), parent, h, "branch", self.labels[members[0]], tuple(self.labels[k] for k in members))
            nodes.append(node)
            # groups: pairs with separation above h stay together (ultrametric)
            groups: list[list[int]] = []
            for a, k in enumerate(members):
                for g in groups:
                    if self.sep[g[0], k] > h:
                        g.append(k)
                        break
                else:
                    groups.append([k])
            for g in reversed(groups):
                stack.append((g, node.id))
        nodes.sort(key=lambda x: x.id)
        if self.path is not None:
            for node in nodes:
                node.mass_left_limit = self.natural_mass((node.label, node.height))
        return nodes

    @classmethod
    def from_death_times(cls, D: Sequence[float], Dij: np.ndarray, path=None) -> "GenealogyTree":
        sep = np.array(Dij, dtype=float)
        np.fill_diagonal(sep, np.asarray(D, dtype=float))
        return cls(sep, path)

    # ---------------------------------------------------------------- metric

    def distance(self, i: int, j: int) -> float:
        """d(Q_i, Q_j) = D_i + D_j - 2 D_ij."""
        if i == j:
            return 0.0
        return self.D(i) + self.D(j) - 2.0 * self.Dij(i, j)

    def distance_matrix(self) -> np.ndarray:
        d = np.diag(self.sep)
        out = d[:, None] + d[None, :] - 2.0 * self.sep
        np.fill_diagonal(out, 0.0)
        return out

    def embed_l1(self) -> dict[int, list[tuple[int, float]]]:
        """Sparse stick-breaking coordinates: entry j of Q_i is the time j was the least label of i's block."""
        out: dict[int, list[tuple[int, float]]] = {}
        for col, i in enumerate(self.labels):
            running = np.maximum.accumulate(self.sep[: col + 1, col])
            inc = np.diff(running, prepend=0.0)
            out[i] = [(self.labels[j], float(v)) for j, v in enumerate(inc) if v != 0.0]
        return out

    # ---------------------------------------------------------------- masses

    def _check_point(self, point: tuple[int, float]) -> tuple[int, float]:
        i, t = point
        if i not in self._index or t < 0 or t > self.D(i):
            raise PointNotInTree(f"point {point} is not on the tree")
        return int(i), float(t)

    def natural_mass(self, point: tuple[int, float]) -> float:
        """Mass of the block holding label i just before height t."""
        i, t = self._check_point(point)
        if self.path is None:
            raise PointNotInTree("tree carries no path masses")
        return float(self.path.mass_before(i, t))

    def is_below(self, x: tuple[int, float], y: tuple[int, float]) -> bool:
        """Whether x lies on the segment from the root to y."""
        (i, t), (j, s) = x, y
        return t <= s and (i == j or t <= self.Dij(i, j))

    def same_point(self, x, y) -> bool:
        return x[1] == y[1] and self.is_below(x, y)

    def preball_mass(self, x: tuple[int, float], cut: Sequence[tuple[int, float]]) -> float:
        """m(x) minus the masses of the cut points; the cut must be an antichain above x."""
        x = self._check_point(x)
        cut = [self._check_point(y) for y in cut]
        for y in cut:
            if not self.is_below(x, y):
                raise InvalidPreCutset(f"{y} is not above {x}")
        for a in range(len(cut)):
            for b in range(a + 1, len(cut)):
                if self.is_below(cut[a], cut[b]) or self.is_below(cut[b], cut[a]):
                    raise InvalidPreCutset(f"{cut[a]} and {cut[b]} are comparable")
        value = self.natural_mass(x) - sum(self.natural_mass(y) for y in cut)
        if value < -ADD_TOL:
            raise InvalidPreCutset(f"negative pre-ball mass {value}")
        return max(value, 0.0)

    def empirical_mass(self, point: tuple[int, float]) -> float:
        """Fraction of death points in the subtree above a point."""
        i, t = self._check_point(point)
        return sum(1 for j in self.labels if self.is_below((i, t), (j, self.D(j)))) / self.n

    # ---------------------------------------------------------------- export

    def to_json(self) -> dict:
        def num(x):
            return None if x is None or not math.isfinite(x) else x

        return {
            "nodes": [
                {"id": v.id, "parent_id": v.parent, "height": v.height, "kind": v.kind, "mass_left_limit": num(v.mass_left_limit)}
                for v in self.nodes
            ],
            "l1": {str(i): [[j, v] for j, v in coords] for i, coords in self.embed_l1().items()},
        }

    def to_newick(self) -> str:
        children: dict[int, list[TreeNode]] = {}
        for v in self.nodes[1:]:
            children.setdefault(v.parent, []).append(v)

        def render(v: TreeNode) -> str:
            parent_h = self.nodes[v.parent].height if v.parent is not None else 0.0
            length = f":{v.height - parent_h:.9g}"
            if v.kind == "leaf":
                return f"{v.label}{length}"
            inner = ",".join(render(c) for c in children.get(v.id, []))
            return f"({inner}){length}"

        root_kids = children.get(0, [])
        return "(" + ",".join(render(c) for c in root_kids) + ");"


def build_tree(path) -> GenealogyTree:
    """Genealogy tree of a self-similar path in which every label has died."""
    D = path.death_times()
    bad = [int(i) + 1 for i in np.flatnonzero(~np.isfinite(D))]
    if bad:
        raise InfiniteDeathTime(f"labels {bad} are still alive at the horizon", bad)
    return GenealogyTree.from_death_times(D, path.split_times(), path)


def restrict_tree(tree: GenealogyTree, labels: Sequence[int]) -> GenealogyTree:
    idx = [tree._index[i] for i in labels]
    return GenealogyTree(tree.sep[np.ix_(idx, idx)], tree.path, tuple(labels))


def hausdorff_distance(small: GenealogyTree, big: GenealogyTree) -> float:
    """l1-Hausdorff distance between T_A and T_B for nested label sets A within B of one path.

    Every point of T_A lies in T_B, so the distance is the largest height of a
    new death point above its attachment to T_A.
    """
    if not set(small.labels) <= set(big.labels):
        raise NotNested("label sets are not nested")
    for i in small.labels:
        for j in small.labels:
            if small.Dij(i, j) != big.Dij(i, j):
                raise NotNested("trees do not come from the same path")
    out = 0.0
    for j in big.labels:
        if j in small._index:
            continue
        attach = max(big.Dij(k, j) for k in small.labels)
        out = max(out, big.D(j) - attach)
    return out


# ---------------------------------------------------------------- leaf classification


def classify_point(tree: GenealogyTree, path, point: tuple[int, float]) -> str:
    """skeleton, dead_leaf or proper_leaf.

    A death point is a dead leaf when an atom without parts shattered a block
    of positive mass, and a proper leaf when the mass decayed to zero
    (including blocks stopped at the simulation mass floor). A label lost to
    the dust of an atom with parts, or eroded away, dies on the skeleton.
    """
    i, t = tree._check_point(point)
    if t < tree.D(i):
        return "skeleton"
    last = path.blocks[path.chains[i][-1]]
    if last.fate == "floor":
        return "proper_leaf"
    parent = path.blocks[last.parent] if last.parent is not None else None
    if parent is not None and parent.event is not None:
        ev = path.events[parent.event]
        if ev.kind == "atom" and ev.shatter and path.mass_at(parent, t) > 0:
            return "dead_leaf"
    if path.mass_before(i, t) == 0:
        return "proper_leaf"
    return "skeleton"


# ---------------------------------------------------------------- tree to partitions


@dataclass
class TreePartitionPath:
    """Partition-valued path on [m] read off sampled tree points."""

    heights: np.ndarray  # height of each sampled point
    lca: np.ndarray  # pairwise LCA heights

    @property
    def m(self) -> int:
        return len(self.heights)

    def death_times(self) -> np.ndarray:
        return self.heights.copy()

    def partition_at(self, t: float) -> SetPartition:
        """Points share a block while their common ancestor is strictly above t; dead points are singletons."""
        assignment = list(range(self.m))
        for a in range(self.m):
            if self.heights[a] <= t:
                continue
            for b in range(a):
                if self.heights[b] > t and self.lca[a, b] > t:
                    assignment[a] = assignment[b]
                    break
        return SetPartition.from_labels(assignment)


def resample_partition_from_tree(tree: GenealogyTree, m: int, rng: np.random.Generator) -> TreePartitionPath:
    """Draw m death points from the empirical leaf measure (uniform over labels, with replacement)."""
    picks = rng.integers(tree.n, size=m)
    lca = tree.sep[np.ix_(picks, picks)].copy()
    heights = np.diag(tree.sep)[picks].copy()
    np.fill_diagonal(lca, heights)
    return TreePartitionPath(heights, lca)


def four_point_gap(d: np.ndarray, a: int, b: int, c: int, e: int) -> float:
    """Largest of the three pair sums minus the second largest; it is zero for tree metrics."""
    sums = sorted([d[a, b] + d[c, e], d[a, c] + d[b, e], d[a, e] + d[b, c]])
    return sums[2] - sums[1]
