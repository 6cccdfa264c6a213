"""Box-counting estimates of the leaf dimension and the stopping-line covering functional.

Leaf samples come from the block-level mass tree: every block on the
eps-stopping line whose subtree is still alive at the deeper line eps/16
contributes one point, a leaf of its subtree drawn from the leaf-measure
weights. Points of the same tree are compared with the tree metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dislocation import DislocationMeasure
from .errors import DegenerateScales, ExtinctionOnly, NoMalthusianExponent
from .fragmentation import FragmentationParams, MassTree, simulate_mass_tree, stopping_line_first_below
from .malthus import solve_malthus

DEEP_FACTOR = 2.0**-4
MIN_POINTS = 100
MIN_SCALES = 4
COUNT_LOW = 5
COUNT_HIGH_DIVISOR = 4


# ---------------------------------------------------------------- box counting


def cover_radii(dist: np.ndarray) -> np.ndarray:
    """Farthest-point traversal: entry k is the covering radius of the first k+1 centers."""
    n = dist.shape[0]
    nearest = dist[0].copy()
    radii = np.empty(n)
    for k in range(n):
        j = int(np.argmax(nearest))
        radii[k] = nearest[j]
        if radii[k] == 0:
            return radii[: k + 1]
        nearest = np.minimum(nearest, dist[j])
    return radii


def cover_counts(dist: np.ndarray, scales: np.ndarray) -> np.ndarray:
    """Greedy cover size at each scale: centers needed until every point is within the scale."""
    radii = cover_radii(dist)
    # radii is nonincreasing; count centers until the radius drops to the scale
    return np.array([1 + int(np.sum(radii > r)) for r in scales])


def default_scales(dist: np.ndarray, count: int = 12) -> np.ndarray:
    """Cover radii at geometrically spaced center counts from COUNT_LOW to n/COUNT_HIGH_DIVISOR.

    Counts near n saturate at the sample size and counts near 1 only see the
    outline of the cloud, so both ends are left out of the fit.
    """
    n = dist.shape[0]
    hi = n / COUNT_HIGH_DIVISOR
    if hi <= COUNT_LOW:
        return np.zeros(0)
    radii = cover_radii(dist)
    ks = np.unique(np.geomspace(COUNT_LOW, hi, count).astype(int))
    ks = ks[ks <= radii.size]
    scales = radii[ks - 1]
    return np.unique(scales[scales > 0])[::-1]


@dataclass
class BoxCount:
    slope: float
    r2: float
    scales: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)


def box_counting_estimate(dist: np.ndarray, scales: np.ndarray | None = None) -> BoxCount:
    """Least-squares slope of log N(r) against log(1/r) for a point cloud given by its distance matrix."""
    dist = np.asarray(dist, dtype=float)
    if dist.shape[0] < MIN_POINTS:
        raise DegenerateScales(f"need at least {MIN_POINTS} points, got {dist.shape[0]}")
    if dist.max() == 0:
        return BoxCount(0.0, 1.0, np.zeros(0), np.zeros(0))
    if scales is None:
        scales = default_scales(dist)
    scales = np.asarray(scales, dtype=float)
    scales = scales[(scales > 0) & (scales < dist.max())]
    if scales.size < MIN_SCALES:
        raise DegenerateScales(f"need at least {MIN_SCALES} usable scales, got {scales.size}")
    counts = cover_counts(dist, scales)
    x = np.log(1.0 / scales)
    y = np.log(counts)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 1.0
    return BoxCount(float(slope), r2, scales, counts)


# ---------------------------------------------------------------- leaf clouds


@dataclass
class LeafCloud:
    heights: np.ndarray
    dist: np.ndarray = field(repr=False)
    blocks: list[int]

    @property
    def size(self) -> int:
        return len(self.heights)


def _children_map(tree: MassTree) -> list[list[int]]:
    return [b.children for b in tree.blocks]


def _subtree_survives(tree: MassTree) -> np.ndarray:
    """Whether each block has a descendant (or itself) that reached the floor."""
    alive = np.zeros(len(tree.blocks), dtype=bool)
    for b in reversed(tree.blocks):
        if b.fate in ("floor", "cap"):
            alive[b.id] = True
        elif b.children:
            alive[b.id] = any(alive[k] for k in b.children)
    return alive


def stopping_line_blocks(tree: MassTree, eps: float) -> list[tuple[int, float]]:
    """(block id, crossing height) for the first block of every lineage whose mass drops below eps."""
    out = []
    stack = [0]
    while stack:
        bid = stack.pop()
        b = tree.blocks[bid]
        t = tree.crossing_time(b, eps)
        if t is not None:
            out.append((bid, t))
        else:
            stack.extend(b.children)
    return out


def _pairwise_tree_distance(tree: MassTree, members: list[int], heights: np.ndarray) -> np.ndarray:
    """d = h_i + h_j - 2 h(common ancestor split) for points attached to the given blocks."""
    n = len(members)
    pos = {bid: k for k, bid in enumerate(members)}
    lca = np.zeros((n, n))
    # collect, bottom-up, which points sit below each block
    below: dict[int, list[int]] = {}
    for b in reversed(tree.blocks):
        idx = [pos[b.id]] if b.id in pos else []
        groups = [below.pop(k) for k in b.children if k in below]
        for a in range(len(groups)):
            for c in range(a + 1, len(groups)):
                ga, gc = np.asarray(groups[a]), np.asarray(groups[c])
                lca[np.ix_(ga, gc)] = b.end
                lca[np.ix_(gc, ga)] = b.end
        for g in groups:
            idx.extend(g)
        if idx:
            below[b.id] = idx
    d = heights[:, None] + heights[None, :] - 2.0 * lca
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def leaf_weights(tree: MassTree, p_star: float) -> np.ndarray:
    """Sum of mass^p* over the floor blocks below each block: leaf-measure weights at the floor."""
    w = np.zeros(len(tree.blocks))
    for b in reversed(tree.blocks):
        if b.fate in ("floor", "cap"):
            w[b.id] = b.mass**p_star
        elif b.children:
            w[b.id] = sum(w[k] for k in b.children)
    return w


def leaf_cloud(tree: MassTree, eps: float, p_star: float, rng: np.random.Generator) -> LeafCloud:
    """One leaf per eps-line block with a surviving subtree.

    The leaf is found by descending from the block to the floor, choosing
    children in proportion to their leaf-measure weights; its height is the
    floor crossing.
    """
    w = leaf_weights(tree, p_star)
    line = [(bid, t) for bid, t in stopping_line_blocks(tree, eps) if w[bid] > 0]
    members = [bid for bid, _ in line]
    heights = np.empty(len(line))
    for k, (bid, _) in enumerate(line):
        b = tree.blocks[bid]
        while b.children:
            kids = [c for c in b.children if w[c] > 0]
            probs = np.array([w[c] for c in kids])
            b = tree.blocks[kids[int(rng.choice(len(kids), p=probs / probs.sum()))]]
        heights[k] = b.end
    dist = _pairwise_tree_distance(tree, members, heights) if members else np.zeros((0, 0))
    return LeafCloud(heights, dist, members)


def resolution_for_budget(p_star: float, budget: int) -> float:
    """eps with about `budget` blocks on the eps-line, since their count grows like eps^-p*."""
    return float(budget) ** (-1.0 / p_star)


# ---------------------------------------------------------------- covering functional


def covering_functional(path, eps: float, gamma: float, alpha: float) -> float:
    """Sum over the blocks of the eps-line of (remaining extinction time)^(gamma/|alpha|).

    `path` is a self-similar label path in which every label has died.
    """
    if alpha >= 0:
        raise ValueError("alpha must be negative")
    if eps >= 1:
        D = path.death_times()
        return float(D.max()) ** (gamma / -alpha)
    line = stopping_line_first_below(path, eps)
    D = path.death_times()
    groups: dict[int, list[int]] = {}
    for i, bid in enumerate(line.blocks):
        groups.setdefault(bid, []).append(i)
    total = 0.0
    for members in groups.values():
        start = line.times[members[0]]
        tau = max(float(D[members].max()) - start, 0.0)
        total += tau ** (gamma / -alpha)
    return total


def covering_functional_tree(tree: MassTree, eps: float, gamma: float) -> float:
    """Same functional on a mass tree; subtrees end where they reach the floor."""
    a = -tree.alpha
    if eps >= 1:
        return max(b.end for b in tree.blocks if math.isfinite(b.end)) ** (gamma / a)
    finish = np.array([b.end if math.isfinite(b.end) else b.birth for b in tree.blocks])
    for b in reversed(tree.blocks):
        for k in b.children:
            finish[b.id] = max(finish[b.id], finish[k])
    total = 0.0
    for bid, t in stopping_line_blocks(tree, eps):
        total += max(finish[bid] - t, 0.0) ** (gamma / a)
    return total


def covering_scan(
    nu: DislocationMeasure,
    c: float,
    alpha: float,
    gammas,
    rng: np.random.Generator,
    levels: int = 6,
    replicates: int = 20,
    growth_tol: float = 0.1,
) -> dict:
    """Mean covering functional along eps = 2^-k and the smallest gamma whose means stop growing.

    A gamma counts as bounded when the fitted growth rate of the mean in
    log(1/eps) is at most `growth_tol`. The dimension bound is gamma/|alpha|.
    """
    epss = 2.0 ** -np.arange(1, levels + 1)
    gammas = list(gammas)
    sums = np.zeros((len(gammas), levels))
    for _ in range(replicates):
        tree = simulate_mass_tree(nu, c, alpha, epss[-1] * DEEP_FACTOR, rng)
        for g, gamma in enumerate(gammas):
            for k, eps in enumerate(epss):
                sums[g, k] += covering_functional_tree(tree, eps, gamma)
    means = sums / replicates
    x = np.log(1.0 / epss)
    growth = []
    for g in range(len(gammas)):
        y = np.log(np.maximum(means[g], 1e-300))
        growth.append(float(np.polyfit(x, y, 1)[0]))
    bounded = [gammas[g] for g in range(len(gammas)) if growth[g] <= growth_tol]
    smallest = min(bounded) if bounded else math.inf
    return {
        "gammas": gammas,
        "eps": epss.tolist(),
        "means": means.tolist(),
        "growth": growth,
        "smallest_bounded_gamma": smallest,
        "dimension_bound": smallest / -alpha,
    }


# ---------------------------------------------------------------- report


@dataclass
class DimensionReport:
    estimate: float
    ci_low: float
    ci_high: float
    theory: float
    branch: str  # leaves or countable
    slopes: list[float]
    survived: int
    replicates: int
    scan: dict | None = None
    fits: list[BoxCount] = field(default_factory=list, repr=False)
    points: list[int] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "estimate": self.estimate,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "theory": self.theory,
            "branch": self.branch,
            "slopes": self.slopes,
            "survived": self.survived,
            "replicates": self.replicates,
            "scan": self.scan,
            "points": self.points,
        }


def dimension_report(
    params: FragmentationParams,
    leaf_budget: int,
    replicates: int,
    rng: np.random.Generator,
    gammas=None,
    max_blocks: int = 400_000,
) -> DimensionReport:
    """Box-counting estimate over replicates, the theoretical value p*/|alpha|, and an optional covering scan."""
    alpha = params.alpha
    if alpha >= 0:
        raise ValueError("dimension needs alpha < 0")
    try:
        p_star = solve_malthus(params.nu, params.c).p_star
    except NoMalthusianExponent:
        p_star = None
    if p_star is None:
        return DimensionReport(0.0, 0.0, 0.0, 0.0, "countable", [], 0, replicates)
    eps = resolution_for_budget(p_star, leaf_budget)
    fits = []
    points = []
    survived = 0
    for _ in range(replicates):
        tree = simulate_mass_tree(params.nu, params.c, alpha, eps * DEEP_FACTOR, rng, max_blocks)
        cloud = leaf_cloud(tree, eps, p_star, rng)
        if cloud.size == 0:
            continue
        survived += 1
        if cloud.size < MIN_POINTS:
            continue
        try:
            fits.append(box_counting_estimate(cloud.dist))
            points.append(cloud.size)
        except DegenerateScales:
            continue
    if survived == 0:
        raise ExtinctionOnly("every replicate died out: the leaf set is countable")
    if not fits:
        raise DegenerateScales("no replicate produced enough leaves; raise the leaf budget")
    slopes = [f.slope for f in fits]
    arr = np.asarray(slopes)
    mean = float(arr.mean())
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else math.nan
    scan = None
    if gammas is not None:
        scan = covering_scan(params.nu, params.c, alpha, gammas, rng)
    return DimensionReport(mean, mean - 1.96 * se, mean + 1.96 * se, p_star / -alpha, "leaves", slopes, survived, replicates, scan, fits, points)
