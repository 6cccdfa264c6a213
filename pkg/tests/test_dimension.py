import math

import numpy as np
import pytest

from fragtree.dimension import (
    MIN_POINTS,
    box_counting_estimate,
    cover_counts,
    cover_radii,
    covering_functional,
    covering_functional_tree,
    covering_scan,
    dimension_report,
    leaf_cloud,
    leaf_weights,
    resolution_for_budget,
    stopping_line_blocks,
)
from fragtree.dislocation import binary, uniform_n, with_kill
from fragtree.errors import DegenerateScales
from fragtree.fragmentation import FragmentationParams, simulate_mass_tree, simulate_self_similar


def test_cover_radii_on_line():
    x = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
    d = np.abs(x[:, None] - x[None, :])
    radii = cover_radii(d)
    # farthest-point traversal from 0: picks 4, then 2, then 1 or 3
    assert radii[0] == 4.0
    assert radii[1] == 2.0
    assert radii[-1] == 0.0
    assert list(cover_counts(d, [4.0, 1.5, 0.5])) == [1, 3, 5]


def regular_ultrametric(depth: int, ratio: float, branch: int = 2) -> np.ndarray:
    """Leaves of a complete tree whose level-k subtrees have diameter 2 ratio^k."""
    idx = np.arange(branch**depth)
    level = np.zeros((idx.size, idx.size), dtype=int)
    for k in range(1, depth + 1):
        width = branch ** (depth - k)
        level += (idx[:, None] // width) == (idx[None, :] // width)
    d = 2.0 * ratio ** level.astype(float)
    np.fill_diagonal(d, 0.0)
    return d


@pytest.mark.parametrize("ratio", [0.3, 0.5, 0.7])
def test_regular_ultrametric_dimension(ratio):
    # self-similar with 2 pieces scaled by ratio: dimension log 2 / log(1/ratio)
    est = box_counting_estimate(regular_ultrametric(10, ratio))
    assert est.slope == pytest.approx(math.log(2) / math.log(1 / ratio), abs=1e-9)


def test_uniform_interval(rng):
    x = rng.random(1500)
    est = box_counting_estimate(np.abs(x[:, None] - x[None, :]))
    assert est.slope == pytest.approx(1.0, abs=0.1)
    assert est.r2 > 0.95


def test_degenerate_inputs():
    assert box_counting_estimate(np.zeros((MIN_POINTS, MIN_POINTS))).slope == 0.0
    with pytest.raises(DegenerateScales):
        box_counting_estimate(np.ones((5, 5)))
    d = np.ones((MIN_POINTS, MIN_POINTS))
    np.fill_diagonal(d, 0)
    with pytest.raises(DegenerateScales):
        box_counting_estimate(d)


def test_resolution_for_budget():
    assert resolution_for_budget(1.0, 1000) == pytest.approx(1e-3)
    assert resolution_for_budget(0.5, 100) == pytest.approx(1e-4)


def test_stopping_line_masses(rng):
    tree = simulate_mass_tree(binary(0.3), 0.0, -1.0, 1e-3, rng)
    line = stopping_line_blocks(tree, 0.05)
    # conservative splits: the line blocks carry all the mass
    assert sum(tree.blocks[b].mass for b, _ in line) == pytest.approx(1.0)
    for bid, t in line:
        b = tree.blocks[bid]
        assert b.mass < 0.05
        assert t == b.birth
        assert tree.blocks[b.parent].mass >= 0.05


def test_leaf_weights_and_cloud(rng):
    p_star = math.log(1.5) / math.log(2)
    tree = simulate_mass_tree(uniform_n([0.25, 0.0, 0.75]), 0.0, -1.0, 1e-4, rng)
    w = leaf_weights(tree, p_star)
    for b in tree.blocks:
        if b.children:
            assert w[b.id] == pytest.approx(sum(w[k] for k in b.children))
    cloud = leaf_cloud(tree, 1e-2, p_star, rng)
    if cloud.size:
        d = cloud.dist
        assert np.allclose(d, d.T)
        assert np.all(cloud.heights >= 0)
        i, j, k = 0, cloud.size // 2, cloud.size - 1
        assert d[i, k] <= max(d[i, j], d[j, k]) + d[i, j] + 1e-12


def test_covering_functional_paths(rng):
    path = simulate_self_similar(FragmentationParams(binary(0.5), alpha=-1.0, n=16, mass_floor=1e-3), rng)
    top = covering_functional(path, 1.0, 1.0, -1.0)
    assert top == pytest.approx(path.death_times().max())
    assert covering_functional(path, 0.1, 1.0, -1.0) >= 0.0


def test_covering_functional_tree_scaling(rng):
    # above the dimension the functional shrinks with eps
    tree = simulate_mass_tree(binary(0.5), 0.0, -1.0, 1e-5, rng)
    coarse = covering_functional_tree(tree, 0.1, 2.0)
    fine = covering_functional_tree(tree, 0.001, 2.0)
    assert fine < coarse


def test_covering_scan_bound(rng):
    scan = covering_scan(binary(0.5), 0.0, -1.0, [0.5, 1.5], rng, levels=5, replicates=5)
    assert scan["smallest_bounded_gamma"] == 1.5
    assert scan["dimension_bound"] == 1.5
    assert scan["growth"][0] > scan["growth"][1]


def test_report_binary_small(rng):
    rep = dimension_report(FragmentationParams(binary(0.5), alpha=-1.0), 300, 3, rng)
    assert rep.branch == "leaves"
    assert rep.theory == 1.0
    assert 0.7 < rep.estimate < 1.2
    assert len(rep.fits) == len(rep.points) == 3
    out = rep.to_json()
    assert out["replicates"] == 3


def test_report_countable_branch(rng):
    rep = dimension_report(FragmentationParams(with_kill(binary(0.5), 2.0), alpha=-1.0), 300, 2, rng)
    assert rep.branch == "countable"
    assert rep.estimate == rep.theory == 0.0


def test_segment_grid_slope():
    x = np.linspace(0.0, 1.0, 2**10)
    est = box_counting_estimate(np.abs(x[:, None] - x[None, :]))
    assert est.slope == pytest.approx(1.0, abs=0.1)


@pytest.mark.parametrize("factor", [0.5, 2.0])
def test_slope_is_scale_invariant(rng, factor):
    tree = simulate_mass_tree(binary(0.5), 0.0, -1.0, 1e-4, rng)
    cloud = leaf_cloud(tree, 2e-3, 1.0, rng)
    base = box_counting_estimate(cloud.dist).slope
    assert abs(box_counting_estimate(factor * cloud.dist).slope - base) < 0.02


def test_gamma_zero_counts_blocks(rng):
    tree = simulate_mass_tree(uniform_n([0.25, 0.0, 0.75]), 0.0, -1.0, 1e-4, rng)
    counts = [covering_functional_tree(tree, eps, 0.0) for eps in (0.1, 0.01, 0.001)]
    assert counts[0] == len(stopping_line_blocks(tree, 0.1))
    if not tree.extinct:
        assert counts == sorted(counts)


def test_estimate_responds_to_edge_ratio(rng):
    from fragtree.gw import OffspringDistribution, gw_fragmentation_params

    d = OffspringDistribution((0.25, 0.0, 0.75))
    est = [dimension_report(gw_fragmentation_params(d, a), 600, 8, rng).estimate for a in (2.0, 4.0)]
    assert 1.6 <= est[0] / est[1] <= 2.4


def test_scan_bound_not_below_estimate(rng):
    scan = covering_scan(binary(0.5), 0.0, -1.0, [0.5, 1.0, 1.5, 2.0], rng, levels=5, replicates=5)
    rep = dimension_report(FragmentationParams(binary(0.5), alpha=-1.0), 300, 3, rng)
    assert scan["dimension_bound"] >= rep.estimate - 0.15
