import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fragtree.dislocation import binary, uniform_n
from fragtree.errors import InfiniteDeathTime, InvalidPreCutset, NotNested, PointNotInTree
from fragtree.fragmentation import FragmentationParams, simulate_homogeneous, simulate_self_similar
from fragtree.tree import (
    GenealogyTree,
    TreePartitionPath,
    build_tree,
    classify_point,
    four_point_gap,
    hausdorff_distance,
    resample_partition_from_tree,
    restrict_tree,
)

UNIFORM = [0.25, 0.0, 0.75]


@pytest.fixture
def hand_tree():
    # label 1 leaves the others at 0.5; labels 2 and 3 separate at 1.5
    Dij = np.array([[0, 0.5, 0.5], [0.5, 0, 1.5], [0.5, 1.5, 0]])
    return GenealogyTree.from_death_times([3.0, 2.0, 2.5], Dij)


def test_hand_distances(hand_tree):
    assert hand_tree.distance(1, 2) == 4.0
    assert hand_tree.distance(1, 3) == 4.5
    assert hand_tree.distance(2, 3) == 1.5
    assert hand_tree.distance(2, 2) == 0.0


def test_hand_l1_coordinates(hand_tree):
    q = hand_tree.embed_l1()
    assert q[1] == [(1, 3.0)]
    assert q[2] == [(1, 0.5), (2, 1.5)]
    assert q[3] == [(1, 0.5), (2, 1.0), (3, 1.0)]


def test_hand_structure(hand_tree):
    kinds = [v.kind for v in hand_tree.nodes]
    assert kinds.count("leaf") == 3
    branches = sorted(v.height for v in hand_tree.nodes if v.kind == "branch")
    assert branches == [0.5, 1.5]
    newick = hand_tree.to_newick()
    assert newick.count("(") == newick.count(")")
    assert all(f"{i}:" in newick for i in (1, 2, 3))
    assert newick.endswith(";")


def test_hand_hausdorff(hand_tree):
    small = restrict_tree(hand_tree, [1, 2])
    assert hausdorff_distance(small, hand_tree) == 1.0
    assert hausdorff_distance(hand_tree, hand_tree) == 0.0
    with pytest.raises(NotNested):
        hausdorff_distance(hand_tree, small)


def test_order_relation(hand_tree):
    assert hand_tree.is_below((2, 1.0), (3, 2.5))
    assert not hand_tree.is_below((2, 1.6), (3, 2.5))
    assert hand_tree.same_point((2, 0.4), (1, 0.4))
    with pytest.raises(PointNotInTree):
        hand_tree.preball_mass((2, 2.5), [])
    with pytest.raises(PointNotInTree):
        hand_tree.natural_mass((2, 1.0))


def test_tree_partition_path(hand_tree):
    tp = TreePartitionPath(hand_tree.death_heights, hand_tree.sep)
    assert len(tp.partition_at(0.2).blocks) == 1
    assert len(tp.partition_at(1.0).blocks) == 2
    assert len(tp.partition_at(1.8).blocks) == 3


def test_build_requires_dead_labels(rng):
    path = simulate_homogeneous(FragmentationParams(binary(), n=3, horizon=1.0), rng)
    with pytest.raises(InfiniteDeathTime) as info:
        build_tree(path)
    assert list(info.value.labels) == [1, 2, 3]


def test_tree_partitions_match_path(rng):
    for _ in range(10):
        path = simulate_self_similar(FragmentationParams(uniform_n(UNIFORM), alpha=-1.0, n=6), rng)
        tree = build_tree(path)
        tp = TreePartitionPath(tree.death_heights, tree.sep)
        for t in np.linspace(0.0, tree.death_heights.max(), 9)[1:-1]:
            ours = tp.partition_at(t)
            theirs = path.partition_at(t)
            assert sorted(len(b) for b in ours.blocks) == sorted(len(b) for b in theirs.blocks)


def test_preball_errors(rng):
    path = simulate_self_similar(FragmentationParams(binary(0.5), alpha=-1.0, n=4, mass_floor=1e-3), rng)
    tree = build_tree(path)
    x = (1, 0.0)
    assert tree.preball_mass(x, []) == pytest.approx(1.0)
    y = (1, tree.D(1) / 2)
    with pytest.raises(InvalidPreCutset):
        tree.preball_mass(y, [x])
    with pytest.raises(InvalidPreCutset):
        tree.preball_mass(x, [y, (1, tree.D(1) / 3)])


def test_classify_points(rng):
    path = simulate_self_similar(FragmentationParams(binary(0.5), alpha=-1.0, n=4, mass_floor=1e-3), rng)
    tree = build_tree(path)
    for i in tree.labels:
        assert classify_point(tree, path, (i, tree.D(i))) == "proper_leaf"
        assert classify_point(tree, path, (i, tree.D(i) / 2)) == "skeleton"
    shatter = simulate_self_similar(FragmentationParams(uniform_n([1.0, 0.0, 0.0]), alpha=-1.0, n=3), rng)
    tree = build_tree(shatter)
    assert {classify_point(tree, shatter, (i, tree.D(i))) for i in tree.labels} == {"dead_leaf"}


def test_resample_uses_tree_labels(rng):
    path = simulate_self_similar(FragmentationParams(binary(0.5), alpha=-1.0, n=5, mass_floor=1e-3), rng)
    tree = build_tree(path)
    sample = resample_partition_from_tree(tree, 50, rng)
    assert set(sample.death_times()).issubset(set(tree.death_heights))


def test_json_export(rng):
    path = simulate_self_similar(FragmentationParams(binary(0.5), alpha=-1.0, n=4, mass_floor=1e-3), rng)
    out = build_tree(path).to_json()
    assert out["nodes"][0]["kind"] == "root"
    assert out["nodes"][0]["mass_left_limit"] == pytest.approx(1.0)
    assert set(out["l1"]) == {"1", "2", "3", "4"}


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(4, 8))
def test_random_tree_metric(seed, n):
    rng = np.random.default_rng(seed)
    path = simulate_self_similar(FragmentationParams(binary(0.3), alpha=-0.5, n=n, mass_floor=1e-2), rng)
    tree = build_tree(path)
    d = tree.distance_matrix()
    assert np.allclose(d, d.T)
    assert np.all(d >= -1e-12)
    idx = rng.choice(n, 4, replace=False)
    assert four_point_gap(d, *idx) <= 1e-12
    # dropping labels can only shrink the tree
    small = restrict_tree(tree, tree.labels[: n - 1])
    assert hausdorff_distance(small, tree) <= max(tree.death_heights) + 1e-12
    assert math.isfinite(hausdorff_distance(small, tree))


def test_empirical_mass_approaches_natural_mass(rng):
    # the subtree fraction over m labels has standard error of order m^-1/2
    params = FragmentationParams(binary(0.5), alpha=-1.0, n=128, mass_floor=1e-5)
    errors = {8: [], 128: []}
    for _ in range(40):
        tree = build_tree(simulate_self_similar(params, rng))
        x = (1, 0.3 * tree.D(1))
        target = tree.natural_mass(x)
        for m in errors:
            errors[m].append(abs(restrict_tree(tree, range(1, m + 1)).empirical_mass(x) - target))
    assert np.mean(errors[128]) < 0.5 * np.mean(errors[8])
