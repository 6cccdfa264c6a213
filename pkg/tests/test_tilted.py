import math

import numpy as np
import pytest
from scipy import stats

from fragtree.dislocation import binary, custom, uniform_n, zero_measure
from fragtree.errors import ZeroSpineRate
from fragtree.fragmentation import FragmentationParams, simulate_homogeneous
from fragtree.malthus import solve_malthus
from fragtree.tilted import (
    STATISTICS,
    SpineSampler,
    exponential_functional,
    expected_inverse_height,
    frostman_energy,
    inverse_height_moment,
    mu_star_weights,
    pair_integral,
    simulate_spine,
    spine_height,
    tilted_marginal_check,
)

UNIFORM = [0.25, 0.0, 0.75]
P_UNIFORM = math.log(1.5) / math.log(2)


def test_sampler_weights():
    s = SpineSampler(binary(0.3), 1.0)
    assert s.rate == pytest.approx(1.0)
    np.testing.assert_allclose(np.diff(np.concatenate(([0.0], s.cdf))), [0.7, 0.3])
    # kill atoms carry no tilted weight
    s = SpineSampler(uniform_n(UNIFORM), P_UNIFORM)
    assert s.rate == pytest.approx(1.0)
    assert np.all(s.factor == 0.5)


def test_spine_atom_count_is_poisson(rng):
    counts = [len(simulate_spine(uniform_n(UNIFORM), 0.0, P_UNIFORM, 2.0, rng).times) for _ in range(3000)]
    assert np.mean(counts) == pytest.approx(2.0, abs=0.1)
    spine = simulate_spine(uniform_n(UNIFORM), 0.0, P_UNIFORM, 2.0, rng)
    assert spine.mass(2.0) == 0.5 ** len(spine.times)
    kids = spine.offspring()
    assert len(kids) == len(spine.times)


def test_zero_spine_rate():
    with pytest.raises(ZeroSpineRate):
        simulate_spine(custom([(1.0, [])]), 0.0, 0.5, 1.0, np.random.default_rng(0))


def test_pure_erosion_height_closed_form(rng):
    heights = exponential_functional(zero_measure(), 2.0, 1.0, -1.0, 10, rng)
    np.testing.assert_allclose(heights, 0.5)
    spine = simulate_spine(custom([(1.0, [])]), 2.0, 0.5, 1.0, rng)
    assert spine_height(spine, -1.0, custom([(1.0, [])]), 0.5) == 0.5


def test_expected_inverse_height_oracles():
    # sum_i s_i^p* log(1/s_i) for two halves, and for the uniform offspring law
    assert expected_inverse_height(binary(0.5), 0.0, 1.0) == pytest.approx(math.log(2), abs=1e-14)
    assert expected_inverse_height(uniform_n(UNIFORM), 0.0, P_UNIFORM) == pytest.approx(math.log(2), abs=1e-12)
    assert expected_inverse_height(binary(0.5), 0.0, 1.0, alpha=-2.0) == pytest.approx(2 * math.log(2))


def test_inverse_height_mc_uniform(rng):
    inv = 1.0 / exponential_functional(uniform_n(UNIFORM), 0.0, P_UNIFORM, -1.0, 20_000, rng)
    se = inv.std(ddof=1) / math.sqrt(inv.size)
    assert abs(inv.mean() - math.log(2)) < 4 * se


def test_spine_height_matches_vectorized(rng):
    nu = binary(0.3)
    direct = [spine_height(simulate_spine(nu, 0.2, 1.0, 1.0, rng), -1.0, nu, 1.0) for _ in range(1500)]
    lockstep = exponential_functional(nu, 0.2, 1.0, -1.0, 1500, rng)
    assert stats.ks_2samp(direct, lockstep).pvalue > 0.01


def test_height_moment_recursion(rng):
    nu = binary(0.5)
    heights = exponential_functional(nu, 0.0, 1.0, -1.0, 40_000, rng)
    direct = heights**-2.0
    se = direct.std(ddof=1) / math.sqrt(direct.size)
    recursed = inverse_height_moment(nu, 0.0, 1.0, -1.0, 2.0, rng, 40_000)
    assert abs(direct.mean() - recursed) < 4 * se + 0.02


def test_energy_factors_exact():
    nu = binary(0.5)
    f = frostman_energy(nu, 0.0, 1.0, -1.0, 0.5, height_moment=1.0)
    # 1/(1 - 2^(-1/2)) and 2^(1/2) - 2^(-1/2)
    assert f.spine_integral == pytest.approx(1 / (1 - 2**-0.5), abs=1e-12)
    assert f.pair_integral == pytest.approx(2**0.5 - 2**-0.5, abs=1e-12)
    assert pair_integral(nu, 1.0, 0.5) == f.pair_integral
    # gamma at the dimension makes the spine factor blow up
    assert frostman_energy(nu, 0.0, 1.0, -1.0, 1.0, height_moment=1.0).energy == math.inf


def test_mu_star_weights_additive(rng):
    nu = uniform_n(UNIFORM)
    path = simulate_homogeneous(FragmentationParams(nu, n=50, horizon=2.0), rng)
    approx = mu_star_weights(path, P_UNIFORM, 2.0)
    for b in path.blocks:
        if b.children and b.id in approx.weights and b.end <= 2.0:
            kids = sum(approx.weights[k] for k in b.children if k in approx.weights)
            assert approx.weight(b.id) == pytest.approx(kids)
    live = sum(m**P_UNIFORM for _, m in path.masses_at(2.0) if m > 0)
    assert approx.total == pytest.approx(live)


def test_tilted_check_small(rng):
    out = tilted_marginal_check(binary(0.3), 0.0, 1.0, 0.5, ["one", "tagged_mass"], 400, rng)
    assert [c.statistic for c in out] == ["one", "tagged_mass"]
    assert out[0].z_score == 0.0
    assert abs(out[1].z_score) < 4
    assert set(STATISTICS) == {"one", "tagged_mass", "tagged_mass_above_quarter", "live_blocks", "tagged_block_size"}


def test_mu_star_ignores_dead_leaves(rng):
    dead = 0
    for _ in range(10):
        path = simulate_homogeneous(FragmentationParams(uniform_n(UNIFORM), n=40, horizon=2.0), rng)
        approx = mu_star_weights(path, P_UNIFORM, 2.0)
        for b in path.blocks:
            # dust records start at the label's death
            if b.fate == "dust" and b.birth <= 2.0:
                assert approx.weight(b.id) == 0.0
                dead += 1
    assert dead > 0
