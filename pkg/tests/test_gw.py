import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from fragtree.errors import DegenerateParameters, InfiniteSupport
from fragtree.fragmentation import simulate_mass_tree
from fragtree.gw import (
    OffspringDistribution,
    boundary_dimension_theory,
    from_pmf,
    gw_fragmentation_params,
    simulate_gw,
    truncation_sweep,
)
from fragtree.malthus import psi, solve_malthus


def test_extinction_examples():
    assert OffspringDistribution((0.25, 0.0, 0.75)).extinction_probability() == pytest.approx(1 / 3, abs=1e-12)
    assert OffspringDistribution((0.5,), p_inf=0.5).extinction_probability() == 0.5
    assert OffspringDistribution((0.5, 0.0, 0.5)).extinction_probability() == 1.0
    assert OffspringDistribution((0.0, 1.0)).extinction_probability() == 0.0
    assert OffspringDistribution((0.0, 0.0, 1.0)).extinction_probability() == 0.0


def test_validation_and_moments():
    with pytest.raises(DegenerateParameters):
        OffspringDistribution((0.5, 0.6))
    with pytest.raises(DegenerateParameters):
        OffspringDistribution((-0.1, 1.1))
    d = OffspringDistribution((0.25, 0.0, 0.75, 0.0))
    assert d.probs == (0.25, 0.0, 0.75)
    assert d.mean() == 1.5
    assert d.max_offspring == 2
    assert OffspringDistribution((0.5,), p_inf=0.5).mean() == math.inf
    assert d.pgf(1.0) == 1.0


def test_poisson_extinction_oracle():
    lam = 2.0
    dist = from_pmf(lambda k: math.exp(-lam) * lam**k / math.factorial(k), lambda k: 1.0 / math.factorial(k + 1) * lam ** (k + 1), 1e-15)
    q = dist.extinction_probability()
    assert q == pytest.approx(brentq(lambda x: math.exp(lam * (x - 1)) - x, 0.0, 0.99), abs=1e-10)


def test_fragmentation_mapping():
    d = OffspringDistribution((0.25, 0.0, 0.75))
    params = gw_fragmentation_params(d, 2.0)
    assert params.alpha == pytest.approx(-1.0)
    assert boundary_dimension_theory(d, 2.0) == pytest.approx(math.log(1.5) / math.log(2))
    with pytest.raises(InfiniteSupport):
        gw_fragmentation_params(OffspringDistribution((0.5,), p_inf=0.5), 2.0)
    with pytest.raises(DegenerateParameters):
        gw_fragmentation_params(d, 0.5)


def test_mapped_measure_exponent():
    d = OffspringDistribution((0.25, 0.0, 0.75))
    nu = gw_fragmentation_params(d, 2.0).nu
    for p in (0.3, 0.7, 1.2):
        assert psi(nu, 0.0, p) == pytest.approx(1 - 1.5 / 2**p, abs=1e-12)
    assert solve_malthus(nu, 0.0).p_star == pytest.approx(math.log(1.5) / math.log(2), abs=1e-9)
    # doubling log a halves the dimension
    assert boundary_dimension_theory(d, 4.0) == pytest.approx(boundary_dimension_theory(d, 2.0) / 2)


def test_kill_fragmentation_block_counts_are_galton_watson(rng):
    # generation-k blocks have mass 2^-k, so reaching the floor below generation 12 means Z_12 > 0
    d = OffspringDistribution((0.25, 0.0, 0.75))
    nu = gw_fragmentation_params(d, 2.0).nu
    reps = 2000
    extinct = np.array([simulate_mass_tree(nu, 0.0, -1.0, 1.5 * 2.0**-13, rng).extinct for _ in range(reps)])
    x = 0.0
    for _ in range(12):
        x = d.pgf(x)
    se = math.sqrt(x * (1 - x) / reps)
    assert abs(extinct.mean() - x) < 4 * se
    assert abs(extinct.mean() - d.extinction_probability()) < 4 * se


def test_truncation_sweep_monotone():
    d = OffspringDistribution((0.2, 0.1, 0.1, 0.1, 0.5))
    rows = truncation_sweep(d, [1, 2, 3, 4], 3.0)
    means = [m for _, m, _ in rows]
    assert means == sorted(means)
    assert means[-1] == pytest.approx(d.mean())
    assert d.truncated(2).probs == pytest.approx((0.2, 0.1, 0.7))


def test_simulated_survival(rng):
    d = OffspringDistribution((0.25, 0.0, 0.75))
    sample = simulate_gw(d, 30, 20_000, rng)
    assert abs(sample.survival_fraction - 2 / 3) < 4 * sample.survival_se
    assert np.all(np.diff(sample.extinct_by_generation) >= 0)


def test_infinite_offspring_escapes(rng):
    sample = simulate_gw(OffspringDistribution((0.5,), p_inf=0.5), 5, 2000, rng)
    assert np.all(sample.escaped | sample.extinct)
    assert sample.extinct.mean() == pytest.approx(0.5, abs=0.05)


@settings(max_examples=40)
@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=6))
def test_extinction_is_smallest_fixed_point(raw):
    total = sum(raw)
    if total == 0:
        return
    d = OffspringDistribution(tuple(x / total for x in raw[:-1]) + (max(0.0, 1 - sum(x / total for x in raw[:-1])),))
    q = d.extinction_probability()
    assert 0.0 <= q <= 1.0
    assert d.pgf(q) == pytest.approx(q, abs=1e-9)
    if d.mean() > 1 and q > 1e-9:
        # no fixed point strictly below q
        grid = np.linspace(0, q, 50)[:-1]
        assert all(d.pgf(x) >= x - 1e-12 for x in grid)
