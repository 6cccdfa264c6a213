import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fragtree.dislocation import (
    BUILTINS,
    VisibleSplitSampler,
    binary,
    check_validity,
    custom,
    discarded_visible_rate_bound,
    geometric_uniform,
    kill_only,
    measure_from_json,
    nu1,
    nu2,
    split_rate,
    truncate,
    uniform_n,
    with_kill,
    zero_measure,
)
from fragtree.errors import DivergentIntegral, ForbiddenAtom, NoTailBound, ZeroRate


def test_forbidden_identity_atom():
    with pytest.raises(ForbiddenAtom):
        check_validity(custom([(1.0, [1.0])]))


def test_kinds_and_kill_rate():
    assert binary().kind == "finite"
    assert nu1().kind == "truncatable-family"
    nu = with_kill(binary(), 0.3)
    assert nu.kill_rate == 0.3
    assert nu.params["kill"] == 0.3
    assert kill_only(2.0).kill_rate == 2.0
    assert zero_measure().is_zero


def test_binary_split_rates_direct():
    # a block of b labels splits unless all labels fall in the same half
    for b in range(1, 6):
        assert split_rate(binary(0.5), b) == pytest.approx(1 - 2 * 0.5**b, abs=1e-15)


def test_nu1_validity_oracle():
    # integral of 1 - s_1 = sum_{n >= 2} n^-2 = pi^2/6 - 1
    assert check_validity(nu1(), 1e-6) == pytest.approx(math.pi**2 / 6 - 1, abs=1e-6)


def test_nu2_validity_oracle():
    # integral of 1 - s_1 = sum_{n >= 2} n^-2 (1 - 1/n) = zeta(2) - zeta(3)
    expected = math.pi**2 / 6 - float(mpmath.zeta(3))
    assert check_validity(nu2(), 1e-6) == pytest.approx(expected, abs=1e-6)


def test_geometric_uniform_validity_oracle():
    # 1 - s_1 = 1 - 1/i on atom i; kill atom contributes p0
    expected = 0.25 + 0.75 * float(mpmath.nsum(lambda i: 0.5 * 0.5 ** (i - 2) * (1 - 1 / i), [2, mpmath.inf]))
    assert check_validity(geometric_uniform(), 1e-12) == pytest.approx(expected, abs=1e-11)


def test_nu1_power_sums_conservative():
    fam = nu1().components[0]
    np.testing.assert_allclose(fam.power_sum(0, 50, 1.0), 1.0, atol=1e-12)
    assert np.all(np.isinf(fam.power_sum(0, 5, 0.9)))
    s = fam.atom(3)
    assert s.largest == pytest.approx(0.8)


def test_nu2_largest_part_and_copies():
    fam = nu2().components[0]
    for k in range(5):
        s = fam.atom(k)
        assert s.largest == pytest.approx(1 / (k + 2))
    assert np.all(np.isinf(fam.power_sum(0, 3, 0.5)))


def test_truncate_discards_little():
    nu = geometric_uniform()
    t = truncate(nu, tol=1e-8)
    assert t.is_finite
    bound = discarded_visible_rate_bound(t, 3)
    assert bound <= 3e-8
    assert split_rate(t, 3) == pytest.approx(split_rate(nu, 3, 1e-10), abs=bound + 1e-9)
    with pytest.raises(ValueError):
        truncate(nu)


@pytest.mark.parametrize("make, tol", [(geometric_uniform, 1e-8), (nu2, 1e-4)])
def test_truncation_within_certified_bound(make, tol):
    nu = make()
    t = truncate(nu, tol=tol)
    for b in range(1, 6):
        exact = split_rate(nu, b, 1e-10 if make is geometric_uniform else 1e-6)
        slack = 1e-9 if make is geometric_uniform else 2e-6
        assert -slack <= exact - split_rate(t, b) <= discarded_visible_rate_bound(t, b) + slack


def test_table_requires_finite():
    with pytest.raises(NoTailBound):
        nu1().table()


def test_visible_sampler_frequencies(rng):
    nu = custom([(1.0, [0.5, 0.5]), (3.0, [0.9, 0.1])])
    sampler = VisibleSplitSampler(nu, 2)
    visible = np.array([1.0 * 0.5, 3.0 * (1 - 0.81 - 0.01)])
    assert sampler.rate == pytest.approx(visible.sum())
    idx = sampler.indices(rng, 100_000)
    assert np.mean(idx == 0) == pytest.approx(visible[0] / visible.sum(), abs=0.01)
    with pytest.raises(ZeroRate):
        VisibleSplitSampler(zero_measure(), 2)


def test_json_round_trip():
    for name in BUILTINS:
        nu = measure_from_json({"kind": name})
        again = measure_from_json(nu.to_json())
        assert again.to_json() == nu.to_json()
    nu = measure_from_json({"kind": "custom", "atoms": [{"w": 2, "s": [0.6, 0.4]}], "params": {"kill": 0.5}})
    assert nu.kill_rate == 0.5
    assert measure_from_json(nu.to_json()).kill_rate == 0.5
    with pytest.raises(ValueError):
        measure_from_json({"kind": "nope"})


def test_divergent_validity_reported():
    class Heavy:
        size = None

        def weights(self, lo, hi):
            return np.ones(hi - lo)

        def largest(self, lo, hi):
            return np.full(hi - lo, 0.5)

        def tail_one_minus_largest(self, K):
            return math.inf

    from fragtree.dislocation import DislocationMeasure

    with pytest.raises(DivergentIntegral):
        check_validity(DislocationMeasure((Heavy(),)))


@given(st.lists(st.floats(0.01, 0.99), min_size=1, max_size=4), st.integers(1, 6))
def test_split_rate_increases_with_block_size(raw, b):
    total = sum(raw)
    parts = [x / total * 0.99 for x in raw] if total > 0.99 else raw
    nu = custom([(1.0, parts)])
    assert split_rate(nu, b + 1) >= split_rate(nu, b) - 1e-12
    # a visible split needs label 1 or another label outside the largest part
    assert split_rate(nu, b) <= b * (1 - max(parts)) + 1e-12


@given(st.lists(st.floats(0.0, 0.5), min_size=3, max_size=3))
def test_uniform_n_atoms(probs):
    probs = [0.5 - sum(probs) / 3] + [p / 3 for p in probs] if sum(probs) > 0 else [1.0, 0.0, 0.0]
    nu = uniform_n(probs)
    N = len(probs) - 1
    for w, s in nu.atoms:
        assert all(x == 1 / N for x in s.parts)
