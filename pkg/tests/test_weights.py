import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from treegauss.tree_core import build_binary, build_chain, random_tree
from treegauss.weights import (Array, Asym, Constant, DyadicCeil, Geometric, LogExp, Power, PowerGeometric,
                               Product, RegVar, WeightError, WeightSystem, decaying_sigma_weights, dyadic_class,
                               family_from_dict, halving_chain_weights, random_node_weights, weights_from_dict)


def test_named_family_values():
    k = np.arange(6)
    assert np.allclose(Power(1.0)(k), 1 / (k + 1))
    assert np.allclose(Geometric(0.5)(k), 0.5 ** k)
    assert np.allclose(PowerGeometric(2.0, 3.0)(k), (k + 1) ** 2 * 3.0 ** k)
    assert np.allclose(LogExp(1.5)(k[1:]), np.exp(np.log(k[1:]) ** 1.5 / 2))
    assert LogExp(1.5)(0) == 1.0
    assert np.allclose(Constant(2.5)(k), 2.5)
    assert np.allclose(Array((3.0, 2.0, 1.0))([0, 2]), [3.0, 1.0])


def test_zero_shift_convention():
    p = Power(1.0, shift=0.0, zero=0.0)
    assert p(0) == 0.0 and p(4) == 0.25
    assert halving_chain_weights().alpha_levels(3).tolist() == [0.0, 1.0, 0.5, 1 / 3]


def test_array_past_end():
    with pytest.raises(WeightError):
        Array((1.0, 2.0))(5)


@pytest.mark.parametrize("doc", [
    {"family": "power", "gamma": 0.5},
    {"family": "geometric", "q": 0.25, "c": 2.0},
    {"family": "power_geometric", "b": -0.75, "q": 2.0, "shift": 0.0, "zero": 1.0},
    {"family": "logexp", "beta": 1.5},
    {"family": "regvar", "power": -1.0, "logpow": 0.25, "lexp": -0.5, "beta": 1.5},
    {"family": "array", "values": [1.0, 0.5]},
    {"family": "constant", "c": 0.0},
])
def test_family_json_roundtrip(doc):
    fam = family_from_dict(doc)
    again = family_from_dict(fam.to_dict())
    k = np.arange(2)
    assert np.array_equal(fam(k), again(k))


def test_unknown_family():
    with pytest.raises(WeightError):
        family_from_dict({"family": "nope"})
    with pytest.raises(WeightError):
        family_from_dict({"family": "power", "wrong": 1})


def test_sigma_must_not_increase():
    with pytest.raises(WeightError):
        WeightSystem.homogeneous(Constant(1.0), Power(-1.0))
    t = build_chain(2)
    with pytest.raises(WeightError):
        WeightSystem.per_node(t, [1, 1, 1], [1.0, 0.5, 0.7])
    with pytest.raises(WeightError):
        WeightSystem.per_node(t, [1, 1, 1], [1.0, 0.5, 0.0])
    with pytest.raises(WeightError):
        WeightSystem.per_node(t, [1, -1, 1], [1.0, 0.5, 0.5])
    with pytest.raises(WeightError):
        WeightSystem.per_node(t, [1, 1], [1.0, 0.5])


def test_dyadic_class_examples():
    assert dyadic_class(0.3) == 1
    assert dyadic_class(0.5) == 1
    assert dyadic_class(1.0) == 0
    assert dyadic_class(0.25) == 2
    assert dyadic_class(3.0) == -2
    assert dyadic_class(2.0 ** -40) == 40
    with pytest.raises(WeightError):
        dyadic_class(0.0)


@given(st.floats(1e-300, 1e300))
def test_dyadic_class_bracket(x):
    k = int(dyadic_class(x))
    assert 2.0 ** (-k - 1) < x <= 2.0 ** (-k)


def test_dyadic_ceil_family():
    f = DyadicCeil(Power(1.0))
    assert np.allclose(f([0, 1, 2, 3]), [1.0, 0.5, 0.5, 0.25])


def test_level_weights_on_trees():
    w = decaying_sigma_weights()
    b = build_binary(4)
    assert np.allclose(w.sigma_at(b), 1.0 / (b.depths() + 1))
    assert np.allclose(w.sigma_at(b, [0, 5, 20]), [1.0, 1 / 3, 1 / 5])
    assert np.allclose(w.alpha_at(build_binary(30), [2 ** 30]), [1.0])


def test_product_transfer():
    w = WeightSystem.homogeneous(PowerGeometric(-0.75, 2.0, shift=0.0, zero=1.0), Geometric(0.5))
    pt = w.product_transfer()
    k = np.arange(1, 50)
    assert np.allclose(pt.alpha_levels(49)[1:], k ** -0.75)
    assert np.all(pt.sigma_levels(49) == 1.0)


@given(st.integers(2, 120), st.integers(0, 2 ** 31))
def test_random_node_weights_valid(n, seed):
    rng = np.random.default_rng(seed)
    t = random_tree(n, rng)
    w = random_node_weights(t, rng, dyadic=bool(seed % 2))
    w.validate_tree(t)
    again = weights_from_dict(w.to_dict(), t)
    assert np.array_equal(again.sigma, w.sigma)


# -- growth classes ---------------------------------------------------------

def test_asym_boundedness():
    assert Asym(power=-1).is_bounded()
    assert not Asym(power=0.1).is_bounded()
    assert Asym(log_base=-0.1, power=5).is_bounded()
    assert not Asym(lexp=0.5, beta=1.5, power=-3).is_bounded()
    assert Asym(lexp=0.5, beta=0.5, power=-0.01).is_bounded()
    assert Asym(power=0, logpow=-1).is_bounded()
    assert Asym().is_bounded()


@pytest.mark.parametrize("a, expected", [
    (Asym(power=0.0), Asym(power=1.0)),
    (Asym(power=-1.0), None),  # harmonic sums grow like log n
    (Asym(power=-2.0), Asym()),
    (Asym(log_base=math.log(2)), Asym(log_base=math.log(2))),
    (Asym(lexp=1.0, beta=1.5), Asym(power=1.0, logpow=-0.5, lexp=1.0, beta=1.5)),
])
def test_asym_partial_sum(a, expected):
    got = a.partial_sum()
    if expected is None:
        assert got == Asym(logpow=1.0)
    else:
        assert got == expected


def test_asym_partial_sum_matches_numerics():
    # classes predicted for partial sums should match the observed growth exponent
    n = np.arange(1, 2 ** 20 + 1, dtype=float)
    for power in (-0.5, 0.0, 0.7):
        s = np.cumsum(n ** power)
        slope = math.log(s[-1] / s[2 ** 19 - 1]) / math.log(2)
        assert abs(slope - Asym(power=power).partial_sum().power) < 0.02


def test_asym_product_and_power():
    a = Asym(log_base=math.log(2), power=-0.75) * Asym(log_base=-math.log(2))
    assert abs(a.log_base) < 1e-15 and a.power == -0.75
    assert (Asym(power=-1.0) ** 2).power == -2.0
    assert (Asym(zero=True) * Asym(power=3)).zero


def test_window_ratio():
    assert Asym(power=5).window_ratio_bounded()
    assert not Asym(log_base=0.1).window_ratio_bounded()
    assert not Asym(lexp=0.5, beta=1.5).window_ratio_bounded()
    assert Asym(lexp=0.5, beta=0.9).window_ratio_bounded()


def test_regvar_clamp():
    f = RegVar(power=-1.0, logpow=0.25, lexp=-0.5, beta=1.5, kmin=2.0)
    assert f(0) == f(1) == f(2)
    assert np.all(np.diff(f(np.arange(2, 1000))) < 0)


def test_product_family():
    f = Product(Power(1.0), Geometric(0.5))
    k = np.arange(5)
    assert np.allclose(f(k), 0.5 ** k / (k + 1))
    assert f.asymptotic() == Asym(log_base=math.log(0.5), power=-1.0)
