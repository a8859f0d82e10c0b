import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from treegauss.entropy import (CoverResult, EntropyCurve, covering_curve, disjoint_interval_packing,
                               dudley_integral, entropy_equivalence_report, exact_cover_small,
                               exact_order_cover_small, fit_exponent, geometric_grid, greedy_ball_cover,
                               greedy_order_net, packing_lower_bound, sudakov_sup)
from treegauss.tree_core import TreeError, build_binary, build_chain, random_tree
from treegauss.tree_metrics import distance_matrix, tree_tables
from treegauss.weights import Constant, Power, WeightSystem, power_chain_weights, random_node_weights

UNIT = WeightSystem.homogeneous(Constant(1.0), Constant(1.0))
CHAIN10 = build_chain(10)


# -- independent brute-force oracles -----------------------------------------

def brute_cover(D, eps):
    n = D.shape[0]
    for k in range(1, n + 1):
        for centers in itertools.combinations(range(n), k):
            if all(any(D[c, v] < eps for c in centers) for v in range(n)):
                return k


def brute_order_cover(tree, D, eps):
    n = D.shape[0]
    for k in range(1, n + 1):
        for net in itertools.combinations(range(n), k):
            if all(any(tree.precedes(c, v) and D[c, v] < eps for c in net) for v in range(n)):
                return k


def brute_interval_packing(tree, D, eps):
    """Largest family of pairwise disjoint (t, s] with d(t, s) >= eps."""
    cands = []
    for s in range(tree.n_nodes):
        for t in tree.ancestors(s):
            if t != s and D[t, s] >= eps:
                cands.append(frozenset(tree.order_interval(t, s, closed=False).tolist()))
    # only inclusion-minimal intervals matter
    cands = [c for c in set(cands) if not any(o < c for o in cands)]
    best = 0

    def grow(i, used, count):
        nonlocal best
        best = max(best, count)
        for j in range(i, len(cands)):
            if not (cands[j] & used):
                grow(j + 1, used | cands[j], count + 1)

    grow(0, frozenset(), 0)
    return best


@st.composite
def small_weighted(draw, max_nodes=10):
    n = draw(st.integers(1, max_nodes))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    t = random_tree(n, rng)
    w = random_node_weights(t, rng)
    D = distance_matrix(t, w, "d")
    pos = D[D > 0]
    scale = float(np.median(pos)) if pos.size else 1.0
    eps = scale * draw(st.floats(0.05, 2.5))
    return t, w, D, eps


# -- worked examples ------------------------------------------------------------

def test_order_net_unit_chain():
    assert greedy_order_net(CHAIN10, UNIT, 1.5) == [0, 3, 6, 9]
    assert greedy_order_net(CHAIN10, UNIT, 1.01) == [0, 2, 4, 6, 8, 10]
    assert greedy_order_net(CHAIN10, UNIT, 10.0) == [0]
    explicit = CHAIN10.materialize()
    assert greedy_order_net(explicit, UNIT, 1.5) == [0, 3, 6, 9]


def test_ball_cover_unit_chain():
    assert len(greedy_ball_cover(CHAIN10, UNIT, 1.5)) <= 3
    assert exact_cover_small(CHAIN10, UNIT, 1.5) == 3
    assert exact_cover_small(CHAIN10, UNIT, 1.0) == 11
    assert len(greedy_ball_cover(CHAIN10, UNIT, 100.0)) == 1
    assert exact_cover_small(build_chain(0), UNIT, 0.5) == 1
    two = build_chain(1)
    assert len(greedy_ball_cover(two, UNIT, 1.0)) == 2
    assert len(greedy_ball_cover(two.materialize(), UNIT, 1.0)) == 2


def test_packing_examples():
    assert len(packing_lower_bound(CHAIN10, UNIT, 3.0)) <= exact_cover_small(CHAIN10, UNIT, 1.5)
    assert len(packing_lower_bound(build_chain(0), UNIT, 1.0)) == 1
    t = build_binary(3).materialize()
    assert len(packing_lower_bound(t, UNIT, 1e-9)) == t.n_nodes


def test_interval_packing_unit_chain():
    # every unit step (t, t+1] already has d = 1, so all ten steps qualify
    pk = disjoint_interval_packing(CHAIN10, UNIT, 1.0)
    assert pk.count == 10
    assert pk.count == brute_interval_packing(CHAIN10, distance_matrix(CHAIN10, UNIT), 1.0)
    assert disjoint_interval_packing(CHAIN10, UNIT, 10.0).count == 0


def test_interval_packing_binary_depth4():
    t = build_binary(4).materialize()
    pk = disjoint_interval_packing(t, UNIT, 2.0)
    assert pk.count == brute_interval_packing(t, distance_matrix(t, UNIT), 2.0) == 2


def test_interval_packing_witnesses():
    t = build_binary(5).materialize()
    rng = np.random.default_rng(1)
    w = random_node_weights(t, rng)
    eps = 0.8
    pk = disjoint_interval_packing(t, w, eps)
    tb = tree_tables(t, w)
    used = []
    for top, bottom, r in pk.intervals:
        seg = t.order_interval(top, bottom, closed=False).tolist()
        assert r in seg
        assert w.sigma[r] * math.sqrt(tb.S[r, top]) >= eps
        used.extend(seg)
    assert len(used) == len(set(used))


def test_covering_curve_examples():
    c = covering_curve(CHAIN10, UNIT, [2.0, 1.0, 0.5])
    assert np.all(np.diff(c.upper) >= 0) and np.all(np.diff(c.lower) >= 0)
    single = covering_curve(build_chain(0), UNIT, [1.0, 0.1])
    assert single.upper.tolist() == [1, 1] and single.lower.tolist() == [1, 1]
    assert dudley_integral(single).value == 0.0
    assert sudakov_sup(single) == 0.0
    small = covering_curve(CHAIN10.materialize(), UNIT, [1.5, 1.0])
    assert [r.exact for r in small.results] == [3, 11]
    with pytest.raises(ValueError):
        covering_curve(CHAIN10, UNIT, [0.5, 1.0])


def test_dudley_two_level_curve():
    grid = geometric_grid(0.999, 1e-3, 400)
    res = [CoverResult(float(e), 2, 2) for e in grid]
    val = dudley_integral(EntropyCurve("d", res, 1.0)).value
    assert abs(val - math.sqrt(math.log(2))) < 0.01


def test_sudakov_synthetic():
    grid = geometric_grid(0.9, 1e-4, 200)
    n = np.ceil(grid ** -2).astype(int)
    res = [CoverResult(float(e), int(k), int(k)) for e, k in zip(grid, n)]
    got = sudakov_sup(EntropyCurve("d", res, 1.0))
    expect = max(e * math.sqrt(math.log(k)) for e, k in zip(grid, n))
    assert got == pytest.approx(expect)


def test_dudley_rejects_empty():
    with pytest.raises(ValueError):
        dudley_integral(EntropyCurve("d", [], 0.0))
    with pytest.raises(ValueError):
        sudakov_sup(EntropyCurve("d", [], 0.0))


def test_fit_exponent_synthetic():
    eps = geometric_grid(1.0, 1e-6, 50)
    assert fit_exponent(eps, 7 * eps ** -0.4) == pytest.approx(0.4)


def test_power_chain_dudley_stable_under_refinement():
    t = build_chain(20000)
    w = power_chain_weights(1.0, 2.0)
    coarse = dudley_integral(covering_curve(t, w, geometric_grid(1.0, 1e-6, 40))).value
    fine = dudley_integral(covering_curve(t, w, geometric_grid(1.0, 1e-6, 160))).value
    assert math.isfinite(coarse) and abs(fine - coarse) < 0.15 * coarse


def test_unbounded_chain_sudakov_grows():
    # alpha_k = (k+1)^-1/2, sigma = 1: d(0, n)^2 is a harmonic sum, the chain is unbounded
    w = WeightSystem.homogeneous(Power(0.5), Constant(1.0))
    vals = []
    for n in (10 ** 2, 10 ** 3, 10 ** 4):
        t = build_chain(n)
        vals.append(sudakov_sup(covering_curve(t, w, geometric_grid(3.0, 0.05, 60))))
    assert vals[0] < vals[1] < vals[2]


def test_equivalence_report_unit_chain():
    rep = entropy_equivalence_report(build_chain(60), UNIT, geometric_grid(7.0, 0.5, 20))
    assert rep.sup_factor < 4
    single = entropy_equivalence_report(build_chain(0), UNIT, [1.0, 0.5])
    assert single.sup_d == 0.0 and single.sup_dX == 0.0 and single.sup_factor == 1.0


def test_dense_size_cap():
    t = random_tree(5000, np.random.default_rng(0))
    with pytest.raises(TreeError):
        greedy_ball_cover(t, UNIT, 1.0, metric="dX")
    with pytest.raises(TreeError):
        exact_cover_small(build_chain(20), UNIT, 1.0)


# -- sandwich properties ------------------------------------------------------------

@given(small_weighted())
def test_cover_sandwich(case):
    t, w, D, eps = case
    exact = exact_cover_small(t, w, eps, D=D)
    assert exact == brute_cover(D, eps)
    assert len(packing_lower_bound(t, w, 2 * eps)) <= exact <= len(greedy_ball_cover(t, w, eps))


@given(small_weighted(max_nodes=8))
def test_order_cover_relations(case):
    t, w, D, eps = case
    n_eps = exact_cover_small(t, w, eps, D=D)
    order = exact_order_cover_small(t, w, eps, D=D)
    assert order == brute_order_cover(t, D, eps)
    assert n_eps <= order
    assert exact_order_cover_small(t, w, 2 * eps, D=D) <= n_eps
    assert order <= len(greedy_order_net(t, w, eps))


@given(small_weighted(max_nodes=9))
def test_interval_packing_bound(case):
    t, w, D, eps = case
    m = disjoint_interval_packing(t, w, eps).count
    assert m + 1 >= exact_cover_small(t, w, 2 * eps, D=D)
    assert m <= brute_interval_packing(t, D, eps)


@given(small_weighted(max_nodes=12), st.sampled_from(["d", "dX", "dhat"]))
def test_curve_brackets(case, metric):
    t, w, D, eps = case
    grid = geometric_grid(eps * 4, eps / 4, 6)
    c = covering_curve(t, w, grid, metric)
    for r in c.results:
        assert r.lower_bound <= r.exact <= r.upper_bound
    assert np.all(np.diff(c.upper) >= 0) and np.all(np.diff(c.lower) >= 0)


@given(small_weighted(max_nodes=12))
def test_order_net_valid(case):
    t, w, D, eps = case
    net = greedy_order_net(t, w, eps)
    for v in range(t.n_nodes):
        assert any(t.precedes(c, v) and D[c, v] < eps for c in net)


def test_chain_cover_matches_explicit():
    t = build_chain(12)
    w = power_chain_weights(0.7, 0.4)
    e = t.materialize()
    for eps in (0.05, 0.2, 0.5):
        assert len(greedy_ball_cover(t, w, eps)) == exact_cover_small(e, w, eps)
        assert greedy_order_net(t, w, eps) == greedy_order_net(e, w, eps)
        assert disjoint_interval_packing(t, w, eps).count == disjoint_interval_packing(e, w, eps).count
