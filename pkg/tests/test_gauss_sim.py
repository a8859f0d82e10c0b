import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from treegauss import rng as trng
from treegauss.gauss_sim import (EZETA, SimConfig, class_entry_parent, decomposition_residuals,
                                 estimate_esup, greedy_branch_statistic, level_increment_lower_bound,
                                 level_stats, sample_field, sample_localized, sample_sup)
from treegauss.tree_core import Tree, TreeError, build_binary, build_chain, build_star, random_tree
from treegauss.tree_metrics import build_level_partition
from treegauss.weights import (Array, Constant, Geometric, WeightSystem, decaying_alpha_weights,
                               dyadic_class, random_node_weights)

UNIT = WeightSystem.homogeneous(Constant(1.0), Constant(1.0))
ZERO = WeightSystem.homogeneous(Constant(0.0), Constant(1.0))


@st.composite
def weighted_trees(draw, max_nodes=120):
    n = draw(st.integers(1, max_nodes))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    t = random_tree(n, rng)
    return t, random_node_weights(t, rng), seed


def literal_field(tree, w, seed, replica):
    xi = trng.node_normals(seed, replica, tree.n_nodes)
    a, s = w.alpha_at(tree), w.sigma_at(tree)
    return np.array([s[t] * sum(a[v] * xi[v] for v in tree.ancestors(t)) for t in range(tree.n_nodes)])


# -- sampling ------------------------------------------------------------------

def test_zero_alpha():
    t = build_binary(14)
    assert sample_sup(t, ZERO, 1, 0) == (0.0, 0)
    est = estimate_esup(SimConfig(build_binary(6), ZERO, replicas=5, seed=3))
    assert est.mean.tolist() == [0.0] and est.stderr.tolist() == [0.0]


def test_single_node():
    t = build_chain(0)
    xi = trng.normals(99, 4, 0, 1)[0]
    assert sample_sup(t, UNIT, 99, 4) == (abs(xi), 0)


def test_tie_prefers_shallower_node():
    t = build_chain(1)
    w = WeightSystem.homogeneous(Array((1.0, 0.0)), Constant(1.0))
    val, node = sample_sup(t, w, 7, 0)
    assert val == abs(trng.normals(7, 0, 0, 1)[0]) and node == 0


@given(weighted_trees())
def test_field_matches_definition(case):
    t, w, seed = case
    assert np.allclose(sample_field(t, w, seed, 2), literal_field(t, w, seed, 2), rtol=1e-12, atol=1e-12)


def test_binary_streaming_matches_materialized():
    w = decaying_alpha_weights()
    imp = build_binary(14)
    exp = imp.materialize()
    for r in range(3):
        x = sample_field(exp, w, 5, r)
        val, node = sample_sup(imp, w, 5, r)
        assert val == pytest.approx(np.abs(x).max(), rel=1e-12)
        assert abs(x[node]) == pytest.approx(val, rel=1e-12)
        assert np.allclose(level_stats(imp, w, 5, r), level_stats(exp, w, 5, r), rtol=1e-12)


def test_streaming_chunking_is_invisible():
    from treegauss.gauss_sim import _binary_level_stats
    w = decaying_alpha_weights()
    a = _binary_level_stats(14, w, 11, 0, "abs", chunk_log2=20)
    b = _binary_level_stats(14, w, 11, 0, "abs", chunk_log2=5)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_truncation_extends_sample():
    w = decaying_alpha_weights()
    lv = level_stats(build_binary(16), w, 3, 1)
    for d in (4, 9, 13):
        assert np.array_equal(level_stats(build_binary(d), w, 3, 1), lv[:d + 1])
    est = estimate_esup(SimConfig(build_binary(16), w, replicas=8, seed=3, depths=[4, 9, 16], keep_raw=True))
    assert np.all(np.diff(est.raw, axis=1) >= 0)


def test_estimate_deterministic_across_workers(monkeypatch):
    cfg = SimConfig(build_binary(13), decaying_alpha_weights(), replicas=9, seed=21, depths=[5, 13])
    monkeypatch.setenv("TREEGAUSS_THREADS", "1")
    one = estimate_esup(cfg)
    monkeypatch.setenv("TREEGAUSS_THREADS", "4")
    four = estimate_esup(cfg)
    assert np.array_equal(one.mean, four.mean) and np.array_equal(one.stderr, four.stderr)
    small = SimConfig(random_tree(50, np.random.default_rng(0)), UNIT, replicas=7, seed=2)
    monkeypatch.setenv("TREEGAUSS_THREADS", "1")
    a = estimate_esup(small)
    monkeypatch.setenv("TREEGAUSS_THREADS", "3")
    assert np.array_equal(a.mean, estimate_esup(small).mean)


def test_estimate_matches_sample_sup():
    t = build_star(16)
    est = estimate_esup(SimConfig(t, UNIT, replicas=20, seed=8, keep_raw=True))
    direct = [sample_sup(t, UNIT, 8, r)[0] for r in range(20)]
    assert np.allclose(est.raw[:, 0], direct)
    assert est.stderr[0] == pytest.approx(np.std(direct, ddof=1) / math.sqrt(20))


def test_sim_config_validation():
    with pytest.raises(ValueError):
        SimConfig(build_chain(3), UNIT, replicas=0)
    with pytest.raises(TreeError):
        SimConfig(build_binary(25), UNIT)
    with pytest.raises(TreeError):
        SimConfig(build_chain(3), UNIT, depths=[5])
    with pytest.raises(ValueError):
        SimConfig(build_chain(3), UNIT, statistic="median")


def test_star_two_leaves_closed_form():
    # alpha(root) = 0, so the statistic is the max of two independent normals
    t = build_star(2)
    w = WeightSystem.homogeneous(Array((0.0, 1.0)), Constant(1.0))
    est = estimate_esup(SimConfig(t, w, replicas=20000, seed=1, statistic="leaf_max"))
    assert abs(est.mean[0] - EZETA) < 4 * est.stderr[0]


def test_concentration_of_star_max():
    t = build_star(64)
    w = WeightSystem.homogeneous(Array((0.0, 1.0)), Constant(1.0))
    est = estimate_esup(SimConfig(t, w, replicas=4000, seed=2, statistic="leaf_max", keep_raw=True))
    s = est.raw[:, 0]
    for r in (1.0, 2.0, 3.0):
        assert np.mean(s > s.mean() + r) <= math.exp(-r * r / 2) + 0.01


# -- localization -----------------------------------------------------------------

def test_localized_examples():
    t = build_binary(6).materialize()
    single = WeightSystem.homogeneous(Constant(1.0), Constant(0.5))
    assert np.array_equal(sample_localized(t, single, 4, 0), sample_field(t, single, 4, 0))
    assert np.all(sample_localized(t, ZERO, 4, 0) == 0)
    w = WeightSystem.homogeneous(Constant(1.0), Geometric(0.7))
    part = build_level_partition(w, t.height + 1).class_of(t)
    root_cls = part == part[0]
    assert np.array_equal(sample_localized(t, w, 4, 0)[root_cls], sample_field(t, w, 4, 0)[root_cls])


@given(weighted_trees(max_nodes=300))
def test_residuals_small(case):
    t, w, seed = case
    for rep in range(3):
        res = decomposition_residuals(t, w, seed, rep)
        assert res.xtoy <= 1e-10 and res.ytox <= 1e-10 and res.sandwich <= 1e-10


@given(weighted_trees(max_nodes=60))
def test_class_end_reconstruction_literal(case):
    """X_hat_t = sum over classes l on the branch of 2**-(k-l) Y_hat at the last node of class l."""
    t, w, seed = case
    xi = trng.node_normals(seed, 0, t.n_nodes)
    a = w.alpha_at(t)
    cls = dyadic_class(w.sigma_at(t))
    for s in range(t.n_nodes):
        path = list(t.ancestors(s))
        k = cls[s]
        xhat = 2.0 ** -k * sum(a[v] * xi[v] for v in path)
        total = 0.0
        for l in sorted(set(cls[path])):
            members = [v for v in path if cls[v] == l]
            lam = members[-1]
            yhat = 2.0 ** -l * sum(a[v] * xi[v] for v in members)
            total += 2.0 ** -(k - l) * yhat
            assert cls[lam] == l
        assert math.isclose(total, xhat, rel_tol=1e-10, abs_tol=1e-12)


@given(weighted_trees(max_nodes=60))
def test_class_entry_parent_literal(case):
    t, w, _ = case
    cls = dyadic_class(w.sigma_at(t))
    lam = class_entry_parent(t, cls)
    for s in range(t.n_nodes):
        below = [v for v in t.ancestors(s) if cls[v] < cls[s]]
        assert lam[s] == (below[-1] if below else -1)


# -- lower-bound constructions ------------------------------------------------------

def test_greedy_branch_examples():
    t = build_binary(12)
    assert greedy_branch_statistic(t, ZERO, 1, 0) == 0.0
    w = decaying_alpha_weights()
    for r in range(5):
        assert greedy_branch_statistic(t, w, 2, r) <= sample_sup(t, w, 2, r, statistic="max")[0] + 1e-12
    with pytest.raises(TreeError):
        greedy_branch_statistic(build_chain(4), w, 1, 0)


def test_greedy_branch_explicit_matches_implicit():
    w = decaying_alpha_weights()
    imp = build_binary(8)
    exp = imp.materialize()
    assert greedy_branch_statistic(imp, w, 3, 1) == pytest.approx(greedy_branch_statistic(exp, w, 3, 1))


def test_greedy_branch_mean_harmonic():
    n = 40
    t = build_binary(n)
    w = decaying_alpha_weights()
    vals = np.array([greedy_branch_statistic(t, w, 6, r) for r in range(2000)])
    harmonic = sum(1 / (k + 1) for k in range(1, n + 1))
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    assert vals.mean() + 3 * se >= 0.5 * EZETA * harmonic


def test_level_increment_bound():
    w = WeightSystem.homogeneous(Geometric(2.0), Geometric(0.25))
    assert level_increment_lower_bound(w, 0, 0) == 0.0
    for n in (1, 5, 30, 2000):
        expect = 0.64 * math.sqrt(math.log(2)) * math.sqrt(n) * 2.0 ** -n
        assert level_increment_lower_bound(w, n, n) == pytest.approx(expect, rel=1e-9)
    with pytest.raises(ValueError):
        level_increment_lower_bound(w, 3, 2)


def test_level_increment_below_simulation():
    w = decaying_alpha_weights()
    est = estimate_esup(SimConfig(build_binary(14), w, replicas=200, seed=5))
    for m, n in ((1, 14), (4, 14), (7, 14), (14, 14)):
        assert level_increment_lower_bound(w, m, n) <= 2 * est.mean[0] + 3 * est.stderr[0]


def test_star_builder():
    s = build_star(3)
    assert isinstance(s, Tree) and s.children(0) == [1, 2, 3]
