"""Covering numbers, order covering numbers and entropy functionals.

Balls are open: ``B_eps(t) = {s : rho(t, s) < eps}``.  Every :class:`CoverResult`
carries a certified bracket ``lower <= N(eps) <= upper``:

* ``upper`` is the size of an explicit cover (farthest-point or greedy set
  cover on general trees, the exact interval sweep for ``d`` on a chain);
* ``lower`` is the size of a ``2 eps``-separated set, no two of whose points
  fit in one open ``eps``-ball.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tree_core import CHAIN, Tree, TreeError
from .tree_metrics import (MATRIX_CAP, ChainMetric, distance_matrix, dyadic_weights,
                           tree_tables)
from .weights import WeightSystem

EXACT_COVER_CAP = 15
EXACT_ORDER_CAP = 12


@dataclass
class CoverResult:
    epsilon: float
    lower_bound: int
    upper_bound: int
    exact: int | None = None
    net: list[int] = field(default_factory=list)
    packing: list[int] = field(default_factory=list)

    def __post_init__(self):
        if self.exact is not None and not self.lower_bound <= self.exact <= self.upper_bound:
            raise AssertionError(f"inconsistent bracket at eps={self.epsilon}: "
                                 f"{self.lower_bound} <= {self.exact} <= {self.upper_bound}")


@dataclass
class EntropyCurve:
    metric: str
    results: list[CoverResult]
    diameter: float

    @property
    def eps(self) -> np.ndarray:
        return np.array([r.epsilon for r in self.results])

    @property
    def lower(self) -> np.ndarray:
        return np.array([r.lower_bound for r in self.results])

    @property
    def upper(self) -> np.ndarray:
        return np.array([r.upper_bound for r in self.results])

    def rows(self) -> list[dict]:
        return [{"eps": r.epsilon, "lower": r.lower_bound, "upper": r.upper_bound,
                 "exact": "" if r.exact is None else r.exact, "metric": self.metric}
                for r in self.results]


def geometric_grid(start: float, stop: float, points: int) -> np.ndarray:
    """``points`` values from ``start`` down to ``stop``, evenly spaced in log."""
    if points < 1 or start <= 0 or stop <= 0:
        raise ValueError("grid needs positive endpoints and at least one point")
    if points > 1 and not start > stop:
        raise ValueError("grid must be strictly decreasing")
    return np.geomspace(start, stop, points)


# ---------------------------------------------------------------------------
# finite metric spaces
# ---------------------------------------------------------------------------

class _Space:
    """Point set ``0..n-1`` with a distance-from-one-point oracle."""

    def __init__(self, n: int, dist_from: Callable[[int], np.ndarray], matrix: np.ndarray | None = None):
        self.n = n
        self.dist_from = dist_from
        self.matrix = matrix


def _space(tree: Tree, w: WeightSystem, metric: str) -> _Space:
    if tree.kind == CHAIN and metric in ("dX",) and tree.n_nodes > MATRIX_CAP:
        cm = ChainMetric(tree, w)
        return _Space(cm.size, cm.dX_from)
    if tree.n_nodes > MATRIX_CAP:
        raise TreeError(f"covering this metric is limited to {MATRIX_CAP} nodes "
                        f"(tree has {tree.n_nodes})")
    D = distance_matrix(tree, w, metric)
    return _Space(D.shape[0], lambda i: D[i], D)


def farthest_point(space: _Space, stop: float) -> tuple[list[int], np.ndarray]:
    """Farthest-point insertion until every point is within ``< stop`` of a center.

    Returns the centers and their insertion radii (``inf`` for the first),
    which are non-increasing.
    """
    centers = [0]
    radii = [math.inf]
    mind = np.array(space.dist_from(0), dtype=np.float64)
    while True:
        j = int(np.argmax(mind))
        r = float(mind[j])
        if r < stop or r <= 0.0:
            break
        centers.append(j)
        radii.append(r)
        np.minimum(mind, space.dist_from(j), out=mind)
    return centers, np.array(radii)


def _count_at(radii: np.ndarray, thr: float) -> int:
    return int(np.count_nonzero(radii >= thr))


def _greedy_set_cover(D: np.ndarray, eps: float) -> list[int]:
    balls = D < eps
    uncovered = np.ones(D.shape[0], dtype=bool)
    net = []
    while uncovered.any():
        gain = balls[:, uncovered].sum(axis=1)
        c = int(np.argmax(gain))
        net.append(c)
        uncovered &= ~balls[c]
    return net


def greedy_ball_cover(tree: Tree, w: WeightSystem, eps: float, metric: str = "d") -> list[int]:
    """Centers of a valid open-ball ``eps``-cover (its length bounds N from above)."""
    if metric == "d" and tree.kind == CHAIN:
        return _chain_interval_cover(ChainMetric(tree, w), eps)
    space = _space(tree, w, metric)
    centers, radii = farthest_point(space, eps)
    net = centers[:_count_at(radii, eps)]
    if space.matrix is not None:
        alt = _greedy_set_cover(space.matrix, eps)
        if len(alt) < len(net):
            net = alt
    return net


def packing_lower_bound(tree: Tree, w: WeightSystem, eps: float, metric: str = "d") -> list[int]:
    """A maximal ``eps``-separated set (pairwise distances ``>= eps``)."""
    if metric == "d" and tree.kind == CHAIN:
        return _chain_separated(ChainMetric(tree, w), eps)
    centers, radii = farthest_point(_space(tree, w, metric), eps)
    return centers[:_count_at(radii, eps)]


def _ball_masks(D: np.ndarray, eps: float, order: np.ndarray | None = None) -> list[int]:
    n = D.shape[0]
    inside = D < eps
    if order is not None:
        inside &= order
    weights = 1 << np.arange(n, dtype=object)
    return [int(np.sum(weights[inside[i]])) for i in range(n)]


def _min_cover(masks: Sequence[int], full: int, forced: int | None = None) -> tuple[int, tuple]:
    n = len(masks)
    base = masks[forced] if forced is not None else 0
    pool = [i for i in range(n) if i != forced]
    if base == full:
        return 1, (forced,)
    for k in range(1, n + 1):
        for combo in itertools.combinations(pool, k):
            m = base
            for i in combo:
                m |= masks[i]
            if m == full:
                chosen = combo if forced is None else (forced,) + combo
                return len(chosen), chosen
    raise AssertionError("the full node set always covers itself")


def exact_cover_small(tree: Tree, w: WeightSystem, eps: float, metric: str = "d",
                      D: np.ndarray | None = None) -> int:
    """Minimal number of open ``eps``-balls centred in T (exhaustive)."""
    if tree.n_nodes > EXACT_COVER_CAP:
        raise TreeError(f"exact covering is limited to {EXACT_COVER_CAP} nodes")
    if D is None:
        D = distance_matrix(tree, w, metric)
    full = (1 << tree.n_nodes) - 1
    return _min_cover(_ball_masks(D, eps), full)[0]


def exact_order_cover_small(tree: Tree, w: WeightSystem, eps: float, metric: str = "d",
                            D: np.ndarray | None = None) -> int:
    """Minimal ``eps``-order net: each node needs an ancestor-or-self net point within ``< eps``."""
    if tree.n_nodes > EXACT_ORDER_CAP:
        raise TreeError(f"exact order covering is limited to {EXACT_ORDER_CAP} nodes")
    if not tree.is_explicit:
        tree = tree.materialize()
    if D is None:
        D = distance_matrix(tree, w, metric)
    below = tree_tables(tree, w).anc.T  # below[t, s]: t ⪯ s
    full = (1 << tree.n_nodes) - 1
    # only the root covers itself, so it is always in the net
    return _min_cover(_ball_masks(D, eps, below), full, forced=0)[0]


# ---------------------------------------------------------------------------
# order nets and interval packings (metric d)
# ---------------------------------------------------------------------------

def _chain_interval_cover(cm: ChainMetric, eps: float) -> list[int]:
    # balls are intervals: cover the leftmost uncovered point with the
    # rightmost center that still reaches it
    net = []
    p = 0
    while p <= cm.n:
        c = cm.first_reach(p, eps) - 1
        net.append(c)
        p = cm.first_reach(c, eps)
    return net


def _chain_separated(cm: ChainMetric, eps: float) -> list[int]:
    pts = [0]
    while True:
        nxt = cm.first_reach(pts[-1], eps)
        if nxt > cm.n:
            return pts
        pts.append(nxt)


def greedy_order_net(tree: Tree, w: WeightSystem, eps: float) -> list[int]:
    """Top-down order net for ``d``: a node joins when its nearest net ancestor is ``>= eps`` away."""
    if tree.kind == CHAIN:
        return _chain_separated(ChainMetric(tree, w), eps)
    if not tree.is_explicit:
        tree = tree.materialize()
    par = tree.parents()
    a2 = w.alpha_at(tree) ** 2
    sig = w.sigma_at(tree)
    n = tree.n_nodes
    S = np.zeros(n)  # alpha^2 over (nearest net ancestor, v]
    D = np.zeros(n)  # d(nearest net ancestor, v)
    net = [0]
    order = tree.bfs_order()
    depth = tree.depths()
    # one level at a time; every level depends only on the previous one
    bounds = np.flatnonzero(np.diff(depth[order])) + 1
    for level in np.split(order, bounds)[1:]:
        p = par[level]
        s_new = S[p] + a2[level]
        d_new = np.maximum(D[p], sig[level] * np.sqrt(s_new))
        mark = d_new >= eps
        S[level] = np.where(mark, 0.0, s_new)
        D[level] = np.where(mark, 0.0, d_new)
        net.extend(int(v) for v in level[mark])
    return sorted(net)


def _shallowest_bottom(tree, t, used, a2, sig, eps):
    """Breadth-first through unused descendants of ``t`` carrying (sum, best value, witness)."""
    frontier = [(c, a2[c], sig[c] * math.sqrt(a2[c]), c) for c in tree.children(t) if not used[c]]
    while frontier:
        nxt = []
        for v, ssum, best, r in frontier:
            if best >= eps:
                return v, r
            for c in tree.children(v):
                if not used[c]:
                    s2 = ssum + a2[c]
                    val = sig[c] * math.sqrt(s2)
                    nxt.append((c, s2, val, c) if val > best else (c, s2, best, r))
        frontier = nxt
    return None


@dataclass
class IntervalPacking:
    """Disjoint order intervals ``(t, s]`` with ``d(t, s) >= eps`` and witnesses ``r``."""

    epsilon: float
    intervals: list[tuple[int, int, int]]

    @property
    def count(self) -> int:
        return len(self.intervals)


def disjoint_interval_packing(tree: Tree, w: WeightSystem, eps: float) -> IntervalPacking:
    """Greedy family of disjoint ``(t, s]`` with ``d(t, s) >= eps``.

    Tops are tried deepest first; each takes the shallowest reachable bottom
    whose interval avoids nodes already used.  The witness ``r`` in ``(t, s]``
    attains ``sigma(r) * sqrt(sum alpha^2 over (t, r]) >= eps``.
    """
    if tree.kind == CHAIN:
        cm = ChainMetric(tree, w)
        out = []
        t = 0
        while True:
            s = cm.first_reach(t, eps)
            if s > cm.n:
                break
            out.append((t, s, s))  # the first reach is itself the witness
            t = s
        return IntervalPacking(eps, out)
    if not tree.is_explicit:
        tree = tree.materialize()
    if tree.n_nodes > MATRIX_CAP:
        raise TreeError(f"interval packing is limited to {MATRIX_CAP} nodes")
    a2 = w.alpha_at(tree) ** 2
    sig = w.sigma_at(tree)
    used = np.zeros(tree.n_nodes, dtype=bool)
    order = tree.bfs_order()
    out = []
    for t in order[::-1]:
        t = int(t)
        # several intervals may hang below the same top in different subtrees
        while (found := _shallowest_bottom(tree, t, used, a2, sig, eps)) is not None:
            s, r = found
            for v in tree.order_interval(t, s, closed=False):
                used[v] = True
            out.append((t, s, r))
    return IntervalPacking(eps, out)


# ---------------------------------------------------------------------------
# curves and functionals
# ---------------------------------------------------------------------------

def _monotone(results: list[CoverResult]) -> None:
    # eps decreases along the list; N(eps) is non-increasing in eps, so both
    # bounds may be tightened with running extrema
    hi = math.inf
    for r in reversed(results):
        hi = min(hi, r.upper_bound)
        r.upper_bound = hi
    lo = 0
    for r in results:
        lo = max(lo, r.lower_bound)
        r.lower_bound = lo


def covering_curve(tree: Tree, w: WeightSystem, eps_grid, metric: str = "d") -> EntropyCurve:
    """Certified ``N(T, metric, eps)`` brackets along a strictly decreasing grid."""
    grid = np.asarray(eps_grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0):
        raise ValueError("eps grid must be a non-empty list of positive numbers")
    if np.any(np.diff(grid) >= 0):
        raise ValueError("eps grid must be strictly decreasing")
    results: list[CoverResult] = []
    if metric == "dhat":
        w = dyadic_weights(w)
        metric = "d"
    if metric == "d" and tree.kind == CHAIN:
        cm = ChainMetric(tree, w)
        diameter = cm.diameter()
        for eps in grid:
            net = _chain_interval_cover(cm, float(eps))
            pack = _chain_separated(cm, 2.0 * float(eps))
            results.append(CoverResult(float(eps), len(pack), len(net), None, net, pack))
    else:
        space = _space(tree, w, metric)
        centers, radii = farthest_point(space, float(grid[-1]))
        D = space.matrix
        diameter = float(D.max()) if D is not None else float(np.max(space.dist_from(0))) \
            if space.n else 0.0
        if D is None:
            # the farthest-point radius after the root is at least half the diameter
            diameter = max(diameter, float(radii[1]) if radii.size > 1 else 0.0)
        for eps in grid:
            eps = float(eps)
            net = centers[:_count_at(radii, eps)]
            if D is not None:
                alt = _greedy_set_cover(D, eps)
                if len(alt) < len(net):
                    net = alt
            pack = centers[:_count_at(radii, 2.0 * eps)]
            exact = None
            if D is not None and space.n <= EXACT_COVER_CAP:
                exact = _min_cover(_ball_masks(D, eps), (1 << space.n) - 1)[0]
            results.append(CoverResult(eps, len(pack), len(net), exact, net, pack))
    _monotone(results)
    return EntropyCurve(metric, results, diameter)


@dataclass
class DudleyEstimate:
    """Upper sum for the entropy integral over ``[eps_min, inf)``.

    The part over ``[0, eps_min]`` is not estimated; it is reported as the
    truncated tail so that finiteness is never asserted from a grid.
    """

    value: float
    tail_eps: float
    tail_truncated: bool


def dudley_integral(curve: EntropyCurve) -> DudleyEstimate:
    if not curve.results:
        raise ValueError("empty curve")
    eps = curve.eps
    root_log = np.sqrt(np.log(curve.upper.astype(np.float64)))
    total = 0.0
    if curve.diameter > eps[0]:
        # N may exceed 1 between the first grid point and the diameter
        total += root_log[0] * (curve.diameter - eps[0])
    total += float(np.sum(root_log[1:] * (eps[:-1] - eps[1:])))
    truncated = bool(curve.upper[-1] > 1)
    return DudleyEstimate(float(total), float(eps[-1]), truncated)


def sudakov_sup(curve: EntropyCurve) -> float:
    if not curve.results:
        raise ValueError("empty curve")
    return float(np.max(curve.eps * np.sqrt(np.log(curve.lower.astype(np.float64)))))


def fit_exponent(eps, counts, trim: float = 0.1) -> float:
    """Least-squares slope of ``log N`` against ``log(1/eps)`` on the middle of the grid."""
    eps = np.asarray(eps, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.float64)
    m = eps.size
    cut = int(math.floor(trim * m))
    sl = slice(cut, m - cut)
    x = np.log(1.0 / eps[sl])
    y = np.log(counts[sl])
    if x.size < 2:
        raise ValueError("not enough grid points to fit")
    return float(np.polyfit(x, y, 1)[0])


def chain_resolvable_range(tree: Tree, w: WeightSystem) -> tuple[float, float]:
    """``(diameter, d(n//2, n))``: below the second value the truncation shows."""
    cm = ChainMetric(tree, w)
    return cm.diameter(), cm.d(cm.n // 2, cm.n)


@dataclass
class EquivalenceReport:
    eps: np.ndarray
    n_d: np.ndarray
    n_dX: np.ndarray
    scaled_d: np.ndarray    # eps^2 log N(d)
    scaled_dX: np.ndarray   # eps^2 log N(d_X)
    dudley_d: DudleyEstimate
    dudley_dX: DudleyEstimate

    @property
    def sup_d(self) -> float:
        return float(self.scaled_d.max())

    @property
    def sup_dX(self) -> float:
        return float(self.scaled_dX.max())

    @property
    def sup_factor(self) -> float:
        a, b = self.sup_d, self.sup_dX
        if a == 0 and b == 0:
            return 1.0
        if a == 0 or b == 0:
            return math.inf
        return max(a / b, b / a)

    @property
    def ratio(self) -> np.ndarray:
        return self.n_dX / self.n_d

    @property
    def ratio_growth(self) -> float:
        r = self.ratio
        return float(r[-1] / r[0])

    def rows(self) -> list[dict]:
        return [{"eps": float(e), "N_d": int(a), "N_dX": int(b), "eps2logN_d": float(x),
                 "eps2logN_dX": float(y), "ratio": float(b / a)}
                for e, a, b, x, y in zip(self.eps, self.n_d, self.n_dX, self.scaled_d, self.scaled_dX)]


def entropy_equivalence_report(tree: Tree, w: WeightSystem, eps_grid) -> EquivalenceReport:
    """Side-by-side entropy of ``d`` and ``d_X`` (upper brackets) on one grid."""
    cd = covering_curve(tree, w, eps_grid, "d")
    cx = covering_curve(tree, w, eps_grid, "dX")
    eps = cd.eps
    nd, nx = cd.upper, cx.upper
    return EquivalenceReport(eps, nd, nx, eps ** 2 * np.log(nd), eps ** 2 * np.log(nx),
                             dudley_integral(cd), dudley_integral(cx))
