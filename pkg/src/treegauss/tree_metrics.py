"""Distances on weighted trees.

``d(t, s)`` for ``t ⪯ s`` is the largest ``sigma(r) * sqrt(sum of alpha^2 over (t, r])``
with ``t ≺ r ⪯ s``; incomparable pairs go through their meet,
``d(t, s) = d(m, t) + d(m, s)``.  ``d_X`` is the L2 distance between process
values.  ``d_hat`` is ``d`` recomputed after rounding sigma up to a power of two.

Sums of alpha^2 are always accumulated locally (from the upper end of the
interval) rather than as differences of global prefix sums, so tiny weights
deep in a long chain keep full relative precision.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tree_core import CHAIN, Tree, TreeError
from .weights import (LEVEL, NODE, DyadicCeil, WeightError, WeightSystem, dyadic_class)

METRICS = ("d", "dX", "dhat")
MATRIX_CAP = 4096


# ---------------------------------------------------------------------------
# pairwise evaluation
# ---------------------------------------------------------------------------

def _branch_d(tree: Tree, w: WeightSystem, t: int, s: int) -> float:
    """``d(t, s)`` for ``t ⪯ s``."""
    seg = tree.order_interval(t, s, closed=False)
    if seg.size == 0:
        return 0.0
    a2 = w.alpha_at(tree, seg) ** 2
    sig = w.sigma_at(tree, seg)
    return float(np.max(sig * np.sqrt(np.cumsum(a2))))


def dist_d(tree: Tree, w: WeightSystem, t: int, s: int) -> float:
    if tree.precedes(t, s):
        return _branch_d(tree, w, t, s)
    if tree.precedes(s, t):
        return _branch_d(tree, w, s, t)
    m = tree.meet(t, s)
    return _branch_d(tree, w, m, t) + _branch_d(tree, w, m, s)


def dyadic_weights(w: WeightSystem) -> WeightSystem:
    """The same alpha with sigma rounded up to ``2**-k``."""
    if w.mode == LEVEL:
        return WeightSystem(LEVEL, w.alpha, DyadicCeil(w.sigma), w.validate_levels)
    return WeightSystem(NODE, w.alpha, 2.0 ** -dyadic_class(w.sigma).astype(np.float64))


def dist_dhat(tree: Tree, w: WeightSystem, t: int, s: int) -> float:
    return dist_d(tree, dyadic_weights(w), t, s)


def dist_dX(tree: Tree, w: WeightSystem, t: int, s: int) -> float:
    """``sqrt(E|X_t - X_s|^2)`` via the meet decomposition.

    ``(sigma_t - sigma_s)^2 A(m) + sigma_t^2 S(m, t) + sigma_s^2 S(m, s)`` where
    ``A(m)`` sums alpha^2 over ``[root, m]`` and ``S(m, u)`` over ``(m, u]``.
    """
    m = tree.meet(t, s)
    upto_m = tree.path(m)
    a_m = float(np.sum(w.alpha_at(tree, upto_m) ** 2))
    st, ss = (float(x) for x in w.sigma_at(tree, [t, s]))

    def tail(u):
        seg = tree.order_interval(m, u, closed=False)
        return float(np.sum(w.alpha_at(tree, seg) ** 2)) if seg.size else 0.0

    val = (st - ss) ** 2 * a_m + st * st * tail(t) + ss * ss * tail(s)
    return float(np.sqrt(val))


def dist(metric: str, tree: Tree, w: WeightSystem, t: int, s: int) -> float:
    if metric == "d":
        return dist_d(tree, w, t, s)
    if metric == "dX":
        return dist_dX(tree, w, t, s)
    if metric == "dhat":
        return dist_dhat(tree, w, t, s)
    raise ValueError(f"unknown metric {metric!r}")


def homogeneous_chain_d(w: WeightSystem, m: int, n: int) -> float:
    """``max_{m<l<=n} sigma_l (sum_{k=m+1}^l alpha_k^2)^{1/2}`` straight from the level sequences."""
    if n <= m:
        return 0.0
    ks = np.arange(m + 1, n + 1)
    a2 = w.alpha.values(ks) ** 2
    return float(np.max(w.sigma.values(ks) * np.sqrt(np.cumsum(a2))))


# ---------------------------------------------------------------------------
# level partition
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LevelPartition:
    """Dyadic classes ``k`` with ``2**(-k-1) < sigma <= 2**-k`` and ``sigma_hat = 2**-k``.

    For level weights ``classes`` is indexed by depth up to ``n_levels - 1``;
    for node weights it is indexed by node id.
    """

    weights: WeightSystem
    classes: np.ndarray
    sigma_hat: np.ndarray
    hat_weights: WeightSystem = field(repr=False)

    def class_of(self, tree: Tree, nodes=None) -> np.ndarray:
        if self.weights.mode == NODE:
            return self.classes if nodes is None else self.classes[np.asarray(nodes)]
        depths = tree.depths() if nodes is None else np.array(
            [tree.depth(int(v)) for v in np.atleast_1d(nodes)], dtype=np.int64)
        if depths.size and depths.max() >= self.classes.size:
            raise WeightError("partition was built for fewer levels than this tree has")
        return self.classes[depths]

    def branch_violations(self, tree: Tree) -> list[str]:
        """Each class meets every branch in an order interval, classes grow
        downwards, and nothing sits above the root's class."""
        cls = self.class_of(tree)
        par = tree.parents()
        kids = np.flatnonzero(par >= 0)
        out = []
        bad = kids[cls[kids] < cls[par[kids]]]
        if bad.size:
            out.append(f"class decreases from node {int(par[bad[0]])} to {int(bad[0])}")
        if cls.size and cls.min() < cls[0]:
            out.append("a class below the root's class is occupied")
        return out


def build_level_partition(w: WeightSystem, n_levels: int | None = None) -> LevelPartition:
    if w.mode == NODE:
        sig = w.sigma
    else:
        if n_levels is None:
            raise ValueError("level weights need the number of levels to tabulate")
        sig = w.sigma.values(np.arange(n_levels))
    k = dyadic_class(sig)
    return LevelPartition(w, k, 2.0 ** -k.astype(np.float64), dyadic_weights(w))


# ---------------------------------------------------------------------------
# whole-tree matrices (explicit trees)
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TreeTables:
    """Ancestor tables of an explicit tree, shared by all matrix computations.

    ``anc[s, a]``  a ⪯ s;
    ``S[s, a]``    sum of alpha^2 over (a, s] (0 unless a ⪯ s);
    ``D[s, a]``    d(a, s) for a ⪯ s;
    ``meet[t, s]`` t ∧ s;
    ``P[v]``       sum of alpha^2 over [root, v].
    """

    anc: np.ndarray
    S: np.ndarray
    D: np.ndarray
    meet: np.ndarray
    P: np.ndarray
    sigma: np.ndarray


def tree_tables(tree: Tree, w: WeightSystem) -> TreeTables:
    n = tree.n_nodes
    if n > MATRIX_CAP:
        raise TreeError(f"dense tables are limited to {MATRIX_CAP} nodes")
    par = tree.parents()
    a2 = w.alpha_at(tree) ** 2
    sig = np.asarray(w.sigma_at(tree), dtype=np.float64)
    anc = np.zeros((n, n), dtype=bool)
    S = np.zeros((n, n))
    D = np.zeros((n, n))
    meet = np.zeros((n, n), dtype=np.int64)
    P = np.zeros(n)
    anc[0, 0] = True
    P[0] = a2[0]
    for s in tree.bfs_order()[1:]:
        p = par[s]
        anc[s] = anc[p]
        anc[s, s] = True
        S[s] = np.where(anc[p], S[p] + a2[s], 0.0)
        D[s] = np.where(anc[p], np.maximum(D[p], sig[s] * np.sqrt(S[s])), 0.0)
        P[s] = P[p] + a2[s]
    # the meet of s with u is s when u lies below s, else the meet of parent(s) with u
    for s in tree.bfs_order()[1:]:
        meet[s] = np.where(anc[:, s], s, meet[par[s]])
    return TreeTables(anc, S, D, meet, P, sig)


def distance_matrix(tree: Tree, w: WeightSystem, metric: str = "d",
                    tables: TreeTables | None = None) -> np.ndarray:
    """All pairwise distances of an explicit (or materializable) tree."""
    if metric == "dhat":
        return distance_matrix(tree, dyadic_weights(w), "d")
    if not tree.is_explicit:
        tree = tree.materialize()
    tb = tables or tree_tables(tree, w)
    M = tb.meet
    if metric == "d":
        half = np.take_along_axis(tb.D, M, axis=1)
        return half + half.T
    if metric == "dX":
        tail = np.take_along_axis(tb.S, M, axis=1)  # S(t ∧ s, t) at [t, s]
        sg = tb.sigma
        diff = sg[:, None] - sg[None, :]
        val = diff * diff * tb.P[M] + (sg * sg)[:, None] * tail + (sg * sg)[None, :] * tail.T
        return np.sqrt(np.maximum(val, 0.0))
    raise ValueError(f"unknown metric {metric!r}")


# ---------------------------------------------------------------------------
# chains
# ---------------------------------------------------------------------------

class ChainMetric:
    """Fast distances on the chain ``0 - 1 - ... - n``.

    Balls of ``d`` are intervals because ``d(k, l)`` grows in ``l`` and
    shrinks in ``k``; :meth:`first_reach` exploits this.
    """

    def __init__(self, tree: Tree, w: WeightSystem):
        if tree.kind != CHAIN:
            if not tree.is_explicit or np.any(np.diff(tree.parents()) != 1):
                raise TreeError("ChainMetric needs a chain")
        self.n = tree.height
        nodes = np.arange(self.n + 1)
        self.a2 = np.asarray(w.alpha_at(tree, nodes), dtype=np.float64) ** 2
        self.sigma = np.asarray(w.sigma_at(tree, nodes), dtype=np.float64)
        self.prefix = np.cumsum(self.a2)  # sum over [0, k]
        self._hint = 64

    @property
    def size(self) -> int:
        return self.n + 1

    def d(self, k: int, l: int) -> float:
        if k > l:
            k, l = l, k
        if k == l:
            return 0.0
        return float(np.max(self.sigma[k + 1:l + 1] * np.sqrt(np.cumsum(self.a2[k + 1:l + 1]))))

    def diameter(self) -> float:
        return self.d(0, self.n)

    def first_reach(self, k: int, eps: float) -> int:
        """Smallest ``l > k`` with ``d(k, l) >= eps``; ``n + 1`` if there is none."""
        start = k + 1
        acc = 0.0
        chunk = max(self._hint, 16)
        while start <= self.n:
            stop = min(self.n + 1, start + chunk)
            c = acc + np.cumsum(self.a2[start:stop])
            hit = np.flatnonzero(self.sigma[start:stop] * np.sqrt(c) >= eps)
            if hit.size:
                l = start + int(hit[0])
                self._hint = max(16, 2 * (l - k))
                return l
            acc = float(c[-1])
            start = stop
            chunk *= 2
        return self.n + 1

    def dX_from(self, k: int) -> np.ndarray:
        """``d_X(k, l)`` for every node ``l``."""
        sg = self.sigma
        out = np.empty(self.n + 1)
        # l > k: meet is k
        right = np.cumsum(self.a2[k + 1:])
        dr = sg[k] - sg[k + 1:]
        out[k + 1:] = np.sqrt(dr * dr * self.prefix[k] + sg[k + 1:] ** 2 * right)
        # l < k: meet is l; S(l, k) sums (l, k]
        if k > 0:
            back = np.cumsum(self.a2[1:k + 1][::-1])[::-1]  # back[j] = sum over [j+1, k]
            dl = sg[:k] - sg[k]
            out[:k] = np.sqrt(dl * dl * self.prefix[:k] + sg[k] ** 2 * back)
        out[k] = 0.0
        return out

    def d_from(self, k: int) -> np.ndarray:
        """``d(k, l)`` for every node ``l`` (quadratic on the left side; small chains)."""
        out = np.zeros(self.n + 1)
        if k < self.n:
            out[k + 1:] = np.maximum.accumulate(
                self.sigma[k + 1:] * np.sqrt(np.cumsum(self.a2[k + 1:])))
        for l in range(k):
            out[l] = self.d(l, k)
        return out


# ---------------------------------------------------------------------------
# axiom checks
# ---------------------------------------------------------------------------

@dataclass
class MetricReport:
    n_points: int
    asymmetric_pairs: int = 0
    nonzero_diagonal: int = 0
    triangle_violations: int = 0
    zero_offdiagonal_pairs: int = 0
    worst_triangle_excess: float = 0.0

    @property
    def is_pseudometric(self) -> bool:
        return self.asymmetric_pairs == 0 and self.nonzero_diagonal == 0 and self.triangle_violations == 0

    @property
    def is_metric(self) -> bool:
        return self.is_pseudometric and self.zero_offdiagonal_pairs == 0

    @property
    def ok(self) -> bool:
        return self.is_pseudometric


def check_metric_axioms(D: np.ndarray, tolerance: float = 1e-9) -> MetricReport:
    """Symmetry, zero diagonal, triangle inequality (relative ``tolerance``).

    Distinct points at distance zero are counted, not treated as errors: such
    a distance is a pseudometric.
    """
    D = np.asarray(D, dtype=np.float64)
    n = D.shape[0]
    scale = max(float(np.max(np.abs(D))) if n else 0.0, np.finfo(float).tiny)
    rep = MetricReport(n)
    asym = np.abs(D - D.T) > tolerance * np.maximum(np.abs(D), np.abs(D.T))
    rep.asymmetric_pairs = int(np.count_nonzero(np.triu(asym, 1)))
    rep.nonzero_diagonal = int(np.count_nonzero(np.abs(np.diag(D)) > tolerance * scale))
    off = ~np.eye(n, dtype=bool)
    rep.zero_offdiagonal_pairs = int(np.count_nonzero((D <= 0) & off) // 2)
    worst = 0.0
    count = 0
    for k in range(n):
        bound = D[:, k, None] + D[None, k, :]
        excess = D - bound
        slack = tolerance * np.maximum(bound, np.abs(D))
        bad = excess > slack
        count += int(np.count_nonzero(bad))
        if bad.any():
            worst = max(worst, float(np.max(excess[bad])))
    rep.triangle_violations = count
    rep.worst_triangle_excess = worst
    return rep
