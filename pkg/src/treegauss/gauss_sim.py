"""Sampling ``X_t = sigma(t) * sum_{v ⪯ t} alpha(v) xi_v`` and its relatives.

The normal ``xi_v`` of node ``v`` in replica ``r`` is fixed by
``(seed, r, v)`` (see :mod:`treegauss.rng`), so a deeper truncation extends a
sample instead of redrawing it, and results do not depend on traversal order,
chunking or thread count.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng as trng
from .tree_core import BINARY, CHAIN, Tree, TreeError
from .tree_metrics import build_level_partition, dyadic_weights
from .weights import WeightError, WeightSystem

DEFAULT_BINARY_CAP = 24
STATISTICS = ("abs", "max", "leaf_max")
_CHUNK_LOG2 = 20
_BATCH_ENTRIES = 1 << 22
EZETA = 1.0 / math.sqrt(math.pi)  # E max of two independent standard normals
SUDAKOV_C = 0.64


def worker_count(jobs: int) -> int:
    env = os.environ.get("TREEGAUSS_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, jobs))


# ---------------------------------------------------------------------------
# fields on explicit trees and chains
# ---------------------------------------------------------------------------

def _level_slices(tree: Tree) -> list[np.ndarray]:
    order = tree.bfs_order()
    depth = tree.depths()[order]
    return np.split(order, np.flatnonzero(np.diff(depth)) + 1)


def branch_sums(tree: Tree, alpha: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """``sum_{v ⪯ t} alpha(v) xi_v`` for every node; ``xi`` may carry a leading batch axis."""
    if tree.kind == CHAIN:
        return np.cumsum(alpha * xi, axis=-1)
    par = tree.parents()
    out = np.empty_like(xi)
    levels = _level_slices(tree)
    out[..., 0] = alpha[0] * xi[..., 0]
    for lv in levels[1:]:
        out[..., lv] = out[..., par[lv]] + alpha[lv] * xi[..., lv]
    return out


def _check_tree(tree: Tree, binary_cap: int) -> None:
    if tree.kind == BINARY and tree.height > binary_cap:
        raise TreeError(f"binary depth {tree.height} exceeds the simulation cap {binary_cap}")


def sample_field(tree: Tree, w: WeightSystem, seed: int, replica: int) -> np.ndarray:
    """All values ``X_t`` of one replica (explicit trees, chains, small binary trees)."""
    xi = trng.node_normals(seed, replica, tree.n_nodes)
    return w.sigma_at(tree) * branch_sums(tree, w.alpha_at(tree), xi)


def _stat_values(x: np.ndarray, statistic: str) -> np.ndarray:
    return np.abs(x) if statistic == "abs" else x


def sample_sup(tree: Tree, w: WeightSystem, seed: int, replica: int, statistic: str = "abs",
               binary_cap: int = DEFAULT_BINARY_CAP) -> tuple[float, int]:
    """One draw of ``sup |X_t|`` (or ``sup X_t``) with its argmax node.

    Ties go to the smaller depth, then to the smaller node id (for binary trees
    the smaller heap index, i.e. the lexicographically smaller bit path).
    """
    _check_tree(tree, binary_cap)
    if tree.kind == BINARY and tree.height > 12:
        vals, where = _binary_level_stats(tree.height, w, seed, replica, statistic)
        k = int(np.argmax(vals))
        return float(vals[k]), int(where[k])
    x = sample_field(tree, w, seed, replica)
    vals = _stat_values(x, statistic)
    nodes = tree.leaves() if statistic == "leaf_max" else tree.bfs_order()
    vals = vals[nodes]
    best = vals.max()
    cand = nodes[vals == best]
    depth = tree.depths()[cand]
    cand = cand[depth == depth.min()]
    return float(best), int(cand.min())


def _binary_level_stats(depth: int, w: WeightSystem, seed: int, replica: int,
                        statistic: str, chunk_log2: int = _CHUNK_LOG2) -> tuple[np.ndarray, np.ndarray]:
    """Per-level maxima of the statistic on a full binary tree, streamed by subtree."""
    if not w.is_homogeneous:
        raise WeightError("streaming binary simulation needs level weights")
    a = w.alpha_levels(depth)
    s = w.sigma_levels(depth)
    vals = np.full(depth + 1, -np.inf)
    where = np.zeros(depth + 1, dtype=np.int64)

    def record(k, sums, first):
        v = np.abs(sums) if statistic == "abs" else sums
        i = int(np.argmax(v))
        val = s[k] * float(v[i])
        if val > vals[k]:
            vals[k] = val
            where[k] = first + i

    top = max(0, depth - chunk_log2)
    sums = a[0] * trng.normals(seed, replica, 0, 1)
    record(0, sums, 0)
    for k in range(1, top + 1):
        first = (1 << k) - 1
        sums = np.repeat(sums, 2) + a[k] * trng.normals(seed, replica, first, 1 << k)
        record(k, sums, first)
    for j in range(1 << top):
        sub = sums[j:j + 1]
        for k in range(top + 1, depth + 1):
            width = 1 << (k - top)
            first = (1 << k) - 1 + j * width
            sub = np.repeat(sub, 2) + a[k] * trng.normals(seed, replica, first, width)
            record(k, sub, first)
    if statistic == "leaf_max":
        vals[:-1] = -np.inf
    return vals, where


def level_stats(tree: Tree, w: WeightSystem, seed: int, replica: int, statistic: str = "abs") -> np.ndarray:
    """Maximum of the statistic over each depth level of one replica."""
    if tree.kind == BINARY and tree.height > 12:
        return _binary_level_stats(tree.height, w, seed, replica, statistic)[0]
    x = _stat_values(sample_field(tree, w, seed, replica), statistic)
    return _per_level_max(tree, x[None, :], statistic)[0]


def _per_level_max(tree: Tree, vals: np.ndarray, statistic: str) -> np.ndarray:
    depth = tree.depths()
    out = np.full((vals.shape[0], tree.height + 1), -np.inf)
    mask = np.ones(tree.n_nodes, dtype=bool)
    if statistic == "leaf_max":
        mask[:] = False
        mask[tree.leaves()] = True
    if tree.kind == CHAIN:
        out[:, :] = np.where(mask, vals, -np.inf)
        return out
    for k in range(tree.height + 1):
        sel = (depth == k) & mask
        if sel.any():
            out[:, k] = vals[:, sel].max(axis=1)
    return out


# ---------------------------------------------------------------------------
# Monte Carlo estimation
# ---------------------------------------------------------------------------

@dataclass
class SimConfig:
    tree: Tree
    weights: WeightSystem
    replicas: int = 100
    seed: int = trng.DEFAULT_SEED
    depths: list[int] | None = None
    statistic: str = "abs"
    keep_raw: bool = False
    binary_cap: int = DEFAULT_BINARY_CAP

    def __post_init__(self):
        if self.replicas < 1:
            raise ValueError("replicas must be at least 1")
        if self.statistic not in STATISTICS:
            raise ValueError(f"statistic must be one of {STATISTICS}")
        _check_tree(self.tree, self.binary_cap)
        if self.depths is None:
            self.depths = [self.tree.height]
        self.depths = sorted(int(d) for d in self.depths)
        if self.depths[0] < 0 or self.depths[-1] > self.tree.height:
            raise TreeError(f"depths must lie in [0, {self.tree.height}]")
        if self.statistic == "leaf_max" and self.depths != [self.tree.height]:
            raise ValueError("leaf_max is defined for the full tree only")


@dataclass
class SimEstimate:
    depths: list[int]
    mean: np.ndarray
    stderr: np.ndarray
    replicas: int
    seed: int
    statistic: str = "abs"
    raw: np.ndarray | None = field(default=None, repr=False)

    def rows(self) -> list[dict]:
        return [{"depth": d, "replicas": self.replicas, "mean_sup": float(m),
                 "stderr": float(e), "seed": self.seed}
                for d, m, e in zip(self.depths, self.mean, self.stderr)]


def _replica_sups(cfg: SimConfig, replicas: range) -> np.ndarray:
    """Rows: replicas; columns: the requested truncation depths."""
    tree, w = cfg.tree, cfg.weights
    cols = np.asarray(cfg.depths)
    if tree.kind == BINARY and tree.height > 12:
        out = np.empty((len(replicas), cols.size))
        for i, r in enumerate(replicas):
            lv = _binary_level_stats(tree.height, w, cfg.seed, r, cfg.statistic)[0]
            out[i] = np.maximum.accumulate(lv)[cols]
        return out
    alpha = w.alpha_at(tree)
    sigma = w.sigma_at(tree)
    batch = max(1, _BATCH_ENTRIES // tree.n_nodes)
    out = np.empty((len(replicas), cols.size))
    for lo in range(0, len(replicas), batch):
        reps = replicas[lo:lo + batch]
        xi = trng.normals_batch(cfg.seed, reps, 0, tree.n_nodes)
        x = sigma * branch_sums(tree, alpha, xi)
        lv = _per_level_max(tree, _stat_values(x, cfg.statistic), cfg.statistic)
        out[lo:lo + len(reps)] = np.maximum.accumulate(lv, axis=1)[:, cols]
    return out


def estimate_esup(cfg: SimConfig) -> SimEstimate:
    """Mean and standard error of the supremum over replicas ``0 .. replicas-1``."""
    R = cfg.replicas
    n_workers = worker_count(R)
    bounds = np.linspace(0, R, n_workers + 1).astype(int)
    parts = [range(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
    if n_workers == 1:
        blocks = [_replica_sups(cfg, parts[0])]
    else:
        with ThreadPoolExecutor(n_workers) as pool:
            blocks = list(pool.map(lambda p: _replica_sups(cfg, p), parts))
    raw = np.concatenate(blocks, axis=0)  # replica order regardless of schedule
    mean = raw.mean(axis=0)
    stderr = raw.std(axis=0, ddof=1) / math.sqrt(R) if R > 1 else np.zeros(raw.shape[1])
    return SimEstimate(list(cfg.depths), mean, stderr, R, cfg.seed, cfg.statistic,
                       raw if cfg.keep_raw else None)


# ---------------------------------------------------------------------------
# localization and its identities
# ---------------------------------------------------------------------------

def _classes(tree: Tree, w: WeightSystem) -> np.ndarray:
    part = build_level_partition(w, None if not w.is_homogeneous else tree.height + 1)
    return part.class_of(tree)


def localized_sums(tree: Tree, alpha: np.ndarray, xi: np.ndarray, cls: np.ndarray) -> np.ndarray:
    """Branch sums restarted whenever the dyadic class changes."""
    par = tree.parents()
    out = np.empty_like(xi)
    out[0] = alpha[0] * xi[0]
    for lv in _level_slices(tree)[1:]:
        p = par[lv]
        keep = cls[lv] == cls[p]
        out[lv] = np.where(keep, out[p], 0.0) + alpha[lv] * xi[lv]
    return out


def sample_localized(tree: Tree, w: WeightSystem, seed: int, replica: int) -> np.ndarray:
    """``Y_t = sigma(t) * sum of alpha(v) xi_v over v ⪯ t in the class of t``."""
    if tree.kind == BINARY and tree.height > 22:
        raise TreeError("localized fields are computed on materializable trees only")
    xi = trng.node_normals(seed, replica, tree.n_nodes)
    return w.sigma_at(tree) * localized_sums(tree, w.alpha_at(tree), xi, _classes(tree, w))


@dataclass
class Residuals:
    xtoy: float       # Y_t vs X_t - sigma(t)/sigma(lam) X_lam, relative
    ytox: float       # X_hat vs the weighted sum of Y_hat over class ends, relative
    sandwich: float   # largest relative excess in |X| <= |X_hat| <= 2|X|


def class_entry_parent(tree: Tree, cls: np.ndarray) -> np.ndarray:
    """For each node, the deepest ancestor in a strictly smaller class (-1 if none)."""
    par = tree.parents()
    lam = np.full(tree.n_nodes, -1, dtype=np.int64)
    for lv in _level_slices(tree)[1:]:
        p = par[lv]
        lam[lv] = np.where(cls[lv] == cls[p], lam[p], p)
    return lam


def _rel(a: np.ndarray, b: np.ndarray, scale: np.ndarray) -> float:
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b) / np.maximum(scale, 1e-300)))


def decomposition_residuals(tree: Tree, w: WeightSystem, seed: int, replica: int) -> Residuals:
    if not tree.is_explicit:
        tree = tree.materialize()
    xi = trng.node_normals(seed, replica, tree.n_nodes)
    alpha = w.alpha_at(tree)
    sigma = w.sigma_at(tree)
    cls = _classes(tree, w)
    S = branch_sums(tree, alpha, xi)
    X = sigma * S
    Y = sigma * localized_sums(tree, alpha, xi, cls)

    lam = class_entry_parent(tree, cls)
    out_of_root_class = np.flatnonzero(lam >= 0)
    t, lt = out_of_root_class, lam[out_of_root_class]
    pred = X[t] - sigma[t] / sigma[lt] * X[lt]
    xtoy = _rel(Y[t], pred, np.maximum.reduce([np.abs(X[t]), np.abs(sigma[t] / sigma[lt] * X[lt]),
                                               np.abs(Y[t])]))

    # dyadic weights: accumulate 2**l * Y_hat at the last node of each finished class
    hat = dyadic_weights(w).sigma_at(tree)
    Xh = hat * S
    Yh = hat * localized_sums(tree, alpha, xi, cls)
    par = tree.parents()
    acc = np.zeros(tree.n_nodes)
    for lv in _level_slices(tree)[1:]:
        p = par[lv]
        acc[lv] = np.where(cls[lv] == cls[p], acc[p], acc[p] + np.ldexp(Yh[p], cls[p]))
    recon = np.ldexp(acc, -cls) + Yh
    terms = np.ldexp(np.abs(acc), -cls) + np.abs(Yh)
    ytox = _rel(Xh, recon, np.maximum(terms, np.abs(Xh)))

    ax, axh = np.abs(X), np.abs(Xh)
    scale = np.maximum(ax, 1e-300)
    sandwich = float(max(0.0, np.max((ax - axh) / scale), np.max((axh - 2 * ax) / scale)))
    return Residuals(xtoy, ytox, sandwich)


# ---------------------------------------------------------------------------
# lower-bound constructions
# ---------------------------------------------------------------------------

def greedy_branch_statistic(tree: Tree, w: WeightSystem, seed: int, replica: int) -> float:
    """``max_n sigma_n (alpha_0 xi_root + sum_{j<=n} alpha_j zeta_j)`` along the greedy branch.

    ``zeta_{j}`` is the larger normal of the two children of the current node,
    and the branch moves to that child.
    """
    if tree.kind != BINARY:
        if not tree.is_explicit or any(len(tree.children(v)) not in (0, 2) for v in range(tree.n_nodes)):
            raise TreeError("the greedy branch statistic needs a binary tree")
    if not w.is_homogeneous:
        raise WeightError("the greedy branch statistic needs level weights")
    n = tree.height
    a = w.alpha_levels(n)
    s = w.sigma_levels(n)
    h = 0
    total = a[0] * float(trng.normals(seed, replica, 0, 1)[0])
    best = s[0] * total
    for k in range(1, n + 1):
        kids = tree.children(h)
        if tree.kind == BINARY:
            z = trng.normals(seed, replica, 2 * h + 1, 2)
        else:
            z = trng.node_normals(seed, replica, tree.n_nodes)[kids]
        i = int(np.argmax(z))
        h = kids[i]
        total += a[k] * float(z[i])
        best = max(best, s[k] * total)
    return float(best)


def level_increment_lower_bound(w: WeightSystem, m: int, n: int) -> float:
    """``0.64 sqrt(log 2) sqrt(m) sigma_n (sum_{m<=k<=n} alpha_k^2)^{1/2}``, a floor for ``2 E sup|X|``."""
    if m < 0 or m > n:
        raise ValueError("need 0 <= m <= n")
    if m == 0:
        return 0.0
    ks = np.arange(m, n + 1)
    la = w.alpha.log_values(ks)
    ls = float(w.sigma.log_values(np.array([n]))[0])
    # log-domain sum so that alpha_k = 2**k style weights do not overflow
    log_sum = float(np.logaddexp.reduce(2 * la)) if np.isfinite(la).any() else -np.inf
    return SUDAKOV_C * math.sqrt(math.log(2.0)) * math.sqrt(m) * math.exp(ls + 0.5 * log_sum)
