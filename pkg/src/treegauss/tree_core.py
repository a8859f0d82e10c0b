"""Rooted trees: explicit arenas plus implicit chains and binary trees.

Nodes are plain integers.  For explicit trees they are the arena indices
``0..n-1``; for chains node ``k`` sits at depth ``k``; for binary trees a node
is its heap index ``h`` (root 0, children ``2h+1`` and ``2h+2``), which is in
bijection with its root-to-node bit path.  The root is always node 0.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

DEFAULT_MAX_EXPLICIT_DEPTH = 22

EXPLICIT = "explicit"
CHAIN = "chain"
BINARY = "binary"


class TreeError(ValueError):
    pass


def _concat_ranges(starts: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Concatenation of ``arange(s, s + l)`` over the pairs, vectorized."""
    total = int(lengths.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    offsets = np.cumsum(lengths) - lengths
    return np.repeat(starts - offsets, lengths) + np.arange(total, dtype=np.int64)


class Tree:
    """Immutable rooted tree.

    Use :func:`build_chain`, :func:`build_binary`, :func:`build_star`,
    :meth:`Tree.from_parents` or :func:`load_tree_json` rather than the
    constructor.
    """

    __slots__ = ("kind", "height", "_parent", "_depth", "_order", "_child_ptr",
                 "_child_idx", "labels", "_n")

    def __init__(self, kind: str, height: int, parent: np.ndarray | None = None,
                 labels: np.ndarray | None = None):
        self.kind = kind
        self.height = int(height)
        self.labels = labels
        self._parent = None
        self._depth = None
        self._order = None
        self._child_ptr = None
        self._child_idx = None
        if kind == CHAIN:
            self._n = self.height + 1
        elif kind == BINARY:
            self._n = (1 << (self.height + 1)) - 1
        elif kind == EXPLICIT:
            if parent is None:
                raise TreeError("explicit tree needs a parent array")
            self._init_explicit(np.asarray(parent, dtype=np.int64))
        else:
            raise TreeError(f"unknown tree kind {kind!r}")

    # -- construction -----------------------------------------------------
    def _init_explicit(self, parent: np.ndarray) -> None:
        n = parent.shape[0]
        if n == 0:
            raise TreeError("a tree needs at least one node")
        roots = np.flatnonzero(parent < 0)
        if roots.size != 1 or roots[0] != 0:
            raise TreeError("exactly one root is required and it must be node 0")
        if np.any(parent >= n):
            raise TreeError("parent index out of range")
        kids = np.flatnonzero(parent >= 0)
        order = np.argsort(parent[kids], kind="stable")
        child_idx = kids[order]
        counts = np.bincount(parent[kids], minlength=n)
        child_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=child_ptr[1:])

        depth = np.full(n, -1, dtype=np.int64)
        depth[0] = 0
        bfs = np.empty(n, dtype=np.int64)
        bfs[0] = 0
        head, tail = 0, 1
        while head < tail:
            # expand a whole frontier at once
            frontier = bfs[head:tail]
            head = tail
            nxt = child_idx[_concat_ranges(child_ptr[frontier], counts[frontier])]
            if nxt.size == 0:
                break
            if np.any(depth[nxt] >= 0):
                raise TreeError("parent links contain a cycle")
            depth[nxt] = depth[parent[nxt]] + 1
            bfs[tail:tail + nxt.size] = nxt
            tail += nxt.size
        if tail != n:
            raise TreeError("parent links contain a cycle or unreachable nodes")
        self._n = n
        self._parent = parent
        self._depth = depth
        self._order = bfs
        self._child_ptr = child_ptr
        self._child_idx = child_idx
        self.height = int(depth.max())

    @classmethod
    def from_parents(cls, parents: Sequence[int | None]) -> "Tree":
        """Explicit tree from ``parents[i]`` (``None`` or -1 marks the root)."""
        arr = np.array([-1 if p is None else int(p) for p in parents], dtype=np.int64)
        return cls(EXPLICIT, 0, arr)

    # -- basic queries ----------------------------------------------------
    @property
    def n_nodes(self) -> int:
        return self._n

    @property
    def root(self) -> int:
        return 0

    @property
    def is_explicit(self) -> bool:
        return self.kind == EXPLICIT

    def __len__(self) -> int:
        return self._n

    def __repr__(self) -> str:
        return f"Tree(kind={self.kind!r}, height={self.height}, n_nodes={self._n})"

    def _check(self, t: int) -> int:
        t = int(t)
        if not 0 <= t < self._n:
            raise TreeError(f"node {t} does not belong to {self!r}")
        return t

    def parent(self, t: int) -> int | None:
        t = self._check(t)
        if t == 0:
            return None
        if self.kind == CHAIN:
            return t - 1
        if self.kind == BINARY:
            return (t - 1) // 2
        return int(self._parent[t])

    def children(self, t: int) -> list[int]:
        t = self._check(t)
        if self.kind == CHAIN:
            return [t + 1] if t < self.height else []
        if self.kind == BINARY:
            return [2 * t + 1, 2 * t + 2] if self.depth(t) < self.height else []
        return self._child_idx[self._child_ptr[t]:self._child_ptr[t + 1]].tolist()

    def depth(self, t: int) -> int:
        t = self._check(t)
        if self.kind == CHAIN:
            return t
        if self.kind == BINARY:
            return (t + 1).bit_length() - 1
        return int(self._depth[t])

    def level(self, k: int) -> np.ndarray:
        """Node ids at depth ``k`` in increasing order."""
        if not 0 <= k <= self.height:
            return np.empty(0, dtype=np.int64)
        if self.kind == CHAIN:
            return np.array([k], dtype=np.int64)
        if self.kind == BINARY:
            return np.arange((1 << k) - 1, (1 << (k + 1)) - 1, dtype=np.int64)
        nodes = self._order[self._depth[self._order] == k]
        return np.sort(nodes)

    def is_leaf(self, t: int) -> bool:
        return not self.children(t)

    def leaves(self) -> np.ndarray:
        if self.kind == EXPLICIT:
            return np.flatnonzero(np.diff(self._child_ptr) == 0)
        return self.level(self.height)

    # -- materialization --------------------------------------------------
    def parents(self, max_depth: int = DEFAULT_MAX_EXPLICIT_DEPTH) -> np.ndarray:
        """Parent array (root gets -1).  Binary trees above ``max_depth`` refuse."""
        if self._parent is not None:
            return self._parent
        self._guard(max_depth)
        idx = np.arange(self._n, dtype=np.int64)
        if self.kind == CHAIN:
            par = idx - 1
        else:
            par = (idx - 1) // 2
        par[0] = -1
        return par

    def depths(self, max_depth: int = DEFAULT_MAX_EXPLICIT_DEPTH) -> np.ndarray:
        if self._depth is not None:
            return self._depth
        self._guard(max_depth)
        idx = np.arange(self._n, dtype=np.int64)
        if self.kind == CHAIN:
            return idx
        # floor(log2(h + 1)) without float rounding trouble
        return np.frexp((idx + 1).astype(np.float64))[1].astype(np.int64) - 1

    def bfs_order(self, max_depth: int = DEFAULT_MAX_EXPLICIT_DEPTH) -> np.ndarray:
        """Node ids with every parent listed before its children."""
        if self._order is not None:
            return self._order
        self._guard(max_depth)
        return np.arange(self._n, dtype=np.int64)

    def _guard(self, max_depth: int) -> None:
        if self.kind == BINARY and self.height > max_depth:
            raise TreeError(
                f"materializing a binary tree of depth {self.height} exceeds the cap {max_depth}")

    def materialize(self, max_depth: int = DEFAULT_MAX_EXPLICIT_DEPTH) -> "Tree":
        """Explicit copy with identical node ids."""
        if self.kind == EXPLICIT:
            return self
        return Tree(EXPLICIT, 0, self.parents(max_depth).copy())

    # -- order structure --------------------------------------------------
    def ancestors(self, t: int) -> Iterator[int]:
        """Iterate over ``[root, t]`` from the root down."""
        yield from self.path(t).tolist()

    def path(self, t: int) -> np.ndarray:
        t = self._check(t)
        if self.kind == CHAIN:
            return np.arange(t + 1, dtype=np.int64)
        if self.kind == BINARY:
            i = t + 1
            d = i.bit_length() - 1
            return np.array([(i >> (d - k)) - 1 for k in range(d + 1)], dtype=np.int64)
        out = []
        while t >= 0:
            out.append(t)
            t = int(self._parent[t])
        return np.array(out[::-1], dtype=np.int64)

    def ancestor_at(self, t: int, k: int) -> int:
        """The ancestor of ``t`` at depth ``k`` (``k <= depth(t)``)."""
        t, d = int(t), self.depth(t)
        if not 0 <= k <= d:
            raise TreeError(f"depth {k} is not on the branch of node {t}")
        if self.kind == CHAIN:
            return k
        if self.kind == BINARY:
            return ((t + 1) >> (d - k)) - 1
        for _ in range(d - k):
            t = int(self._parent[t])
        return t

    def precedes(self, t: int, s: int) -> bool:
        """``t ⪯ s``: t lies on the branch from the root to s."""
        dt, ds = self.depth(t), self.depth(s)
        return dt <= ds and self.ancestor_at(s, dt) == t

    def is_comparable(self, t: int, s: int) -> bool:
        return self.precedes(t, s) or self.precedes(s, t)

    def meet(self, t: int, s: int) -> int:
        """Deepest common ancestor ``t ∧ s``."""
        t, s = int(t), int(s)
        dt, ds = self.depth(t), self.depth(s)
        if self.kind == CHAIN:
            return min(t, s)
        if self.kind == BINARY:
            i, j = t + 1, s + 1
            if dt > ds:
                i >>= dt - ds
            else:
                j >>= ds - dt
            # common prefix of the two bit paths
            shift = (i ^ j).bit_length()
            return (i >> shift) - 1
        while dt > ds:
            t = int(self._parent[t]); dt -= 1
        while ds > dt:
            s = int(self._parent[s]); ds -= 1
        while t != s:
            t = int(self._parent[t])
            s = int(self._parent[s])
        return t

    def order_interval(self, t: int, s: int, closed: bool = True) -> np.ndarray:
        """``[t, s]`` (or ``(t, s]`` with ``closed=False``) from t down to s."""
        if not self.precedes(t, s):
            raise TreeError(f"node {t} does not precede node {s}")
        p = self.path(s)
        start = self.depth(t) + (0 if closed else 1)
        return p[start:]

    # -- binary addressing ------------------------------------------------
    def bit_path(self, t: int) -> str:
        if self.kind != BINARY:
            raise TreeError("bit paths exist only for binary trees")
        t = self._check(t)
        return bin(t + 1)[3:]

    def node_from_bits(self, bits: str) -> int:
        if self.kind != BINARY:
            raise TreeError("bit paths exist only for binary trees")
        if len(bits) > self.height:
            raise TreeError("bit path longer than the tree height")
        return int("1" + bits, 2) - 1

    # -- serialization ----------------------------------------------------
    def to_json_dict(self) -> dict:
        if self.kind == CHAIN:
            return {"kind": CHAIN, "depth": self.height}
        if self.kind == BINARY:
            return {"kind": BINARY, "depth": self.height}
        labels = self.labels if self.labels is not None else np.arange(self._n)
        nodes = [{"id": int(labels[i]),
                  "parent": None if self._parent[i] < 0 else int(labels[self._parent[i]])}
                 for i in range(self._n)]
        return {"nodes": nodes}


def build_chain(depth: int) -> Tree:
    """The chain ``0 - 1 - ... - depth``."""
    if depth < 0:
        raise TreeError("depth must be non-negative")
    return Tree(CHAIN, depth)


def build_binary(depth: int, materialize: bool = False,
                 max_depth: int = DEFAULT_MAX_EXPLICIT_DEPTH) -> Tree:
    """Full binary tree of the given depth (``2**(depth+1) - 1`` nodes).

    The result is implicit (heap-indexed, nothing stored) unless
    ``materialize`` is set, which is refused above ``max_depth``.
    """
    if depth < 0:
        raise TreeError("depth must be non-negative")
    tree = Tree(BINARY, depth)
    if materialize:
        return tree.materialize(max_depth)
    return tree


def build_star(leaves: int) -> Tree:
    """Root 0 with ``leaves`` children 1..leaves."""
    if leaves < 0:
        raise TreeError("leaf count must be non-negative")
    return Tree.from_parents([None] + [0] * leaves)


def random_tree(n: int, rng: np.random.Generator, max_children: int | None = None) -> Tree:
    """Random recursive tree: node i attaches to a uniform earlier node."""
    if n < 1:
        raise TreeError("n must be positive")
    parents = [-1]
    counts = [0]
    for i in range(1, n):
        while True:
            p = int(rng.integers(0, i))
            if max_children is None or counts[p] < max_children:
                break
        parents.append(p)
        counts[p] += 1
        counts.append(0)
    return Tree(EXPLICIT, 0, np.array(parents, dtype=np.int64))


def tree_from_json_dict(doc: dict) -> Tree:
    """Tree from ``{"nodes": [{"id": 0, "parent": null}, ...]}``.

    Also accepts the generator forms ``{"kind": "chain"|"binary", "depth": n}``
    and ``{"kind": "star", "leaves": n}``.
    """
    kind = doc.get("kind", EXPLICIT)
    if kind == CHAIN:
        return build_chain(int(doc["depth"]))
    if kind == BINARY:
        return build_binary(int(doc["depth"]), materialize=bool(doc.get("materialize", False)))
    if kind == "star":
        return build_star(int(doc["leaves"]))
    if kind != EXPLICIT:
        raise TreeError(f"unknown tree kind {kind!r}")
    nodes = doc.get("nodes")
    if not nodes:
        raise TreeError("explicit tree document needs a non-empty 'nodes' list")
    ids = [int(nd["id"]) for nd in nodes]
    if any(i < 0 for i in ids) or len(set(ids)) != len(ids):
        raise TreeError("node ids must be distinct non-negative integers")
    raw_parent = {int(nd["id"]): nd.get("parent") for nd in nodes}
    roots = [i for i, p in raw_parent.items() if p is None]
    if len(roots) != 1:
        raise TreeError("exactly one node must have parent null")
    # root first, everything else in id order
    ordered = roots + sorted(i for i in ids if i != roots[0])
    index = {label: k for k, label in enumerate(ordered)}
    parent = np.empty(len(ordered), dtype=np.int64)
    for label, k in index.items():
        p = raw_parent[label]
        if p is None:
            parent[k] = -1
        elif int(p) not in index:
            raise TreeError(f"node {label} has unknown parent {p}")
        else:
            parent[k] = index[int(p)]
    return Tree(EXPLICIT, 0, parent, labels=np.array(ordered, dtype=np.int64))


def load_tree_json(path: str | Path) -> Tree:
    return tree_from_json_dict(json.loads(Path(path).read_text()))
