"""Weight systems ``(alpha, sigma)`` on trees.

Homogeneous ("level") weights are sequences indexed by depth and are given by
named families evaluated lazily in log space, so that sequences such as
``k**b * 2**k`` can be combined with ``2**-n`` far beyond the range of a double.
Per-node weights are plain arrays tied to one explicit tree.
"""
from __future__ import annotations

import math
import dataclasses
from dataclasses import dataclass, field
from typing import Any, Callable, ClassVar

import numpy as np

from .tree_core import Tree

ZERO_TOL = 1e-12
MONOTONE_RTOL = 1e-12
DEFAULT_VALIDATE_LEVELS = 4096


class WeightError(ValueError):
    pass


# ---------------------------------------------------------------------------
# asymptotic classes
# ---------------------------------------------------------------------------

def _sgn(x: float) -> int:
    if x > ZERO_TOL:
        return 1
    if x < -ZERO_TOL:
        return -1
    return 0


@dataclass(frozen=True)
class Asym:
    """Growth class ``q**n * n**power * (log n)**logpow * exp(lexp * (log n)**beta)``.

    ``log_base`` stores ``log q``.  Constant factors are ignored, which is all
    that finiteness of the criteria depends on.  ``zero`` marks the null
    sequence.
    """

    log_base: float = 0.0
    power: float = 0.0
    logpow: float = 0.0
    lexp: float = 0.0
    beta: float = 1.0
    zero: bool = False

    def __mul__(self, other: "Asym") -> "Asym":
        if self.zero or other.zero:
            return Asym(zero=True)
        lexp, beta = self.lexp, self.beta
        if _sgn(other.lexp) != 0:
            if _sgn(lexp) == 0 or abs(other.beta - beta) <= ZERO_TOL:
                lexp, beta = lexp + other.lexp, other.beta
            elif other.beta > beta:
                lexp, beta = other.lexp, other.beta
        return Asym(self.log_base + other.log_base, self.power + other.power,
                    self.logpow + other.logpow, lexp, beta)

    def __pow__(self, p: float) -> "Asym":
        if self.zero:
            return self
        return Asym(self.log_base * p, self.power * p, self.logpow * p, self.lexp * p, self.beta)

    def __post_init__(self):
        if abs(self.beta - 1.0) <= ZERO_TOL and self.lexp:
            # exp(c log n) is the power n**c
            object.__setattr__(self, "power", self.power + self.lexp)
            object.__setattr__(self, "lexp", 0.0)
        if self.beta <= 0:
            raise ValueError("beta must be positive")

    def _key(self) -> tuple[int, ...]:
        # exp(c (log n)**beta) outgrows powers for beta > 1 and is slowly
        # varying (between powers and log powers) for beta < 1
        b, c, p, l = _sgn(self.log_base), _sgn(self.lexp), _sgn(self.power), _sgn(self.logpow)
        return (b, c, p, l) if self.beta > 1 else (b, p, c, l)

    def is_bounded(self) -> bool:
        if self.zero:
            return True
        for s in self._key():
            if s:
                return s < 0
        return True

    def trend(self) -> int:
        """+1 eventually increasing, -1 eventually decreasing, 0 constant."""
        if self.zero:
            return 0
        for s in self._key():
            if s:
                return s
        return 0

    def partial_sum(self) -> "Asym | None":
        """Class of ``sum_{k<=n} a_k``; ``None`` when it leaves the family (log log n)."""
        if self.zero:
            return self
        b = _sgn(self.log_base)
        if b > 0:
            return self
        if b < 0:
            return Asym()
        c = _sgn(self.lexp)
        if c != 0 and self.beta > 1:
            if c < 0:
                return Asym()
            # sum ~ a_n * n / (lexp * beta * (log n)**(beta - 1))
            return Asym(0.0, self.power + 1, self.logpow - (self.beta - 1), self.lexp, self.beta)
        p = _sgn(self.power + 1)
        if p > 0:
            return Asym(0.0, self.power + 1, self.logpow, self.lexp, self.beta)
        if p < 0:
            return Asym()
        if c != 0:
            return None
        l = _sgn(self.logpow + 1)
        if l > 0:
            return Asym(0.0, 0.0, self.logpow + 1)
        if l < 0:
            return Asym()
        return None

    def window_ratio_bounded(self) -> bool:
        """Whether ``sup_n sup_{n<=k<=2n} a_k / a_n`` is finite."""
        if self.zero:
            return False
        b = _sgn(self.log_base)
        if b != 0:
            return b < 0
        return not (_sgn(self.lexp) > 0 and self.beta > 1 + ZERO_TOL)


# ---------------------------------------------------------------------------
# sequence families
# ---------------------------------------------------------------------------

_FAMILIES: dict[str, type["Family"]] = {}


def _register(cls):
    _FAMILIES[cls.name] = cls
    return cls


class Family:
    """A non-negative sequence ``k -> a_k`` evaluated in log space."""

    name: ClassVar[str] = ""

    def log_values(self, k: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def values(self, k) -> np.ndarray:
        return np.exp(self.log_values(np.asarray(k, dtype=np.int64)))

    def asymptotic(self) -> Asym | None:
        return None

    def to_dict(self) -> dict:
        d = {"family": self.name}
        for f in dataclasses.fields(self):  # type: ignore[arg-type]
            v = getattr(self, f.name)
            if v is not None:
                d[f.name] = v
        return d

    def __call__(self, k):
        return self.values(k)


def _shifted_log(k: np.ndarray, shift: float, zero: float | None) -> tuple[np.ndarray, np.ndarray]:
    """``log(k + shift)`` plus a mask of entries replaced by the ``zero`` value."""
    base = k.astype(np.float64) + shift
    special = base <= 0
    if special.any() and zero is None:
        raise WeightError("family evaluated at a non-positive base; give a 'zero' value")
    with np.errstate(divide="ignore"):
        return np.log(np.where(special, 1.0, base)), special


def _log_or_neginf(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


@_register
@dataclass(frozen=True)
class Constant(Family):
    c: float = 1.0
    name: ClassVar[str] = "constant"

    def __post_init__(self):
        if self.c < 0:
            raise WeightError("constant must be non-negative")

    def log_values(self, k):
        return np.full(np.shape(k), _log_or_neginf(self.c))

    def asymptotic(self):
        return Asym(zero=self.c == 0)


@_register
@dataclass(frozen=True)
class Power(Family):
    """``c * (k + shift) ** -gamma``; with ``shift=0`` the k=0 term is ``zero``."""

    gamma: float = 1.0
    shift: float = 1.0
    zero: float | None = None
    c: float = 1.0
    name: ClassVar[str] = "power"

    def log_values(self, k):
        lg, special = _shifted_log(k, self.shift, self.zero)
        out = _log_or_neginf(self.c) - self.gamma * lg
        if special.any():
            out = np.where(special, _log_or_neginf(self.zero), out)
        return out

    def asymptotic(self):
        return Asym(zero=self.c == 0, power=-self.gamma)


@_register
@dataclass(frozen=True)
class Geometric(Family):
    """``c * q ** k``."""

    q: float = 0.5
    c: float = 1.0
    name: ClassVar[str] = "geometric"

    def __post_init__(self):
        if self.q <= 0:
            raise WeightError("geometric ratio must be positive")

    def log_values(self, k):
        return _log_or_neginf(self.c) + math.log(self.q) * np.asarray(k, dtype=np.float64)

    def values(self, k):
        # direct powers keep q = 1/2 exactly dyadic
        return self.c * np.power(self.q, np.asarray(k, dtype=np.float64))

    def asymptotic(self):
        return Asym(zero=self.c == 0, log_base=math.log(self.q))


@_register
@dataclass(frozen=True)
class PowerGeometric(Family):
    """``c * (k + shift) ** b * q ** k``; with ``shift=0`` the k=0 term is ``zero``."""

    b: float = 0.0
    q: float = 2.0
    shift: float = 1.0
    zero: float | None = None
    c: float = 1.0
    name: ClassVar[str] = "power_geometric"

    def __post_init__(self):
        if self.q <= 0:
            raise WeightError("geometric ratio must be positive")

    def log_values(self, k):
        lg, special = _shifted_log(k, self.shift, self.zero)
        out = _log_or_neginf(self.c) + self.b * lg + math.log(self.q) * np.asarray(k, dtype=np.float64)
        if special.any():
            out = np.where(special, _log_or_neginf(self.zero), out)
        return out

    def asymptotic(self):
        return Asym(zero=self.c == 0, log_base=math.log(self.q), power=self.b)


@_register
@dataclass(frozen=True)
class LogExp(Family):
    """``exp((log k) ** beta / 2)`` for k >= 1 and 1 at k = 0."""

    beta: float = 1.5
    name: ClassVar[str] = "logexp"

    def log_values(self, k):
        kk = np.maximum(np.asarray(k, dtype=np.float64), 1.0)
        return 0.5 * np.log(kk) ** self.beta

    def asymptotic(self):
        return Asym(lexp=0.5, beta=self.beta)


@_register
@dataclass(frozen=True)
class RegVar(Family):
    """``c * m**power * q**m * (log m)**logpow * exp(lexp * (log m)**beta)``, ``m = max(k, kmin)``.

    The clamp at ``kmin`` keeps the sequence finite and positive near the
    start; it does not change the growth class.
    """

    power: float = 0.0
    q: float = 1.0
    logpow: float = 0.0
    lexp: float = 0.0
    beta: float = 1.0
    kmin: float = 2.0
    c: float = 1.0
    name: ClassVar[str] = "regvar"

    def __post_init__(self):
        if self.kmin < 1 or (self.kmin <= 1 and self.logpow != 0):
            raise WeightError("kmin must be >= 1 (> 1 when logpow != 0)")
        if self.q <= 0:
            raise WeightError("q must be positive")

    def log_values(self, k):
        m = np.maximum(np.asarray(k, dtype=np.float64), self.kmin)
        lm = np.log(m)
        out = _log_or_neginf(self.c) + self.power * lm + math.log(self.q) * m
        if self.logpow:
            out = out + self.logpow * np.log(lm)
        if self.lexp:
            out = out + self.lexp * lm ** self.beta
        return out

    def asymptotic(self):
        return Asym(math.log(self.q), self.power, self.logpow, self.lexp, self.beta,
                    zero=self.c == 0)


@_register
@dataclass(frozen=True)
class Array(Family):
    """Explicit finite sequence; evaluation past its end is an error."""

    values_: tuple = ()
    name: ClassVar[str] = "array"

    def __post_init__(self):
        arr = np.asarray(self.values_, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise WeightError("array family needs a non-empty 1-d sequence")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise WeightError("array values must be finite and non-negative")
        object.__setattr__(self, "values_", tuple(float(x) for x in arr))

    def log_values(self, k):
        k = np.asarray(k, dtype=np.int64)
        arr = np.asarray(self.values_)
        if k.size and (k.min() < 0 or k.max() >= arr.size):
            raise WeightError(f"array family has {arr.size} levels; level {int(k.max())} requested")
        with np.errstate(divide="ignore"):
            return np.log(arr[k])

    @property
    def length(self) -> int:
        return len(self.values_)

    def to_dict(self):
        return {"family": "array", "values": list(self.values_)}


@dataclass(frozen=True)
class Product(Family):
    """Pointwise product of two families."""

    left: Family = field(default_factory=Constant)
    right: Family = field(default_factory=Constant)
    name: ClassVar[str] = "product"

    def log_values(self, k):
        return self.left.log_values(k) + self.right.log_values(k)

    def asymptotic(self):
        a, b = self.left.asymptotic(), self.right.asymptotic()
        if a is None or b is None:
            return None
        return a * b

    def to_dict(self):
        return {"family": "product", "left": self.left.to_dict(), "right": self.right.to_dict()}


@dataclass(frozen=True)
class DyadicCeil(Family):
    """``2**-k`` where ``2**(-k-1) < inner <= 2**-k``: the dyadic upper rounding."""

    inner: Family = field(default_factory=Constant)
    name: ClassVar[str] = "dyadic_ceil"

    def classes(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=np.int64)
        direct = self.inner.values(k)
        tiny = direct < np.finfo(np.float64).tiny
        if tiny.any():
            cls = np.empty(k.shape, dtype=np.int64)
            cls[~tiny] = dyadic_class(direct[~tiny])
            cls[tiny] = dyadic_class_log(self.inner.log_values(k[tiny]))
        else:
            cls = dyadic_class(direct)
        return cls

    def log_values(self, k):
        return -self.classes(k) * math.log(2.0)

    def values(self, k):
        return np.ldexp(1.0, -self.classes(k))

    def asymptotic(self):
        return self.inner.asymptotic()

    def to_dict(self):
        return {"family": "dyadic_ceil", "inner": self.inner.to_dict()}


def family_from_dict(doc: dict) -> Family:
    doc = dict(doc)
    name = doc.pop("family", None)
    if name == "array":
        return Array(tuple(doc["values"]))
    if name == "product":
        return Product(family_from_dict(doc["left"]), family_from_dict(doc["right"]))
    if name == "dyadic_ceil":
        return DyadicCeil(family_from_dict(doc["inner"]))
    if name not in _FAMILIES:
        raise WeightError(f"unknown weight family {name!r}")
    try:
        return _FAMILIES[name](**doc)
    except TypeError as exc:
        raise WeightError(f"bad parameters for family {name!r}: {exc}") from None


def dyadic_class(sigma) -> np.ndarray:
    """Integer k with ``2**(-k-1) < sigma <= 2**-k`` (elementwise, sigma > 0)."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0):
        raise WeightError("dyadic classes need strictly positive sigma")
    mant, expo = np.frexp(sigma)  # sigma = mant * 2**expo, mant in [0.5, 1)
    return np.where(mant == 0.5, 1 - expo, -expo).astype(np.int64)


def dyadic_class_log(log_sigma) -> np.ndarray:
    """:func:`dyadic_class` from ``log(sigma)``, for sigma below the double range."""
    ls = np.asarray(log_sigma, dtype=np.float64)
    if np.any(~np.isfinite(ls)):
        raise WeightError("dyadic classes need strictly positive finite sigma")
    return np.floor(-ls / math.log(2.0)).astype(np.int64)


# ---------------------------------------------------------------------------
# weight systems
# ---------------------------------------------------------------------------

LEVEL = "level"
NODE = "node"


def _check_nonincreasing(seq: np.ndarray, what: str) -> None:
    bad = np.flatnonzero(seq[1:] > seq[:-1] * (1 + MONOTONE_RTOL))
    if bad.size:
        i = int(bad[0])
        raise WeightError(f"{what} increases at level {i} -> {i + 1}: {seq[i]!r} < {seq[i + 1]!r}")


@dataclass(frozen=True, eq=False)
class WeightSystem:
    """Weights ``alpha >= 0`` and ``sigma > 0`` with sigma non-increasing along branches.

    ``mode == "level"``: ``alpha`` and ``sigma`` are :class:`Family` objects
    indexed by depth.  ``mode == "node"``: they are arrays indexed by node id
    of one explicit tree.
    """

    mode: str
    alpha: Any
    sigma: Any
    validate_levels: int = DEFAULT_VALIDATE_LEVELS

    def __post_init__(self):
        if self.mode == LEVEL:
            if not isinstance(self.alpha, Family) or not isinstance(self.sigma, Family):
                raise WeightError("level weights need Family objects")
            n = self.validate_levels
            for fam in (self.alpha, self.sigma):
                if isinstance(fam, Array):
                    n = min(n, fam.length)
            ks = np.arange(n)
            self._validate_levels(ks)
        elif self.mode == NODE:
            a = np.ascontiguousarray(self.alpha, dtype=np.float64)
            s = np.ascontiguousarray(self.sigma, dtype=np.float64)
            if a.shape != s.shape or a.ndim != 1:
                raise WeightError("per-node alpha and sigma must be 1-d arrays of equal length")
            if np.any(a < 0) or not np.all(np.isfinite(a)):
                raise WeightError("alpha must be finite and non-negative")
            if np.any(s <= 0) or not np.all(np.isfinite(s)):
                raise WeightError("sigma must be finite and strictly positive")
            a.setflags(write=False)
            s.setflags(write=False)
            object.__setattr__(self, "alpha", a)
            object.__setattr__(self, "sigma", s)
        else:
            raise WeightError(f"unknown weight mode {self.mode!r}")

    def _validate_levels(self, ks: np.ndarray) -> None:
        la = self.alpha.log_values(ks)
        ls = self.sigma.log_values(ks)
        if np.any(np.isnan(la)) or np.any(la == np.inf):
            raise WeightError("alpha must be finite and non-negative")
        if np.any(~np.isfinite(ls)):
            raise WeightError("sigma must be finite and strictly positive")
        bad = np.flatnonzero(ls[1:] > ls[:-1] + MONOTONE_RTOL)
        if bad.size:
            i = int(bad[0])
            raise WeightError(f"sigma increases at level {i} -> {i + 1}")

    # -- constructors -----------------------------------------------------
    @classmethod
    def homogeneous(cls, alpha: Family, sigma: Family, validate_levels: int = DEFAULT_VALIDATE_LEVELS):
        return cls(LEVEL, alpha, sigma, validate_levels)

    @classmethod
    def per_node(cls, tree: Tree, alpha, sigma) -> "WeightSystem":
        w = cls(NODE, alpha, sigma)
        w.validate_tree(tree)
        return w

    @property
    def is_homogeneous(self) -> bool:
        return self.mode == LEVEL

    def validate_tree(self, tree: Tree) -> None:
        """Check sizes and sigma monotonicity along every edge of ``tree``."""
        if self.mode == LEVEL:
            self._validate_levels(np.arange(min(tree.height + 1, 1 << 24)))
            return
        if self.alpha.shape[0] != tree.n_nodes:
            raise WeightError(f"weights have {self.alpha.shape[0]} entries, tree has {tree.n_nodes} nodes")
        par = tree.parents()
        kids = np.flatnonzero(par >= 0)
        bad = kids[self.sigma[kids] > self.sigma[par[kids]] * (1 + MONOTONE_RTOL)]
        if bad.size:
            v = int(bad[0])
            raise WeightError(f"sigma increases from node {int(par[v])} to its child {v}")

    # -- evaluation -------------------------------------------------------
    def _require_levels(self):
        if self.mode != LEVEL:
            raise WeightError("this operation needs homogeneous (level) weights")

    def alpha_levels(self, n: int) -> np.ndarray:
        """``alpha_0 .. alpha_n``."""
        self._require_levels()
        return self.alpha.values(np.arange(n + 1))

    def sigma_levels(self, n: int) -> np.ndarray:
        self._require_levels()
        return self.sigma.values(np.arange(n + 1))

    def log_alpha_levels(self, n: int) -> np.ndarray:
        self._require_levels()
        return self.alpha.log_values(np.arange(n + 1))

    def log_sigma_levels(self, n: int) -> np.ndarray:
        self._require_levels()
        return self.sigma.log_values(np.arange(n + 1))

    def alpha_at(self, tree: Tree, nodes=None) -> np.ndarray:
        return self._at(tree, nodes, self.alpha)

    def sigma_at(self, tree: Tree, nodes=None) -> np.ndarray:
        return self._at(tree, nodes, self.sigma)

    def _at(self, tree: Tree, nodes, table) -> np.ndarray:
        if self.mode == NODE:
            if table.shape[0] != tree.n_nodes:
                raise WeightError("per-node weights do not match this tree")
            return table if nodes is None else table[np.asarray(nodes, dtype=np.int64)]
        if nodes is None:
            depths = tree.depths()
        else:
            nodes = np.atleast_1d(np.asarray(nodes, dtype=np.int64))
            depths = np.array([tree.depth(int(v)) for v in nodes], dtype=np.int64) \
                if tree.is_explicit else _implicit_depths(tree, nodes)
        uniq, inv = np.unique(depths, return_inverse=True)
        return table.values(uniq)[inv]

    # -- derived systems --------------------------------------------------
    def product_transfer(self) -> "WeightSystem":
        """``(alpha * sigma, 1)``."""
        if self.mode == LEVEL:
            return WeightSystem(LEVEL, Product(self.alpha, self.sigma), Constant(1.0), self.validate_levels)
        return WeightSystem(NODE, self.alpha * self.sigma, np.ones_like(self.sigma))

    def to_dict(self) -> dict:
        if self.mode == LEVEL:
            return {"mode": LEVEL, "alpha": self.alpha.to_dict(), "sigma": self.sigma.to_dict()}
        return {"mode": NODE, "alpha": self.alpha.tolist(), "sigma": self.sigma.tolist()}


def _implicit_depths(tree: Tree, nodes: np.ndarray) -> np.ndarray:
    if tree.kind == "chain":
        return nodes
    return np.frexp((nodes + 1).astype(np.float64))[1].astype(np.int64) - 1


def weights_from_dict(doc: dict, tree: Tree | None = None) -> WeightSystem:
    """Weight system from its JSON form.

    ``{"mode": "level", "alpha": {"family": "power", "gamma": 1.0},
    "sigma": {"family": "constant", "c": 1.0}}`` or
    ``{"mode": "node", "alpha": [...], "sigma": [...]}``.
    """
    mode = doc.get("mode", LEVEL)
    if mode == LEVEL:
        alpha = family_from_dict(doc["alpha"])
        sigma = family_from_dict(doc["sigma"])
        return WeightSystem(LEVEL, alpha, sigma)
    if mode == NODE:
        w = WeightSystem(NODE, doc["alpha"], doc["sigma"])
        if tree is not None:
            w.validate_tree(tree)
        return w
    raise WeightError(f"unknown weight mode {mode!r}")


# -- named systems used throughout ------------------------------------------

def power_chain_weights(theta: float, nu: float) -> WeightSystem:
    """Chain weights ``alpha(k) = k**-nu``, ``sigma(k) = k**-theta`` with both 1 at k = 0."""
    return WeightSystem.homogeneous(Power(nu, shift=0.0, zero=1.0), Power(theta, shift=0.0, zero=1.0))


def halving_chain_weights() -> WeightSystem:
    """``sigma(k) = 2**-k``, ``alpha(0) = 0``, ``alpha(k) = 1/k``."""
    return WeightSystem.homogeneous(Power(1.0, shift=0.0, zero=0.0), Geometric(0.5))


def decaying_sigma_weights() -> WeightSystem:
    """``sigma_n = 1/(n+1)``, ``alpha = 1``."""
    return WeightSystem.homogeneous(Constant(1.0), Power(1.0))


def decaying_alpha_weights() -> WeightSystem:
    """``sigma = 1``, ``alpha_k = 1/(k+1)``."""
    return WeightSystem.homogeneous(Power(1.0), Constant(1.0))


def power_geometric_weights(b: float, sigma_power: float) -> WeightSystem:
    """``alpha_k = k**b 2**k`` (alpha_0 = 1) with ``sigma_n = n**sigma_power 2**-n`` (sigma_0 = 1)."""
    return WeightSystem.homogeneous(PowerGeometric(b, 2.0, shift=0.0, zero=1.0),
                                    PowerGeometric(sigma_power, 0.5, shift=0.0, zero=1.0))


def random_node_weights(tree: Tree, rng: np.random.Generator, zero_frac: float = 0.1,
                        dyadic: bool = False) -> WeightSystem:
    """Random valid per-node weights: sigma shrinks by a random factor per edge."""
    n = tree.n_nodes
    alpha = rng.uniform(0.0, 2.0, n)
    alpha[rng.random(n) < zero_frac] = 0.0
    factor = rng.uniform(0.3, 1.0, n)
    factor[rng.random(n) < 0.3] = 1.0
    sigma = np.empty(n)
    order = tree.bfs_order()
    par = tree.parents()
    sigma[0] = rng.uniform(0.2, 3.0)
    for v in order[1:]:
        sigma[v] = sigma[par[v]] * factor[v]
    if dyadic:
        sigma = 2.0 ** -dyadic_class(sigma).astype(np.float64)
    return WeightSystem.per_node(tree, alpha, sigma)


def scaled(w: WeightSystem, alpha_scale: float = 1.0, sigma_scale: float = 1.0) -> WeightSystem:
    if w.mode == LEVEL:
        return WeightSystem(LEVEL, Product(w.alpha, Constant(alpha_scale)),
                            Product(w.sigma, Constant(sigma_scale)), w.validate_levels)
    return WeightSystem(NODE, w.alpha * alpha_scale, w.sigma * sigma_scale)


FamilyFactory = Callable[..., Family]
