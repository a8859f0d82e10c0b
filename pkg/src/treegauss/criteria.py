"""Boundedness criteria for level-dependent weights on the binary tree.

With ``alpha(t) = alpha_|t|`` and ``sigma(t) = sigma_|t|``:

* ``G  = sup_n sigma_n sum_{k=1}^n alpha_k``           (finite if X is bounded)
* ``Q  = sup_n sup_{n<=k<=2n} alpha_k / alpha_n``      (regularity of alpha)
* ``G1 = sup_n sup_{m<=n} sigma_n sqrt(m) (sum_{k=m}^n alpha_k^2)^{1/2}``
* ``G2 = sup_n sigma_n sqrt(n) (sum_{k=0}^n alpha_k^2)^{1/2}``

X is bounded when G and Q are finite or when G2 is finite; it is unbounded
when G or G1 is infinite; for non-decreasing alpha, G1 and G2 are finite
together.  Finiteness is decided analytically when both sequences come from
named families, otherwise from truncated traces (tagged heuristic).

All sequences are handled as logarithms, so weights like ``2**k`` never
overflow; a criterion that exceeds the double range is reported as ``inf``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .weights import Asym, Constant, Family, LEVEL, Power, RegVar, WeightSystem

DEFAULT_N = 10 ** 6
DEFAULT_N_G1 = 10 ** 4
G1_CAP = 10 ** 4
INCREASING_FACTOR = 1.05
CONVERGED_FACTOR = 1.01
PREFIX_CHECK = 4096

BOUNDED = "Bounded"
UNBOUNDED = "Unbounded"
INCONCLUSIVE = "Inconclusive"


class CriteriaError(ValueError):
    pass


def _require_levels(w: WeightSystem) -> None:
    if w.mode != LEVEL:
        raise CriteriaError("criteria need homogeneous (level) weights")


def checkpoints(N: int) -> list[int]:
    return [max(1, N // 4), max(1, N // 2), N]


def classify_trend(values) -> str:
    """``increasing`` if each doubling grows the value by more than 5 %,
    ``converged`` if neither grows it by more than 1 %, else ``oscillating``."""
    v = [float(x) for x in values]
    if all(x == 0 for x in v):
        return "converged"
    ratios = []
    for a, b in zip(v[:-1], v[1:]):
        if math.isinf(b):
            ratios.append(math.inf)
        elif a == 0:
            ratios.append(math.inf if b > 0 else 1.0)
        else:
            ratios.append(b / a)
    if all(r > INCREASING_FACTOR for r in ratios):
        return "increasing"
    if all(r <= CONVERGED_FACTOR for r in ratios):
        return "converged"
    return "oscillating"


@dataclass
class CriterionTrace:
    name: str
    truncation: int
    checkpoints: list[int]
    values: list[float]
    trend: str

    @property
    def final(self) -> float:
        return self.values[-1]

    def to_dict(self) -> dict:
        return {"name": self.name, "truncation": self.truncation, "checkpoints": self.checkpoints,
                "values": [_num(v) for v in self.values], "trend": self.trend}


def _num(v: float):
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")


def _exp(x: float) -> float:
    if x == -math.inf:
        return 0.0
    return math.exp(x) if x < 709.7 else math.inf


def _trace(name: str, N: int, log_running: np.ndarray, offset: int) -> CriterionTrace:
    """``log_running[n - offset]`` is the log of the criterion truncated at n."""
    cps = checkpoints(N)
    vals = [_exp(float(log_running[c - offset])) for c in cps]
    return CriterionTrace(name, N, cps, vals, classify_trend(vals))


def _logs(w: WeightSystem, N: int) -> tuple[np.ndarray, np.ndarray]:
    _require_levels(w)
    return w.log_alpha_levels(N), w.log_sigma_levels(N)


# ---------------------------------------------------------------------------
# numeric traces
# ---------------------------------------------------------------------------

def eval_G(w: WeightSystem, N: int = DEFAULT_N) -> CriterionTrace:
    if N < 1:
        raise CriteriaError("truncation must be at least 1")
    la, ls = _logs(w, N)
    log_sums = np.logaddexp.accumulate(la[1:])     # log sum_{k=1}^n alpha_k, n = 1..N
    running = np.maximum.accumulate(ls[1:] + log_sums)
    return _trace("G", N, running, 1)


def eval_G2(w: WeightSystem, N: int = DEFAULT_N) -> CriterionTrace:
    if N < 1:
        raise CriteriaError("truncation must be at least 1")
    la, ls = _logs(w, N)
    log_sq = np.logaddexp.accumulate(2 * la)       # log sum_{k=0}^n alpha_k^2
    n = np.arange(N + 1)
    with np.errstate(divide="ignore"):
        terms = ls + 0.5 * np.log(n) + 0.5 * log_sq
    running = np.maximum.accumulate(terms)
    return _trace("G2", N, running, 0)


def eval_G1(w: WeightSystem, N: int = DEFAULT_N_G1) -> CriterionTrace:
    """Quadratic in N; capped at ``G1_CAP``."""
    if N < 1:
        raise CriteriaError("truncation must be at least 1")
    if N > G1_CAP:
        raise CriteriaError(f"G1 is evaluated up to N = {G1_CAP}")
    la, ls = _logs(w, N)
    l2 = 2 * la
    with np.errstate(divide="ignore"):
        half_log_m = 0.5 * np.log(np.arange(N + 1))
    per_n = np.full(N + 1, -np.inf)
    for n in range(1, N + 1):
        seg = l2[:n + 1]
        top = seg.max()
        if top == -np.inf:
            continue
        # tail[m] = sum_{k=m}^n alpha_k^2, scaled by exp(top)
        tail = np.cumsum(np.exp(seg - top)[::-1])[::-1]
        with np.errstate(divide="ignore"):
            best = np.max(half_log_m[1:n + 1] + 0.5 * (np.log(tail[1:]) + top))
        per_n[n] = ls[n] + best
    running = np.maximum.accumulate(per_n)
    return _trace("G1", N, running, 0)


def _window_max(vals: np.ndarray, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """``max(vals[left[i]:right[i] + 1])`` for every i, O(n log n) time and O(n) memory."""
    length = right - left + 1
    level = np.floor(np.log2(length)).astype(np.int64)
    out = np.full(left.size, -np.inf)
    table = vals.copy()
    span = 1
    j = 0
    while True:
        sel = np.flatnonzero(level == j)
        if sel.size:
            a = table[left[sel]]
            b = table[right[sel] - span + 1]
            out[sel] = np.maximum(a, b)
        if 2 * span > length.max():
            break
        # table[i] becomes the max over [i, i + 2 span)
        table = np.maximum(table[:-span], table[span:]) if table.size > span else table
        span *= 2
        j += 1
    return out


def _q_log(la: np.ndarray, N: int) -> float:
    n = np.arange(1, N + 1)
    right = np.minimum(2 * n, N)
    vals = la[1:N + 1]
    if np.any(vals == -np.inf):
        raise CriteriaError("Q needs alpha_k > 0 for k >= 1")
    best = _window_max(vals, n - 1, right - 1)
    return float(np.max(best - vals))


def eval_Q(w: WeightSystem, N: int = DEFAULT_N) -> CriterionTrace:
    if N < 1:
        raise CriteriaError("truncation must be at least 1")
    la, _ = _logs(w, N)
    cps = checkpoints(N)
    vals = [_exp(_q_log(la, c)) for c in cps]
    return CriterionTrace("Q", N, cps, vals, classify_trend(vals))


# ---------------------------------------------------------------------------
# analytic classes
# ---------------------------------------------------------------------------

@dataclass
class AnalyticFacts:
    """Finiteness of the criteria from the growth classes; ``None`` = undecided."""

    alpha_zero: bool
    G: bool | None
    Q: bool | None
    G1: bool | None
    G2: bool | None
    alpha_nondecreasing: bool | None


def _nondecreasing_prefix(w: WeightSystem, n: int = PREFIX_CHECK) -> bool:
    la = w.log_alpha_levels(n)
    return bool(np.all(la[1:] >= la[:-1] - 1e-12))


def analytic_facts(w: WeightSystem) -> AnalyticFacts | None:
    """Closed-form finiteness of G, Q, G1, G2, or ``None`` without named families."""
    _require_levels(w)
    a, s = w.alpha.asymptotic(), w.sigma.asymptotic()
    if a is None or s is None:
        return None
    if a.zero:
        return AnalyticFacts(True, True, None, True, True, True)
    ps = a.partial_sum()
    G = None if ps is None else (s * ps).is_bounded()
    Q = a.window_ratio_bounded()
    ps2 = (a ** 2).partial_sum()
    G2 = None if ps2 is None else (s * Asym(power=0.5) * ps2 ** 0.5).is_bounded()
    nondec = a.trend() >= 0 and _nondecreasing_prefix(w)
    if G2 is True:
        G1 = True
    elif G2 is False and nondec:
        G1 = False
    else:
        G1 = None
    return AnalyticFacts(False, G, Q, G1, G2, nondec)


# ---------------------------------------------------------------------------
# verdicts
# ---------------------------------------------------------------------------

@dataclass
class Verdict:
    classification: str
    rule: str | None
    certainty: str
    traces: dict[str, CriterionTrace] = field(default_factory=dict)
    truncation: dict[str, int] = field(default_factory=dict)
    fired: list[tuple[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        tr = {k: [_num(v) for v in t.values] for k, t in self.traces.items()}
        return {
            "classification": self.classification,
            "rule": self.rule,
            "certainty": self.certainty,
            "traces": tr,
            "trends": {k: t.trend for k, t in self.traces.items()},
            "checkpoints": {k: t.checkpoints for k, t in self.traces.items()},
            "truncation": self.truncation,
        }


def rule_firings(facts: AnalyticFacts) -> list[tuple[str, str]]:
    """Every (classification, rule) pair the analytic facts support."""
    out = []
    if facts.alpha_zero:
        out.append((BOUNDED, "ClosedForm"))
    if facts.G is False:
        out.append((UNBOUNDED, "Thm6.1a"))
    if facts.G is True and facts.Q is True:
        out.append((BOUNDED, "Thm6.1b"))
    if facts.G2 is True:
        out.append((BOUNDED, "Thm6.2b"))
    # closed-form divergence of G1 only ever comes from the monotone case
    if facts.alpha_nondecreasing and facts.G2 is False:
        out.append((UNBOUNDED, "Thm6.2c"))
    if facts.G1 is False:
        out.append((UNBOUNDED, "Thm6.2a"))
    return out


def _traces(w: WeightSystem, N: int, N_g1: int) -> dict[str, CriterionTrace]:
    out = {"G": eval_G(w, N), "G2": eval_G2(w, N), "G1": eval_G1(w, min(N_g1, N))}
    try:
        out["Q"] = eval_Q(w, N)
    except CriteriaError:
        pass
    return out


def combined_verdict(w: WeightSystem, N: int = DEFAULT_N, N_g1: int = DEFAULT_N_G1) -> Verdict:
    """Apply the criteria in order: closed forms, then G, (G, Q), G2 and G1 traces."""
    _require_levels(w)
    traces = _traces(w, N, N_g1)
    trunc = {k: t.truncation for k, t in traces.items()}
    facts = analytic_facts(w)
    if facts is not None:
        fired = rule_firings(facts)
        if fired:
            cls, rule = fired[0]
            return Verdict(cls, rule, "analytic", traces, trunc, fired)
    t = traces
    if t["G"].trend == "increasing":
        return Verdict(UNBOUNDED, "Thm6.1a", "heuristic", t, trunc)
    if t["G"].trend == "converged" and "Q" in t and t["Q"].trend == "converged":
        return Verdict(BOUNDED, "Thm6.1b", "heuristic", t, trunc)
    if t["G2"].trend == "converged":
        return Verdict(BOUNDED, "Thm6.2b", "heuristic", t, trunc)
    if t["G1"].trend == "increasing":
        return Verdict(UNBOUNDED, "Thm6.2a", "heuristic", t, trunc)
    return Verdict(INCONCLUSIVE, None, "heuristic", t, trunc)


# ---------------------------------------------------------------------------
# closed-form corollaries and reformulations
# ---------------------------------------------------------------------------

def power_geometric_predicate(b: float, sigma: Family) -> bool:
    """For ``alpha_k = k**b 2**k``: bounded iff ``sup sigma_n n**(1/2+b) 2**n < inf``."""
    s = sigma.asymptotic()
    if s is None:
        raise CriteriaError("sigma needs a named family")
    return (s * Asym(power=0.5 + b, log_base=math.log(2.0))).is_bounded()


def logexp_predicate(beta: float, sigma: Family) -> bool:
    """For ``alpha_k^2 = exp((log k)**beta)``: bounded iff
    ``sup sigma_n n (log n)**(-(beta-1)/2) exp((log n)**beta / 2) < inf``."""
    if beta <= 1:
        raise CriteriaError("beta must exceed 1")
    s = sigma.asymptotic()
    if s is None:
        raise CriteriaError("sigma needs a named family")
    return (s * Asym(power=1.0, logpow=-(beta - 1) / 2, lexp=0.5, beta=beta)).is_bounded()


def logexp_boundary_sigma(beta: float, extra_power: float = 0.0) -> RegVar:
    """Reciprocal of the boundary expression, optionally times ``n**extra_power``."""
    return RegVar(power=-1.0 + extra_power, logpow=(beta - 1) / 2, lexp=-0.5, beta=beta, kmin=2.0)


def logexp_sum_ratio(beta: float, n: int) -> float:
    """``sum_{k<=n} alpha_k^2`` over its asymptotic ``n exp((log n)**beta) / (beta (log n)**(beta-1))``."""
    k = np.arange(1, n + 1, dtype=np.float64)
    lk = np.log(k)
    log_sum = np.logaddexp(0.0, np.logaddexp.reduce(lk ** beta))  # the k = 0 term is 1
    ln = math.log(n)
    log_asym = math.log(n) + ln ** beta - math.log(beta) - (beta - 1) * math.log(ln)
    return math.exp(log_sum - log_asym)


@dataclass
class TailMetricReport:
    truncation: int
    metric_side: list[float]    # sup over m < n <= N' of sqrt(m) sigma_n (sum_{k=m+1}^n alpha_k^2)^{1/2}
    g1_side: list[float]
    checkpoints: list[int]
    metric_trend: str
    g1_trend: str

    @property
    def agree(self) -> bool:
        bounded = ("converged",)
        return (self.metric_trend in bounded) == (self.g1_trend in bounded) or \
            (self.metric_trend == self.g1_trend)


def tail_metric_check(w: WeightSystem, N: int = 2000) -> TailMetricReport:
    """Compare the metric bound ``d(t, s) <= c |t|^{-1/2}`` with the G1 trace."""
    _require_levels(w)
    if N > G1_CAP:
        raise CriteriaError(f"truncation is capped at {G1_CAP}")
    la, ls = _logs(w, N)
    l2 = 2 * la
    with np.errstate(divide="ignore"):
        half_log_m = 0.5 * np.log(np.arange(N + 1))
    per_n = np.full(N + 1, -np.inf)
    for n in range(2, N + 1):
        seg = l2[2:n + 1]  # alpha_k^2 for k = 2..n
        top = seg.max()
        if top == -np.inf:
            continue
        # tail[i] = sum_{k=i+2}^n, so m = i + 1 ranges over 1..n-1
        tail = np.cumsum(np.exp(seg - top)[::-1])[::-1]
        with np.errstate(divide="ignore"):
            best = np.max(half_log_m[1:n] + 0.5 * (np.log(tail) + top))
        per_n[n] = ls[n] + best
    running = np.maximum.accumulate(per_n)
    cps = checkpoints(N)
    metric = [_exp(float(running[c])) for c in cps]
    g1 = eval_G1(w, N)
    return TailMetricReport(N, metric, g1.values, cps, classify_trend(metric), g1.trend)


def product_weight_transfer(w: WeightSystem) -> WeightSystem:
    """``(alpha * sigma, 1)``."""
    _require_levels(w)
    return w.product_transfer()


def named_instances() -> dict[str, WeightSystem]:
    """Weight systems with known answers, used by tests and the CLI."""
    from .weights import PowerGeometric, Geometric, LogExp
    out = {
        "decaying_sigma_weights": WeightSystem.homogeneous(Constant(1.0), Power(1.0)),
        "decaying_alpha_weights": WeightSystem.homogeneous(Power(1.0), Constant(1.0)),
        "onesided": WeightSystem.homogeneous(PowerGeometric(-0.75, 2.0, shift=0.0, zero=1.0),
                                             Geometric(0.5)),
        "zero_alpha": WeightSystem.homogeneous(Constant(0.0), Constant(1.0)),
        "logexp_boundary": WeightSystem.homogeneous(LogExp(1.5), logexp_boundary_sigma(1.5)),
        "logexp_above": WeightSystem.homogeneous(LogExp(1.5), logexp_boundary_sigma(1.5, 0.1)),
    }
    for b in (-0.75, 0.0, 0.5):
        for tag, shift in (("minus", -0.1), ("plus", 0.1)):
            out[f"pg_b{b:+.2f}_{tag}"] = WeightSystem.homogeneous(
                PowerGeometric(b, 2.0, shift=0.0, zero=1.0),
                PowerGeometric(-(0.5 + b) + shift, 0.5, shift=0.0, zero=1.0))
    return out


__all__ = [
    "BOUNDED", "UNBOUNDED", "INCONCLUSIVE", "CriteriaError", "CriterionTrace", "Verdict",
    "eval_G", "eval_Q", "eval_G1", "eval_G2", "combined_verdict", "analytic_facts", "rule_firings",
    "power_geometric_predicate", "logexp_predicate", "logexp_boundary_sigma", "logexp_sum_ratio",
    "tail_metric_check", "TailMetricReport", "product_weight_transfer", "classify_trend", "named_instances",
]
