"""Lower-bound, exact-risk and rate formulas, plus exact binomial oracles."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp
from scipy.stats import binom

from .core import BinaryPM, Dataset, Discrete, HeavyTwoPoint, StableEstError, rng

ETA_POINTS = 200


# ---------------------------------------------------------------------------
# total variation and coupling


def _as_table(P):
    if isinstance(P, (Discrete, BinaryPM, HeavyTwoPoint)):
        atoms, probs = P.atoms()
        return np.asarray(atoms, dtype=float), np.asarray(probs, dtype=float)
    raise StableEstError(f"{type(P).__name__} is not a finitely supported distribution", code="non-discrete-input")


def _aligned(P1, P2):
    """Both pmfs on the union of supports (rows in first-appearance order)."""
    a1, p1 = _as_table(P1)
    a2, p2 = _as_table(P2)
    if a1.shape[1] != a2.shape[1]:
        raise StableEstError("distributions live in different dimensions", code="dimension-mismatch")
    index, rows = {}, []
    for row in np.vstack([a1, a2]):
        key = tuple(row.tolist())
        if key not in index:
            index[key] = len(rows)
            rows.append(row)
    q1 = np.zeros(len(rows))
    q2 = np.zeros(len(rows))
    for row, pr in zip(a1, p1):
        q1[index[tuple(row.tolist())]] += pr
    for row, pr in zip(a2, p2):
        q2[index[tuple(row.tolist())]] += pr
    return np.array(rows), q1, q2


def tv_discrete(P1, P2) -> float:
    _, q1, q2 = _aligned(P1, P2)
    return float(0.5 * np.abs(q1 - q2).sum())


def maximal_coupling_sample(P1, P2, n: int, seed: int):
    """n iid pairs from a maximal coupling; returns the two coordinate datasets.

    With probability 1 - TV both coordinates share a draw from the overlap
    min(p1, p2) / (1 - TV); otherwise each comes from its own residual, and
    the residuals have disjoint supports, so those pairs always differ.
    """
    support, q1, q2 = _aligned(P1, P2)
    overlap = np.minimum(q1, q2)
    tv = 1.0 - overlap.sum()
    g = rng(seed)
    same = g.random(n) >= tv if tv > 0 else np.ones(n, dtype=bool)
    idx1 = np.empty(n, dtype=int)
    idx2 = np.empty(n, dtype=int)
    k = int(same.sum())
    if k:
        common = g.choice(len(support), size=k, p=overlap / overlap.sum())
        idx1[same] = common
        idx2[same] = common
    if n - k:
        res1 = (q1 - overlap) / tv
        res2 = (q2 - overlap) / tv
        idx1[~same] = g.choice(len(support), size=n - k, p=res1 / res1.sum())
        idx2[~same] = g.choice(len(support), size=n - k, p=res2 / res2.sum())
    return Dataset(support[idx1]), Dataset(support[idx2])


# ---------------------------------------------------------------------------
# lower bounds


def lower_worst(dtheta: float, e_dham: float, beta: float) -> float:
    """[(dtheta - E[d_Ham] beta)_+ / 2]^2."""
    if min(dtheta, e_dham, beta) < 0:
        raise StableEstError("arguments must be nonnegative", code="bad-argument")
    return (max(dtheta - e_dham * beta, 0.0) / 2.0) ** 2


def _eta_grid(lo: float, hi: float, points: int = ETA_POINTS) -> np.ndarray:
    return np.linspace(lo, hi, points)


def lower_lp_general(dtheta: float, n: int, p: float, beta: float) -> float:
    factor = 1.0 if math.isinf(p) else (math.log(n) + 1.0) ** (1.0 / p)
    return (max(dtheta - (n + 1) * factor * beta, 0.0) / 2.0) ** 2


def _linear_terms(dtheta: float, n: int, p: float, beta: float, eta: np.ndarray) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    if math.isinf(p):
        # the first ratio diverges as p grows, so the min picks (n+1)^(1/p) -> 1
        inner = np.ones_like(eta)
        mult = 1.0
    else:
        with np.errstate(divide="ignore"):
            first = np.where(eta > 0, (1.0 - 2.0 * eta + p / (2.0 * (n + 1))) / (2.0 * eta) ** (1.0 / p), np.inf)
        inner = np.minimum(first, (n + 1) ** (1.0 / p))
        mult = 2.0 ** (1.0 / p)
    val = ((1.0 - 2.0 * eta) * dtheta - mult * (n + 1) * beta * inner) / 2.0
    return np.maximum(val, 0.0) ** 2


def lower_lp_linear(dtheta: float, n: int, p: float, beta: float, eta_grid: Optional[Sequence[float]] = None):
    """Sup over the eta grid of the linear-functional bound; returns (value, argmax eta)."""
    grid = _eta_grid(0.0, 0.5) if eta_grid is None else np.asarray(eta_grid, dtype=float)
    if np.any(grid < 0) or np.any(grid > 0.5):
        raise StableEstError("eta grid must lie in [0, 1/2]", code="eta-out-of-range")
    vals = _linear_terms(dtheta, n, p, beta, grid)
    i = int(np.argmax(vals))
    return float(vals[i]), float(grid[i])


def lower_cor1(dtheta: float, n: int, beta: float) -> float:
    """p = 1 specialisation at eta = 1/4."""
    return max(dtheta / 4.0 - 2.0 * (n + 1) * beta, 0.0) ** 2


@dataclass
class LowerLp:
    value: float
    general: float
    linear: Optional[float]
    linear_eta: Optional[float]
    cor1: Optional[float]
    branch: str

    def to_dict(self):
        return asdict(self)


def lower_lp_detail(dtheta: float, n: int, p: float, beta: float, linear: bool = False, eta_grid=None) -> LowerLp:
    """Both displayed lower bounds, labelled; ``value`` is their maximum."""
    general = lower_lp_general(dtheta, n, p, beta)
    lin = eta = cor1 = None
    value, branch = general, "general"
    if linear:
        lin, eta = lower_lp_linear(dtheta, n, p, beta, eta_grid)
        if lin > value:
            value, branch = lin, "linear"
        if p == 1:
            cor1 = lower_cor1(dtheta, n, beta)
    return LowerLp(value, general, lin, eta, cor1, branch)


def lower_lp(dtheta: float, n: int, p: float, beta: float, linear: bool = False, eta_grid=None) -> float:
    return lower_lp_detail(dtheta, n, p, beta, linear, eta_grid).value


def lower_avg_sharper(dtheta: float, n: int, beta: float, eta=None) -> float:
    """((1 - 2 eta) dtheta - n beta log(1/eta - 1) - 6 beta)_+^2, maximised over eta in [1/4, 1/2]."""
    grid = _eta_grid(0.25, 0.5) if eta is None else np.atleast_1d(np.asarray(eta, dtype=float))
    if np.any(grid < 0.25 - 1e-15) or np.any(grid > 0.5 + 1e-15):
        raise StableEstError("eta must lie in [1/4, 1/2]", code="eta-out-of-range")
    vals = (1.0 - 2.0 * grid) * dtheta - n * beta * np.log(1.0 / grid - 1.0) - 6.0 * beta
    return float(np.max(np.maximum(vals, 0.0) ** 2))


# ---------------------------------------------------------------------------
# bounded-mean risk formulas


def exact_risk_worst_bounded(n: int, r: float, beta: float) -> float:
    if beta <= 0:
        return r * r
    d = max(2.0 * r / (n * beta) - 1.0, 0.0)
    return max((d / (1.0 + d)) ** 2 * r * r, r * r / (math.sqrt(n) + 1.0) ** 2)


def rate_avg_bounded(n: int, r: float, beta: float) -> float:
    if beta <= 0:
        return r * r
    d = max(r / (n * beta) - 1.0, 0.0)
    return max((d / (1.0 + d)) ** 3 * r * r, r * r / n)


def shrinkage_risk(n: int, r: float, c: float, theta) -> np.ndarray:
    """Risk of c * mean under the +-r family with mean theta: c^2 (r^2 - theta^2)/n + (1 - c)^2 theta^2."""
    theta = np.asarray(theta, dtype=float)
    return c * c * (r * r - theta * theta) / n + (1.0 - c) ** 2 * theta * theta


def shrinkage_sup_piecewise(n: int, r: float, delta: float) -> float:
    """Closed-form sup over theta for the factor 1/(1 + delta)."""
    if delta <= 1.0 / math.sqrt(n):
        return r * r / (n * (1.0 + delta) ** 2)
    return delta * delta * r * r / (1.0 + delta) ** 2


def shrinkage_sup_grid(n: int, r: float, delta: float, points: int = 100_001) -> float:
    theta = np.linspace(-r, r, points)
    return float(np.max(shrinkage_risk(n, r, 1.0 / (1.0 + delta), theta)))


# ---------------------------------------------------------------------------
# binomial oracles


@dataclass
class OracleResult:
    exact: float
    bound: float
    passed: bool
    detail: dict

    def to_dict(self):
        return {"exact": self.exact, "bound": self.bound, "pass": self.passed, **self.detail}


def _check_q(q: float) -> None:
    if not 0.0 <= q <= 1.0:
        raise StableEstError("q must lie in [0, 1]", code="bad-argument")


def _log_expect_positive(logw: np.ndarray, values: np.ndarray) -> float:
    """E[V] for nonnegative V from log-weights; log-space accumulation."""
    with np.errstate(divide="ignore"):
        lv = np.log(values)
    return float(np.exp(logsumexp(logw + lv))) if np.any(values > 0) else 0.0


def _signed_expect(logw: np.ndarray, values: np.ndarray) -> float:
    """E[V] for signed finite V via separate log-space sums of both signs."""
    pos = np.where(values > 0, values, 0.0)
    neg = np.where(values < 0, -values, 0.0)
    return _log_expect_positive(logw, pos) - _log_expect_positive(logw, neg)


def binom_log_conditional(n: int, t1: int) -> float:
    """E[log((n - T1 + T2)/(T2 + 1)) + 1/(T2 + 1) | T1 = t1], T2 ~ Bin(t1, 1/2)."""
    t2 = np.arange(t1 + 1)
    logw = binom.logpmf(t2, t1, 0.5)
    num = n - t1 + t2
    if np.any(num == 0):
        return -math.inf
    vals = np.log(num / (t2 + 1.0)) + 1.0 / (t2 + 1.0)
    return _signed_expect(logw, vals)


def binom_log_oracle(n: int, q: float, p: float = 1.0, exact_cap: int = 60) -> OracleResult:
    """Exact expectation by enumeration against the lemma's bound.

    ``exact``/``bound`` are the unconditional statement (p = 1).  The
    detail also carries the conditional statement for every T1 and the
    (n - T1)^(p-1) weighted form, with 0 * (-inf) = 0 at T1 = n.
    """
    _check_q(q)
    if n < 1:
        raise StableEstError("n must be positive", code="bad-argument")
    if n > exact_cap:
        raise StableEstError(f"exact enumeration capped at n = {exact_cap}", code="n-too-large")
    t1 = np.arange(n + 1)
    logw1 = binom.logpmf(t1, n, q)
    live = np.isfinite(logw1)
    cond = np.array([binom_log_conditional(n, int(t)) for t in t1])
    with np.errstate(divide="ignore"):
        cond_bound = np.log(2.0 * n / (t1 + 1.0) - 1.0) + 2.0 / (t1 + 1.0)
    cond_ok = bool(np.all(cond[live] <= cond_bound[live] + 1e-12))

    if np.any(live & np.isneginf(cond)):
        exact = -math.inf
    else:
        exact = _signed_expect(logw1[live], cond[live])
    if q == 0:
        bound = math.inf
    else:
        inner = 2.0 * n / (q * (n + 1)) - 1.0
        bound = (math.log(inner) if inner > 0 else -math.inf) + 2.0 / (q * (n + 1))
    passed = exact <= bound + 1e-12 or (math.isinf(exact) and exact < 0)

    weight = (n - t1).astype(float) ** (p - 1.0)
    weighted = np.where(weight == 0, 0.0, weight * np.where(np.isneginf(cond), 0.0, cond))
    neg_inf_weighted = bool(np.any(live & (weight > 0) & np.isneginf(cond)))
    w_exact = -math.inf if neg_inf_weighted else _signed_expect(logw1[live], weighted[live])
    wb = np.where(weight == 0, 0.0, weight * np.where(np.isneginf(cond_bound), 0.0, cond_bound))
    wb_neg_inf = bool(np.any(live & (weight > 0) & np.isneginf(cond_bound)))
    w_bound = -math.inf if wb_neg_inf else _signed_expect(logw1[live], wb[live])
    w_ok = w_exact <= w_bound + 1e-12 * max(1.0, abs(w_bound)) if math.isfinite(w_bound) else w_exact <= w_bound

    return OracleResult(
        exact,
        bound,
        bool(passed and cond_ok and w_ok),
        {
            "n": n,
            "q": q,
            "p": p,
            "unconditional_pass": bool(passed),
            "conditional_pass": cond_ok,
            "weighted_exact": w_exact,
            "weighted_bound": w_bound,
            "weighted_pass": bool(w_ok),
        },
    )


def binom_ratio_oracle(n: int, q: float, p: float = 1.0, exact_cap: int = 200) -> OracleResult:
    """E[(n - T1)^p / (T1 + 1)] against ((n+1)(1-q) + p/2)^p / ((n+1) q) min n^p."""
    _check_q(q)
    if n > exact_cap:
        raise StableEstError(f"exact summation capped at n = {exact_cap}", code="n-too-large")
    k = np.arange(n + 1)
    logw = binom.logpmf(k, n, q)
    vals = (n - k).astype(float) ** p / (k + 1.0)
    exact = _log_expect_positive(logw, vals)
    first = math.inf if q == 0 else ((n + 1) * (1.0 - q) + p / 2.0) ** p / ((n + 1) * q)
    bound = min(first, float(n) ** p)
    return OracleResult(exact, bound, bool(exact <= bound * (1 + 1e-12)), {"n": n, "q": q, "p": p})


def binom_moment_check(n: int, q: float, m: float, exact_cap: int = 200) -> OracleResult:
    """E[X^m] for X ~ Bin(n, q) against (nq)^m (1 + m/(2nq))^m = (nq + m/2)^m."""
    _check_q(q)
    if m < 1:
        raise StableEstError("moment order must be >= 1", code="bad-argument")
    if n > exact_cap:
        raise StableEstError(f"exact summation capped at n = {exact_cap}", code="n-too-large")
    k = np.arange(n + 1)
    exact = _log_expect_positive(binom.logpmf(k, n, q), k.astype(float) ** m)
    bound = (n * q + m / 2.0) ** m
    return OracleResult(exact, bound, bool(exact <= bound * (1 + 1e-12)), {"n": n, "q": q, "m": m})


# ---------------------------------------------------------------------------
# phase transitions


def phase_catalog() -> list:
    """Stability/accuracy trade-off patterns; thresholds as expressions and callables of (n, r, p, s)."""
    return [
        {
            "problem": "bounded",
            "order": "inf",
            "kind": "sharp",
            "threshold": "2r/n",
            "value": lambda n, r, **_: 2.0 * r / n,
        },
        {
            "problem": "bounded",
            "order": "p",
            "kind": "sharp",
            "threshold": "2^(1-1/p) r/n",
            "value": lambda n, r, p=1.0, **_: 2.0 ** (1.0 - (0.0 if math.isinf(p) else 1.0 / p)) * r / n,
        },
        {
            "problem": "bounded",
            "order": "1",
            "kind": "sharp",
            "threshold": "r/n",
            "value": lambda n, r, **_: r / n,
        },
        {
            "problem": "heavy",
            "order": "inf",
            "kind": "gradual",
            "threshold": "none (rate r^(2k)/(n beta)^(2(k-1)))",
            "value": None,
        },
        {
            "problem": "heavy",
            "order": "1",
            "kind": "sharp",
            "threshold": "24r/n",
            "value": lambda n, r, **_: 24.0 * r / n,
        },
        {
            "problem": "sparse",
            "order": "any",
            "kind": "sharp",
            "threshold": "4 sqrt(2) r sqrt(s)/n",
            "value": lambda n, r, s=1, **_: 4.0 * math.sqrt(2.0) * r * math.sqrt(s) / n,
        },
        {
            "problem": "nonparametric",
            "order": "inf",
            "kind": "gradual",
            "threshold": "none",
            "value": None,
        },
        {
            "problem": "nonparametric",
            "order": "1",
            "kind": "sharp",
            "threshold": "polylog(n)/n",
            "value": lambda n, r=1.0, **_: 24.0 * math.log(n) ** 2 / n,
        },
    ]


def catalog_rows() -> list:
    """The catalog without callables, for JSON output."""
    return [{k: v for k, v in row.items() if k != "value"} for row in phase_catalog()]


def threshold(problem: str, order: str, n: int, r: float, **kw) -> Optional[float]:
    for row in phase_catalog():
        if row["problem"] == problem and row["order"] in (order, "any") and row["value"] is not None:
            return float(row["value"](n=n, r=r, **kw))
    return None


# ---------------------------------------------------------------------------
# rate expressions (constants set to 1; used as overlays only)


def heavy_rate_worst(n: int, r: float, k: float, beta: float) -> float:
    floor = r * r / n ** min(1.0, 2.0 * (1.0 - 1.0 / k))
    if beta <= 0:
        return r * r + floor
    return min(r ** (2 * k) / (n * beta) ** (2 * (k - 1)), r * r) + floor


def heavy_rate_avg(n: int, r: float, k: float, beta: float) -> float:
    floor = r * r / n ** min(1.0, 2.0 * (1.0 - 1.0 / k))
    return floor if beta >= 24.0 * r / n else r * r


def sparse_rate(n: int, r: float, s: int, d: int, beta: float) -> float:
    if beta >= 4.0 * math.sqrt(2.0) * r * math.sqrt(s) / n:
        return r * r * s * math.log(d) / n
    return r * r * s


def nonparametric_rates(n: int, nu: float, beta: float, p: float, C_star: float = 24.0, c_star: float = 1.0):
    """(lower, upper) rate expressions for pointwise wavelet regression risk."""
    base = n ** (-2.0 * nu / (2.0 * nu + 1.0))
    if math.isinf(p):
        if beta <= 0:
            return 1.0 + base, 1.0 + base
        nb = (n * beta) ** (-2.0 * nu)
        return min(nb, 1.0) + base, min(nb * math.log(n) ** nu, 1.0) + base
    upper = base if beta >= C_star * math.log(n) ** 2 / n else 1.0
    lower = 1.0 if beta <= c_star / (n * math.log(n)) else base
    return lower, upper
