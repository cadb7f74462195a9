"""Stability-constrained estimators and the classical baselines they are compared with.

Every constructor returns an :class:`Estimator` whose core acts on weighted,
batched empirical measures so that leave-one-out structures can be evaluated
without materialising n + 1 datasets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import wavelet as wv
from .core import Estimator, StableEstError, constant, sample_mean, weighted_mean
from .stability import INF, format_order, parse_order


def _dim1(d: int) -> None:
    if d != 1:
        raise StableEstError("this estimator is defined for d = 1 only", code="dimension-mismatch")


def _linear(eid: str, dim: int, c: float, certified, meta) -> Estimator:
    return Estimator(
        eid,
        dim,
        lambda p, w: c * weighted_mean(p, w),
        certified=certified,
        mean_map=lambda m: c * m,
        meta=dict(meta, factor=c),
    )


# ---------------------------------------------------------------------------
# bounded mean


@dataclass(frozen=True)
class BoundedMeanSpec:
    n: int
    r: float
    beta: float
    p: float = INF
    d: int = 1

    def __post_init__(self):
        if self.n < 1 or self.r <= 0 or self.beta < 0 or self.d < 1:
            raise StableEstError("need n >= 1, r > 0, beta >= 0, d >= 1", code="bad-spec")
        object.__setattr__(self, "p", parse_order(self.p))


def shrinkage_factor(n: int, r: float, beta: float, p: float = INF, refined: bool = False) -> float:
    denom = 2.0 * r
    if refined:
        denom = 2.0 ** (1.0 - (0.0 if math.isinf(p) else 1.0 / p)) * r
    return min(n * beta / denom, 1.0)


def shrinkage_bounded(spec: BoundedMeanSpec, refined: bool = False) -> Estimator:
    c = shrinkage_factor(spec.n, spec.r, spec.beta, spec.p, refined)
    order = spec.p if refined else INF
    eid = "shrinkage-refined" if refined else "shrinkage"
    return _linear(eid, spec.d, c, (order, spec.beta), {"n": spec.n, "r": spec.r, "beta": spec.beta, "p": format_order(spec.p)})


def exact_worst_factor(n: int, r: float, beta: float) -> float:
    return min(n * beta / (2.0 * r), 1.0 / (1.0 + 1.0 / math.sqrt(n)))


def exact_worst_bounded(n: int, r: float, beta: float, d: int = 1) -> Estimator:
    _dim1(d)
    c = exact_worst_factor(n, r, beta)
    return _linear("exact-worst", 1, c, (INF, beta), {"n": n, "r": r, "beta": beta})


def avg_delta(n: int, r: float, beta: float) -> float:
    if beta <= 0:
        return math.inf
    return max(r / (n * beta) - 1.0, 0.0)


def avg_bounded_map(n: int, r: float, beta: float):
    """Map from the sample mean to the magnitude-adaptive shrinkage estimate."""
    delta = avg_delta(n, r, beta)
    dcap = min(delta, 1.0)
    if dcap == 0.0:
        return lambda m: np.array(m, dtype=float, copy=True)
    if dcap == 1.0:
        return lambda m: np.zeros_like(np.asarray(m, dtype=float))
    num = 2.0 * r * (math.sqrt(delta) + 1.0 / math.sqrt(n))

    def fmap(m):
        m = np.asarray(m, dtype=float)
        a = np.abs(m)
        with np.errstate(divide="ignore"):
            ratio = np.where(a > 0, num / np.where(a > 0, a, 1.0), np.inf)
        return (1.0 - dcap * np.minimum(ratio, 1.0)) * m

    return fmap


def avg_bounded(n: int, r: float, beta: float, d: int = 1) -> Estimator:
    _dim1(d)
    fmap = avg_bounded_map(n, r, beta)
    return Estimator(
        "avg-bounded",
        1,
        lambda p, w: fmap(weighted_mean(p, w)),
        certified=(1.0, beta),
        mean_map=fmap,
        meta={"n": n, "r": r, "beta": beta, "delta": avg_delta(n, r, beta)},
    )


def naive_avg_bounded(n: int, r: float, beta: float, d: int = 1) -> Estimator:
    c = 1.0 - min(avg_delta(n, r, beta), 1.0)
    return _linear("naive-avg", d, c, (1.0, beta), {"n": n, "r": r, "beta": beta})


# ---------------------------------------------------------------------------
# heavy tails

WORST = "worst"
AVERAGE = "avg"


@dataclass(frozen=True)
class HeavyTailSpec:
    n: int
    r: float
    k: float
    beta: float
    mode: str = WORST
    d: int = 1

    def __post_init__(self):
        if self.k < 1 or self.r <= 0 or self.n < 1 or self.beta < 0:
            raise StableEstError("need k >= 1, r > 0, n >= 1, beta >= 0", code="bad-spec")
        if self.mode not in (WORST, AVERAGE):
            raise StableEstError(f"unknown mode {self.mode!r}", code="bad-spec")

    @property
    def rho(self) -> float:
        tail = self.r * self.n ** (1.0 / self.k) if self.k < 2 else math.inf
        if self.mode == WORST:
            return min(self.n * self.beta / 2.0, tail)
        return tail


def _truncate(points: np.ndarray, rho: float):
    norms = np.sqrt(np.sum(points * points, axis=-1))
    if math.isinf(rho):
        return points, norms
    keep = norms <= rho
    return points * keep[..., None], norms * keep


def heavy_tail_estimator(spec: HeavyTailSpec) -> Estimator:
    rho = spec.rho
    meta = {"n": spec.n, "r": spec.r, "k": spec.k, "beta": spec.beta, "mode": spec.mode, "rho": rho}
    if spec.mode == WORST:
        def fn(p, w):
            y, _ = _truncate(p, rho)
            return weighted_mean(y, w)

        return Estimator("heavy-worst", spec.d, fn, certified=(INF, spec.beta), meta=meta)

    outer = min(spec.beta * spec.n / (24.0 * spec.r), 1.0)
    r = spec.r

    def fn(p, w):
        y, norms = _truncate(p, rho)
        m = w.sum(axis=-1)
        total = np.einsum("...m,...m->...", w, norms)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where(total > 2.0 * m * r, 2.0 * m * r / np.where(total > 0, total, 1.0), 1.0)
        return (outer * g)[..., None] * weighted_mean(y, w)

    meta["outer"] = outer
    return Estimator("heavy-avg", spec.d, fn, certified=(1.0, spec.beta), meta=meta)


# ---------------------------------------------------------------------------
# sparse mean


@dataclass(frozen=True)
class SparseMeanSpec:
    n: int
    r: float
    s: int
    d: int
    beta: float

    def __post_init__(self):
        if self.d <= self.s:
            raise StableEstError(f"need d > s (got d={self.d}, s={self.s})", code="dimension-too-small")
        if self.s < 1 or self.r <= 0 or self.n < 1 or self.beta < 0:
            raise StableEstError("need s >= 1, r > 0, n >= 1, beta >= 0", code="bad-spec")

    @property
    def c(self) -> float:
        return min(1.0, self.n * self.beta / (4.0 * math.sqrt(2.0 * self.s) * self.r))


def sparse_threshold(m: np.ndarray, s: int) -> np.ndarray:
    """|m|_(s+1): the (s+1)-th largest absolute coordinate along the last axis."""
    a = np.abs(m)
    d = a.shape[-1]
    return np.partition(a, d - s - 1, axis=-1)[..., d - s - 1]


def sparse_soft_map(s: int, c: float):
    def fmap(m):
        m = np.asarray(m, dtype=float)
        tau = sparse_threshold(m, s)[..., None]
        return c * np.sign(m) * np.maximum(np.abs(m) - tau, 0.0)

    return fmap


def sparse_soft(spec: SparseMeanSpec) -> Estimator:
    fmap = sparse_soft_map(spec.s, spec.c)
    return Estimator(
        "sparse-soft",
        spec.d,
        lambda p, w: fmap(weighted_mean(p, w)),
        certified=(INF, spec.beta),
        mean_map=fmap,
        meta={"n": spec.n, "r": spec.r, "s": spec.s, "d": spec.d, "beta": spec.beta, "c": spec.c},
    )


def _soft(m, tau):
    return np.sign(m) * np.maximum(np.abs(m) - tau, 0.0)


def _hard(m, tau):
    return np.where(np.abs(m) >= tau, m, 0.0)


def classical_thresholds(tau: float, d: int = 1, n: Optional[int] = None, r: Optional[float] = None):
    """(hard, soft) threshold estimators at a fixed level tau.

    With n and r given, the soft handle carries the worst-case bound 2 r sqrt(d)/n
    valid on the l_inf ball, since soft thresholding is 1-Lipschitz.
    """
    if tau < 0:
        raise StableEstError("tau must be nonnegative", code="bad-spec")
    cert = None
    if n is not None and r is not None:
        cert = (INF, 2.0 * r * math.sqrt(d) / n)
    hard = Estimator("hard-threshold", d, lambda p, w: _hard(weighted_mean(p, w), tau), mean_map=lambda m: _hard(m, tau), meta={"tau": tau})
    soft = Estimator("soft-threshold", d, lambda p, w: _soft(weighted_mean(p, w), tau), certified=cert, mean_map=lambda m: _soft(m, tau), meta={"tau": tau})
    return hard, soft


# ---------------------------------------------------------------------------
# wavelet regression

BASELINE = "baseline"


@dataclass(frozen=True)
class WaveletEstimatorSpec:
    n: int
    x0: float
    nu: float
    beta: float = math.inf
    mode: str = WORST
    basis: wv.WaveletBasis = field(default_factory=wv.haar_basis)
    s_besov: Optional[float] = None
    sigma_assumed: float = 1.0
    M_f: float = 1.0
    c_T: Optional[float] = None
    C: float = 1.0
    C_star: float = 24.0

    def __post_init__(self):
        if not 0.0 < self.x0 < 1.0:
            raise StableEstError("x0 must lie in (0, 1)", code="x0-out-of-range")
        if self.mode not in (WORST, AVERAGE, BASELINE):
            raise StableEstError(f"unknown mode {self.mode!r}", code="bad-spec")
        if self.nu <= 0 or self.n < 2 or self.beta < 0:
            raise StableEstError("need nu > 0, n >= 2, beta >= 0", code="bad-spec")
        s = self.nu if self.s_besov is None else self.s_besov
        if self.basis.A <= s:
            raise StableEstError(f"basis regularity {self.basis.A} must exceed smoothness {s}", code="regularity-violation")
        if self.basis.family == "haar" and wv.is_dyadic_at(self.x0, max(self.L_opt, self.basis.l0)):
            raise StableEstError(f"x0={self.x0} is a dyadic break point of an active Haar level", code="x0-dyadic")

    @property
    def L_opt(self) -> int:
        return int(math.floor(math.log2(self.n) / (2.0 * self.nu + 1.0)))

    @property
    def T(self) -> float:
        cT = 4.0 * (self.sigma_assumed + self.M_f) if self.c_T is None else self.c_T
        return cT * math.sqrt(math.log(self.n))

    @property
    def c_psi(self) -> float:
        return 1.0 / (2.0 * self.basis.C_prime)

    @property
    def L(self) -> int:
        """Truncation level actually used by the current mode."""
        if self.mode != WORST:
            return self.L_opt
        arg = self.c_psi * self.n * self.beta / self.T
        lvl = math.log2(arg) if arg > 0 else -math.inf
        return int(min(math.floor(max(lvl, self.basis.l0 - 1)), self.L_opt))

    @property
    def B_L(self) -> float:
        return self.C * math.log(self.n)

    @property
    def alpha(self) -> float:
        return min(self.n * self.beta / (self.C_star * math.log(self.n) ** 2), 1.0)

    def n_blocks(self, L: Optional[int] = None) -> int:
        L = self.L if L is None else L
        return len(wv.blocks(self.basis, L))

    def avg_output_bound(self) -> float:
        """Bound on |f_hat(x0)| for the average-case mode."""
        b = self.basis
        return b.K_loc * b.C_psi * self.B_L * self.n_blocks(self.L_opt) * self.alpha

    def avg_stability_bound(self) -> float:
        b = self.basis
        return 12.0 * self.alpha * b.K_loc * b.C_psi * self.B_L * self.n_blocks(self.L_opt) / (self.n + 1)

    def worst_gap_bound(self) -> float:
        if self.L < self.basis.l0:
            return 0.0
        return 2.0 * self.T * self.basis.C_prime * 2.0**self.L / self.n


def wavelet_estimator(spec: WaveletEstimatorSpec) -> Estimator:
    basis = spec.basis
    L = spec.L
    terms = wv.active_terms(basis, L, spec.x0)
    at_x0 = terms.at_x0
    meta = {"n": spec.n, "x0": spec.x0, "nu": spec.nu, "beta": spec.beta, "mode": spec.mode, "L": L, "L_opt": spec.L_opt}

    if len(terms) == 0:
        def zero(p, w):
            return np.zeros(p.shape[:-2] + (1,))

        cert = (INF, spec.beta) if spec.mode == WORST else None
        return Estimator(f"wavelet-{spec.mode}", 1, zero, certified=cert, meta=meta)

    def coeffs(p, w, T=math.inf):
        x, y = p[..., 0], p[..., 1]
        psi = wv.design(basis, terms, x)
        m = w.sum(axis=-1)[..., None]
        yc = wv.clip(y, T)
        return np.einsum("...m,...mt->...t", w * yc, psi) / m, psi, m

    if spec.mode == WORST:
        T = spec.T
        meta.update(T=T, gap_bound=spec.worst_gap_bound())

        def fn(p, w):
            f, _, _ = coeffs(p, w, T)
            return (f @ at_x0)[..., None]

        return Estimator("wavelet-worst", 1, fn, certified=(INF, spec.beta), meta=meta)

    if spec.mode == BASELINE:
        def fn(p, w):
            f, _, _ = coeffs(p, w)
            return (f @ at_x0)[..., None]

        return Estimator("wavelet-baseline", 1, fn, meta=meta)

    radius = spec.B_L * 2.0 ** (-terms.level / 2.0)
    alpha = spec.alpha
    bound = spec.avg_stability_bound()
    meta.update(alpha=alpha, B_L=spec.B_L, output_bound=spec.avg_output_bound(), stability_bound=bound)

    def fn(p, w):
        f, psi, m = coeffs(p, w)
        S = np.einsum("...m,...mt->...t", w * np.abs(p[..., 1]), np.abs(psi)) / m
        with np.errstate(divide="ignore", invalid="ignore"):
            cap = np.where(S > radius, radius / np.where(S > 0, S, 1.0), 1.0)
        return (alpha * (cap * f) @ at_x0)[..., None]

    return Estimator("wavelet-avg", 1, fn, certified=(1.0, bound), meta=meta)


# ---------------------------------------------------------------------------
# registry


def _bounded_spec(params) -> BoundedMeanSpec:
    return BoundedMeanSpec(int(params["n"]), float(params.get("r", 1.0)), float(params["beta"]), params.get("p", INF), int(params.get("d", 1)))


def _wavelet(mode):
    def make(params):
        kw = dict(params)
        kw["mode"] = mode
        if "basis" in kw and isinstance(kw["basis"], str):
            name = kw.pop("basis")
            kw["basis"] = wv.haar_basis() if name == "haar" else wv.daubechies_basis(int(name.lstrip("db")))
        if mode == BASELINE:
            kw.setdefault("beta", math.inf)
        return wavelet_estimator(WaveletEstimatorSpec(**kw))

    return make


REGISTRY = {
    "sample-mean": lambda p: sample_mean(int(p.get("d", 1))),
    "constant": lambda p: constant(p.get("value", [0.0])),
    "shrinkage": lambda p: shrinkage_bounded(_bounded_spec(p)),
    "shrinkage-refined": lambda p: shrinkage_bounded(_bounded_spec(p), refined=True),
    "exact-worst": lambda p: exact_worst_bounded(int(p["n"]), float(p.get("r", 1.0)), float(p["beta"]), int(p.get("d", 1))),
    "avg-bounded": lambda p: avg_bounded(int(p["n"]), float(p.get("r", 1.0)), float(p["beta"]), int(p.get("d", 1))),
    "naive-avg": lambda p: naive_avg_bounded(int(p["n"]), float(p.get("r", 1.0)), float(p["beta"]), int(p.get("d", 1))),
    "heavy-worst": lambda p: heavy_tail_estimator(HeavyTailSpec(int(p["n"]), float(p.get("r", 1.0)), float(p["k"]), float(p["beta"]), WORST, int(p.get("d", 1)))),
    "heavy-avg": lambda p: heavy_tail_estimator(HeavyTailSpec(int(p["n"]), float(p.get("r", 1.0)), float(p["k"]), float(p["beta"]), AVERAGE, int(p.get("d", 1)))),
    "sparse-soft": lambda p: sparse_soft(SparseMeanSpec(int(p["n"]), float(p.get("r", 1.0)), int(p["s"]), int(p["d"]), float(p["beta"]))),
    "soft-threshold": lambda p: classical_thresholds(float(p["tau"]), int(p.get("d", 1)), p.get("n"), p.get("r"))[1],
    "hard-threshold": lambda p: classical_thresholds(float(p["tau"]), int(p.get("d", 1)))[0],
    "wavelet-worst": _wavelet(WORST),
    "wavelet-avg": _wavelet(AVERAGE),
    "wavelet-baseline": _wavelet(BASELINE),
}


def build(estimator_id: str, **params) -> Estimator:
    """Construct a shipped estimator by id from plain parameters."""
    try:
        make = REGISTRY[estimator_id]
    except KeyError:
        raise StableEstError(f"unknown estimator {estimator_id!r}; known: {', '.join(sorted(REGISTRY))}", code="unknown-estimator") from None
    try:
        return make(params)
    except KeyError as exc:
        raise StableEstError(f"estimator {estimator_id!r} needs parameter {exc.args[0]!r}", code="missing-parameter") from None
