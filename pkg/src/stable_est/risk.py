"""Risk estimation: exact two-atom enumeration, Monte Carlo, subfamily suprema and budget sweeps."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.stats import binom

from . import bounds as bd
from . import estimators as es
from . import wavelet as wv
from .core import (
    SCHEMA_VERSION,
    BinaryPM,
    Discrete,
    Estimator,
    HeavyTwoPoint,
    Regression,
    SparseMean,
    StableEstError,
    rng,
    thread_count,
)
from .stability import INF, format_order, parse_order

REGRESSION_CHUNK_CELLS = 2_000_000


@dataclass
class RiskEstimate:
    mse: float
    std_error: float
    reps: int
    seed: int
    method: str = "mc"

    @property
    def ci(self) -> float:
        return 1.96 * self.std_error


def target(dist) -> np.ndarray:
    try:
        return np.asarray(dist.mean(), dtype=float).reshape(-1)
    except AttributeError:
        raise StableEstError(f"no analytic target for {type(dist).__name__}", code="unknown-target") from None


def _two_atom(dist):
    """(atoms (2, d), probability of the second atom) or None."""
    if isinstance(dist, (BinaryPM, HeavyTwoPoint)) or (isinstance(dist, Discrete) and len(dist.probs) == 2):
        atoms, probs = dist.atoms()
        return np.asarray(atoms, dtype=float), float(probs[1])
    return None


def _two_atom_outputs(est: Estimator, atoms: np.ndarray, k: np.ndarray, n: int) -> np.ndarray:
    counts = np.stack([n - k, k], axis=-1).astype(float)
    pts = np.broadcast_to(atoms, k.shape + atoms.shape)
    return est.on_atoms(pts, counts)


def exact_risk(est: Estimator, dist, n: int) -> float:
    """Risk by summing over the binomial law of the second atom's count (no sampling)."""
    if est.randomized:
        raise StableEstError("exact enumeration needs a deterministic estimator", code="randomized-estimator")
    pair = _two_atom(dist)
    if pair is None:
        raise StableEstError("exact enumeration needs a two-atom distribution", code="non-discrete-input")
    atoms, q = pair
    theta = target(dist)
    k = np.arange(n + 1)
    out = _two_atom_outputs(est, atoms, k, n)
    err = np.sum((out - theta) ** 2, axis=-1)
    return float(np.dot(binom.pmf(k, n, q), err))


def _binom_inverse(u: np.ndarray, n: int, q) -> np.ndarray:
    """Inverse-CDF binomial draws; the same uniforms give common random numbers across q."""
    q = np.broadcast_to(np.asarray(q, dtype=float), u.shape)
    out = binom.ppf(u, n, q)
    out = np.where(q <= 0.0, 0.0, np.where(q >= 1.0, float(n), out))
    return np.nan_to_num(out, nan=0.0)


def _finish(sq: np.ndarray, reps: int, seed: int, method: str = "mc") -> RiskEstimate:
    mse = float(np.mean(sq))
    se = float(np.std(sq, ddof=1) / math.sqrt(reps))
    return RiskEstimate(mse, se, reps, seed, method)


def _noise(est: Estimator, g: np.random.Generator, out: np.ndarray) -> np.ndarray:
    return out + est.noise(g, out.shape) if est.randomized else out


def mc_risk(est: Estimator, dist, n: int, reps: int, seed: int) -> RiskEstimate:
    """Monte Carlo estimate of E||est - theta(P)||^2.

    Finite distributions simulate atom counts (inverse-CDF for two atoms),
    the sparse family simulates the sample mean when the estimator depends
    on the data only through it, and regression draws raw pairs in chunks.
    """
    if reps < 2:
        raise StableEstError("need at least two repetitions", code="bad-reps")
    theta = target(dist)
    g = rng(seed)
    pair = _two_atom(dist)
    if pair is not None:
        atoms, q = pair
        k = _binom_inverse(g.random(reps), n, q)
        out = _noise(est, g, _two_atom_outputs(est, atoms, k, n))
    elif isinstance(dist, Discrete):
        counts = g.multinomial(n, dist.probs, size=reps).astype(float)
        pts = np.broadcast_to(dist.support, (reps,) + dist.support.shape)
        out = _noise(est, g, est.on_atoms(pts, counts))
    elif isinstance(dist, SparseMean):
        if est.mean_map is None:
            raise StableEstError("sparse risk simulation needs an estimator of the sample mean", code="unsupported-estimator")
        k = _binom_inverse(g.random((reps, dist.d)), n, dist.plus_probs[None, :])
        xbar = dist.r * (2.0 * k / n - 1.0)
        out = _noise(est, g, est.mean_map(xbar))
    elif isinstance(dist, Regression):
        chunk = max(1, REGRESSION_CHUNK_CELLS // n)
        outs = []
        done = 0
        while done < reps:
            c = min(chunk, reps - done)
            x = g.random((c, n))
            y = np.asarray(dist.f(x), dtype=float) + dist.sigma * g.standard_normal((c, n))
            outs.append(est.on_atoms(np.stack([x, y], axis=-1), np.ones((c, n))))
            done += c
        out = _noise(est, g, np.concatenate(outs, axis=0))
    else:
        raise StableEstError(f"cannot simulate {type(dist).__name__}", code="unknown-distribution")
    sq = np.sum((out - theta) ** 2, axis=-1)
    return _finish(sq, reps, seed)


# ---------------------------------------------------------------------------
# families and suprema


@dataclass
class Family:
    name: str
    params: np.ndarray
    make: Callable
    two_atom: bool = False
    param_name: str = "param"


def binary_family(r: float, grid: Optional[Sequence[float]] = None) -> Family:
    """+-r laws indexed by their mean theta (default grid covers [0, r]; shipped estimators are odd)."""
    g = np.linspace(0.0, r, 41) if grid is None else np.asarray(grid, dtype=float)
    return Family("binary", g, lambda th: BinaryPM.with_mean(r, float(th)), True, "theta")


def heavy_family(r: float, k: float, grid: Optional[Sequence[float]] = None) -> Family:
    g = np.geomspace(1e-6, 1.0, 61) if grid is None else np.asarray(grid, dtype=float)
    return Family("heavy-two-point", g, lambda e: HeavyTwoPoint(r, k, float(e)), True, "eps")


def sparse_family(d: int, s: int, r: float, grid: Optional[Sequence[float]] = None) -> Family:
    """s active coordinates sharing amplitude a, the rest zero-mean."""
    g = np.linspace(0.0, r, 11) if grid is None else np.asarray(grid, dtype=float)

    def make(a):
        theta = np.zeros(d)
        theta[:s] = a
        return SparseMean(d, s, r, theta)

    return Family("sparse", g, make, False, "amplitude")


def regression_family(functions: Sequence, sigma: float, x0: float) -> Family:
    fs = list(functions)
    return Family("regression", np.arange(len(fs), dtype=float), lambda i: Regression(fs[int(i)].f, sigma, x0), False, "fixture")


@dataclass
class SupRisk:
    sup: float
    argmax: float
    std_error: float
    estimates: List[RiskEstimate]

    @property
    def ci(self) -> float:
        return 1.96 * self.std_error


def risk_at(est: Estimator, dist, n: int, reps: int, seed: int, method: str = "auto") -> RiskEstimate:
    if method not in ("auto", "exact", "mc"):
        raise StableEstError(f"unknown method {method!r}", code="bad-argument")
    exact_ok = not est.randomized and _two_atom(dist) is not None
    if method == "exact" or (method == "auto" and exact_ok):
        return RiskEstimate(exact_risk(est, dist, n), 0.0, 0, seed, "exact")
    return mc_risk(est, dist, n, reps, seed)


def sup_risk(est: Estimator, family: Family, n: int, reps: int = 2000, seed: int = 0, method: str = "auto") -> SupRisk:
    """Max risk over the family's grid; every grid point reuses ``seed`` (common random numbers)."""
    if len(family.params) == 0:
        raise StableEstError("empty family grid", code="empty-grid")
    ests = [risk_at(est, family.make(p), n, reps, seed, method) for p in family.params]
    i = int(np.argmax([e.mse for e in ests]))
    return SupRisk(ests[i].mse, float(family.params[i]), ests[i].std_error, ests)


# ---------------------------------------------------------------------------
# sweeps

PROBLEMS = ("bounded", "heavy", "sparse", "nonparametric")
CSV_COLUMNS = ["beta", "sup_mse", "ci", "bound_lower", "bound_upper", "argmax_param", "schema_version", "problem", "p", "n", "r", "method"]


@dataclass
class RiskCurve:
    problem: str
    p: float
    n: int
    r: float
    rows: List[dict] = field(default_factory=list)
    method: str = "auto"

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows], dtype=float)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            self.write(fh)

    def write(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows:
            w.writerow([
                _fmt(row["beta"]),
                _fmt(row["sup_mse"]),
                _fmt(row["ci"]),
                _fmt(row["bound_lower"]),
                _fmt(row["bound_upper"]),
                _fmt(row["argmax_param"]),
                SCHEMA_VERSION,
                self.problem,
                format_order(self.p),
                self.n,
                _fmt(self.r),
                self.method,
            ])


def _fmt(v) -> str:
    v = float(v)
    return "nan" if math.isnan(v) else format(v, ".17g")


def read_curve_csv(path) -> RiskCurve:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise StableEstError(f"{path}: empty file", code="empty-input")
    if rows[0] != CSV_COLUMNS:
        raise StableEstError(f"{path}: not a sweep CSV (schema mismatch)", code="schema-mismatch")
    body = [r for r in rows[1:] if r]
    if not body:
        raise StableEstError(f"{path}: no rows", code="empty-input")
    if any(int(r[6]) != SCHEMA_VERSION for r in body):
        raise StableEstError(f"{path}: unsupported schema version", code="schema-mismatch")
    first = body[0]
    curve = RiskCurve(first[7], parse_order(first[8]), int(first[9]), float(first[10]), method=first[11])
    for r in body:
        curve.rows.append({k: float(r[i]) for i, k in enumerate(CSV_COLUMNS[:6])})
    return curve


def default_beta_grid(n: int, r: float, points: int = 30, lo: Optional[float] = None, hi: Optional[float] = None) -> np.ndarray:
    lo = r / (50.0 * n) if lo is None else lo
    hi = 10.0 * r / n if hi is None else hi
    return np.geomspace(lo, hi, points)


def _heavy_lower_worst(n, r, k, beta, eps_grid):
    e = np.asarray(eps_grid)
    return max(bd.lower_worst(r * x ** (1.0 - 1.0 / k), n * x, beta) for x in e)


def _heavy_lower_avg(n, r, k, beta, eps_grid):
    return max(bd.lower_lp(r * x ** (1.0 - 1.0 / k), n, 1.0, beta, linear=True) for x in np.asarray(eps_grid))


def _sparse_lower(n, r, s, p, beta):
    # point masses at +-r on the first s coordinates: distance 2r sqrt(s), every point differs
    dtheta = 2.0 * r * math.sqrt(s)
    if math.isinf(p):
        return bd.lower_worst(dtheta, n, beta)
    return bd.lower_lp(dtheta, n, p, beta, linear=True)


@dataclass
class ProblemSetup:
    estimator: Callable[[float], Estimator]
    family: Family
    overlay: Callable[[float], tuple]


def problem_setup(problem: str, p: float, n: int, r: float, extra: Optional[dict] = None) -> ProblemSetup:
    extra = dict(extra or {})
    if problem == "bounded":
        fam = binary_family(r, extra.get("theta_grid"))
        if math.isinf(p):
            return ProblemSetup(
                lambda b: es.exact_worst_bounded(n, r, b),
                fam,
                lambda b: (bd.exact_risk_worst_bounded(n, r, b),) * 2,
            )
        if p == 1:
            return ProblemSetup(
                lambda b: es.avg_bounded(n, r, b),
                fam,
                lambda b: (max(r * r / (math.sqrt(n) + 1.0) ** 2, bd.lower_avg_sharper(2 * r, n, b)), bd.rate_avg_bounded(n, r, b)),
            )

        def shrink_upper(b):
            c = es.shrinkage_factor(n, r, b, p, refined=True)
            return max(c * c * r * r / n, (1 - c) ** 2 * r * r)

        return ProblemSetup(
            lambda b: es.shrinkage_bounded(es.BoundedMeanSpec(n, r, b, p), refined=True),
            fam,
            lambda b: (bd.lower_lp(2 * r, n, p, b, linear=True), shrink_upper(b)),
        )
    if problem == "heavy":
        k = float(extra.get("k", 2.0))
        fam = heavy_family(r, k, extra.get("eps_grid"))
        if math.isinf(p):
            return ProblemSetup(
                lambda b: es.heavy_tail_estimator(es.HeavyTailSpec(n, r, k, b, es.WORST)),
                fam,
                lambda b: (_heavy_lower_worst(n, r, k, b, fam.params), bd.heavy_rate_worst(n, r, k, b)),
            )
        return ProblemSetup(
            lambda b: es.heavy_tail_estimator(es.HeavyTailSpec(n, r, k, b, es.AVERAGE)),
            fam,
            lambda b: (_heavy_lower_avg(n, r, k, b, fam.params), bd.heavy_rate_avg(n, r, k, b)),
        )
    if problem == "sparse":
        s = int(extra.get("s", 5))
        d = int(extra.get("d", 400))
        fam = sparse_family(d, s, r, extra.get("amp_grid"))
        return ProblemSetup(
            lambda b: es.sparse_soft(es.SparseMeanSpec(n, r, s, d, b)),
            fam,
            lambda b: (_sparse_lower(n, r, s, p, b), bd.sparse_rate(n, r, s, d, b)),
        )
    if problem == "nonparametric":
        nu = float(extra.get("nu", 0.5))
        x0 = float(extra.get("x0", 0.3))
        sigma = float(extra.get("sigma", 0.2))
        funcs = wv.besov_test_functions(nu, int(extra.get("fixtures", 1)), center=x0)
        fam = regression_family(funcs, sigma, x0)
        mode = es.WORST if math.isinf(p) else es.AVERAGE
        kw = {k: extra[k] for k in ("C", "C_star", "c_T", "M_f") if k in extra}
        kw.setdefault("sigma_assumed", sigma)
        return ProblemSetup(
            lambda b: es.wavelet_estimator(es.WaveletEstimatorSpec(n, x0, nu, b, mode, **kw)),
            fam,
            lambda b: bd.nonparametric_rates(n, nu, b, p, C_star=kw.get("C_star", 24.0)),
        )
    raise StableEstError(f"unknown problem {problem!r}; expected one of {PROBLEMS}", code="unknown-problem")


def sweep(
    problem: str,
    p,
    betas: Sequence[float],
    n: int,
    r: float = 1.0,
    extra: Optional[dict] = None,
    reps: int = 2000,
    seed: int = 0,
    method: str = "auto",
    threads: Optional[int] = None,
) -> RiskCurve:
    """Witnessed sup-risk of the problem's stable estimator at each budget, with bound overlays.

    All budgets share one seed, so the curve is traced with common random numbers.
    """
    p = parse_order(p)
    betas = np.asarray(betas, dtype=float)
    if betas.size == 0 or np.any(np.diff(betas) <= 0) or np.any(betas < 0):
        raise StableEstError("budgets must be nonnegative and strictly increasing", code="bad-grid")
    setup = problem_setup(problem, p, n, r, extra)

    def one(b):
        sr = sup_risk(setup.estimator(float(b)), setup.family, n, reps, seed, method)
        lo, hi = setup.overlay(float(b))
        return {
            "beta": float(b),
            "sup_mse": sr.sup,
            "ci": sr.ci,
            "bound_lower": lo,
            "bound_upper": hi,
            "argmax_param": sr.argmax,
        }

    workers = min(threads or thread_count(), len(betas))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, betas))
    else:
        rows = [one(b) for b in betas]
    return RiskCurve(problem, p, n, r, rows, method)


def slope_fit(xs, ys):
    """OLS slope of log y on log x, and the fit's R^2."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size < 3 or x.size != y.size:
        raise StableEstError("need at least three paired points", code="too-few-points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise StableEstError("slope fit needs strictly positive values", code="nonpositive-values")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return float(slope), r2
