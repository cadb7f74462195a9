"""Conversions between worst-case stability and pure differential privacy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bounds import exact_risk_worst_bounded, heavy_rate_worst
from .core import Dataset, Estimator, StableEstError, derive_seed, rng
from .stability import INF

C0_DEFAULT = 0.5


def laplace_mechanism(base: Estimator, eps: float) -> Estimator:
    """base + Laplace(beta/eps) noise, where beta is the base's worst-case certificate."""
    if not eps > 0 or not math.isfinite(eps):
        raise StableEstError("eps must be finite and positive", code="bad-epsilon")
    if base.certified is None or not math.isinf(base.certified[0]):
        raise StableEstError("base estimator carries no worst-case stability certificate", code="uncertified-base")
    if base.dim != 1:
        raise StableEstError("the Laplace mechanism here is one-dimensional", code="multi-dim-unsupported")
    if base.randomized:
        raise StableEstError("base estimator must be deterministic", code="uncertified-base")
    scale = float(base.certified[1]) / eps

    def noise(g: np.random.Generator, shape):
        return g.laplace(0.0, scale, size=shape) if scale > 0 else np.zeros(shape)

    return Estimator(
        f"laplace({base.id})",
        1,
        base.fn,
        certified=base.certified,
        noise=noise,
        mean_map=base.mean_map,
        meta=dict(base.meta, eps=eps, noise_scale=scale),
    )


def dp_to_stability(eps: float, r: float) -> dict:
    """Worst-case stability implied by eps-DP on [-r, r]: r(e^eps - 1), and 2 r eps when eps < 1."""
    if not eps > 0 or not r > 0:
        raise StableEstError("need eps > 0 and r > 0", code="bad-argument")
    return {
        "beta": r * math.expm1(eps),
        "simple_bound": 2.0 * r * eps if eps < 1 else None,
        "simple_valid": eps < 1,
    }


# ---------------------------------------------------------------------------
# curves


def _bounded_stab_lower(n, r, beta, c0):
    return c0 * r * r / n + max(c0 * r * r - 2.0 * beta * beta * n * n, 0.0)


def _bounded_stab_upper(n, r, beta):
    lg = math.log1p(beta / r)
    inner = r * r if lg == 0 else min(r * r / (n * n * lg * lg), r * r)
    return r * r / n + inner


def _bounded_dp_lower(n, r, eps):
    x = 2.0 / (n * math.expm1(eps))
    d = max(x - 1.0, 0.0)
    return r * r / n + (d / (1.0 + d)) ** 2 * r * r


def _heavy_stab_upper(n, r, k, beta):
    lg = math.log1p(beta / r)
    inner = r * r if lg == 0 else min(r * r / (n * lg) ** (2.0 - 2.0 / k), r * r)
    return r * r / n + inner


def _heavy_dp_lower(n, r, k, eps):
    return r * r / n + min(r * r / (n * math.expm1(eps)) ** (2 * (k - 1)), r * r)


def _dp_upper(curve, eps, n, r):
    """inf over beta of curve(beta) + 2 beta^2/eps^2 on a log grid plus the analytic candidates."""
    betas = np.concatenate([
        np.geomspace(1e-6 * r / n, 10.0 * r, 4000),
        [2.0 * r / n, r * eps, r * min(eps, 1.0) / n],
    ])
    vals = np.array([curve(b) for b in betas]) + 2.0 * betas**2 / eps**2
    i = int(np.argmin(vals))
    return float(vals[i]), float(betas[i])


@dataclass
class BoundCurve:
    problem: str
    n: int
    r: float
    eps: np.ndarray
    beta: np.ndarray
    dp_upper: np.ndarray
    dp_upper_argmin: np.ndarray
    dp_lower: np.ndarray
    stab_upper: np.ndarray
    stab_lower: np.ndarray
    exact: np.ndarray
    labels: dict = field(default_factory=dict)

    def rows(self):
        for i in range(len(self.eps)):
            yield {
                "eps": float(self.eps[i]),
                "beta": float(self.beta[i]),
                "dp_upper": float(self.dp_upper[i]),
                "dp_upper_argmin_beta": float(self.dp_upper_argmin[i]),
                "dp_lower": float(self.dp_lower[i]),
                "stability_upper": float(self.stab_upper[i]),
                "stability_lower": float(self.stab_lower[i]),
                "exact": None if math.isnan(self.exact[i]) else float(self.exact[i]),
            }

    def ordering_holds(self) -> bool:
        """stability-lower <= exact <= stability-upper wherever the exact value exists."""
        ok = ~np.isnan(self.exact)
        return bool(np.all(self.stab_lower[ok] <= self.exact[ok] * (1 + 1e-12)) and np.all(self.exact[ok] <= self.stab_upper[ok] * (1 + 1e-12)))


def prop1_curves(problem: str, n: int, r: float, eps_grid: Sequence[float], k: Optional[float] = None, c0: float = C0_DEFAULT) -> BoundCurve:
    """The four conversion bounds at each eps, with beta = r(e^eps - 1) on the stability side.

    Bounded: the exact worst-case minimax formula feeds the DP upper bound and
    serves as the reference the stability bounds must bracket.  Heavy: every
    quantity is a rate with constants set to 1.
    """
    eps = np.asarray(eps_grid, dtype=float)
    if np.any(eps <= 0):
        raise StableEstError("eps grid must be positive", code="bad-argument")
    beta = r * np.expm1(eps)
    if problem == "bounded":
        curve = lambda b: exact_risk_worst_bounded(n, r, b)
        dpl = np.array([_bounded_dp_lower(n, r, e) for e in eps])
        su = np.array([_bounded_stab_upper(n, r, b) for b in beta])
        sl = np.array([_bounded_stab_lower(n, r, b, c0) for b in beta])
        exact = np.array([curve(b) for b in beta])
        labels = {"dp_upper": "inf over beta, exact formula", "dp_lower": "rate-only", "stability_upper": "rate-only", "stability_lower": f"rate-only, c0={c0}", "exact": "exact"}
    elif problem == "heavy":
        if k is None or k < 2:
            raise StableEstError("heavy curves need k >= 2", code="bad-argument")
        curve = lambda b: heavy_rate_worst(n, r, k, b)
        dpl = np.array([_heavy_dp_lower(n, r, k, e) for e in eps])
        su = np.array([_heavy_stab_upper(n, r, k, b) for b in beta])
        sl = np.array([heavy_rate_worst(n, r, k, b) for b in beta])
        exact = np.full(eps.shape, np.nan)
        labels = {key: "rate-only" for key in ("dp_upper", "dp_lower", "stability_upper", "stability_lower")}
    else:
        raise StableEstError(f"unknown problem {problem!r}", code="bad-argument")
    ups = [_dp_upper(curve, e, n, r) for e in eps]
    return BoundCurve(
        problem,
        n,
        r,
        eps,
        beta,
        np.array([u[0] for u in ups]),
        np.array([u[1] for u in ups]),
        dpl,
        su,
        sl,
        exact,
        labels,
    )


# ---------------------------------------------------------------------------
# audit


@dataclass
class AuditReport:
    eps: float
    max_log_ratio: float
    max_statistic: float
    passed: bool
    bins_used: int
    reps: int
    z: float

    def to_dict(self):
        return dict(self.__dict__)


def dp_audit(
    mech: Estimator,
    ds1: Dataset,
    ds2: Dataset,
    eps: float,
    bins: int = 50,
    reps: int = 100_000,
    seed: int = 0,
    z: float = 4.0,
    min_count: int = 20,
    min_reps: int = 1000,
) -> AuditReport:
    """Binned empirical check of P(M(D) in S) <= e^eps P(M(D') in S) in both directions.

    Counts get +0.5 smoothing.  Each bin's statistic is its absolute log
    ratio minus z standard errors; the audit passes when no statistic
    exceeds eps.  Bins where both counts are below ``min_count`` are skipped.
    """
    if reps < min_reps:
        raise StableEstError(f"need at least {min_reps} repetitions", code="insufficient-reps")
    if np.sum(np.any(ds1.points != ds2.points, axis=1)) > 1 or ds1.points.shape != ds2.points.shape:
        raise StableEstError("audit needs neighbouring datasets", code="hamming-distance-exceeded")
    o1 = float(np.asarray(mech.on_atoms(ds1.points, np.ones(ds1.n))).reshape(-1)[0])
    o2 = float(np.asarray(mech.on_atoms(ds2.points, np.ones(ds2.n))).reshape(-1)[0])
    if mech.noise is not None:
        g = rng(derive_seed(seed, 0))
        z_noise = np.asarray(mech.noise(g, (reps,))).reshape(-1)
    else:
        z_noise = np.zeros(reps)
    s1, s2 = o1 + z_noise, o2 + z_noise
    pooled = np.concatenate([s1, s2])
    lo, hi = np.quantile(pooled, [0.001, 0.999])
    if not hi > lo:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    c1, _ = np.histogram(s1, edges)
    c2, _ = np.histogram(s2, edges)
    use = np.maximum(c1, c2) >= min_count
    a, b = c1[use] + 0.5, c2[use] + 0.5
    ratio = np.abs(np.log(a / b))
    stat = ratio - z * np.sqrt(1.0 / a + 1.0 / b)
    max_ratio = float(ratio.max()) if ratio.size else 0.0
    max_stat = float(stat.max()) if stat.size else -math.inf
    if o1 == o2 and mech.noise is None:
        max_ratio = 0.0
    return AuditReport(eps, max_ratio, max_stat, bool(max_stat <= eps), int(use.sum()), reps, z)
