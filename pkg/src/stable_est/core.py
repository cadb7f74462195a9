"""Shared domain types: datasets, distributions, estimator handles and seeding."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

SCHEMA_VERSION = 1


class StableEstError(ValueError):
    """Base class for contract violations; ``code`` is a short machine tag."""

    code = "error"

    def __init__(self, message: str, code: Optional[str] = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class DomainViolation(StableEstError):
    code = "domain-violation"


class InvalidDistribution(StableEstError):
    code = "invalid-distribution"


class IndexOutOfRange(StableEstError):
    code = "index-out-of-range"


# ---------------------------------------------------------------------------
# seeds


def derive_seed(master: int, *index: int) -> int:
    """Child seed for task ``index`` of ``master``.

    Derivation hashes (master, index) through numpy's SeedSequence, so the
    child stream depends only on the pair and never on scheduling order.
    """
    ss = np.random.SeedSequence(entropy=int(master) & (2**64 - 1), spawn_key=tuple(int(i) for i in index))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & (2**64 - 1)))


def thread_count() -> int:
    raw = os.environ.get("STABLE_EST_THREADS", "")
    try:
        value = int(raw)
    except ValueError:
        value = os.cpu_count() or 1
    return max(1, value)


# ---------------------------------------------------------------------------
# datasets

VECTOR = "vector-sample"
REGRESSION = "regression-pairs"


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered sample with a declared domain bound.

    ``points`` has shape (n, d); regression pairs are stored as (n, 2) with
    columns (x, y).  ``norm`` selects which ball ``radius`` refers to.
    """

    points: np.ndarray
    radius: float = math.inf
    kind: str = VECTOR
    norm: str = "l2"

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise DomainViolation("dataset needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise DomainViolation("non-finite coordinate")
        if self.kind not in (VECTOR, REGRESSION):
            raise DomainViolation(f"unknown dataset kind {self.kind!r}")
        if self.norm not in ("l2", "linf"):
            raise DomainViolation(f"unknown norm {self.norm!r}")
        if self.kind == REGRESSION:
            if pts.shape[1] != 2:
                raise DomainViolation("regression pairs need two columns")
            if np.any(pts[:, 0] < 0) or np.any(pts[:, 0] > 1):
                raise DomainViolation("design points must lie in [0, 1]")
        elif math.isfinite(self.radius):
            norms = point_norms(pts, self.norm)
            if np.any(norms > self.radius * (1 + 1e-12)):
                raise DomainViolation(f"point outside the {self.norm} ball of radius {self.radius}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def like(self, points) -> "Dataset":
        return Dataset(points, self.radius, self.kind, self.norm)

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.norm == other.norm
            and self.radius == other.radius
            and np.array_equal(self.points, other.points)
        )


def point_norms(points: np.ndarray, norm: str = "l2") -> np.ndarray:
    if norm == "linf":
        return np.max(np.abs(points), axis=-1)
    return np.sqrt(np.sum(points * points, axis=-1))


def replace_point(ds: Dataset, index: int, new_point) -> Dataset:
    if not 0 <= index < ds.n:
        raise IndexOutOfRange(f"index {index} outside [0, {ds.n})")
    pts = np.array(ds.points)
    pts[index] = np.asarray(new_point, dtype=float).reshape(ds.d)
    return ds.like(pts)


def drop_point(ds: Dataset, index: int) -> Dataset:
    if ds.n < 2:
        raise IndexOutOfRange("cannot drop from a single-point dataset")
    if not 0 <= index < ds.n:
        raise IndexOutOfRange(f"index {index} outside [0, {ds.n})")
    return ds.like(np.delete(ds.points, index, axis=0))


def hamming(ds1: Dataset, ds2: Dataset) -> int:
    if ds1.points.shape != ds2.points.shape:
        raise StableEstError("datasets differ in shape", code="size-mismatch")
    return int(np.sum(np.any(ds1.points != ds2.points, axis=1)))


def write_csv(ds: Dataset, path) -> None:
    header = ["x", "y"] if ds.kind == REGRESSION else [f"x{j}" for j in range(ds.d)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in ds.points:
            w.writerow([format(float(v), ".17g") for v in row])


def read_csv(path, radius: float = math.inf, norm: str = "l2") -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise StableEstError(f"{path}: empty file", code="empty-input")
    header, body = rows[0], rows[1:]
    kind = REGRESSION if header == ["x", "y"] else VECTOR
    if kind == VECTOR and header != [f"x{j}" for j in range(len(header))]:
        raise StableEstError(f"{path}: unexpected header {header}", code="bad-header")
    pts = np.array([[float(v) for v in row] for row in body if row], dtype=float)
    return Dataset(pts, radius, kind, norm)


# ---------------------------------------------------------------------------
# distributions


def _check_probs(probs: np.ndarray) -> None:
    if probs.ndim != 1 or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
        raise InvalidDistribution("probabilities must be nonnegative and sum to 1")


@dataclass(frozen=True, eq=False)
class Discrete:
    """Finitely supported distribution on R^d."""

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        sup = np.asarray(self.support, dtype=float)
        if sup.ndim == 1:
            sup = sup[:, None]
        probs = np.asarray(self.probs, dtype=float)
        if sup.shape[0] != probs.shape[0]:
            raise InvalidDistribution("support and probabilities differ in length")
        _check_probs(probs)
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "probs", probs)

    @property
    def d(self) -> int:
        return self.support.shape[1]

    def atoms(self):
        return self.support, self.probs

    def mean(self) -> np.ndarray:
        return self.probs @ self.support


@dataclass(frozen=True)
class BinaryPM:
    """+r with probability ``prob``, -r otherwise."""

    r: float
    prob: float

    def __post_init__(self):
        if not 0.0 <= self.prob <= 1.0 or self.r <= 0:
            raise InvalidDistribution("need r > 0 and prob in [0, 1]")

    d = 1

    @classmethod
    def with_mean(cls, r: float, theta: float) -> "BinaryPM":
        return cls(r, min(1.0, max(0.0, 0.5 * (1.0 + theta / r))))

    def atoms(self):
        return np.array([[-self.r], [self.r]]), np.array([1.0 - self.prob, self.prob])

    def mean(self) -> np.ndarray:
        return np.array([self.r * (2 * self.prob - 1)])


@dataclass(frozen=True)
class HeavyTwoPoint:
    """Mass ``eps`` at r * eps^(-1/k) and 1 - eps at zero; k-th moment exactly r^k."""

    r: float
    k: float
    eps: float

    def __post_init__(self):
        if not 0.0 < self.eps <= 1.0 or self.r <= 0 or self.k < 1:
            raise InvalidDistribution("need r > 0, k >= 1, eps in (0, 1]")

    d = 1

    @property
    def far_point(self) -> float:
        return self.r * self.eps ** (-1.0 / self.k)

    def atoms(self):
        return np.array([[0.0], [self.far_point]]), np.array([1.0 - self.eps, self.eps])

    def mean(self) -> np.ndarray:
        return np.array([self.r * self.eps ** (1.0 - 1.0 / self.k)])

    def moment(self) -> float:
        return (self.eps * self.far_point**self.k) ** (1.0 / self.k)


@dataclass(frozen=True, eq=False)
class SparseMean:
    """Independent +-r coordinates with an s-sparse mean vector."""

    d: int
    s: int
    r: float
    active: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.active, dtype=float).reshape(-1)
        if theta.shape[0] != self.d:
            raise InvalidDistribution("mean vector must have length d")
        if np.count_nonzero(theta) > self.s or np.any(np.abs(theta) > self.r):
            raise InvalidDistribution("mean must be s-sparse with entries in [-r, r]")
        object.__setattr__(self, "active", theta)

    @property
    def plus_probs(self) -> np.ndarray:
        return 0.5 * (1.0 + self.active / self.r)

    def mean(self) -> np.ndarray:
        return self.active.copy()


@dataclass(frozen=True, eq=False)
class Regression:
    """Y = f(X) + sigma * N(0, 1) with X uniform on [0, 1]; target f(x0)."""

    f: Callable[[np.ndarray], np.ndarray]
    sigma: float
    x0: float

    def __post_init__(self):
        if self.sigma < 0:
            raise InvalidDistribution("noise level must be nonnegative")
        if not 0.0 < self.x0 < 1.0:
            raise InvalidDistribution("x0 must lie in (0, 1)")

    d = 2

    def mean(self) -> np.ndarray:
        return np.array([float(self.f(np.array([self.x0]))[0])])


def sample(dist, n: int, seed: int) -> Dataset:
    """Draw n iid points from ``dist``; deterministic in (dist, n, seed)."""
    if n < 1:
        raise StableEstError("n must be positive", code="bad-n")
    g = rng(seed)
    if isinstance(dist, SparseMean):
        plus = g.random((n, dist.d)) < dist.plus_probs
        return Dataset(np.where(plus, dist.r, -dist.r), dist.r, VECTOR, "linf")
    if isinstance(dist, Regression):
        x = g.random(n)
        y = np.asarray(dist.f(x), dtype=float) + dist.sigma * g.standard_normal(n)
        return Dataset(np.column_stack([x, y]), kind=REGRESSION)
    atoms, probs = dist.atoms()
    idx = g.choice(len(probs), size=n, p=probs)
    radius = dist.r if isinstance(dist, BinaryPM) else math.inf
    return Dataset(atoms[idx], radius)


# ---------------------------------------------------------------------------
# estimators

# An estimator's core is a map on weighted empirical measures:
#   fn(points[..., m, d], weights[..., m]) -> estimate[..., d]
# with arbitrary leading batch axes.  A plain dataset is weights = 1.

WeightedFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def weighted_mean(points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    tot = weights.sum(axis=-1)
    return np.einsum("...m,...md->...d", weights, points) / tot[..., None]


@dataclass(frozen=True, eq=False)
class Estimator:
    """Handle for a (possibly randomized) estimator.

    ``fn`` is the deterministic part.  Randomized handles add ``noise`` draws
    (a callable taking a Generator and a shape) on top of it.  ``mean_map``,
    when present, gives the estimate as a function of the sample mean alone;
    risk code uses it to simulate sufficient statistics instead of raw data.
    """

    id: str
    dim: int
    fn: WeightedFn
    certified: Optional[tuple] = None
    noise: Optional[Callable[[np.random.Generator, tuple], np.ndarray]] = None
    mean_map: Optional[Callable[[np.ndarray], np.ndarray]] = None
    meta: dict = field(default_factory=dict)
    accepts_n_plus_one: bool = True

    @property
    def randomized(self) -> bool:
        return self.noise is not None

    def on_atoms(self, points, weights) -> np.ndarray:
        """Deterministic part on a weighted (possibly batched) empirical measure."""
        return self.fn(np.asarray(points, dtype=float), np.asarray(weights, dtype=float))

    def evaluate(self, ds: Dataset, seed: int = 0) -> np.ndarray:
        out = self.on_atoms(ds.points, np.ones(ds.n))
        if self.noise is not None:
            out = out + self.noise(rng(seed), out.shape)
        return out

    def scaled(self, c: float) -> "Estimator":
        base = self.fn
        mm = self.mean_map
        return Estimator(
            id=f"{c}*{self.id}",
            dim=self.dim,
            fn=lambda p, w: c * base(p, w),
            certified=None if self.certified is None else (self.certified[0], c * self.certified[1]),
            noise=None if self.noise is None else (lambda g, shape: c * self.noise(g, shape)),
            mean_map=None if mm is None else (lambda m: c * mm(m)),
            meta=dict(self.meta),
        )


def sample_mean(dim: int = 1) -> Estimator:
    return Estimator("sample-mean", dim, weighted_mean, mean_map=lambda m: m)


def constant(value: Sequence[float]) -> Estimator:
    v = np.asarray(value, dtype=float).reshape(-1)

    def fn(points, weights):
        return np.broadcast_to(v, points.shape[:-2] + v.shape).copy()

    return Estimator("constant", v.size, fn, certified=(math.inf, 0.0), mean_map=lambda m: np.broadcast_to(v, m.shape).copy())
