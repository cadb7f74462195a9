"""Stability metrics on fixed datasets and adversarial certification of suprema.

Everything here works on a compressed representation of D_{n+1}: distinct
points ("atoms") and their multiplicities.  Leave-one-out outputs only depend
on which atom loses a copy, so a dataset with K distinct points needs K
estimator calls instead of n+1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import kernels
from .core import (
    REGRESSION,
    VECTOR,
    Dataset,
    Estimator,
    StableEstError,
    derive_seed,
    hamming,
    point_norms,
    rng,
)

INF = math.inf


def parse_order(p) -> float:
    if isinstance(p, str):
        p = INF if p.strip().lower() in ("inf", "infinity", "∞") else float(p)
    p = float(p)
    if not p >= 1:
        raise StableEstError(f"stability order must be >= 1, got {p}", code="bad-order")
    return p


def format_order(p: float) -> str:
    return "inf" if math.isinf(p) else format(p, "g")


# ---------------------------------------------------------------------------
# exact evaluators


def worst_case_gap(est: Estimator, ds1: Dataset, ds2: Dataset, draws: int = 64, seed: int = 0) -> float:
    """E_xi ||est(ds1; xi) - est(ds2; xi)|| for datasets at Hamming distance <= 1."""
    if hamming(ds1, ds2) > 1:
        raise StableEstError("datasets differ in more than one point", code="hamming-distance-exceeded")
    if not est.randomized:
        return float(np.linalg.norm(est.evaluate(ds1) - est.evaluate(ds2)))
    gaps = []
    for m in range(draws):
        s = derive_seed(seed, m)
        gaps.append(np.linalg.norm(est.evaluate(ds1, s) - est.evaluate(ds2, s)))
    return float(np.mean(gaps))


def compress(points: np.ndarray):
    """Distinct rows and their multiplicities, in first-appearance order."""
    uniq, first, counts = np.unique(points, axis=0, return_index=True, return_counts=True)
    order = np.argsort(first, kind="stable")
    return uniq[order], counts[order].astype(float)


def loo_outputs(est: Estimator, atoms: np.ndarray, counts: np.ndarray, kind: str = VECTOR) -> np.ndarray:
    """Deterministic estimator output after removing one copy of each atom.

    ``atoms`` is (..., K, d) and ``counts`` (..., K); returns (..., K, dim).
    """
    atoms = np.asarray(atoms, dtype=float)
    counts = np.asarray(counts, dtype=float)
    K = atoms.shape[-2]
    if est.mean_map is not None and kind == VECTOR:
        total = np.einsum("...k,...kd->...d", counts, atoms)
        m = counts.sum(axis=-1) - 1.0
        means = (total[..., None, :] - atoms) / m[..., None, None]
        return est.mean_map(means)
    eye = np.eye(K)
    weights = counts[..., None, :] - eye
    cell = K * K * atoms.shape[-1]
    chunk = max(1, int(4_000_000 // max(cell, 1)))
    batch_shape = atoms.shape[:-2]
    if batch_shape == () or int(np.prod(batch_shape)) <= chunk:
        pts = np.broadcast_to(atoms[..., None, :, :], batch_shape + (K, K, atoms.shape[-1]))
        return est.on_atoms(pts, weights)
    flat_atoms = atoms.reshape((-1, K, atoms.shape[-1]))
    flat_w = weights.reshape((-1, K, K))
    outs = []
    for start in range(0, flat_atoms.shape[0], chunk):
        a = flat_atoms[start:start + chunk]
        pts = np.broadcast_to(a[:, None, :, :], (a.shape[0], K, K, a.shape[-1]))
        outs.append(est.on_atoms(pts, flat_w[start:start + chunk]))
    out = np.concatenate(outs, axis=0)
    return out.reshape(batch_shape + out.shape[1:])


def _loo_single(est: Estimator, atoms, counts, kind) -> np.ndarray:
    """Leave-one-out outputs for one (unbatched) atom set, chunked over rows."""
    K, d = atoms.shape
    if est.mean_map is not None and kind == VECTOR:
        return loo_outputs(est, atoms, counts, kind)
    rows = max(1, int(4_000_000 // max(K * d, 1)))
    if rows >= K:
        return loo_outputs(est, atoms, counts, kind)
    outs = []
    for start in range(0, K, rows):
        stop = min(K, start + rows)
        w = np.broadcast_to(counts, (stop - start, K)).copy()
        w[np.arange(stop - start), np.arange(start, stop)] -= 1.0
        pts = np.broadcast_to(atoms, (stop - start, K, d))
        outs.append(est.on_atoms(pts, w))
    return np.concatenate(outs, axis=0)


def _stat_from_outputs(outs: np.ndarray, counts: np.ndarray, p: float, total: float):
    if math.isinf(p):
        value, a, b = kernels.weighted_max_dist(outs, counts)
        return value, (a, b)
    s = kernels.weighted_power_sum(outs, counts, p)
    return (max(s, 0.0) / total**2) ** (1.0 / p), None


def _noise_draws(est: Estimator, draws: int, seed: int, dim: int):
    return [est.noise(rng(derive_seed(seed, m)), (dim,)) for m in range(draws)]


def lp_statistic_atoms(est: Estimator, atoms, counts, p, kind: str = VECTOR, draws: int = 64, seed: int = 0):
    """The l_p statistic of D_{n+1} given as atoms with multiplicities."""
    p = parse_order(p)
    atoms = np.asarray(atoms, dtype=float)
    counts = np.asarray(counts, dtype=float)
    total = float(counts.sum())
    if total < 2:
        raise StableEstError("D_{n+1} needs at least two points", code="too-small")
    outs = _loo_single(est, atoms, counts, kind)
    if not est.randomized:
        return _stat_from_outputs(outs, counts, p, total)[0]
    # common seed for both sides of every pair: E_xi sits inside the double sum
    vals = []
    for noise in _noise_draws(est, draws, seed, outs.shape[-1]):
        shifted = outs + noise
        if math.isinf(p):
            vals.append(kernels.weighted_max_dist(shifted, counts)[0])
        else:
            vals.append(kernels.weighted_power_sum(shifted, counts, p))
    if math.isinf(p):
        return float(np.mean(vals))
    return (max(float(np.mean(vals)), 0.0) / total**2) ** (1.0 / p)


def lp_statistic(est: Estimator, ds: Dataset, p, draws: int = 64, seed: int = 0) -> float:
    """{(n+1)^-2 sum_{i,j} E||est(D^-i) - est(D^-j)||^p}^(1/p); max over pairs at p = inf."""
    atoms, counts = compress(ds.points)
    return float(lp_statistic_atoms(est, atoms, counts, p, ds.kind, draws, seed))


def closed_form_mean_stability(n: int, r: float, p) -> float:
    """Exact supremum of the l_p statistic of the one-dimensional sample mean."""
    p = parse_order(p)
    if n < 1 or r <= 0:
        raise StableEstError("need n >= 1 and r > 0", code="bad-argument")
    if math.isinf(p):
        return 2.0 * r / n
    m = np.arange(n + 2, dtype=float)
    inner = 2.0 * m * (n + 1 - m) * (2.0 * r) ** p / ((n + 1.0) ** 2 * float(n) ** p)
    return float(inner.max() ** (1.0 / p))


def two_notion_gap_check(est: Estimator, ds: Dataset):
    """(pairwise l_1 statistic, mean deviation from the averaged leave-one-out output)."""
    atoms, counts = compress(ds.points)
    total = counts.sum()
    if total < 2:
        raise StableEstError("D_{n+1} needs at least two points", code="too-small")
    outs = _loo_single(est, atoms, counts, ds.kind)
    a = kernels.weighted_power_sum(outs, counts, 1.0) / total**2
    center = counts @ outs / total
    b = float(counts @ np.linalg.norm(outs - center, axis=-1) / total)
    return float(a), b


def brute_force_corner_sup(est: Estimator, n: int, r: float, p) -> float:
    """Maximum of the l_p statistic over all 2^(n+1) sign patterns (d = 1)."""
    import itertools

    p = parse_order(p)
    best = 0.0
    for signs in itertools.product((-r, r), repeat=n + 1):
        ds = Dataset(np.array(signs)[:, None])
        best = max(best, lp_statistic(est, ds, p))
    return best


# ---------------------------------------------------------------------------
# certification by search


@dataclass(frozen=True)
class SearchBudget:
    random_restarts: int = 6
    ascent_iters: int = 400
    corner_enumeration_limit: int = 64
    per_coordinate_grid: int = 9
    max_evaluations: int = 10_000

    def __post_init__(self):
        for name in ("random_restarts", "corner_enumeration_limit", "per_coordinate_grid", "max_evaluations"):
            if getattr(self, name) <= 0:
                raise StableEstError(f"{name} must be positive", code="bad-budget")
        if self.ascent_iters < 0:
            raise StableEstError("ascent_iters must be nonnegative", code="bad-budget")

    @classmethod
    def from_dict(cls, data: dict) -> "SearchBudget":
        return cls(**{k: int(v) for k, v in data.items() if k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class SearchDomain:
    """Where D_{n+1} may live.

    ``n`` is the size of the datasets the estimator sees; D_{n+1} has n + 1
    points.  Unbounded coordinates need ``box`` (for regression pairs it
    bounds |y|).
    """

    n: int
    d: int = 1
    radius: float = 1.0
    norm: str = "l2"
    kind: str = VECTOR
    box: Optional[float] = None

    @property
    def extent(self) -> float:
        if self.kind == REGRESSION or not math.isfinite(self.radius):
            if self.box is None or not math.isfinite(self.box):
                raise StableEstError("unbounded domain needs a search box", code="unbounded-domain")
            return float(self.box)
        return float(self.radius)

    @property
    def dim(self) -> int:
        return 2 if self.kind == REGRESSION else self.d

    def project(self, pts: np.ndarray) -> np.ndarray:
        pts = np.array(pts, dtype=float)
        E = self.extent
        if self.kind == REGRESSION:
            pts[..., 0] = np.clip(pts[..., 0], 0.0, 1.0)
            pts[..., 1] = np.clip(pts[..., 1], -E, E)
            return pts
        if self.norm == "l2" and math.isfinite(self.radius):
            nrm = point_norms(pts, "l2")
            scale = np.where(nrm > E, E / np.where(nrm > 0, nrm, 1.0), 1.0)
            return pts * scale[..., None]
        return np.clip(pts, -E, E)

    def random_points(self, g: np.random.Generator, k: int) -> np.ndarray:
        E = self.extent
        if self.kind == REGRESSION:
            x = g.random(k)
            y = np.where(g.random(k) < 0.5, E * g.choice([-1.0, 1.0], k), g.uniform(-E, E, k))
            return np.column_stack([x, y])
        if self.norm == "l2" and math.isfinite(self.radius):
            v = g.standard_normal((k, self.d))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            rad = np.where(g.random(k) < 0.6, E, E * g.random(k))
            return v * rad[:, None]
        corner = E * g.choice([-1.0, 1.0], (k, self.d))
        inner = g.uniform(-E, E, (k, self.d))
        return np.where(g.random((k, 1)) < 0.6, corner, inner)

    def sign_points(self) -> list:
        """Structured boundary points used by the corner stage."""
        E = self.extent
        if self.kind == REGRESSION:
            return []
        if self.d == 1:
            return [np.array([E])]
        ax = np.zeros(self.d)
        ax[0] = E
        if self.norm == "l2" and math.isfinite(self.radius):
            return [ax, np.full(self.d, E / math.sqrt(self.d))]
        return [ax, np.full(self.d, E)]


@dataclass
class StabilityReport:
    order: float
    found_sup: float
    witness: Union[Dataset, tuple]
    budget_claim: Optional[float] = None
    budget_satisfied: Optional[bool] = None
    evaluations: int = 0
    strategy: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "order": format_order(self.order),
            "found_sup": self.found_sup,
            "budget_claim": self.budget_claim,
            "budget_satisfied": self.budget_satisfied,
            "evaluations": self.evaluations,
            "strategy": self.strategy,
        }


BUDGET_RTOL = 1e-9


def claim_for(est: Estimator, p: float) -> Optional[float]:
    """Budget implied by the handle's certificate at order p (l_p implies l_q for q <= p)."""
    if est.certified is None:
        return None
    p0, beta = est.certified
    return float(beta) if p <= p0 else None


class _Searcher:
    def __init__(self, est: Estimator, domain: SearchDomain, p: float, budget: SearchBudget, seed: int):
        self.est = est
        self.domain = domain
        self.p = p
        self.budget = budget
        self.seed = seed
        self.evals = 0
        self.best = -1.0
        self.best_state = None

    # objective -----------------------------------------------------------
    def _values(self, atoms: np.ndarray, counts: np.ndarray) -> np.ndarray:
        """Objective for a batch of candidate states (G, K, dim), (G, K)."""
        G, K = counts.shape
        self.evals += G
        if K < 2:
            return np.zeros(G)
        outs = loo_outputs(self.est, atoms, counts, self.domain.kind)
        if self.est.randomized:
            return np.array([
                lp_statistic_atoms(self.est, atoms[g], counts[g], self.p, self.domain.kind)
                for g in range(G)
            ])
        total = counts[0].sum()
        vals = np.empty(G)
        for g in range(G):
            vals[g] = _stat_from_outputs(outs[g], counts[g], self.p, total)[0]
        return vals

    def _consider(self, atoms, counts, vals):
        i = int(np.argmax(vals))
        if vals[i] > self.best:
            self.best = float(vals[i])
            self.best_state = (atoms[i].copy(), counts[i].copy())
        return i

    # stages ---------------------------------------------------------------
    def corners(self) -> None:
        dom = self.domain
        total = dom.n + 1
        if dom.kind == REGRESSION:
            return
        if total <= self.budget.corner_enumeration_limit:
            ms = np.arange(1, total)
        else:
            ms = np.unique(np.array([1, total // 4, total // 2, total - 1]))
        for u in dom.sign_points():
            atoms = np.broadcast_to(np.stack([-u, u]), (len(ms), 2, dom.dim)).copy()
            counts = np.column_stack([total - ms, ms]).astype(float)
            self._consider(atoms, counts, self._values(atoms, counts))
            # one point at the boundary, the rest at the centre
            zero_atoms = np.broadcast_to(np.stack([np.zeros_like(u), u]), (len(ms), 2, dom.dim)).copy()
            self._consider(zero_atoms, counts, self._values(zero_atoms, counts))

    def _initial(self, g: np.random.Generator, t: int):
        total = self.domain.n + 1
        K = [2, 3, 5, 8][t % 4]
        K = min(K, total)
        atoms = self.domain.random_points(g, K)
        cuts = np.sort(g.choice(np.arange(1, total), size=K - 1, replace=False))
        counts = np.diff(np.concatenate([[0], cuts, [total]])).astype(float)
        if t % 2 == 1 and self.best_state is not None and self.best_state[0].shape[0] == K:
            atoms = self.domain.project(self.best_state[0] + 0.1 * self.domain.extent * g.standard_normal(atoms.shape))
        return atoms, counts

    def _proposals(self, g, atoms, counts, step):
        dom = self.domain
        K, dim = atoms.shape
        E = dom.extent
        a = int(g.integers(K))
        grid = np.linspace(-E, E, self.budget.per_coordinate_grid)
        cands = []
        if dom.kind == REGRESSION:
            j = int(g.integers(2))
            if j == 0:
                vals = np.concatenate([g.random(len(grid)), atoms[a, 0] + step * np.array([-1.0, 1.0]) / E])
            else:
                vals = np.concatenate([grid, atoms[a, 1] + step * np.array([-1.0, 1.0])])
            for v in vals:
                c = atoms.copy()
                c[a, j] = v
                cands.append(c)
        elif dim == 1:
            vals = np.concatenate([grid, atoms[a, 0] + step * np.array([-1.0, -0.25, 0.25, 1.0])])
            for v in vals:
                c = atoms.copy()
                c[a, 0] = v
                cands.append(c)
        else:
            j = int(g.integers(dim))
            for v in grid:
                c = atoms.copy()
                c[a, j] = v
                cands.append(c)
            mean = counts @ atoms / counts.sum()
            sgn = np.where(mean >= 0, 1.0, -1.0)
            other = atoms[(a + 1) % K]
            informed = [sgn * E, -sgn * E, -other, atoms[a] + step * g.standard_normal(dim)]
            informed += list(dom.random_points(g, 2))
            for v in informed:
                c = atoms.copy()
                c[a] = v
                cands.append(c)
        cand_atoms = dom.project(np.stack(cands))
        cand_counts = np.broadcast_to(counts, (len(cands), K)).copy()
        if K >= 2:
            # move multiplicity between two atoms
            for _ in range(2):
                src, dst = g.choice(K, 2, replace=False)
                if counts[src] > 1:
                    moved = counts.copy()
                    shift = max(1.0, float(np.floor(counts[src] * g.random() * 0.5)))
                    moved[src] -= shift
                    moved[dst] += shift
                    cand_atoms = np.concatenate([cand_atoms, atoms[None]])
                    cand_counts = np.concatenate([cand_counts, moved[None]])
        return cand_atoms, cand_counts

    def climb(self) -> None:
        budget = self.budget
        restarts = budget.random_restarts
        for t in range(restarts):
            remaining = budget.max_evaluations - self.evals
            if remaining <= 0 or budget.ascent_iters == 0:
                return
            share = remaining // (restarts - t)
            stop_at = self.evals + share
            g = rng(derive_seed(self.seed, t))
            atoms, counts = self._initial(g, t)
            cur = self._values(atoms[None], counts[None])[0]
            self._consider(atoms[None], counts[None], np.array([cur]))
            step = 0.25 * self.domain.extent
            for _ in range(budget.ascent_iters):
                if self.evals >= stop_at:
                    break
                ca, cc = self._proposals(g, atoms, counts, step)
                vals = self._values(ca, cc)
                i = self._consider(ca, cc, vals)
                if vals[i] > cur * (1 + 1e-12) + 1e-300:
                    atoms, counts, cur = ca[i].copy(), cc[i].copy(), float(vals[i])
                else:
                    step = max(step * 0.7, 1e-6 * self.domain.extent)


def _expand(atoms: np.ndarray, counts: np.ndarray) -> np.ndarray:
    return np.repeat(atoms, counts.astype(int), axis=0)


def _witness_pair(atoms, counts, a, b, like: Dataset):
    """(D^-a, D^-b) laid out so they differ only in the last row."""
    rest = counts.copy()
    rest[a] -= 1
    rest[b] -= 1
    common = _expand(atoms, rest)
    ds_drop_a = like.like(np.vstack([common, atoms[b][None]]))
    ds_drop_b = like.like(np.vstack([common, atoms[a][None]]))
    return ds_drop_a, ds_drop_b


def certify_sup(
    est: Estimator,
    domain: SearchDomain,
    p,
    budget: Optional[SearchBudget] = None,
    seed: int = 0,
    beta: Optional[float] = None,
) -> StabilityReport:
    """Search for the supremum of the l_p statistic; the result is a lower estimate.

    Stage (a) enumerates two-atom boundary configurations (for d = 1 this is
    the full exchangeable corner set when n + 1 is small).  Stage (b) runs
    seeded random restarts of coordinatewise hill climbing on atom positions
    and multiplicities.  The reported value is recomputed from the witness
    through the exact evaluators.
    """
    p = parse_order(p)
    budget = budget or SearchBudget()
    domain.extent  # raises for unbounded domains without a box
    s = _Searcher(est, domain, p, budget, seed)
    s.corners()
    strategy = "corners"
    if budget.ascent_iters > 0 and s.evals < budget.max_evaluations:
        s.climb()
        strategy = "corners+hill-climb"
    atoms, counts = s.best_state
    radius = domain.radius if domain.kind == VECTOR else math.inf
    template = Dataset(atoms[:1], radius, domain.kind, domain.norm)
    if math.isinf(p):
        outs = _loo_single(est, atoms, counts, domain.kind)
        _, a, b = kernels.weighted_max_dist(outs, counts)
        if a == b:
            b = (a + 1) % len(counts)
        witness = _witness_pair(atoms, counts, a, b, template)
        found = worst_case_gap(est, *witness)
    else:
        witness = template.like(_expand(atoms, counts))
        found = lp_statistic(est, witness, p)
    claim = beta if beta is not None else claim_for(est, p)
    satisfied = None if claim is None else bool(found <= claim * (1 + BUDGET_RTOL))
    return StabilityReport(p, found, witness, claim, satisfied, s.evals, strategy)
