"""Wavelet bases on [0, 1] and the coefficient machinery used by the estimators.

The expansion used throughout is the standard multiresolution one: a father
block phi_{l0,k} followed by mother levels psi_{lk}, l = l0..L.  Its span
equals the span of the scaling functions at level L + 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, List, Optional

import numpy as np

from .core import Dataset, StableEstError

PHI = "phi"
PSI = "psi"


@dataclass(frozen=True)
class WaveletBasis:
    family: str = "haar"
    order: int = 1
    l0: int = 0
    A: float = 1.0
    C_psi: float = 1.0
    K_loc: int = 1
    S_psi: float = 1.0

    @property
    def C_prime(self) -> float:
        """Constant in the kernel bound ||K_L(., x0)||_inf <= C' 2^L."""
        return 2.0 * self.K_loc * self.C_psi**2

    def _check(self, l: int, k: int, kind: str) -> None:
        if l < self.l0 or not 0 <= k < 2**l:
            raise StableEstError(f"no {kind}_{{{l},{k}}} in this basis", code="index-out-of-range")

    def evaluate(self, kind: str, l: int, k: int, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.family == "haar":
            return _haar(kind, l, k, x)
        return _daub_eval(self.order, kind, l, k, x)

    def active(self, kind: str, l: int, x0: float) -> List[tuple]:
        """(k, value) pairs with a nonzero basis function at x0."""
        if self.family == "haar":
            k = min(int(math.floor(x0 * 2**l)), 2**l - 1)
            v = float(_haar(kind, l, k, np.array([x0]))[0])
            return [(k, v)] if v != 0 else []
        out = []
        for k in range(2**l):
            v = float(self.evaluate(kind, l, k, np.array([x0]))[0])
            if abs(v) > 1e-14:
                out.append((k, v))
        return out


def haar_basis(l0: int = 0) -> WaveletBasis:
    return WaveletBasis("haar", 1, l0, 1.0, 1.0, 1, 1.0)


def _haar(kind: str, l: int, k: int, x: np.ndarray) -> np.ndarray:
    # right-continuous; the right end point 1 belongs to the last interval
    t = x * 2.0**l - k
    t = np.where((x == 1.0) & (k == 2**l - 1), 1.0 - 1e-15, t)
    amp = 2.0 ** (l / 2.0)
    inside = (t >= 0) & (t < 1)
    if kind == PHI:
        return np.where(inside, amp, 0.0)
    return np.where(inside, np.where(t < 0.5, amp, -amp), 0.0)


@lru_cache(maxsize=None)
def _daub_tables(N: int, level: int = 14):
    import pywt

    phi, psi, x = pywt.Wavelet(f"db{N}").wavefun(level=level)
    return np.asarray(x), np.asarray(phi), np.asarray(psi)


def _daub_eval(N: int, kind: str, l: int, k: int, x: np.ndarray) -> np.ndarray:
    grid, phi, psi = _daub_tables(N)
    table = phi if kind == PHI else psi
    span = grid[-1]
    scale = 2.0**l
    out = np.zeros_like(x, dtype=float)
    # periodize: sum over integer shifts of the argument
    reach = int(math.ceil(span / scale)) + 1
    for m in range(-reach, reach + 1):
        t = scale * (x + m) - k
        out += np.interp(t, grid, table, left=0.0, right=0.0)
    return 2.0 ** (l / 2.0) * out


def daubechies_basis(N: int, l0: Optional[int] = None, grid_points: int = 2**14) -> WaveletBasis:
    """Periodized Daubechies-N with localization constants measured on a grid."""
    if N < 2:
        return haar_basis(l0 or 0)
    if l0 is None:
        l0 = int(math.ceil(math.log2(2 * N - 1)))
    grid_x, phi, psi = _daub_tables(N)
    C = float(max(np.abs(phi).max(), np.abs(psi).max()))
    S = float(grid_x[-1])
    xs = (np.arange(grid_points) + 0.5) / grid_points
    level = l0 + 2
    K_loc = 0
    for x0 in xs[:: max(1, grid_points // 64)]:
        b = WaveletBasis("daubechies", N, l0, float(N), C, 1, S)
        K_loc = max(K_loc, len(b.active(PSI, level, float(x0))), len(b.active(PHI, l0, float(x0))))
    return WaveletBasis("daubechies", N, l0, float(N), C, K_loc, S)


def eval_basis(basis: WaveletBasis, l: int, k: int, x, kind: str = PSI):
    basis._check(l, k, kind)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x > 1):
        raise StableEstError("x must lie in [0, 1]", code="index-out-of-range")
    out = basis.evaluate(kind, l, k, x)
    return float(out) if out.ndim == 0 else out


def blocks(basis: WaveletBasis, L: int) -> List[tuple]:
    """(kind, level) blocks of the expansion truncated at level L; empty when L < l0."""
    if L < basis.l0:
        return []
    return [(PHI, basis.l0)] + [(PSI, l) for l in range(basis.l0, L + 1)]


@dataclass(frozen=True)
class Terms:
    """Basis functions active at x0, with their values there."""

    kind: tuple
    level: np.ndarray
    k: np.ndarray
    at_x0: np.ndarray

    def __len__(self):
        return len(self.kind)


def active_terms(basis: WaveletBasis, L: int, x0: float) -> Terms:
    kinds, levels, ks, vals = [], [], [], []
    for kind, l in blocks(basis, L):
        for k, v in basis.active(kind, l, x0):
            kinds.append(kind)
            levels.append(l)
            ks.append(k)
            vals.append(v)
    return Terms(tuple(kinds), np.array(levels, dtype=int), np.array(ks, dtype=int), np.array(vals, dtype=float))


def design(basis: WaveletBasis, terms: Terms, x: np.ndarray) -> np.ndarray:
    """Basis values at x for each term: shape x.shape + (len(terms),)."""
    cols = [basis.evaluate(kind, int(l), int(k), x) for kind, l, k in zip(terms.kind, terms.level, terms.k)]
    if not cols:
        return np.zeros(x.shape + (0,))
    return np.stack(cols, axis=-1)


def clip(y, T: float):
    """The clipping operator [y]_T."""
    if math.isinf(T):
        return y
    return np.clip(y, -T, T)


@dataclass
class WaveletCoeffs:
    kind: tuple
    level: np.ndarray
    k: np.ndarray
    fhat: np.ndarray
    fhat_T: np.ndarray
    S: np.ndarray
    T: float

    def rows(self):
        for i in range(len(self.kind)):
            yield (self.kind[i], int(self.level[i]), int(self.k[i]), float(self.fhat[i]), float(self.fhat_T[i]), float(self.S[i]))

    def to_csv(self) -> str:
        lines = ["kind,l,k,fhat,fhat_T,S"]
        for row in self.rows():
            lines.append("{},{},{},{:.17g},{:.17g},{:.17g}".format(*row))
        return "\n".join(lines) + "\n"


def empirical_coeffs(basis: WaveletBasis, ds: Dataset, L: int, T: float = math.inf, x0: Optional[float] = None) -> WaveletCoeffs:
    """f_hat, clipped f_hat^T and S for every (l, k) up to level L (or only those active at x0)."""
    if 2**L > ds.n:
        import warnings

        warnings.warn(f"level {L} is deeper than log2(n) for n={ds.n}", stacklevel=2)
    x, y = ds.points[:, 0], ds.points[:, 1]
    if x0 is not None:
        terms = active_terms(basis, L, x0)
    else:
        kinds, levels, ks = [], [], []
        for kind, l in blocks(basis, L):
            for k in range(2**l):
                kinds.append(kind)
                levels.append(l)
                ks.append(k)
        terms = Terms(tuple(kinds), np.array(levels), np.array(ks), np.zeros(len(ks)))
    Psi = design(basis, terms, x)
    n = ds.n
    fhat = y @ Psi / n
    fhat_T = clip(y, T) @ Psi / n
    S = np.abs(y) @ np.abs(Psi) / n
    return WaveletCoeffs(terms.kind, terms.level, terms.k, fhat, fhat_T, S, T)


def kernel_sup(basis: WaveletBasis, L: int, x0: float):
    """(grid supremum of |K_L(., x0)| on 2^(L+4) points, analytic bound C' 2^L)."""
    terms = active_terms(basis, L, x0)
    m = 2 ** (L + 4)
    grid = (np.arange(m) + 0.5) / m
    K = design(basis, terms, grid) @ terms.at_x0
    grid_sup = float(np.max(np.abs(K))) if len(terms) else 0.0
    return grid_sup, basis.C_prime * 2.0**L


def population_coeff(basis: WaveletBasis, f: Callable, kind: str, l: int, k: int) -> float:
    """Quadrature value of the inner product <f, basis function>."""
    from scipy.integrate import quad

    if basis.family == "haar":
        lo, hi = k * 2.0**-l, (k + 1) * 2.0**-l
        mid = 0.5 * (lo + hi)
        amp = 2.0 ** (l / 2.0)
        g = lambda t: float(np.asarray(f(np.array([t])))[0])
        left = quad(g, lo, mid, epsabs=1e-12, epsrel=1e-10, limit=200)[0]
        right = quad(g, mid, hi, epsabs=1e-12, epsrel=1e-10, limit=200)[0]
        return amp * (left + right) if kind == PHI else amp * (left - right)
    h = lambda t: float(np.asarray(f(np.array([t])))[0] * basis.evaluate(kind, l, k, np.array([t]))[0])
    return quad(h, 0.0, 1.0, epsabs=1e-12, epsrel=1e-10, limit=400)[0]


def is_dyadic_at(x0: float, level: int) -> bool:
    scaled = x0 * 2.0 ** (level + 1)
    return abs(scaled - round(scaled)) < 1e-12


# ---------------------------------------------------------------------------
# test functions


@dataclass(frozen=True)
class TestFunction:
    name: str
    nu: float
    f: Callable[[np.ndarray], np.ndarray]
    value: Callable[[float], float] = field(repr=False)

    __test__ = False  # keep pytest from collecting this class

    def __call__(self, x):
        return self.f(np.asarray(x, dtype=float))


def besov_test_functions(nu: float, count: int = 3, center: float = 0.5, A: float = 1.0) -> List[TestFunction]:
    """Deterministic fixtures of smoothness nu with closed-form point values.

    Order: cusp |x - c|^nu, triangle bump of height 1/2, constant 1/2, then
    cusps at shifted centres.
    """
    if not 0 < nu < A:
        raise StableEstError(f"need 0 < nu < A = {A}", code="regularity-violation")
    if count < 1:
        raise StableEstError("count must be positive", code="bad-argument")
    out: List[TestFunction] = []

    def cusp(c):
        return TestFunction(
            f"cusp(c={c:g})",
            nu,
            lambda x, c=c: np.abs(x - c) ** nu,
            lambda x0, c=c: abs(x0 - c) ** nu,
        )

    out.append(cusp(center))
    if count > 1:
        h, w = 0.5, 0.25
        out.append(TestFunction(
            f"triangle(c={center:g})",
            nu,
            lambda x: h * np.maximum(0.0, 1.0 - np.abs(x - center) / w),
            lambda x0: h * max(0.0, 1.0 - abs(x0 - center) / w),
        ))
    if count > 2:
        out.append(TestFunction("constant", nu, lambda x: np.full(np.shape(x), 0.5), lambda x0: 0.5))
    shift = 0
    while len(out) < count:
        shift += 1
        out.append(cusp((center + 0.137 * shift) % 1.0))
    return out
