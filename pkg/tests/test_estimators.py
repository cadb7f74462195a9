import math

import numpy as np
import pytest

from stable_est import estimators as es
from stable_est import stability as st
from stable_est import wavelet as wv
from stable_est.core import REGRESSION, Dataset, StableEstError


def ds1d(values, r=1.0):
    return Dataset(np.asarray(values, dtype=float)[:, None], r)


def test_shrinkage_thresholds():
    ident = es.shrinkage_bounded(es.BoundedMeanSpec(10, 1.0, 0.2))
    assert ident.meta["factor"] == 1.0
    zero = es.shrinkage_bounded(es.BoundedMeanSpec(10, 1.0, 0.0))
    assert zero.evaluate(ds1d([0.5, 0.9]))[0] == 0.0
    half = es.shrinkage_bounded(es.BoundedMeanSpec(10, 1.0, 0.1))
    assert half.meta["factor"] == pytest.approx(0.5)
    data = ds1d(np.linspace(-1, 1, 10))
    assert half.evaluate(data)[0] == pytest.approx(0.5 * np.linspace(-1, 1, 10).mean())


def test_refined_factor_uses_order():
    c_inf = es.shrinkage_factor(10, 1.0, 0.05, math.inf, refined=True)
    c_1 = es.shrinkage_factor(10, 1.0, 0.05, 1.0, refined=True)
    assert c_inf == pytest.approx(0.25) and c_1 == pytest.approx(0.5)


def test_exact_worst_factor():
    n = 100
    big = es.exact_worst_bounded(n, 1.0, 2.0 / (n * 1.1))
    assert big.meta["factor"] == pytest.approx(1 / (1 + 1 / math.sqrt(n)))
    assert es.exact_worst_bounded(n, 1.0, 1.0 / n).meta["factor"] == pytest.approx(0.5)


def test_avg_bounded_endpoints():
    n = 40
    m = np.linspace(-1, 1, 11)
    assert np.allclose(es.avg_bounded(n, 1.0, 1.0 / n).mean_map(m), m)
    assert np.all(es.avg_bounded(n, 1.0, 0.5 / n).mean_map(m) == 0)


def _avg_oracle(xbar, n, r, delta):
    """Independent re-implementation of the magnitude-adaptive shrinkage."""
    cut = 2 * r * (math.sqrt(delta) + 1 / math.sqrt(n))
    if abs(xbar) <= cut:
        return (1 - delta) * xbar
    return xbar - delta * cut * math.copysign(1.0, xbar)


@pytest.mark.parametrize("xbar", [-0.9, -0.3, 0.0, 0.05, 0.41, 0.8, 1.0])
def test_avg_bounded_formula(xbar):
    n, r = 100, 1.0
    beta = 1 / 150  # delta = 0.5
    est = es.avg_bounded(n, r, beta)
    assert est.meta["delta"] == pytest.approx(0.5)
    assert est.mean_map(np.array([xbar]))[0] == pytest.approx(_avg_oracle(xbar, n, r, 0.5), abs=1e-15)


def test_naive_avg_factors():
    n = 50
    assert es.naive_avg_bounded(n, 1.0, 1.0 / (2 * n)).meta["factor"] == 0.0
    assert es.naive_avg_bounded(n, 1.0, 1.0 / n).meta["factor"] == 1.0
    assert es.naive_avg_bounded(n, 1.0, 1.0 / (1.3 * n)).meta["factor"] == pytest.approx(0.7)


def test_heavy_worst_truncation():
    est = es.heavy_tail_estimator(es.HeavyTailSpec(10, 1.0, 2.0, 0.4))  # rho = 2
    small = ds1d([0.5, -1.0, 1.5], math.inf)
    assert est.evaluate(small)[0] == pytest.approx(small.points.mean())
    big = ds1d([0.5, -1.0, 5.0], math.inf)
    assert est.evaluate(big)[0] == pytest.approx((0.5 - 1.0 + 0.0) / 3)


def test_heavy_avg_is_sample_mean_when_light():
    n = 10
    est = es.heavy_tail_estimator(es.HeavyTailSpec(n, 1.0, 2.0, 24.0 / n, es.AVERAGE))
    data = ds1d([1.2, -0.3, 0.7, 1.9, -1.0], math.inf)
    assert est.evaluate(data)[0] == pytest.approx(data.points.mean())


def test_heavy_avg_self_normalizes():
    n = 4
    est = es.heavy_tail_estimator(es.HeavyTailSpec(n, 1.0, 2.0, 24.0 / n, es.AVERAGE))
    data = ds1d([10.0, 10.0, 0.0, 0.0], math.inf)
    # sum of norms 20 > 2 n r = 8, so the mean 5 is scaled by 8/20
    assert est.evaluate(data)[0] == pytest.approx(5.0 * 8 / 20)


def _sparse_oracle(m, s, c):
    order = sorted(np.abs(m), reverse=True)
    tau = order[s]
    return [c * math.copysign(max(abs(v) - tau, 0.0), v) for v in m]


def test_sparse_soft_hand_example():
    fmap = es.sparse_soft_map(2, 1.0)
    m = np.array([3.0, 1.0, 1.0, 0.0, 0.0])
    assert fmap(m).tolist() == [2.0, 0.0, 0.0, 0.0, 0.0]
    assert fmap(m).tolist() == _sparse_oracle(m, 2, 1.0)
    assert np.all(fmap(np.zeros(5)) == 0)


def test_sparse_soft_random_against_sort_oracle():
    g = np.random.default_rng(1)
    for _ in range(50):
        m = g.standard_normal(9)
        assert np.allclose(es.sparse_soft_map(3, 0.7)(m), _sparse_oracle(m, 3, 0.7))


def test_sparse_spec_checks():
    with pytest.raises(StableEstError):
        es.SparseMeanSpec(10, 1.0, 5, 5, 0.1)


def test_classical_thresholds():
    hard, soft = es.classical_thresholds(0.0, 3)
    m = np.array([0.3, -0.2, 0.0])
    assert np.allclose(soft.mean_map(m), m)
    hard, soft = es.classical_thresholds(0.5, 1)
    jump = hard.mean_map(np.array([0.5 + 1e-9]))[0] - hard.mean_map(np.array([0.5 - 1e-9]))[0]
    assert jump == pytest.approx(0.5, abs=1e-8)


def test_registry():
    assert set(es.REGISTRY) >= {"sample-mean", "exact-worst", "avg-bounded", "heavy-avg", "sparse-soft", "wavelet-avg"}
    with pytest.raises(StableEstError) as exc:
        es.build("nope")
    assert exc.value.code == "unknown-estimator"
    with pytest.raises(StableEstError) as exc:
        es.build("exact-worst", n=5)
    assert exc.value.code == "missing-parameter"


def _reg(x, y):
    return Dataset(np.column_stack([x, y]), kind=REGRESSION)


def test_wavelet_zero_response():
    g = np.random.default_rng(3)
    data = _reg(g.random(64), np.zeros(64))
    for mode, beta in ((es.WORST, 1.0), (es.AVERAGE, 1.0), (es.BASELINE, math.inf)):
        est = es.wavelet_estimator(es.WaveletEstimatorSpec(64, 0.3, 0.5, beta, mode))
        assert est.evaluate(data)[0] == 0.0


def test_wavelet_worst_equals_baseline_without_clipping():
    n = 256
    spec = es.WaveletEstimatorSpec(n, 0.3, 0.5, 10.0, es.WORST)
    assert spec.L == spec.L_opt
    g = np.random.default_rng(5)
    data = _reg(g.random(n), g.uniform(-1, 1, n))
    base = es.wavelet_estimator(es.WaveletEstimatorSpec(n, 0.3, 0.5, math.inf, es.BASELINE))
    assert es.wavelet_estimator(spec).evaluate(data)[0] == base.evaluate(data)[0]


def test_wavelet_spec_checks():
    with pytest.raises(StableEstError) as exc:
        es.WaveletEstimatorSpec(64, 0.5, 0.5, 1.0)
    assert exc.value.code == "x0-dyadic"
    with pytest.raises(StableEstError):
        es.WaveletEstimatorSpec(64, 1.2, 0.5, 1.0)
    with pytest.raises(StableEstError) as exc:
        es.WaveletEstimatorSpec(64, 0.3, 1.5, 1.0)
    assert exc.value.code == "regularity-violation"


def test_wavelet_worst_level_rule():
    n = 1024
    spec = es.WaveletEstimatorSpec(n, 0.3, 0.5, 0.0, es.WORST)
    assert spec.L < spec.basis.l0
    est = es.wavelet_estimator(spec)
    g = np.random.default_rng(0)
    assert est.evaluate(_reg(g.random(n), g.standard_normal(n)))[0] == 0.0
    beta = 0.2
    spec = es.WaveletEstimatorSpec(n, 0.3, 0.5, beta, es.WORST)
    expected = math.floor(math.log2(spec.c_psi * n * beta / spec.T))
    assert spec.L == min(expected, spec.L_opt)
    assert spec.worst_gap_bound() <= beta


@pytest.mark.parametrize(
    "eid,params,domain",
    [
        ("exact-worst", dict(n=8, r=1.0, beta=0.1), st.SearchDomain(8, 1, 1.0)),
        ("shrinkage-refined", dict(n=8, r=1.0, beta=0.05, p=2.0), st.SearchDomain(8, 1, 1.0)),
        ("avg-bounded", dict(n=8, r=1.0, beta=0.09), st.SearchDomain(8, 1, 1.0)),
        ("sparse-soft", dict(n=8, r=1.0, s=1, d=3, beta=0.3), st.SearchDomain(8, 3, 1.0, "linf")),
    ],
)
def test_small_budget_compliance(eid, params, domain):
    est = es.build(eid, **params)
    p = est.certified[0]
    rep = st.certify_sup(est, domain, p, st.SearchBudget(ascent_iters=100, max_evaluations=2000), seed=3)
    assert rep.budget_satisfied, (rep.found_sup, rep.budget_claim)


def test_avg_bounded_l1_on_all_corners():
    # exhaustive +-r configurations for n + 1 = 10
    n, r = 9, 1.0
    for beta in (0.6 / n, 0.75 / n, 0.95 / n):
        est = es.avg_bounded(n, r, beta)
        assert st.brute_force_corner_sup(est, n, r, 1) <= beta * (1 + 1e-9)


def test_deterministic_estimators_ignore_seed():
    data = ds1d([0.1, -0.4, 0.9, 0.3])
    for eid, params in [("exact-worst", dict(n=4, beta=0.2)), ("avg-bounded", dict(n=4, beta=0.2)), ("naive-avg", dict(n=4, beta=0.2))]:
        est = es.build(eid, **params)
        assert est.evaluate(data, seed=1).tolist() == est.evaluate(data, seed=99).tolist()


def test_permutation_invariance():
    g = np.random.default_rng(2)
    pts = g.uniform(-1, 1, (7, 3))
    perm = g.permutation(7)
    for est in (es.build("sparse-soft", n=7, s=1, d=3, beta=0.2),
                es.build("heavy-avg", n=7, k=2, beta=1.0, d=3),
                es.build("heavy-worst", n=7, k=2, beta=0.3, d=3)):
        a = est.evaluate(Dataset(pts))
        b = est.evaluate(Dataset(pts[perm]))
        assert np.allclose(a, b, rtol=1e-13, atol=1e-15)
