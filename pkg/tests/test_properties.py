"""Hypothesis property tests for the invariants of each module."""

import math

import numpy as np
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stable_est import bounds as bd
from stable_est import estimators as es
from stable_est import stability as stab
from stable_est import wavelet as wv
from stable_est.core import REGRESSION, Dataset, drop_point, replace_point, sample_mean

unit = st.floats(-1.0, 1.0, allow_nan=False)


def datasets(min_n=3, max_n=12, d=1):
    return arrays(np.float64, st.tuples(st.integers(min_n, max_n), st.just(d)), elements=unit).map(lambda a: Dataset(a, math.inf))


orders = st.sampled_from([1.0, 1.5, 2.0, 3.0, math.inf])


@given(datasets(), st.floats(0.001, 0.5))
def test_statistic_monotone_in_order(ds, beta):
    est = es.avg_bounded(ds.n - 1, 1.0, beta)
    vals = [stab.lp_statistic(est, ds, p) for p in (1.0, 1.5, 2.0, 4.0, math.inf)]
    assert all(a <= b * (1 + 1e-12) + 1e-15 for a, b in zip(vals, vals[1:]))


@given(datasets(d=2), orders, st.floats(0.0, 5.0))
def test_statistic_scales_linearly(ds, p, c):
    est = es.build("sparse-soft", n=ds.n - 1, s=1, d=2, beta=0.3)
    base = stab.lp_statistic(est, ds, p)
    assert math.isclose(stab.lp_statistic(est.scaled(c), ds, p), c * base, rel_tol=1e-12, abs_tol=1e-15)


@given(st.integers(2, 9), orders, st.sampled_from(["sample-mean", "exact-worst", "avg-bounded", "naive-avg"]),
       st.floats(0.01, 0.4))
def test_corner_stage_matches_brute_force(n, p, eid, beta):
    est = es.build(eid, n=n, beta=beta)
    rep = stab.certify_sup(est, stab.SearchDomain(n, 1, 1.0), p, stab.SearchBudget(ascent_iters=0), seed=0)
    assert math.isclose(rep.found_sup, stab.brute_force_corner_sup(est, n, 1.0, p), rel_tol=1e-12, abs_tol=1e-15)


@given(datasets(d=3), st.randoms(use_true_random=False))
def test_permutation_symmetry(ds, rnd):
    perm = list(range(ds.n))
    rnd.shuffle(perm)
    shuffled = ds.like(ds.points[perm])
    n = ds.n
    for est in (es.build("sparse-soft", n=n, s=1, d=3, beta=0.2), es.build("heavy-avg", n=n, k=2, beta=1.0, d=3),
                es.build("heavy-worst", n=n, k=3, beta=0.2, d=3), sample_mean(3)):
        assert np.allclose(est.evaluate(ds), est.evaluate(shuffled), rtol=1e-12, atol=1e-15)


@given(arrays(np.float64, st.integers(4, 40), elements=st.floats(-50, 50)), st.integers(0, 4))
def test_heavy_avg_l1_bound(values, seed):
    n = values.size - 1
    r = 1.0
    est = es.build("heavy-avg", n=n, r=r, k=2, beta=24 * r / n)
    ds = Dataset(values[:, None])
    assert stab.lp_statistic(est, ds, 1) <= 24 * r / (n + 1) * (1 + 1e-9)


@given(datasets(min_n=4, max_n=15, d=4), st.integers(0, 14), arrays(np.float64, 4, elements=unit), st.floats(0.01, 1.0))
def test_sparse_neighbour_gap(ds, i, new, beta):
    assume(i < ds.n)
    n, s = ds.n, 2
    spec = es.SparseMeanSpec(n, 1.0, s, 4, beta)
    est = es.sparse_soft(spec)
    gap = stab.worst_case_gap(est, ds, replace_point(ds, i, new))
    assert gap <= spec.c * 4 * math.sqrt(2 * s) / n * (1 + 1e-9) + 1e-15
    assert gap <= beta * (1 + 1e-9) + 1e-15


@given(st.integers(0, 2**31 - 1), st.floats(0.02, 2.0), st.floats(-40, 40))
def test_wavelet_worst_neighbour_gap(seed, beta, ynew):
    n = 256
    spec = es.WaveletEstimatorSpec(n, 0.3, 0.5, beta, es.WORST, sigma_assumed=0.2)
    est = es.wavelet_estimator(spec)
    g = np.random.default_rng(seed)
    ds = Dataset(np.column_stack([g.random(n), 3 * g.standard_normal(n)]), kind=REGRESSION)
    other = replace_point(ds, int(g.integers(n)), [float(g.random()), ynew])
    gap = stab.worst_case_gap(est, ds, other)
    assert gap <= spec.worst_gap_bound() * (1 + 1e-9) + 1e-15
    assert spec.worst_gap_bound() <= beta * (1 + 1e-12)


@given(st.integers(2, 200), st.integers(0, 2**31 - 1), st.integers(0, 5))
def test_coefficients_bounded_by_s(n, seed, L):
    g = np.random.default_rng(seed)
    ds = Dataset(np.column_stack([g.random(n), g.standard_normal(n) * 5]), kind=REGRESSION)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        c = wv.empirical_coeffs(wv.haar_basis(), ds, L)
    assert np.all(np.abs(c.fhat) <= c.S * (1 + 1e-12) + 1e-15)
    assert np.all(np.abs(c.fhat_T) <= c.S * (1 + 1e-12) + 1e-15)


@given(st.integers(1, 400), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_exact_risk_monotone(n, b1, b2):
    lo, hi = sorted((b1, b2))
    assert bd.exact_risk_worst_bounded(n, 1.0, hi) <= bd.exact_risk_worst_bounded(n, 1.0, lo) + 1e-15
    v = bd.exact_risk_worst_bounded(n, 1.0, lo)
    assert 1.0 / (math.sqrt(n) + 1) ** 2 - 1e-15 <= v <= 1.0


@given(st.integers(1, 60), st.floats(0.01, 0.99), st.sampled_from([1.0, 2.0, 5.0]))
def test_binomial_oracles_hold(n, q, p):
    assert bd.binom_ratio_oracle(n, q, p).passed
    assert bd.binom_moment_check(n, q, p).passed
    assert bd.binom_log_oracle(n, q, p).passed


@given(datasets(), st.integers(0, 11), unit)
def test_replace_and_drop_do_not_mutate(ds, i, v):
    assume(i < ds.n)
    before = ds.points.copy()
    replace_point(ds, i, [v])
    drop_point(ds, i)
    assert np.array_equal(ds.points, before)


@given(datasets(), st.floats(0.001, 0.3))
def test_two_notions_ordered(ds, beta):
    a, b = stab.two_notion_gap_check(es.avg_bounded(ds.n - 1, 1.0, beta), ds)
    # the averaged-centre deviation never exceeds the pairwise mean discrepancy
    assert b <= a * (1 + 1e-12) + 1e-15
