import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from stable_est import estimators as es
from stable_est import stability as st
from stable_est.core import Dataset, StableEstError, constant, drop_point, replace_point, sample_mean


def naive_lp(est, ds, p):
    """Direct double loop over leave-one-out datasets."""
    outs = [est.evaluate(drop_point(ds, i)) for i in range(ds.n)]
    if math.isinf(p):
        return max(np.linalg.norm(a - b) for a in outs for b in outs)
    s = sum(np.linalg.norm(a - b) ** p for a in outs for b in outs)
    return (s / ds.n**2) ** (1 / p)


def pm_dataset(plus, minus, r=1.0):
    return Dataset(np.array([r] * plus + [-r] * minus)[:, None], r)


def test_worst_case_gap_sample_mean():
    base = np.ones((10, 1))
    base[0] = -1
    ds1 = Dataset(base, 1.0)
    ds2 = replace_point(ds1, 0, [1.0])
    assert st.worst_case_gap(sample_mean(), ds1, ds2) == pytest.approx(0.2, abs=1e-15)
    assert st.worst_case_gap(sample_mean(), ds1, ds1) == 0.0
    assert st.worst_case_gap(constant([0.3]), ds1, ds2) == 0.0


def test_worst_case_gap_rejects_far_pairs():
    ds1 = pm_dataset(3, 0)
    ds2 = pm_dataset(1, 2)
    with pytest.raises(StableEstError):
        st.worst_case_gap(sample_mean(), ds1, ds2)


def test_balanced_sample_mean_l1_statistic():
    # 12 points, six at each sign: pairs across signs differ by 2/11
    value = st.lp_statistic(sample_mean(), pm_dataset(6, 6), 1)
    frac = Fraction(2 * 6 * 6, 144) * Fraction(2, 11)
    assert value == pytest.approx(float(frac), abs=1e-15)
    assert value == pytest.approx(1 / 11, abs=1e-15)


def test_identical_points_give_zero():
    ds = Dataset(np.full((5, 2), 0.3))
    for p in (1, 2, math.inf):
        assert st.lp_statistic(sample_mean(2), ds, p) == 0.0


@pytest.mark.parametrize("p", [1.0, 1.5, 3.0, math.inf])
def test_lp_statistic_matches_naive_loop(p):
    g = np.random.default_rng(4)
    ds = Dataset(g.uniform(-1, 1, (9, 2)), math.inf)
    for est in (sample_mean(2), es.build("sparse-soft", n=8, s=1, d=2, beta=0.5)):
        assert st.lp_statistic(est, ds, p) == pytest.approx(naive_lp(est, ds, p), rel=1e-12, abs=1e-15)


def test_closed_form_values():
    assert st.closed_form_mean_stability(10, 1, "inf") == pytest.approx(0.2, abs=1e-15)
    assert st.closed_form_mean_stability(11, 1, 1) == pytest.approx(1 / 11, abs=1e-15)
    assert st.closed_form_mean_stability(10, 1, 1) == pytest.approx(12 / 121, abs=1e-15)


@pytest.mark.parametrize("p", [1.0, 2.0, 3.5])
def test_closed_form_general_p_matches_enumeration(p):
    m = np.arange(12)
    oracle = max((2 * m * (11 - m) * 2**p / (121 * 10**p)) ** (1 / p))
    assert st.closed_form_mean_stability(10, 1, p) == pytest.approx(oracle, rel=1e-13)
    assert st.brute_force_corner_sup(sample_mean(), 10, 1.0, p) == pytest.approx(oracle, rel=1e-12)


def test_certify_sample_mean_worst_case():
    rep = st.certify_sup(sample_mean(), st.SearchDomain(10, 1, 1.0), "inf", seed=0)
    assert rep.found_sup == pytest.approx(0.2, abs=1e-12)
    a, b = rep.witness
    assert a.n == b.n == 10
    diff = np.flatnonzero(np.any(a.points != b.points, axis=1))
    assert len(diff) == 1
    assert sorted([a.points[diff[0], 0], b.points[diff[0], 0]]) == [-1.0, 1.0]


def test_certify_sample_mean_average_case_odd_n():
    rep = st.certify_sup(sample_mean(), st.SearchDomain(11, 1, 1.0), 1, seed=0)
    assert rep.found_sup == pytest.approx(1 / 11, abs=1e-12)
    w = rep.witness.points.ravel()
    assert sorted(set(w.tolist())) == [-1.0, 1.0] and abs((w > 0).sum() - (w < 0).sum()) == 0


def test_two_notion_gap():
    assert st.two_notion_gap_check(constant([1.0]), pm_dataset(3, 2)) == (0.0, 0.0)
    a, b = st.two_notion_gap_check(sample_mean(), pm_dataset(6, 6))
    # leave-one-out means are +-1/11; each sits 1/11 from their average 0
    assert a == pytest.approx(1 / 11, abs=1e-15)
    assert b == pytest.approx(1 / 11, abs=1e-15) and b <= a + 1e-15


def test_order_parsing():
    assert st.parse_order("inf") == math.inf
    assert st.format_order(math.inf) == "inf" and st.format_order(2.0) == "2"
    with pytest.raises(StableEstError):
        st.parse_order(0.5)


def test_budget_validation():
    with pytest.raises(StableEstError):
        st.SearchBudget(random_restarts=0)
    assert st.SearchBudget.from_dict({"max_evaluations": "50", "junk": 1}).max_evaluations == 50


def test_unbounded_domain_requires_box():
    with pytest.raises(StableEstError):
        st.certify_sup(sample_mean(), st.SearchDomain(5, 1, math.inf), "inf")


def test_search_respects_evaluation_cap():
    rep = st.certify_sup(sample_mean(), st.SearchDomain(30, 1, 1.0), 2, st.SearchBudget(max_evaluations=200), seed=1)
    assert rep.evaluations <= 200 + 64


def test_budget_claim_reported():
    est = es.build("exact-worst", n=10, r=1.0, beta=0.05)
    rep = st.certify_sup(est, st.SearchDomain(10, 1, 1.0), "inf", seed=2)
    assert rep.budget_claim == pytest.approx(0.05)
    assert rep.budget_satisfied
    assert rep.to_dict()["order"] == "inf"


def test_triangle_chain():
    g = np.random.default_rng(9)
    ds1 = Dataset(g.uniform(-1, 1, (8, 1)), 1.0)
    ds2 = replace_point(ds1, 2, [0.9])
    ds3 = replace_point(ds2, 2, [-0.7])
    est = es.build("avg-bounded", n=8, r=1.0, beta=0.09)
    g12 = st.worst_case_gap(est, ds1, ds2)
    g23 = st.worst_case_gap(est, ds2, ds3)
    assert st.worst_case_gap(est, ds1, ds3) <= g12 + g23 + 1e-15
