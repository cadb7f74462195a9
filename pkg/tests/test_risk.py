import math

import numpy as np
import pytest

from stable_est import bounds as bd
from stable_est import estimators as es
from stable_est import risk as rk
from stable_est.core import BinaryPM, Discrete, StableEstError, constant, sample_mean


def test_constant_on_point_mass():
    dist = Discrete(np.array([[1.0]]), np.array([1.0]))
    res = rk.mc_risk(constant([0.0]), dist, 10, 100, seed=0)
    assert res.mse == 1.0 and res.std_error == 0.0


def test_sample_mean_variance_identity():
    res = rk.mc_risk(sample_mean(), BinaryPM(1.0, 0.5), 100, 20_000, seed=1)
    assert abs(res.mse - 0.01) <= 4 * res.std_error


def test_exact_matches_mc():
    est = es.exact_worst_bounded(30, 1.0, 0.03)
    dist = BinaryPM.with_mean(1.0, 0.4)
    exact = rk.exact_risk(est, dist, 30)
    mc = rk.mc_risk(est, dist, 30, 40_000, seed=2)
    assert abs(exact - mc.mse) <= 4 * mc.ci
    c = est.meta["factor"]
    assert exact == pytest.approx(float(bd.shrinkage_risk(30, 1.0, c, 0.4)), rel=1e-12)


def test_exact_worst_sup_case_one():
    n = 64
    est = es.exact_worst_bounded(n, 1.0, 2.0 / n)
    sr = rk.sup_risk(est, rk.binary_family(1.0), n)
    assert sr.sup == pytest.approx(1.0 / (math.sqrt(n) + 1) ** 2, rel=1e-9)


def test_sup_risk_extremes():
    n = 40
    sm = rk.sup_risk(sample_mean(), rk.binary_family(1.0), n)
    assert sm.argmax == 0.0 and sm.sup == pytest.approx(1 / n)
    zero = rk.sup_risk(constant([0.0]), rk.binary_family(1.0), n)
    assert zero.argmax == 1.0 and zero.sup == pytest.approx(1.0)


def test_std_error_scaling():
    dist = BinaryPM(1.0, 0.3)
    a = rk.mc_risk(sample_mean(), dist, 20, 10_000, seed=3).std_error
    b = rk.mc_risk(sample_mean(), dist, 20, 40_000, seed=3).std_error
    assert b / a == pytest.approx(0.5, rel=0.2)


def test_randomized_forces_mc():
    from stable_est.dpbridge import laplace_mechanism

    mech = laplace_mechanism(es.exact_worst_bounded(20, 1.0, 0.1), 1.0)
    res = rk.risk_at(mech, BinaryPM(1.0, 0.5), 20, 5000, 0)
    assert res.method == "mc"
    with pytest.raises(StableEstError):
        rk.exact_risk(mech, BinaryPM(1.0, 0.5), 20)


def test_bounded_sweep_shape_and_monotone():
    n = 100
    curve = rk.sweep("bounded", "inf", rk.default_beta_grid(n, 1.0, 15), n, reps=1000, seed=1)
    sup = curve.column("sup_mse")
    ci = curve.column("ci")
    assert np.all(np.diff(sup) <= 2 * (ci[1:] + ci[:-1]) + 1e-12)
    b = curve.column("beta")
    assert np.all(sup[b >= 2.0 / n] < 2.0 / n)
    assert np.all(sup[b <= 1.0 / (10 * n)] > 0.6)


def test_heavy_sweep_decreasing_midrange():
    n = 200
    betas = np.geomspace(3.0 / n, 30.0 / n, 6)
    curve = rk.sweep("heavy", "inf", betas, n, extra={"k": 2}, reps=1000, seed=1)
    sup = curve.column("sup_mse")
    assert np.all(np.diff(sup) < 0)
    assert np.max(sup[:-1] / sup[1:]) < 5  # no single jump


def test_sweep_grid_checks():
    with pytest.raises(StableEstError):
        rk.sweep("bounded", "inf", [0.1, 0.05], 10)
    with pytest.raises(StableEstError):
        rk.problem_setup("nope", math.inf, 10, 1.0)


def test_csv_round_trip(tmp_path):
    curve = rk.sweep("bounded", 1, rk.default_beta_grid(50, 1.0, 4), 50, reps=200, seed=0)
    path = tmp_path / "c.csv"
    curve.to_csv(path)
    header = path.read_text().split("\n")[0]
    assert header.startswith("beta,sup_mse,ci,bound_lower,bound_upper,argmax_param")
    back = rk.read_curve_csv(path)
    assert back.problem == "bounded" and back.p == 1.0 and np.allclose(back.column("sup_mse"), curve.column("sup_mse"))
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(StableEstError) as exc:
        rk.read_curve_csv(bad)
    assert exc.value.code == "schema-mismatch"


def test_threads_do_not_change_results():
    grid = rk.default_beta_grid(40, 1.0, 6)
    a = rk.sweep("heavy", 1, grid, 40, extra={"k": 2}, reps=300, seed=5, threads=1)
    b = rk.sweep("heavy", 1, grid, 40, extra={"k": 2}, reps=300, seed=5, threads=4)
    assert a.rows == b.rows


def test_slope_fit():
    x = np.geomspace(1, 100, 20)
    assert rk.slope_fit(x, x**2)[0] == pytest.approx(2.0, abs=1e-9)
    assert rk.slope_fit(x, np.full(20, 3.0))[0] == pytest.approx(0.0, abs=1e-12)
    noisy = x**-2 * np.exp(0.01 * np.random.default_rng(0).standard_normal(20))
    assert abs(rk.slope_fit(x, noisy)[0] + 2) <= 0.05
    with pytest.raises(StableEstError) as exc:
        rk.slope_fit([1, 2, 3], [1, 0, 2])
    assert exc.value.code == "nonpositive-values"
