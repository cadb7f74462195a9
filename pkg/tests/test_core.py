import math

import numpy as np
import pytest

from stable_est import core
from stable_est.core import (
    BinaryPM,
    Dataset,
    Discrete,
    DomainViolation,
    HeavyTwoPoint,
    SparseMean,
    StableEstError,
    drop_point,
    replace_point,
    sample,
)


def test_degenerate_binary_sample():
    ds = sample(BinaryPM(1.0, 1.0), 3, seed=11)
    assert ds.points.ravel().tolist() == [1.0, 1.0, 1.0]


def test_point_mass_sample():
    ds = sample(Discrete(np.array([[0.0]]), np.array([1.0])), 5, seed=3)
    assert np.all(ds.points == 0) and ds.n == 5


def test_fair_binary_mean_in_clt_band():
    n = 10**5
    ds = sample(BinaryPM(1.0, 0.5), n, seed=7)
    assert abs(ds.points.mean()) <= 3 / math.sqrt(n)


def test_sample_reproducible():
    a = sample(HeavyTwoPoint(1.0, 2.0, 0.1), 50, seed=5)
    b = sample(HeavyTwoPoint(1.0, 2.0, 0.1), 50, seed=5)
    assert a == b and a.points.tobytes() == b.points.tobytes()


def test_replace_and_drop():
    ds = Dataset(np.zeros((3, 1)), 1.0)
    assert replace_point(ds, 1, [1.0]).points.ravel().tolist() == [0.0, 1.0, 0.0]
    assert np.all(ds.points == 0)  # input untouched
    abc = Dataset(np.array([[1.0], [2.0], [3.0]]))
    assert drop_point(abc, 0).points.ravel().tolist() == [2.0, 3.0]
    assert drop_point(abc, 2).points.ravel().tolist() == [1.0, 2.0]


def test_replace_twice_is_identity():
    ds = Dataset(np.array([[0.2], [-0.4]]), 1.0)
    back = replace_point(replace_point(ds, 0, [0.9]), 0, [0.2])
    assert back == ds


def test_domain_checks():
    with pytest.raises(DomainViolation):
        Dataset(np.array([[2.0]]), 1.0)
    with pytest.raises(DomainViolation):
        Dataset(np.array([[np.nan]]))
    with pytest.raises(StableEstError):
        replace_point(Dataset(np.zeros((2, 1)), 1.0), 5, [0.0])


def test_points_read_only():
    ds = Dataset(np.zeros((2, 1)))
    with pytest.raises(ValueError):
        ds.points[0, 0] = 1.0


def test_csv_round_trip(tmp_path):
    ds = Dataset(np.array([[0.1, -0.2], [1 / 3, 0.5]]))
    core.write_csv(ds, tmp_path / "d.csv")
    assert core.read_csv(tmp_path / "d.csv") == ds


def test_distribution_means():
    assert BinaryPM.with_mean(2.0, 0.5).mean()[0] == pytest.approx(0.5)
    h = HeavyTwoPoint(1.0, 2.0, 0.04)
    atoms, probs = h.atoms()
    assert np.dot(probs, atoms[:, 0] ** 2) == pytest.approx(1.0)  # k-th moment equals r^k
    sp = SparseMean(6, 2, 1.0, np.array([0.5, -0.25, 0, 0, 0, 0]))
    assert np.allclose(sp.mean(), [0.5, -0.25, 0, 0, 0, 0])


def test_invalid_probabilities():
    with pytest.raises(StableEstError):
        Discrete(np.array([[0.0], [1.0]]), np.array([0.7, 0.7]))
    with pytest.raises(StableEstError):
        SparseMean(4, 1, 1.0, np.array([0.5, 0.5, 0, 0]))


def test_derive_seed_depends_only_on_index():
    assert core.derive_seed(1, 3) == core.derive_seed(1, 3)
    assert core.derive_seed(1, 3) != core.derive_seed(1, 4)


def test_thread_count(monkeypatch):
    monkeypatch.setenv("STABLE_EST_THREADS", "3")
    assert core.thread_count() == 3
    monkeypatch.setenv("STABLE_EST_THREADS", "0")
    assert core.thread_count() == 1
