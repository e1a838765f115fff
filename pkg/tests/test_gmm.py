import math

import numpy as np
import pytest

from sirl.gmm import (
    FitResult,
    Gmm,
    e_step,
    fit,
    fit_restarts,
    load_gmm,
    log_pdf,
    m_step,
    mixture_mean,
    sample,
    save_gmm,
    sort_components,
)


def test_mixture_mean_weighted_average():
    gmm = Gmm(
        np.array([0.25, 0.75]),
        np.array([[0.0, 4.0], [2.0, 0.0]]),
        np.ones((2, 2)),
    )
    assert np.allclose(mixture_mean(gmm), [1.5, 1.0])


def scalar_log_density(x, mean, variance):
    return -0.5 * (math.log(2 * math.pi * variance) + (x - mean) ** 2 / variance)


def two_component_1d(mix=(0.6, 0.4), means=(0.0, 2.0), variances=(1.0, 1.0)):
    return Gmm(
        np.array(mix), np.array(means)[:, None], np.array(variances)[:, None]
    )


def test_gmm_validation():
    with pytest.raises(ValueError):
        Gmm(np.array([0.5, 0.6]), np.zeros((2, 1)), np.ones((2, 1)))
    with pytest.raises(ValueError):
        Gmm(np.array([1.0]), np.zeros((1, 2)), np.full((1, 2), 1e-9))  # below floor
    with pytest.raises(ValueError):
        Gmm(np.array([1.0]), np.zeros((1, 2)), np.ones((1, 3)))


def test_e_step_symmetric_point_splits_evenly():
    gmm = two_component_1d(mix=(0.5, 0.5))
    resp = e_step(gmm, np.array([[1.0]]))  # equidistant from both means
    assert resp == pytest.approx(np.array([[0.5, 0.5]]), abs=1e-12)


def test_e_step_scalar_hand_oracle():
    gmm = two_component_1d()
    x = 0.5
    num0 = 0.6 * math.exp(scalar_log_density(x, 0.0, 1.0))
    num1 = 0.4 * math.exp(scalar_log_density(x, 2.0, 1.0))
    resp = e_step(gmm, np.array([[x]]))
    assert resp[0, 0] == pytest.approx(num0 / (num0 + num1), abs=1e-12)
    assert resp[0, 1] == pytest.approx(num1 / (num0 + num1), abs=1e-12)


def test_e_step_rows_sum_to_one():
    rng = np.random.default_rng(0)
    gmm = Gmm(
        np.array([0.3, 0.5, 0.2]),
        rng.normal(size=(3, 4)),
        np.abs(rng.normal(size=(3, 4))) + 0.5,
    )
    resp = e_step(gmm, rng.normal(size=(50, 4)))
    assert resp.sum(axis=1) == pytest.approx(np.ones(50), abs=1e-12)
    assert np.all(resp >= 0)


def test_m_step_weighted_hand_oracle():
    points = np.array([[0.0], [1.0], [3.0]])
    resp = np.array([[0.8, 0.2], [0.5, 0.5], [0.1, 0.9]])
    gmm, floored, reseeded = m_step(points, resp)
    total0 = 1.4
    mean0 = (0.8 * 0 + 0.5 * 1 + 0.1 * 3) / total0
    var0 = (0.8 * mean0**2 + 0.5 * (1 - mean0) ** 2 + 0.1 * (3 - mean0) ** 2) / total0
    assert gmm.means[0, 0] == pytest.approx(mean0, abs=1e-12)
    assert gmm.covariances[0, 0] == pytest.approx(var0, abs=1e-12)
    assert gmm.mixing == pytest.approx(np.array([total0 / 3, 1.6 / 3]), abs=1e-12)
    assert not floored and reseeded == 0


def test_m_step_point_masses_hit_variance_floor():
    points = np.array([[0.0], [2.0]])
    gmm, floored, reseeded = m_step(points, np.eye(2))
    assert gmm.means[:, 0].tolist() == [0.0, 2.0]
    assert floored and reseeded == 0
    assert np.all(gmm.covariances == 1e-6)
    assert gmm.mixing == pytest.approx(np.array([0.5, 0.5]), abs=1e-12)


def test_m_step_reseeds_starved_component():
    points = np.array([[0.0], [1.0], [2.0]])
    resp = np.column_stack([np.ones(3), np.zeros(3)])
    gmm, _, reseeded = m_step(points, resp, rng=np.random.default_rng(1))
    assert reseeded == 1
    assert gmm.means[0, 0] == pytest.approx(1.0, abs=1e-12)  # sample mean
    assert gmm.means[1, 0] in points[:, 0]  # re-seeded at a data point
    assert gmm.covariances[1, 0] == pytest.approx(points.var(), abs=1e-12)
    assert gmm.mixing.sum() == pytest.approx(1.0, abs=1e-12)


def test_fit_single_component_closed_form():
    rng = np.random.default_rng(2)
    points = rng.normal(loc=3.0, scale=2.0, size=(400, 2))
    result = fit(points, 1, init=0)
    assert isinstance(result, FitResult)
    assert result.gmm.means[0] == pytest.approx(points.mean(axis=0), abs=1e-9)
    assert result.gmm.covariances[0] == pytest.approx(points.var(axis=0), abs=1e-9)
    assert result.gmm.mixing[0] == 1.0


def test_fit_recovers_separated_clusters():
    rng = np.random.default_rng(3)
    points = np.concatenate(
        [rng.normal(-5.0, 1.0, size=(250, 1)), rng.normal(5.0, 1.0, size=(250, 1))]
    )
    result = fit(points, 2, init=7)
    ordered = sort_components(result.gmm)
    assert ordered.means[:, 0] == pytest.approx([-5.0, 5.0], abs=0.5)
    assert ordered.mixing == pytest.approx([0.5, 0.5], abs=0.05)
    assert np.all(np.diff(result.history) >= -1e-8)


def test_fit_monotone_history_on_random_blobs():
    rng = np.random.default_rng(4)
    points = np.concatenate(
        [
            rng.normal((0, 0), 1.0, size=(120, 2)),
            rng.normal((4, 1), 0.8, size=(100, 2)),
            rng.normal((-3, 5), 1.2, size=(80, 2)),
        ]
    )
    result = fit(points, 3, init=11)
    assert np.all(np.diff(result.history) >= -1e-8)
    assert result.history.shape[0] <= 1000


def test_fit_warm_start_converges_immediately():
    rng = np.random.default_rng(5)
    points = np.concatenate(
        [rng.normal(-4.0, 1.0, size=(200, 1)), rng.normal(4.0, 1.0, size=(200, 1))]
    )
    cold = fit(points, 2, init=1)
    warm = fit(points, 2, init=cold.gmm)
    assert warm.history.shape[0] <= 3
    assert warm.log_likelihood >= cold.log_likelihood - 1e-6


def test_fit_deterministic_per_seed():
    rng = np.random.default_rng(6)
    points = rng.normal(size=(100, 2))
    a = fit(points, 2, init=9)
    b = fit(points, 2, init=9)
    assert np.array_equal(a.gmm.means, b.gmm.means)
    assert np.array_equal(a.history, b.history)


def test_fit_rejects_bad_inputs():
    points = np.zeros((2, 1))
    with pytest.raises(ValueError):
        fit(points, 3, init=0)  # fewer points than components
    with pytest.raises(ValueError):
        fit(points, 1, init=two_component_1d())  # warm start with wrong K


def test_fit_restarts_never_worse_than_single_run():
    rng = np.random.default_rng(13)
    points = np.concatenate(
        [
            rng.normal((0, 0), 1.0, size=(150, 2)),
            rng.normal((10, 0), 1.0, size=(150, 2)),
            rng.normal((0, 10), 1.0, size=(150, 2)),
        ]
    )
    singles = [
        fit(points, 3, init=0, seed=np.random.default_rng(s)).log_likelihood
        for s in range(3)
    ]
    best = fit_restarts(points, 3, n_restarts=3, seed=21)
    assert best.log_likelihood >= min(singles)
    assert np.all(np.diff(best.history) >= -1e-8)


def test_fit_restarts_deterministic_and_validated():
    rng = np.random.default_rng(14)
    points = rng.normal(size=(60, 2))
    a = fit_restarts(points, 2, n_restarts=2, seed=5)
    b = fit_restarts(points, 2, n_restarts=2, seed=5)
    assert np.array_equal(a.gmm.means, b.gmm.means)
    assert a.log_likelihood == b.log_likelihood
    with pytest.raises(ValueError):
        fit_restarts(points, 2, n_restarts=0)


def test_log_pdf_scalar_closed_form():
    gmm = Gmm(np.array([1.0]), np.zeros((1, 1)), np.ones((1, 1)))
    for x in (-1.3, 0.0, 2.4):
        assert log_pdf(gmm, np.array([x])) == pytest.approx(
            scalar_log_density(x, 0.0, 1.0), abs=1e-12
        )


def test_log_pdf_symmetric_mixture():
    gmm = two_component_1d(mix=(0.5, 0.5), means=(-2.0, 2.0))
    xs = np.array([[0.7], [-0.7]])
    values = log_pdf(gmm, xs)
    assert values[0] == pytest.approx(values[1], abs=1e-12)


def test_log_pdf_bounded_by_best_component():
    rng = np.random.default_rng(7)
    gmm = Gmm(
        np.array([0.2, 0.8]), rng.normal(size=(2, 3)), np.abs(rng.normal(size=(2, 3))) + 0.5
    )
    points = rng.normal(size=(20, 3))
    values = log_pdf(gmm, points)
    for i, x in enumerate(points):
        best = max(
            math.log(gmm.mixing[k])
            + sum(
                scalar_log_density(x[j], gmm.means[k, j], gmm.covariances[k, j])
                for j in range(3)
            )
            for k in range(2)
        )
        assert best <= values[i] <= best + math.log(2) + 1e-12


def test_sample_law_of_large_numbers():
    gmm = Gmm(
        np.array([0.3, 0.7]),
        np.array([[0.0, -1.0], [4.0, 2.0]]),
        np.array([[1.0, 0.5], [0.8, 1.5]]),
    )
    draws = sample(gmm, 20_000, seed=8)
    assert draws.shape == (20_000, 2)
    assert draws.mean(axis=0) == pytest.approx(gmm.mean(), abs=0.05)


def test_sample_component_frequencies():
    gmm = two_component_1d(mix=(0.25, 0.75), means=(-30.0, 30.0))
    draws = sample(gmm, 10_000, seed=9)
    # Components are far apart, so the sign splits them exactly.
    frac = (draws[:, 0] > 0).mean()
    assert abs(frac - 0.75) < 3 * math.sqrt(0.25 * 0.75 / 10_000)


def test_sample_deterministic_per_seed():
    gmm = two_component_1d()
    assert np.array_equal(sample(gmm, 50, seed=10), sample(gmm, 50, seed=10))


def test_sort_components_orders_by_first_mean_coordinate():
    gmm = Gmm(
        np.array([0.2, 0.5, 0.3]),
        np.array([[3.0, 0.0], [-1.0, 2.0], [0.5, 1.0]]),
        np.ones((3, 2)),
    )
    ordered = sort_components(gmm)
    assert ordered.means[:, 0].tolist() == [-1.0, 0.5, 3.0]
    assert ordered.mixing.tolist() == [0.5, 0.3, 0.2]


def test_gmm_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    gmm = Gmm(
        np.array([0.45, 0.55]),
        rng.normal(size=(2, 3)),
        np.abs(rng.normal(size=(2, 3))) + 0.1,
    )
    path = tmp_path / "theta.txt"
    save_gmm(path, gmm)
    loaded = load_gmm(path)
    assert np.array_equal(loaded.mixing, gmm.mixing)
    assert np.array_equal(loaded.means, gmm.means)
    assert np.array_equal(loaded.covariances, gmm.covariances)
    again = tmp_path / "again.txt"
    save_gmm(again, loaded)
    assert path.read_bytes() == again.read_bytes()


def test_load_gmm_rejects_malformed(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("2 1\n0.5; 0.0; 1.0\n")
    with pytest.raises(ValueError):
        load_gmm(path)  # header promises two components
