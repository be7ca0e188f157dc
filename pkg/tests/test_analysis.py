import math

import numpy as np
import pytest

from distdiff.analysis import (ConcentrationParams, TailBoundParams, alpha_threshold, concentration_experiment,
                               cosine_matrix, error_model_fit, gamma_sweep, tail_bound_check, verify_trajectory)
from distdiff.denoisers import ErrorInjectedDenoiser, ErrorModel, ExactProjectionDenoiser, IdealDenoiser
from distdiff.geometry import PointCloud, Sphere
from distdiff.samplers import SamplerSpec, child_rng, init_xN, run
from distdiff.schedules import bound_envelope, build_constant_beta, build_loglinear


def _cloud(seed=0, m=25, n=6):
    return PointCloud(np.random.default_rng(seed).standard_normal((m, n)))


def _exact_run(K, sched, den=None, seed=0):
    x = init_xN(sched.sigmas[-1], K.dim, child_rng(seed), "exact-distance", K)
    return run(SamplerSpec("ddim", terminal_full_step=False), sched, den or ExactProjectionDenoiser(K), x, K)


def test_concentration_skip_when_hypothesis_fails():
    rep = concentration_experiment(ConcentrationParams(Sphere.circle(2), 0.01, 1.0, 10))
    assert rep.skipped and "hypothesis" in rep.reason


def test_concentration_small_sigma_distance_bound():
    rep = concentration_experiment(ConcentrationParams(Sphere.circle(1000), 0.001, 3.0, 10_000, seed=1))
    assert not rep.skipped and rep.freq_distance >= 0.99


def test_concentration_projection_error_shrinks_with_sigma():
    M = Sphere.coordinate(400, 2, 1.0)
    reps = [concentration_experiment(ConcentrationParams(M, s, 2.0, 2000, seed=2)) for s in (4e-3, 2e-3, 1e-3, 1e-4)]
    ratios = [r.mean_proj_ratio for r in reps]
    assert all(a >= b for a, b in zip(ratios, ratios[1:]))
    errs = [r.mean_proj_error for r in reps]
    assert all(a > b for a, b in zip(errs, errs[1:])) and errs[-1] < 1e-3
    # the flat limit keeps the tangential noise: the ratio tends to E|g_d| * E[1 / chi_(n-d)], not to 0
    k = 398
    e_inv_chi = math.exp(math.lgamma((k - 1) / 2) - math.lgamma(k / 2)) / math.sqrt(2)
    assert ratios[-1] == pytest.approx(math.sqrt(math.pi / 2) * e_inv_chi, rel=0.05)


def test_tail_bound_singleton_empty_tail():
    K = PointCloud([[0.0, 0.0]])
    x = np.array([1.0, 0.0])
    rep = tail_bound_check(TailBoundParams(K, x, 0.5, alpha_threshold(1.0, 0.5, 1, 0.1), 0.1))
    assert rep.holds and rep.tail == 0.0 and rep.n_near == 1


def test_tail_bound_tie_is_skipped():
    K = PointCloud([[1.0, 0.0], [-1.0, 0.0]])
    rep = tail_bound_check(TailBoundParams(K, np.array([0.0, 0.0]), 1.0, 100.0, 0.1))
    assert rep.skipped and "tie" in rep.reason


def test_tail_bound_below_threshold_reports_margin():
    K = _cloud(1)
    x = K.points[0] + 0.1
    rep = tail_bound_check(TailBoundParams(K, x, 1.0, 1.0, 0.1))
    assert rep.skipped and "margin" in rep.reason


def test_tail_bound_far_points_and_decomposition():
    # nearest point at distance 1, the others far beyond alpha * dist
    K = PointCloud([[0.0, 0.0], [10.0, 0.0], [0.0, 12.0], [-11.0, 3.0]])
    x = np.array([0.6, 0.8])
    sigma, eta = 1.0, 0.1
    a = alpha_threshold(1.0, sigma, 4, eta)
    rep = tail_bound_check(TailBoundParams(K, x, sigma, a, eta))
    assert rep.holds and rep.n_near == 1
    assert rep.decomposition_residual <= 1e-12


def test_cosine_matrix_constant_ray():
    K = PointCloud([[0.0, 0.0, 0.0]])
    tr = _exact_run(K, build_loglinear(5.0, 0.01, 10))
    M = cosine_matrix(tr)
    assert M.shape == (10, 10) and np.allclose(M, 1.0, atol=1e-12)


def test_cosine_matrix_properties_ideal():
    K = _cloud(2)
    sched = build_loglinear(10.0, 0.01, 10)
    tr = run(SamplerSpec("ddim"), sched, IdealDenoiser(K), init_xN(10.0, 6, child_rng(3), "gaussian"), K)
    M = cosine_matrix(tr)
    assert np.array_equal(M, M.T) and np.all(np.abs(M) <= 1) and np.all(np.diag(M) == 1)


def test_verify_trajectory_zero_error_run():
    K = _cloud(3)
    sched = build_loglinear(10.0, 0.01, 15)
    tr = _exact_run(K, sched)
    v = verify_trajectory(tr, ErrorModel(0.0, 1.0 + 1e-9), bound_envelope(sched, 0.0))
    assert v.ok and v.worst_lower_margin > -1e-12 and v.worst_upper_margin > -1e-12


@pytest.mark.parametrize("mode", ["random-orthogonal", "adversarial", "overshoot"])
def test_verify_trajectory_injected_error(mode):
    K = _cloud(4)
    eta = 0.1
    sched = build_loglinear(10.0, 0.05, 15)
    den = ErrorInjectedDenoiser(ExactProjectionDenoiser(K), K, eta, mode, child_rng(1))
    tr = _exact_run(K, sched, den)
    v = verify_trajectory(tr, ErrorModel(eta, 100.0), bound_envelope(sched, eta))
    assert v.ok, v.failures


def test_verify_trajectory_flags_inadmissible_schedule():
    # steps far too long for the ratio band: the distance collapses faster than sigma
    K = _cloud(5)
    sched = build_constant_beta(10.0, 0.6, 12)
    eta = 0.3
    den = ErrorInjectedDenoiser(ExactProjectionDenoiser(K), K, eta, "overshoot", child_rng(2))
    tr = _exact_run(K, sched, den)
    v = verify_trajectory(tr, ErrorModel(eta, 2.0), bound_envelope(sched, eta))
    assert not v.ok and v.first_failure is not None
    assert any(kind == "ratio band" for _, kind in v.failures)


def test_error_model_fit():
    K = _cloud(6)
    sched = build_loglinear(10.0, 0.05, 10)
    assert error_model_fit([_exact_run(K, sched)])[0] < 1e-12
    den = ErrorInjectedDenoiser(ExactProjectionDenoiser(K), K, 0.1, "random-orthogonal", child_rng(3))
    eta_hat, nu_hat = error_model_fit([_exact_run(K, sched, den)])
    assert eta_hat == pytest.approx(0.1, abs=1e-9) and nu_hat >= 1
    with pytest.raises(ValueError):
        error_model_fit([])


def test_gamma_sweep_zero_error_all_gammas_equal():
    K = _cloud(7)
    rows = gamma_sweep(K, lambda i: ExactProjectionDenoiser(K), lambda N: build_loglinear(10.0, 0.01, N),
                       [1.0, 2.0, 3.0], [5], 3, seed=0, init="exact-distance", terminal_full_step=False)
    vals = [r.mean_terminal_distance for r in rows]
    assert vals == pytest.approx([vals[0]] * 3, rel=1e-9)


def test_gamma_sweep_gamma_one_is_ddim():
    K = _cloud(8)
    sched = build_loglinear(10.0, 0.01, 6)
    rows = gamma_sweep(K, lambda i: IdealDenoiser(K), lambda N: sched, [1.0], [6], 4, seed=3)
    dd = [K.distance(run(SamplerSpec("ddim"), sched, IdealDenoiser(K),
                         init_xN(10.0, 6, child_rng(3, i, 0), "gaussian"), K).final) for i in range(4)]
    assert rows[0].mean_terminal_distance == pytest.approx(np.mean(dd), rel=1e-15)


def test_gamma_sweep_correlated_error_prefers_extrapolation():
    K = _cloud(9, m=40, n=8)
    u = np.ones(8)
    rows = gamma_sweep(K, lambda i: ErrorInjectedDenoiser(ExactProjectionDenoiser(K), K, 0.3, "fixed-vector",
                                                          direction=u),
                       lambda N: build_loglinear(10.0, 0.01, N), [0.5, 1.0, 1.5, 2.0, 2.5, 3.0], [10], 10,
                       seed=0, init="exact-distance", terminal_full_step=False)
    best = min(rows, key=lambda r: r.mean_terminal_distance)
    assert best.gamma > 1.0
    assert math.isfinite(best.mean_terminal_rel_error)
