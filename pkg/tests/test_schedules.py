import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distdiff.schedules import (NoiseSchedule, alphabar_to_sigma, beta_star, bound_envelope, build_constant_beta,
                                build_ddim_linear, build_edm, build_loglinear, finite_ratios, is_admissible,
                                limit_ratios, linear_alphabars, sigma_to_alphabar)


def test_schedule_validation():
    with pytest.raises(ValueError):
        NoiseSchedule([1.0])
    with pytest.raises(ValueError):
        NoiseSchedule([0.0, 1.0])
    with pytest.raises(ValueError):
        NoiseSchedule([2.0, 1.0])


def test_betas_and_descending():
    s = NoiseSchedule.from_descending([8.0, 4.0, 1.0])
    assert s.n_steps == 2
    assert np.isnan(s.betas[0]) and s.betas[1] == 0.75 and s.betas[2] == 0.5
    assert list(s.descending()) == [8.0, 4.0, 1.0]


def test_csv_round_trip():
    s = build_edm(n_steps=7)
    text = s.to_csv()
    assert text.splitlines()[0] == "t,sigma,beta"
    assert text.splitlines()[-1].endswith(",")  # no beta at t = 0
    assert np.array_equal(NoiseSchedule.from_csv(text).sigmas, s.sigmas)


@given(st.floats(1.0, 100.0), st.floats(1e-3, 0.5), st.integers(1, 200))
def test_loglinear_constant_ratio_and_endpoints(smax, smin, N):
    s = build_loglinear(smax, smin, N)
    assert s.sigmas[-1] == smax and s.sigmas[0] == smin
    r = s.sigmas[:-1] / s.sigmas[1:]
    assert np.allclose(r, (smin / smax) ** (1 / N), rtol=1e-12)


def test_loglinear_with_sigma_1():
    s = build_loglinear(40.0, 0.01, 10, sigma_1=0.5)
    assert s.sigmas[0] == 0.01 and s.sigmas[1] == 0.5 and s.sigmas[10] == 40.0
    r = s.sigmas[2:] / s.sigmas[1:-1]
    assert np.allclose(r, r[0])


def test_constant_beta():
    s = build_constant_beta(10.0, 0.2, 5)
    assert np.allclose(s.betas[1:], 0.2) and s.sigmas[-1] == 10.0


def test_edm_endpoints_exact():
    s = build_edm(80.0, 0.002, 7.0, 18)
    assert s.sigmas[-1] == 80.0 and s.sigmas[0] == 0.002


def test_ddim_linear_grid():
    ab = linear_alphabars()
    assert ab.shape == (1000,)
    s = build_ddim_linear(10)
    assert s.sigmas[0] == 0.002
    # sqrt((1 - ab_T) / ab_T) for the standard linear grid
    assert s.sigmas[-1] == pytest.approx(157.4, abs=0.1)
    assert s.sigmas[-1] == alphabar_to_sigma(ab[-1])
    assert s.sigmas[1] == alphabar_to_sigma(ab[99])


def test_ddim_offset_caps_sigma_max():
    s = build_ddim_linear(10, offset_sigma=40.0)
    assert s.sigmas[-1] <= 40.0
    full = alphabar_to_sigma(linear_alphabars())
    assert np.count_nonzero(full <= 40.0) >= 1 and s.sigmas[-1] == full[full <= 40.0][-1]


def test_alphabar_sigma_round_trip():
    sig = np.array([0.01, 1.0, 80.0])
    assert np.allclose(alphabar_to_sigma(sigma_to_alphabar(sig)), sig, rtol=1e-12)


def test_beta_star_example_value():
    # eta / (eta + 1 - 2^(-1/50)) evaluated independently
    c = 1 - 2 ** (-1 / 50)
    assert 1 - beta_star(0.1, 2.0, 50) == pytest.approx(0.1 / (0.1 + c), rel=1e-14)
    assert f"{1 - beta_star(0.1, 2.0, 50):.6g}" == "0.878987"


def test_beta_star_domain():
    with pytest.raises(ValueError):
        beta_star(0.0, 2.0, 10)
    with pytest.raises(ValueError):
        beta_star(0.1, 0.5, 10)


def test_limit_ratios_example():
    a, b = limit_ratios(0.1, 2.0)
    assert a == pytest.approx(2.0 ** -10, rel=1e-14)
    assert b == pytest.approx(2.0 ** -9, rel=1e-14)


@pytest.mark.parametrize("eta,nu", [(0.1, 2.0), (0.2, 4.0), (0.5, 1.5)])
def test_finite_ratios_converge(eta, nu):
    lim = limit_ratios(eta, nu)
    fin = finite_ratios(eta, nu, 100_000)
    assert fin == pytest.approx(lim, rel=0.01)


@settings(max_examples=60)
@given(st.floats(0.01, 0.9), st.floats(1.01, 8.0), st.integers(1, 400))
def test_admissibility_boundary_is_sharp(eta, nu, N):
    b = beta_star(eta, nu, N)
    assert is_admissible(np.full(N, b), eta, nu).admissible
    assert not is_admissible(np.full(N, b * (1 + 1e-3)), eta, nu).admissible


def test_admissible_margin_at_boundary_is_near_zero():
    rep = is_admissible(build_constant_beta(10.0, beta_star(0.1, 2.0, 20), 20), 0.1, 2.0)
    assert rep.admissible and abs(rep.min_margin) < 1e-12


def test_constant_sigma_degenerate_case():
    rep = is_admissible(np.zeros(5), 0.1, 2.0)
    assert rep.admissible and np.allclose(rep.lower_margin, math.log(2.0))


def test_nonpositive_factor_reported():
    rep = is_admissible([0.5, 0.95], 0.1, 2.0)
    assert not rep.admissible and "1 - beta_t (eta + 1) <= 0" in rep.reason


def test_first_failure_is_the_largest_bad_t():
    b = np.full(30, 0.05)
    b[25] = 0.6
    rep = is_admissible(b, 0.3, 1.2)
    assert not rep.admissible
    assert rep.first_failure == max(np.nonzero((rep.lower_margin < 0) | (rep.upper_margin < 0))[0]) + 1


def test_envelope_zero_error_is_sigma_ratio():
    s = build_loglinear(10.0, 0.1, 12)
    env = bound_envelope(s, 0.0)
    assert np.allclose(env.lower, s.sigmas / s.sigmas[-1], rtol=1e-12)
    assert np.allclose(env.upper, env.lower, rtol=1e-12)
    assert env.vacuous_below is None


def test_envelope_orders_and_vacuous_flag():
    env = bound_envelope([0.3, 0.95, 0.2], 0.1)
    assert np.all(env.lower <= env.upper + 1e-15)
    assert env.vacuous_below == 1  # the factor at t = 2 is negative
