import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp
from scipy.special import comb

from cavprobe import coherent as co
from cavprobe import preset


def test_alpha_steady_matches_pole_form(reichel):
    n = np.arange(-50, 51, dtype=float)
    direct = math.sqrt(reichel.kappa1) * reichel.beta / (reichel.kappa / 2 + 1j * n * reichel.g_tilde)
    assert np.allclose(co.alpha_steady(reichel, n), direct, rtol=1e-14, atol=0)


def test_alpha_conjugate_symmetry(reichel):
    n = np.arange(0, 101, dtype=float)
    assert np.array_equal(co.alpha_steady(reichel, -n), np.conj(co.alpha_steady(reichel, n)))


def test_alpha_transient_vs_ode(reichel):
    # independent route: integrate d alpha/dt = -(kappa/2 + i n g~) alpha + sqrt(kappa1) beta
    n, t = 3.0, 4.0 / reichel.kappa
    lam = reichel.kappa / 2 + 1j * n * reichel.g_tilde

    def rhs(_, y):
        a = y[0] + 1j * y[1]
        d = -lam * a + math.sqrt(reichel.kappa1) * reichel.beta
        return [d.real, d.imag]

    sol = solve_ivp(rhs, (0, t), [0.0, 0.0], rtol=1e-12, atol=1e-15)
    ref = sol.y[0, -1] + 1j * sol.y[1, -1]
    assert co.alpha_transient(reichel, n, t) == pytest.approx(ref, abs=1e-10)


def test_alpha_transient_profile_switch_off(reichel):
    t_on, t = 2.0 / reichel.kappa, 5.0 / reichel.kappa
    prof = [(0.0, reichel.beta), (t_on, 0.0)]
    a_on = co.alpha_transient(reichel, 1.0, t_on)
    lam = reichel.kappa / 2 + 1j * reichel.g_tilde
    assert co.alpha_transient(reichel, 1.0, t, prof) == pytest.approx(a_on * np.exp(-lam * (t - t_on)))
    # callable profile agrees with the closed form for a constant drive
    f = lambda s: reichel.beta
    assert co.alpha_transient(reichel, 1.0, t, f) == pytest.approx(
        co.alpha_transient(reichel, 1.0, t), rel=1e-8)


def test_alpha_transient_reaches_steady(reichel):
    n = np.array([-2.0, 0.0, 5.0])
    assert np.allclose(co.alpha_transient(reichel, n, 60 / reichel.kappa), co.alpha_steady(reichel, n),
                       atol=1e-14)


@pytest.mark.parametrize("big_j", [0.0, 0.5, 3.0, 50.0])
def test_initial_coefficients_exact(big_j):
    c = co.initial_coefficients(big_j)
    n = c.n
    # binomial amplitudes sqrt(C(2J, J+n))/2^J
    amp = np.sqrt(comb(2 * big_j, big_j + n)) / 2 ** big_j
    assert np.allclose(c.c, np.outer(amp, amp), atol=1e-15)
    assert np.trace(c.c).real == pytest.approx(1.0, abs=1e-13)


def test_initial_coefficients_gaussian_close_for_large_n():
    e = co.initial_coefficients(200.0).c
    g = co.initial_coefficients(200.0, "gaussian").c
    assert np.max(np.abs(e - g)) < 1e-3 * np.max(np.abs(e))
    with pytest.raises(ValueError):
        co.initial_coefficients(1.0, "nope")


def test_diagonal_matches_likelihood(reichel):
    # independent route for the diagonal: prior times Gaussian likelihood of Y
    t, y = 1e-6, 5e-4
    coeffs = co.initial_coefficients(reichel.big_j)
    rho, _, _ = co.conditional_state(reichel, coeffs, co.MeasurementRecord(dt=t, dy=np.array([y])))
    mu = 2 * math.sqrt(reichel.eta * reichel.kappa1) * co.alpha_steady(reichel, coeffs.n).real
    logw = np.log(coeffs.diagonal) + mu * y - 0.5 * mu ** 2 * t
    w = np.exp(logw - logw.max())
    assert np.allclose(rho.diagonal, w / w.sum(), atol=1e-12)


def test_conditional_state_is_density(reichel):
    coeffs = co.initial_coefficients(10.0)
    p = reichel.replace(big_j=10.0)
    rec = co.sample_record(p, coeffs, 1e-6, 1e-8, rng_seed=4)
    rho, _, _ = co.conditional_state(p, coeffs, rec)
    rho.check(1e-12)
    assert np.min(np.linalg.eigvalsh(rho.rho)) > -1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 40), st.floats(-2e-3, 2e-3))
def test_steady_state_depends_only_on_Y(split, y):
    # steady weights see the record only through Y = sum dy
    p = preset("reichel", big_j=5.0)
    coeffs = co.initial_coefficients(5.0)
    t = 1e-6
    rng = np.random.default_rng(split)
    parts = rng.standard_normal(split)
    parts = parts - parts.mean() + y / split
    a, _, _ = co.conditional_state(p, coeffs, co.MeasurementRecord(dt=t, dy=np.array([y])))
    b, _, _ = co.conditional_state(p, coeffs, co.MeasurementRecord(dt=t / split, dy=parts))
    assert np.allclose(a.rho, b.rho, atol=1e-10)


def test_purity_full_matches_state(reichel):
    p = reichel.replace(big_j=10.0, eta=0.7)
    coeffs = co.initial_coefficients(10.0)
    rec = co.sample_record(p, coeffs, 1e-6, 1e-8, rng_seed=9)
    for off in (False, True):
        rho, _, _ = co.conditional_state(p, coeffs, rec, probe_off_at_end=off)
        assert co.purity_full(p, coeffs, rec, probe_off_at_end=off) == pytest.approx(rho.purity(), rel=1e-10)


def test_two_state_purity(reichel):
    p = reichel.replace(big_j=10.0, eta=0.8)
    for n in (1.0, 4.0):
        coeffs = co.two_state_coefficients(10.0, n)
        rec = co.sample_record(p, coeffs, 3e-7, 3e-9, rng_seed=1)
        pf = co.purity_full(p, coeffs, rec)
        assert pf == pytest.approx(co.purity_two_state(p, n, 3e-7), rel=1e-3)


def test_pure_measurement_keeps_pure_without_field_overlap():
    # eta = 1 with a single cavity: conditional joint state stays pure
    p = preset("reichel", big_j=2.0, eta=1.0)
    coeffs = co.initial_coefficients(2.0)
    rec = co.sample_record(p, coeffs, 1e-7, 1e-9, rng_seed=2)
    assert co.purity_full(p, coeffs, rec) < 1.0 + 1e-12


def test_y_distribution(reichel):
    coeffs = co.initial_coefficients(reichel.big_j)
    d = co.record_probability_Y(reichel, coeffs, 1e-6)
    lo, hi = d.support()
    y = np.linspace(lo, hi, 20001)
    assert np.trapezoid(d.pdf(y), y) == pytest.approx(1.0, abs=1e-9)
    assert d.cdf(hi) == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diff(d.cdf(y)) >= 0)
    with pytest.raises(ValueError):
        co.record_probability_Y(reichel, coeffs, 0.0)


def test_sample_record_reproducible(reichel):
    coeffs = co.initial_coefficients(3.0)
    p = reichel.replace(big_j=3.0)
    a = co.sample_record(p, coeffs, 1e-7, 1e-9, rng_seed=5)
    b = co.sample_record(p, coeffs, 1e-7, 1e-9, rng_seed=5)
    c = co.sample_record(p, coeffs, 1e-7, 1e-9, rng_seed=6)
    assert np.array_equal(a.dy, b.dy) and not np.array_equal(a.dy, c.dy)
    assert a.steps == 100 and a.t == pytest.approx(1e-7)
    with pytest.raises(ValueError):
        co.sample_record(p, coeffs, 1e-7, 3e-9, rng_seed=5)


def test_peak_estimate_closed_form_at_zero(reichel):
    est = co.peak_estimate(reichel, 50, 1e-6, 0.0)
    assert est.method == "closed-form" and not est.single_peaked
    assert abs(est.n_p - co.diagonal_argmax(reichel, co.initial_coefficients(50.0), 1e-6, 0.0)) <= 1


def test_peak_estimate_single_peak_for_large_y(reichel):
    coeffs = co.initial_coefficients(50.0)
    mu0 = 2 * math.sqrt(reichel.kappa1) * co.alpha_steady(reichel, 0.0).real * 1e-6
    est = co.peak_estimate(reichel, 50, 1e-6, mu0 + 5e-4)
    assert est.single_peaked and est.n_p == 0.0
    assert co.diagonal_argmax(reichel, coeffs, 1e-6, mu0 + 5e-4) == 0.0


def test_normalization_error():
    p = preset("reichel", big_j=1.0)
    coeffs = co.AtomicCoefficients(1.0, np.zeros((3, 3), dtype=complex))
    with pytest.raises(co.NormalizationError):
        co.conditional_state(p, coeffs, co.MeasurementRecord(dt=1e-7, dy=np.array([0.0])))


def test_complex_beta_rejected(reichel):
    p = reichel.replace(beta=1j * reichel.beta, big_j=1.0)
    with pytest.raises(ValueError):
        co.conditional_state(p, co.initial_coefficients(1.0), co.MeasurementRecord(dt=1e-7, dy=np.zeros(1)))
