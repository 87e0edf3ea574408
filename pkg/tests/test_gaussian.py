import math

import numpy as np
import pytest

from cavprobe import coherent as co
from cavprobe import gaussian as ga
from cavprobe import preset
from cavprobe.core import cascade_frame
from cavprobe.validation import closed_form_steady_vector, steady_params


@pytest.fixture
def small():
    return preset("reichel-squeezed", big_j=1.0)


def test_steady_mean_matches_closed_form():
    p = steady_params(big_j=2.0)
    tab = ga.derive_component_sdes(p)
    v = ga.steady_covariance(tab)
    for n in co.n_grid(2.0):
        k = tab.k(n, n)
        y = np.real(ga.steady_mean(tab, k, v[k]))
        assert np.allclose(y, closed_form_steady_vector(p, n), atol=1e-12)


def test_vacuum_is_stationary_without_drive(small):
    p = small.replace(epsilon=0j, eta=0.0)
    ens = ga.run(ga.initial_ensemble(p), 200, ga.max_step(p), rng_seed=0)
    assert ga.field_residual(ens) < 1e-14
    assert np.allclose(ga.atomic_matrix(ens), co.initial_coefficients(1.0).c, atol=1e-14)


def test_step_limit(small):
    ens = ga.initial_ensemble(small)
    with pytest.raises(ValueError):
        ga.step(ens, dW=0.0, dt=2 * ga.max_step(small))
    with pytest.raises(ValueError):
        ga.step(ens, dt=ga.max_step(small))


def test_coherent_probe_matches_exact_weights():
    # the Gaussian route in the two-cavity frame against the closed form
    p = preset("reichel", big_j=2.0)
    q = cascade_frame(p)
    dt = ga.max_step(q)
    steps = 2000
    coeffs = co.initial_coefficients(2.0)
    rec = co.sample_record(p, coeffs, steps * dt, dt, rng_seed=3, steady=False)
    ens = ga.run(ga.initial_ensemble(q), steps, dt, dy=rec.dy)
    rho, _, _ = co.conditional_state(p, coeffs, rec, steady=False)
    assert np.max(np.abs(ga.atomic_matrix(ens) - rho.rho)) < 1e-4


def test_time_reversal_holds(small):
    ens = ga.run(ga.initial_ensemble(small), 500, ga.max_step(small), rng_seed=1)
    assert ga.check_time_reversal(ens).max_residual < 1e-12


def test_time_reversal_precondition(small):
    ens = ga.initial_ensemble(small.replace(epsilon=small.epsilon + 0.01 * small.kappa2))
    with pytest.raises(ga.SymmetryPreconditionError):
        ga.check_time_reversal(ens)


def test_extract_requires_decayed_field(small):
    ens = ga.run(ga.initial_ensemble(small), 50, ga.max_step(small), rng_seed=1)
    with pytest.raises(ValueError):
        ga.extract_atomic_state(ens, decay_field=True)
    st = ga.extract_atomic_state(ens)
    st.check(1e-12)


def test_replay_reproduces_trajectory(small):
    dt = ga.max_step(small)
    a = ga.run(ga.initial_ensemble(small), 300, dt, rng_seed=5)
    b = ga.run(ga.initial_ensemble(small), 300, dt, dy=a.record().dy)
    assert np.allclose(a.logn, b.logn, atol=1e-13) and np.allclose(a.ybar, b.ybar, atol=1e-13)


def test_component_hermitian_partner(small):
    ens = ga.run(ga.initial_ensemble(small), 100, ga.max_step(small), rng_seed=2)
    a, b = ens.component(1.0, -1.0), ens.component(-1.0, 1.0)
    assert np.allclose(a.ybar, b.ybar.conj()) and a.weight == pytest.approx(np.conj(b.weight))


def test_uncertainty_ellipse_squeezed(small):
    e = ga.uncertainty_ellipse(small, 0.0)
    ax = sorted(e.semi_axes)
    assert ax[0] < 1.0 < ax[1]
    assert ax[0] * ax[1] == pytest.approx(1.0, rel=0.05)
