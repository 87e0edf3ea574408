import math

import numpy as np
import pytest

from cavprobe import coherent as co
from cavprobe import fock
from cavprobe import preset
from cavprobe.core import cascade_frame
from conftest import random_density


@pytest.fixture
def coh():
    return cascade_frame(preset("reichel", big_j=1.0))


def _dt(p):
    return 0.005 / p.max_rate()


def test_cutoff_precondition(coh):
    with pytest.raises(ValueError):
        fock.build_generators(coh, (1, 4))


def test_deterministic_part_is_traceless():
    p = preset("reichel-squeezed", big_j=1.0, beta=0.3j * preset("reichel").beta)
    ops = fock.build_generators(p, (4, 4))
    rng = np.random.default_rng(0)
    for _ in range(20):
        rho = random_density(ops.dim, rng)
        assert abs(np.trace(fock.deterministic_part(ops, rho))) < 1e-12 * p.max_rate()
        assert abs(np.trace(fock.measurement_part(ops, rho))) < 1e-12 * p.max_rate()


def test_dark_state_is_stationary():
    p = preset("reichel-squeezed", big_j=1.5, epsilon=0j, beta=0j, eta=0.0)
    ops = fock.build_generators(p, (3, 3))
    rng = np.random.default_rng(1)
    atoms = random_density(4, rng)
    vac = np.zeros(9)
    vac[0] = 1.0
    rho = np.kron(atoms, np.outer(vac, vac))
    assert np.max(np.abs(fock.deterministic_part(ops, rho))) == 0.0
    st = fock.initial_state(p, co.AtomicCoefficients(1.5, atoms), cutoffs=(3, 3))
    st, _ = fock.integrate(st, p, _dt(p), 200, rng_seed=0)
    assert np.allclose(st.atomic(), atoms, atol=1e-14)


def test_mode_two_stays_vacuum(coh):
    st = fock.initial_state(coh, cutoffs=(6, 3))
    st, _ = fock.integrate(st, coh, _dt(coh), 1000, rng_seed=2)
    _, p2 = st.mode_populations()
    assert p2[0] == 1.0 and np.all(p2[1:] == 0.0)


def test_field_mean_matches_transient_amplitude(coh):
    # unobserved evolution from |n><n| (x) vacuum: <a> follows the driven decay
    p = coh.replace(eta=0.0)
    for n in (-1.0, 0.0, 1.0):
        c = co.AtomicCoefficients(1.0, np.diag((co.n_grid(1.0) == n).astype(complex)))
        ops = fock.build_generators(p, (6, 2))
        st = fock.initial_state(p, c, cutoffs=(6, 2))
        steps = 1000
        st, _ = fock.integrate(st, p, _dt(p), steps, dW=np.zeros(steps), ops=ops)
        i = int(n + 1)
        ref = co.alpha_transient(preset("reichel", big_j=1.0), n, steps * _dt(p))
        assert st.block_mean(ops.a)[i] == pytest.approx(ref, abs=1e-6)


def test_integrate_arguments(coh):
    st = fock.initial_state(coh, cutoffs=(4, 2))
    with pytest.raises(ValueError):
        fock.integrate(st, coh, 2 * _dt(coh), 1, rng_seed=0)
    with pytest.raises(ValueError):
        fock.integrate(st, coh, _dt(coh), 1)
    with pytest.raises(ValueError):
        fock.integrate(st, coh, _dt(coh), 1, rng_seed=0, dW=np.zeros(1))


def test_cutoff_saturation_detected(coh):
    strong = coh.replace(beta=30 * coh.beta)
    st = fock.initial_state(strong, cutoffs=(3, 2))
    with pytest.raises(fock.CutoffError):
        fock.integrate(st, strong, _dt(strong), 2000, rng_seed=0)


def test_replay_and_state_checks(coh):
    diag = fock.OracleDiagnostics()
    st0 = fock.initial_state(coh, cutoffs=(6, 2))
    a, rec = fock.integrate(st0, coh, _dt(coh), 400, rng_seed=3, diagnostics=diag)
    b, _ = fock.integrate(st0, coh, _dt(coh), 400, dy=rec.dy)
    assert np.allclose(a.rho, b.rho, atol=1e-13)
    assert diag.max_trace_drift < 1e-8 and diag.max_hermitian_fix < 1e-10
    assert diag.max_top_layer < 1e-6
    assert a.time == pytest.approx(400 * _dt(coh))
    a.check(1e-8)
    assert abs(np.trace(a.atomic()) - 1) < 1e-12


def test_unobserved_equals_average_of_observed():
    # E[rho_c] over records equals the eta = 0 evolution
    p = cascade_frame(preset("reichel", big_j=0.5, beta=3 * preset("reichel").beta, eta=0.9))
    cut = (6, 2)
    steps = 800
    dt = _dt(p)
    batch = 1000
    st = fock.initial_state(p, cutoffs=cut, batch=batch)
    obs, _ = fock.integrate(st, p, dt, steps, rng_seed=11)
    q = p.replace(eta=0.0)
    ref, _ = fock.integrate(fock.initial_state(q, cutoffs=cut), q, dt, steps, dW=np.zeros(steps))
    at = obs.atomic()
    mean = at.mean(axis=0)
    sem = np.maximum(at.real.std(axis=0, ddof=1), at.imag.std(axis=0, ddof=1)) / math.sqrt(batch)
    dev = np.abs(mean - ref.atomic())
    # the off-diagonal element is actually random, the diagonal only weakly
    assert np.all(dev <= 3 * sem + 1e-12)
    assert np.max(np.abs(np.imag(at[:, 0, 1]))) > 1e-3
