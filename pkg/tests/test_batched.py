import numpy as np
import pytest

from cavprobe import batched as bt
from cavprobe import coherent as co
from cavprobe import gaussian as ga
from cavprobe import preset
from cavprobe.core import cascade_frame


@pytest.fixture
def sq():
    return preset("reichel-squeezed", big_j=2.0, epsilon=0.05j * preset("reichel").kappa1)


@pytest.mark.parametrize("symmetric", [False, True])
def test_replay_matches_reference_integrator(sq, symmetric):
    dt = ga.max_step(sq)
    ens = ga.run(ga.initial_ensemble(sq), 1500, dt, rng_seed=5)
    r = bt.run_protocol([bt.Phase(sq, 1500 * dt)], step=dt, dy=ens.record().dy[:, None],
                        symmetric=symmetric)
    assert np.max(np.abs(r.rho[0] - ga.atomic_matrix(ens))) < 1e-5


def test_coherent_protocol_matches_exact_weights():
    p = preset("reichel", big_j=3.0)
    q = cascade_frame(p)
    tp = 1e-7
    step = bt_step = tp / round(tp * p.kappa / 0.05)
    phases = bt.probe_protocol(q, tp, round(15 / p.kappa1 / bt_step) * bt_step)
    r = bt.run_protocol(phases, seeds=[1, 2], step=step)
    for b in range(2):
        rec = co.MeasurementRecord(dt=step, dy=r.dy[:, b])
        rho, _, _ = co.conditional_state(p, co.initial_coefficients(3.0), rec, steady=False,
                                         beta_profile=[(0.0, p.beta), (tp, 0.0)])
        assert np.max(np.abs(rho.rho - r.rho[b])) < 1e-5
    # amplitudes decay at kappa/2: after 15/kappa1 about e^-7.5 of ~0.14 is left
    assert np.max(r.field_residual) < 0.14 * np.exp(-7.5) * 1.05


def test_seed_partitioning(sq):
    ph = bt.probe_protocol(sq, 200 * 0.05 / sq.kappa, 100 * 0.05 / sq.kappa)
    both = bt.run_protocol(ph, seeds=[3, 4])
    one = bt.run_protocol(ph, seeds=[4])
    assert np.array_equal(both.rho[1], one.rho[0]) and np.array_equal(both.dy[:, 1], one.dy[:, 0])
    assert both.seeds == [3, 4]


def test_symmetric_halving_is_exact(sq):
    ph = bt.probe_protocol(sq, 300 * 0.05 / sq.kappa, 100 * 0.05 / sq.kappa)
    a = bt.run_protocol(ph, seeds=[8], symmetric=True)
    b = bt.run_protocol(ph, seeds=[8], symmetric=False)
    assert np.max(np.abs(a.rho - b.rho)) < 1e-12


def test_symmetry_guard(sq):
    broken = sq.replace(epsilon=sq.epsilon + 0.01 * sq.kappa2)
    with pytest.raises(ValueError):
        bt.run_protocol([bt.Phase(broken, 10 * 0.05 / sq.kappa)], seeds=[0], symmetric=True)


def test_step_must_divide_phase(sq):
    with pytest.raises(ValueError):
        bt.run_protocol([bt.Phase(sq, 10.5 * 0.05 / sq.kappa)], seeds=[0])


def test_noise_and_coarsening():
    dw, dz = bt.trajectory_noise([1, 2], 4096, 1e-3)
    assert np.std(dw) == pytest.approx(np.sqrt(1e-3), rel=0.05)
    assert np.std(dz) == pytest.approx(1e-3 ** 1.5 / np.sqrt(12), rel=0.05)
    cw, cz = bt.coarsen(dw, dz, 1e-3, 2)
    assert np.allclose(cw, dw[0::2] + dw[1::2])
    # first moment over the coarse step gains the lever arm of each half
    assert np.allclose(cz, dz[0::2] + dz[1::2] - 0.5e-3 * dw[0::2] + 0.5e-3 * dw[1::2])
    assert np.std(cz) == pytest.approx((2e-3) ** 1.5 / np.sqrt(12), rel=0.05)


def test_halving_check_small_difference(sq):
    ph = bt.probe_protocol(sq, 400 * 0.05 / sq.kappa, 300 * 0.05 / sq.kappa)
    coarse, fine, dp, dm = bt.halving_check(ph, seeds=[0, 1])
    assert dp < 1e-3 and dm < 1e-3
    assert coarse.step == 2 * fine.step


def test_state_is_density(sq):
    ph = bt.probe_protocol(sq, 400 * 0.05 / sq.kappa)
    r = bt.run_protocol(ph, seeds=[5])
    st = r.state(0)
    st.check(1e-10)
    assert np.min(np.linalg.eigvalsh(st.rho)) > -1e-10
    assert r.Y_probe.shape == (1,) and r.Y[0] == pytest.approx(np.sum(r.dy[:, 0]))
