"""Purity / peak-separation scatter for squeezed and coherent probing.

Each series starts from the x-polarised atomic state, probes for ``t`` and
then keeps recording with drive and squeezing off for 15/kappa1 so that the
cavity fields have leaked out before the atomic state is read off.
"""

from __future__ import annotations

import math

import numpy as np

from . import analysis, batched, coherent
from .core import preset

DEFAULT_SERIES = ("coherent", 0.0125, -0.0125, 0.025, -0.025, 0.05, -0.05)


def series_name(item):
    return "coherent" if item == "coherent" else f"eps={float(item):+g}i*kappa2"


def default_step(params, t):
    """Step of about 0.05/kappa that divides the probing time ``t``."""
    return t / math.ceil(t * params.kappa / 0.05)


def decay_time(params, step):
    """Whole number of steps closest to 15/kappa1."""
    return round(15.0 / params.kappa1 / step) * step


def coherent_series(params, t, seeds, dt=None):
    """Coherent-probe reference series through the exact weights.

    ``params`` carries the squeezed-probe rates; the drive amplitude is the
    coherent preset value and the second cavity is dropped.
    """
    coh = preset("reichel", big_j=params.big_j, eta=params.eta, kappa1=params.kappa1,
                 kappa_loss1=params.kappa_loss1, g=params.g, delta=params.delta)
    dt = default_step(coh, t) if dt is None else dt
    decay = decay_time(coh, dt)
    coeffs = coherent.initial_coefficients(coh.big_j)
    prof = [(0.0, coh.beta), (t, 0.0)]
    rhos, ys, yp = [], [], []
    for s in seeds:
        rec = coherent.sample_record(coh, coeffs, t + decay, dt, s, steady=False, beta_profile=prof)
        rho, _, _ = coherent.conditional_state(coh, coeffs, rec, steady=False, beta_profile=prof)
        rhos.append(rho.rho)
        ys.append(rec.Y)
        yp.append(float(np.sum(rec.dy[:int(round(t / dt))])))
    meta = {"kind": "coherent", "beta": coh.beta, "epsilon": 0.0, "t": t, "decay": decay, "dt": dt,
            "route": "exact weights, transient amplitudes"}
    return {"series": "coherent", "rho": np.array(rhos), "seeds": list(seeds), "Y": np.array(yp),
            "Y_total": np.array(ys), "big_j": coh.big_j, "meta": meta, "params": coh}


def squeezed_series(params, eps_units, t, seeds, step=None, halving=False):
    """One squeezing strength ``epsilon = eps_units * i * kappa2``."""
    p = params.replace(epsilon=1j * eps_units * params.kappa2, beta=0j)
    step = default_step(p, t) if step is None else step
    phases = batched.probe_protocol(p, t, decay_time(p, step))
    res = batched.run_protocol(phases, seeds=list(seeds), step=step)
    meta = {"kind": "squeezed", "beta": 0.0, "epsilon": p.epsilon, "t": t,
            "decay": phases[-1].duration, "step": step, "v_frozen_at": res.v_frozen_at,
            "max_field_residual": float(np.max(res.field_residual))}
    if halving:
        _, _, dp, dm = batched.halving_check(phases, seeds=list(seeds)[:4], step=step)
        meta.update(halving_purity=dp, halving_matrix=dm)
    return {"series": series_name(eps_units), "rho": res.rho, "seeds": list(seeds),
            "Y": res.Y_probe, "big_j": p.big_j, "meta": meta, "params": p}


def run_series(params, series=DEFAULT_SERIES, t=1e-6, trajectories=30, base_seed=0, step=None,
               halving=False):
    """Run every series with seeds ``base_seed + k`` and collect a scatter table.

    Returns
    -------
    table : analysis.ScatterTable
    meta : dict
        Protocol settings shared by all series.
    """
    seeds = [base_seed + k for k in range(trajectories)]
    batches = []
    for item in series:
        if item == "coherent":
            batches.append(coherent_series(params, t, seeds))
        else:
            batches.append(squeezed_series(params, float(item), t, seeds, step, halving))
    table = analysis.histogram_summaries(batches)
    meta = {"t": t, "decay_over_kappa1": 15.0, "trajectories": trajectories,
            "base_seed": base_seed}
    return table, meta


def steady_purity_curve(params, t, Y):
    """Purity after a steady probe of length ``t`` for integrated records ``Y``."""
    coeffs = coherent.initial_coefficients(params.big_j)
    out = []
    for y in np.atleast_1d(Y):
        rec = coherent.MeasurementRecord(dt=t, dy=np.array([float(y)]))
        out.append(coherent.purity_full(params, coeffs, rec, probe_off_at_end=True))
    return np.array(out)
