"""Cross-checks of the analytic and Gaussian solvers against the Fock oracle at J = 1."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import coherent, fock, gaussian
from .core import cascade_frame, preset


@dataclass
class Comparison:
    name: str
    observable: str
    deviation: float
    threshold: float

    @property
    def passed(self):
        return bool(self.deviation < self.threshold)


def _steps(params, kappa_t):
    dt = 0.005 / params.max_rate()
    steps = int(math.ceil(kappa_t / (params.kappa * dt)))
    return dt, steps


def coherent_vs_oracle(seed=0, kappa_t=20.0, cutoff=12, big_j=1.0):
    """Max elementwise deviation of the exact transient state from the oracle.

    The oracle runs in the two-cavity frame with the squeezing cavity
    removed, so mode c keeps only two levels.
    """
    p = preset("reichel", big_j=big_j)
    q = cascade_frame(p)
    dt, steps = _steps(q, kappa_t)
    st = fock.initial_state(q, cutoffs=(cutoff, 2))
    st, rec = fock.integrate(st, q, dt, steps, rng_seed=seed)
    rho, _, _ = coherent.conditional_state(p, coherent.initial_coefficients(big_j), rec, steady=False)
    return float(np.max(np.abs(rho.rho - st.atomic()))), st, rec


def squeezed_vs_oracle(seed=0, kappa_t=20.0, cutoffs=(12, 12), big_j=1.0, eps_units=0.05, eta=0.9):
    """Max elementwise deviation of the Gaussian-component state from the oracle on one record."""
    k1 = preset("reichel").kappa1
    p = preset("reichel-squeezed", big_j=big_j, epsilon=1j * eps_units * k1, eta=eta)
    dt, steps = _steps(p, kappa_t)
    st = fock.initial_state(p, cutoffs=cutoffs)
    st, rec = fock.integrate(st, p, dt, steps, rng_seed=seed)
    ens = gaussian.run(gaussian.initial_ensemble(p), steps, dt, dy=rec.dy)
    return float(np.max(np.abs(gaussian.atomic_matrix(ens) - st.atomic()))), st, ens


def closed_form_steady_vector(params, n):
    """Unobserved steady means [x1, p1, x2, p2] for phi = pi, beta = i|beta|, epsilon = i Im(epsilon)."""
    b = abs(params.beta)
    den = params.kappa2 + params.kappa_loss2 + 2.0 * params.epsilon.imag
    beff = b * (2.0 * params.kappa2 / den - 1.0)
    a = coherent.alpha_steady(params.replace(beta=beff), np.asarray(n, dtype=float))
    x2 = np.zeros_like(a.real)
    p2 = np.full_like(a.real, -2.0 * b * math.sqrt(2.0 * params.kappa2) / den)
    return np.stack([math.sqrt(2) * a.real, math.sqrt(2) * a.imag, x2, p2], axis=-1)


def steady_params(big_j=1.0, eps_units=0.05):
    ref = preset("reichel")
    return preset("reichel-squeezed", big_j=big_j, epsilon=1j * eps_units * ref.kappa1, eta=0.0,
                  beta=1j * abs(ref.beta))


def oracle_steady_means(kappa_t=25.0, cutoffs=(8, 8), big_j=1.0, eps_units=0.05):
    """Per-n quadrature means of both modes after an unobserved run."""
    p = steady_params(big_j, eps_units)
    dt, steps = _steps(p, kappa_t)
    ops = fock.build_generators(p, cutoffs)
    st = fock.initial_state(p, cutoffs=cutoffs)
    st, _ = fock.integrate(st, p, dt, steps, dW=np.zeros(steps), ops=ops)
    r2 = math.sqrt(2.0)
    quads = [(ops.a + ops.a.getH()) / r2, (ops.a - ops.a.getH()) / (1j * r2),
             (ops.c + ops.c.getH()) / r2, (ops.c - ops.c.getH()) / (1j * r2)]
    means = np.real(np.stack([st.block_mean(op) for op in quads], axis=-1))
    return p, means


def oracle_report(seed=0, kappa_t=20.0):
    """All oracle comparisons with their thresholds."""
    out = []
    d, _, _ = coherent_vs_oracle(seed=seed, kappa_t=kappa_t)
    out.append(Comparison("coherent", "atomic density matrix", d, 1e-5))
    d, _, _ = squeezed_vs_oracle(seed=seed, kappa_t=kappa_t)
    out.append(Comparison("squeezed", "atomic density matrix", d, 1e-4))
    p, means = oracle_steady_means()
    ref = closed_form_steady_vector(p, coherent.n_grid(p.big_j))
    out.append(Comparison("steady", "mode-2 quadrature means",
                          float(np.max(np.abs(means[:, 2:] - ref[:, 2:]))), 1e-6))
    # mode a relaxes at kappa/2, so it is still ~1e-6 from stationary at kappa t = 25
    out.append(Comparison("steady", "mode-1 quadrature means",
                          float(np.max(np.abs(means[:, :2] - ref[:, :2]))), 1e-5))
    return out
