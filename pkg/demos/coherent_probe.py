"""Coherent-probe walkthrough: cavity amplitudes, one conditional state, purity vs Y.

Run:  python demos/coherent_probe.py
"""

import numpy as np

from cavprobe import analysis, coherent as co, derive_scales, preset

p = preset("reichel")
s = derive_scales(p)
print(f"g~ = {p.g_tilde:.4e} rad/s, t_qs = {s.t_qs * 1e9:.1f} ns, t_sp(n=0) = {s.t_sp:.2e} s")

# steady amplitudes for n = -100..100 all sit on one circle through the origin
n = np.arange(-100, 101)
a = co.alpha_steady(p, n)
print(f"circle radius {s.circle_radius:.3f}, worst residual "
      f"{np.max(np.abs(np.abs(a - s.circle_radius) - s.circle_radius)):.1e}")

# condition the x-polarised J = 50 state on Y = 5e-4 s^1/2 after 1 us
coeffs = co.initial_coefficients(50.0)
rho, _, _ = co.conditional_state(p, coeffs, co.MeasurementRecord(dt=1e-6, dy=np.array([5e-4])))
pk = analysis.peak_summary(rho)
est = co.peak_estimate(p, 50, 1e-6, 5e-4)
print(f"peaks at n = +-{pk.d_over_2:.2f} (estimator {est.n_p:.2f}), purity {rho.purity():.4f}")
q = analysis.spin_q_function(rho, 100, 200)
print(f"Q-function integral {q.integral():.8f}, maximum at theta = {q.argmax()[0]:.3f}")

# with 90% detection the purity depends on where Y lands
pe = p.replace(eta=0.9)
dist = co.record_probability_Y(pe, coeffs, 1e-6)
print("\n      Y       P(Y)   purity  |n|max")
for y in np.linspace(0.001, 0.0075, 8):
    rec = co.MeasurementRecord(dt=1e-6, dy=np.array([y]))
    pur = co.purity_full(pe, coeffs, rec, probe_off_at_end=True)
    print(f"{y:8.5f} {dist.pdf(y):9.2f} {pur:8.4f} {co.diagonal_argmax(pe, coeffs, 1e-6, y):6.1f}")
