"""Squeezed-vacuum probing: steady field states per n and one conditioned trajectory.

Run:  python demos/squeezed_probe.py
"""

import numpy as np

from cavprobe import batched, gaussian as ga, preset
from cavprobe.validation import closed_form_steady_vector, steady_params

# unobserved steady state with a weak coherent drive on top of the squeezing
p = steady_params(big_j=2.0)
tab = ga.derive_component_sdes(p)
v = ga.steady_covariance(tab)
for n in (-2.0, 0.0, 2.0):
    k = tab.k(n, n)
    y = np.real(ga.steady_mean(tab, k, v[k]))
    print(f"n={n:+.0f}: means {np.round(y, 5)}  closed form {np.round(closed_form_steady_vector(p, n), 5)}")

e = ga.uncertainty_ellipse(preset("reichel-squeezed", big_j=2.0), 0.0)
print(f"cavity-1 ellipse for n=0: semi-axes {np.round(e.semi_axes, 4)}, angle {e.angle:.3f}")

# one J = 10 trajectory through the probe-then-decay protocol
q = preset("reichel-squeezed", big_j=10.0)
step = 1e-6 / 13320
phases = batched.probe_protocol(q, 1e-6, 300 * step)
res = batched.run_protocol(phases, seeds=[0, 1, 2], step=step)
for b in range(3):
    st = res.state(b)
    d = st.diagonal
    print(f"seed {b}: purity {st.purity():.3f}, Y = {res.Y_probe[b]:+.2e}, "
          f"most likely |n| = {abs(st.n[np.argmax(d)]):.0f}")
