"""Brute-force Fock-space solution against both fast solvers at J = 1.

Run:  python demos/oracle_crosscheck.py      (a few minutes)
"""

from cavprobe import validation

d, st, rec = validation.coherent_vs_oracle(seed=1, kappa_t=10.0)
print(f"coherent probe, kappa t = 10: max |exact - oracle| = {d:.2e}")
d, st, ens = validation.squeezed_vs_oracle(seed=1, kappa_t=10.0)
print(f"squeezed probe, kappa t = 10: max |Gaussian - oracle| = {d:.2e}")
p1, p2 = st.mode_populations()
print(f"oracle top Fock layers: mode a {p1[-1]:.1e}, mode c {p2[-1]:.1e}")
