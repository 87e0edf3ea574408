"""Small version of the purity / peak-separation scatter (J = 50, 5 trajectories).

Run:  python demos/scatter_small.py     (several minutes)
The full run is `cavprobe squeezed-scatter --trajectories 30`.
"""

from cavprobe import preset, scatter

table, meta = scatter.run_series(preset("reichel-squeezed"), trajectories=5,
                                 series=("coherent", 0.0125, 0.05))
for name in table.series:
    pur = table.column("purity", name)
    d2 = table.column("d_over_2", name)
    print(f"{name:22s} purity {pur.min():.3f}..{pur.max():.3f}  d/2 {d2.min():5.1f}..{d2.max():5.1f}")
