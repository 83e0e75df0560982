"""What the modified Hilbert transformation does to a few functions.

sin(pi t / 2T) goes to cos(pi t / 2T), and the matrices it induces have
positive symmetric parts (until roundoff catches up with the smallest
eigenvalue).
"""

import numpy as np

from stwave.hilbert import HilbertKind, assemble_hilbert, pv_transform_eval
from stwave.temporal import build_uniform_temporal_mesh

T = 1.0
lam = np.pi / 2
s = np.linspace(0.05, 0.95, 5)
for si in s:
    v = pv_transform_eval(lambda t: np.sin(lam * t / T), si, T)
    print(f"t={si:.2f}  H_T sin = {v:+.10f}   cos = {np.cos(lam * si / T):+.10f}")

print()
for alpha in range(4):
    tm = build_uniform_temporal_mesh(np.sqrt(2), alpha)
    out = []
    for kind in (HilbertKind.A_HT, HilbertKind.M_HT):
        E = assemble_hilbert(tm, kind).entries
        out.append(np.linalg.eigvalsh(0.5 * (E + E.T)).min())
    print(f"N_t={tm.num_elements:3d}  min eig sym(A_HT)={out[0]:+.3e}  sym(M_HT)={out[1]:+.3e}")
