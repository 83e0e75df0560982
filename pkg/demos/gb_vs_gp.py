"""Petrov-Galerkin against Bubnov-Galerkin across the stability bound.

Fixed spatial mesh (n=16), time step refined from coarse to fine.  GP is
only guaranteed stable for h_t/h_x < sqrt(12/18); above it, the very
coarse steps happen to survive (the unstable modes have not grown yet)
and alpha=2 blows up.  GB stays put on every row.
"""

import numpy as np

from stwave.analysis import error_norms, manufactured
from stwave.projection import build_load, project
from stwave.solver import assemble_operator, cfl_check, solve
from stwave.spatial import build_unit_square_mesh
from stwave.temporal import build_uniform_temporal_mesh

prob = manufactured()
xm = build_unit_square_mesh(16)
print(f"{'alpha':>5} {'h_t/h_x':>8} {'CFL':>9} {'GP':>10} {'GB':>10}")
for alpha in range(5):
    tm = build_uniform_temporal_mesh(prob.terminal_time, alpha)
    row = []
    for method in ("GP", "GB"):
        op = assemble_operator(method, tm, xm, family="full_p1")
        F = build_load(project(prob.j, "RT1", tm, xm, family="full_p1"), method, tm, xm)
        x = solve(op, F, strict=False)
        row.append(error_norms(x, prob, tm, xm).seminorm_error)
    p = cfl_check(tm, xm)
    print(f"{alpha:>5} {p.ratio:8.3f} {'stable' if p.predicted_stable else 'unstable':>9} {row[0]:10.3e} {row[1]:10.3e}")
