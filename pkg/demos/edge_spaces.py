"""Whitney edges against the full linear edge space on the same mesh.

Both have the same curl (bubbles are gradients), which is why the inverse
constant and the seminorm are close, but only the full space is second
order in L2.
"""

from stwave.analysis import convergence_slope, error_norms, interpolate_spacetime, manufactured
from stwave.spatial import build_unit_square_mesh, estimate_inverse_constant
from stwave.temporal import build_uniform_temporal_mesh

prob = manufactured()
for fam in ("whitney", "full_p1"):
    h, l2 = [], []
    for n in (4, 8, 16):
        tm, xm = build_uniform_temporal_mesh(prob.terminal_time, 4), build_unit_square_mesh(n)
        r = error_norms(interpolate_spacetime(prob, tm, xm, fam), prob, tm, xm)
        h.append(r.h_x)
        l2.append(r.l2_error)
        print(f"{fam:8s} n={n:2d}  seminorm {r.seminorm_error:.3e}  L2 {r.l2_error:.3e}")
    c = estimate_inverse_constant(build_unit_square_mesh(8), family=fam)
    print(f"{fam:8s} L2 slope {convergence_slope(h, l2):.2f}, c_I {c:.2f}\n")
