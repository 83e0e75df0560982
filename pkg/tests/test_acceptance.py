"""Acceptance gate.  Each test prints one PASS/FAIL line (plus indented detail)
and then asserts the same verdict; nothing here is loosened to make it pass.

Reference values are three-digit error tables for the manufactured
problem, rows h_x = 0.1768, 0.0884, 0.0442 (n = 4, 8, 16) and columns
h_t = 0.2828 ... 0.0177 (alpha = 0 ... 4).  Table cells are computed in the
``full_p1`` edge space, which is the one that reproduces them; the Whitney
space is reported alongside for information.
"""

import functools
import time

import numpy as np
import pytest

from stwave.analysis import convergence_slope, error_norms, interpolate_spacetime, manufactured
from stwave.hilbert import HilbertKind, assemble_hilbert, pv_bilinear
from stwave.projection import build_load, project
from stwave.solver import assemble_operator, cfl_check, classify, march_two_step, solve
from stwave.spatial import (
    MaterialData,
    SpatialFamily,
    assemble_spatial,
    build_unit_square_mesh,
    estimate_inverse_constant,
)
from stwave.temporal import TemporalMesh, build_uniform_temporal_mesh

ROWS = (4, 8, 16)
SQRT2 = float(np.sqrt(2.0))

REF = {
    "interp_semi": [[6.64e-01, 6.53e-01, 6.50e-01], [3.49e-01, 3.27e-01, 3.21e-01], [2.12e-01, 1.74e-01, 1.63e-01]],
    "interp_l2": [[7.50e-02, 7.49e-02, 7.49e-02], [1.99e-02, 1.93e-02, 1.93e-02], [6.97e-03, 4.96e-03, 4.82e-03]],
    "gp_rt1_semi": [[6.38e-01, 6.26e-01, 6.23e-01], [3.42e-01, 8.26e-01, 3.10e-01], [2.16e-01, 9.97e-01, 3.70e03]],
    "gp_rt1_l2": [[4.67e-02, 4.29e-02, 4.21e-02], [1.80e-02, 1.93e-02, 1.06e-02], [1.27e-02, 1.32e-02, 3.61e01]],
    "gb_rt1_semi": [
        [6.45e-01, 6.27e-01, 6.23e-01, 6.23e-01, 6.22e-01],
        [3.62e-01, 3.19e-01, 3.11e-01, 3.09e-01, 3.08e-01],
        [2.48e-01, 1.75e-01, 1.59e-01, 1.55e-01, 1.54e-01],
    ],
    "gb_rt1_l2": [
        [5.28e-02, 4.23e-02, 4.20e-02, 4.19e-02, 4.19e-02],
        [2.70e-02, 1.10e-02, 1.05e-02, 1.04e-02, 1.04e-02],
        [2.28e-02, 3.99e-03, 2.75e-03, 2.61e-03, 2.59e-03],
    ],
}

FULL, WHITNEY = SpatialFamily.full_p1, SpatialFamily.whitney


def verdict(capsys, tag, ok, detail=()):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} {tag}")
        for line in detail:
            print(f"    {line}")
    assert ok, tag


def rel(a, b):
    return abs(a - b) / abs(b)


@functools.lru_cache(maxsize=None)
def interp_cell(n, alpha, family, T=SQRT2):
    prob = manufactured(T)
    tm, xm = build_uniform_temporal_mesh(T, alpha), build_unit_square_mesh(n)
    return error_norms(interpolate_spacetime(prob, tm, xm, family), prob, tm, xm)


@functools.lru_cache(maxsize=None)
def solve_cell(method, kind, n, alpha, family, T=SQRT2):
    prob = manufactured(T)
    tm, xm = build_uniform_temporal_mesh(T, alpha), build_unit_square_mesh(n)
    op = assemble_operator(method, tm, xm, family=family)
    F = build_load(project(prob.j, kind, tm, xm, family=family), method, tm, xm)
    # unstable cells amplify roundoff; the residual is recorded, not enforced
    Ah = solve(op, F, strict=False)
    return error_norms(Ah, prob, tm, xm), Ah.residual


def grid_check(ref, values, tol):
    bad = []
    for i, n in enumerate(ROWS):
        for a, r in enumerate(ref[i]):
            v = values(n, a)
            if not rel(v, r) <= tol:
                bad.append(f"n={n} alpha={a}: {v:.3e} vs {r:.2e} ({100 * rel(v, r):.1f}%)")
    return bad


def test_ac1_interpolation_tables(capsys):
    t0 = time.perf_counter()
    bad = grid_check(REF["interp_semi"], lambda n, a: interp_cell(n, a, FULL).seminorm_error, 0.02)
    bad += grid_check(REF["interp_l2"], lambda n, a: interp_cell(n, a, FULL).l2_error, 0.02)
    secs = time.perf_counter() - t0
    info = [
        f"{fam.value}: n=4 alpha=0 seminorm {interp_cell(4, 0, fam).seminorm_error:.3e} "
        f"L2 {interp_cell(4, 0, fam).l2_error:.3e} (reference 6.64e-01 / 7.50e-02)"
        for fam in (FULL, WHITNEY)
    ]
    ok = not bad and secs <= 120
    verdict(capsys, f"AC1 interpolation tables within 2% ({18 - len(bad)}/18 cells, {secs:.1f}s)", ok, info + bad)


def test_ac2_gp_rt1(capsys):
    t0 = time.perf_counter()
    bad, detail = [], []
    for i, n in enumerate(ROWS):
        for a in range(3):
            (rep, _) = solve_cell("GP", "RT1", n, a, FULL)
            interp = interp_cell(n, a, FULL).seminorm_error
            stable = classify(rep.seminorm_error, interp, cfl_check(*meshes(n, a))).classification == "stable"
            if (n, a) == (16, 2):
                if stable or not rep.seminorm_error > 1e2:
                    bad.append(f"n=16 alpha=2 should be unstable with error > 1e2, got {rep.seminorm_error:.3e}")
                detail.append(f"n=16 alpha=2 unstable, seminorm {rep.seminorm_error:.3e} (reference 3.70e+03)")
                continue
            if not stable:
                bad.append(f"n={n} alpha={a} classified unstable ({rep.seminorm_error:.3e})")
                continue
            for key, v in (("gp_rt1_semi", rep.seminorm_error), ("gp_rt1_l2", rep.l2_error)):
                r = REF[key][i][a]
                if not rel(v, r) <= 0.03:
                    bad.append(f"{key} n={n} alpha={a}: {v:.3e} vs {r:.2e}")
    w = solve_cell("GP", "RT1", 4, 0, WHITNEY)[0]
    detail.append(f"whitney n=4 alpha=0: {w.seminorm_error:.3e} / {w.l2_error:.3e} (reference 6.38e-01 / 4.67e-02)")
    secs = time.perf_counter() - t0
    verdict(capsys, f"AC2 GP+RT1 stable cells within 3%, blow-up cell unstable ({secs:.1f}s)", not bad and secs <= 300,
            detail + bad)


def meshes(n, alpha, T=SQRT2):
    return build_uniform_temporal_mesh(T, alpha), build_unit_square_mesh(n)


def test_ac3_cfl_sharpness(capsys):
    t0 = time.perf_counter()
    detail, ok = [], True
    p = cfl_check(*meshes(32, 4))
    rep, _ = solve_cell("GP", "RT1", 32, 4, FULL)
    v = classify(rep.seminorm_error, interp_cell(32, 4, FULL).seminorm_error, p)
    ok &= p.predicted_stable and v.classification == "stable" and rel(rep.seminorm_error, 7.73e-02) <= 0.05
    ok &= abs(p.ratio - 0.801) < 0.005
    detail.append(f"T=sqrt2 ratio {p.ratio:.4f}: predicted {'stable' if p.predicted_stable else 'unstable'}, "
                  f"observed {v.classification}, seminorm {rep.seminorm_error:.3e} (reference 7.73e-02)")
    q = cfl_check(*meshes(32, 4, 1.5))
    rep2, _ = solve_cell("GP", "RT1", 32, 4, FULL, 1.5)
    v2 = classify(rep2.seminorm_error, interp_cell(32, 4, FULL, 1.5).seminorm_error, q)
    ok &= (not q.predicted_stable) and v2.classification == "unstable" and abs(q.ratio - 0.851) < 0.005
    detail.append(f"T=3/2 ratio {q.ratio:.4f}: predicted {'stable' if q.predicted_stable else 'unstable'}, "
                  f"observed {v2.classification}, seminorm {rep2.seminorm_error:.3e} (reference 1.29e+04)")
    secs = time.perf_counter() - t0
    verdict(capsys, f"AC3 CFL bound sharp on both cells ({secs:.1f}s)", ok and secs <= 600, detail)


def test_ac4_gb_stability(capsys):
    t0 = time.perf_counter()
    bad = []
    for i, n in enumerate(ROWS):
        for a in range(5):
            rep, _ = solve_cell("GB", "RT1", n, a, FULL)
            e, l2 = rep.seminorm_error, rep.l2_error
            i_err = interp_cell(n, a, FULL).seminorm_error
            if not (np.isfinite(e) and np.isfinite(l2)):
                bad.append(f"n={n} alpha={a} not finite")
            if e > 10 * i_err:
                bad.append(f"n={n} alpha={a}: {e:.3e} exceeds 10x interpolation {i_err:.3e}")
            for key, v in (("gb_rt1_semi", e), ("gb_rt1_l2", l2)):
                if not rel(v, REF[key][i][a]) <= 0.03:
                    bad.append(f"{key} n={n} alpha={a}: {v:.3e} vs {REF[key][i][a]:.2e}")
    col = [solve_cell("GB", "RT1", n, 2, FULL)[0].seminorm_error for n in ROWS]
    if not all(x >= y for x, y in zip(col, col[1:])):
        bad.append(f"h_t=0.0707 column not monotone: {col}")
    secs = time.perf_counter() - t0
    detail = ["h_t=0.0707 column: " + ", ".join(f"{c:.3e}" for c in col) + " (reference 6.23e-01, 3.11e-01, 1.59e-01)"]
    verdict(capsys, f"AC4 GB+RT1 3x5 grid finite, bounded, within 3% ({secs:.1f}s)", not bad and secs <= 600,
            detail + bad)


def test_ac5_projection_order(capsys):
    diag = [(4, 0), (8, 1), (16, 2)]  # fixed h_t / h_x
    h = [1 / (n * SQRT2) for n, _ in diag]
    rt = [solve_cell("GB", "RT1", n, a, FULL)[0].l2_error for n, a in diag]
    p0 = [solve_cell("GB", "P0", n, a, FULL)[0].l2_error for n, a in diag]
    s_rt, s_p0 = convergence_slope(h, rt), convergence_slope(h, p0)
    ref_rt = convergence_slope(h, [4.19e-02, 1.05e-02, 2.75e-03])
    ref_p0 = convergence_slope(h, [9.73e-02, 4.65e-02, 2.32e-02])
    detail = [
        "RT1 L2: " + ", ".join(f"{x:.3e}" for x in rt) + f"  slope {s_rt:.2f} (reference values give {ref_rt:.2f})",
        "P0  L2: " + ", ".join(f"{x:.3e}" for x in p0) + f"  slope {s_p0:.2f} (reference values give {ref_p0:.2f})",
    ]
    verdict(capsys, "AC5 L2 slope >= 1.6 for RT1 and <= 1.3 for P0", s_rt >= 1.6 and s_p0 <= 1.3, detail)


def test_ac6_inverse_constant(capsys):
    vals = {n: estimate_inverse_constant(build_unit_square_mesh(n)) for n in (4, 8, 16)}
    ok = all(abs(v - 18) <= 0.36 for v in vals.values())
    full = estimate_inverse_constant(build_unit_square_mesh(8), family=FULL)
    detail = [", ".join(f"n={n}: {v:.5f}" for n, v in vals.items()), f"full_p1 n=8 (information): {full:.3f}"]
    verdict(capsys, "AC6 inverse-inequality constant 18 +- 2%", ok, detail)


def test_ac7_hilbert_oracles(capsys):
    detail, ok = [], True
    for T in (1.0, SQRT2, 1.5):
        m = assemble_hilbert(TemporalMesh(T, [0.0, T]), HilbertKind.M_HT).entries[0, 0]
        good = rel(m, T / 3) <= 1e-9
        ok &= good
        detail.append(f"M_HT(N=1, T={T:.4f}) = {m:.12f}, T/3 = {T / 3:.12f}: {'ok' if good else 'mismatch'}")
    one = TemporalMesh(1.0, [0.0, 1.0])
    a = assemble_hilbert(one, HilbertKind.A_HT).entries[0, 0]
    ref = pv_bilinear(one, lambda s: np.ones_like(s), lambda s: np.ones_like(s))
    good = rel(a, ref) <= 1e-8
    ok &= good
    detail.append(f"A_HT(N=1, T=1) = {a:.12f}, PV oracle {ref:.12f}: {'ok' if good else 'mismatch'}")
    for N in (1, 5, 10, 40):
        tm = TemporalMesh(SQRT2, np.linspace(0, SQRT2, N + 1))
        for kind in (HilbertKind.A_HT, HilbertKind.M_HT):
            E = assemble_hilbert(tm, kind).entries
            lo = np.linalg.eigvalsh(0.5 * (E + E.T)).min()
            ok &= lo > 0
            detail.append(f"N={N:<2d} {kind.value}: smallest symmetric eigenvalue {lo:.3e}")
    tm = build_uniform_temporal_mesh(SQRT2, 2)
    same = np.array_equal(assemble_hilbert(tm, HilbertKind.M_HT).entries,
                          assemble_hilbert(tm, HilbertKind.M_HT_hat).entries[:, 1:])
    ok &= same
    detail.append(f"M_HT is the k>=1 block of M_HT_hat: {same}")
    verdict(capsys, "AC7 Hilbert oracle suite", ok, detail)


def test_ac8_structural_oracles(capsys):
    detail, ok = [], True
    prob = manufactured()
    tm, xm = TemporalMesh(SQRT2, np.linspace(0, SQRT2, 6)), build_unit_square_mesh(2)
    op = assemble_operator("GP", tm, xm)
    F = build_load(project(prob.j, "RT1", tm, xm), "GP", tm, xm)
    x1, x2 = solve(op, F, solver="direct").values, march_two_step(op, F).values
    d = np.linalg.norm(x1 - x2) / np.linalg.norm(x1)
    ok &= d <= 1e-9
    detail.append(f"march vs monolithic (n=2, N=5): relative difference {d:.2e}")
    worst = 0.0
    rng = np.random.default_rng(0)
    for method in ("GP", "GB"):
        o = assemble_operator(method, tm, xm)
        A = o.assembled()
        for _ in range(10):
            v = rng.standard_normal(o.shape[0])
            y = A @ v
            worst = max(worst, np.abs(o.matvec(v) - y).max() / np.abs(y).max())
    ok &= worst <= 1e-13
    detail.append(f"factored vs assembled matvec: {worst:.2e}")
    same = True
    for fam in (WHITNEY, FULL):
        mesh = build_unit_square_mesh(4)
        vac = MaterialData.vacuum(mesh)
        a = assemble_spatial(mesh, vac, "mass_N", fam).entries
        b = assemble_spatial(mesh, vac, "mass_RT", fam).entries
        same &= (a != b).nnz == 0
    ok &= same
    detail.append(f"RT mass equals Nedelec mass exactly: {same}")
    from test_spatial import quadrature_oracle, rand_material

    m1 = build_unit_square_mesh(1)
    mat = rand_material(m1)
    err = 0.0
    for fam in (WHITNEY, FULL):
        for which in ("mass_N", "curl_curl_N", "mass_RT", "mixed_N_RT", "mass_P0", "mixed_N_P0"):
            got = assemble_spatial(m1, mat, which, fam).entries.toarray()
            err = max(err, np.abs(got - quadrature_oracle(m1, mat, which, fam)).max())
    ok &= err <= 1e-13
    detail.append(f"n=1 entries vs 7-point quadrature: {err:.2e}")
    verdict(capsys, "AC8 structural oracles", ok, detail)
