import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stwave.analysis import error_norms, interpolate_spacetime, manufactured
from stwave.hilbert import HilbertKind, assemble_hilbert
from stwave.projection import build_load, project
from stwave.solver import (
    CFL_CONSTANT,
    ContractError,
    FactorizationError,
    IterativeSolveError,
    ResidualError,
    SpaceTimeOperator,
    assemble_operator,
    cfl_check,
    choose_solver,
    classify,
    march_two_step,
    solve,
)
from stwave.spatial import SpatialFamily, assemble_spatial, boundary_constraint, build_unit_square_mesh
from stwave.temporal import TemporalMatrixKind, TemporalMesh, assemble_temporal, build_uniform_temporal_mesh

PROB = manufactured()
FAMILIES = [SpatialFamily.whitney, SpatialFamily.full_p1]


def setup(method, kind, n, alpha, family="whitney", T=None):
    prob = PROB if T is None else PROB.with_terminal_time(T)
    tm, xm = build_uniform_temporal_mesh(prob.terminal_time, alpha), build_unit_square_mesh(n)
    op = assemble_operator(method, tm, xm, family=family)
    F = build_load(project(prob.j, kind, tm, xm, family=family), method, tm, xm)
    return prob, tm, xm, op, F


@pytest.mark.parametrize("method", ["GP", "GB"])
@pytest.mark.parametrize("family", FAMILIES)
def test_factored_matvec_matches_assembled(method, family):
    tm, xm = TemporalMesh(1.0, [0.0, 0.2, 0.5, 1.0]), build_unit_square_mesh(2)
    op = assemble_operator(method, tm, xm, family=family)
    A = op.assembled()
    rng = np.random.default_rng(3)
    for _ in range(10):
        x = rng.standard_normal(op.shape[0])
        y = A @ x
        np.testing.assert_allclose(op.matvec(x), y, atol=1e-13 * np.abs(y).max())


def test_gb_scalar_case():
    tm, xm = build_uniform_temporal_mesh(1.0, 0), build_unit_square_mesh(1)
    tm = TemporalMesh(1.0, [0.0, 1.0])
    op = assemble_operator("GB", tm, xm)
    idx = boundary_constraint(xm)
    Mn = assemble_spatial(xm, None, "mass_N").entries.toarray()[np.ix_(idx, idx)]
    Kn = assemble_spatial(xm, None, "curl_curl_N").entries.toarray()[np.ix_(idx, idx)]
    a = assemble_hilbert(tm, HilbertKind.A_HT).entries[0, 0]
    m = assemble_hilbert(tm, HilbertKind.M_HT).entries[0, 0]
    A = op.assembled().toarray()
    assert A.shape == (1, 1)
    assert A[0, 0] == pytest.approx(a * Mn[0, 0] + m * Kn[0, 0], rel=1e-14)


def test_gp_two_step_explicit_entries():
    tm, xm = TemporalMesh(1.0, [0.0, 0.5, 1.0]), build_unit_square_mesh(1)
    op = assemble_operator("GP", tm, xm)
    A = op.assembled().toarray()
    # a single interior edge (the diagonal, length sqrt 2)
    idx = boundary_constraint(xm)
    mn = assemble_spatial(xm, None, "mass_N").entries.toarray()[idx][:, idx][0, 0]
    kn = assemble_spatial(xm, None, "curl_curl_N").entries.toarray()[idx][:, idx][0, 0]
    # -(d_t phi_k, d_t phi_l) and (phi_k, phi_l) for test hats 0,1 and trial hats 1,2
    T1 = -np.array([[-2.0, 0.0], [4.0, -2.0]])
    T2 = np.array([[1 / 12, 0.0], [1 / 3, 1 / 12]])
    np.testing.assert_allclose(A, T1 * mn + T2 * kn, rtol=1e-14)


def test_zero_load():
    for method in ("GP", "GB"):
        _, tm, xm, op, F = setup(method, "P0", 2, 1)
        x = solve(op, np.zeros_like(F))
        assert not np.any(x.values)
    _, _, _, op, F = setup("GP", "P0", 2, 1)
    assert not np.any(march_two_step(op, np.zeros_like(F)).values)


def test_load_shape_checked():
    _, _, _, op, F = setup("GP", "P0", 2, 0)
    with pytest.raises(ValueError):
        solve(op, F.T)


@pytest.mark.parametrize("family", FAMILIES)
def test_march_agrees_with_direct(family):
    _, tm, xm, op, F = setup("GP", "RT1", 2, 0, family)  # N=5
    tm = TemporalMesh(float(np.sqrt(2)), np.linspace(0, np.sqrt(2), 6))
    op = assemble_operator("GP", tm, xm, family=family)
    F = build_load(project(PROB.j, "RT1", tm, xm, family=family), "GP", tm, xm)
    a = solve(op, F, solver="direct").values
    b = march_two_step(op, F).values
    assert op.nt == 5
    assert np.linalg.norm(a - b) <= 1e-9 * np.linalg.norm(a)


def test_march_one_factorisation_on_uniform_mesh(monkeypatch):
    import stwave.solver as S

    calls = []
    real = S.spla.splu
    monkeypatch.setattr(S.spla, "splu", lambda A, *a, **k: calls.append(A.shape) or real(A, *a, **k))
    _, tm, xm, op, F = setup("GP", "P0", 2, 1)
    march_two_step(op, F)
    assert len(calls) == 1


def test_march_contract_errors():
    _, tm, xm, op, F = setup("GB", "P0", 2, 0)
    with pytest.raises(ContractError):
        march_two_step(op, F)
    _, tm, xm, op, F = setup("GP", "P0", 2, 0)
    bad = SpaceTimeOperator(op.method, op.T1 + np.triu(np.ones_like(op.T1), 1), op.T2, op.Mx, op.Kx)
    with pytest.raises(ContractError):
        march_two_step(bad, F)


@pytest.mark.parametrize("family", FAMILIES)
def test_solver_paths_agree(family):
    _, tm, xm, op, F = setup("GB", "RT1", 4, 1, family)
    ref = solve(op, F, solver="direct")
    for name in ("fast", "iterative"):
        x = solve(op, F, solver=name)
        assert x.residual <= 1e-10
        assert np.linalg.norm(x.values - ref.values) <= 1e-8 * np.linalg.norm(ref.values)
    _, tm, xm, op, F = setup("GP", "RT1", 4, 1, family)
    a, b = solve(op, F, solver="direct"), solve(op, F, solver="iterative", maxiter=2000)
    assert np.linalg.norm(a.values - b.values) <= 1e-8 * np.linalg.norm(a.values)


def test_iterative_failure_carries_history():
    _, tm, xm, op, F = setup("GB", "RT1", 4, 1)
    with pytest.raises(IterativeSolveError) as exc:
        solve(op, F, solver="iterative", maxiter=1, restart=2, tol=1e-14)
    assert len(exc.value.history) >= 1


def test_residual_contract():
    _, tm, xm, op, F = setup("GP", "P0", 2, 0)
    with pytest.raises(ResidualError) as exc:
        solve(op, F, solver="direct", tol=1e-30)
    assert exc.value.solution.values.shape == (op.nt, op.nx)
    assert solve(op, F, tol=1e-30, strict=False).residual > 0


def test_singular_factorisation_reports_pivots():
    _, tm, xm, op, F = setup("GP", "P0", 2, 0)
    sing = SpaceTimeOperator(op.method, 0 * op.T1, 0 * op.T2, op.Mx, op.Kx)
    with pytest.raises(FactorizationError) as exc:
        solve(sing, F, solver="direct")
    assert exc.value.diagnostics


def test_choose_solver():
    _, _, _, gp, _ = setup("GP", "P0", 2, 0)
    _, _, _, gb, _ = setup("GB", "P0", 2, 0)
    assert choose_solver(gp) == "direct" and choose_solver(gp, size_limit=1) == "march"
    assert choose_solver(gb) == "direct" and choose_solver(gb, size_limit=1) == "fast"


@settings(max_examples=10, deadline=None)
@given(st.sampled_from([1, 2, 3]), st.integers(1, 6), st.sampled_from(FAMILIES))
def test_gb_operator_positive_definite(n, N, family):
    tm = TemporalMesh(1.3, np.linspace(0, 1.3, N + 1))
    op = assemble_operator("GB", tm, build_unit_square_mesh(n), family=family)
    A = op.assembled().toarray()
    w = np.linalg.eigvalsh(0.5 * (A + A.T))
    assert w.min() > 0


def test_gb_value_n8():
    prob, tm, xm, op, F = setup("GB", "P0", 8, 2, "full_p1")
    r = error_norms(solve(op, F), prob, tm, xm)
    assert (r.h_x, r.h_t) == (pytest.approx(0.0884, abs=1e-4), pytest.approx(0.0707, abs=1e-4))
    assert r.seminorm_error == pytest.approx(3.28e-01, rel=5e-3)


def test_gp_instability_value():
    prob, tm, xm, op, F = setup("GP", "P0", 16, 2, "full_p1")
    r = error_norms(solve(op, F), prob, tm, xm)
    assert r.seminorm_error == pytest.approx(4.37e03, rel=5e-3)


def test_gp_and_gb_agree_on_stable_cells():
    for n, a in [(4, 1), (8, 3), (16, 4)]:
        prob, tm, xm, gp, F = setup("GP", "RT1", n, a, "full_p1")
        e_gp = error_norms(solve(gp, F), prob, tm, xm).seminorm_error
        _, _, _, gb, G = setup("GB", "RT1", n, a, "full_p1")
        e_gb = error_norms(solve(gb, G), prob, tm, xm).seminorm_error
        assert abs(e_gp - e_gb) <= 0.15 * e_gp


# -- CFL ---------------------------------------------------------------------------


def test_cfl_bound_value():
    p = cfl_check(build_uniform_temporal_mesh(1.0, 0), build_unit_square_mesh(1))
    assert p.cfl_bound == pytest.approx(0.81649658, abs=1e-8)
    assert CFL_CONSTANT == 18.0


def test_cfl_examples():
    xm = build_unit_square_mesh(32)
    p = cfl_check(build_uniform_temporal_mesh(np.sqrt(2), 4), xm)
    assert p.ratio == pytest.approx(0.8, rel=1e-12) and p.predicted_stable
    p = cfl_check(build_uniform_temporal_mesh(1.5, 4), xm)
    assert p.ratio == pytest.approx(0.8485, abs=1e-4) and not p.predicted_stable


def test_cfl_equality_is_unstable():
    xm = build_unit_square_mesh(1)
    h = np.sqrt(12 / 18) * xm.h_max
    p = cfl_check(TemporalMesh(h, [0.0, h], uniform=True), xm, c_I=12 / (h / xm.h_max) ** 2)
    assert not p.predicted_stable


def test_cfl_contract():
    xm = build_unit_square_mesh(2)
    with pytest.raises(ContractError):
        cfl_check(TemporalMesh(1.0, [0.0, 0.3, 1.0]), xm)
    with pytest.raises(ValueError):
        cfl_check(build_uniform_temporal_mesh(1.0, 1), xm, c_I=0.0)


def test_classify():
    p = cfl_check(build_uniform_temporal_mesh(1.0, 1), build_unit_square_mesh(2))
    assert classify(0.2, 0.1, p).classification == "stable"
    assert classify(1.1, 0.1, p).classification == "unstable"
    assert classify(np.inf, 0.1, p).classification == "unstable"
    assert classify(np.nan, 0.1, p).classification == "unstable"


def test_classify_against_interpolation_on_unstable_cell():
    prob, tm, xm, op, F = setup("GP", "P0", 16, 2, "full_p1")
    e = error_norms(solve(op, F), prob, tm, xm).seminorm_error
    i = error_norms(interpolate_spacetime(prob, tm, xm, "full_p1"), prob, tm, xm).seminorm_error
    v = classify(e, i, cfl_check(tm, xm))
    assert v.classification == "unstable"
    assert not cfl_check(tm, xm).predicted_stable
