"""L2 projections of the source term and the resulting load matrices.

A source is a callable ``j(t, x)`` where ``t`` broadcasts against ``x[..., 0]``
and the result has shape ``x.shape``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .hilbert import HilbertKind, SeriesTruncation, assemble_hilbert
from .quadrature import time_points, triangle_points, triangle_rule
from .spatial import (
    SpatialFamily,
    TriMesh,
    _rot,
    assemble_spatial,
    basis_values,
    boundary_constraint,
    local_basis,
    locate,
    num_edge_dofs,
)
from .temporal import TemporalMatrixKind, TemporalMesh, assemble_temporal, hat_values


class ProjectionKind(enum.Enum):
    P0 = "P0"
    RT1 = "RT1"


class Method(enum.Enum):
    GP = "GP"
    GB = "GB"


class MeshMismatchError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ProjectedSource:
    """Coefficients ``J`` (spatial DOF x temporal DOF) of the projected source."""

    kind: ProjectionKind
    coefficients: np.ndarray
    tmesh: TemporalMesh
    xmesh: TriMesh
    residual: float
    family: SpatialFamily = SpatialFamily.whitney

    def __post_init__(self):
        nt, N = self.xmesh.num_triangles, self.tmesh.num_elements
        nd = num_edge_dofs(self.xmesh, self.family)
        want = (2 * nt, N) if self.kind is ProjectionKind.P0 else (nd, N + 1)
        if self.coefficients.shape != want:
            raise ValueError(f"{self.kind.value} coefficients have shape {self.coefficients.shape}, expected {want}")


def _check_time_order(time_order: int):
    if time_order < 3:
        raise ValueError(f"temporal quadrature needs at least 3 points, got {time_order}")


def project_P0(
    j, tmesh: TemporalMesh, xmesh: TriMesh, time_order: int = 3, tri_points: int = 7, family=SpatialFamily.whitney
) -> ProjectedSource:
    """Space-time cell averages of ``j``."""
    _check_time_order(time_order)
    lam, wx = triangle_rule(tri_points)
    X = triangle_points(xmesh, lam)  # (nt, m, 2)
    tq, wt, _ = time_points(tmesh, time_order)
    N, nt = tmesh.num_elements, xmesh.num_triangles
    coef = np.empty((2 * nt, N))
    for k in range(N):
        vals = np.asarray(j(tq[k][:, None, None], X[None]), float)  # (q, nt, m, 2)
        mom = np.einsum("q,qtmc,m->tc", wt[k], vals, wx) * xmesh.areas[:, None]
        # diagonal normal equations: divide by the cell measure
        coef[:, k] = (mom / (tmesh.sizes[k] * xmesh.areas[:, None])).ravel()
    return ProjectedSource(ProjectionKind.P0, coef, tmesh, xmesh, 0.0, SpatialFamily(family))


def rt1_moments(
    j, tmesh: TemporalMesh, xmesh: TriMesh, time_order: int = 3, tri_points: int = 7, family=SpatialFamily.whitney
) -> np.ndarray:
    """``int_Q j . rot(psi) phi_l`` for every face DOF and hat, shape (ndof, N + 1)."""
    lam, wx = triangle_rule(tri_points)
    X = triangle_points(xmesh, lam)
    lb = local_basis(xmesh, family)
    R = _rot(basis_values(xmesh, lb, lam)) * (xmesh.areas[:, None, None, None] * wx[None, :, None, None])
    tq, wt, s = time_points(tmesh, time_order)
    N, ne = tmesh.num_elements, num_edge_dofs(xmesh, family)
    E = lb.dofs.ravel()
    out = np.zeros((ne, N + 1))
    for k in range(N):
        vals = np.asarray(j(tq[k][:, None, None], X[None]), float)
        loc = np.einsum("qtmc,tmec->qte", vals, R).reshape(len(s), -1)  # (q, nt*3)
        left = np.bincount(E, weights=(wt[k] * (1 - s)) @ loc, minlength=ne)
        right = np.bincount(E, weights=(wt[k] * s) @ loc, minlength=ne)
        out[:, k] += left
        out[:, k + 1] += right
    return out


def project_RT1(
    j, tmesh: TemporalMesh, xmesh: TriMesh, time_order: int = 3, tri_points: int = 7, family=SpatialFamily.whitney
) -> ProjectedSource:
    """Projection onto piecewise linear in time times RT0 (BDM1 for ``full_p1``) in space.

    The normal equations ``M_RT J M1_full = moments`` are solved factor by
    factor; no boundary or initial constraint is imposed.
    """
    _check_time_order(time_order)
    rhs = rt1_moments(j, tmesh, xmesh, time_order, tri_points, family)
    M_rt = assemble_spatial(xmesh, None, "mass_RT", family).entries
    Mt = np.array(assemble_temporal(tmesh, TemporalMatrixKind.M1_full).entries)
    try:
        lu = spla.splu(M_rt.tocsc())
        Y = lu.solve(rhs)
        J = sla.solve(Mt, Y.T, assume_a="pos").T
    except (RuntimeError, sla.LinAlgError) as exc:
        raise np.linalg.LinAlgError(f"projection factor is singular: {exc}") from exc
    res = M_rt @ J @ Mt - rhs
    scale = np.linalg.norm(rhs)
    residual = float(np.linalg.norm(res) / scale) if scale > 0 else float(np.linalg.norm(res))
    return ProjectedSource(ProjectionKind.RT1, J, tmesh, xmesh, residual, SpatialFamily(family))


def project(j, kind, tmesh: TemporalMesh, xmesh: TriMesh, **kw) -> ProjectedSource:
    kind = ProjectionKind(kind)
    fn = project_P0 if kind is ProjectionKind.P0 else project_RT1
    return fn(j, tmesh, xmesh, **kw)


def evaluate_projection(proj: ProjectedSource, t, pts) -> np.ndarray:
    """Value of the projected source at times ``t`` (m,) and points (m, 2)."""
    t = np.asarray(t, float)
    pts = np.atleast_2d(np.asarray(pts, float))
    tri, lam = locate(proj.xmesh, pts)
    e, left, right = hat_values(proj.tmesh, t)
    C = proj.coefficients
    if proj.kind is ProjectionKind.P0:
        return np.column_stack([C[2 * tri, e], C[2 * tri + 1, e]])
    lb = local_basis(proj.xmesh, proj.family)
    R = _rot(basis_values(proj.xmesh, lb, lam, tri))  # (m, nloc, 2)
    dofs = lb.dofs[tri]
    c = left[:, None] * C[dofs, e[:, None]] + right[:, None] * C[dofs, e[:, None] + 1]
    return np.einsum("pm,pmk->pk", c, R)


def _same_meshes(proj: ProjectedSource, tmesh: TemporalMesh, xmesh: TriMesh) -> bool:
    if proj.tmesh is not tmesh and not np.array_equal(proj.tmesh.nodes, tmesh.nodes):
        return False
    if proj.xmesh is xmesh:
        return True
    return np.array_equal(proj.xmesh.vertices, xmesh.vertices) and np.array_equal(
        proj.xmesh.triangles, xmesh.triangles
    )


def build_load(
    proj: ProjectedSource,
    method,
    tmesh: TemporalMesh,
    xmesh: TriMesh,
    trunc: SeriesTruncation | None = None,
) -> np.ndarray:
    """Load matrix ``F``, interior edges x N.

    ``F = M_x J M_t^T`` where ``M_x`` is the Nedelec/P0 or Nedelec/RT mixed
    matrix and ``M_t`` pairs the test hats (or their transforms) with the
    temporal basis of the projection.
    """
    method = Method(method)
    if not _same_meshes(proj, tmesh, xmesh):
        raise MeshMismatchError("projected source was built on different meshes")
    interior = boundary_constraint(xmesh, proj.family)
    if proj.kind is ProjectionKind.P0:
        Mx = assemble_spatial(xmesh, None, "mixed_N_P0", proj.family).entries
        if method is Method.GP:
            Mt = assemble_temporal(tmesh, TemporalMatrixKind.M10).entries
        else:
            Mt = assemble_hilbert(tmesh, HilbertKind.M_HT_10, trunc).entries
    else:
        Mx = assemble_spatial(xmesh, None, "mixed_N_RT", proj.family).entries
        if method is Method.GP:
            Mt = assemble_temporal(tmesh, TemporalMatrixKind.M1_hat).entries
        else:
            Mt = assemble_hilbert(tmesh, HilbertKind.M_HT_hat, trunc).entries
    F = (Mx[interior] @ proj.coefficients) @ np.asarray(Mt).T
    return np.ascontiguousarray(F)
