"""Triangle meshes and lowest-order edge/face/cell elements on them.

Edge functions are the Whitney forms ``psi_e = lam_lo grad lam_hi - lam_hi grad lam_lo``
for the global edge ``e = (lo, hi)``, ``lo < hi``.  Raviart-Thomas functions are
the 90 degree rotations of the edge functions, and the vector P0 space has the two
componentwise indicators on each triangle (DOF ``2*tri + component``).
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

# local edge m is opposite local vertex m
LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])


class DegenerateElementError(ValueError):
    def __init__(self, element: int, area: float):
        super().__init__(f"triangle {element} is degenerate (signed area {area:.3e})")
        self.element = element
        self.area = area


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, history):
        super().__init__(message)
        self.history = list(history)


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Oriented triangle mesh.

    Clockwise triangles are reoriented on construction (two vertices swapped).
    Everything except ``vertices`` and ``triangles`` is derived.
    """

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        t = np.array(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ValueError("vertices must be an (nv, 2) array")
        if t.ndim != 2 or t.shape[1] != 3:
            raise ValueError("triangles must be an (nt, 3) array")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle refers to a missing vertex")
        area = _signed_area(v, t)
        tol = 1e-14 * max(1.0, np.ptp(v, axis=0).max() if len(v) else 1.0) ** 2
        bad = np.flatnonzero(np.abs(area) <= tol)
        if bad.size:
            raise DegenerateElementError(int(bad[0]), float(area[bad[0]]))
        flip = area < 0
        t[flip] = t[flip][:, [0, 2, 1]]
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def _topology(self):
        t = self.triangles
        a = t[:, LOCAL_EDGES[:, 0]]
        b = t[:, LOCAL_EDGES[:, 1]]
        pairs = np.stack([np.minimum(a, b), np.maximum(a, b)], axis=-1).reshape(-1, 2)
        edges, inv, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
        if counts.max(initial=0) > 2:
            raise ValueError("non-manifold mesh: an edge is shared by more than two triangles")
        tri_edges = inv.reshape(-1, 3)
        signs = np.where(a < b, 1, -1).astype(np.int8)
        boundary = counts == 1
        for arr in (edges, tri_edges, signs, boundary):
            arr.setflags(write=False)
        return edges, tri_edges, signs, boundary

    @property
    def edges(self) -> np.ndarray:
        """Global edges ``(lo, hi)`` with ``lo < hi``, lexicographically sorted."""
        return self._topology[0]

    @property
    def tri_edges(self) -> np.ndarray:
        """Global edge index of local edge m (opposite local vertex m)."""
        return self._topology[1]

    @property
    def tri_signs(self) -> np.ndarray:
        """+1 where the counter-clockwise local direction matches the global one."""
        return self._topology[2]

    @property
    def boundary_edges(self) -> np.ndarray:
        return self._topology[3]

    @cached_property
    def areas(self) -> np.ndarray:
        a = _signed_area(self.vertices, self.triangles)
        a.setflags(write=False)
        return a

    @property
    def element_sizes(self) -> np.ndarray:
        return np.sqrt(self.areas)

    @property
    def h_max(self) -> float:
        return float(self.element_sizes.max())

    @property
    def h_min(self) -> float:
        return float(self.element_sizes.min())

    @cached_property
    def gradients(self) -> np.ndarray:
        """Barycentric gradients, shape (nt, 3, 2)."""
        p = self.vertices[self.triangles]
        # grad lam_m = rot90(p_{m+2} - p_{m+1}) / (2 area)
        e = p[:, [2, 0, 1]] - p[:, [1, 2, 0]]
        g = np.stack([-e[..., 1], e[..., 0]], axis=-1) / (2 * self.areas[:, None, None])
        g.setflags(write=False)
        return g

    def interior_vertices(self) -> np.ndarray:
        on_bnd = np.zeros(self.num_vertices, bool)
        on_bnd[self.edges[self.boundary_edges].ravel()] = True
        return np.flatnonzero(~on_bnd)

    def edge_lohi_local(self) -> tuple[np.ndarray, np.ndarray]:
        """Local vertex numbers of the global ``lo`` and ``hi`` end of each local edge."""
        m0, m1 = LOCAL_EDGES[:, 0], LOCAL_EDGES[:, 1]
        pos = self.tri_signs > 0
        lo = np.where(pos, m0, m1)
        hi = np.where(pos, m1, m0)
        return lo, hi


def _signed_area(v: np.ndarray, t: np.ndarray) -> np.ndarray:
    if len(t) == 0:
        return np.zeros(0)
    p0, p1, p2 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    d1, d2 = p1 - p0, p2 - p0
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def build_unit_square_mesh(n: int) -> TriMesh:
    """``n`` x ``n`` squares, each cut along its positive-slope diagonal."""
    if n < 1:
        raise ValueError(f"need at least one square per side, got {n}")
    xs = np.arange(n + 1) / n
    X, Y = np.meshgrid(xs, xs)
    verts = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (i + (n + 1) * j).ravel()
    v10, v01, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
    tris = np.empty((2 * n * n, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([v00, v10, v11])
    tris[1::2] = np.column_stack([v00, v11, v01])
    return TriMesh(verts, tris)


def uniform_refine(mesh: TriMesh) -> TriMesh:
    """Red refinement: four similar children per triangle via edge midpoints."""
    v, t = mesh.vertices, mesh.triangles
    mids = 0.5 * (v[mesh.edges[:, 0]] + v[mesh.edges[:, 1]])
    m = mesh.num_vertices + mesh.tri_edges  # midpoint opposite local vertex 0, 1, 2
    v0, v1, v2 = t.T
    m12, m20, m01 = m.T
    kids = np.stack(
        [
            np.column_stack([v0, m01, m20]),
            np.column_stack([m01, v1, m12]),
            np.column_stack([m20, m12, v2]),
            np.column_stack([m01, m12, m20]),
        ],
        axis=1,
    ).reshape(-1, 3)
    return TriMesh(np.vstack([v, mids]), kids)


# -- materials -------------------------------------------------------------------------


@dataclass(frozen=True)
class MaterialData:
    """Elementwise constant permittivity tensor and permeability."""

    epsilon: np.ndarray  # (nt, 2, 2)
    mu: np.ndarray  # (nt,)

    def __post_init__(self):
        eps = np.asarray(self.epsilon, dtype=float)
        mu = np.asarray(self.mu, dtype=float)
        if eps.ndim != 3 or eps.shape[1:] != (2, 2):
            raise ValueError("epsilon must have shape (nt, 2, 2)")
        if mu.shape != (eps.shape[0],):
            raise ValueError("mu must have one value per element")
        sym = 0.5 * (eps + eps.transpose(0, 2, 1))
        lmin = np.linalg.eigvalsh(sym)[:, 0]
        if np.any(lmin <= 0):
            raise ValueError(f"epsilon not positive definite on element {int(np.argmin(lmin))}")
        if np.any(mu <= 0):
            raise ValueError(f"mu not positive on element {int(np.argmin(mu))}")
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "mu", mu)

    @classmethod
    def vacuum(cls, mesh: TriMesh) -> "MaterialData":
        nt = mesh.num_triangles
        return cls(np.broadcast_to(np.eye(2), (nt, 2, 2)).copy(), np.ones(nt))

    @classmethod
    def constant(cls, mesh: TriMesh, epsilon, mu: float) -> "MaterialData":
        nt = mesh.num_triangles
        return cls(np.broadcast_to(np.asarray(epsilon, float), (nt, 2, 2)).copy(), np.full(nt, float(mu)))


# -- spaces and matrices ---------------------------------------------------------------


class SpatialFamily(enum.Enum):
    """Which lowest-order edge space is used.

    ``whitney``: first-kind, one DOF per edge (Whitney forms ``sigma = -1``).
    ``full_p1``: second-kind, adds the edge-bubble gradients
    ``grad(lam_lo lam_hi)`` (``sigma = +1``) as DOF ``num_edges + e``; the
    face space is then BDM1 instead of RT0.
    """

    whitney = "whitney"
    full_p1 = "full_p1"


class SpatialSpace(enum.Enum):
    P0_vec = "P0_vec"
    RT0 = "RT0"
    Nedelec0 = "Nedelec0"
    Nedelec0_bc = "Nedelec0_bc"


@dataclass(frozen=True)
class SpaceInfo:
    space: SpatialSpace
    dof_count: int
    entity: np.ndarray  # edge index per DOF, or (triangle, component) rows for P0_vec


def num_edge_dofs(mesh: TriMesh, family=SpatialFamily.whitney) -> int:
    return mesh.num_edges * (1 if SpatialFamily(family) is SpatialFamily.whitney else 2)


def space_info(mesh: TriMesh, space: SpatialSpace, family=SpatialFamily.whitney) -> SpaceInfo:
    space = SpatialSpace(space)
    family = SpatialFamily(family)
    if space is SpatialSpace.P0_vec:
        tri = np.repeat(np.arange(mesh.num_triangles), 2)
        comp = np.tile([0, 1], mesh.num_triangles)
        return SpaceInfo(space, 2 * mesh.num_triangles, np.column_stack([tri, comp]))
    if space is SpatialSpace.Nedelec0_bc:
        idx = boundary_constraint(mesh, family)
        return SpaceInfo(space, idx.size, idx % mesh.num_edges)
    nd = num_edge_dofs(mesh, family)
    return SpaceInfo(space, nd, np.arange(nd) % mesh.num_edges)


class SpatialMatrixKind(enum.Enum):
    curl_curl_N = "curl_curl_N"
    mass_N = "mass_N"
    mass_P0 = "mass_P0"
    mass_RT = "mass_RT"
    mixed_N_P0 = "mixed_N_P0"
    mixed_N_RT = "mixed_N_RT"


_SPACES = {
    SpatialMatrixKind.curl_curl_N: (SpatialSpace.Nedelec0, SpatialSpace.Nedelec0),
    SpatialMatrixKind.mass_N: (SpatialSpace.Nedelec0, SpatialSpace.Nedelec0),
    SpatialMatrixKind.mass_P0: (SpatialSpace.P0_vec, SpatialSpace.P0_vec),
    SpatialMatrixKind.mass_RT: (SpatialSpace.RT0, SpatialSpace.RT0),
    SpatialMatrixKind.mixed_N_P0: (SpatialSpace.Nedelec0, SpatialSpace.P0_vec),
    SpatialMatrixKind.mixed_N_RT: (SpatialSpace.Nedelec0, SpatialSpace.RT0),
}


@dataclass(frozen=True)
class SpatialMatrix:
    """``entries[i, j] = (col basis j, row basis i)`` in CSR form."""

    kind: SpatialMatrixKind
    rows: SpatialSpace
    cols: SpatialSpace
    entries: sp.csr_matrix
    family: SpatialFamily = SpatialFamily.whitney
    row_dofs: np.ndarray | None = None  # selected DOFs after restriction
    col_dofs: np.ndarray | None = None

    @property
    def shape(self):
        return self.entries.shape

    def restrict(self, rows=None, cols=None) -> "SpatialMatrix":
        """Keep the given row / column DOFs (e.g. interior edges)."""
        A = self.entries
        rsp, csp = self.rows, self.cols
        if rows is not None:
            A = A[np.asarray(rows)]
            rsp = SpatialSpace.Nedelec0_bc if rsp is SpatialSpace.Nedelec0 else rsp
        if cols is not None:
            A = A[:, np.asarray(cols)]
            csp = SpatialSpace.Nedelec0_bc if csp is SpatialSpace.Nedelec0 else csp
        return SpatialMatrix(self.kind, rsp, csp, A.tocsr(), self.family, rows, cols)


def _rot(g: np.ndarray) -> np.ndarray:
    """Counter-clockwise rotation by 90 degrees."""
    return np.stack([-g[..., 1], g[..., 0]], axis=-1)


@dataclass(frozen=True)
class LocalBasis:
    """Local functions ``lam_a grad lam_b + sigma lam_b grad lam_a`` on each triangle.

    ``a``, ``b`` and ``dofs`` have shape (nt, nloc); ``sigma`` has shape (nloc,).
    """

    a: np.ndarray
    b: np.ndarray
    sigma: np.ndarray
    dofs: np.ndarray

    @property
    def size(self) -> int:
        return self.sigma.size


def local_basis(mesh: TriMesh, family=SpatialFamily.whitney) -> LocalBasis:
    lo, hi = mesh.edge_lohi_local()
    E = mesh.tri_edges
    if SpatialFamily(family) is SpatialFamily.whitney:
        return LocalBasis(lo, hi, -np.ones(3), E)
    return LocalBasis(
        np.hstack([lo, lo]),
        np.hstack([hi, hi]),
        np.concatenate([-np.ones(3), np.ones(3)]),
        np.hstack([E, E + mesh.num_edges]),
    )


def basis_values(mesh: TriMesh, lb: LocalBasis, lam: np.ndarray, tri: np.ndarray | None = None) -> np.ndarray:
    """Local functions at barycentric points.

    With ``tri=None`` ``lam`` is a reference rule (m, 3) and the result is
    (nt, m, nloc, 2); otherwise ``lam`` is (np, 3), one point per entry of
    ``tri``, and the result is (np, nloc, 2).
    """
    if tri is None:
        G = mesh.gradients
        r = np.arange(mesh.num_triangles)[:, None]
        ga, gb = G[r, lb.a], G[r, lb.b]  # (nt, nloc, 2)
        la = lam[:, lb.a].transpose(1, 0, 2)  # (nt, m, nloc)
        lbv = lam[:, lb.b].transpose(1, 0, 2)
        return la[..., None] * gb[:, None] + lb.sigma[:, None] * lbv[..., None] * ga[:, None]
    G = mesh.gradients[tri]
    a, b = lb.a[tri], lb.b[tri]
    r = np.arange(len(tri))[:, None]
    return lam[r, a][..., None] * G[r, b] + lb.sigma[:, None] * lam[r, b][..., None] * G[r, a]


def basis_curls(mesh: TriMesh, lb: LocalBasis) -> np.ndarray:
    """Constant curls (nt, nloc): ``(1 - sigma) grad lam_a x grad lam_b``."""
    G = mesh.gradients
    r = np.arange(mesh.num_triangles)[:, None]
    ga, gb = G[r, lb.a], G[r, lb.b]
    return (1.0 - lb.sigma) * (ga[..., 0] * gb[..., 1] - ga[..., 1] * gb[..., 0])


def _lam_gram(area: np.ndarray) -> np.ndarray:
    """``int lam_i lam_j`` on each triangle, shape (nt, 3, 3)."""
    return area[:, None, None] * (np.ones((3, 3)) + np.eye(3)) / 12.0


def _local_gram(mesh: TriMesh, lb: LocalBasis, GG: np.ndarray) -> np.ndarray:
    """Exact ``int phi_p . phi_m`` given ``GG[t, i, j] = g_i . (W g_j)``.

    Row (test) function p, column (trial) function m; the four products of
    the two-term local functions are contracted with the barycentric Gram
    matrix, so no quadrature is involved.
    """
    L = _lam_gram(mesh.areas)
    r = np.arange(mesh.num_triangles)[:, None, None]
    a_p, b_p = lb.a[:, :, None], lb.b[:, :, None]
    a_m, b_m = lb.a[:, None, :], lb.b[:, None, :]
    s_p, s_m = lb.sigma[None, :, None], lb.sigma[None, None, :]
    return (
        L[r, a_p, a_m] * GG[r, b_p, b_m]
        + s_m * L[r, a_p, b_m] * GG[r, b_p, a_m]
        + s_p * L[r, b_p, a_m] * GG[r, a_p, b_m]
        + s_p * s_m * L[r, b_p, b_m] * GG[r, a_p, a_m]
    )


def _scatter(rows: np.ndarray, cols: np.ndarray, vals: np.ndarray, shape) -> sp.csr_matrix:
    # duplicates are summed by coo->csr in a deterministic order
    return sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()


def _check_degenerate(mesh: TriMesh):
    area = mesh.areas
    bad = np.flatnonzero(~(area > 0) | ~np.isfinite(mesh.gradients).all(axis=(1, 2)))
    if bad.size:
        raise DegenerateElementError(int(bad[0]), float(area[bad[0]]))


def assemble_spatial(
    mesh: TriMesh, mat: MaterialData | None, which, family=SpatialFamily.whitney
) -> SpatialMatrix:
    """Exact Galerkin matrix on the full (unconstrained) spaces."""
    which = SpatialMatrixKind(which)
    family = SpatialFamily(family)
    _check_degenerate(mesh)
    mat = mat or MaterialData.vacuum(mesh)
    if mat.mu.shape[0] != mesh.num_triangles:
        raise ValueError("material data does not match the mesh")
    rsp, csp = _SPACES[which]
    nt = mesh.num_triangles
    lb = local_basis(mesh, family)
    nd = num_edge_dofs(mesh, family)
    k = lb.size
    Er = np.broadcast_to(lb.dofs[:, :, None], (nt, k, k))
    Ec = np.broadcast_to(lb.dofs[:, None, :], (nt, k, k))
    G = mesh.gradients

    if which is SpatialMatrixKind.curl_curl_N:
        curl = basis_curls(mesh, lb)
        loc = (mesh.areas / mat.mu)[:, None, None] * curl[:, :, None] * curl[:, None, :]
        A = _scatter(Er, Ec, loc, (nd, nd))
    elif which is SpatialMatrixKind.mass_N:
        GG = np.einsum("tik,tkl,tjl->tij", G, mat.epsilon, G)
        A = _scatter(Er, Ec, _local_gram(mesh, lb, GG), (nd, nd))
    elif which is SpatialMatrixKind.mass_RT:
        # rotation preserves dot products, so the unweighted edge Gram matrix is it
        GG = np.einsum("tik,tjk->tij", G, G)
        A = _scatter(Er, Ec, _local_gram(mesh, lb, GG), (nd, nd))
    elif which is SpatialMatrixKind.mixed_N_RT:
        # rows: edge function p, columns: rotated edge function m
        GG = np.einsum("tik,tjk->tij", G, _rot(G))
        A = _scatter(Er, Ec, _local_gram(mesh, lb, GG), (nd, nd))
    elif which is SpatialMatrixKind.mass_P0:
        A = sp.diags(np.repeat(mesh.areas, 2)).tocsr()
    else:  # mixed_N_P0
        r = np.arange(nt)[:, None]
        # int lam = |w| / 3
        vals = (mesh.areas[:, None, None] / 3.0) * (G[r, lb.b] + lb.sigma[None, :, None] * G[r, lb.a])
        cols = 2 * np.arange(nt)[:, None, None] + np.arange(2)[None, None, :]
        A = _scatter(
            np.broadcast_to(lb.dofs[:, :, None], (nt, k, 2)), np.broadcast_to(cols, (nt, k, 2)), vals, (nd, 2 * nt)
        )
    return SpatialMatrix(which, rsp, csp, A, family)


def boundary_constraint(mesh: TriMesh, family=SpatialFamily.whitney) -> np.ndarray:
    """Indices of the DOFs on interior edges, i.e. free tangential trace."""
    idx = np.flatnonzero(~mesh.boundary_edges)
    if SpatialFamily(family) is SpatialFamily.whitney:
        return idx
    return np.concatenate([idx, idx + mesh.num_edges])


# -- evaluation ----------------------------------------------------------------------


def locate(mesh: TriMesh, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Triangle index and barycentric coordinates of each point.

    Uses the structured layout when the mesh came from the unit-square
    generator, otherwise a KD-tree on centroids with a barycentric test.
    """
    pts = np.atleast_2d(np.asarray(pts, float))
    tri = _locate_structured(mesh, pts)
    if tri is None:
        tri = _locate_generic(mesh, pts)
    lam = barycentric(mesh, tri, pts)
    return tri, lam


def barycentric(mesh: TriMesh, tri: np.ndarray, pts: np.ndarray) -> np.ndarray:
    p0 = mesh.vertices[mesh.triangles[tri, 0]]
    G = mesh.gradients[tri]
    l12 = np.einsum("nij,nj->ni", G[:, 1:], pts - p0)
    return np.column_stack([1.0 - l12.sum(axis=1), l12])


def _locate_structured(mesh: TriMesh, pts: np.ndarray):
    nt = mesh.num_triangles
    n = int(round(np.sqrt(nt / 2)))
    if 2 * n * n != nt or mesh.num_vertices != (n + 1) ** 2:
        return None
    ref = _structured_cache(n)
    if not (np.array_equal(mesh.triangles, ref.triangles) and np.array_equal(mesh.vertices, ref.vertices)):
        return None
    i = np.clip(np.floor(pts[:, 0] * n).astype(int), 0, n - 1)
    j = np.clip(np.floor(pts[:, 1] * n).astype(int), 0, n - 1)
    upper = (pts[:, 1] * n - j) > (pts[:, 0] * n - i)
    return 2 * (i + n * j) + upper.astype(int)


_STRUCT: dict[int, TriMesh] = {}


def _structured_cache(n: int) -> TriMesh:
    if n not in _STRUCT:
        _STRUCT[n] = build_unit_square_mesh(n)
    return _STRUCT[n]


def _locate_generic(mesh: TriMesh, pts: np.ndarray) -> np.ndarray:
    from scipy.spatial import cKDTree

    cent = mesh.vertices[mesh.triangles].mean(axis=1)
    k = min(12, mesh.num_triangles)
    _, cand = cKDTree(cent).query(pts, k=k)
    cand = np.atleast_2d(cand).reshape(len(pts), k)
    out = np.full(len(pts), -1)
    best = np.full(len(pts), -np.inf)
    for c in range(k):
        lam = barycentric(mesh, cand[:, c], pts)
        score = lam.min(axis=1)
        better = score > best
        out[better] = cand[better, c]
        best[better] = score[better]
    return out


def eval_nedelec(
    mesh: TriMesh, coef: np.ndarray, tri: np.ndarray, lam: np.ndarray, family=SpatialFamily.whitney
) -> np.ndarray:
    """Evaluate the edge field with DOF vector ``coef[..., dof]`` at (tri, lam); returns (..., npts, 2)."""
    lb = local_basis(mesh, family)
    psi = basis_values(mesh, lb, lam, tri)  # (np, nloc, 2)
    c = np.asarray(coef, float)[..., lb.dofs[tri]]  # (..., np, nloc)
    return np.einsum("...pm,pmk->...pk", c, psi)


def curl_nedelec(mesh: TriMesh, coef: np.ndarray, family=SpatialFamily.whitney) -> np.ndarray:
    """Elementwise constant curl, shape (..., nt)."""
    lb = local_basis(mesh, family)
    c = np.asarray(coef, float)[..., lb.dofs]
    return np.einsum("...tm,tm->...t", c, basis_curls(mesh, lb))


def nedelec_interpolate(field, mesh: TriMesh, points: int = 5, family=SpatialFamily.whitney) -> np.ndarray:
    """Tangential edge moments by Gauss quadrature.

    ``field`` maps an (m, 2) array of points to an (m, 2) array of vectors.
    The Whitney DOF of edge ``e`` is ``int_e F . tau_e ds`` with ``tau_e``
    pointing from the low to the high vertex.  For ``full_p1`` the bubble DOF
    is ``-6 int_e F . tau_e (s - 1/2) ds``, dual to ``grad(lam_lo lam_hi)``.
    """
    x, w = np.polynomial.legendre.leggauss(points)
    s, w = 0.5 * (x + 1.0), 0.5 * w
    p0 = mesh.vertices[mesh.edges[:, 0]]
    d = mesh.vertices[mesh.edges[:, 1]] - p0
    pts = p0[:, None, :] + s[None, :, None] * d[:, None, :]
    F = np.asarray(field(pts.reshape(-1, 2)), float).reshape(mesh.num_edges, points, 2)
    tang = np.einsum("eqk,ek->eq", F, d)
    whit = tang @ w
    if SpatialFamily(family) is SpatialFamily.whitney:
        return whit
    return np.concatenate([whit, -6.0 * tang @ (w * (s - 0.5))])


# -- inverse inequality ----------------------------------------------------------------


def estimate_inverse_constant(
    mesh: TriMesh,
    tol: float = 1e-8,
    max_iter: int = 20000,
    seed: int = 0,
    family=SpatialFamily.whitney,
) -> float:
    """``h_x^2 * lambda_max`` for ``curl_curl x = lambda mass x`` on all edge DOFs.

    Plain power iteration on ``mass^{-1} curl_curl`` with the Rayleigh quotient
    as estimate; stops when it changes by less than ``tol`` relative.
    """
    vac = MaterialData.vacuum(mesh)
    K = assemble_spatial(mesh, vac, "curl_curl_N", family).entries
    M = assemble_spatial(mesh, vac, "mass_N", family).entries
    lu = spla.splu(M.tocsc())
    x = np.random.default_rng(seed).standard_normal(M.shape[0])
    lam = 0.0
    history = []
    for _ in range(max_iter):
        y = lu.solve(K @ x)
        new = float(x @ (K @ x)) / float(x @ (M @ x))
        history.append(new)
        if new > 0 and abs(new - lam) <= tol * new:
            return mesh.h_max**2 * new
        lam = new
        x = y / np.sqrt(float(y @ (M @ y)))
    raise ConvergenceError(f"power iteration did not converge in {max_iter} steps", history[-10:])


# -- text format -----------------------------------------------------------------------


def dump_mesh(mesh: TriMesh, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        fh.write(f"{mesh.num_vertices} {mesh.num_triangles}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{a} {b} {c}\n")


def load_mesh(path: str | os.PathLike) -> TriMesh:
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    try:
        nv, nt = int(lines[0][0]), int(lines[0][1])
        verts = np.array([[float(a), float(b)] for a, b in lines[1 : 1 + nv]])
        tris = np.array([[int(a), int(b), int(c)] for a, b, c in lines[1 + nv : 1 + nv + nt]])
    except (IndexError, ValueError) as exc:
        raise ValueError(f"malformed mesh file {path}: {exc}") from exc
    if len(verts) != nv or len(tris) != nt:
        raise ValueError(f"malformed mesh file {path}: counts do not match header")
    return TriMesh(verts, tris)
