"""Manufactured test problem, space-time error norms and slice dumps."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .quadrature import gauss_interval, triangle_points, triangle_rule
from .solver import SpaceTimeCoefficients
from .spatial import (
    SpatialFamily,
    TriMesh,
    basis_values,
    boundary_constraint,
    curl_nedelec,
    eval_nedelec,
    local_basis,
    locate,
    nedelec_interpolate,
    num_edge_dofs,
)
from .temporal import TemporalMesh, hat_values

PI = np.pi


@dataclass(frozen=True)
class ManufacturedProblem:
    """Closures ``f(t, x)`` with ``x[..., 0:2]`` the spatial point; ``t`` broadcasts."""

    A: Callable
    dtA: Callable
    curlA: Callable
    j: Callable
    terminal_time: float = float(np.sqrt(2.0))
    epsilon: np.ndarray = field(default_factory=lambda: np.eye(2))
    mu: float = 1.0

    def with_terminal_time(self, T: float) -> "ManufacturedProblem":
        return ManufacturedProblem(self.A, self.dtA, self.curlA, self.j, float(T), self.epsilon, self.mu)


def _A(t, x):
    x1, x2 = x[..., 0], x[..., 1]
    b2 = x2 * (1 - x2)
    a1 = -5 * t**2 * b2 + t**3 * np.sin(PI * x1) * b2
    a2 = t**2 * x1 * (1 - x1)
    return np.stack(np.broadcast_arrays(a1, a2), axis=-1)


def _dtA(t, x):
    x1, x2 = x[..., 0], x[..., 1]
    b2 = x2 * (1 - x2)
    a1 = -10 * t * b2 + 3 * t**2 * np.sin(PI * x1) * b2
    a2 = 2 * t * x1 * (1 - x1)
    return np.stack(np.broadcast_arrays(a1, a2), axis=-1)


def _curlA(t, x):
    x1, x2 = x[..., 0], x[..., 1]
    return t**2 * (1 - 2 * x1) + 5 * t**2 * (1 - 2 * x2) - t**3 * np.sin(PI * x1) * (1 - 2 * x2)


def _j(t, x):
    x1, x2 = x[..., 0], x[..., 1]
    s, c = np.sin(PI * x1), np.cos(PI * x1)
    j1 = -10 * (t**2 - x2**2 + x2) + 2 * t**3 * s + 6 * t * s * x2 * (1 - x2)
    j2 = 2 * (t**2 - x1**2 + x1) + PI * t**3 * (1 - 2 * x2) * c
    return np.stack(np.broadcast_arrays(j1, j2), axis=-1)


def manufactured(T: float = float(np.sqrt(2.0))) -> ManufacturedProblem:
    return ManufacturedProblem(_A, _dtA, _curlA, _j, float(T))


# -- norms -----------------------------------------------------------------------------


@dataclass(frozen=True)
class ErrorReport:
    l2_error: float
    seminorm_error: float
    h_t: float
    h_x: float
    num_time_elements: int
    num_triangles: int


def _family_of(Ah, family):
    if family is not None:
        return SpatialFamily(family)
    if isinstance(Ah, SpaceTimeCoefficients):
        return Ah.family
    return SpatialFamily.whitney


def _nodal_coefficients(Ah, tmesh: TemporalMesh, xmesh: TriMesh, family: SpatialFamily) -> np.ndarray:
    """Coefficients on all DOFs at every temporal node, row 0 being the zero initial state."""
    nd = num_edge_dofs(xmesh, family)
    if isinstance(Ah, SpaceTimeCoefficients) and Ah.interior is not None:
        vals = Ah.full_dofs(nd)
    else:
        vals = Ah.values if isinstance(Ah, SpaceTimeCoefficients) else np.asarray(Ah, float)
        vals = _widen(vals, xmesh, family)
    if vals.shape[0] != tmesh.num_elements:
        raise ValueError(f"coefficients have {vals.shape[0]} time levels, mesh has {tmesh.num_elements}")
    return np.vstack([np.zeros((1, nd)), vals])


def _widen(vals: np.ndarray, xmesh: TriMesh, family: SpatialFamily) -> np.ndarray:
    if vals.ndim != 2:
        raise ValueError("coefficients must be a (N_t, N_x) array")
    nd = num_edge_dofs(xmesh, family)
    if vals.shape[1] == nd:
        return vals
    idx = boundary_constraint(xmesh, family)
    if vals.shape[1] != idx.size:
        raise ValueError(f"coefficient width {vals.shape[1]} matches neither all nor interior DOFs")
    out = np.zeros((vals.shape[0], nd))
    out[:, idx] = vals
    return out


def error_norms(
    Ah,
    prob: ManufacturedProblem,
    tmesh: TemporalMesh,
    xmesh: TriMesh,
    time_order: int = 4,
    tri_points: int = 7,
    family=None,
) -> ErrorReport:
    """``L2(Q)`` error and the seminorm ``(|dt e|^2 + |curl e|^2)^(1/2)``.

    ``family`` defaults to the one recorded on ``Ah``.
    """
    if time_order < 4:
        raise ValueError("temporal quadrature needs at least 4 points")
    family = _family_of(Ah, family)
    C = _nodal_coefficients(Ah, tmesh, xmesh, family)
    lam, wx = triangle_rule(tri_points)
    X = triangle_points(xmesh, lam)  # (nt, m, 2)
    lb = local_basis(xmesh, family)
    Psi = basis_values(xmesh, lb, lam)
    W = xmesh.areas[:, None] * wx[None, :]  # (nt, m)
    s, ws = gauss_interval(time_order)

    def spatial_values(c):
        return np.einsum("tk,tmkc->tmc", c[lb.dofs], Psi)

    l2 = semi = 0.0
    V0, curl0 = spatial_values(C[0]), curl_nedelec(xmesh, C[0], family)
    for e in range(tmesh.num_elements):
        h = tmesh.sizes[e]
        V1, curl1 = spatial_values(C[e + 1]), curl_nedelec(xmesh, C[e + 1], family)
        dV = (V1 - V0) / h
        for sq, wq in zip(s, ws):
            t = tmesh.nodes[e] + h * sq
            dA = prob.A(t, X) - ((1 - sq) * V0 + sq * V1)
            dT = prob.dtA(t, X) - dV
            dC = prob.curlA(t, X) - ((1 - sq) * curl0 + sq * curl1)[:, None]
            l2 += h * wq * np.sum(W * np.sum(dA * dA, axis=-1))
            semi += h * wq * np.sum(W * (np.sum(dT * dT, axis=-1) + dC * dC))
        V0, curl0 = V1, curl1
    return ErrorReport(
        float(np.sqrt(l2)), float(np.sqrt(semi)), tmesh.h, xmesh.h_max, tmesh.num_elements, xmesh.num_triangles
    )


def interpolate_spacetime(
    prob: ManufacturedProblem, tmesh: TemporalMesh, xmesh: TriMesh, family=SpatialFamily.whitney
) -> SpaceTimeCoefficients:
    """Nodal interpolation in time composed with edge moments in space.

    The ``t_0`` level is dropped (trial hats start at 1); boundary edge
    moments are dropped as well, which is exact for fields with zero
    tangential trace.
    """
    family = SpatialFamily(family)
    idx = boundary_constraint(xmesh, family)
    vals = np.empty((tmesh.num_elements, idx.size))
    for l, t in enumerate(tmesh.nodes[1:]):
        vals[l] = nedelec_interpolate(lambda p: prob.A(t, p), xmesh, family=family)[idx]
    return SpaceTimeCoefficients(vals, interior=idx, solver="interpolation", family=family)


def convergence_slope(h, err) -> float:
    """Least-squares slope of ``log err`` against ``log h``."""
    h, err = np.asarray(h, float), np.asarray(err, float)
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


# -- slice -----------------------------------------------------------------------------


@dataclass(frozen=True)
class SliceSamples:
    x: np.ndarray
    y: np.ndarray
    magnitude: np.ndarray
    t: float

    def write_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "magnitude"])
            for a, b, c in zip(self.x, self.y, self.magnitude):
                w.writerow([f"{a:.6f}", f"{b:.6f}", repr(float(c))])


def slice_difference(
    Ah,
    prob: ManufacturedProblem,
    tmesh: TemporalMesh,
    xmesh: TriMesh,
    t: float,
    resolution: int = 200,
    family=None,
) -> SliceSamples:
    """``|A(t, .) - A_h(t, .)|`` on a half-pixel-offset lattice over the unit square."""
    if not 0.0 <= t <= tmesh.terminal_time:
        raise ValueError(f"t={t} outside [0, {tmesh.terminal_time}]")
    family = _family_of(Ah, family)
    C = _nodal_coefficients(Ah, tmesh, xmesh, family)
    e, left, right = hat_values(tmesh, np.array([t]))
    c = left[0] * C[e[0]] + right[0] * C[e[0] + 1]
    g = (np.arange(resolution) + 0.5) / resolution
    Xg, Yg = np.meshgrid(g, g, indexing="xy")
    lo, hi = xmesh.vertices.min(axis=0), xmesh.vertices.max(axis=0)
    pts = np.column_stack([lo[0] + (hi[0] - lo[0]) * Xg.ravel(), lo[1] + (hi[1] - lo[1]) * Yg.ravel()])
    tri, lam = locate(xmesh, pts)
    diff = prob.A(t, pts) - eval_nedelec(xmesh, c, tri, lam, family)
    return SliceSamples(pts[:, 0], pts[:, 1], np.linalg.norm(diff, axis=1), float(t))
