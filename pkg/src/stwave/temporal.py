"""Temporal meshes and the Galerkin matrices of the hat / piecewise-constant bases.

Hat functions ``phi1_l`` are attached to the nodes ``t_0..t_N``; the constants
``phi0_k`` live on the elements ``(t_{k-1}, t_k)``, ``k = 1..N``.  Every matrix
carries explicit row and column index ranges because the trial space
(hats ``1..N``) and the test space (hats ``0..N-1``) are shifted against each
other.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class TemporalMatrixKind(enum.Enum):
    A1 = "A1"
    M1 = "M1"
    M1_full = "M1_full"
    M1_hat = "M1_hat"
    M10 = "M10"
    M0 = "M0"


@dataclass(frozen=True)
class BasisRange:
    """Contiguous block of temporal basis functions, ``first..last`` inclusive."""

    family: str  # "hat" or "const"
    first: int
    last: int

    @property
    def size(self) -> int:
        return self.last - self.first + 1

    def labels(self) -> list[str]:
        sym = "phi1" if self.family == "hat" else "phi0"
        return [f"{sym}_{i}" for i in range(self.first, self.last + 1)]


@dataclass(frozen=True)
class TemporalMatrix:
    kind: enum.Enum
    rows: BasisRange
    cols: BasisRange
    entries: np.ndarray
    accuracy: float | None = None

    def __post_init__(self):
        if self.entries.shape != (self.rows.size, self.cols.size):
            raise ValueError(
                f"{self.kind}: entries have shape {self.entries.shape}, "
                f"expected {(self.rows.size, self.cols.size)}"
            )
        self.entries.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


@dataclass(frozen=True)
class TemporalMesh:
    """Partition ``0 = t_0 < ... < t_N = T`` of the time interval."""

    terminal_time: float
    nodes: np.ndarray
    uniform: bool = False

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        T = float(self.terminal_time)
        if not T > 0:
            raise ValueError(f"terminal time must be positive, got {T}")
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("a temporal mesh needs at least two nodes")
        if nodes[0] != 0.0 or nodes[-1] != T:
            raise ValueError("nodes must start at 0 and end at the terminal time")
        h = np.diff(nodes)
        if np.any(h <= 0):
            raise ValueError("nodes must be strictly increasing")
        if self.uniform and h.max() - h.min() > 8 * np.finfo(float).eps * T:
            raise ValueError("mesh flagged uniform but element sizes differ")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "terminal_time", T)

    @property
    def num_elements(self) -> int:
        return self.nodes.size - 1

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def h(self) -> float:
        return float(self.sizes.max())


def build_uniform_temporal_mesh(T: float, alpha: int) -> TemporalMesh:
    """Uniform mesh with ``5 * 2**alpha`` elements on ``[0, T]``."""
    if not T > 0:
        raise ValueError(f"terminal time must be positive, got {T}")
    if alpha < 0:
        raise ValueError(f"refinement level must be non-negative, got {alpha}")
    n = 5 * 2**alpha
    nodes = T * np.arange(n + 1) / n
    nodes[-1] = T
    return TemporalMesh(T, nodes, uniform=True)


def temporal_dof_ranges(mesh: TemporalMesh, kind: TemporalMatrixKind) -> tuple[BasisRange, BasisRange]:
    N = mesh.num_elements
    test_hats = BasisRange("hat", 0, N - 1)
    trial_hats = BasisRange("hat", 1, N)
    all_hats = BasisRange("hat", 0, N)
    consts = BasisRange("const", 1, N)
    return {
        TemporalMatrixKind.A1: (test_hats, trial_hats),
        TemporalMatrixKind.M1: (test_hats, trial_hats),
        TemporalMatrixKind.M1_full: (all_hats, all_hats),
        TemporalMatrixKind.M1_hat: (test_hats, all_hats),
        TemporalMatrixKind.M10: (test_hats, consts),
        TemporalMatrixKind.M0: (consts, consts),
    }[TemporalMatrixKind(kind)]


def _full_hat_matrices(mesh: TemporalMesh) -> tuple[np.ndarray, np.ndarray]:
    """Stiffness and mass matrices over all hats ``0..N``, exact."""
    h = mesh.sizes
    n = h.size + 1
    stiff = np.zeros((n, n))
    mass = np.zeros((n, n))
    idx = np.arange(h.size)
    # element (t_{e}, t_{e+1}) couples hats e and e+1
    np.add.at(stiff, (idx, idx), 1.0 / h)
    np.add.at(stiff, (idx + 1, idx + 1), 1.0 / h)
    np.add.at(stiff, (idx, idx + 1), -1.0 / h)
    np.add.at(stiff, (idx + 1, idx), -1.0 / h)
    np.add.at(mass, (idx, idx), h / 3)
    np.add.at(mass, (idx + 1, idx + 1), h / 3)
    np.add.at(mass, (idx, idx + 1), h / 6)
    np.add.at(mass, (idx + 1, idx), h / 6)
    return stiff, mass


def assemble_temporal(mesh: TemporalMesh, kind: TemporalMatrixKind) -> TemporalMatrix:
    """Exact temporal Galerkin matrix ``M[l, k] = (trial_k, test_l)``."""
    kind = TemporalMatrixKind(kind)
    rows, cols = temporal_dof_ranges(mesh, kind)
    N = mesh.num_elements
    h = mesh.sizes
    if kind is TemporalMatrixKind.M0:
        entries = np.diag(h)
    elif kind is TemporalMatrixKind.M10:
        # (phi0_k, phi1_l) = h_k / 2 for l in {k-1, k}
        full = np.zeros((N + 1, N))
        k = np.arange(N)
        full[k, k] = h / 2
        full[k + 1, k] = h / 2
        entries = full[:N, :]
    else:
        stiff, mass = _full_hat_matrices(mesh)
        full = stiff if kind is TemporalMatrixKind.A1 else mass
        entries = full[rows.first : rows.last + 1, cols.first : cols.last + 1]
    return TemporalMatrix(kind, rows, cols, np.array(entries))


def hat_values(mesh: TemporalMesh, t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Locate ``t`` in the mesh.

    Returns element index ``e`` (0-based, element ``(t_e, t_{e+1})``) and the
    two local hat values, left and right.
    """
    t = np.asarray(t, dtype=float)
    e = np.clip(np.searchsorted(mesh.nodes, t, side="right") - 1, 0, mesh.num_elements - 1)
    s = (t - mesh.nodes[e]) / mesh.sizes[e]
    return e, 1.0 - s, s
