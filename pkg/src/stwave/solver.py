"""Space-time operators ``T1 (x) M_x + T2 (x) K_x`` and their solvers.

Coefficients are stored as an ``(N_t, N_x)`` array ``X`` whose row ``l`` is
the spatial coefficient vector of the ``l``-th trial hat, so ``X.ravel()``
is the time-major vector.  With this layout ``kron(T, S) @ X.ravel()`` equals
``(T @ X @ S.T).ravel()``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .hilbert import HilbertKind, SeriesTruncation, assemble_hilbert
from .projection import Method
from .spatial import MaterialData, SpatialFamily, TriMesh, assemble_spatial, boundary_constraint
from .temporal import TemporalMatrixKind, TemporalMesh, assemble_temporal

log = logging.getLogger(__name__)

DIRECT_SIZE_LIMIT = 300_000


class SolverError(RuntimeError):
    pass


class FactorizationError(SolverError):
    def __init__(self, message: str, diagnostics: dict):
        super().__init__(f"{message}: {diagnostics}")
        self.diagnostics = diagnostics


class IterativeSolveError(SolverError):
    def __init__(self, message: str, history):
        super().__init__(f"{message} (last residual {history[-1] if history else float('nan'):.3e})")
        self.history = list(history)


class ResidualError(SolverError):
    """Solution computed but the residual contract is not met; the solution is attached."""

    def __init__(self, residual: float, tol: float, solution):
        super().__init__(f"relative residual {residual:.3e} exceeds {tol:.1e}")
        self.residual = residual
        self.solution = solution


class ContractError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SpaceTimeOperator:
    method: Method
    T1: np.ndarray  # temporal factor paired with the spatial mass
    T2: np.ndarray  # temporal factor paired with curl-curl
    Mx: sp.csr_matrix
    Kx: sp.csr_matrix
    temporal_accuracy: float | None = None
    interior: np.ndarray | None = None  # DOF index of each spatial column
    family: SpatialFamily = SpatialFamily.whitney
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        n = self.T1.shape[0] * self.Mx.shape[0]
        return n, n

    @property
    def nt(self) -> int:
        return self.T1.shape[0]

    @property
    def nx(self) -> int:
        return self.Mx.shape[0]

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Factored product on the (N_t, N_x) layout."""
        X = np.asarray(X, float).reshape(self.nt, self.nx)
        return self.T1 @ (self.Mx @ X.T).T + self.T2 @ (self.Kx @ X.T).T

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.apply(x).ravel()

    def assembled_nnz(self) -> int:
        return int(np.count_nonzero(self.T1) * self.Mx.nnz + np.count_nonzero(self.T2) * self.Kx.nnz)

    def assembled(self) -> sp.csc_matrix:
        if "assembled" not in self._cache:
            A = sp.kron(sp.csr_matrix(self.T1), self.Mx) + sp.kron(sp.csr_matrix(self.T2), self.Kx)
            self._cache["assembled"] = A.tocsc()
        return self._cache["assembled"]

    def linear_operator(self) -> spla.LinearOperator:
        return spla.LinearOperator(self.shape, matvec=self.matvec, dtype=float)


@dataclass(frozen=True, eq=False)
class SpaceTimeCoefficients:
    """Coefficients on the trial hats ``1..N`` times interior edge DOFs."""

    values: np.ndarray  # (N_t, N_x)
    interior: np.ndarray | None = None  # DOF index of each spatial column
    residual: float | None = None
    solver: str | None = None
    seconds: float | None = None
    family: SpatialFamily = SpatialFamily.whitney

    @property
    def vector(self) -> np.ndarray:
        return self.values.ravel()

    def full_dofs(self, num_dofs: int) -> np.ndarray:
        """Values with zero columns for boundary DOFs, shape (N_t, num_dofs)."""
        if self.interior is None:
            if self.values.shape[1] != num_dofs:
                raise ValueError("coefficient width does not match the DOF count")
            return self.values
        out = np.zeros((self.values.shape[0], num_dofs))
        out[:, self.interior] = self.values
        return out


def spatial_factors(xmesh: TriMesh, mat: MaterialData | None = None, family=SpatialFamily.whitney):
    """Constrained mass and curl-curl matrices plus the interior DOF set."""
    mat = mat or MaterialData.vacuum(xmesh)
    idx = boundary_constraint(xmesh, family)
    M = assemble_spatial(xmesh, mat, "mass_N", family).restrict(idx, idx).entries
    K = assemble_spatial(xmesh, mat, "curl_curl_N", family).restrict(idx, idx).entries
    return M.tocsr(), K.tocsr(), idx


def assemble_operator(
    method,
    tmesh: TemporalMesh,
    xmesh: TriMesh,
    mat: MaterialData | None = None,
    trunc: SeriesTruncation | None = None,
    family=SpatialFamily.whitney,
) -> SpaceTimeOperator:
    method = Method(method)
    family = SpatialFamily(family)
    M, K, idx = spatial_factors(xmesh, mat, family)
    acc = None
    if method is Method.GP:
        T1 = -np.array(assemble_temporal(tmesh, TemporalMatrixKind.A1).entries)
        T2 = np.array(assemble_temporal(tmesh, TemporalMatrixKind.M1).entries)
    else:
        a = assemble_hilbert(tmesh, HilbertKind.A_HT, trunc)
        m = assemble_hilbert(tmesh, HilbertKind.M_HT, trunc)
        T1, T2 = np.array(a.entries), np.array(m.entries)
        accs = [x for x in (a.accuracy, m.accuracy) if x is not None]
        acc = max(accs) if accs else None
    return SpaceTimeOperator(method, T1, T2, M, K, acc, idx, family)


# -- solvers ---------------------------------------------------------------------------


def _relres(op: SpaceTimeOperator, X: np.ndarray, B: np.ndarray) -> float:
    nb = np.linalg.norm(B)
    r = np.linalg.norm(op.apply(X) - B)
    return float(r / nb) if nb > 0 else float(r)


def _direct(op: SpaceTimeOperator, B: np.ndarray) -> np.ndarray:
    A = op.assembled()
    try:
        lu = spla.splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise FactorizationError("sparse LU failed", {"error": str(exc), "n": A.shape[0], "nnz": A.nnz}) from exc
    diag = np.abs(lu.U.diagonal())
    if diag.min() == 0.0 or diag.min() < 1e-14 * diag.max():
        raise FactorizationError(
            "sparse LU is numerically singular",
            {"min_pivot": float(diag.min()), "max_pivot": float(diag.max()), "n": A.shape[0]},
        )
    return lu.solve(B.ravel()).reshape(B.shape)


def _banded_steps(op: SpaceTimeOperator):
    """Nonzero lower bandwidth of the temporal factors; GP must be lower triangular."""
    for T in (op.T1, op.T2):
        if np.any(np.triu(T, 1)) or np.any(np.tril(T, -3)):
            raise ContractError("temporal factors are not lower triangular with bandwidth 2")


def march_two_step(op: SpaceTimeOperator, load: np.ndarray) -> SpaceTimeCoefficients:
    """Forward substitution over time blocks.

    Row ``l`` (test hat ``l``) couples the trial hats ``l-1, l, l+1``; after
    the column shift this is block lower triangular, and each step solves
    ``T1[l, l] M + T2[l, l] K`` for the newest time level.
    """
    if op.method is not Method.GP:
        raise ContractError("the two-step march applies to the Petrov-Galerkin operator only")
    _banded_steps(op)
    t0 = time.perf_counter()
    B = np.asarray(load, float).T
    X = np.zeros_like(B)
    factors: dict[tuple[float, float], spla.SuperLU] = {}
    for l in range(op.nt):
        key = (op.T1[l, l], op.T2[l, l])
        # node roundoff makes "equal" steps differ in the last bits; reuse those
        near = [k for k in factors if np.allclose(k, key, rtol=1e-12, atol=0)]
        if near:
            key = near[0]
        else:
            factors[key] = spla.splu((key[0] * op.Mx + key[1] * op.Kx).tocsc())
        rhs = B[l].copy()
        for c in range(max(0, l - 2), l):
            if op.T1[l, c] or op.T2[l, c]:
                rhs -= op.T1[l, c] * (op.Mx @ X[c]) + op.T2[l, c] * (op.Kx @ X[c])
        X[l] = factors[key].solve(rhs)
    res = _relres(op, X, B)
    return SpaceTimeCoefficients(X, op.interior, res, "march", time.perf_counter() - t0, op.family)


def _fast(op: SpaceTimeOperator, B: np.ndarray) -> np.ndarray:
    """Diagonalise the spatial pencil ``K V = M V diag(w)``, then one dense
    temporal solve ``(T1 + w_i T2) y_i = g_i`` per spatial mode."""
    w, V = sla.eigh(op.Kx.toarray(), op.Mx.toarray())
    G = B @ V  # V^T M V = I, so X = Y V^T
    Y = np.empty_like(G)
    for i in range(len(w)):
        Y[:, i] = sla.solve(op.T1 + w[i] * op.T2, G[:, i])
    return Y @ V.T


class _TimeBlockPreconditioner:
    """Block Gauss-Seidel in time: lower triangle of the temporal factors,
    diagonal blocks factorised exactly.  Exact for the GP operator."""

    def __init__(self, op: SpaceTimeOperator):
        self.op = op
        self.lu = [spla.splu((op.T1[l, l] * op.Mx + op.T2[l, l] * op.Kx).tocsc()) for l in range(op.nt)]

    def __call__(self, r: np.ndarray) -> np.ndarray:
        op = self.op
        R = r.reshape(op.nt, op.nx)
        Z = np.zeros_like(R)
        MZ = np.zeros_like(R)
        KZ = np.zeros_like(R)
        for l in range(op.nt):
            rhs = R[l] - op.T1[l, :l] @ MZ[:l] - op.T2[l, :l] @ KZ[:l]
            Z[l] = self.lu[l].solve(rhs)
            MZ[l] = op.Mx @ Z[l]
            KZ[l] = op.Kx @ Z[l]
        return Z.ravel()


class _TimeDiagonalPreconditioner:
    """Diagonalise the temporal pencil ``T1 W = T2 W diag(w)``, then one complex
    sparse solve ``(w_l M + K) z_l = g_l`` per temporal mode.

    Exact up to the conditioning of ``W``.  The sweep above is unusable for
    the dense GB factors (its error amplification grows like an explicit
    scheme), while this one costs the same number of factorisations.
    """

    def __init__(self, op: SpaceTimeOperator):
        self.op = op
        w, W = sla.eig(op.T1, op.T2)
        self.W = W
        # rows of T2 W pulled through: T1 = T2 W diag(w) W^-1, so
        # op = (T2 W) (diag(w) x M + I x K) W^-1
        self.lu_left = sla.lu_factor(op.T2 @ W)
        Mx, Kx = op.Mx.astype(complex), op.Kx.astype(complex)
        self.lu = [spla.splu((wl * Mx + Kx).tocsc()) for wl in w]

    def __call__(self, r: np.ndarray) -> np.ndarray:
        op = self.op
        G = sla.lu_solve(self.lu_left, r.reshape(op.nt, op.nx).astype(complex))
        Y = np.stack([self.lu[l].solve(G[l]) for l in range(op.nt)])
        return (self.W @ Y).real.ravel()


def _iterative(op: SpaceTimeOperator, B: np.ndarray, tol: float, maxiter: int, restart: int) -> np.ndarray:
    triangular = not (np.any(np.triu(op.T1, 1)) or np.any(np.triu(op.T2, 1)))
    pre = _TimeBlockPreconditioner(op) if triangular else _TimeDiagonalPreconditioner(op)
    P = spla.LinearOperator(op.shape, matvec=pre, dtype=float)
    history: list[float] = []
    b = B.ravel()
    bn = np.linalg.norm(b)
    x, info = spla.gmres(
        op.linear_operator(),
        b,
        M=P,
        rtol=0.1 * tol,
        atol=0.0,
        restart=restart,
        maxiter=maxiter,
        callback=lambda rk: history.append(float(rk)),
        callback_type="pr_norm",
    )
    true = np.linalg.norm(op.matvec(x) - b) / bn if bn > 0 else 0.0
    history.append(float(true))
    if info != 0 or true > tol:
        raise IterativeSolveError(f"GMRES did not reach {tol:.1e} (info={info})", history)
    return x.reshape(B.shape)


def choose_solver(op: SpaceTimeOperator, size_limit: int = DIRECT_SIZE_LIMIT) -> str:
    n = op.shape[0]
    if op.method is Method.GP:
        return "direct" if n <= min(size_limit, 20_000) else "march"
    # dense temporal coupling: LU fill grows like N_t^2, so only small cases go direct
    if n <= min(size_limit, 6000):
        return "direct"
    return "fast" if op.nx <= 4000 else "iterative"


def solve(
    op: SpaceTimeOperator,
    load: np.ndarray,
    solver: str = "auto",
    tol: float = 1e-10,
    strict: bool = True,
    maxiter: int = 400,
    restart: int = 60,
    size_limit: int = DIRECT_SIZE_LIMIT,
) -> SpaceTimeCoefficients:
    """Solve ``op x = vec(load^T)``; ``load`` has shape (N_x, N_t).

    ``solver`` is one of ``auto``, ``direct``, ``iterative``, ``fast`` (spatial
    eigen-decomposition) or ``march`` (GP only).  With ``strict`` a residual
    above ``tol`` raises :class:`ResidualError`; otherwise it is recorded.
    """
    load = np.asarray(load, float)
    if load.shape != (op.nx, op.nt):
        raise ValueError(f"load has shape {load.shape}, expected {(op.nx, op.nt)}")
    if solver == "auto":
        solver = choose_solver(op, size_limit)
    t0 = time.perf_counter()
    B = load.T
    if not np.any(B):
        X = np.zeros_like(B)
    elif solver == "direct":
        X = _direct(op, B)
    elif solver == "march":
        X = march_two_step(op, load).values
    elif solver == "fast":
        X = _fast(op, B)
    elif solver == "iterative":
        X = _iterative(op, B, tol, maxiter, restart)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    res = _relres(op, X, B)
    out = SpaceTimeCoefficients(X, op.interior, res, solver, time.perf_counter() - t0, op.family)
    log.debug("%s solve: n=%d residual=%.2e (%.2fs)", solver, op.shape[0], res, out.seconds)
    if not res <= tol:
        if strict:
            raise ResidualError(res, tol, out)
        log.warning("%s solve residual %.2e above %.1e", solver, res, tol)
    return out


# -- CFL -------------------------------------------------------------------------------

CFL_CONSTANT = 18.0
INSTABILITY_FACTOR = 10.0


@dataclass(frozen=True)
class CFLPrediction:
    ratio: float
    cfl_bound: float
    predicted_stable: bool


@dataclass(frozen=True)
class StabilityVerdict:
    classification: str  # "stable" | "unstable"
    seminorm_error: float
    reference_interpolation_error: float
    ratio: float
    cfl_bound: float


def cfl_check(tmesh: TemporalMesh, xmesh: TriMesh, c_I: float = CFL_CONSTANT) -> CFLPrediction:
    """Predicted stability ``h_t < sqrt(12 / c_I) h_x``; equality counts as unstable."""
    if not tmesh.uniform:
        raise ContractError("the CFL condition is stated for uniform temporal meshes")
    if not c_I > 0:
        raise ValueError("c_I must be positive")
    bound = float(np.sqrt(12.0 / c_I))
    ratio = tmesh.h / xmesh.h_max
    return CFLPrediction(ratio, bound, bool(ratio < bound))


def classify(
    seminorm_error: float,
    interpolation_error: float,
    prediction: CFLPrediction,
    threshold: float = INSTABILITY_FACTOR,
) -> StabilityVerdict:
    bad = not np.isfinite(seminorm_error) or seminorm_error > threshold * interpolation_error
    return StabilityVerdict(
        "unstable" if bad else "stable",
        float(seminorm_error),
        float(interpolation_error),
        prediction.ratio,
        prediction.cfl_bound,
    )
