"""The modified Hilbert transformation ``H_T`` on piecewise polynomial functions of time.

``H_T`` maps ``sin(lam_k t / T)`` to ``cos(lam_k t / T)`` with
``lam_k = pi/2 + k*pi``.  For piecewise linear and piecewise constant
functions the sine and cosine moments are finite sums of terms
``trig(lam * u) / lam**p`` with ``u`` a mesh node scaled to ``[0, 1]`` and
``p in {1, 2}``.  Products of two moments, summed over all frequencies, are
therefore combinations of the series families

    C_p(y) = sum_k cos(lam_k y) / lam_k**p,    S_p(y) = sum_k sin(lam_k y) / lam_k**p,

which have closed forms: polynomials for (C_2, S_3, C_4), Clausen functions
for (S_2, C_3, S_4), a logarithm for C_1 and a square wave for S_1.

Two assembly routes are provided:

* accelerated (default): the whole series, tail included, is summed in closed
  form, so entries are exact up to roundoff;
* plain truncation: the first ``M`` terms of the sum of moment products.

:func:`pv_transform_eval` evaluates the principal-value integral
representation by quadrature and serves as an independent oracle.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import zeta

from .temporal import BasisRange, TemporalMatrix, TemporalMesh

PI = math.pi
ZETA3 = float(zeta(3.0))
_EPS = np.finfo(float).eps

_K = np.arange(1, 41)
_ZK = zeta(2.0 * _K)
_CL2_COEF = _ZK / (_K * (2 * _K + 1))
_CL3_COEF = _ZK / (_K * (2 * _K + 1) * (2 * _K + 2))
_CL4_COEF = _ZK / (_K * (2 * _K + 1) * (2 * _K + 2) * (2 * _K + 3))
_TWO_PI_POW = (2 * PI) ** (2.0 * _K)


class HilbertKind(enum.Enum):
    A_HT = "A_HT"
    M_HT = "M_HT"
    M_HT_10 = "M_HT_10"
    M_HT_hat = "M_HT_hat"


class HilbertAccuracyError(RuntimeError):
    """Raised when the requested series tolerance cannot be certified."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved bound {achieved:.3e})")
        self.achieved = achieved


@dataclass(frozen=True)
class SeriesTruncation:
    """How the frequency series is summed.

    ``mode="tolerance"`` certifies entries to relative accuracy ``tol``;
    ``mode="fixed"`` sums exactly ``terms`` frequencies (no acceleration).
    """

    mode: str = "tolerance"
    tol: float = 1e-10
    terms: int = 4096
    acceleration: bool = True
    max_terms: int = 200_000

    def __post_init__(self):
        if self.mode not in ("tolerance", "fixed"):
            raise ValueError(f"unknown truncation mode {self.mode!r}")
        if not (0 < self.tol <= 1e-6):
            raise ValueError(f"tolerance must lie in (0, 1e-6], got {self.tol}")
        if self.terms < 16:
            raise ValueError(f"at least 16 terms are required, got {self.terms}")

    @classmethod
    def fixed_terms(cls, M: int) -> "SeriesTruncation":
        return cls(mode="fixed", terms=M, acceleration=False)


def ht_frequencies(count: int) -> np.ndarray:
    if count < 1:
        raise ValueError("count must be positive")
    return PI / 2 + PI * np.arange(count)


# -- Clausen functions on [0, pi] -------------------------------------------------


def _xlog(x: np.ndarray, power: int) -> np.ndarray:
    safe = np.where(x > 0, x, 1.0)
    return np.where(x > 0, x**power * np.log(safe), 0.0)


def _powsum(theta: np.ndarray, coef: np.ndarray, lead: int) -> np.ndarray:
    t2 = theta[..., None] ** (2 * _K) / _TWO_PI_POW
    return theta**lead * (t2 @ coef)


def clausen2(theta) -> np.ndarray:
    """``sum sin(k theta) / k**2`` for ``theta`` in ``[0, pi]``."""
    th = np.asarray(theta, dtype=float)
    return th - _xlog(th, 1) + _powsum(th, _CL2_COEF, 1)


def clausen3(theta) -> np.ndarray:
    """``sum cos(k theta) / k**3`` for ``theta`` in ``[0, pi]``."""
    th = np.asarray(theta, dtype=float)
    return ZETA3 - 0.75 * th**2 + 0.5 * _xlog(th, 2) - _powsum(th, _CL3_COEF, 2)


def clausen4(theta) -> np.ndarray:
    """``sum sin(k theta) / k**4`` for ``theta`` in ``[0, pi]``."""
    th = np.asarray(theta, dtype=float)
    return ZETA3 * th - 11.0 / 36.0 * th**3 + _xlog(th, 3) / 6.0 - _powsum(th, _CL4_COEF, 3)


# -- series families ----------------------------------------------------------------


def series_family(p: int, trig: str, y) -> np.ndarray:
    """Closed form of ``sum_k trig(lam_k y) / lam_k**p`` with ``trig`` in {"cos", "sin"}.

    Valid for every real ``y``; ``C_1`` is infinite where ``y`` is an even
    integer and ``S_1`` takes the Fourier midpoint value there.
    """
    y = np.asarray(y, dtype=float)
    if trig == "sin":
        sign = np.sign(y)
    elif trig == "cos":
        sign = np.ones_like(y)
    else:
        raise ValueError(f"trig must be 'cos' or 'sin', got {trig!r}")
    y = np.abs(y)
    # anti-periodic with period 2
    q = np.floor(y / 2.0)
    y = y - 2.0 * q
    sign = sign * np.where(np.mod(q, 2) == 1, -1.0, 1.0)
    th = PI * y / 2.0
    key = (p, trig)
    if key == (1, "sin"):
        val = np.where((y > 0) & (y < 2), 0.5, 0.0)
    elif key == (1, "cos"):
        with np.errstate(divide="ignore"):
            val = -np.log(np.abs(np.tan(th / 2.0))) / PI
        val = np.where(y == 0, np.inf, np.where(y == 2, -np.inf, val))
    elif key == (2, "cos"):
        val = 0.5 - y / 2.0
    elif key == (2, "sin"):
        val = 2.0 / PI**2 * (clausen2(th) + clausen2(PI - th))
    elif key == (3, "cos"):
        val = 4.0 / PI**3 * (clausen3(th) - clausen3(PI - th))
    elif key == (3, "sin"):
        val = y / 2.0 - y**2 / 4.0
    elif key == (4, "cos"):
        val = 1.0 / 6.0 - y**2 / 4.0 + y**3 / 12.0
    elif key == (4, "sin"):
        val = 8.0 / PI**4 * (clausen4(th) + clausen4(PI - th))
    else:
        raise ValueError(f"no closed form for p={p}, trig={trig}")
    return sign * val


# -- moment atoms -----------------------------------------------------------------
#
# A function g is described by the coefficients of its sine moments
#   (g, sin(lam ./T)) = sum_j  Sc1[j] cos(lam u_j)/lam + Ss2[j] sin(lam u_j)/lam^2
# and cosine moments
#   (g, cos(lam ./T)) = sum_j  Cs1[j] sin(lam u_j)/lam + Cc2[j] cos(lam u_j)/lam^2
# with u_j = t_j / T the scaled mesh nodes.  Each family is a (nbasis, nnodes) array.


@dataclass
class _Atoms:
    sine: dict  # (trig, p) -> array (nbasis, nnodes)
    cosine: dict


def _kinks(mesh: TemporalMesh, slopes: np.ndarray) -> np.ndarray:
    """Slope increments ``c_{j+1} - c_j`` at every node, with zero slope outside."""
    nb = slopes.shape[0]
    padded = np.zeros((nb, slopes.shape[1] + 2))
    padded[:, 1:-1] = slopes
    return padded[:, 1:] - padded[:, :-1]


def _linear_atoms(mesh: TemporalMesh, values: np.ndarray) -> _Atoms:
    """Atoms of continuous piecewise linear functions given by nodal values (rows)."""
    T = mesh.terminal_time
    values = np.atleast_2d(values)
    beta = _kinks(mesh, np.diff(values, axis=1) / mesh.sizes)
    nb, nn = values.shape
    start = np.zeros((nb, nn))
    start[:, 0] = T * values[:, 0]
    end = np.zeros((nb, nn))
    end[:, -1] = T * values[:, -1]
    return _Atoms(
        sine={("cos", 1): start, ("sin", 2): -T**2 * beta},
        cosine={("sin", 1): end, ("cos", 2): -T**2 * beta},
    )


def _constant_atoms(mesh: TemporalMesh, values: np.ndarray) -> _Atoms:
    """Atoms of piecewise constant functions given by element values (rows)."""
    T = mesh.terminal_time
    beta = _kinks(mesh, np.atleast_2d(values))
    return _Atoms(sine={("cos", 1): T * beta}, cosine={("sin", 1): -T * beta})


def _pair_kernel(trig_s: str, trig_c: str, p: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``sum_k trig_s(lam a) trig_c(lam b) / lam**p`` for all pairs (a_i, b_j)."""
    A = a[:, None]
    B = b[None, :]
    if trig_s == "sin" and trig_c == "sin":
        return 0.5 * (series_family(p, "cos", A - B) - series_family(p, "cos", A + B))
    if trig_s == "cos" and trig_c == "cos":
        return 0.5 * (series_family(p, "cos", A - B) + series_family(p, "cos", A + B))
    if trig_s == "sin" and trig_c == "cos":
        return 0.5 * (series_family(p, "sin", A + B) + series_family(p, "sin", A - B))
    return 0.5 * (series_family(p, "sin", A + B) - series_family(p, "sin", A - B))


def _bilinear_closed(mesh: TemporalMesh, g: _Atoms, f: _Atoms) -> tuple[np.ndarray, float]:
    """``B[a, b] = (f_b, H_T g_a)`` summed in closed form, plus a roundoff bound."""
    T = mesh.terminal_time
    u = mesh.nodes / T
    out = 0.0
    scale = 0.0
    for (ts, ps), Sg in g.sine.items():
        for (tc, pc), Cf in f.cosine.items():
            if not (np.any(Sg) and np.any(Cf)):
                continue
            K = _pair_kernel(ts, tc, ps + pc, u, u)
            out = out + Sg @ K @ Cf.T
            scale = scale + np.abs(Sg) @ np.abs(K) @ np.abs(Cf).T
    out = (2.0 / T) * np.asarray(out)
    bound = (2.0 / T) * 64 * _EPS * np.asarray(scale)
    return out, float(np.max(bound)) if np.size(bound) else 0.0


def _moments(atoms: dict, u: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Evaluate moments for frequencies ``lam``: array (nbasis, len(lam))."""
    arg = np.outer(u, lam)
    out = 0.0
    for (trig, p), coef in atoms.items():
        if not np.any(coef):
            continue
        fn = np.cos if trig == "cos" else np.sin
        out = out + coef @ (fn(arg) / lam**p)
    return out


def _bilinear_series(mesh: TemporalMesh, g: _Atoms, f: _Atoms, M: int, chunk: int = 4096) -> np.ndarray:
    """Partial sum over the first ``M`` frequencies."""
    T = mesh.terminal_time
    u = mesh.nodes / T
    out = None
    for start in range(0, M, chunk):
        lam = ht_frequencies(min(M, start + chunk))[start:]
        part = _moments(g.sine, u, lam) @ _moments(f.cosine, u, lam).T
        out = part if out is None else out + part
    return (2.0 / T) * out


def _bilinear(mesh: TemporalMesh, g: _Atoms, f: _Atoms, trunc: SeriesTruncation, what: str):
    if trunc.mode == "fixed":
        return _bilinear_series(mesh, g, f, trunc.terms), float("nan")
    if trunc.acceleration:
        return _bilinear_closed(mesh, g, f)
    # plain truncation, refined until successive partial sums agree
    M = max(16, min(max(trunc.terms, 1024), trunc.max_terms // 2))
    prev = _bilinear_series(mesh, g, f, M)
    change = float("inf")
    while 2 * M <= trunc.max_terms:
        M *= 2
        cur = _bilinear_series(mesh, g, f, M)
        change = float(np.max(np.abs(cur - prev)) / (np.max(np.abs(cur)) or 1.0))
        if change <= trunc.tol:
            return cur, change
        prev = cur
    raise HilbertAccuracyError(
        f"{what}: tolerance {trunc.tol:g} not reached with {trunc.max_terms} terms", achieved=change
    )


def _hat_atoms(mesh: TemporalMesh, first: int, last: int) -> _Atoms:
    N = mesh.num_elements
    vals = np.eye(N + 1)[first : last + 1]
    return _linear_atoms(mesh, vals)


def _hat_derivative_atoms(mesh: TemporalMesh, first: int, last: int) -> _Atoms:
    N = mesh.num_elements
    vals = np.eye(N + 1)[first : last + 1]
    return _constant_atoms(mesh, np.diff(vals, axis=1) / mesh.sizes)


def _const_atoms(mesh: TemporalMesh) -> _Atoms:
    return _constant_atoms(mesh, np.eye(mesh.num_elements))


def assemble_hilbert(
    mesh: TemporalMesh, kind: HilbertKind, trunc: SeriesTruncation | None = None
) -> TemporalMatrix:
    """Temporal matrix involving ``H_T``; see :class:`HilbertKind` for index ranges."""
    trunc = trunc or SeriesTruncation()
    kind = HilbertKind(kind)
    N = mesh.num_elements
    hats = BasisRange("hat", 1, N)
    if kind is HilbertKind.A_HT:
        if trunc.mode == "tolerance" and not trunc.acceleration:
            raise ValueError("A_HT in tolerance mode requires acceleration")
        # A[l, k] = (H_T d phi_k, d phi_l): transformed side is the trial function
        g = _hat_derivative_atoms(mesh, 1, N)
        f = _hat_derivative_atoms(mesh, 1, N)
        B, acc = _bilinear(mesh, g, f, trunc, kind.value)
        entries, rows, cols = B.T, hats, hats
    else:
        g = _hat_atoms(mesh, 1, N)
        if kind is HilbertKind.M_HT:
            f, cols = _hat_atoms(mesh, 1, N), hats
        elif kind is HilbertKind.M_HT_hat:
            f, cols = _hat_atoms(mesh, 0, N), BasisRange("hat", 0, N)
        else:
            f, cols = _const_atoms(mesh), BasisRange("const", 1, N)
        # M[l, k] = (f_k, H_T phi_l)
        entries, acc = _bilinear(mesh, g, f, trunc, kind.value)
        rows = hats
    return TemporalMatrix(kind, rows, cols, np.array(entries), accuracy=acc)


# -- pointwise evaluation -------------------------------------------------------------


def _pointwise(mesh: TemporalMesh, atoms: dict, t, target: str, trunc: SeriesTruncation) -> np.ndarray:
    """``(2/T) sum_k moment_k * target(lam_k t/T)`` for a single function's atoms."""
    T = mesh.terminal_time
    u = mesh.nodes / T
    ut = np.atleast_1d(np.asarray(t, dtype=float)) / T
    if trunc.mode == "tolerance" and trunc.acceleration:
        out = np.zeros_like(ut)
        for (trig, p), coef in atoms.items():
            c = coef[0]
            if not np.any(c):
                continue
            if target == "cos":
                K = _pair_kernel(trig, "cos", p, u, ut)
            else:
                K = _pair_kernel(trig, "sin", p, u, ut)
            out = out + c @ K
        return (2.0 / T) * out
    M = trunc.terms if trunc.mode == "fixed" else trunc.max_terms
    lam = ht_frequencies(M)
    mom = _moments(atoms, u, lam)[0]
    fn = np.cos if target == "cos" else np.sin
    out = np.array([np.sum(mom * fn(lam * x)) for x in ut])
    return (2.0 / T) * out


def ht_eval_piecewise_linear(
    mesh: TemporalMesh, nodal_values, t, trunc: SeriesTruncation | None = None
) -> np.ndarray | float:
    """``(H_T v)(t)`` for the continuous piecewise linear ``v`` with given nodal values."""
    trunc = trunc or SeriesTruncation()
    v = np.asarray(nodal_values, dtype=float)
    if v.shape != (mesh.num_elements + 1,):
        raise ValueError(f"expected {mesh.num_elements + 1} nodal values, got {v.shape}")
    if trunc.mode == "tolerance" and not trunc.acceleration and v[0] != 0.0:
        raise ValueError("certified truncated evaluation requires v(0) = 0")
    atoms = _linear_atoms(mesh, v[None, :])
    out = _pointwise(mesh, atoms.sine, t, "cos", trunc)
    return out if np.ndim(t) else float(out[0])


def ht_inverse_eval_piecewise_linear(
    mesh: TemporalMesh, nodal_values, t, trunc: SeriesTruncation | None = None
) -> np.ndarray | float:
    """``(H_T^{-1} w)(t)``: cosine coefficients of ``w`` resummed against sines."""
    trunc = trunc or SeriesTruncation()
    w = np.asarray(nodal_values, dtype=float)
    atoms = _linear_atoms(mesh, w[None, :])
    out = _pointwise(mesh, atoms.cosine, t, "sin", trunc)
    return out if np.ndim(t) else float(out[0])


def ht_eval_piecewise_constant(
    mesh: TemporalMesh, element_values, t, trunc: SeriesTruncation | None = None
) -> np.ndarray | float:
    """``(H_T v)(t)`` for a piecewise constant ``v``; log-singular at the nodes."""
    trunc = trunc or SeriesTruncation()
    atoms = _constant_atoms(mesh, np.asarray(element_values, dtype=float)[None, :])
    out = _pointwise(mesh, atoms.sine, t, "cos", trunc)
    return out if np.ndim(t) else float(out[0])


# -- principal value oracle -----------------------------------------------------------


def _gauss_panels(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    a = edges[:-1, None]
    b = edges[1:, None]
    pts = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
    wts = 0.5 * (b - a) * w[None, :]
    return pts.ravel(), wts.ravel()


def _graded(a: float, b: float, toward: str, levels: int, extra=()) -> np.ndarray:
    """Panel edges on ``[a, b]`` halving towards one or both ends, split at ``extra``."""
    L = b - a
    frac = 0.5 ** np.arange(1, levels + 1)
    pts = [a, b]
    if toward in ("a", "both"):
        pts += list(a + L * frac * (0.5 if toward == "both" else 1.0))
    if toward in ("b", "both"):
        pts += list(b - L * frac * (0.5 if toward == "both" else 1.0))
    if toward == "both":
        pts.append(a + L / 2)
    pts += [e for e in extra if a < e < b]
    return np.unique(np.asarray(pts, dtype=float))


def pv_transform_eval(
    f: Callable[[np.ndarray], np.ndarray],
    t: float,
    T: float,
    quad_order: int = 20,
    breakpoints=(),
    levels: int = 12,
) -> float:
    """Principal value ``v.p. int_0^T k(s, t) f(s) ds`` of the ``H_T`` kernel.

    The interval symmetric about ``s = t`` is folded so that the odd
    singular part cancels; the remainder is integrated with graded Gauss
    panels.  ``breakpoints`` are the kinks or jumps of ``f``.
    """
    if not (0.0 < t < T):
        raise ValueError(f"t must lie in (0, T), got {t}")
    c = PI / (2.0 * T)
    r = min(t, T - t)
    bp = np.asarray(breakpoints, dtype=float)

    dist = np.abs(bp - t)
    dist = dist[(dist > 0) & (dist < r)]
    # past a jump at distance d the folded integrand decays like 1/u
    ladder = [d * 2.0**k for d in dist for k in range(1, int(np.log2(r / d)) + 1)]
    u_edges = _graded(0.0, r, "a", levels, extra=np.concatenate([dist, ladder]))
    u, wu = _gauss_panels(u_edges, quad_order)
    fp = f(t + u)
    fm = f(t - u)
    folded = fp / np.sin(c * (2 * t + u)) + fm / np.sin(c * (2 * t - u)) + (fp - fm) / np.sin(c * u)
    total = np.dot(wu, folded)

    if t < T / 2:
        a, b, toward = 2 * t, T, "a"
    else:
        a, b, toward = 0.0, 2 * t - T, "b"
    if b > a:
        # the kernel varies on the scale r next to the folded interval
        depth = max(levels, int(np.ceil(np.log2((b - a) / r))) + levels)
        s_edges = _graded(a, b, toward, depth, extra=bp)
        s, ws = _gauss_panels(s_edges, quad_order)
        kern = 1.0 / np.sin(c * (s + t)) + 1.0 / np.sin(c * (s - t))
        total += np.dot(ws, kern * f(s))
    return float(total / (2.0 * T))


def piecewise_linear_function(mesh: TemporalMesh, nodal_values) -> Callable:
    v = np.asarray(nodal_values, dtype=float)
    return lambda s: np.interp(s, mesh.nodes, v)


def piecewise_constant_function(mesh: TemporalMesh, element_values) -> Callable:
    v = np.asarray(element_values, dtype=float)

    def fn(s):
        e = np.clip(np.searchsorted(mesh.nodes, s, side="right") - 1, 0, mesh.num_elements - 1)
        return v[e]

    return fn


def pv_bilinear(
    mesh: TemporalMesh,
    g: Callable,
    f: Callable,
    quad_order: int = 16,
    outer_levels: int = 30,
) -> float:
    """``(f, H_T g)`` by outer graded Gauss quadrature of the PV oracle.

    Both ``f`` and ``g`` are taken to be smooth between mesh nodes; the outer
    rule is graded towards every node because ``H_T g`` is log-singular at
    jumps of ``g``.
    """
    T = mesh.terminal_time
    total = 0.0
    for a, b in zip(mesh.nodes[:-1], mesh.nodes[1:]):
        edges = _graded(a, b, "both", outer_levels)
        s, w = _gauss_panels(edges, quad_order)
        hg = np.array([pv_transform_eval(g, si, T, quad_order, breakpoints=mesh.nodes) for si in s])
        total += np.dot(w, hg * f(s))
    return float(total)


# -- adjoint diagnostic --------------------------------------------------------------


def hilbert_adjoint_residual(
    mesh: TemporalMesh, trunc: SeriesTruncation | None = None, probes=None, quad_order: int = 16
) -> float:
    """Max of ``|(H_T v, w) - (v, H_T^{-1} w)|`` over probe pairs of hats.

    The left side integrates ``H_T v`` pointwise against ``w``, the right side
    integrates ``v`` against ``H_T^{-1} w``; both by graded Gauss quadrature,
    so the identity tests the pointwise resummation of both series.
    """
    trunc = trunc or SeriesTruncation()
    N = mesh.num_elements
    if probes is None:
        idx = sorted({1, N, max(1, N // 2)})
        probes = [(i, j) for i in idx for j in idx]
    eye = np.eye(N + 1)
    edges = np.unique(np.concatenate([_graded(a, b, "both", 20) for a, b in zip(mesh.nodes[:-1], mesh.nodes[1:])]))
    s, w = _gauss_panels(edges, quad_order)
    worst = 0.0
    for i, j in probes:
        v, wv = eye[i], eye[j]
        lhs = np.dot(w, ht_eval_piecewise_linear(mesh, v, s, trunc) * np.interp(s, mesh.nodes, wv))
        rhs = np.dot(w, np.interp(s, mesh.nodes, v) * ht_inverse_eval_piecewise_linear(mesh, wv, s, trunc))
        worst = max(worst, abs(lhs - rhs))
    return worst
