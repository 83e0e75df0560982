"""Experiment driver: convergence tables, CFL studies, interpolation tables, slices.

Configs are TOML files.  Keys (all optional except the grid lists)::

    method = "GP"                 # GP | GB
    projection = "RT1"            # P0 | RT1
    terminal_time = "sqrt2"       # sqrt2 | threehalves | a number
    space = "full_p1"             # full_p1 | whitney
    spatial_levels = [4, 8, 16]   # n, squares per side
    temporal_levels = [0, 1, 2]   # alpha, N_t = 5 * 2**alpha
    solver = "auto"               # auto | direct | march | fast | iterative
    out = "results"

    [truncation]                  # series summation for the H_T matrices
    mode = "tolerance"            # tolerance | fixed
    tol = 1e-10
    terms = 4096
    max_terms = 200000
    acceleration = true

    [quadrature]
    time_order = 4                # error norms
    tri_points = 7
    source_time_order = 3         # source projection

    [resources]
    nnz_budget = 5e8
    max_n = 256
    max_alpha = 8

    [slice]
    t = "T"                       # "T" or a number
    resolution = 200
    field = "solution"            # solution | interpolant
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import subprocess
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .analysis import error_norms, interpolate_spacetime, manufactured, slice_difference
from .hilbert import HilbertAccuracyError, SeriesTruncation
from .projection import Method, ProjectionKind, build_load, project
from .solver import (
    SolverError,
    ContractError,
    assemble_operator,
    cfl_check,
    classify,
    solve,
)
from .spatial import ConvergenceError, SpatialFamily, build_unit_square_mesh
from .temporal import build_uniform_temporal_mesh

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

log = logging.getLogger("stwave")

EXIT_OK, EXIT_CONFIG, EXIT_RESOURCE, EXIT_NUMERICAL = 0, 2, 3, 4

NAMED_TIMES = {"sqrt2": math.sqrt(2.0), "threehalves": 1.5}


class ConfigError(ValueError):
    pass


class ResourceError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    spatial_levels: tuple[int, ...]
    temporal_levels: tuple[int, ...]
    method: str = "GP"
    projection: str = "RT1"
    terminal_time: float = math.sqrt(2.0)
    space: str = "full_p1"
    solver: str = "auto"
    out: str = "results"
    truncation: SeriesTruncation = field(default_factory=SeriesTruncation)
    time_order: int = 4
    tri_points: int = 7
    source_time_order: int = 3
    nnz_budget: float = 5e8
    max_n: int = 256
    max_alpha: int = 8
    slice_t: float | None = None  # None means the terminal time
    slice_resolution: int = 200
    slice_field: str = "solution"

    def cells(self):
        return [(n, a) for n in self.spatial_levels for a in self.temporal_levels]


def _parse_time(v) -> float:
    if isinstance(v, str):
        if v in NAMED_TIMES:
            return NAMED_TIMES[v]
        try:
            v = float(v)
        except ValueError:
            raise ConfigError(f"terminal_time must be sqrt2, threehalves or a number, got {v!r}") from None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
        raise ConfigError(f"terminal_time must be positive, got {v!r}")
    return float(v)


def _int_list(raw, key) -> tuple[int, ...]:
    vals = raw.get(key)
    if not isinstance(vals, list) or not vals:
        raise ConfigError(f"{key} must be a non-empty list")
    if any(isinstance(v, bool) or not isinstance(v, int) for v in vals):
        raise ConfigError(f"{key} entries must be integers")
    return tuple(vals)


def config_from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    known = {
        "method", "projection", "terminal_time", "space", "spatial_levels", "temporal_levels",
        "solver", "out", "truncation", "quadrature", "resources", "slice", "study",
    }  # fmt: skip
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    ns, alphas = _int_list(raw, "spatial_levels"), _int_list(raw, "temporal_levels")
    res = raw.get("resources", {})
    max_n, max_alpha = int(res.get("max_n", 256)), int(res.get("max_alpha", 8))
    if any(n < 1 or n > max_n for n in ns):
        raise ConfigError(f"spatial levels must lie in [1, {max_n}]")
    if any(a < 0 or a > max_alpha for a in alphas):
        raise ConfigError(f"temporal levels must lie in [0, {max_alpha}]")
    try:
        method = Method(raw.get("method", "GP")).value
        proj = ProjectionKind(raw.get("projection", "RT1")).value
        space = SpatialFamily(raw.get("space", "full_p1")).value
        tr = raw.get("truncation", {})
        trunc = SeriesTruncation(
            mode=tr.get("mode", "tolerance"),
            tol=float(tr.get("tol", 1e-10)),
            terms=int(tr.get("terms", 4096)),
            acceleration=bool(tr.get("acceleration", True)),
            max_terms=int(tr.get("max_terms", 200_000)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if method == "GB" and trunc.mode == "tolerance" and not trunc.acceleration:
        # the piecewise-constant series converges too slowly to certify by plain summation
        raise ConfigError("GB in tolerance mode needs truncation.acceleration = true")
    solver = raw.get("solver", "auto")
    if solver not in ("auto", "direct", "march", "fast", "iterative"):
        raise ConfigError(f"unknown solver {solver!r}")
    q = raw.get("quadrature", {})
    sl = raw.get("slice", {})
    slice_t = sl.get("t", "T")
    if slice_t != "T" and (isinstance(slice_t, bool) or not isinstance(slice_t, (int, float))):
        raise ConfigError("slice.t must be \"T\" or a number")
    if sl.get("field", "solution") not in ("solution", "interpolant"):
        raise ConfigError("slice.field must be solution or interpolant")
    return ExperimentConfig(
        spatial_levels=ns,
        temporal_levels=alphas,
        method=method,
        projection=proj,
        terminal_time=_parse_time(raw.get("terminal_time", "sqrt2")),
        space=space,
        solver=solver,
        out=str(raw.get("out", "results")),
        truncation=trunc,
        time_order=int(q.get("time_order", 4)),
        tri_points=int(q.get("tri_points", 7)),
        source_time_order=int(q.get("source_time_order", 3)),
        nnz_budget=float(res.get("nnz_budget", 5e8)),
        max_n=max_n,
        max_alpha=max_alpha,
        slice_t=None if slice_t == "T" else float(slice_t),
        slice_resolution=int(sl.get("resolution", 200)),
        slice_field=sl.get("field", "solution"),
    )


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return config_from_dict(raw)


# -- resources -------------------------------------------------------------------------


def estimate_nnz(cfg: ExperimentConfig, n: int, alpha: int) -> int:
    """Nonzeros of the assembled space-time matrix for one cell."""
    Nt = 5 * 2**alpha
    mesh = build_unit_square_mesh(n)
    d = 2 if cfg.space == "full_p1" else 1
    # an edge touches at most two triangles, so it couples with 5 edges' DOFs
    spatial = (5 * d) * (d * mesh.num_edges)
    temporal = Nt * Nt if cfg.method == "GB" else 3 * Nt
    return int(temporal * spatial)


def check_resources(cfg: ExperimentConfig, iterative: bool) -> None:
    if iterative:
        return
    for n, a in cfg.cells():
        est = estimate_nnz(cfg, n, a)
        if cfg.method == "GB" and est > cfg.nnz_budget:
            raise ResourceError(
                f"cell n={n}, alpha={a}: assembled GB matrix needs about {est:.3g} nonzeros "
                f"(budget {cfg.nnz_budget:.3g}); rerun with --iterative"
            )


# -- cells -----------------------------------------------------------------------------


def _meshes(cfg: ExperimentConfig, n: int, alpha: int):
    return build_uniform_temporal_mesh(cfg.terminal_time, alpha), build_unit_square_mesh(n)


def solve_cell(cfg: ExperimentConfig, n: int, alpha: int, iterative: bool = False):
    prob = manufactured(cfg.terminal_time)
    tm, xm = _meshes(cfg, n, alpha)
    t0 = time.perf_counter()
    proj = project(prob.j, cfg.projection, tm, xm, time_order=cfg.source_time_order, family=cfg.space)
    op = assemble_operator(cfg.method, tm, xm, trunc=cfg.truncation, family=cfg.space)
    load = build_load(proj, cfg.method, tm, xm, trunc=cfg.truncation)
    solver = "iterative" if iterative else cfg.solver
    Ah = solve(op, load, solver=solver, strict=False)
    if not np.isfinite(Ah.residual):
        raise SolverError(f"non-finite residual on cell n={n}, alpha={alpha}")
    rep = error_norms(Ah, prob, tm, xm, cfg.time_order, cfg.tri_points)
    meta = {
        "n": n,
        "alpha": alpha,
        "h_x": xm.h_max,
        "h_t": tm.h,
        "unknowns": op.shape[0],
        "solver": Ah.solver,
        "residual": Ah.residual,
        "projection_residual": proj.residual,
        "truncation_accuracy": op.temporal_accuracy,
        "seconds": time.perf_counter() - t0,
    }
    return Ah, rep, meta


def interp_cell(cfg: ExperimentConfig, n: int, alpha: int):
    prob = manufactured(cfg.terminal_time)
    tm, xm = _meshes(cfg, n, alpha)
    t0 = time.perf_counter()
    I = interpolate_spacetime(prob, tm, xm, cfg.space)
    rep = error_norms(I, prob, tm, xm, cfg.time_order, cfg.tri_points)
    meta = {"n": n, "alpha": alpha, "h_x": xm.h_max, "h_t": tm.h, "seconds": time.perf_counter() - t0}
    return I, rep, meta


def _atomic_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
    os.replace(tmp, path)


def _run_cells(cfg: ExperimentConfig, fn, threads: int, cell_dir: Path | None):
    cells = cfg.cells()

    def one(c):
        out = fn(*c)
        if cell_dir is not None:
            rep, meta = out[1], out[2]
            _atomic_json(cell_dir / f"n{c[0]}_a{c[1]}.json", {**meta, **asdict(rep)})
        return out

    if threads <= 1:
        return [one(c) for c in cells]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, cells))  # order preserved


# -- output ----------------------------------------------------------------------------


def fmt3(x: float) -> str:
    return f"{x:.2e}"


def write_table(path: Path, cfg: ExperimentConfig, values: dict) -> None:
    """Rows h_x, columns h_t, cells at three significant digits."""
    h_t = [cfg.terminal_time / (5 * 2**a) for a in cfg.temporal_levels]
    lines = ["h_x\\h_t," + ",".join(f"{h:.4f}" for h in h_t)]
    for n in cfg.spatial_levels:
        hx = 1.0 / (n * math.sqrt(2.0))
        lines.append(f"{hx:.4f}," + ",".join(fmt3(values[n, a]) for a in cfg.temporal_levels))
    path.write_text("\n".join(lines) + "\n")


def git_describe() -> str:
    here = Path(__file__).resolve().parent
    try:
        r = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=here,
            capture_output=True,
            text=True,
            timeout=10,
        )
        return r.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _config_json(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d["spatial_levels"] = list(cfg.spatial_levels)
    d["temporal_levels"] = list(cfg.temporal_levels)
    return d


def _sidecar(study: str, cfg: ExperimentConfig, cells: list[dict]) -> dict:
    return {"study": study, "build": git_describe(), "config": _config_json(cfg), "cells": cells}


def _prefix(cfg: ExperimentConfig, study: str) -> str:
    T = {math.sqrt(2.0): "sqrt2", 1.5: "threehalves"}.get(cfg.terminal_time, f"{cfg.terminal_time:g}")
    if study == "interp":
        return f"interp_{cfg.space}_T{T}"
    return f"{study}_{cfg.method}_{cfg.projection}_{cfg.space}_T{T}"


def run_convergence(cfg: ExperimentConfig, out: Path, threads: int = 1, iterative: bool = False) -> dict:
    check_resources(cfg, iterative)
    out.mkdir(parents=True, exist_ok=True)
    pre = _prefix(cfg, "convergence")
    res = _run_cells(cfg, lambda n, a: solve_cell(cfg, n, a, iterative), threads, out / f"{pre}_cells")
    semi = {(m["n"], m["alpha"]): r.seminorm_error for _, r, m in res}
    l2 = {(m["n"], m["alpha"]): r.l2_error for _, r, m in res}
    write_table(out / f"{pre}_seminorm.csv", cfg, semi)
    write_table(out / f"{pre}_l2.csv", cfg, l2)
    side = _sidecar("convergence", cfg, [{**m, **asdict(r)} for _, r, m in res])
    _atomic_json(out / f"{pre}.json", side)
    return side


def run_interp(cfg: ExperimentConfig, out: Path, threads: int = 1) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    pre = _prefix(cfg, "interp")
    res = _run_cells(cfg, lambda n, a: interp_cell(cfg, n, a), threads, out / f"{pre}_cells")
    write_table(out / f"{pre}_seminorm.csv", cfg, {(m["n"], m["alpha"]): r.seminorm_error for _, r, m in res})
    write_table(out / f"{pre}_l2.csv", cfg, {(m["n"], m["alpha"]): r.l2_error for _, r, m in res})
    side = _sidecar("interp", cfg, [{**m, **asdict(r)} for _, r, m in res])
    _atomic_json(out / f"{pre}.json", side)
    return side


def run_cfl_study(cfg: ExperimentConfig, out: Path, threads: int = 1, iterative: bool = False) -> dict:
    if cfg.method != "GP":
        raise ConfigError("the CFL study applies to the Petrov-Galerkin method only")
    if not cfg.cells():
        raise ConfigError("empty grid")
    check_resources(cfg, iterative)
    out.mkdir(parents=True, exist_ok=True)
    pre = _prefix(cfg, "cfl")

    def cell(n, a):
        _, rep, meta = solve_cell(cfg, n, a, iterative)
        _, irep, _ = interp_cell(cfg, n, a)
        tm, xm = _meshes(cfg, n, a)
        pred = cfl_check(tm, xm)
        v = classify(rep.seminorm_error, irep.seminorm_error, pred)
        meta.update(
            ratio=pred.ratio,
            cfl_bound=pred.cfl_bound,
            predicted="stable" if pred.predicted_stable else "unstable",
            observed=v.classification,
            interpolation_seminorm=irep.seminorm_error,
        )
        return None, rep, meta

    res = _run_cells(cfg, cell, threads, out / f"{pre}_cells")
    lines = ["h_t,h_x,ratio,predicted,observed,seminorm_error"]
    for _, r, m in res:
        lines.append(
            f"{m['h_t']:.4f},{m['h_x']:.4f},{m['ratio']:.3f},{m['predicted']},{m['observed']},{fmt3(r.seminorm_error)}"
        )
    (out / f"{pre}.csv").write_text("\n".join(lines) + "\n")
    side = _sidecar("cfl-study", cfg, [{**m, **asdict(r)} for _, r, m in res])
    side["agreement"] = all(m["predicted"] == m["observed"] for _, _, m in res)
    _atomic_json(out / f"{pre}.json", side)
    return side


def run_slice(cfg: ExperimentConfig, out: Path, iterative: bool = False) -> dict:
    """Slice of the first configured cell."""
    n, a = cfg.spatial_levels[0], cfg.temporal_levels[0]
    one = replace(cfg, spatial_levels=(n,), temporal_levels=(a,))
    t = cfg.terminal_time if cfg.slice_t is None else cfg.slice_t
    if cfg.slice_field == "interpolant":
        Ah, rep, meta = interp_cell(one, n, a)
        pre = f"slice_interp_{cfg.space}_n{n}_a{a}"
    else:
        check_resources(one, iterative)
        Ah, rep, meta = solve_cell(one, n, a, iterative)
        pre = f"slice_{cfg.method}_{cfg.projection}_{cfg.space}_n{n}_a{a}"
    tm, xm = _meshes(cfg, n, a)
    try:
        s = slice_difference(Ah, manufactured(cfg.terminal_time), tm, xm, t, cfg.slice_resolution)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out.mkdir(parents=True, exist_ok=True)
    s.write_csv(out / f"{pre}_t{t:.4f}.csv")
    meta.update(t=t, max_magnitude=float(s.magnitude.max()), mean_magnitude=float(s.magnitude.mean()))
    side = _sidecar("slice", cfg, [{**meta, **asdict(rep)}])
    _atomic_json(out / f"{pre}_t{t:.4f}.json", side)
    return side


# -- entry point -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stwave", description="Space-time FEM wave-equation studies")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("convergence", "cfl-study", "interp", "slice"):
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="TOML experiment config")
        s.add_argument("--out", help="output directory (overrides the config)")
        s.add_argument("--threads", type=int, default=1, help="cells solved concurrently")
        s.add_argument("--iterative", action="store_true", help="Krylov path; lifts the nonzero budget")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        out = Path(args.out or cfg.out)
        if args.command == "convergence":
            side = run_convergence(cfg, out, args.threads, args.iterative)
        elif args.command == "interp":
            side = run_interp(cfg, out, args.threads)
        elif args.command == "cfl-study":
            side = run_cfl_study(cfg, out, args.threads, args.iterative)
        else:
            side = run_slice(cfg, out, args.iterative)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceError as exc:
        print(f"refusing to run: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (SolverError, ContractError, HilbertAccuracyError, ConvergenceError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for c in side["cells"]:
        msg = f"n={c['n']:<3d} alpha={c['alpha']}  seminorm={c['seminorm_error']:.3e}  l2={c['l2_error']:.3e}"
        if "observed" in c:
            msg += f"  ratio={c['ratio']:.3f} predicted={c['predicted']} observed={c['observed']}"
        print(msg)
    print(f"wrote {out}")
    return EXIT_OK
