"""Benchmark mode: run a matrix of (preset, resolution, scheme) cells.

Each cell runs the full design loop (optionally iteration-capped) and
reports iteration counts, time per design iteration and the measured
auxiliary memory, split into solver vectors, coarse-operator storage and the
coarsest factorization. For rows sharing a preset and resolution the
homogenized-versus-galerkin memory ratio is attached to the homogenized row.
"""

from __future__ import annotations

import csv
import traceback
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import ConfigError
from ..multigrid import build_hierarchy, max_feasible_levels
from ..operator import OperatorState
from ..optimize import OptConfig, run
from ..solver import SolverConfig
from .config import _parse_float, _parse_int  # shared scalar parsing
from .presets import instantiate, parse_resolution

__all__ = ["BenchCell", "BenchRow", "run_benchmark", "measure_memory"]

BENCH_HEADER = (
    "preset,resolution,scheme,status,design_iters,converged,mean_cg_iters,"
    "time_per_iter_s,final_compliance,vector_scalars,coarse_op_scalars,"
    "factor_scalars,aux_bytes,memory_ratio_vs_galerkin"
)


@dataclass
class BenchCell:
    preset: str
    resolution: tuple[int, int, int]
    scheme: str
    max_iters: int = 30
    volfrac: Optional[float] = None
    tol: float = 1e-5
    levels: Optional[int] = None


@dataclass
class BenchRow:
    cell: BenchCell
    status: str = "ok"
    design_iters: int = 0
    converged: bool = False
    mean_cg_iters: float = 0.0
    time_per_iter_s: float = 0.0
    final_compliance: float = float("nan")
    vector_scalars: int = 0
    coarse_op_scalars: int = 0
    factor_scalars: int = 0

    @property
    def aux_scalars(self) -> int:
        return self.vector_scalars + self.coarse_op_scalars + self.factor_scalars

    @property
    def aux_bytes(self) -> int:
        return 8 * self.aux_scalars


def parse_matrix(path) -> list[BenchCell]:
    """One cell per line: preset=... resolution=... scheme=... [max_iters=N] ..."""
    cells = []
    text = Path(path).read_text()
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        kv = {}
        for token in line.split():
            if "=" not in token:
                raise ConfigError(f"{path}:{ln}: expected key=value tokens")
            key, value = token.split("=", 1)
            kv[key.replace("-", "_")] = value
        for required in ("preset", "resolution", "scheme"):
            if required not in kv:
                raise ConfigError(f"{path}:{ln}: missing {required}=")
        cell = BenchCell(
            preset=kv.pop("preset"),
            resolution=parse_resolution(kv.pop("resolution")),
            scheme=kv.pop("scheme"),
        )
        if "max_iters" in kv:
            cell.max_iters = _parse_int(kv, "max_iters")
        if "volfrac" in kv:
            cell.volfrac = _parse_float(kv, "volfrac")
        if "tol" in kv:
            cell.tol = _parse_float(kv, "tol")
        if "levels" in kv:
            cell.levels = _parse_int(kv, "levels")
        leftovers = set(kv) - {"max_iters", "volfrac", "tol", "levels"}
        if leftovers:
            raise ConfigError(f"{path}:{ln}: unknown keys {sorted(leftovers)}")
        cells.append(cell)
    return cells


def measure_memory(cell: BenchCell) -> tuple[int, int, int]:
    """Vector, coarse-operator and factorization scalar counts for a cell."""
    problem, preset = instantiate(cell.preset, cell.resolution)
    grid = problem.grid
    volfrac = cell.volfrac if cell.volfrac is not None else preset.volfrac
    levels = cell.levels or max_feasible_levels(grid.nelx, grid.nely, grid.nelz)
    rho = np.full(grid.n_elements, volfrac)
    state = OperatorState(
        grid, rho, problem.model, problem.boundary.fixed_mask(grid), problem.stiffness()
    )
    hier = build_hierarchy(grid, state, levels, scheme=cell.scheme)
    pcg_vectors = 4 * grid.n_dofs
    return (
        pcg_vectors + hier.vector_scalars,
        hier.operator_scalars,
        hier.factor_scalars,
    )


def run_cell(cell: BenchCell) -> BenchRow:
    row = BenchRow(cell)
    problem, preset = instantiate(cell.preset, cell.resolution)
    grid = problem.grid
    volfrac = cell.volfrac if cell.volfrac is not None else preset.volfrac
    levels = cell.levels or max_feasible_levels(grid.nelx, grid.nely, grid.nelz)
    opt = OptConfig(
        volfrac=volfrac,
        filter_radius=2.5 * grid.h,
        max_iterations=cell.max_iters,
    )
    result = run(
        problem,
        opt,
        SolverConfig(tolerance=cell.tol),
        scheme=cell.scheme,
        max_levels=levels,
    )
    row.design_iters = result.iterations
    row.converged = result.converged
    row.mean_cg_iters = float(np.mean([r.cg_iters for r in result.records]))
    row.time_per_iter_s = float(np.mean([r.wall_s for r in result.records]))
    row.final_compliance = result.records[-1].compliance
    row.vector_scalars, row.coarse_op_scalars, row.factor_scalars = measure_memory(cell)
    return row


def run_benchmark(matrix_path, out_dir) -> list[BenchRow]:
    """Run every cell, never aborting the matrix on a failed cell."""
    cells = parse_matrix(matrix_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows: list[BenchRow] = []
    for cell in cells:
        print(f"bench: {cell.preset} {cell.resolution} {cell.scheme}")
        try:
            rows.append(run_cell(cell))
        except Exception as exc:  # a failed cell is recorded, the matrix goes on
            traceback.print_exc()
            row = BenchRow(cell, status=f"failed: {exc}")
            rows.append(row)

    ratios = _memory_ratios(rows)
    path = out / "benchmark.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BENCH_HEADER.split(","))
        for row in rows:
            res = "x".join(str(d) for d in row.cell.resolution)
            ratio = ratios.get(id(row), "")
            writer.writerow(
                [
                    row.cell.preset,
                    res,
                    row.cell.scheme,
                    row.status,
                    row.design_iters,
                    row.converged,
                    f"{row.mean_cg_iters:.2f}",
                    f"{row.time_per_iter_s:.4f}",
                    repr(row.final_compliance),
                    row.vector_scalars,
                    row.coarse_op_scalars,
                    row.factor_scalars,
                    row.aux_bytes,
                    ratio,
                ]
            )
    print(f"benchmark table written to {path}")
    return rows


def _memory_ratios(rows: list[BenchRow]) -> dict[int, str]:
    """Homogenized over galerkin auxiliary bytes per (preset, resolution)."""
    by_key: dict[tuple, dict[str, BenchRow]] = {}
    for row in rows:
        if row.status != "ok":
            continue
        key = (row.cell.preset, row.cell.resolution)
        by_key.setdefault(key, {})[row.cell.scheme] = row
    ratios = {}
    for pair in by_key.values():
        if "galerkin" in pair and "homogenized" in pair:
            g = pair["galerkin"].aux_bytes
            h = pair["homogenized"].aux_bytes
            ratios[id(pair["homogenized"])] = f"{h / g:.4f}"
    return ratios
