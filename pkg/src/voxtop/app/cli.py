"""Command line entry point: ``voxtop run`` and ``voxtop bench``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..errors import ConfigError, NumericalError
from ..optimize import OptConfig, OptResult, run
from ..solver import SolverConfig
from .bench import run_benchmark
from .config import RunConfig, effective_levels, parse_config
from .io import HistoryWriter, checkpoint_load, checkpoint_save, export_vti
from .presets import instantiate


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxtop",
        description="3D compliance minimization on voxel grids with a "
        "multigrid preconditioned CG state solver",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one optimization")
    p_run.add_argument("--config", help="flat key=value configuration file")
    p_run.add_argument("--preset", help="problem preset name")
    p_run.add_argument("--resolution", help="elements per axis, e.g. 64x32x32")
    p_run.add_argument("--volfrac", help="target volume fraction of the active region")
    p_run.add_argument("--scheme", help="coarse operators: galerkin | homogenized")
    p_run.add_argument("--levels", help="multigrid level count (default: deepest feasible)")
    p_run.add_argument("--out", help="output directory")
    p_run.add_argument("--checkpoint-every", dest="checkpoint_every",
                       help="write a checkpoint every N design iterations")
    p_run.add_argument("--resume", help="checkpoint file to resume from")
    p_run.add_argument("--max-iters", dest="max_iters", help="design iteration cap")
    p_run.add_argument("--export-every", dest="export_every",
                       help="write a VTI density snapshot every N iterations")
    p_run.add_argument("--tol", help="relative residual tolerance of the state solver")
    p_run.add_argument("--profile", help="lateral load profile: uniform | parabolic")

    p_bench = sub.add_parser("bench", help="run a benchmark matrix")
    p_bench.add_argument("--matrix", required=True, help="benchmark matrix file")
    p_bench.add_argument("--out", required=True, help="output directory")
    return parser


def run_command(cfg: RunConfig) -> OptResult:
    problem, preset = instantiate(cfg.preset, cfg.resolution, cfg.profile)
    grid = problem.grid
    volfrac = cfg.volfrac if cfg.volfrac is not None else preset.volfrac
    opt = OptConfig(
        volfrac=volfrac,
        filter_radius=2.5 * grid.h,
        max_iterations=cfg.max_iters,
    )
    solver = SolverConfig(tolerance=cfg.tol)
    levels = effective_levels(cfg, (grid.nelx, grid.nely, grid.nelz))

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    init_rho = init_u = None
    start_iteration = 0
    if cfg.resume:
        ck = checkpoint_load(cfg.resume, expect_grid=grid)
        from ..optimize import DensityField

        init_rho = DensityField(ck.densities, problem.regions)
        init_u = ck.displacement
        start_iteration = ck.iteration
        print(f"resuming from {cfg.resume} at iteration {ck.iteration}")

    print(
        f"preset {cfg.preset}: {grid.nelx}x{grid.nely}x{grid.nelz} elements, "
        f"{grid.n_dofs} dofs, volfrac {volfrac}, scheme {cfg.scheme}, "
        f"levels {levels}"
    )
    history = HistoryWriter(out / "history.csv", append=start_iteration > 0)

    def on_iteration(rec, rho, u):
        history.write(rec)
        print(
            f"it {rec.iteration:4d}  c {rec.compliance:.6e}  vol {rec.volume:.4f}  "
            f"ch {rec.change:.4f}  cg {rec.cg_iters:3d}  {rec.wall_s:.2f}s"
        )
        if cfg.export_every and rec.iteration % cfg.export_every == 0:
            export_vti(rho.values, grid, out / f"density_{rec.iteration:04d}.vti")
        if cfg.checkpoint_every and rec.iteration % cfg.checkpoint_every == 0:
            checkpoint_save(out / "checkpoint.ckpt", grid, rec.iteration, rho.values, u)

    try:
        result = run(
            problem,
            opt,
            solver,
            scheme=cfg.scheme,
            max_levels=levels,
            init_densities=init_rho,
            init_displacement=init_u,
            start_iteration=start_iteration,
            on_iteration=on_iteration,
        )
    finally:
        history.close()

    export_vti(result.densities.values, grid, out / "density_final.vti")
    checkpoint_save(
        out / "final.ckpt", grid, result.iterations,
        result.densities.values, result.displacement,
    )
    status = "converged" if result.converged else "iteration cap reached"
    print(f"{status} after {result.iterations} iterations; outputs in {out}")
    return result


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            flag_keys = (
                "preset resolution volfrac scheme levels out checkpoint_every "
                "resume max_iters export_every tol profile"
            ).split()
            overrides = {k: getattr(args, k) for k in flag_keys}
            cfg = parse_config(args.config, overrides)
            run_command(cfg)
        elif args.command == "bench":
            run_benchmark(args.matrix, args.out)
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
