"""Preconditioned conjugate gradients with multigrid, Jacobi or no preconditioner.

The loop guard is the relative Euclidean residual. The recursively updated
residual is periodically replaced by the true residual f - K u so the report
never drifts away from the actual error, and convergence is only declared on
the true residual.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import SolverBreakdown
from .multigrid import MgHierarchy
from .operator import OperatorState

__all__ = ["SolverConfig", "SolveReport", "pcg", "mgcg_solve", "jacobi_preconditioner"]

# PCG keeps exactly four full-length auxiliary vectors (direction, operator
# product, residual, preconditioned residual); the V cycle keeps five per
# level. The budget check below guards that accounting.
AUX_BUDGET_FACTOR = 10.5
_TRUE_RESIDUAL_EVERY = 50


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-5
    max_iterations: int = 200
    preconditioner: str = "multigrid"  # multigrid | jacobi | none
    warm_start: bool = True

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.preconditioner not in ("multigrid", "jacobi", "none"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass
class SolveReport:
    iterations: int = 0
    final_rel_residual: float = 0.0
    precond_applications: int = 0
    wall_s: float = 0.0
    converged: bool = False
    aux_vector_scalars: int = 0
    residual_drift: float = 0.0


def jacobi_preconditioner(state: OperatorState) -> Callable[[np.ndarray], np.ndarray]:
    d = state.diagonal()
    return lambda r: r / d


def pcg(
    state: OperatorState,
    precond: Optional[Callable[[np.ndarray], np.ndarray]],
    f: np.ndarray,
    u0: Optional[np.ndarray] = None,
    cfg: SolverConfig = SolverConfig(),
) -> tuple[np.ndarray, SolveReport]:
    """Solve K(rho) u = f; returns the iterate and a convergence report.

    ``precond`` must act as a fixed symmetric positive definite operator.
    Breakdown (non-finite values, a nonpositive curvature p'Kp, or a
    nonpositive preconditioned product r'z) raises SolverBreakdown with the
    iteration number.
    """
    t0 = time.perf_counter()
    n = state.grid.n_dofs
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (n,):
        raise ValueError(f"rhs must have length {n}")
    if not np.all(np.isfinite(f)):
        raise SolverBreakdown("rhs contains non-finite entries")
    report = SolveReport(aux_vector_scalars=4 * n)

    if u0 is None:
        x = np.zeros(n)
    else:
        x = np.array(u0, dtype=np.float64)
        x[state.fixed_idx] = 0.0

    fnorm = float(np.linalg.norm(f))
    if fnorm == 0.0:
        report.converged = True
        report.wall_s = time.perf_counter() - t0
        return x, report

    r = state.residual(x, f)
    rel = float(np.linalg.norm(r)) / fnorm
    if rel <= cfg.tolerance:
        report.converged = True
        report.final_rel_residual = rel
        report.wall_s = time.perf_counter() - t0
        return x, report

    def precondition(vec):
        if precond is None:
            return vec.copy()
        report.precond_applications += 1
        return precond(vec)

    z = precondition(r)
    p = z.copy()
    rz = float(r @ z)
    if not np.isfinite(rz) or rz <= 0.0:
        raise SolverBreakdown(
            f"preconditioned product r'z = {rz} at iteration 0 is not "
            "positive; preconditioner is not SPD"
        )

    k = 0
    while k < cfg.max_iterations:
        k += 1
        q = state.apply(p)
        pq = float(p @ q)
        if not np.isfinite(pq):
            raise SolverBreakdown(f"non-finite curvature at iteration {k}")
        if pq <= 0.0:
            raise SolverBreakdown(
                f"p'Kp = {pq} at iteration {k}; operator is not positive definite"
            )
        alpha = rz / pq
        x += alpha * p
        if k % _TRUE_RESIDUAL_EVERY == 0:
            r = state.residual(x, f)
        else:
            r -= alpha * q
        rel = float(np.linalg.norm(r)) / fnorm
        if not np.isfinite(rel):
            raise SolverBreakdown(f"non-finite residual at iteration {k}")
        if rel <= cfg.tolerance:
            true_r = state.residual(x, f)
            true_rel = float(np.linalg.norm(true_r)) / fnorm
            report.residual_drift = abs(true_rel - rel) / max(true_rel, 1e-300)
            if true_rel <= cfg.tolerance:
                report.converged = True
                rel = true_rel
                break
            r = true_r
            rel = true_rel
        z = precondition(r)
        rz_new = float(r @ z)
        if not np.isfinite(rz_new) or rz_new <= 0.0:
            raise SolverBreakdown(
                f"preconditioned product r'z = {rz_new} at iteration {k} "
                "is not positive; preconditioner is not SPD"
            )
        beta = rz_new / rz
        p = z + beta * p
        rz = rz_new

    if not report.converged:
        rel = float(np.linalg.norm(state.residual(x, f))) / fnorm
    report.iterations = k
    report.final_rel_residual = rel
    report.converged = rel <= cfg.tolerance
    report.wall_s = time.perf_counter() - t0
    return x, report


def mgcg_solve(
    state: OperatorState,
    hier: MgHierarchy,
    f: np.ndarray,
    u_prev: Optional[np.ndarray] = None,
    cfg: SolverConfig = SolverConfig(),
) -> tuple[np.ndarray, SolveReport]:
    """PCG with one V cycle per iteration as the preconditioner.

    The hierarchy must have been refreshed for the current densities. With
    warm starting enabled the previous displacement seeds the iteration.
    """
    n = state.grid.n_dofs
    budget = 4 * n + hier.vector_scalars
    if budget > AUX_BUDGET_FACTOR * n:
        raise SolverBreakdown(
            f"auxiliary vector budget {budget} exceeds {AUX_BUDGET_FACTOR} * n"
        )
    u0 = u_prev if (cfg.warm_start and u_prev is not None) else None
    u, report = pcg(state, hier.v_cycle, f, u0=u0, cfg=cfg)
    report.aux_vector_scalars = budget
    return u, report
