"""Compliance minimization by optimality criteria over a filtered gradient.

The design loop alternates a state solve (MGCG by default), adjoint
compliance sensitivities, neighborhood sensitivity filtering, and the OC
density update with a bisected volume multiplier. Passive solid elements are
pinned at density 1 and passive void at 0; only active elements move, and
after every update the mean active density matches the volume fraction to
the bisection tolerance.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np
from scipy import ndimage

from .element import (
    ElementStiffness,
    MaterialModel,
    element_gravity_load,
    simp_scale_derivative,
    unit_stiffness,
)
from .errors import NumericalError, VolumeInfeasible
from .grid import BoundarySpec, GravitySpec, RegionMask, StructuredGrid
from .multigrid import MgHierarchy, build_hierarchy, max_feasible_levels
from .operator import OperatorState, gather_element_vectors, scatter_element_vectors
from .solver import SolverConfig, jacobi_preconditioner, mgcg_solve, pcg

__all__ = [
    "OptConfig",
    "DensityField",
    "FilterWeights",
    "Problem",
    "RunRecord",
    "OptResult",
    "build_filter",
    "compliance",
    "sensitivities",
    "filter_sensitivities",
    "oc_update",
    "update_gravity_load",
    "run",
]

VOLUME_TOL = 1e-6
_BISECTION_MAX_STEPS = 200


@dataclass(frozen=True)
class OptConfig:
    """Design-loop parameters; filter_radius is in physical length units."""

    volfrac: float
    filter_radius: float
    p: float = 3.0
    move: float = 0.2
    eta: float = 0.5
    q: float = 1.0
    gamma: float = 1e-3
    ch_tol: float = 0.01
    max_iterations: int = 300
    p_continuation: bool = False
    obj_tol: Optional[float] = None

    def __post_init__(self):
        # volfrac = 1 is allowed; the update then has no room to move
        if not 0 < self.volfrac <= 1:
            raise ValueError("volfrac must lie in (0, 1]")
        if not 0 < self.move < 1:
            raise ValueError("move limit must lie in (0, 1)")
        if self.eta <= 0 or self.gamma <= 0 or self.ch_tol <= 0:
            raise ValueError("eta, gamma and ch_tol must be positive")

    def penal_at(self, iteration: int) -> float:
        """Penalization exponent, optionally ramped 1 -> p in 0.5 steps."""
        if not self.p_continuation:
            return self.p
        return min(self.p, 1.0 + 0.5 * (iteration // 15))


@dataclass
class DensityField:
    """Design variables plus the active/passive classification."""

    values: np.ndarray
    regions: RegionMask

    def active_mean(self) -> float:
        return float(self.values[self.regions.active].mean())

    def copy(self) -> "DensityField":
        return DensityField(self.values.copy(), self.regions)


def initial_densities(regions: RegionMask, volfrac: float) -> DensityField:
    rho = np.full(regions.classes.shape, volfrac)
    rho[regions.passive_solid] = 1.0
    rho[regions.passive_void] = 0.0
    return DensityField(rho, regions)


# ---------------------------------------------------------------------------
# sensitivity filter


@dataclass
class FilterWeights:
    """Conic weights w = r - dist on the fixed offset stencil of the grid.

    The kernel is shared by all elements; boundary elements simply lose the
    neighbors that fall outside the domain, which the weight sums reflect.
    """

    offsets: np.ndarray  # (m, 3) int offsets (di, dj, dk)
    weights: np.ndarray  # (m,)
    kernel: np.ndarray  # dense (2R+1)^3 kernel, index order (dk, dj, di)
    wsum: np.ndarray  # per element sum of in-domain weights, (nel,)
    radius: float
    h: float
    elem_shape: tuple

    def neighborhood(self, e: int) -> tuple[np.ndarray, np.ndarray]:
        """Neighbor element ids and weights of element e (inside the domain)."""
        nz, ny, nx = self.elem_shape
        k, rem = divmod(e, ny * nx)
        j, i = divmod(rem, nx)
        ids, ws = [], []
        for (di, dj, dk), w in zip(self.offsets, self.weights):
            ii, jj, kk = i + di, j + dj, k + dk
            if 0 <= ii < nx and 0 <= jj < ny and 0 <= kk < nz:
                ids.append(ii + jj * nx + kk * nx * ny)
                ws.append(w)
        return np.asarray(ids, dtype=np.int64), np.asarray(ws)

    def correlate(self, field: np.ndarray) -> np.ndarray:
        nz, ny, nx = self.elem_shape
        out = ndimage.correlate(
            field.reshape(nz, ny, nx), self.kernel, mode="constant", cval=0.0
        )
        return out.reshape(-1)


def build_filter(grid: StructuredGrid, radius: float) -> FilterWeights:
    """Neighborhood weights w(x_i, x_e) = radius - ||x_i - x_e|| over centers."""
    h = grid.h
    if radius < h:
        raise ValueError(f"filter radius {radius} must be at least h = {h}")
    R = int(np.floor(radius / h + 1e-12))
    rng = np.arange(-R, R + 1)
    dk, dj, di = np.meshgrid(rng, rng, rng, indexing="ij")
    dist = h * np.sqrt(di**2 + dj**2 + dk**2)
    kernel = np.where(dist <= radius + 1e-12 * radius, radius - dist, 0.0)
    inside = dist <= radius + 1e-12 * radius
    offsets = np.stack([di[inside], dj[inside], dk[inside]], axis=1)
    weights = kernel[inside]
    ones = np.ones(grid.n_elements)
    fw = FilterWeights(
        offsets=offsets,
        weights=weights,
        kernel=kernel,
        wsum=np.zeros(grid.n_elements),
        radius=float(radius),
        h=h,
        elem_shape=grid.elem_shape,
    )
    fw.wsum = fw.correlate(ones)
    return fw


def filter_sensitivities(
    dc: np.ndarray, rho: np.ndarray, weights: FilterWeights, gamma: float
) -> np.ndarray:
    """Neighborhood smoothing of the gradient, floored by gamma in the denominator."""
    num = weights.correlate(rho * dc)
    return num / (np.maximum(gamma, rho) * weights.wsum)


# ---------------------------------------------------------------------------
# objective and gradient


def compliance(f: np.ndarray, u: np.ndarray) -> float:
    """External work f'u; equals u'Ku at the solved state."""
    f = np.asarray(f)
    u = np.asarray(u)
    if f.shape != u.shape:
        raise ValueError("force and displacement vectors differ in length")
    return float(f @ u)


def sensitivities(
    state: OperatorState, u: np.ndarray, gravity: Optional[GravitySpec] = None
) -> np.ndarray:
    """dc/drho per element: -s'(rho) u_e' K0 u_e plus the self-weight term.

    A design dependent load f(rho) contributes 2 u' df/drho on top of the
    usual adjoint expression.
    """
    grid = state.grid
    ue = gather_element_vectors(np.asarray(u, dtype=np.float64), grid.elem_shape)
    quad = np.einsum("eb,eb->e", ue @ state.stiffness.matrix, ue)
    ds = state.model.E * simp_scale_derivative(state.densities, state.model)
    dc = -ds * quad
    if gravity is not None:
        g_unit = element_gravity_load(
            1.0, gravity.g, grid.h, gravity.unit_weight, gravity.axis
        )
        dc += 2.0 * ue @ g_unit
    return dc


def update_gravity_load(
    grid: StructuredGrid,
    rho: DensityField,
    gravity: GravitySpec,
    external: Optional[np.ndarray] = None,
    fixed_idx: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Nodal self-weight of the current material plus fixed external loads."""
    g_unit = element_gravity_load(1.0, gravity.g, grid.h, gravity.unit_weight, gravity.axis)
    ve = rho.values[:, None] * g_unit[None, :]
    f = scatter_element_vectors(ve, grid.elem_shape)
    if external is not None:
        f = f + external
    if fixed_idx is not None:
        f[fixed_idx] = 0.0
    return f


# ---------------------------------------------------------------------------
# optimality criteria update


@dataclass
class OcResult:
    densities: DensityField
    lam: float
    bisection_steps: int


def oc_update(
    rho: DensityField, dc: np.ndarray, dv: np.ndarray, cfg: OptConfig
) -> OcResult:
    """One OC step: rho <- clip(rho * B^eta, move box) with bisected multiplier.

    B_e = max(-dc_e, 0) / (lam * dv_e); the sharpening exponent q is applied
    before the move-limit clip so the step never violates the move limit.
    Passive elements are untouched; the multiplier is bisected until the mean
    active density matches volfrac to 1e-6.
    """
    act = rho.regions.active
    x = rho.values[act]
    numer = np.maximum(-dc[act], 0.0)
    dva = dv[act]
    if np.any(dva <= 0):
        raise ValueError("volume gradient must be positive")
    lo = np.maximum(0.0, x - cfg.move)
    hi = np.minimum(1.0, x + cfg.move)

    def candidates(lam: float) -> np.ndarray:
        b = numer / (lam * dva)
        cand = x * b**cfg.eta
        if cfg.q != 1.0:
            cand = cand**cfg.q
        return np.clip(cand, lo, hi)

    if lo.mean() > cfg.volfrac + VOLUME_TOL or hi.mean() < cfg.volfrac - VOLUME_TOL:
        raise VolumeInfeasible(
            "volume target unreachable within the move limits "
            f"(reachable [{lo.mean():.6f}, {hi.mean():.6f}], target {cfg.volfrac})"
        )

    l1 = 0.0
    l2 = 1e9
    for _ in range(_BISECTION_MAX_STEPS):
        if candidates(l2).mean() <= cfg.volfrac:
            break
        l2 *= 16.0
    lam = 0.5 * (l1 + l2)
    steps = 0
    xnew = candidates(lam)
    while abs(xnew.mean() - cfg.volfrac) > VOLUME_TOL:
        steps += 1
        if steps > _BISECTION_MAX_STEPS:
            raise VolumeInfeasible(
                f"bisection failed to reach the volume target after "
                f"{_BISECTION_MAX_STEPS} halvings"
            )
        if xnew.mean() > cfg.volfrac:
            l1 = lam
        else:
            l2 = lam
        lam = 0.5 * (l1 + l2)
        xnew = candidates(lam)

    out = rho.values.copy()
    out[act] = xnew
    return OcResult(DensityField(out, rho.regions), lam, steps)


# ---------------------------------------------------------------------------
# the design loop


@dataclass(frozen=True)
class Problem:
    """A fully specified instance: discretization, bounds, loads, material."""

    grid: StructuredGrid
    boundary: BoundarySpec
    regions: RegionMask
    model: MaterialModel = MaterialModel()
    nu: float = 0.3

    def stiffness(self) -> ElementStiffness:
        return unit_stiffness(self.nu, self.grid.h)


@dataclass
class RunRecord:
    iteration: int
    compliance: float
    volume: float
    change: float
    cg_iters: int
    cg_residual: float
    wall_s: float
    aux_scalars: int


@dataclass
class OptResult:
    densities: DensityField
    displacement: np.ndarray
    records: List[RunRecord]
    converged: bool
    iterations: int


def run(
    problem: Problem,
    opt: OptConfig,
    solver: SolverConfig = SolverConfig(),
    scheme: str = "galerkin",
    max_levels: Optional[int] = None,
    omega: float = 0.4,
    init_densities: Optional[DensityField] = None,
    init_displacement: Optional[np.ndarray] = None,
    start_iteration: int = 0,
    on_iteration: Optional[Callable[[RunRecord, DensityField, np.ndarray], None]] = None,
) -> OptResult:
    """Run the design loop until the density change drops below ch_tol.

    ``on_iteration`` is called after each design update with the record, the
    updated densities and the current displacement (for checkpoint, export
    and logging hooks). Resuming a checkpoint means passing the stored
    densities, displacement and iteration counter back in.
    """
    grid = problem.grid
    k0 = problem.stiffness()
    fixed_mask = problem.boundary.fixed_mask(grid)
    fixed_idx = np.flatnonzero(fixed_mask)
    f_ext = problem.boundary.external_force(grid)
    f_ext[fixed_idx] = 0.0
    gravity = problem.boundary.gravity
    weights = build_filter(grid, opt.filter_radius)
    dv = np.ones(grid.n_elements)

    rho = (
        init_densities.copy()
        if init_densities is not None
        else initial_densities(problem.regions, opt.volfrac)
    )
    u = (
        np.array(init_displacement, dtype=np.float64)
        if init_displacement is not None
        else np.zeros(grid.n_dofs)
    )
    if max_levels is None:
        max_levels = max_feasible_levels(grid.nelx, grid.nely, grid.nelz)

    hier: Optional[MgHierarchy] = None
    records: List[RunRecord] = []
    converged = False
    iteration = start_iteration
    model = problem.model

    while iteration < opt.max_iterations:
        t0 = time.perf_counter()
        penal = opt.penal_at(iteration)
        model_k = replace(model, p=penal)
        state = OperatorState(grid, rho.values, model_k, fixed_mask, k0)
        if gravity is not None:
            f = update_gravity_load(grid, rho, gravity, f_ext, fixed_idx)
        else:
            f = f_ext

        if solver.preconditioner == "multigrid":
            if hier is None:
                hier = build_hierarchy(
                    grid, state, max_levels, scheme=scheme, omega=omega
                )
            else:
                hier.refresh(state)
            u, rep = mgcg_solve(state, hier, f, u_prev=u, cfg=solver)
        elif solver.preconditioner == "jacobi":
            u, rep = pcg(
                state,
                jacobi_preconditioner(state),
                f,
                u0=u if solver.warm_start else None,
                cfg=solver,
            )
        else:
            u, rep = pcg(state, None, f, u0=u if solver.warm_start else None, cfg=solver)

        c = compliance(f, u)
        dc = sensitivities(state, u, gravity)
        dcf = filter_sensitivities(dc, rho.values, weights, opt.gamma)
        step = oc_update(rho, dcf, dv, opt)
        ch = float(np.abs(step.densities.values - rho.values).max())
        rho = step.densities
        iteration += 1

        vol = rho.active_mean()
        if abs(vol - opt.volfrac) > VOLUME_TOL:
            raise NumericalError(
                f"volume constraint violated after update: {vol} vs {opt.volfrac}"
            )
        record = RunRecord(
            iteration=iteration,
            compliance=c,
            volume=vol,
            change=ch,
            cg_iters=rep.iterations,
            cg_residual=rep.final_rel_residual,
            wall_s=time.perf_counter() - t0,
            aux_scalars=rep.aux_vector_scalars,
        )
        records.append(record)
        if on_iteration is not None:
            on_iteration(record, rho, u)

        obj_ok = True
        if opt.obj_tol is not None and len(records) >= 2:
            obj_ok = abs(records[-1].compliance - records[-2].compliance) <= opt.obj_tol
        if ch <= opt.ch_tol and obj_ok:
            converged = True
            break

    return OptResult(rho, u, records, converged, iteration)
