"""Geometric multigrid hierarchy used as the PCG preconditioner.

Level 0 is the finest grid; each coarser level halves every element count.
Transfers are matrix-free trilinear interpolation (weights 1, 1/2, 1/4, 1/8)
and its exact transpose, smoothing is damped Jacobi, and the coarsest level
is solved through a dense Cholesky factorization.

Two coarse-operator representations are supported:

* ``galerkin``: every coarse element stores an explicit 24x24 local matrix,
  the exact triple product of the next finer operator with the trilinear
  embedding (fine couplings through fixed dofs are dropped, matching the
  projected fine operator).
* ``homogenized``: a coarse element stores only its density, the mean of its
  8 children; the local matrix is rebuilt on the fly from the level's unit
  stiffness, so nothing but density fields is stored below the coarsest
  factorization.

One V cycle from a zero initial iterate with equal pre/post smoothing is a
fixed linear, symmetric positive definite operator, which is what plain PCG
requires of its preconditioner.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import scipy.linalg

from .element import MaterialModel, simp_scale
from .errors import SetupError
from .grid import CORNER_OFFSETS, StructuredGrid, element_dofs_array
from .operator import (
    OperatorState,
    apply_element_operator,
    gather_element_vectors,
    operator_diagonal,
)

__all__ = [
    "MgHierarchy",
    "build_hierarchy",
    "prolongate",
    "restrict",
    "coarse_apply",
    "jacobi_smooth",
    "v_cycle",
    "coarse_solve",
    "max_feasible_levels",
]

SCHEMES = ("galerkin", "homogenized")
COARSE_GUARD_DOFS = 20_000
COARSEST_MIN_ELEMS = 2


def _octant_weights(c: int) -> np.ndarray:
    """Trilinear weights of the 8 coarse corners at the fine corners of octant c."""
    cc = CORNER_OFFSETS[c]
    T = np.ones((8, 8))
    for a in range(8):
        pos = (cc + CORNER_OFFSETS[a]) / 2.0  # position inside the coarse cube
        for b in range(8):
            w = 1.0
            for d in range(3):
                w *= pos[d] if CORNER_OFFSETS[b][d] else 1.0 - pos[d]
            T[a, b] = w
    return T


# W[c]: embedding of the 24 coarse element dofs into the 24 dofs of the fine
# element occupying octant c, i.e. the octant weight table applied per
# displacement component.
_W = np.zeros((8, 24, 24))
for _c in range(8):
    _T = _octant_weights(_c)
    for _ax in range(3):
        _W[_c, _ax::3, _ax::3] = _T
del _c, _T, _ax


def max_feasible_levels(nelx: int, nely: int, nelz: int) -> int:
    """Largest level count with all dims divisible by 2**(L-1) and coarsest >= 2."""
    L = 1
    dims = [nelx, nely, nelz]
    while all(d % 2 == 0 and d // 2 >= COARSEST_MIN_ELEMS for d in dims):
        dims = [d // 2 for d in dims]
        L += 1
    return L


def _octant_groups(arr: np.ndarray, coarse_shape, trailing=()) -> np.ndarray:
    """Group per-fine-element data by parent coarse element and octant.

    Returns shape (nel_coarse, 8, *trailing); flattening the (ck, cj, ci)
    parities in C order makes the octant index equal the local corner index
    c = ci + 2*cj + 4*ck of the fine element inside its parent.
    """
    ncz, ncy, ncx = coarse_shape
    a = arr.reshape(ncz, 2, ncy, 2, ncx, 2, *trailing)
    a = np.moveaxis(a, (1, 3, 5), (3, 4, 5))  # (ncz, ncy, ncx, ck, cj, ci, ...)
    return a.reshape(ncz * ncy * ncx, 8, *trailing)


@dataclass
class _Level:
    grid: StructuredGrid
    fixed_mask: np.ndarray
    fixed_idx: np.ndarray
    k0l: Optional[np.ndarray] = None  # unit-modulus stiffness at this level's h
    scale: Optional[np.ndarray] = None  # fine and homogenized levels
    mats: Optional[np.ndarray] = None  # galerkin coarse levels, (nel, 24, 24)
    diag: Optional[np.ndarray] = None
    u: Optional[np.ndarray] = None
    f: Optional[np.ndarray] = None
    r: Optional[np.ndarray] = None
    tmp: Optional[np.ndarray] = None
    # static data for coarsening this level's fixed-dof projection (galerkin)
    aff_elems: Optional[np.ndarray] = None  # coarse element per affected fine elem
    aff_oct: Optional[np.ndarray] = None  # octant per affected fine elem
    aff_corr: Optional[np.ndarray] = None  # unscaled correction matrices

    def alloc(self):
        n = self.grid.n_dofs
        self.u = np.zeros(n)
        self.f = np.zeros(n)
        self.r = np.zeros(n)
        self.tmp = np.zeros(n)

    @property
    def n_dofs(self):
        return self.grid.n_dofs


def _coarsen_mask(fine_mask: np.ndarray, fine_grid: StructuredGrid) -> np.ndarray:
    """A coarse dof is fixed iff its coincident fine dof is fixed."""
    nz, ny, nx = fine_grid.elem_shape
    m = fine_mask.reshape(nz + 1, ny + 1, nx + 1, 3)
    return m[::2, ::2, ::2, :].reshape(-1).copy()


def _free24(level: _Level) -> np.ndarray:
    """Per-element float mask (nel, 24): 1.0 on free local dofs, 0.0 on fixed."""
    freef = (~level.fixed_mask).astype(np.float64)
    return gather_element_vectors(freef, level.grid.elem_shape)


class MgHierarchy:
    """Grid hierarchy, per-level operators and the coarsest factorization."""

    def __init__(
        self,
        levels: List[_Level],
        scheme: str,
        omega: float,
        nu_pre: int,
        nu_post: int,
        model: MaterialModel,
    ):
        self.levels = levels
        self.scheme = scheme
        self.omega = omega
        self.nu_pre = nu_pre
        self.nu_post = nu_post
        self.model = model
        self._chol = None
        self._g_stack = None
        for lv in levels:
            lv.alloc()

    # ------------------------------------------------------------------
    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def vector_scalars(self) -> int:
        """Persistent per-level working set: u, f, r, tmp and the diagonal."""
        return sum(5 * lv.n_dofs for lv in self.levels)

    @property
    def operator_scalars(self) -> int:
        """Scalars stored to represent the coarse-level operators."""
        total = 0
        for lv in self.levels[1:]:
            if self.scheme == "galerkin":
                total += lv.grid.n_elements * 24 * 24
            else:
                total += lv.grid.n_elements
        return total

    @property
    def factor_scalars(self) -> int:
        nL = self.levels[-1].n_dofs
        return nL * nL

    # ------------------------------------------------------------------
    # operator refresh
    def refresh(self, state: OperatorState) -> None:
        """Rebuild the level operators for the current densities."""
        fine = self.levels[0]
        if state.grid.elem_shape != fine.grid.elem_shape:
            raise ValueError("hierarchy was built for a different grid")
        fine.scale = state.scale
        fine.k0l = state.stiffness.matrix
        self.model = state.model
        if self.scheme == "homogenized":
            rho = state.densities
            for l in range(1, self.n_levels):
                lv = self.levels[l]
                rho = _octant_groups(rho, lv.grid.elem_shape).mean(axis=1)
                lv.scale = state.model.E * simp_scale(rho, state.model)
                lv.k0l = state.stiffness.matrix * float(2**l)
        elif self.n_levels > 1:
            if self._g_stack is None:
                k0 = state.stiffness.matrix
                self._g_stack = np.stack([_W[c].T @ k0 @ _W[c] for c in range(8)])
                self._prepare_fine_corrections(k0)
            self._coarsen_fine_level()
            for l in range(1, self.n_levels - 1):
                self.levels[l + 1].mats = self._coarsen_matrices(self.levels[l])
        for lv in self.levels:
            if lv.mats is not None:
                lv.diag = operator_diagonal(
                    lv.grid.elem_shape, lv.fixed_idx, elem_matrices=lv.mats
                )
            else:
                lv.diag = operator_diagonal(
                    lv.grid.elem_shape, lv.fixed_idx, k0=lv.k0l, scale=lv.scale
                )
        self._factor_coarsest()

    def _prepare_fine_corrections(self, k0: np.ndarray) -> None:
        """Static correction matrices for the fine-level fixed-dof projection.

        Zeroing fixed rows/columns of the fine operator is element-local, so
        for an affected fine element in octant c the exact coarse
        contribution changes by s_e * W_c^T (K0 o (m m^T) - K0) W_c with m
        its free-dof mask. Only elements touching a fixed dof are affected;
        their corrections are precomputed once and scaled at refresh time.
        """
        fine = self.levels[0]
        coarse_shape = self.levels[1].grid.elem_shape
        groups = _octant_groups(_free24(fine), coarse_shape, (24,))
        pairs = np.argwhere(groups.min(axis=2) < 0.5)  # (coarse element, octant)
        if pairs.size == 0:
            fine.aff_elems = None
            return
        E, C = pairs[:, 0], pairs[:, 1]
        m = groups[E, C]
        delta = k0[None, :, :] * (m[:, :, None] * m[:, None, :]) - k0[None, :, :]
        fine.aff_corr = np.matmul(np.swapaxes(_W[C], 1, 2), np.matmul(delta, _W[C]))
        fine.aff_elems = E
        fine.aff_oct = C

    def _coarsen_fine_level(self) -> None:
        """Galerkin coarse matrices for level 1 from the fine scale field."""
        fine = self.levels[0]
        coarse = self.levels[1]
        s_oct = _octant_groups(fine.scale, coarse.grid.elem_shape)
        KE = (s_oct @ self._g_stack.reshape(8, 576)).reshape(-1, 24, 24)
        if fine.aff_elems is not None:
            s_aff = s_oct[fine.aff_elems, fine.aff_oct]
            np.add.at(KE, fine.aff_elems, s_aff[:, None, None] * fine.aff_corr)
        coarse.mats = KE

    def _coarsen_matrices(self, fine: _Level) -> np.ndarray:
        """Galerkin coarsening of a level that stores per-element matrices."""
        coarse_shape = tuple(d // 2 for d in fine.grid.elem_shape)
        m = _free24(fine)
        kproj = fine.mats * (m[:, :, None] * m[:, None, :])
        groups = _octant_groups(kproj, coarse_shape, (24, 24))
        KE = np.zeros((groups.shape[0], 24, 24))
        for c in range(8):
            KE += np.matmul(_W[c].T, np.matmul(groups[:, c], _W[c]))
        return KE

    def _factor_coarsest(self) -> None:
        lv = self.levels[-1]
        n = lv.n_dofs
        if n > COARSE_GUARD_DOFS:
            raise SetupError(
                f"coarsest level has {n} dofs, above the direct-solve guard "
                f"{COARSE_GUARD_DOFS}; increase the level count"
            )
        # Galerkin coarse matrices inherit the fine constraints through the
        # projected triple product, but homogenized operators are rebuilt
        # from densities alone, so vanished fixed dofs leave rigid modes.
        if self.scheme == "homogenized" and self.n_levels > 1 and lv.fixed_idx.size < 6:
            raise SetupError(
                f"only {lv.fixed_idx.size} fixed dofs survive on the coarsest "
                "level; rigid modes are unconstrained (bad fixed-dof coarsening)"
            )
        edofs = element_dofs_array(lv.grid)
        K = np.zeros((n, n))
        if lv.mats is not None:
            ke = lv.mats
        else:
            ke = lv.scale[:, None, None] * lv.k0l[None, :, :]
        np.add.at(K, (edofs[:, :, None], edofs[:, None, :]), ke)
        fx = lv.fixed_idx
        K[fx, :] = 0.0
        K[:, fx] = 0.0
        K[fx, fx] = 1.0
        try:
            self._chol = scipy.linalg.cho_factor(K, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise SetupError(
                "coarsest-level matrix is not positive definite; the fixed "
                "dof set may vanish under coarsening"
            ) from exc
        piv = np.abs(np.diag(self._chol[0]))
        if not np.all(np.isfinite(piv)) or piv.min() == 0.0:
            raise SetupError("coarsest-level factorization produced a zero pivot")

    # ------------------------------------------------------------------
    # level operators
    def apply_level(self, l: int, u: np.ndarray) -> np.ndarray:
        lv = self.levels[l]
        if lv.mats is not None:
            return apply_element_operator(
                u, lv.grid.elem_shape, lv.fixed_idx, elem_matrices=lv.mats
            )
        return apply_element_operator(
            u, lv.grid.elem_shape, lv.fixed_idx, k0=lv.k0l, scale=lv.scale
        )

    def coarse_apply(self, l: int, u: np.ndarray) -> np.ndarray:
        """Coarse operator at level l >= 1 (level 0 is the fine operator)."""
        if not 1 <= l < self.n_levels:
            raise ValueError(f"coarse level index {l} out of range")
        u = np.asarray(u, dtype=np.float64)
        if u.shape != (self.levels[l].n_dofs,):
            raise ValueError("dof vector has the wrong length for this level")
        return self.apply_level(l, u)

    # ------------------------------------------------------------------
    # transfers
    def prolongate(self, l: int, e_coarse: np.ndarray) -> np.ndarray:
        """Trilinear interpolation from level l+1 onto level l."""
        coarse = self.levels[l + 1]
        fine = self.levels[l]
        e_coarse = np.asarray(e_coarse, dtype=np.float64)
        if e_coarse.shape != (coarse.n_dofs,):
            raise ValueError("coarse vector has the wrong length")
        nz, ny, nx = coarse.grid.elem_shape
        a = e_coarse.reshape(nz + 1, ny + 1, nx + 1, 3)
        for axis in range(3):
            a = _interp_axis(a, axis)
        out = a.reshape(-1)
        out[fine.fixed_idx] = 0.0
        return out

    def restrict(self, l: int, r_fine: np.ndarray) -> np.ndarray:
        """Transpose of prolongation, from level l down to level l+1."""
        fine = self.levels[l]
        coarse = self.levels[l + 1]
        r_fine = np.asarray(r_fine, dtype=np.float64)
        if r_fine.shape != (fine.n_dofs,):
            raise ValueError("fine vector has the wrong length")
        a = r_fine.copy()
        a[fine.fixed_idx] = 0.0
        nz, ny, nx = fine.grid.elem_shape
        a = a.reshape(nz + 1, ny + 1, nx + 1, 3)
        for axis in range(3):
            a = _restrict_axis(a, axis)
        out = a.reshape(-1)
        out[coarse.fixed_idx] = 0.0
        return out

    # ------------------------------------------------------------------
    # smoothing and the cycle
    def jacobi_smooth(
        self, l: int, u: np.ndarray, f: np.ndarray, sweeps: int
    ) -> np.ndarray:
        """Damped Jacobi sweeps; fixed dofs keep their input values."""
        lv = self.levels[l]
        u = np.array(u, dtype=np.float64)
        for _ in range(sweeps):
            r = f - self.apply_level(l, u)
            r[lv.fixed_idx] = 0.0
            u += self.omega * r / lv.diag
        return u

    def _smooth_inplace(self, l: int, sweeps: int) -> None:
        lv = self.levels[l]
        for _ in range(sweeps):
            np.subtract(lv.f, self.apply_level(l, lv.u), out=lv.r)
            lv.r[lv.fixed_idx] = 0.0
            np.divide(lv.r, lv.diag, out=lv.tmp)
            lv.u += self.omega * lv.tmp

    def coarse_solve(self, f: np.ndarray) -> np.ndarray:
        """Direct solve on the coarsest level via the cached factorization."""
        if self._chol is None:
            raise SetupError("hierarchy was not refreshed before use")
        f = np.asarray(f, dtype=np.float64)
        if f.shape != (self.levels[-1].n_dofs,):
            raise ValueError("coarse rhs has the wrong length")
        return scipy.linalg.cho_solve(self._chol, f)

    def v_cycle(self, f: np.ndarray, out: Optional[np.ndarray] = None) -> np.ndarray:
        """One V cycle from a zero initial iterate; the PCG preconditioner."""
        fine = self.levels[0]
        f = np.asarray(f, dtype=np.float64)
        if f.shape != (fine.n_dofs,):
            raise ValueError("rhs has the wrong length")
        fine.f[:] = f
        fine.f[fine.fixed_idx] = 0.0
        self._cycle(0)
        if out is None:
            return fine.u.copy()
        out[:] = fine.u
        return out

    def _cycle(self, l: int) -> None:
        lv = self.levels[l]
        if l == self.n_levels - 1:
            lv.u[:] = self.coarse_solve(lv.f)
            return
        lv.u[:] = 0.0
        self._smooth_inplace(l, self.nu_pre)
        np.subtract(lv.f, self.apply_level(l, lv.u), out=lv.r)
        lv.r[lv.fixed_idx] = 0.0
        self.levels[l + 1].f[:] = self.restrict(l, lv.r)
        self._cycle(l + 1)
        lv.u += self.prolongate(l, self.levels[l + 1].u)
        self._smooth_inplace(l, self.nu_post)


def _interp_axis(a: np.ndarray, axis: int) -> np.ndarray:
    """Linear interpolation doubling a node axis: n nodes become 2n-1."""
    n = a.shape[axis]
    shape = list(a.shape)
    shape[axis] = 2 * n - 1
    out = np.zeros(shape)
    src = np.moveaxis(a, axis, 0)
    dst = np.moveaxis(out, axis, 0)
    dst[0::2] = src
    dst[1::2] = 0.5 * (src[:-1] + src[1:])
    return out


def _restrict_axis(a: np.ndarray, axis: int) -> np.ndarray:
    """Exact transpose of ``_interp_axis`` along one axis."""
    nf = a.shape[axis]
    nc = (nf - 1) // 2 + 1
    shape = list(a.shape)
    shape[axis] = nc
    out = np.zeros(shape)
    src = np.moveaxis(a, axis, 0)
    dst = np.moveaxis(out, axis, 0)
    dst[:] = src[0::2]
    odd = src[1::2]
    dst[:-1] += 0.5 * odd
    dst[1:] += 0.5 * odd
    return out


def build_hierarchy(
    grid: StructuredGrid,
    state: OperatorState,
    max_levels: int,
    scheme: str = "galerkin",
    omega: float = 0.4,
    nu_pre: int = 1,
    nu_post: int = 1,
) -> MgHierarchy:
    """Build and refresh a hierarchy over the given operator state.

    The level count is ``min(max_levels, feasible)``; feasible halving stops
    as soon as an element count turns odd or would drop below 2. A
    single-level hierarchy degenerates to a direct solve and is allowed only
    under the dense guard limit.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}, expected one of {SCHEMES}")
    if not 0 < omega <= 1:
        raise ValueError(f"jacobi damping must lie in (0, 1], got {omega}")
    if max_levels < 1:
        raise ValueError("max_levels must be at least 1")
    if nu_pre != nu_post:
        raise ValueError("equal pre/post smoothing is required for a symmetric cycle")
    L = min(int(max_levels), max_feasible_levels(grid.nelx, grid.nely, grid.nelz))
    levels = []
    g = grid
    mask = np.asarray(state.fixed_mask, dtype=bool)
    for l in range(L):
        levels.append(_Level(grid=g, fixed_mask=mask, fixed_idx=np.flatnonzero(mask)))
        if l < L - 1:
            mask = _coarsen_mask(mask, g)
            g = StructuredGrid(g.nelx // 2, g.nely // 2, g.nelz // 2, g.h * 2)
    hier = MgHierarchy(
        levels, scheme, float(omega), int(nu_pre), int(nu_post), state.model
    )
    hier.refresh(state)
    return hier


# Functional wrappers over the hierarchy methods -----------------------------


def prolongate(hier: MgHierarchy, l: int, e_coarse: np.ndarray) -> np.ndarray:
    return hier.prolongate(l, e_coarse)


def restrict(hier: MgHierarchy, l: int, r_fine: np.ndarray) -> np.ndarray:
    return hier.restrict(l, r_fine)


def coarse_apply(hier: MgHierarchy, l: int, u: np.ndarray) -> np.ndarray:
    return hier.coarse_apply(l, u)


def jacobi_smooth(
    hier: MgHierarchy, l: int, u: np.ndarray, f: np.ndarray, sweeps: int
) -> np.ndarray:
    return hier.jacobi_smooth(l, u, f, sweeps)


def v_cycle(hier: MgHierarchy, f: np.ndarray) -> np.ndarray:
    return hier.v_cycle(f)


def coarse_solve(hier: MgHierarchy, f: np.ndarray) -> np.ndarray:
    return hier.coarse_solve(f)
