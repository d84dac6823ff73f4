"""Matrix-free application of the global stiffness operator.

No global matrix is ever assembled in the production path. A displacement
field is gathered into per-element 24-vectors, multiplied by the scaled
element stiffness, and the contributions are accumulated back node by node.
Both directions are pure slab (shifted-slice) arithmetic on 3D views, so the
floating point accumulation order is fixed by the corner index and results
are bit-reproducible run to run.

Constrained dofs are handled by projection: the operator acts as the
identity on the fixed set, which keeps it symmetric positive definite on the
free subspace. A dense assembly (same constraint convention) is provided as
a test oracle for small grids only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .element import ElementStiffness, MaterialModel, simp_scale, unit_stiffness
from .grid import CORNER_OFFSETS, StructuredGrid, element_dofs_array

__all__ = ["OperatorState", "apply", "diagonal", "residual", "assemble_dense"]

DENSE_GUARD_DOFS = 20_000


def _corner_slab(arr: np.ndarray, c: int, elem_shape) -> np.ndarray:
    """View of the node array covering corner c of every element."""
    ci, cj, ck = CORNER_OFFSETS[c]
    nz, ny, nx = elem_shape
    return arr[ck : ck + nz, cj : cj + ny, ci : ci + nx]


def gather_element_vectors(u: np.ndarray, grid_shape) -> np.ndarray:
    """Collect nodal values into per-element local vectors (n_el, 24)."""
    nz, ny, nx = grid_shape
    u3 = u.reshape(nz + 1, ny + 1, nx + 1, 3)
    ue = np.empty((nz, ny, nx, 24))
    for c in range(8):
        ue[..., 3 * c : 3 * c + 3] = _corner_slab(u3, c, grid_shape)
    return ue.reshape(nz * ny * nx, 24)


def scatter_element_vectors(ve: np.ndarray, grid_shape) -> np.ndarray:
    """Accumulate per-element local vectors back onto nodes; returns flat dofs."""
    nz, ny, nx = grid_shape
    out = np.zeros((nz + 1, ny + 1, nx + 1, 3))
    v4 = ve.reshape(nz, ny, nx, 24)
    for c in range(8):
        _corner_slab(out, c, grid_shape)[...] += v4[..., 3 * c : 3 * c + 3]
    return out.reshape(-1)


def apply_element_operator(
    u: np.ndarray,
    grid_shape,
    fixed_idx: np.ndarray,
    k0: Optional[np.ndarray] = None,
    scale: Optional[np.ndarray] = None,
    elem_matrices: Optional[np.ndarray] = None,
) -> np.ndarray:
    """v = K u for an operator given either as scale * k0 or per-element matrices.

    The input is projected to zero on fixed dofs first and the output carries
    the input values there (identity on the constrained subspace).
    """
    uw = u.copy()
    uw[fixed_idx] = 0.0
    ue = gather_element_vectors(uw, grid_shape)
    if elem_matrices is None:
        ve = ue @ k0  # k0 symmetric
        ve *= scale[:, None]
    else:
        ve = np.matmul(elem_matrices, ue[:, :, None])[:, :, 0]
    out = scatter_element_vectors(ve, grid_shape)
    out[fixed_idx] = u[fixed_idx]
    return out


def operator_diagonal(
    grid_shape,
    fixed_idx: np.ndarray,
    k0: Optional[np.ndarray] = None,
    scale: Optional[np.ndarray] = None,
    elem_matrices: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Diagonal of the constrained operator; 1.0 on fixed dofs."""
    nz, ny, nx = grid_shape
    out = np.zeros((nz + 1, ny + 1, nx + 1, 3))
    if elem_matrices is None:
        kdiag = np.diag(k0)
        for c in range(8):
            block = scale[:, None] * kdiag[None, 3 * c : 3 * c + 3]
            _corner_slab(out, c, grid_shape)[...] += block.reshape(nz, ny, nx, 3)
    else:
        ediag = np.einsum("eii->ei", elem_matrices).reshape(nz, ny, nx, 24)
        for c in range(8):
            _corner_slab(out, c, grid_shape)[...] += ediag[..., 3 * c : 3 * c + 3]
    d = out.reshape(-1)
    d[fixed_idx] = 1.0
    return d


@dataclass
class OperatorState:
    """Immutable bundle: grid, densities, material, constraints, element matrix.

    ``densities`` is the raw per-element array; the cached ``scale`` already
    contains the elastic modulus, so the operator is scale[e] * k0.
    """

    grid: StructuredGrid
    densities: np.ndarray
    model: MaterialModel
    fixed_mask: np.ndarray
    stiffness: ElementStiffness = None
    scale: np.ndarray = field(init=False)
    fixed_idx: np.ndarray = field(init=False)

    def __post_init__(self):
        rho = np.asarray(self.densities, dtype=np.float64)
        if rho.shape != (self.grid.n_elements,):
            raise ValueError(
                f"densities must have length {self.grid.n_elements}, got {rho.shape}"
            )
        self.densities = rho
        if self.stiffness is None:
            self.stiffness = unit_stiffness(0.3, self.grid.h)
        mask = np.asarray(self.fixed_mask)
        if mask.dtype != bool:
            idx = np.unique(np.asarray(mask, dtype=np.int64))
            mask = np.zeros(self.grid.n_dofs, dtype=bool)
            mask[idx] = True
        if mask.shape != (self.grid.n_dofs,):
            raise ValueError("fixed mask has wrong length")
        self.fixed_mask = mask
        self.fixed_idx = np.flatnonzero(mask)
        self.scale = self.model.E * simp_scale(rho, self.model)

    def apply(self, u: np.ndarray) -> np.ndarray:
        return apply(self, u)

    def diagonal(self) -> np.ndarray:
        return diagonal(self)

    def residual(self, u: np.ndarray, f: np.ndarray) -> np.ndarray:
        return residual(self, u, f)


def apply(state: OperatorState, u: np.ndarray) -> np.ndarray:
    """v = K(rho) u via the node-wise matrix-free kernel."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (state.grid.n_dofs,):
        raise ValueError(f"expected dof vector of length {state.grid.n_dofs}")
    return apply_element_operator(
        u,
        state.grid.elem_shape,
        state.fixed_idx,
        k0=state.stiffness.matrix,
        scale=state.scale,
    )


def diagonal(state: OperatorState) -> np.ndarray:
    return operator_diagonal(
        state.grid.elem_shape,
        state.fixed_idx,
        k0=state.stiffness.matrix,
        scale=state.scale,
    )


def residual(state: OperatorState, u: np.ndarray, f: np.ndarray) -> np.ndarray:
    """r = f - K u, zeroed on fixed dofs."""
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (state.grid.n_dofs,):
        raise ValueError(f"expected dof vector of length {state.grid.n_dofs}")
    r = f - apply(state, u)
    r[state.fixed_idx] = 0.0
    return r


def assemble_dense(state: OperatorState, guard: int = DENSE_GUARD_DOFS) -> np.ndarray:
    """Explicit global stiffness with identity rows/columns on fixed dofs.

    Test oracle only; refuses grids above the guard limit.
    """
    n = state.grid.n_dofs
    if n > guard:
        raise ValueError(
            f"dense assembly of {n} dofs exceeds the guard limit {guard}"
        )
    edofs = element_dofs_array(state.grid)
    K = np.zeros((n, n))
    ke = state.scale[:, None, None] * state.stiffness.matrix[None, :, :]
    np.add.at(K, (edofs[:, :, None], edofs[:, None, :]), ke)
    fixed = state.fixed_idx
    K[fixed, :] = 0.0
    K[:, fixed] = 0.0
    K[fixed, fixed] = 1.0
    return K
