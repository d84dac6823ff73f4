"""Structured hexahedral grids: index arithmetic, boundary data, region masks.

Every other module shares the numbering conventions fixed here. Nodes are
numbered lexicographically with x fastest,

    node(i, j, k) = i + j * (nelx + 1) + k * (nelx + 1) * (nely + 1),

dof ids are ``3 * node + {0, 1, 2}`` for the x, y, z displacement components,
and elements are numbered the same way over ``(nelx, nely, nelz)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "CORNER_OFFSETS",
    "StructuredGrid",
    "build_grid",
    "element_nodes",
    "element_dofs_array",
    "Region",
    "RegionMask",
    "Box",
    "classify_regions",
    "GravitySpec",
    "BoundarySpec",
    "make_boundary",
]

# Local corner order of an element: corner c sits at offset
# (c & 1, (c >> 1) & 1, (c >> 2) & 1) from the element origin, x fastest.
# Element stiffness matrices use the same order, three dofs per corner.
CORNER_OFFSETS = np.array(
    [[c & 1, (c >> 1) & 1, (c >> 2) & 1] for c in range(8)], dtype=np.int64
)

_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class StructuredGrid:
    """Cartesian grid of ``nelx * nely * nelz`` cubic 8-node elements."""

    nelx: int
    nely: int
    nelz: int
    h: float

    def __post_init__(self):
        for name in ("nelx", "nely", "nelz"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if not self.h > 0:
            raise ValueError(f"element edge length must be positive, got {self.h!r}")

    # counts -------------------------------------------------------------
    @property
    def n_elements(self) -> int:
        return self.nelx * self.nely * self.nelz

    @property
    def n_nodes(self) -> int:
        return (self.nelx + 1) * (self.nely + 1) * (self.nelz + 1)

    @property
    def n_dofs(self) -> int:
        return 3 * self.n_nodes

    @property
    def elem_shape(self) -> tuple[int, int, int]:
        """Shape of per-element arrays viewed as 3D, index order (k, j, i)."""
        return (self.nelz, self.nely, self.nelx)

    @property
    def node_shape(self) -> tuple[int, int, int]:
        return (self.nelz + 1, self.nely + 1, self.nelx + 1)

    @property
    def domain(self) -> tuple[float, float, float]:
        return (self.nelx * self.h, self.nely * self.h, self.nelz * self.h)

    # index arithmetic ---------------------------------------------------
    def node_id(self, i, j, k):
        return i + j * (self.nelx + 1) + k * (self.nelx + 1) * (self.nely + 1)

    def node_ijk(self, node):
        nxy = (self.nelx + 1) * (self.nely + 1)
        k, rem = divmod(node, nxy)
        j, i = divmod(rem, self.nelx + 1)
        return i, j, k

    def element_id(self, i, j, k):
        return i + j * self.nelx + k * self.nelx * self.nely

    def element_ijk(self, e):
        nxy = self.nelx * self.nely
        k, rem = divmod(e, nxy)
        j, i = divmod(rem, self.nelx)
        return i, j, k

    def element_centers(self) -> np.ndarray:
        """Physical centers of all elements, shape (n_elements, 3)."""
        k, j, i = np.indices(self.elem_shape)
        ijk = np.stack([i.ravel(), j.ravel(), k.ravel()], axis=1)
        return (ijk + 0.5) * self.h


def build_grid(nelx: int, nely: int, nelz: int, h: float) -> StructuredGrid:
    """Create a grid; raises ValueError for non-positive dimensions."""
    return StructuredGrid(int(nelx), int(nely), int(nelz), float(h))


def element_nodes(grid: StructuredGrid, e: int) -> np.ndarray:
    """The 8 corner node ids of element ``e`` in local corner order."""
    if not 0 <= e < grid.n_elements:
        raise ValueError(f"element index {e} out of range [0, {grid.n_elements})")
    i, j, k = grid.element_ijk(e)
    off = CORNER_OFFSETS
    return grid.node_id(i + off[:, 0], j + off[:, 1], k + off[:, 2])


def element_dofs_array(grid: StructuredGrid) -> np.ndarray:
    """Dof ids of every element, shape (n_elements, 24), int64."""
    k, j, i = np.indices(grid.elem_shape)
    i, j, k = i.ravel(), j.ravel(), k.ravel()
    off = CORNER_OFFSETS
    nodes = grid.node_id(
        i[:, None] + off[None, :, 0],
        j[:, None] + off[None, :, 1],
        k[:, None] + off[None, :, 2],
    )
    dofs = 3 * nodes[:, :, None] + np.arange(3)[None, None, :]
    return dofs.reshape(grid.n_elements, 24)


# ---------------------------------------------------------------------------
# regions


class Region(IntEnum):
    ACTIVE = 0
    PASSIVE_SOLID = 1
    PASSIVE_VOID = 2


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in physical coordinates, lo <= hi per axis."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        if any(l > h for l, h in zip(self.lo, self.hi)):
            raise ValueError(f"box has lo > hi: {self.lo} {self.hi}")


@dataclass
class RegionMask:
    """Per-element classification into active / passive solid / passive void."""

    classes: np.ndarray  # int8, length n_elements

    @property
    def active(self) -> np.ndarray:
        return self.classes == Region.ACTIVE

    @property
    def passive_solid(self) -> np.ndarray:
        return self.classes == Region.PASSIVE_SOLID

    @property
    def passive_void(self) -> np.ndarray:
        return self.classes == Region.PASSIVE_VOID

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(self.active))


def classify_regions(
    grid: StructuredGrid, boxes: Sequence[tuple[Box, Region]]
) -> RegionMask:
    """Classify elements by their centers; later boxes override earlier ones.

    Elements default to active. A box must lie inside the physical domain
    (small tolerance for roundoff), otherwise ValueError.
    """
    L = grid.domain
    tol = 1e-9 * max(L)
    classes = np.zeros(grid.n_elements, dtype=np.int8)
    centers = grid.element_centers()
    for box, cls in boxes:
        for ax in range(3):
            if box.lo[ax] < -tol or box.hi[ax] > L[ax] + tol:
                raise ValueError(
                    f"box {box.lo}..{box.hi} extends outside domain {L} on axis {ax}"
                )
        inside = np.ones(grid.n_elements, dtype=bool)
        for ax in range(3):
            inside &= (centers[:, ax] >= box.lo[ax]) & (centers[:, ax] <= box.hi[ax])
        classes[inside] = int(cls)
    return RegionMask(classes)


# ---------------------------------------------------------------------------
# boundary conditions


@dataclass(frozen=True)
class GravitySpec:
    """Self-weight load: acts along -axis with acceleration g."""

    axis: int = 2
    g: float = 1.0
    unit_weight: float = 1.0

    @staticmethod
    def along(axis: str, g: float = 1.0, unit_weight: float = 1.0) -> "GravitySpec":
        return GravitySpec(_AXES[axis], g, unit_weight)


@dataclass(frozen=True)
class BoundarySpec:
    """Fixed dofs plus nodal point loads, with an optional gravity spec."""

    fixed_dofs: np.ndarray  # sorted unique int64 dof ids
    load_dofs: np.ndarray  # int64 dof ids
    load_values: np.ndarray  # float64 magnitudes
    gravity: Optional[GravitySpec] = None

    def fixed_mask(self, grid: StructuredGrid) -> np.ndarray:
        mask = np.zeros(grid.n_dofs, dtype=bool)
        mask[self.fixed_dofs] = True
        return mask

    def external_force(self, grid: StructuredGrid) -> np.ndarray:
        f = np.zeros(grid.n_dofs)
        np.add.at(f, self.load_dofs, self.load_values)
        return f


def make_boundary(
    grid: StructuredGrid,
    fixed_dofs,
    loads: Sequence[tuple[int, float]] = (),
    gravity: Optional[GravitySpec] = None,
) -> BoundarySpec:
    """Validate and normalize boundary data.

    Fixed dofs must lie in [0, n_dofs); a load on a fixed dof is rejected.
    """
    fixed = np.unique(np.asarray(fixed_dofs, dtype=np.int64))
    n = grid.n_dofs
    if fixed.size and (fixed[0] < 0 or fixed[-1] >= n):
        raise ValueError("fixed dof id outside [0, n_dofs)")
    if loads:
        ld = np.asarray([d for d, _ in loads], dtype=np.int64)
        lv = np.asarray([v for _, v in loads], dtype=np.float64)
    else:
        ld = np.zeros(0, dtype=np.int64)
        lv = np.zeros(0, dtype=np.float64)
    if ld.size and (ld.min() < 0 or ld.max() >= n):
        raise ValueError("load dof id outside [0, n_dofs)")
    if np.isin(ld, fixed).any():
        raise ValueError("load applied to a fixed dof")
    return BoundarySpec(fixed, ld, lv, gravity)
