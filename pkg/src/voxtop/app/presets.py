"""Benchmark problem presets.

Each preset fixes a physical domain, boundary conditions, passive regions
and a volume fraction; the discretization can be rescaled as long as the
elements stay cubic. Distributed loads are lumped consistently to nodes with
half weights on edge nodes and quarter weights on corner nodes of the loaded
face.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..element import MaterialModel
from ..errors import ConfigError
from ..grid import (
    BoundarySpec,
    Box,
    GravitySpec,
    Region,
    RegionMask,
    StructuredGrid,
    build_grid,
    classify_regions,
    make_boundary,
)
from ..optimize import Problem

__all__ = ["PresetDef", "PRESETS", "instantiate", "parse_resolution"]


def parse_resolution(text: str) -> tuple[int, int, int]:
    parts = text.lower().replace("x", " ").split()
    if len(parts) != 3:
        raise ConfigError(f"resolution must look like 64x32x32, got {text!r}")
    try:
        nx, ny, nz = (int(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"resolution must be three integers, got {text!r}") from exc
    if min(nx, ny, nz) < 1:
        raise ConfigError("resolution components must be positive")
    return nx, ny, nz


def _axis_weights(n_nodes: int) -> np.ndarray:
    w = np.ones(n_nodes)
    w[0] = 0.5
    w[-1] = 0.5
    return w


def _face_node_ids(grid: StructuredGrid, axis: int, side: int):
    """Node ids of a domain face plus their consistent lumping weights."""
    shape = (grid.nelx + 1, grid.nely + 1, grid.nelz + 1)
    idx = [np.arange(s) for s in shape]
    idx[axis] = np.array([0 if side == 0 else shape[axis] - 1])
    ii, jj, kk = np.meshgrid(*idx, indexing="ij")
    nodes = grid.node_id(ii.ravel(), jj.ravel(), kk.ravel())
    in_plane = [ax for ax in range(3) if ax != axis]
    w = (
        _axis_weights(shape[in_plane[0]])[:, None]
        * _axis_weights(shape[in_plane[1]])[None, :]
    )
    coords = {0: ii, 1: jj, 2: kk}
    return nodes, w.ravel(), {ax: coords[ax].ravel() for ax in range(3)}


def _face_pressure_loads(
    grid: StructuredGrid,
    axis: int,
    side: int,
    load_axis: int,
    magnitude: float,
    profile: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    skip_nodes: Optional[set] = None,
):
    """Uniform (or height-profiled) pressure on a face, lumped to nodes."""
    nodes, w, coords = _face_node_ids(grid, axis, side)
    vals = magnitude * grid.h**2 * w
    if profile is not None:
        vals = vals * profile(coords[2] * grid.h)
    loads = []
    for node, v in zip(nodes, vals):
        if skip_nodes and node in skip_nodes:
            continue
        loads.append((3 * int(node) + load_axis, float(v)))
    return loads


def _line_load_y(
    grid: StructuredGrid, i: int, k: int, load_axis: int, per_length: float
):
    """Line load along the y axis at fixed (i, k) node column."""
    loads = []
    w = _axis_weights(grid.nely + 1)
    for j in range(grid.nely + 1):
        node = grid.node_id(i, j, k)
        loads.append((3 * node + load_axis, float(per_length * grid.h * w[j])))
    return loads


def _fix_all(grid: StructuredGrid, nodes) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=np.int64).ravel()
    return (3 * nodes[:, None] + np.arange(3)[None, :]).ravel()


def _face_nodes_plain(grid: StructuredGrid, axis: int, side: int) -> np.ndarray:
    nodes, _, _ = _face_node_ids(grid, axis, side)
    return nodes


@dataclass(frozen=True)
class PresetDef:
    name: str
    domain: tuple[float, float, float]
    default_resolution: tuple[int, int, int]
    volfrac: float
    description: str
    build: Callable[[StructuredGrid, str], tuple[BoundarySpec, RegionMask, MaterialModel]]


def _build_cantilever(grid: StructuredGrid, profile: str):
    fixed = _fix_all(grid, _face_nodes_plain(grid, 0, 0))
    loads = _line_load_y(grid, grid.nelx, 0, 2, -1.0)
    boundary = make_boundary(grid, fixed, loads)
    regions = classify_regions(grid, [])
    return boundary, regions, MaterialModel()


def _bottom_corner_nodes(grid: StructuredGrid) -> list:
    return [
        grid.node_id(0, 0, 0),
        grid.node_id(grid.nelx, 0, 0),
        grid.node_id(0, grid.nely, 0),
        grid.node_id(grid.nelx, grid.nely, 0),
    ]


def _build_arch_bridge_140(grid: StructuredGrid, profile: str):
    Lx, Ly, Lz = grid.domain
    fixed = _fix_all(grid, _bottom_corner_nodes(grid))
    loads = _face_pressure_loads(grid, 2, 1, 2, -100.0)
    boundary = make_boundary(grid, fixed, loads)
    deck = Box((0.0, 0.0, Lz - 1.5), (Lx, Ly, Lz))
    joint = Box((Lx / 2 - 0.5, 0.0, 0.0), (Lx / 2 + 0.5, Ly, Lz - 1.5))
    regions = classify_regions(
        grid, [(deck, Region.PASSIVE_SOLID), (joint, Region.PASSIVE_VOID)]
    )
    return boundary, regions, MaterialModel()


def _build_arch_bridge_40(grid: StructuredGrid, profile: str):
    # Deck at mid height, vehicle passage above it; the deck thickness is
    # snapped to element boundaries of the default discretization.
    Lx, Ly, Lz = grid.domain
    deck_lo, deck_hi = 10.0, 10.625
    fixed = _fix_all(grid, _bottom_corner_nodes(grid))
    k_deck_top = int(round(deck_hi / grid.h))
    wx = _axis_weights(grid.nelx + 1)
    wy = _axis_weights(grid.nely + 1)
    loads = []
    for i in range(grid.nelx + 1):
        for j in range(grid.nely + 1):
            val = -100.0 * grid.h**2 * wx[i] * wy[j]
            loads.append((3 * grid.node_id(i, j, k_deck_top) + 2, val))
    boundary = make_boundary(grid, fixed, loads)
    deck = Box((0.0, 0.0, deck_lo), (Lx, Ly, deck_hi))
    passage = Box((0.0, 0.6, deck_hi), (Lx, Ly - 0.6, Lz))
    regions = classify_regions(
        grid, [(deck, Region.PASSIVE_SOLID), (passage, Region.PASSIVE_VOID)]
    )
    return boundary, regions, MaterialModel()


def _build_highrise(grid: StructuredGrid, profile: str):
    Lx, Ly, Lz = grid.domain
    fixed_nodes = _face_nodes_plain(grid, 2, 0)
    fixed = _fix_all(grid, fixed_nodes)
    fixed_set = set(int(n) for n in fixed_nodes)
    if profile == "parabolic":
        shape = lambda z: (z / Lz) ** 2
    else:
        shape = lambda z: np.ones_like(z)
    loads = _face_pressure_loads(
        grid, 0, 0, 0, 1.0, profile=shape, skip_nodes=fixed_set
    )
    boundary = make_boundary(grid, fixed, loads)
    core = Box((Lx / 4, Ly / 4, 0.0), (3 * Lx / 4, 3 * Ly / 4, Lz))
    regions = classify_regions(grid, [(core, Region.PASSIVE_VOID)])
    # hollow core with a slightly stiffer void floor for numerical stability
    return boundary, regions, MaterialModel(kmin_frac=1e-6)


def _build_footbridge(grid: StructuredGrid, profile: str):
    Lx, Ly, Lz = grid.domain
    end_nodes = [
        grid.node_id(i, j, 0)
        for i in (0, grid.nelx)
        for j in range(grid.nely + 1)
    ]
    fixed = _fix_all(grid, end_nodes)
    boundary = make_boundary(
        grid, fixed, (), gravity=GravitySpec(axis=2, g=1.0, unit_weight=1.0)
    )
    deck = Box((0.0, 0.0, 25.0), (Lx, Ly, 26.25))
    above = Box((0.0, 0.0, 26.25), (Lx, Ly, Lz))
    regions = classify_regions(
        grid, [(deck, Region.PASSIVE_SOLID), (above, Region.PASSIVE_VOID)]
    )
    return boundary, regions, MaterialModel()


PRESETS = {
    p.name: p
    for p in [
        PresetDef(
            "cantilever",
            (64.0, 32.0, 32.0),
            (64, 32, 32),
            0.12,
            "end-loaded cantilever fixed on its x = 0 face",
            _build_cantilever,
        ),
        PresetDef(
            "arch-bridge-140",
            (140.0, 10.0, 20.0),
            (448, 32, 64),
            0.14,
            "140 m span bridge: passive deck on top, four corner supports",
            _build_arch_bridge_140,
        ),
        PresetDef(
            "arch-bridge-40",
            (40.0, 10.0, 20.625),
            (256, 64, 132),
            0.14,
            "40 m span bridge with a mid-height deck and passage above",
            _build_arch_bridge_40,
        ),
        PresetDef(
            "highrise",
            (64.0, 64.0, 256.0),
            (64, 64, 256),
            0.12,
            "laterally loaded tower with a hollow core, fixed base",
            _build_highrise,
        ),
        PresetDef(
            "footbridge",
            (180.0, 10.0, 40.0),
            (144, 8, 32),
            0.125,
            "gravity-loaded footbridge deck supported from below",
            _build_footbridge,
        ),
    ]
}


def instantiate(
    name: str,
    resolution: Optional[tuple[int, int, int]] = None,
    profile: str = "uniform",
) -> tuple[Problem, PresetDef]:
    """Build a Problem from a preset at the requested resolution.

    The resolution must keep elements cubic with respect to the preset's
    physical domain.
    """
    if name not in PRESETS:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        )
    preset = PRESETS[name]
    res = resolution or preset.default_resolution
    hs = [L / n for L, n in zip(preset.domain, res)]
    h = hs[0]
    if any(abs(hh - h) > 1e-9 * h for hh in hs):
        raise ConfigError(
            f"resolution {res} does not keep elements cubic for domain "
            f"{preset.domain} (edge lengths {hs})"
        )
    grid = build_grid(*res, h)
    boundary, regions, model = preset.build(grid, profile)
    return Problem(grid, boundary, regions, model), preset
