"""File formats: VTI voxel export, binary checkpoints, CSV iteration logs."""

from __future__ import annotations

import base64
import csv
import struct
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path
import numpy as np

from ..errors import ConfigError
from ..grid import StructuredGrid
from ..optimize import RunRecord

__all__ = [
    "export_vti",
    "read_vti",
    "checkpoint_save",
    "checkpoint_load",
    "Checkpoint",
    "CSV_HEADER",
    "HistoryWriter",
]

CSV_HEADER = "iter,compliance,volume,change,cg_iters,cg_residual,wall_s,aux_scalars"

_CKPT_MAGIC = b"TPF1"
_CKPT_VERSION = 1


def export_vti(
    rho: np.ndarray, grid: StructuredGrid, path, binary: bool = True
) -> None:
    """Write densities as a cell-centered float32 scalar field (XML ImageData).

    Binary mode stores the inline base64 payload with a little-endian uint32
    byte-count header; ascii mode writes plain numbers. Cell ordering is x
    fastest, matching the element numbering.
    """
    path = Path(path)
    values = np.asarray(rho, dtype=np.float32)
    if values.shape != (grid.n_elements,):
        raise ValueError(f"expected {grid.n_elements} cell values")
    nx, ny, nz = grid.nelx, grid.nely, grid.nelz
    extent = f"0 {nx} 0 {ny} 0 {nz}"
    h = grid.h
    if binary:
        raw = values.astype("<f4").tobytes()
        payload = base64.b64encode(struct.pack("<I", len(raw)) + raw).decode("ascii")
        fmt = "binary"
    else:
        payload = " ".join(repr(float(v)) for v in values)
        fmt = "ascii"
    doc = f"""<?xml version="1.0"?>
<VTKFile type="ImageData" version="1.0" byte_order="LittleEndian" header_type="UInt32">
  <ImageData WholeExtent="{extent}" Origin="0 0 0" Spacing="{h!r} {h!r} {h!r}">
    <Piece Extent="{extent}">
      <CellData Scalars="density">
        <DataArray type="Float32" Name="density" NumberOfComponents="1" format="{fmt}">
          {payload}
        </DataArray>
      </CellData>
    </Piece>
  </ImageData>
</VTKFile>
"""
    try:
        path.write_text(doc)
    except OSError as exc:
        raise OSError(f"failed writing VTI file {path}: {exc}") from exc


def read_vti(path) -> tuple[np.ndarray, tuple[int, int, int], float]:
    """Parse a file written by export_vti: (values, (nelx, nely, nelz), spacing)."""
    tree = ET.parse(path)
    root = tree.getroot()
    image = root.find("ImageData")
    ext = [int(t) for t in image.attrib["WholeExtent"].split()]
    dims = (ext[1] - ext[0], ext[3] - ext[2], ext[5] - ext[4])
    spacing = float(image.attrib["Spacing"].split()[0])
    arr = image.find("Piece").find("CellData").find("DataArray")
    text = arr.text.strip()
    if arr.attrib["format"] == "binary":
        raw = base64.b64decode(text)
        (nbytes,) = struct.unpack("<I", raw[:4])
        values = np.frombuffer(raw[4 : 4 + nbytes], dtype="<f4")
    else:
        values = np.array([float(t) for t in text.split()], dtype=np.float32)
    return values, dims, spacing


@dataclass
class Checkpoint:
    nelx: int
    nely: int
    nelz: int
    iteration: int
    densities: np.ndarray
    displacement: np.ndarray


def checkpoint_save(
    path, grid: StructuredGrid, iteration: int, rho: np.ndarray, u: np.ndarray
) -> None:
    """Binary state dump: magic, version, dims, iteration, rho, displacement."""
    rho = np.asarray(rho, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if rho.shape != (grid.n_elements,) or u.shape != (grid.n_dofs,):
        raise ValueError("checkpoint arrays do not match the grid")
    head = _CKPT_MAGIC + struct.pack(
        "<IIIII", _CKPT_VERSION, grid.nelx, grid.nely, grid.nelz, iteration
    )
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(rho.astype("<f8").tobytes())
        fh.write(u.astype("<f8").tobytes())


def checkpoint_load(path, expect_grid: StructuredGrid | None = None) -> Checkpoint:
    """Read and validate a checkpoint; refuses partial or mismatched files."""
    data = Path(path).read_bytes()
    if len(data) < 24:
        raise ConfigError(f"checkpoint {path} is truncated (no header)")
    if data[:4] != _CKPT_MAGIC:
        raise ConfigError(f"checkpoint {path} has wrong magic {data[:4]!r}")
    version, nelx, nely, nelz, iteration = struct.unpack("<IIIII", data[4:24])
    if version != _CKPT_VERSION:
        raise ConfigError(f"checkpoint {path} has unsupported version {version}")
    nel = nelx * nely * nelz
    n = 3 * (nelx + 1) * (nely + 1) * (nelz + 1)
    expected = 24 + 8 * (nel + n)
    if len(data) != expected:
        raise ConfigError(
            f"checkpoint {path} has {len(data)} bytes, expected {expected}"
        )
    if expect_grid is not None and (nelx, nely, nelz) != (
        expect_grid.nelx,
        expect_grid.nely,
        expect_grid.nelz,
    ):
        raise ConfigError(
            f"checkpoint {path} was written for {nelx}x{nely}x{nelz}, the active "
            f"configuration is {expect_grid.nelx}x{expect_grid.nely}x{expect_grid.nelz}"
        )
    rho = np.frombuffer(data, dtype="<f8", count=nel, offset=24).copy()
    u = np.frombuffer(data, dtype="<f8", count=n, offset=24 + 8 * nel).copy()
    return Checkpoint(nelx, nely, nelz, iteration, rho, u)


class HistoryWriter:
    """Appends one CSV row per design iteration, flushed immediately."""

    def __init__(self, path, append: bool = False):
        self.path = Path(path)
        mode = "a" if append and self.path.exists() else "w"
        self._fh = open(self.path, mode, newline="")
        self._writer = csv.writer(self._fh)
        if mode == "w":
            self._writer.writerow(CSV_HEADER.split(","))
            self._fh.flush()

    def write(self, rec: RunRecord) -> None:
        self._writer.writerow(
            [
                rec.iteration,
                repr(rec.compliance),
                repr(rec.volume),
                repr(rec.change),
                rec.cg_iters,
                repr(rec.cg_residual),
                f"{rec.wall_s:.6f}",
                rec.aux_scalars,
            ]
        )
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
