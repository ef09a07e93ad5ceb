"""On-disk formats: binary field snapshots, CSV export, PGM heatmaps.

Snapshot layout: an 8-byte magic string, a little-endian u32 version and u32
node counts nx, ny, two f64 side lengths, then nx*ny*3 little-endian f64
values in C order (x index major, 3 components per node).  Reload is
bit-exact.
"""

from __future__ import annotations

import struct

import numpy as np

from .domain import make_grid
from .field import SphereField

MAGIC = b"SFLDSNAP"
VERSION = 1

_HEADER = struct.Struct("<8sIIIdd")


def write_snapshot(path, field: SphereField) -> None:
    g = field.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, g.nx, g.ny, g.lx, g.ly))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_snapshot(path) -> SphereField:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ValueError(f"truncated snapshot header in {path}")
        magic, version, nx, ny, lx, ly = _HEADER.unpack(header)
        if magic != MAGIC:
            raise ValueError(f"{path} is not a field snapshot (bad magic {magic!r})")
        if version != VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        data = fh.read()
    expected = nx * ny * 3 * 8
    if len(data) != expected:
        raise ValueError(f"snapshot payload has {len(data)} bytes, expected {expected}")
    values = np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(nx, ny, 3)
    return SphereField(make_grid(nx, ny, lx, ly), values)


def write_field_csv(path, field: SphereField) -> None:
    """Plain-text export: one node per line, x,y,ux,uy,uz."""
    g = field.grid
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("x,y,ux,uy,uz\n")
        for i in range(g.nx):
            x = i * g.hx
            for j in range(g.ny):
                u = [float(c) for c in field.values[i, j]]
                fh.write(f"{x!r},{j * g.hy!r},{u[0]!r},{u[1]!r},{u[2]!r}\n")


def write_density_pgm(path, density: np.ndarray, maxval: int = 255) -> None:
    """ASCII PGM (P2) heatmap of a non-negative scalar field, max-scaled.

    Rows run along the y index, columns along x; an all-zero field maps to
    all-black.
    """
    density = np.asarray(density, dtype=np.float64)
    if density.ndim != 2:
        raise ValueError("density must be a 2D array")
    top = float(density.max())
    if top > 0:
        img = np.rint(np.clip(density, 0.0, None) / top * maxval).astype(int)
    else:
        img = np.zeros(density.shape, dtype=int)
    nx, ny = density.shape
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"P2\n{nx} {ny}\n{maxval}\n")
        for j in range(ny):
            fh.write(" ".join(str(img[i, j]) for i in range(nx)) + "\n")
