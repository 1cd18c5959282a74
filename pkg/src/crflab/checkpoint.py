"""Binary checkpoint format for trajectories and scalar field series.

Layout (all little-endian):

  file header:
    magic       8 bytes   b"CRFCKPT1"
    version     uint32    currently 1
    kind        uint8     1 = metric+pressure records, 2 = scalar records
    m           uint32    curvature index m (n = m+1)
    dim         uint32    grid dimension n
    resolution  dim * uint32
    period      dim * float64

  record, repeated (fixed size, so the count follows from the file size):
    t           float64
    dt          float64
    dim         uint32    grid echo, validated on read
    resolution  dim * uint32
    period      dim * float64
    payload     float64 node-major data:
                  kind 1: packed metric components (component-minor), then p
                  kind 2: one scalar field

Readers may memory-map the payload region, which is how large
trajectories are streamed through the backward heat solve without
holding every state in RAM.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import GridMismatchError
from .grid import GridSpec

__all__ = ["CheckpointWriter", "CheckpointReader", "KIND_METRIC_PRESSURE", "KIND_SCALAR"]

MAGIC = b"CRFCKPT1"
VERSION = 1
KIND_METRIC_PRESSURE = 1
KIND_SCALAR = 2


def _grid_bytes(grid: GridSpec) -> bytes:
    return (struct.pack("<I", grid.dim)
            + struct.pack(f"<{grid.dim}I", *grid.resolution)
            + struct.pack(f"<{grid.dim}d", *grid.period))


def _read_grid(buf: bytes, off: int) -> tuple[GridSpec, int]:
    (dim,) = struct.unpack_from("<I", buf, off)
    off += 4
    res = struct.unpack_from(f"<{dim}I", buf, off)
    off += 4 * dim
    per = struct.unpack_from(f"<{dim}d", buf, off)
    off += 8 * dim
    return GridSpec(dim, res, per), off


def _payload_doubles(grid: GridSpec, kind: int) -> int:
    nn = grid.num_nodes
    if kind == KIND_METRIC_PRESSURE:
        ncomp = grid.dim * (grid.dim + 1) // 2
        return nn * (ncomp + 1)
    return nn


class CheckpointWriter:
    """Appends fixed-size records to a checkpoint file."""

    def __init__(self, path, grid: GridSpec, m: int,
                 kind: int = KIND_METRIC_PRESSURE):
        self.path = Path(path)
        self.grid = grid
        self.m = int(m)
        self.kind = kind
        self.count = 0
        self._fh = open(self.path, "wb")
        self._fh.write(MAGIC)
        self._fh.write(struct.pack("<IBI", VERSION, kind, self.m))
        self._fh.write(_grid_bytes(grid))

    def append_state(self, t: float, dt: float, metric_comps: np.ndarray,
                     p: np.ndarray) -> None:
        assert self.kind == KIND_METRIC_PRESSURE
        self._fh.write(struct.pack("<dd", float(t), float(dt)))
        self._fh.write(_grid_bytes(self.grid))
        self._fh.write(np.ascontiguousarray(metric_comps, dtype="<f8").tobytes())
        self._fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())
        self.count += 1

    def append_scalar(self, t: float, dt: float, values: np.ndarray) -> None:
        assert self.kind == KIND_SCALAR
        self._fh.write(struct.pack("<dd", float(t), float(dt)))
        self._fh.write(_grid_bytes(self.grid))
        self._fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())
        self.count += 1

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class CheckpointReader:
    """Random access to checkpoint records through a memory map."""

    def __init__(self, path):
        self.path = Path(path)
        raw = open(self.path, "rb")
        head = raw.read(len(MAGIC) + 9)
        if head[:len(MAGIC)] != MAGIC:
            raise ValueError(f"{self.path}: not a crflab checkpoint (bad magic)")
        version, kind, m = struct.unpack_from("<IBI", head, len(MAGIC))
        if version != VERSION:
            raise ValueError(f"{self.path}: unsupported checkpoint version {version}")
        self.kind = kind
        self.m = m
        rest = raw.read(4)
        (dim,) = struct.unpack("<I", rest)
        body = raw.read(4 * dim + 8 * dim)
        res = struct.unpack_from(f"<{dim}I", body, 0)
        per = struct.unpack_from(f"<{dim}d", body, 4 * dim)
        self.grid = GridSpec(dim, res, per)
        raw.close()

        self._header_size = len(MAGIC) + 9 + 4 + 4 * dim + 8 * dim
        self._rec_head = 16 + 4 + 4 * dim + 8 * dim
        self._payload = _payload_doubles(self.grid, kind)
        self._rec_size = self._rec_head + 8 * self._payload
        total = self.path.stat().st_size - self._header_size
        if total % self._rec_size != 0:
            raise ValueError(f"{self.path}: truncated checkpoint file")
        self.count = total // self._rec_size
        self._mm = np.memmap(self.path, dtype=np.uint8, mode="r")

    def record_meta(self, i: int) -> tuple[float, float]:
        off = self._offset(i)
        t, dt = struct.unpack_from("<dd", self._mm, off)
        grid, _ = _read_grid(self._mm, off + 16)
        if grid != self.grid:
            raise GridMismatchError(f"record {i} grid differs from file header")
        return t, dt

    def _offset(self, i: int) -> int:
        if not (0 <= i < self.count):
            raise IndexError(f"record {i} out of range ({self.count} records)")
        return self._header_size + i * self._rec_size

    def _payload_array(self, i: int) -> np.ndarray:
        off = self._offset(i) + self._rec_head
        arr = np.frombuffer(self._mm, dtype="<f8", count=self._payload, offset=off)
        return arr

    def read_state(self, i: int) -> tuple[float, float, np.ndarray, np.ndarray]:
        """Returns (t, dt, metric comps, p) for record i (kind 1)."""
        assert self.kind == KIND_METRIC_PRESSURE
        t, dt = self.record_meta(i)
        arr = self._payload_array(i)
        nn = self.grid.num_nodes
        ncomp = self.grid.dim * (self.grid.dim + 1) // 2
        comps = arr[:nn * ncomp].reshape(self.grid.shape + (ncomp,))
        p = arr[nn * ncomp:].reshape(self.grid.shape)
        return t, dt, comps, p

    def read_scalar(self, i: int) -> tuple[float, float, np.ndarray]:
        assert self.kind == KIND_SCALAR
        t, dt = self.record_meta(i)
        return t, dt, self._payload_array(i).reshape(self.grid.shape)
