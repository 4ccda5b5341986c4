"""Flat binary snapshots for caching trajectories between runs.

Each record is a fixed header followed by the three physical component
arrays as little-endian float64 in C order::

    magic   4s   b"NSLT"
    version u2   1
    order   1s   b"<"  (byte order of everything that follows)
    pad     1x
    n       u4
    L       f8
    time    f8
    flow    16s  ASCII tag, NUL padded
    data    3*n^3 f8
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .evolution import Trajectory
from .spectral import Grid3, VectorField

MAGIC = b"NSLT"
VERSION = 1
_HEADER = struct.Struct("<4sHcxIdd16s")


class FormatError(ValueError):
    pass


def encode_snapshot(u: VectorField, t: float, flow: str) -> bytes:
    tag = flow.encode("ascii")
    if len(tag) > 16:
        raise FormatError("flow tag longer than 16 bytes")
    head = _HEADER.pack(MAGIC, VERSION, b"<", u.grid.n, u.grid.L, float(t), tag)
    return head + np.ascontiguousarray(u.physical, dtype="<f8").tobytes()


def write_trajectory(traj: Trajectory, path) -> None:
    path = Path(path)
    try:
        with path.open("wb") as fh:
            for t, u in zip(traj.times, traj.snapshots):
                fh.write(encode_snapshot(u, t, traj.flow))
    except OSError as exc:
        raise OSError(f"cannot write trajectory to {path}: {exc}") from exc


def read_trajectory(path) -> Trajectory:
    path = Path(path)
    blob = path.read_bytes()
    pos, times, snaps, flows = 0, [], [], set()
    grid = None
    while pos < len(blob):
        if len(blob) - pos < _HEADER.size:
            raise FormatError(f"{path}: truncated header at byte {pos}")
        magic, version, order, n, L, t, tag = _HEADER.unpack_from(blob, pos)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic at byte {pos}")
        if version != VERSION or order != b"<":
            raise FormatError(f"{path}: unsupported version {version} or byte order {order!r}")
        pos += _HEADER.size
        size = 3 * n**3 * 8
        if len(blob) - pos < size:
            raise FormatError(f"{path}: truncated data at byte {pos}")
        data = np.frombuffer(blob, dtype="<f8", count=3 * n**3, offset=pos).reshape(3, n, n, n)
        pos += size
        if grid is None:
            grid = Grid3(n, L)
        elif grid.n != n or grid.L != L:
            raise FormatError(f"{path}: records on different grids")
        times.append(t)
        snaps.append(VectorField(grid, data.astype(float)))
        flows.add(tag.rstrip(b"\0").decode("ascii"))
    if not times:
        raise FormatError(f"{path}: no records")
    if len(flows) != 1:
        raise FormatError(f"{path}: mixed flow tags {sorted(flows)}")
    return Trajectory(times, snaps, flows.pop())
