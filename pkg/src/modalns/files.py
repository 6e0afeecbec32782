"""Binary snapshots and CSV emitters.

Snapshot layout (little-endian): ``b"MNS1"``; u32 version, Nr, Nz, K; f64
Rmax, Lz, time; then per component (r, theta, z) and mode k the cos block
followed, for k >= 1, by the sin block, each ``Nr x Nz`` f64 in r-major
order; finally a u64 FNV-1a hash of the coefficient bytes.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .diagnostics import CSV_COLUMNS, DiagnosticsSeries
from .fields import ModalVectorField
from .grid import make_grid

MAGIC = b"MNS1"
VERSION = 1
_HEAD = struct.Struct("<4sIIIIddd")
_TAIL = struct.Struct("<Q")
SUMMARY_COLUMNS = ("eps", "norm", "slope", "r2", "pass")


class SnapshotError(ValueError):
    pass


@dataclass(frozen=True)
class Snapshot:
    u: ModalVectorField
    time: float


@njit(cache=True)
def _fnv1a(data):
    h = np.uint64(0xCBF29CE484222325)
    prime = np.uint64(0x100000001B3)
    for b in data:
        h = (h ^ np.uint64(b)) * prime
    return h


def fnv1a64(data: bytes) -> int:
    return int(_fnv1a(np.frombuffer(data, dtype=np.uint8)))


def _blocks(u: ModalVectorField) -> list[np.ndarray]:
    out = []
    for comp in range(3):
        for k in range(u.K + 1):
            out.append(u.cos[comp, k])
            if k >= 1:
                out.append(u.sin[comp, k])
    return out


def encode_snapshot(u: ModalVectorField, time: float) -> bytes:
    g = u.grid
    head = _HEAD.pack(MAGIC, VERSION, g.Nr, g.Nz, u.K, g.Rmax, g.Lz, float(time))
    payload = b"".join(np.ascontiguousarray(b, dtype="<f8").tobytes() for b in _blocks(u))
    return head + payload + _TAIL.pack(fnv1a64(payload))


def decode_snapshot(data: bytes) -> Snapshot:
    if len(data) < _HEAD.size + _TAIL.size:
        raise SnapshotError("file too short for a snapshot header")
    magic, version, nr, nz, K, rmax, lz, time = _HEAD.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    n_blocks = 3 * (2 * K + 1)
    expected = _HEAD.size + n_blocks * nr * nz * 8 + _TAIL.size
    if len(data) != expected:
        raise SnapshotError(f"dimension mismatch: header implies {expected} bytes, "
                            f"file has {len(data)}")
    payload = data[_HEAD.size:-_TAIL.size]
    (stored,) = _TAIL.unpack_from(data, len(data) - _TAIL.size)
    actual = fnv1a64(payload)
    if stored != actual:
        raise SnapshotError(f"checksum mismatch: stored {stored:#018x}, computed {actual:#018x}")
    grid = make_grid(nr, nz, rmax, lz)
    blocks = np.frombuffer(payload, dtype="<f8").astype(float).reshape(n_blocks, nr, nz)
    cos, sin = grid.zeros(3, K + 1), grid.zeros(3, K + 1)
    i = 0
    for comp in range(3):
        for k in range(K + 1):
            cos[comp, k] = blocks[i]
            i += 1
            if k >= 1:
                sin[comp, k] = blocks[i]
                i += 1
    return Snapshot(ModalVectorField(grid, cos, sin), time)


def write_snapshot(u: ModalVectorField, time: float, path) -> None:
    Path(path).write_bytes(encode_snapshot(u, time))


def read_snapshot(path) -> Snapshot:
    return decode_snapshot(Path(path).read_bytes())


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def write_series_csv(path, series: DiagnosticsSeries) -> None:
    write_rows(path, CSV_COLUMNS, series.rows())


def write_summary_csv(path, rows: Iterable[Sequence]) -> None:
    write_rows(path, SUMMARY_COLUMNS, rows)
