"""Byte-stable on-disk history format.

``AXH1`` magic, ``<I`` snapshot count, then per snapshot ``<d`` time followed
by five :meth:`Field2D.to_bytes` blobs: ur, utheta, u3, pi, evolved Gamma.
No timestamps or paths are stored, so identical runs give identical files.
"""
from __future__ import annotations

import struct

import numpy as np

from .grid import EVEN, ODD, Field2D, FlowState
from .quadrature import FlowHistory

MAGIC = b"AXH1"
_PARITIES = (ODD, ODD, EVEN, EVEN, EVEN)


def history_to_bytes(h: FlowHistory) -> bytes:
    gam = h.gamma_evolved or [s.gamma for s in h.snapshots]
    out = [MAGIC, struct.pack("<I", len(h.snapshots))]
    for s, g in zip(h.snapshots, gam):
        out.append(struct.pack("<d", s.t))
        for f in (s.ur, s.utheta, s.u3, s.pi, g):
            out.append(f.to_bytes())
    return b"".join(out)


def _blob_len(data: bytes, off: int) -> int:
    Nr, Nz = struct.unpack_from("<2d", data, off)
    return 40 + 8 * (int(Nr) + 1) * (int(Nz) + 1)


def history_from_bytes(data: bytes) -> FlowHistory:
    if data[:4] != MAGIC:
        raise ValueError("not a history file")
    (n,) = struct.unpack_from("<I", data, 4)
    off = 8
    snaps, gams = [], []
    for _ in range(n):
        (t,) = struct.unpack_from("<d", data, off)
        off += 8
        fs = []
        for par in _PARITIES:
            ln = _blob_len(data, off)
            fs.append(Field2D.from_bytes(data[off:off + ln], parity=par))
            off += ln
        snaps.append(FlowState(t, fs[0], fs[1], fs[2], fs[3]))
        gams.append(fs[4])
    if off != len(data):
        raise ValueError("trailing bytes in history file")
    return FlowHistory(snaps, gams)


def save_history(h: FlowHistory, path) -> None:
    with open(path, "wb") as fh:
        fh.write(history_to_bytes(h))


def load_history(path) -> FlowHistory:
    with open(path, "rb") as fh:
        return history_from_bytes(fh.read())


def max_abs(a) -> float:
    return float(np.max(np.abs(a))) if np.size(a) else 0.0
