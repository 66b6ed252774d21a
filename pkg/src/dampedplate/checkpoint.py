"""Binary checkpoints of an evolution's complete loop state.

Layout (all integers and floats little-endian)::

    magic     4 bytes  b"DPCK"
    version   uint16
    hlen      uint32   length of the JSON header
    header    hlen bytes, UTF-8 JSON: metadata, scalars, array table
    arrays    float64 blocks in header order
    digest    32 bytes SHA-256 of everything above
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .integrator import RunState

MAGIC = b"DPCK"
VERSION = 1
_SCALARS = ("t", "dt", "horizon", "stride", "out_index", "energy0", "energy", "rate", "theta_sq", "dissipation",
            "theta_integral", "steps", "rejections", "max_increase", "max_step_residual", "t0")


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointCorrupt(CheckpointError):
    pass


@dataclass
class Checkpoint:
    state: RunState
    meta: dict = field(default_factory=dict)


def _arrays(rs: RunState) -> dict[str, np.ndarray]:
    recs = rs.records
    shape = rs.u.shape
    return {
        "u": rs.u,
        "v": rs.v,
        "record_scalars": np.array([(r[0],) + tuple(r[3:]) for r in recs], dtype=float).reshape(len(recs), 8),
        "record_u": np.array([r[1] for r in recs], dtype=float).reshape((len(recs),) + shape),
        "record_v": np.array([r[2] for r in recs], dtype=float).reshape((len(recs),) + shape),
        "dt_history": np.asarray(rs.dt_history, dtype=float),
    }


def checkpoint_save(path: str | os.PathLike, state: RunState, meta: dict | None = None) -> Path:
    """Write ``state`` atomically; returns the path."""
    path = Path(path)
    arrays = _arrays(state)
    header = {
        "meta": meta or {},
        "scalars": {k: getattr(state, k) for k in _SCALARS},
        "arrays": [[name, list(a.shape)] for name, a in arrays.items()],
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    body = bytearray(MAGIC + struct.pack("<HI", VERSION, len(hbytes)) + hbytes)
    for a in arrays.values():
        body += np.ascontiguousarray(a, dtype="<f8").tobytes()
    body += hashlib.sha256(body).digest()
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(bytes(body))
    os.replace(tmp, path)
    return path


def checkpoint_load(path: str | os.PathLike) -> Checkpoint:
    data = Path(path).read_bytes()
    if len(data) < 10 + 32 or data[:4] != MAGIC:
        raise CheckpointCorrupt(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<HI", data, 4)
    if version != VERSION:
        raise CheckpointVersionError(f"{path}: checkpoint version {version} unsupported (expected {VERSION})")
    if hashlib.sha256(data[:-32]).digest() != data[-32:]:
        raise CheckpointCorrupt(f"{path}: content hash mismatch")
    try:
        header = json.loads(data[10:10 + hlen])
    except ValueError as exc:
        raise CheckpointCorrupt(f"{path}: unreadable header ({exc})") from None
    pos = 10 + hlen
    arrays = {}
    for name, shape in header["arrays"]:
        n = int(np.prod(shape)) if shape else 1
        arrays[name] = np.frombuffer(data, dtype="<f8", count=n, offset=pos).reshape(shape).astype(float)
        pos += 8 * n
    if pos != len(data) - 32:
        raise CheckpointCorrupt(f"{path}: array table does not match the payload size")
    sc = header["scalars"]
    recs = [
        (row[0], ru, rv, *row[1:])
        for row, ru, rv in zip(arrays["record_scalars"].tolist(), arrays["record_u"], arrays["record_v"])
    ]
    state = RunState(
        t=sc["t"], u=arrays["u"], v=arrays["v"], dt=sc["dt"], horizon=sc["horizon"], stride=sc["stride"],
        out_index=int(sc["out_index"]), energy0=sc["energy0"], energy=sc["energy"], rate=sc["rate"],
        theta_sq=sc["theta_sq"], dissipation=sc["dissipation"], theta_integral=sc["theta_integral"],
        steps=int(sc["steps"]), rejections=int(sc["rejections"]), max_increase=sc["max_increase"],
        max_step_residual=sc["max_step_residual"], records=recs, dt_history=arrays["dt_history"].tolist(),
        t0=sc["t0"],
    )
    return Checkpoint(state, header["meta"])
