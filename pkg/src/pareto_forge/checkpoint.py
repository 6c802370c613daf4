"""Binary checkpoint format.

Byte layout (all integers little-endian)::

    offset 0   8 bytes   magic  b"PFCKPT\\x00\\x01"
    offset 8   8 bytes   uint64 header length H (bytes of UTF-8 JSON)
    offset 16  H bytes   JSON header, keys sorted, no whitespace
    ...        P bytes   zero padding so the parameter block starts at a
                         multiple of 8
    ...        8*N bytes float64 parameters, little-endian, in layout order

The header holds ``format_version``, the architecture ``spec``, the parameter
``layout`` (name, shape, offset, role, task, growl flag), ``n_params`` and
free-form ``metrics`` and ``extra`` records. Any reader that understands JSON
and IEEE doubles can recover every tensor.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import DomainError
from .net import MTLSpec, MultiTaskNet, ParamInfo, ParamStore

MAGIC = b"PFCKPT\x00\x01"
FORMAT_VERSION = 1


def dumps_json(obj):
    """Canonical JSON used for every artifact (sorted keys, compact)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def to_bytes(spec: MTLSpec, params: ParamStore, metrics=None, extra=None):
    header = {
        "format_version": FORMAT_VERSION,
        "spec": spec.to_json(),
        "layout": [p.to_json() for p in params.infos],
        "n_params": len(params),
        "metrics": metrics or {},
        "extra": extra or {},
    }
    blob = dumps_json(header).encode("utf-8")
    pad = (-(16 + len(blob))) % 8
    body = np.ascontiguousarray(params.flat, dtype="<f8").tobytes()
    return MAGIC + struct.pack("<Q", len(blob)) + blob + b"\x00" * pad + body


def from_bytes(data: bytes):
    """Parse a checkpoint; returns ``(spec, params, header)``."""
    if len(data) < 16 or data[:8] != MAGIC:
        raise DomainError("not a checkpoint file (bad magic)")
    (hlen,) = struct.unpack("<Q", data[8:16])
    if 16 + hlen > len(data):
        raise DomainError("truncated checkpoint header")
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DomainError(f"malformed checkpoint header: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise DomainError(f"unsupported checkpoint version {header.get('format_version')}")
    start = 16 + hlen + (-(16 + hlen)) % 8
    n = int(header["n_params"])
    if len(data) != start + 8 * n:
        raise DomainError(f"parameter block has {len(data) - start} bytes, expected {8 * n}")
    flat = np.frombuffer(data, dtype="<f8", count=n, offset=start).astype(np.float64)
    spec = MTLSpec.from_json(header["spec"])
    infos = [ParamInfo.from_json(d) for d in header["layout"]]
    expected = MultiTaskNet(spec).infos
    if infos != expected:
        raise DomainError("checkpoint layout does not match its architecture spec")
    return spec, ParamStore(infos, flat), header


def save_checkpoint(path, spec, params, metrics=None, extra=None):
    data = to_bytes(spec, params, metrics, extra)
    with open(path, "wb") as fh:
        fh.write(data)
    return path


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
