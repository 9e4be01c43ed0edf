"""Binary model files and size accounting.

Dense file (``.cpkg``)::

    b"CPKG" | u32 version | u32 N_e | u32 N_r | u32 D
    A, B, C as row-major little-endian float32

Packed file (``.bcpk``)::

    b"BCPK" | u32 version | u32 N_e | u32 N_r | u32 D | u32 reserved (0) | f64 delta
    A, B, C as rows of ceil(D/64) little-endian uint64 words

All integers are little-endian. The reserved word keeps the packed payload
8-byte aligned so it can be memory-mapped as uint64.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from ._kernels import n_words
from .cp import DenseFactors, PackedFactors

DENSE_MAGIC = b"CPKG"
PACKED_MAGIC = b"BCPK"
VERSION = 1
_DENSE_HEADER = struct.Struct("<4sIIII")
_PACKED_HEADER = struct.Struct("<4sIIIIId")
DENSE_HEADER_BYTES = _DENSE_HEADER.size
PACKED_HEADER_BYTES = _PACKED_HEADER.size


class ModelFormatError(ValueError):
    pass


def _atomic_write(path: str | os.PathLike, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dense_bytes(factors: DenseFactors) -> bytes:
    if not factors.is_finite():
        raise ModelFormatError("refusing to save a model with non-finite entries")
    head = _DENSE_HEADER.pack(DENSE_MAGIC, VERSION, factors.n_entities, factors.n_relations, factors.dim)
    body = b"".join(np.ascontiguousarray(m, dtype="<f4").tobytes() for m in (factors.A, factors.B, factors.C))
    return head + body


def packed_bytes(packed: PackedFactors) -> bytes:
    if not packed.padding_clean():
        raise ModelFormatError("padding bits must be zero")
    head = _PACKED_HEADER.pack(
        PACKED_MAGIC, VERSION, packed.n_entities, packed.n_relations, packed.dim, 0, packed.delta
    )
    body = b"".join(np.ascontiguousarray(m, dtype="<u8").tobytes() for m in (packed.A, packed.B, packed.C))
    return head + body


def save_dense(factors: DenseFactors, path: str | os.PathLike) -> None:
    _atomic_write(path, dense_bytes(factors))


def save_packed(packed: PackedFactors, path: str | os.PathLike) -> None:
    _atomic_write(path, packed_bytes(packed))
    sidecar = alphas_path(path)
    if packed.alphas is not None:
        _atomic_write(sidecar, json.dumps({"alphas": list(packed.alphas)}).encode())
    elif sidecar.exists():
        sidecar.unlink()


def alphas_path(path: str | os.PathLike) -> Path:
    return Path(str(path) + ".alphas.json")


def dense_from_bytes(data: bytes) -> DenseFactors:
    if len(data) < DENSE_HEADER_BYTES:
        raise ModelFormatError("truncated header")
    magic, version, ne, nr, dim = _DENSE_HEADER.unpack_from(data)
    if magic != DENSE_MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}, expected {DENSE_MAGIC!r}")
    if version != VERSION:
        raise ModelFormatError(f"unsupported version {version}")
    if dim < 1:
        raise ModelFormatError("dimension must be >= 1")
    expected = 4 * dim * (2 * ne + 2 * nr)
    payload = len(data) - DENSE_HEADER_BYTES
    if payload != expected:
        raise ModelFormatError(f"payload is {payload} bytes, expected {expected}")
    flat = np.frombuffer(data, dtype="<f4", offset=DENSE_HEADER_BYTES).astype(np.float32)
    if not np.isfinite(flat).all():
        raise ModelFormatError("non-finite values in dense model")
    A = flat[: ne * dim].reshape(ne, dim)
    B = flat[ne * dim : 2 * ne * dim].reshape(ne, dim)
    C = flat[2 * ne * dim :].reshape(2 * nr, dim)
    return DenseFactors(A, B, C)


def packed_from_bytes(data: bytes, alphas=None) -> PackedFactors:
    if len(data) < PACKED_HEADER_BYTES:
        raise ModelFormatError("truncated header")
    magic, version, ne, nr, dim, reserved, delta = _PACKED_HEADER.unpack_from(data)
    if magic != PACKED_MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}, expected {PACKED_MAGIC!r}")
    if version != VERSION:
        raise ModelFormatError(f"unsupported version {version}")
    if reserved != 0:
        raise ModelFormatError("reserved header field must be zero")
    if dim < 1 or not (delta > 0 and np.isfinite(delta)):
        raise ModelFormatError("invalid dimension or delta")
    w = n_words(dim)
    expected = 8 * w * (2 * ne + 2 * nr)
    payload = len(data) - PACKED_HEADER_BYTES
    if payload != expected:
        raise ModelFormatError(f"payload is {payload} bytes, expected {expected}")
    words = np.frombuffer(data, dtype="<u8", offset=PACKED_HEADER_BYTES).astype(np.uint64)
    A = words[: ne * w].reshape(ne, w)
    B = words[ne * w : 2 * ne * w].reshape(ne, w)
    C = words[2 * ne * w :].reshape(2 * nr, w)
    packed = PackedFactors(A, B, C, delta=float(delta), dim=dim, alphas=alphas)
    if not packed.padding_clean():
        raise ModelFormatError("nonzero padding bits")
    return packed


def load_dense(path: str | os.PathLike) -> DenseFactors:
    return dense_from_bytes(Path(path).read_bytes())


def load_packed(path: str | os.PathLike) -> PackedFactors:
    alphas = None
    sidecar = alphas_path(path)
    if sidecar.exists():
        alphas = tuple(float(a) for a in json.loads(sidecar.read_text())["alphas"])
    return packed_from_bytes(Path(path).read_bytes(), alphas=alphas)


def load_model(path: str | os.PathLike) -> DenseFactors | PackedFactors:
    """Load either format, dispatching on the magic bytes."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == DENSE_MAGIC:
        return load_dense(path)
    if magic == PACKED_MAGIC:
        return load_packed(path)
    raise ModelFormatError(f"{path}: unrecognized magic {magic!r}")


def file_bytes(model: DenseFactors | PackedFactors) -> int:
    rows = 2 * model.n_entities + 2 * model.n_relations
    if isinstance(model, PackedFactors):
        return PACKED_HEADER_BYTES + 8 * n_words(model.dim) * rows
    return DENSE_HEADER_BYTES + 4 * model.dim * rows


def size_report(model: DenseFactors | PackedFactors) -> dict:
    """Storage per entity and per relation, and exact on-disk bytes.

    An entity owns one row of A and one of B; an original relation owns two
    rows of C (itself and its inverse). Dense models are reported with 32-bit
    floats (the at-rest format) and with 64-bit floats (the training
    precision).
    """
    d = model.dim
    report = {"kind": "packed" if isinstance(model, PackedFactors) else "dense", "dim": d}
    if isinstance(model, PackedFactors):
        w = n_words(d)
        report.update(
            bits_per_entity=2 * d,
            bits_per_relation_vector=d,
            bits_per_original_relation=2 * d,
            stored_bits_per_entity=2 * 64 * w,
            stored_bits_per_relation_vector=64 * w,
        )
    else:
        report.update(
            bits_per_entity=2 * 32 * d,
            bits_per_relation_vector=32 * d,
            bits_per_original_relation=2 * 32 * d,
            bits_per_entity_f64=2 * 64 * d,
            bits_per_relation_vector_f64=64 * d,
        )
    report["total_bytes"] = file_bytes(model)
    return report
