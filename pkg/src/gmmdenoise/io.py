"""Dataset and mixture-parameter file formats.

Datasets are stored in a little-endian binary format: magic "MXS1", u32 n,
u32 d, then n*d float64 values row-major.  A CSV import (one sample per
line) is provided for interoperability.  Ground-truth or estimated mixture
parameters round-trip through a small JSON document.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .core import MixtureParams

_MAGIC = b"MXS1"
_HEADER = struct.Struct("<4sII")


def write_dataset(path, x: np.ndarray) -> None:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, d = x.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, n, d))
        fh.write(np.ascontiguousarray(x, dtype="<f8").tobytes())


def read_dataset(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, n, d = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
        payload = fh.read(8 * n * d)
    if len(payload) != 8 * n * d:
        raise ValueError(f"{path}: expected {n * d} float64 values, file is short")
    return np.frombuffer(payload, dtype="<f8").reshape(n, d).astype(float)


def read_csv_dataset(path) -> np.ndarray:
    x = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{path}: non-finite values in CSV dataset")
    return x


def write_mixture(path, params: MixtureParams) -> None:
    doc = {
        "k": params.k,
        "d": params.d,
        "symmetric_pair": params.symmetric_pair,
        "centers": params.centers.tolist(),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def read_mixture(path) -> MixtureParams:
    doc = json.loads(Path(path).read_text())
    return MixtureParams(
        k=int(doc["k"]),
        d=int(doc["d"]),
        centers=np.asarray(doc["centers"], dtype=float),
        symmetric_pair=bool(doc.get("symmetric_pair", False)),
    )
