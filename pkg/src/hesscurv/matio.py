"""Matrix file format shared by every command.

A file is one JSON header line ``{"rows":R,"cols":C,"dtype":"f64"}`` followed
by the raw little-endian row-major payload. ``dtype`` may be ``"f32"`` when a
caller asks for a downcast on export; reading always returns float64.
"""

import json

import numpy as np

from .errors import ContractError, ShapeError

_DTYPES = {"f64": "<f8", "f32": "<f4"}


def write_matrix(path, a, dtype="f64"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ShapeError(f"can only store 2-D arrays, got shape {a.shape}")
    if dtype not in _DTYPES:
        raise ValueError(f"unknown dtype {dtype!r}")
    header = json.dumps({"rows": a.shape[0], "cols": a.shape[1], "dtype": dtype},
                        separators=(",", ":"))
    payload = np.ascontiguousarray(a, dtype=_DTYPES[dtype]).tobytes(order="C")
    with open(path, "wb") as f:
        f.write(header.encode("ascii") + b"\n")
        f.write(payload)


def read_matrix(path):
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("ascii"))
        payload = f.read()
    rows, cols = int(header["rows"]), int(header["cols"])
    dt = np.dtype(_DTYPES[header.get("dtype", "f64")])
    if len(payload) != rows * cols * dt.itemsize:
        raise ShapeError(
            f"{path}: header says {rows}x{cols} but payload has {len(payload)} bytes")
    a = np.frombuffer(payload, dtype=dt).astype(np.float64).reshape(rows, cols)
    if not np.all(np.isfinite(a)):
        raise ContractError(f"{path}: matrix contains NaN or Inf")
    return a


def read_vector(path):
    """Read an R x 1 (or 1 x C) matrix file as a flat vector."""
    a = read_matrix(path)
    if 1 not in a.shape:
        raise ShapeError(f"{path}: expected a column vector, got {a.shape}")
    return a.ravel()


def write_csv(path, a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    np.savetxt(path, a, delimiter=",", fmt="%.17g")
