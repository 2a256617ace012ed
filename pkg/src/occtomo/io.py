"""File formats: binary arrays, CSV, PGM previews, sparse text, key=value config."""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .operators import SparseOperator

__all__ = [
    "FormatError",
    "write_array",
    "read_array",
    "write_csv",
    "write_pgm",
    "write_lightcurve_csv",
    "read_lightcurve_csv",
    "write_sparse",
    "read_sparse",
    "read_config",
    "write_config",
]

MAGIC = b"OTAR1\n"


class FormatError(ValueError):
    """Malformed input file."""


def _as_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype="<f8")
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise ValueError(f"expected a 1-D or 2-D array, got {m.ndim}-D")
    return m


def write_array(path, m) -> None:
    """``OTAR1\\n``, ASCII ``rows cols\\n``, then little-endian float64 row-major."""
    m = _as_matrix(m)
    rows, cols = m.shape
    if rows == 0 or cols == 0:
        raise ValueError(f"refusing to write an empty {rows}x{cols} array")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(f"{rows} {cols}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(m).tobytes())


def read_array(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(MAGIC):
        raise FormatError(f"{path}: bad magic, not an OTAR1 array file")
    nl = raw.find(b"\n", len(MAGIC))
    if nl < 0:
        raise FormatError(f"{path}: missing dimension header")
    try:
        rows, cols = (int(t) for t in raw[len(MAGIC):nl].decode("ascii").split())
    except (ValueError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: malformed dimension header") from exc
    if rows <= 0 or cols <= 0:
        raise FormatError(f"{path}: invalid dimensions {rows}x{cols}")
    payload = raw[nl + 1:]
    if len(payload) != 8 * rows * cols:
        raise FormatError(f"{path}: expected {8 * rows * cols} payload bytes for {rows}x{cols}, found {len(payload)}")
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(float)


def write_csv(path, m) -> None:
    m = _as_matrix(m)
    with open(path, "w") as fh:
        for row in m:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def write_pgm(path, image) -> None:
    """8-bit plain (P2) PGM scaled so the image maximum maps to 255.

    Negative values map to 0; an image with no positive value is all 0.
    """
    img = _as_matrix(image)
    peak = float(img.max())
    if peak > 0:
        px = np.clip(np.rint(255.0 * np.clip(img, 0, None) / peak), 0, 255).astype(int)
    else:
        px = np.zeros(img.shape, dtype=int)
    rows, cols = px.shape
    with open(path, "w") as fh:
        fh.write(f"P2\n{cols} {rows}\n255\n")
        for row in px:
            fh.write(" ".join(str(v) for v in row) + "\n")


def write_lightcurve_csv(path, angles_deg, values) -> None:
    angles_deg = np.asarray(angles_deg, dtype=float).ravel()
    values = np.asarray(values, dtype=float).ravel()
    if angles_deg.shape != values.shape:
        raise ValueError("angles and values differ in length")
    with open(path, "w") as fh:
        for a, v in zip(angles_deg, values):
            fh.write(f"{a:.17g},{v:.17g}\n")


def read_lightcurve_csv(path) -> tuple[np.ndarray, np.ndarray]:
    angles, values = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                a, v = line.split(",")
                angles.append(float(a))
                values.append(float(v))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: expected 'angle_deg,value'") from exc
    if not values:
        raise FormatError(f"{path}: empty lightcurve")
    return np.array(angles), np.array(values)


def write_sparse(path, op: SparseOperator) -> None:
    """Header ``rows cols nnz`` then one ``row col value`` per line."""
    with open(path, "w") as fh:
        fh.write(f"{op.n_rows} {op.n_cols} {op.nnz}\n")
        for r, c, v in zip(op.rows, op.cols, op.values):
            fh.write(f"{r} {c} {v:.17g}\n")


def read_sparse(path) -> SparseOperator:
    with open(path) as fh:
        lines = fh.read().split("\n")
    try:
        n_rows, n_cols, nnz = (int(t) for t in lines[0].split())
        body = [ln.split() for ln in lines[1:] if ln.strip()]
        if len(body) != nnz or any(len(t) != 3 for t in body):
            raise ValueError
        rows = np.array([int(t[0]) for t in body], dtype=np.int64)
        cols = np.array([int(t[1]) for t in body], dtype=np.int64)
        vals = np.array([float(t[2]) for t in body])
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: malformed sparse coordinate file") from exc
    try:
        return SparseOperator(n_rows, n_cols, rows, cols, vals)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def read_config(path) -> dict[str, str]:
    """Flat ``key=value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected key=value")
            key, value = (t.strip() for t in line.split("=", 1))
            if not key:
                raise FormatError(f"{path}:{lineno}: empty key")
            out[key] = value
    return out


def write_config(path, values: dict) -> None:
    with open(path, "w") as fh:
        for key in sorted(values):
            fh.write(f"{key}={values[key]}\n")


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
