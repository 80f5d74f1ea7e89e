"""Readers and writers for data grids, images and reports."""

from __future__ import annotations

import json
import math
import os
from pathlib import Path

import numpy as np

from dsar.errors import FormatError, TruncatedPayloadError
from dsar.forward import GRID_MODELS, DataGrid, ScenarioParams

MAGIC = b"DSAR1\n"
_CDTYPE = np.dtype("<c16")


def write_datagrid(grid: DataGrid, path) -> None:
    header = {
        "model": grid.model,
        "n_s": grid.n_s,
        "s0": grid.s0,
        "ds": grid.ds,
        "n_omega": grid.n_omega,
        "omega0_axis_start": grid.omega_start,
        "domega": grid.domega,
        "scenario": grid.params.to_dict(),
    }
    if grid.trajectory is not None:
        header["trajectory"] = grid.trajectory
    line = json.dumps(header, sort_keys=True).encode("utf-8") + b"\n"
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(line)
        fh.write(np.ascontiguousarray(grid.values, dtype=_CDTYPE).tobytes())


def read_datagrid(path) -> DataGrid:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(MAGIC):
        raise FormatError(f"{path}: bad magic bytes {blob[:6]!r}")
    end = blob.find(b"\n", len(MAGIC))
    if end < 0:
        raise FormatError(f"{path}: header line is not terminated")
    try:
        header = json.loads(blob[len(MAGIC):end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: malformed header: {exc}") from exc
    if not isinstance(header, dict):
        raise FormatError(f"{path}: header must be a JSON object")
    required = ("model", "n_s", "s0", "ds", "n_omega", "omega0_axis_start", "domega", "scenario")
    missing = [k for k in required if k not in header]
    if missing:
        raise FormatError(f"{path}: header lacks {', '.join(missing)}")
    try:
        n_s, n_w = int(header["n_s"]), int(header["n_omega"])
        if n_s < 1 or n_w < 1 or n_s != header["n_s"] or n_w != header["n_omega"]:
            raise ValueError("grid dimensions must be positive integers")
        if header["model"] not in GRID_MODELS:
            raise ValueError(f"unknown model tag {header['model']!r}")
        sc = header["scenario"]
        params = ScenarioParams(float(sc["omega0"]), float(sc["c0"]), float(sc["L"]))
    except (TypeError, ValueError, KeyError) as exc:
        raise FormatError(f"{path}: invalid header: {exc}") from exc
    payload = blob[end + 1:]
    need = n_s * n_w * _CDTYPE.itemsize
    if len(payload) < need:
        raise TruncatedPayloadError(
            f"{path}: payload has {len(payload)} bytes, header requires {need}"
        )
    if len(payload) > need:
        raise FormatError(f"{path}: {len(payload) - need} trailing bytes after payload")
    values = np.frombuffer(payload, dtype=_CDTYPE).reshape(n_s, n_w).astype(complex)
    try:
        return DataGrid(
            float(header["s0"]),
            float(header["ds"]),
            float(header["omega0_axis_start"]),
            float(header["domega"]),
            values,
            header["model"],
            params,
            header.get("trajectory"),
        )
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_datagrid_csv(grid: DataGrid, path) -> None:
    s, w = np.meshgrid(grid.s_axis, grid.omega_axis, indexing="ij")
    table = np.column_stack([s.ravel(), w.ravel(), grid.values.real.ravel(), grid.values.imag.ravel()])
    np.savetxt(path, table, delimiter=",", header="s,omega,re,im", comments="", fmt="%.17g")


def write_image_csv(img, path) -> None:
    x1, x2 = img.coordinates()
    v = img.values
    table = np.column_stack([x1.ravel(), x2.ravel(), v.real.ravel(), v.imag.ravel()])
    np.savetxt(path, table, delimiter=",", header="x1,x2,re,im", comments="", fmt="%.17g")


def write_pgm(magnitude, path) -> None:
    """16-bit binary PGM, max-normalised. Rows run along ``x2`` (top = largest)."""
    mag = np.abs(np.asarray(magnitude, dtype=float))
    peak = mag.max() if mag.size else 0.0
    scaled = np.zeros_like(mag) if peak == 0 else mag / peak
    pix = np.round(scaled * 65535).astype(">u2")
    pix = pix.T[::-1]  # image[i1, i2] -> raster rows of constant x2
    rows, cols = pix.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n65535\n".encode("ascii"))
        fh.write(pix.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        tokens.append(blob[start:pos])
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    cols, rows, maxval = (int(t) for t in tokens[1:])
    data = blob[pos + 1:]
    dtype = ">u2" if maxval > 255 else "u1"
    need = rows * cols * np.dtype(dtype).itemsize
    if len(data) < need:
        raise TruncatedPayloadError(f"{path}: PGM payload truncated")
    return np.frombuffer(data[:need], dtype=dtype).reshape(rows, cols)


def write_json(obj, path) -> None:
    """Pretty JSON; non-finite floats (e.g. a ratio of -inf dB) become ``null``."""
    text = json.dumps(_finite(obj), indent=2, sort_keys=True, allow_nan=False, default=_jsonable)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _finite(o):
    if isinstance(o, dict):
        return {k: _finite(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_finite(v) for v in o]
    if isinstance(o, np.ndarray):
        return _finite(o.tolist())
    if isinstance(o, (float, np.floating)) and not math.isfinite(o):
        return None
    return o


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, os.PathLike):
        return os.fspath(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")
