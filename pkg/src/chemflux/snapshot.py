"""CFSNAP1 field snapshots and checkpoint bundles.

A snapshot is one ASCII header line::

    CFSNAP1 <dim> <m_1> ... <m_dim> <L_1> ... <L_dim> <kind>

followed by the samples as little-endian float64 in C order over the
``(x, y[, z])`` index (last axis fastest).  ``kind`` is ``cell`` or
``facex``/``facey``/``facez``; face kinds carry one extra sample along
their own axis.

A checkpoint is a directory holding ``meta.json`` plus one snapshot per
field (``n``, ``c``, ``P``, ``u0``, ``u1``[, ``u2``]).
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .grid import GridSpec, make_grid

MAGIC = "CFSNAP1"
FACE_KINDS = ("facex", "facey", "facez")
CHECKPOINT_VERSION = 1


class SnapshotFormatError(ValueError):
    pass


def _shape_for(grid: GridSpec, kind: str) -> tuple[int, ...]:
    if kind == "cell":
        return grid.shape
    if kind in FACE_KINDS[: grid.dim]:
        return grid.face_shape(FACE_KINDS.index(kind))
    raise SnapshotFormatError(f"field kind {kind!r} invalid for a {grid.dim}D grid")


def encode_snapshot(grid: GridSpec, values: np.ndarray, kind: str) -> bytes:
    shape = _shape_for(grid, kind)
    values = np.asarray(values, dtype=float)
    if values.shape != shape:
        raise SnapshotFormatError(f"{kind} field has shape {values.shape}, expected {shape}")
    header = " ".join(
        [MAGIC, str(grid.dim)] + [str(m) for m in grid.cells] + [repr(float(L)) for L in grid.extents] + [kind]
    )
    return header.encode("ascii") + b"\n" + np.ascontiguousarray(values, dtype="<f8").tobytes()


def decode_snapshot(data: bytes) -> tuple[GridSpec, np.ndarray, str]:
    nl = data.find(b"\n")
    if nl < 0:
        raise SnapshotFormatError("missing header line")
    try:
        tokens = data[:nl].decode("ascii").split()
    except UnicodeDecodeError as exc:
        raise SnapshotFormatError("header is not ASCII") from exc
    if not tokens or tokens[0] != MAGIC:
        raise SnapshotFormatError(f"bad magic {tokens[:1]!r}, expected {MAGIC}")
    try:
        dim = int(tokens[1])
        if len(tokens) != 3 + 2 * dim:
            raise SnapshotFormatError(f"header has {len(tokens)} tokens, expected {3 + 2 * dim}")
        cells = [int(v) for v in tokens[2 : 2 + dim]]
        extents = [float(v) for v in tokens[2 + dim : 2 + 2 * dim]]
        kind = tokens[2 + 2 * dim]
        grid = make_grid(dim, extents, cells)
    except (IndexError, ValueError) as exc:
        if isinstance(exc, SnapshotFormatError):
            raise
        raise SnapshotFormatError(f"malformed header: {exc}") from exc
    shape = _shape_for(grid, kind)
    payload = data[nl + 1 :]
    expected = 8 * int(np.prod(shape))
    if len(payload) != expected:
        raise SnapshotFormatError(f"payload has {len(payload)} bytes, expected {expected} (truncated file?)")
    values = np.frombuffer(payload, dtype="<f8").astype(float).reshape(shape)
    return grid, values, kind


def write_snapshot(path, grid: GridSpec, values, kind: str) -> None:
    Path(path).write_bytes(encode_snapshot(grid, values, kind))


def read_snapshot(path) -> tuple[GridSpec, np.ndarray, str]:
    return decode_snapshot(Path(path).read_bytes())


def checkpoint_write(path, grid: GridSpec, fields: dict, meta: dict) -> None:
    """Write a checkpoint directory.

    ``fields`` maps names to ``(array, kind)``; ``meta`` must be
    JSON-serialisable.  Floats in ``meta`` survive bit-exactly when stored
    via :func:`float.hex`.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for name, (arr, kind) in fields.items():
        tmp = path / f"{name}.cfsnap.tmp"
        write_snapshot(tmp, grid, arr, kind)
        os.replace(tmp, path / f"{name}.cfsnap")
    body = dict(meta, version=CHECKPOINT_VERSION, fields=sorted(fields))
    (path / "meta.json").write_text(json.dumps(body, indent=1, sort_keys=True))


def checkpoint_read(path) -> tuple[GridSpec, dict, dict]:
    path = Path(path)
    meta_path = path / "meta.json"
    if not meta_path.is_file():
        raise SnapshotFormatError(f"{path} is not a checkpoint (no meta.json)")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise SnapshotFormatError(f"corrupt checkpoint metadata: {exc}") from exc
    if meta.get("version") != CHECKPOINT_VERSION:
        raise SnapshotFormatError(f"checkpoint version {meta.get('version')!r} unsupported")
    grid = None
    fields = {}
    for name in meta["fields"]:
        g, arr, kind = read_snapshot(path / f"{name}.cfsnap")
        if grid is not None and g != grid:
            raise SnapshotFormatError(f"field {name} is on a different grid")
        grid = g
        fields[name] = (arr, kind)
    if grid is None:
        raise SnapshotFormatError("checkpoint holds no fields")
    return grid, fields, meta
