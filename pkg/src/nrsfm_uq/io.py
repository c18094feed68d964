"""File formats: plain CSV matrices with JSON manifests, JSON rotations.

Matrix CSVs carry one row per line, comma-separated, '.' decimal, no header.
Values are written with 17 significant digits so a write/read round trip is
bit-exact.  Each matrix file ``foo.csv`` is accompanied by ``foo.manifest.json``
holding ``{"frames": F, "points": N, "kind": "tracks"|"shape"|"rearranged"}``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import IoError, ManifestError, ParseError
from .model import RearrangedShape, RotationStack, ShapeMatrix, TrackMatrix

KINDS = ("tracks", "shape", "rearranged")


def manifest_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".manifest.json")


def _expected_shape(kind: str, frames: int, points: int):
    if kind == "tracks":
        return (2 * frames, points)
    if kind == "shape":
        return (3 * frames, points)
    if kind == "rearranged":
        return (3 * points, frames)
    raise ManifestError(f"unknown kind {kind!r}; expected one of {KINDS}")


def store_matrix(matrix, path, kind: str | None = None, frames: int | None = None, points: int | None = None):
    """Write a matrix CSV plus its manifest; lossless at 17 significant digits.

    ``kind``, ``frames`` and ``points`` are inferred when ``matrix`` is one
    of the typed wrappers; raw arrays need them spelled out.
    """
    if kind is None:
        if isinstance(matrix, TrackMatrix):
            kind = "tracks"
        elif isinstance(matrix, ShapeMatrix):
            kind = "shape"
        elif isinstance(matrix, RearrangedShape):
            kind = "rearranged"
        else:
            raise ManifestError("kind is required when storing a plain array")
    if frames is None:
        frames = matrix.frames
    if points is None:
        points = matrix.points
    data = np.asarray(getattr(matrix, "data", matrix), dtype=float)
    expected = _expected_shape(kind, frames, points)
    if data.shape != expected:
        raise ManifestError(f"{kind} matrix should be {expected}, got {data.shape}")
    path = Path(path)
    try:
        with path.open("w") as fh:
            for row in data:
                fh.write(",".join(f"{x:.17g}" for x in row))
                fh.write("\n")
        manifest_path(path).write_text(
            json.dumps({"frames": frames, "points": points, "kind": kind}) + "\n"
        )
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_matrix(path, expect_kind: str | None = None):
    """Read a matrix CSV and its manifest; returns (ndarray, manifest dict)."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc

    rows = []
    width = None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        cells = line.split(",")
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise ParseError(f"expected {width} columns, got {len(cells)}", line=lineno)
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from exc
    if not rows:
        raise ParseError("file holds no data rows", line=1)
    data = np.asarray(rows)

    mpath = manifest_path(path)
    try:
        manifest = json.loads(mpath.read_text())
    except OSError as exc:
        raise IoError(f"cannot read manifest {mpath}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {mpath} is not valid JSON: {exc}") from exc

    kind = manifest.get("kind")
    if expect_kind is not None and kind != expect_kind:
        raise ManifestError(f"expected kind {expect_kind!r}, manifest says {kind!r}")
    expected = _expected_shape(kind, int(manifest["frames"]), int(manifest["points"]))
    if data.shape != expected:
        raise ManifestError(
            f"manifest promises a {expected} {kind} matrix, file holds {data.shape}"
        )
    return data, manifest


def load_tracks(path) -> TrackMatrix:
    data, _ = load_matrix(path, expect_kind="tracks")
    return TrackMatrix(data)


def load_shape(path) -> ShapeMatrix:
    data, _ = load_matrix(path, expect_kind="shape")
    return ShapeMatrix(data)


def load_rearranged(path) -> RearrangedShape:
    data, _ = load_matrix(path, expect_kind="rearranged")
    return RearrangedShape(data)


def store_rotations(rotations: RotationStack, path):
    """JSON array of F arrays of 6 numbers (row-major 2x3 blocks)."""
    payload = [[float(x) for x in block.reshape(6)] for block in rotations.blocks]
    try:
        Path(path).write_text(json.dumps(payload) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_rotations(path) -> RotationStack:
    try:
        payload = json.loads(Path(path).read_text())
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"rotations file is not valid JSON: {exc}", line=exc.lineno) from exc
    blocks = np.asarray(payload, dtype=float)
    if blocks.ndim != 2 or blocks.shape[1] != 6:
        raise ManifestError(f"rotations JSON must be F x 6, got {blocks.shape}")
    return RotationStack(blocks.reshape(-1, 2, 3))
