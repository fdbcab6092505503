"""Readers and writers for the shared on-disk formats.

This is an independent implementation of the byte layouts the toolkit
defines, kept free of any toolkit import on purpose: if either side
drifts, the cross-checking tests fail instead of both sides silently
agreeing with themselves.

Embedding files: ``FGE1`` magic, row count and dimension as little-endian
uint32, float32 row-major data. Row ids live one-per-line in a text
sidecar at ``<path>.ids``.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"FGE1"
_HEADER = struct.Struct("<II")


class FormatError(ValueError):
    """A file does not follow the expected layout."""


def ids_path_for(path: Path) -> Path:
    return path.with_name(path.name + ".ids")


def write_matrix(ids, values, path: Path | str) -> Path:
    """Write an embedding file and its id sidecar.

    Both files go through a temporary name and an atomic rename, so a
    crash mid-write never leaves a truncated output behind.
    """
    path = Path(path)
    ids = [str(i) for i in ids]
    arr = np.ascontiguousarray(values, dtype="<f4")
    if arr.ndim != 2:
        raise FormatError(f"expected a 2-d matrix, got shape {arr.shape}")
    if len(ids) != arr.shape[0]:
        raise FormatError(f"{len(ids)} ids for {arr.shape[0]} matrix rows")
    for i in ids:
        if not i or "\n" in i:
            raise FormatError(f"id {i!r} does not fit a line-based sidecar")

    sidecar = ids_path_for(path)
    tmp = path.with_name(path.name + ".part")
    tmp_ids = sidecar.with_name(sidecar.name + ".part")
    try:
        with tmp.open("wb") as fh:
            fh.write(MAGIC)
            fh.write(_HEADER.pack(arr.shape[0], arr.shape[1]))
            fh.write(arr.tobytes())
        tmp_ids.write_text("".join(f"{i}\n" for i in ids), encoding="utf-8")
        os.replace(tmp, path)
        os.replace(tmp_ids, sidecar)
    except BaseException:
        tmp.unlink(missing_ok=True)
        tmp_ids.unlink(missing_ok=True)
        raise
    return path


def read_matrix(path: Path | str) -> tuple[list[str], np.ndarray]:
    """Read an embedding file; returns (ids, float32 matrix)."""
    path = Path(path)
    with path.open("rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        rows, dim = _HEADER.unpack(header)
        data = fh.read(rows * dim * 4)
        if len(data) != rows * dim * 4:
            raise FormatError(f"{path}: expected {rows}x{dim} float32 rows")
    values = np.frombuffer(data, dtype="<f4").reshape(rows, dim)

    sidecar = ids_path_for(path)
    ids: list[str] = []
    with sidecar.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                raise FormatError(f"{sidecar}:{lineno}: empty id line")
            ids.append(line)
    if len(ids) != rows:
        raise FormatError(f"{sidecar}: {len(ids)} ids for {rows} rows")
    return ids, values


def read_jsonl(path: Path | str, required: tuple[str, ...] = ()) -> list[dict]:
    """Load JSONL rows, checking each carries the required fields.

    Blank lines are skipped; anything else that fails to parse, or a row
    that is not an object, is an error naming the line.
    """
    path = Path(path)
    rows: list[dict] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            if not isinstance(obj, dict):
                raise FormatError(f"{path}:{lineno}: expected an object")
            for field in required:
                if field not in obj:
                    raise FormatError(f"{path}:{lineno}: missing field {field!r}")
            rows.append(obj)
    return rows


def write_jsonl(rows, path: Path | str) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".part")
    try:
        with tmp.open("w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
    return path
