"""Plain-text and PGM output helpers.

Everything written here is meant to be diffable and readable without
this package: CSV with round-trippable floats, 16-bit binary PGM for
images (any viewer opens it), and key = value manifests.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np


def write_csv(path, columns: dict) -> None:
    """Write named columns; floats use repr so values round-trip exactly."""
    names = list(columns)
    if not names:
        raise ValueError("no columns to write")
    arrays = [np.asarray(columns[n]).ravel() for n in names]
    length = arrays[0].size
    if any(a.size != length for a in arrays):
        raise ValueError("columns differ in length")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for i in range(length):
            writer.writerow([repr(float(a[i])) for a in arrays])


def read_table(path) -> dict:
    """Read a headed CSV back into float columns."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: no data rows")
    names = [n.strip() for n in rows[0]]
    data = np.array([[float(cell) for cell in row] for row in rows[1:] if row])
    return {name: data[:, i] for i, name in enumerate(names)}


def write_pgm16(path, grid: np.ndarray) -> float:
    """Write a 2-D array as 16-bit binary PGM, scaled to full range.

    Returns the applied scale (counts per input unit) so a sidecar
    file can record how to invert it.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 2:
        raise ValueError("grid must be 2-D")
    if np.any(grid < 0.0) or not np.all(np.isfinite(grid)):
        raise ValueError("grid must be finite and non-negative")
    peak = float(grid.max())
    scale = 65535.0 / peak if peak > 0.0 else 1.0
    counts = np.rint(grid * scale).astype(">u2")
    h, w = grid.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(counts.tobytes())
    return scale


def read_pgm16(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    pos += 1  # single whitespace byte after maxval
    if fields[0] != b"P5" or fields[3] != b"65535":
        raise ValueError(f"{path}: not a 16-bit binary PGM")
    w, h = int(fields[1]), int(fields[2])
    data = np.frombuffer(raw, dtype=">u2", count=w * h, offset=pos)
    return data.reshape(h, w).astype(np.uint16)


def format_record(mapping: dict) -> str:
    lines = []
    for key, value in mapping.items():
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def write_manifest(path, mapping: dict) -> None:
    Path(path).write_text(format_record(mapping))
