"""Plain-text complex matrix files.

A file holds one or more named blocks. Each block starts with a header line
``<name> <rows> <cols>`` followed by ``rows`` lines of ``cols`` whitespace
separated ``re,im`` entries. Blank lines and ``#`` comments are ignored::

    # entangle-measure attack, probe dimension 1
    ue_b 2 2
    1,0 0,0
    0,0 1,0
"""

from __future__ import annotations

import os
from typing import Mapping

import numpy as np


class MatrixFileError(ValueError):
    pass


def parse_matrices(text: str) -> dict[str, np.ndarray]:
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [(i + 1, ln) for i, ln in enumerate(lines) if ln]
    out: dict[str, np.ndarray] = {}
    pos = 0
    while pos < len(lines):
        lineno, header = lines[pos]
        parts = header.split()
        if len(parts) != 3:
            raise MatrixFileError(f"line {lineno}: expected '<name> <rows> <cols>', got {header!r}")
        name = parts[0]
        try:
            rows, cols = int(parts[1]), int(parts[2])
        except ValueError:
            raise MatrixFileError(f"line {lineno}: dimensions must be integers") from None
        if rows < 1 or cols < 1:
            raise MatrixFileError(f"line {lineno}: dimensions must be positive")
        if name in out:
            raise MatrixFileError(f"line {lineno}: duplicate matrix {name!r}")
        body = lines[pos + 1:pos + 1 + rows]
        if len(body) != rows:
            raise MatrixFileError(f"matrix {name!r}: expected {rows} rows, file ended early")
        m = np.empty((rows, cols), dtype=complex)
        for r, (ln, row) in enumerate(body):
            entries = row.split()
            if len(entries) != cols:
                raise MatrixFileError(f"line {ln}: expected {cols} entries, got {len(entries)}")
            for c, entry in enumerate(entries):
                try:
                    re, im = entry.split(",")
                    m[r, c] = complex(float(re), float(im))
                except ValueError:
                    raise MatrixFileError(f"line {ln}: bad entry {entry!r}, expected 're,im'") from None
        out[name] = m
        pos += 1 + rows
    return out


def format_matrices(matrices: Mapping[str, np.ndarray]) -> str:
    chunks = []
    for name, m in matrices.items():
        m = np.asarray(m, dtype=complex)
        chunks.append(f"{name} {m.shape[0]} {m.shape[1]}")
        for row in m:
            chunks.append(" ".join(f"{float(z.real)!r},{float(z.imag)!r}" for z in row))
    return "\n".join(chunks) + "\n"


def load_matrices(path: str | os.PathLike) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        return parse_matrices(fh.read())


def save_matrices(path: str | os.PathLike, matrices: Mapping[str, np.ndarray]):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_matrices(matrices))


def load_entangle_measure(path: str | os.PathLike):
    from .adversary import EntangleMeasure

    mats = load_matrices(path)
    missing = {"ue_b", "ue_c", "uf"} - set(mats)
    if missing:
        raise MatrixFileError(f"{path}: missing matrices {sorted(missing)}")
    rows = mats["ue_b"].shape[0]
    if rows % 2:
        raise MatrixFileError(f"{path}: ue_b must have an even number of rows")
    return EntangleMeasure(mats["ue_b"], mats["ue_c"], mats["uf"], probe_dim=rows // 2)


def save_entangle_measure(path: str | os.PathLike, attack):
    save_matrices(path, {"ue_b": attack.ue_b, "ue_c": attack.ue_c, "uf": attack.uf})
