"""Report serialization: canonical JSON, CSV field dumps, OFF meshes."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import InputDomainError


def canonical_json(obj):
    """Stable-key-order JSON text; identical inputs give identical bytes."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=True) + "\n"


def config_hash(config):
    """sha256 of the canonical config serialization (first 16 hex chars)."""
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()[:16]


def write_report(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(payload))
    return path


def write_field_csv(path, imm, fields):
    """Dump per-node scalar fields as CSV with grid-index columns."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(fields)
    idx = np.stack(
        np.unravel_index(np.arange(imm.node_count), imm.meta.shape), axis=-1
    )
    header = ["chart"] + [f"i{k}" for k in range(imm.n)] + names
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for m in range(imm.node_count):
            row = [0] + [int(v) for v in idx[m]]
            row += [repr(float(fields[name][m])) for name in names]
            writer.writerow(row)
    return path


def write_off(path, imm):
    """Quad mesh in OFF format from the chart grid (n = 2 only).

    Periodic axes wrap; colatitude holes are capped with triangle fans to the
    end-ring centroids.
    """
    if imm.n != 2:
        raise InputDomainError("OFF export is defined for n = 2 surfaces only")
    n0, n1 = imm.meta.shape
    kinds = imm.meta.kinds
    verts = [tuple(p) for p in imm.positions]
    faces = []

    def vid(i, j):
        return (i % n0) * n1 + (j % n1)

    imax = n0 if kinds[0] == "periodic" else n0 - 1
    for i in range(imax):
        for j in range(n1 if kinds[1] == "periodic" else n1 - 1):
            faces.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)))

    if kinds[0] == "colat":
        grid_pos = imm.grid(imm.positions)
        for ring, order in ((0, -1), (n0 - 1, 1)):
            cap = tuple(np.mean(grid_pos[ring], axis=0))
            cap_id = len(verts)
            verts.append(cap)
            for j in range(n1):
                tri = (cap_id, vid(ring, j), vid(ring, j + 1))
                faces.append(tri if order > 0 else (tri[0], tri[2], tri[1]))

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write("OFF\n")
        fh.write(f"{len(verts)} {len(faces)} 0\n")
        for v in verts:
            fh.write(f"{v[0]!r} {v[1]!r} {v[2]!r}\n")
        for f in faces:
            fh.write(str(len(f)) + " " + " ".join(map(str, f)) + "\n")
    return path
