"""ASCII PLY reading and writing for colored point clouds."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .cloud import ColorPointCloud


def write_ply(path, cloud: ColorPointCloud) -> None:
    path = Path(path)
    with path.open("w", encoding="ascii", newline="\n") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(cloud)}\n")
        for name in ("x", "y", "z"):
            fh.write(f"property float {name}\n")
        for name in ("red", "green", "blue"):
            fh.write(f"property uchar {name}\n")
        fh.write("end_header\n")
        for p, c in zip(cloud.points, cloud.colors):
            fh.write(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g} {c[0]} {c[1]} {c[2]}\n")


def read_ply(path) -> ColorPointCloud:
    """Read the vertex element of an ASCII PLY; unknown properties are skipped."""
    lines = Path(path).read_text(encoding="ascii", errors="replace").splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ValueError(f"{path}: not a PLY file")
    elements: list[tuple[str, int, list[str]]] = []
    i = 1
    while i < len(lines):
        tok = lines[i].split()
        i += 1
        if not tok:
            continue
        if tok[0] == "format":
            if tok[1] != "ascii":
                raise ValueError(f"{path}: only ASCII PLY is supported, got {tok[1]}")
        elif tok[0] == "element":
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if tok[1] == "list":
                raise ValueError(f"{path}: list properties are not supported")
            elements[-1][2].append(tok[-1])
        elif tok[0] == "end_header":
            break
    body = lines[i:]
    row = 0
    for name, count, props in elements:
        if name != "vertex":
            row += count
            continue
        data = np.array([body[row + j].split()[: len(props)] for j in range(count)], dtype=np.float64)
        data = data.reshape(count, len(props))
        col = {p: k for k, p in enumerate(props)}
        pts = data[:, [col["x"], col["y"], col["z"]]]
        if all(c in col for c in ("red", "green", "blue")):
            rgb = data[:, [col["red"], col["green"], col["blue"]]].astype(np.uint8)
        else:
            rgb = np.zeros((count, 3), dtype=np.uint8)
        return ColorPointCloud(pts, rgb)
    raise ValueError(f"{path}: no vertex element")
