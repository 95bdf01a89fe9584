"""Sublevel-set extraction, 2-D contouring, and set comparison.

The invariant sets of the game are the zero level sets of the converged value
functions.  A converged numerical field is never exactly zero on a region, so
the numeric surrogate is the sublevel set ``{V <= epsilon_set}`` with a small
resolution-dependent threshold (default 0.01).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .grid import Grid, ValueField

__all__ = [
    "DEFAULT_EPSILON_SET",
    "GridMask",
    "Contour2D",
    "MaskComparison",
    "extract_sublevel",
    "compare_masks",
    "marching_squares",
    "mask_to_csv",
    "mask_from_csv",
    "contour_to_csv",
    "field_to_vtk",
]

DEFAULT_EPSILON_SET = 0.01


@dataclass
class GridMask:
    """Boolean node set over a grid plus the threshold that produced it."""

    grid: Grid
    flags: np.ndarray
    epsilon_set: float

    def __post_init__(self):
        self.flags = np.asarray(self.flags, dtype=bool).reshape(-1)
        if self.flags.size != self.grid.num_points:
            raise ValueError("mask length does not match grid point count")

    @property
    def count(self) -> int:
        return int(self.flags.sum())

    def reshape(self) -> np.ndarray:
        return self.flags.reshape(self.grid.shape)


@dataclass
class Contour2D:
    """Level-set polylines on a 2-D grid.  Closed loops repeat their first vertex."""

    polylines: list
    level: float


@dataclass
class MaskComparison:
    only_a: int
    only_b: int
    intersection: int
    jaccard: float
    symmetric_difference_fraction: float

    def to_text(self) -> str:
        return (
            f"only_a = {self.only_a}\n"
            f"only_b = {self.only_b}\n"
            f"intersection = {self.intersection}\n"
            f"jaccard = {self.jaccard:.17g}\n"
            f"symmetric_difference_fraction = {self.symmetric_difference_fraction:.17g}\n"
        )


def extract_sublevel(fld: ValueField, epsilon_set: float = DEFAULT_EPSILON_SET) -> GridMask:
    """Nodes with V <= epsilon_set.  Negative thresholds are rejected."""
    if epsilon_set < 0:
        raise ValueError("epsilon_set must be nonnegative")
    return GridMask(fld.grid, fld.values <= epsilon_set, epsilon_set)


def compare_masks(a: GridMask, b: GridMask) -> MaskComparison:
    """Cardinalities of the set algebra of two masks on the same grid.

    Conventions for empty inputs: both masks empty gives symmetric-difference
    fraction 0 and Jaccard 1 (the sets are equal).
    """
    if a.grid.shape != b.grid.shape or not np.array_equal(a.grid.lower, b.grid.lower) \
            or not np.array_equal(a.grid.upper, b.grid.upper):
        raise ValueError("masks live on different grids")
    fa, fb = a.flags, b.flags
    inter = int((fa & fb).sum())
    union = int((fa | fb).sum())
    only_a = int((fa & ~fb).sum())
    only_b = int((fb & ~fa).sum())
    if union == 0:
        return MaskComparison(0, 0, 0, 1.0, 0.0)
    return MaskComparison(
        only_a=only_a,
        only_b=only_b,
        intersection=inter,
        jaccard=inter / union,
        symmetric_difference_fraction=(only_a + only_b) / union,
    )


def _edge_vertex(cache, axis, i, j, p0, p1, v0, v1, level):
    key = (axis, i, j)
    if key not in cache:
        t = (level - v0) / (v1 - v0)
        cache[key] = (p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1]))
    return key


def marching_squares(fld: ValueField, level: float) -> Contour2D:
    """Standard 16-case marching squares of a 2-D field at one level.

    Corners with value <= level count as inside.  Edge crossings are linearly
    interpolated and computed once per edge, so segments from neighboring
    cells share vertices exactly and stitch into polylines without tolerance
    matching.  Ambiguous saddle cells are resolved by the sign of the
    cell-center average.
    """
    grid = fld.grid
    if grid.dim != 2:
        raise ValueError(f"marching squares requires a 2-D grid, got dim {grid.dim}")
    vals = fld.reshape()
    nx, ny = grid.shape
    xs = grid.axis_coordinates(0)
    ys = grid.axis_coordinates(1)

    vcache: dict = {}
    segments = []  # pairs of edge keys

    def x_edge(i, j):  # edge along axis 0 from (i, j) to (i+1, j)
        return _edge_vertex(vcache, 0, i, j, (xs[i], ys[j]), (xs[i + 1], ys[j]),
                            vals[i, j], vals[i + 1, j], level)

    def y_edge(i, j):  # edge along axis 1 from (i, j) to (i, j+1)
        return _edge_vertex(vcache, 1, i, j, (xs[i], ys[j]), (xs[i], ys[j + 1]),
                            vals[i, j], vals[i, j + 1], level)

    for i in range(nx - 1):
        for j in range(ny - 1):
            c00 = vals[i, j] <= level
            c10 = vals[i + 1, j] <= level
            c01 = vals[i, j + 1] <= level
            c11 = vals[i + 1, j + 1] <= level
            case = (c00 << 0) | (c10 << 1) | (c11 << 2) | (c01 << 3)
            if case in (0, 15):
                continue
            # cell edges: bottom (j fixed), top (j+1), left (i fixed), right (i+1)
            bottom = lambda: x_edge(i, j)
            top = lambda: x_edge(i, j + 1)
            left = lambda: y_edge(i, j)
            right = lambda: y_edge(i + 1, j)
            if case in (1, 14):
                segments.append((bottom(), left()))
            elif case in (2, 13):
                segments.append((bottom(), right()))
            elif case in (3, 12):
                segments.append((left(), right()))
            elif case in (4, 11):
                segments.append((top(), right()))
            elif case in (6, 9):
                segments.append((bottom(), top()))
            elif case in (7, 8):
                segments.append((top(), left()))
            elif case == 5:  # c00 and c11 inside: saddle
                center = 0.25 * (vals[i, j] + vals[i + 1, j] + vals[i, j + 1] + vals[i + 1, j + 1])
                if center <= level:
                    segments.append((left(), top()))
                    segments.append((bottom(), right()))
                else:
                    segments.append((bottom(), left()))
                    segments.append((top(), right()))
            elif case == 10:  # c10 and c01 inside: saddle
                center = 0.25 * (vals[i, j] + vals[i + 1, j] + vals[i, j + 1] + vals[i + 1, j + 1])
                if center <= level:
                    segments.append((bottom(), left()))
                    segments.append((top(), right()))
                else:
                    segments.append((left(), top()))
                    segments.append((bottom(), right()))

    polylines = _stitch(segments, vcache)
    return Contour2D(polylines, level)


def _stitch(segments, vcache) -> list:
    """Join segments sharing edge keys into polylines, deterministically."""
    adjacency: dict = {}
    for a, b in segments:
        adjacency.setdefault(a, []).append(b)
        adjacency.setdefault(b, []).append(a)
    used = set()
    polylines = []

    def walk(start, nxt):
        chain = [start, nxt]
        used.add((start, nxt))
        used.add((nxt, start))
        cur, prev = nxt, start
        while True:
            candidates = [k for k in adjacency.get(cur, []) if (cur, k) not in used]
            if not candidates:
                break
            k = candidates[0]
            used.add((cur, k))
            used.add((k, cur))
            chain.append(k)
            prev, cur = cur, k
            if cur == start:
                break
        return chain

    # open chains first (endpoints with odd degree), then loops
    keys = list(adjacency.keys())
    for key in keys:
        if len(adjacency[key]) == 1:
            nxt = adjacency[key][0]
            if (key, nxt) in used:
                continue
            chain = walk(key, nxt)
            polylines.append(np.array([vcache[k] for k in chain]))
    for a, b in segments:
        if (a, b) in used:
            continue
        chain = walk(a, b)
        polylines.append(np.array([vcache[k] for k in chain]))
    return polylines


def mask_to_csv(mask: GridMask, path) -> None:
    """Node coordinates plus a 0/1 flag, one row per node in storage order."""
    pts = mask.grid.node_points()
    n = mask.grid.dim
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{i + 1}" for i in range(n)] + ["flag"])
        for row, flag in zip(pts, mask.flags):
            writer.writerow([f"{v:.17g}" for v in row] + [int(flag)])


def mask_from_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read back (points, flags) from :func:`mask_to_csv` output."""
    with open(path, "r", newline="", encoding="ascii") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n = len(header) - 1
        pts = []
        flags = []
        for row in reader:
            pts.append([float(v) for v in row[:n]])
            flags.append(bool(int(row[n])))
    return np.asarray(pts), np.asarray(flags, dtype=bool)


def contour_to_csv(contour: Contour2D, path) -> None:
    """Rows of (polyline id, x, y) in stitch order."""
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["polyline", "x", "y"])
        for pid, poly in enumerate(contour.polylines):
            for x, y in poly:
                writer.writerow([pid, f"{x:.17g}", f"{y:.17g}"])


def field_to_vtk(fld: ValueField, path, name: str = "value") -> None:
    """Legacy VTK 2.0 ASCII structured-points export (dim <= 3)."""
    grid = fld.grid
    if grid.dim > 3:
        raise ValueError("VTK structured points supports at most 3 dimensions")
    counts = list(grid.shape) + [1] * (3 - grid.dim)
    origin = list(grid.lower) + [0.0] * (3 - grid.dim)
    spacing = list(grid.spacing) + [1.0] * (3 - grid.dim)
    # VTK structured points order the fastest index along x; storage is
    # row-major with the last axis fastest, so emit in Fortran order.
    data = np.ravel(fld.reshape(), order="F")
    lines = [
        "# vtk DataFile Version 2.0",
        name,
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        "DIMENSIONS " + " ".join(str(c) for c in counts),
        "ORIGIN " + " ".join(f"{v:.17g}" for v in origin),
        "SPACING " + " ".join(f"{v:.17g}" for v in spacing),
        f"POINT_DATA {grid.num_points}",
        f"SCALARS {name} double 1",
        "LOOKUP_TABLE default",
    ]
    lines.extend(f"{v:.17g}" for v in data)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")
