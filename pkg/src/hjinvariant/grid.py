"""Uniform Cartesian grids, multilinear interpolation, and value fields.

A :class:`Grid` is a uniform tensor-product discretization of an axis-aligned
box in R^n with at least three nodes per axis.  Scalar fields over the grid are
stored flat in row-major order (last axis fastest).  :class:`ValueField` pairs
such a field with the discount rate and game side it was solved for.

Interpolation is multilinear and clamped: queries outside the box are first
projected componentwise onto the box.  The implementation guarantees three
contract properties relied on elsewhere:

* nodal exactness -- a query that coincides bitwise with a grid node returns
  exactly the stored nodal value;
* monotonicity -- pointwise larger fields interpolate to larger values;
* nonexpansiveness -- the interpolation operator has sup-norm gain 1.

One-sided difference quotients synthesize the missing neighbor at box faces by
linear extrapolation (ghost value ``2*V_edge - V_interior``), which makes them
exact on affine fields everywhere, faces included.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Grid",
    "ValueField",
    "index_to_point",
    "nearest_node",
    "interpolate",
    "build_interpolation_stencil",
    "one_sided_gradients",
    "interior_band_mask",
    "save_field",
    "load_field",
]

_FIELD_HEADER_KEYS = ("dim", "lower", "upper", "counts", "gamma", "kind")


def _fmt(x: float) -> str:
    """Format a scalar with full float64 round-trip precision."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class Grid:
    """Uniform Cartesian grid over an axis-aligned box.

    Attributes:
        lower: per-axis minima, shape (n,).
        upper: per-axis maxima, shape (n,).
        counts: per-axis node counts, each >= 3, shape (n,).

    Spacing is derived as ``(upper - lower) / (counts - 1)`` and nodes along
    axis ``i`` are ``lower[i] + k * spacing[i]`` for ``k = 0..counts[i]-1``.
    """

    lower: np.ndarray
    upper: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=np.float64).reshape(-1)
        upper = np.asarray(self.upper, dtype=np.float64).reshape(-1)
        counts = np.asarray(self.counts, dtype=np.int64).reshape(-1)
        if lower.size == 0 or lower.size != upper.size or lower.size != counts.size:
            raise ValueError("lower, upper and counts must have equal nonzero length")
        if not (np.isfinite(lower).all() and np.isfinite(upper).all()):
            raise ValueError("grid bounds must be finite")
        if np.any(lower >= upper):
            raise ValueError("grid requires lower < upper on every axis")
        if np.any(counts < 3):
            raise ValueError("grid requires at least 3 nodes per axis")
        total = 1
        for c in counts:
            total *= int(c)
            if total > np.iinfo(np.intp).max:
                raise ValueError("total grid point count exceeds addressable range")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "counts", counts)

    @property
    def dim(self) -> int:
        return int(self.lower.size)

    @property
    def spacing(self) -> np.ndarray:
        return (self.upper - self.lower) / (self.counts - 1)

    @property
    def num_points(self) -> int:
        return int(np.prod(self.counts))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(c) for c in self.counts)

    def axis_coordinates(self, axis: int) -> np.ndarray:
        """Node coordinates along one axis, computed as ``lower + k*spacing``."""
        k = np.arange(int(self.counts[axis]), dtype=np.float64)
        return self.lower[axis] + k * self.spacing[axis]

    def node_points(self) -> np.ndarray:
        """All node coordinates as an (N, n) array in row-major node order."""
        axes = [self.axis_coordinates(i) for i in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def flat_index(self, multi_index) -> int:
        idx = np.asarray(multi_index, dtype=np.int64).reshape(-1)
        self._check_index(idx)
        flat = 0
        for i in range(self.dim):
            flat = flat * int(self.counts[i]) + int(idx[i])
        return flat

    def multi_index(self, flat_index: int) -> tuple[int, ...]:
        if not 0 <= flat_index < self.num_points:
            raise IndexError(f"flat index {flat_index} out of range")
        out = []
        rem = int(flat_index)
        for i in reversed(range(self.dim)):
            out.append(rem % int(self.counts[i]))
            rem //= int(self.counts[i])
        return tuple(reversed(out))

    def _check_index(self, idx: np.ndarray) -> None:
        if idx.size != self.dim:
            raise IndexError(f"multi-index length {idx.size} != grid dim {self.dim}")
        if np.any(idx < 0) or np.any(idx >= self.counts):
            raise IndexError(f"multi-index {tuple(int(i) for i in idx)} out of range")


def index_to_point(grid: Grid, multi_index) -> np.ndarray:
    """Coordinates of the node at ``multi_index`` (exact: lower + index*spacing)."""
    idx = np.asarray(multi_index, dtype=np.int64).reshape(-1)
    grid._check_index(idx)
    return grid.lower + idx.astype(np.float64) * grid.spacing


def nearest_node(grid: Grid, point) -> tuple[int, ...]:
    """Multi-index of the grid node closest to ``point`` (ties toward +inf)."""
    q = np.asarray(point, dtype=np.float64).reshape(-1)
    if q.size != grid.dim:
        raise ValueError(f"point length {q.size} != grid dim {grid.dim}")
    idx = np.rint((q - grid.lower) / grid.spacing).astype(np.int64)
    idx = np.clip(idx, 0, grid.counts - 1)
    return tuple(int(i) for i in idx)


@dataclass
class ValueField:
    """Scalar field over a grid plus solve metadata.

    ``values`` is flat in row-major axis order and must be finite everywhere.
    ``kind`` records which game side the field approximates: "lower" for the
    sup-inf ordering (disturbance commits first), "upper" for inf-sup.
    ``residual_history`` stores the per-sweep sup-norm residuals of the solve
    that produced the field (empty for hand-built fields).
    """

    grid: Grid
    values: np.ndarray
    gamma: float
    kind: str
    residual_history: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.values.size != self.grid.num_points:
            raise ValueError(
                f"values length {self.values.size} != grid point count {self.grid.num_points}"
            )
        if not np.isfinite(self.values).all():
            raise ValueError("field values must be finite")
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError("gamma must be positive")
        if self.kind not in ("lower", "upper"):
            raise ValueError(f"kind must be 'lower' or 'upper', got {self.kind!r}")
        self.residual_history = np.asarray(self.residual_history, dtype=np.float64).reshape(-1)

    def reshape(self) -> np.ndarray:
        """Values as an n-dimensional array view with the grid's shape."""
        return self.values.reshape(self.grid.shape)


def build_interpolation_stencil(grid: Grid, points: np.ndarray):
    """Multilinear interpolation stencil for a batch of query points.

    Points are clamped componentwise to the grid box.  Returns
    ``(corner_indices, weights)`` with shapes ``(2**n, k)`` such that
    ``(weights * values[corner_indices]).sum(axis=0)`` interpolates a flat
    field at the queries.  Weights are nonnegative and sum to 1 per point;
    a query that equals a node bitwise gets weight exactly 1 on that node.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[1] != grid.dim:
        raise ValueError(f"points have dimension {pts.shape[1]}, grid has {grid.dim}")
    if not np.isfinite(pts).all():
        raise ValueError("interpolation queries must be finite")
    k = pts.shape[0]
    n = grid.dim

    cell = np.empty((n, k), dtype=np.int64)
    frac = np.empty((n, k), dtype=np.float64)
    for i in range(n):
        axis = grid.axis_coordinates(i)
        q = np.clip(pts[:, i], grid.lower[i], grid.upper[i])
        idx = np.searchsorted(axis, q, side="right") - 1
        idx = np.clip(idx, 0, int(grid.counts[i]) - 2)
        t = (q - axis[idx]) / (axis[idx + 1] - axis[idx])
        cell[i] = idx
        frac[i] = np.clip(t, 0.0, 1.0)

    strides = np.empty(n, dtype=np.int64)
    s = 1
    for i in reversed(range(n)):
        strides[i] = s
        s *= int(grid.counts[i])

    corners = np.empty((2**n, k), dtype=np.int64)
    weights = np.empty((2**n, k), dtype=np.float64)
    for c, offs in enumerate(itertools.product((0, 1), repeat=n)):
        idx = np.zeros(k, dtype=np.int64)
        w = np.ones(k, dtype=np.float64)
        for i, o in enumerate(offs):
            idx += (cell[i] + o) * strides[i]
            w = w * (frac[i] if o else (1.0 - frac[i]))
        corners[c] = idx
        weights[c] = w
    return corners, weights


def interpolate(fld: ValueField, point) -> float | np.ndarray:
    """Multilinear interpolation of a value field at one point or a batch.

    Out-of-box queries are clamped componentwise to the box first.  The result
    lies within the min/max of the enclosing cell's corner values and is exact
    at grid nodes.  Non-finite queries raise ``ValueError``.
    """
    pts = np.asarray(point, dtype=np.float64)
    single = pts.ndim == 1
    corners, weights = build_interpolation_stencil(fld.grid, pts)
    out = (weights * fld.values[corners]).sum(axis=0)
    return float(out[0]) if single else out


def one_sided_gradients(fld: ValueField, multi_index) -> tuple[np.ndarray, np.ndarray]:
    """Backward and forward difference quotients (D-, D+) at a node.

    At box faces the missing neighbor is synthesized by linear extrapolation
    from the two interior nodes along that axis (``V_ghost = 2*V_edge -
    V_interior``), so both quotients are exact for affine fields everywhere.
    """
    grid = fld.grid
    idx = np.asarray(multi_index, dtype=np.int64).reshape(-1)
    grid._check_index(idx)
    vals = fld.reshape()
    dm = np.empty(grid.dim)
    dp = np.empty(grid.dim)
    here = vals[tuple(idx)]
    for i in range(grid.dim):
        h = grid.spacing[i]
        lo = idx.copy()
        hi = idx.copy()
        if idx[i] > 0:
            lo[i] -= 1
            v_lo = vals[tuple(lo)]
        else:
            nxt = idx.copy()
            nxt[i] += 1
            v_lo = 2.0 * here - vals[tuple(nxt)]
        if idx[i] < grid.counts[i] - 1:
            hi[i] += 1
            v_hi = vals[tuple(hi)]
        else:
            prv = idx.copy()
            prv[i] -= 1
            v_hi = 2.0 * here - vals[tuple(prv)]
        dm[i] = (here - v_lo) / h
        dp[i] = (v_hi - here) / h
    return dm, dp


def interior_band_mask(grid: Grid, width: int = 2) -> np.ndarray:
    """Boolean flat mask of nodes at least ``width`` cells from every box face.

    Boundary extrapolation pollutes a band of this width; comparisons between
    solves exclude it.
    """
    if width < 0:
        raise ValueError("band width must be nonnegative")
    mask = np.ones(grid.shape, dtype=bool)
    for i in range(grid.dim):
        sl = [slice(None)] * grid.dim
        sl[i] = slice(0, width)
        mask[tuple(sl)] = False
        sl[i] = slice(int(grid.counts[i]) - width, None)
        mask[tuple(sl)] = False
    return mask.ravel()


def save_field(fld: ValueField, path) -> None:
    """Write a value field to the plain-text field format.

    Layout: a header of ``key = value`` lines (dim, lower, upper, counts,
    gamma, kind), a blank line, then one value per line in row-major order.
    All scalars carry 17 significant digits, so a load reproduces the field
    bit for bit.
    """
    g = fld.grid
    lines = [
        f"dim = {g.dim}",
        "lower = " + " ".join(_fmt(v) for v in g.lower),
        "upper = " + " ".join(_fmt(v) for v in g.upper),
        "counts = " + " ".join(str(int(c)) for c in g.counts),
        f"gamma = {_fmt(fld.gamma)}",
        f"kind = {fld.kind}",
        "",
    ]
    lines.extend(_fmt(v) for v in fld.values)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def load_field(path) -> ValueField:
    """Read a value field written by :func:`save_field`."""
    with open(path, "r", encoding="ascii") as fh:
        raw = fh.read().splitlines()
    header: dict[str, str] = {}
    i = 0
    for i, line in enumerate(raw):
        if line.strip() == "":
            break
        if "=" not in line:
            raise ValueError(f"{path}: line {i + 1}: expected 'key = value', got {line!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _FIELD_HEADER_KEYS:
            raise ValueError(f"{path}: line {i + 1}: unknown header key {key!r}")
        if key in header:
            raise ValueError(f"{path}: line {i + 1}: duplicate header key {key!r}")
        header[key] = val.strip()
    else:
        raise ValueError(f"{path}: missing blank line after header")
    missing = [k for k in _FIELD_HEADER_KEYS if k not in header]
    if missing:
        raise ValueError(f"{path}: missing header keys {missing}")

    dim = int(header["dim"])
    lower = np.array([float(v) for v in header["lower"].split()])
    upper = np.array([float(v) for v in header["upper"].split()])
    counts = np.array([int(v) for v in header["counts"].split()])
    if not (lower.size == upper.size == counts.size == dim):
        raise ValueError(f"{path}: header vector lengths do not match dim = {dim}")
    grid = Grid(lower, upper, counts)

    body = raw[i + 1 :]
    vals = []
    for j, line in enumerate(body):
        s = line.strip()
        if not s:
            continue
        try:
            vals.append(float(s))
        except ValueError as exc:
            raise ValueError(f"{path}: line {i + 2 + j}: bad value {s!r}") from exc
    values = np.asarray(vals, dtype=np.float64)
    if values.size != grid.num_points:
        raise ValueError(
            f"{path}: expected {grid.num_points} values, found {values.size}"
        )
    return ValueField(grid, values, float(header["gamma"]), header["kind"])
