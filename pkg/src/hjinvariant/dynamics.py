"""Game dynamics: vector fields, constraint functions, and built-in models.

A :class:`GameModel` bundles the controlled vector field ``f(x, u, d)``, the
compact control and disturbance boxes, and a bounded state-constraint function
``h`` with a declared bound ``M >= sup |h|``.  The safe set is ``{h <= 0}``.

Dynamics come in two flavors.  :class:`AffineDynamics` is the control-affine
form ``f(x,u,d) = f1(x) + f2(x) u + f3(x) d`` with polynomial coefficient
maps, which keeps the minimax Hamiltonian closed-form over box action sets.
:class:`GeneralDynamics` wraps an arbitrary evaluator for everything else.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Box",
    "PolynomialMap",
    "AffineDynamics",
    "GeneralDynamics",
    "GameModel",
    "eval_dynamics",
    "eval_constraint",
    "normalize_constraint",
    "builtin_model",
    "check_constraint_bound",
    "BUILTIN_MODELS",
]


@dataclass(frozen=True)
class Box:
    """Axis-aligned compact box {x : lower <= x <= upper} (possibly degenerate)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=np.float64).reshape(-1)
        upper = np.asarray(self.upper, dtype=np.float64).reshape(-1)
        if lower.size != upper.size or lower.size == 0:
            raise ValueError("box lower/upper must have equal nonzero length")
        if not (np.isfinite(lower).all() and np.isfinite(upper).all()):
            raise ValueError("box bounds must be finite")
        if np.any(lower > upper):
            raise ValueError("box requires lower <= upper componentwise")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return int(self.lower.size)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def radius(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)

    def contains(self, point) -> bool:
        q = np.asarray(point, dtype=np.float64).reshape(-1)
        if q.size != self.dim:
            return False
        return bool(np.all(q >= self.lower) and np.all(q <= self.upper))

    def vertices(self) -> np.ndarray:
        """Box vertices as a (k, dim) array in lexicographic axis order.

        Degenerate axes contribute a single coordinate, so a singleton box
        yields exactly one vertex.
        """
        per_axis = [
            (self.lower[i],) if self.lower[i] == self.upper[i] else (self.lower[i], self.upper[i])
            for i in range(self.dim)
        ]
        return np.array(list(itertools.product(*per_axis)), dtype=np.float64)

    def sample_grid(self, per_axis: int | Sequence[int]) -> np.ndarray:
        """Uniform per-axis sample grid including endpoints, lexicographic order."""
        if np.isscalar(per_axis):
            counts = [int(per_axis)] * self.dim
        else:
            counts = [int(c) for c in per_axis]
        if len(counts) != self.dim or any(c < 1 for c in counts):
            raise ValueError("per-axis sample counts must be positive, one per axis")
        axes = []
        for i, c in enumerate(counts):
            if c == 1 or self.lower[i] == self.upper[i]:
                axes.append((self.center[i],))
            else:
                axes.append(tuple(np.linspace(self.lower[i], self.upper[i], c)))
        return np.array(list(itertools.product(*axes)), dtype=np.float64)


@dataclass(frozen=True)
class PolynomialMap:
    """Polynomial map R^n -> R^r as explicit term tables.

    ``terms[o]`` lists the terms of output ``o`` as ``(coefficient,
    exponents)`` pairs with ``exponents`` a length-n integer tuple.  Terms are
    summed in stored order, so evaluation is deterministic.
    """

    input_dim: int
    output_dim: int
    terms: tuple

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("polynomial map dimensions must be positive")
        norm = []
        if len(self.terms) != self.output_dim:
            raise ValueError("terms must list one term table per output")
        for table in self.terms:
            row = []
            for coeff, exps in table:
                e = tuple(int(v) for v in exps)
                if len(e) != self.input_dim or any(v < 0 for v in e):
                    raise ValueError(f"bad exponent vector {exps!r}")
                row.append((float(coeff), e))
            norm.append(tuple(row))
        object.__setattr__(self, "terms", tuple(norm))

    def __call__(self, x) -> np.ndarray:
        """Evaluate at x with shape (..., n); returns shape (..., r)."""
        pts = np.asarray(x, dtype=np.float64)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[-1] != self.input_dim:
            raise ValueError(f"input has dimension {pts.shape[-1]}, map expects {self.input_dim}")
        out = np.zeros(pts.shape[:-1] + (self.output_dim,), dtype=np.float64)
        for o, table in enumerate(self.terms):
            acc = out[..., o]
            for coeff, exps in table:
                t = np.full(pts.shape[:-1], coeff)
                for i, e in enumerate(exps):
                    if e:
                        t = t * pts[..., i] ** e
                acc += t
        return out[0] if single else out


@dataclass(frozen=True)
class AffineDynamics:
    """Control-affine field f(x,u,d) = f1(x) + f2(x) u + f3(x) d.

    ``f2`` maps n -> n*m and ``f3`` maps n -> n*l; outputs are flattened
    row-major, i.e. output ``i*m + j`` is the (i, j) matrix entry.
    """

    f1: PolynomialMap
    f2: PolynomialMap
    f3: PolynomialMap
    control_dim: int
    disturbance_dim: int

    def __post_init__(self):
        n = self.f1.input_dim
        if self.f1.output_dim != n:
            raise ValueError("f1 must map n -> n")
        if self.f2.input_dim != n or self.f2.output_dim != n * self.control_dim:
            raise ValueError("f2 must map n -> n*m")
        if self.f3.input_dim != n or self.f3.output_dim != n * self.disturbance_dim:
            raise ValueError("f3 must map n -> n*l")

    @property
    def state_dim(self) -> int:
        return self.f1.input_dim

    def drift(self, x) -> np.ndarray:
        return self.f1(x)

    def control_matrix(self, x) -> np.ndarray:
        """f2(x) reshaped to (..., n, m)."""
        out = self.f2(np.asarray(x, dtype=np.float64))
        return out.reshape(out.shape[:-1] + (self.state_dim, self.control_dim))

    def disturbance_matrix(self, x) -> np.ndarray:
        """f3(x) reshaped to (..., n, l)."""
        out = self.f3(np.asarray(x, dtype=np.float64))
        return out.reshape(out.shape[:-1] + (self.state_dim, self.disturbance_dim))

    def __call__(self, x, u, d) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        u = np.asarray(u, dtype=np.float64)
        d = np.asarray(d, dtype=np.float64)
        out = self.drift(x)
        out = out + np.einsum("...ij,...j->...i", self.control_matrix(x), u)
        out = out + np.einsum("...ij,...j->...i", self.disturbance_matrix(x), d)
        return out


@dataclass(frozen=True)
class GeneralDynamics:
    """Black-box vector field (x, u, d) -> xdot supporting batched x."""

    evaluator: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    state_dim: int
    control_dim: int
    disturbance_dim: int

    def __call__(self, x, u, d) -> np.ndarray:
        return np.asarray(self.evaluator(np.asarray(x, dtype=np.float64), u, d), dtype=np.float64)


@dataclass(frozen=True)
class GameModel:
    """Two-player game system: dynamics, action boxes, and bounded constraint.

    ``constraint`` is a scalar function with ``|h(x)| <= constraint_bound``
    everywhere; the safe set is its zero sublevel set.  The bound is declared,
    not inferred; callers verify it by dense sampling where it matters
    (:func:`check_constraint_bound`).
    """

    state_dim: int
    control_box: Box
    disturbance_box: Box
    dynamics: AffineDynamics | GeneralDynamics
    constraint: Callable[[np.ndarray], np.ndarray]
    constraint_bound: float
    name: str = ""

    def __post_init__(self):
        if self.state_dim < 1:
            raise ValueError("state dimension must be positive")
        if self.dynamics.state_dim != self.state_dim:
            raise ValueError("dynamics state dimension mismatch")
        if self.dynamics.control_dim != self.control_box.dim:
            raise ValueError("control box dimension mismatch")
        if self.dynamics.disturbance_dim != self.disturbance_box.dim:
            raise ValueError("disturbance box dimension mismatch")
        if not (np.isfinite(self.constraint_bound) and self.constraint_bound > 0):
            raise ValueError("constraint bound must be positive and finite")

    @property
    def is_affine(self) -> bool:
        return isinstance(self.dynamics, AffineDynamics)

    @property
    def control_dim(self) -> int:
        return self.control_box.dim

    @property
    def disturbance_dim(self) -> int:
        return self.disturbance_box.dim


def eval_dynamics(model: GameModel, x, u, d) -> np.ndarray:
    """Evaluate f(x, u, d); u and d must lie in their boxes.

    x may be a single state (n,) or a batch (..., n); u and d are single
    actions applied across the batch or per-row action arrays.
    """
    u_arr = np.asarray(u, dtype=np.float64)
    d_arr = np.asarray(d, dtype=np.float64)
    for a in np.atleast_2d(u_arr):
        if not model.control_box.contains(a):
            raise ValueError(f"control {a} outside control box")
    for a in np.atleast_2d(d_arr):
        if not model.disturbance_box.contains(a):
            raise ValueError(f"disturbance {a} outside disturbance box")
    return model.dynamics(x, u_arr, d_arr)


def eval_constraint(model: GameModel, x) -> float | np.ndarray:
    """Constraint value h(x); finite for all finite x."""
    pts = np.asarray(x, dtype=np.float64)
    out = model.constraint(pts)
    if pts.ndim == 1:
        return float(out)
    return np.asarray(out, dtype=np.float64)


def normalize_constraint(raw_h: Callable) -> Callable:
    """Bounded transform g = raw_h / (1 + raw_h^2).

    |g| <= 1/2 everywhere, with the sign and zero set of ``raw_h`` preserved,
    so the safe set {g <= 0} equals {raw_h <= 0}.
    """

    def bounded(x):
        r = np.asarray(raw_h(x), dtype=np.float64)
        return r / (1.0 + r * r)

    return bounded


def check_constraint_bound(model: GameModel, box_lower, box_upper, samples_per_axis: int = 41) -> None:
    """Verify |h| <= declared bound on a dense sample of a box (tolerance 0)."""
    lo = np.asarray(box_lower, dtype=np.float64).reshape(-1)
    hi = np.asarray(box_upper, dtype=np.float64).reshape(-1)
    axes = [np.linspace(lo[i], hi[i], samples_per_axis) for i in range(lo.size)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    vals = eval_constraint(model, pts)
    worst = float(np.abs(vals).max())
    if worst > model.constraint_bound:
        raise ValueError(
            f"declared constraint bound {model.constraint_bound} violated: "
            f"sampled |h| reaches {worst}"
        )


def _poly_const(n: int, values: Sequence[float]) -> PolynomialMap:
    zero = tuple([0] * n)
    return PolynomialMap(n, len(values), tuple((((float(v), zero),) if v else ()) for v in values))


def _circle_constraint(radius_sq: float) -> Callable:
    def raw(x):
        pts = np.asarray(x, dtype=np.float64)
        sq = (pts * pts).sum(axis=-1)
        return sq - radius_sq

    return normalize_constraint(raw)


def _jet_engine(params: dict) -> GameModel:
    opts = dict(params)
    u_bounds = opts.pop("u_bounds", (-0.01, 0.01))
    d_bounds = opts.pop("d_bounds", (-0.02, 0.02))
    if opts:
        raise ValueError(f"unknown jet_engine parameters: {sorted(opts)}")
    # xdot = -y - 1.5 x^2 - 0.5 x^3 + d,  ydot = (0.8076 + u) x - 0.9424 y
    f1 = PolynomialMap(2, 2, (
        ((-1.0, (0, 1)), (-1.5, (2, 0)), (-0.5, (3, 0))),
        ((0.8076, (1, 0)), (-0.9424, (0, 1))),
    ))
    f2 = PolynomialMap(2, 2, ((), ((1.0, (1, 0)),)))      # column [0, x]
    f3 = PolynomialMap(2, 2, (((1.0, (0, 0)),), ()))      # column [1, 0]
    dyn = AffineDynamics(f1, f2, f3, control_dim=1, disturbance_dim=1)
    return GameModel(
        state_dim=2,
        control_box=Box([u_bounds[0]], [u_bounds[1]]),
        disturbance_box=Box([d_bounds[0]], [d_bounds[1]]),
        dynamics=dyn,
        constraint=_circle_constraint(0.25),
        constraint_bound=0.5,
        name="jet_engine",
    )


def _singleton_1d(params: dict) -> GameModel:
    if params:
        raise ValueError(f"unknown singleton_1d parameters: {sorted(params)}")
    f1 = PolynomialMap(1, 1, (((-1.0, (1,)),),))
    f2 = _poly_const(1, [0.0])
    f3 = _poly_const(1, [0.0])
    dyn = AffineDynamics(f1, f2, f3, control_dim=1, disturbance_dim=1)

    def raw(x):
        pts = np.asarray(x, dtype=np.float64)
        return pts[..., 0] ** 2 - 0.25

    return GameModel(
        state_dim=1,
        control_box=Box([0.0], [0.0]),
        disturbance_box=Box([0.0], [0.0]),
        dynamics=dyn,
        constraint=normalize_constraint(raw),
        constraint_bound=0.5,
        name="singleton_1d",
    )


def _affine_test_2d(params: dict) -> GameModel:
    opts = dict(params)
    a = np.asarray(opts.pop("a_matrix", [[-0.5, 0.0], [0.0, -0.5]]), dtype=np.float64)
    b = np.asarray(opts.pop("b_matrix", [[1.0, 0.0], [0.0, 1.0]]), dtype=np.float64)
    e = np.asarray(opts.pop("e_matrix", [[1.0, 0.0], [0.0, 1.0]]), dtype=np.float64)
    u_bounds = opts.pop("u_bounds", ([-0.1, -0.1], [0.1, 0.1]))
    d_bounds = opts.pop("d_bounds", ([-0.05, -0.05], [0.05, 0.05]))
    radius_sq = float(opts.pop("radius_sq", 0.25))
    if opts:
        raise ValueError(f"unknown affine_test_2d parameters: {sorted(opts)}")
    if a.shape != (2, 2):
        raise ValueError("a_matrix must be 2x2")
    m = b.shape[1]
    l = e.shape[1]

    def linear_terms(mat):
        rows = []
        for r in range(mat.shape[0]):
            row = []
            for c in range(2):
                if mat[r, c]:
                    exps = [0, 0]
                    exps[c] = 1
                    row.append((float(mat[r, c]), tuple(exps)))
            rows.append(tuple(row))
        return tuple(rows)

    def const_terms(mat):
        rows = []
        for r in range(mat.shape[0]):
            for c in range(mat.shape[1]):
                v = mat[r, c]
                rows.append(((float(v), (0, 0)),) if v else ())
        return tuple(rows)

    f1 = PolynomialMap(2, 2, linear_terms(a))
    f2 = PolynomialMap(2, 2 * m, const_terms(b))
    f3 = PolynomialMap(2, 2 * l, const_terms(e))
    dyn = AffineDynamics(f1, f2, f3, control_dim=m, disturbance_dim=l)
    return GameModel(
        state_dim=2,
        control_box=Box(u_bounds[0], u_bounds[1]),
        disturbance_box=Box(d_bounds[0], d_bounds[1]),
        dynamics=dyn,
        constraint=_circle_constraint(radius_sq),
        constraint_bound=0.5,
        name="affine_test_2d",
    )


BUILTIN_MODELS = {
    "jet_engine": _jet_engine,
    "singleton_1d": _singleton_1d,
    "affine_test_2d": _affine_test_2d,
}


def builtin_model(name: str, params: dict | None = None) -> GameModel:
    """Construct a built-in benchmark model by name.

    Known names: ``jet_engine`` (Moore-Greitzer surge model with bounded
    actuation and disturbance), ``singleton_1d`` (scalar contraction with
    singleton action sets, usable as an exact oracle target), and
    ``affine_test_2d`` (configurable linear system).
    """
    if name not in BUILTIN_MODELS:
        raise ValueError(f"unknown model {name!r}; known: {sorted(BUILTIN_MODELS)}")
    return BUILTIN_MODELS[name](dict(params or {}))
