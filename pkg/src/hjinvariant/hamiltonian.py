"""Minimax Hamiltonians of the game and dissipation bounds for the FD scheme.

The lower Hamiltonian is ``H-(x, p) = sup_d inf_u p . f(x, u, d)`` and the
upper one swaps the order: ``H+(x, p) = inf_u sup_d p . f(x, u, d)``.

For control-affine dynamics with box action sets both optimizations decouple
into closed form: writing ``c = p^T f2(x)`` and ``e = p^T f3(x)``,

    H(x, p) = p . f1(x) + sum_j [c_j * center(U_j) - |c_j| * radius(U_j)]
                        + sum_k [e_k * center(D_k) + |e_k| * radius(D_k)],

identical for both orderings (the decoupling makes sup-inf equal inf-sup).
Otherwise the Hamiltonians are evaluated by sampling the action boxes: box
vertices for affine dynamics (the objective is multiaffine in the actions, so
its optimum sits at a vertex and vertex sampling is exact), a uniform per-axis
grid for general dynamics.

Because H is positively homogeneous of degree 1 in p, ``|dH/dp_i|`` is bounded
by the largest attainable ``|f_i|``; those bounds, inflated by a safety
factor, drive the Lax-Friedrichs dissipation and the explicit time steps.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dynamics import AffineDynamics, Box, GameModel
from .grid import Grid

__all__ = [
    "HamiltonianEvaluator",
    "make_evaluator",
    "action_samples",
    "eval_lower_hamiltonian",
    "eval_upper_hamiltonian",
    "dissipation_bounds",
    "dissipation_fields",
    "DEFAULT_SAFETY_FACTOR",
    "DEFAULT_GENERAL_SAMPLES",
]

DEFAULT_SAFETY_FACTOR = 1.1
DEFAULT_GENERAL_SAMPLES = 5


def action_samples(box: Box, per_axis: int | None, affine: bool) -> np.ndarray:
    """Deterministic action sample set for one player.

    Default plan: box vertices when the dynamics are affine in the actions
    (exact optimization of a multiaffine objective), otherwise a uniform grid
    with :data:`DEFAULT_GENERAL_SAMPLES` points per axis.  Explicit
    ``per_axis`` overrides either default.  Samples are ordered
    lexicographically over axes; optimizers break ties toward the first
    sample, so this ordering fixes every argmin/argmax in the package.
    """
    if per_axis is not None:
        return box.sample_grid(per_axis)
    if affine:
        return box.vertices()
    return box.sample_grid(DEFAULT_GENERAL_SAMPLES)


@dataclass(frozen=True)
class HamiltonianEvaluator:
    """Pointwise minimax Hamiltonian evaluator for one game model.

    ``mode`` is "analytic" (closed-form affine formula) or "sampled"
    (finite minimax over the action sample sets).  Analytic mode requires
    affine dynamics.
    """

    model: GameModel
    mode: str
    control_points: np.ndarray
    disturbance_points: np.ndarray
    safety_factor: float = DEFAULT_SAFETY_FACTOR

    def __post_init__(self):
        if self.mode not in ("analytic", "sampled"):
            raise ValueError(f"mode must be 'analytic' or 'sampled', got {self.mode!r}")
        if self.mode == "analytic" and not self.model.is_affine:
            raise ValueError("analytic mode requires affine dynamics")
        if self.safety_factor < 1.0:
            raise ValueError("safety factor must be >= 1")


def make_evaluator(
    model: GameModel,
    mode: str = "auto",
    control_samples: int | None = None,
    disturbance_samples: int | None = None,
    safety_factor: float = DEFAULT_SAFETY_FACTOR,
) -> HamiltonianEvaluator:
    """Build an evaluator; mode "auto" picks analytic for affine dynamics."""
    if mode == "auto":
        mode = "analytic" if model.is_affine else "sampled"
    return HamiltonianEvaluator(
        model=model,
        mode=mode,
        control_points=action_samples(model.control_box, control_samples, model.is_affine),
        disturbance_points=action_samples(model.disturbance_box, disturbance_samples, model.is_affine),
        safety_factor=safety_factor,
    )


def _analytic(ev: HamiltonianEvaluator, x: np.ndarray, p: np.ndarray) -> np.ndarray:
    dyn: AffineDynamics = ev.model.dynamics
    drift = dyn.drift(x)
    c = np.einsum("...i,...ij->...j", p, dyn.control_matrix(x))
    e = np.einsum("...i,...ij->...j", p, dyn.disturbance_matrix(x))
    ubox = ev.model.control_box
    dbox = ev.model.disturbance_box
    out = (p * drift).sum(axis=-1)
    out = out + (c * ubox.center - np.abs(c) * ubox.radius).sum(axis=-1)
    out = out + (e * dbox.center + np.abs(e) * dbox.radius).sum(axis=-1)
    return out


def _sampled(ev: HamiltonianEvaluator, x: np.ndarray, p: np.ndarray, lower: bool) -> np.ndarray:
    f = ev.model.dynamics
    if lower:
        outer = None
        for d in ev.disturbance_points:
            inner = None
            for u in ev.control_points:
                val = (p * f(x, u, d)).sum(axis=-1)
                inner = val if inner is None else np.minimum(inner, val)
            outer = inner if outer is None else np.maximum(outer, inner)
        return outer
    outer = None
    for u in ev.control_points:
        inner = None
        for d in ev.disturbance_points:
            val = (p * f(x, u, d)).sum(axis=-1)
            inner = val if inner is None else np.maximum(inner, val)
        outer = inner if outer is None else np.minimum(outer, inner)
    return outer


def _eval(ev: HamiltonianEvaluator, x, p, lower: bool) -> float | np.ndarray:
    xa = np.asarray(x, dtype=np.float64)
    pa = np.asarray(p, dtype=np.float64)
    if not (np.isfinite(xa).all() and np.isfinite(pa).all()):
        raise ValueError("Hamiltonian arguments must be finite")
    single = xa.ndim == 1
    if ev.mode == "analytic":
        out = _analytic(ev, xa, pa)
    else:
        out = _sampled(ev, xa, pa, lower)
    return float(out) if single else out


def eval_lower_hamiltonian(ev: HamiltonianEvaluator, x, p) -> float | np.ndarray:
    """sup over disturbances of inf over controls of p . f(x, u, d)."""
    return _eval(ev, x, p, lower=True)


def eval_upper_hamiltonian(ev: HamiltonianEvaluator, x, p) -> float | np.ndarray:
    """inf over controls of sup over disturbances of p . f(x, u, d)."""
    return _eval(ev, x, p, lower=False)


def _speed_fields(ev: HamiltonianEvaluator, points: np.ndarray) -> np.ndarray:
    """Per-axis attainable speed max over action samples: (n, N) array."""
    f = ev.model.dynamics
    n = ev.model.state_dim
    speeds = np.zeros((n, points.shape[0]))
    for d in ev.disturbance_points:
        for u in ev.control_points:
            vals = np.abs(f(points, u, d))
            np.maximum(speeds, vals.T, out=speeds)
    return speeds


def dissipation_bounds(ev: HamiltonianEvaluator, grid: Grid) -> np.ndarray:
    """Per-axis global bounds alpha_i >= max |f_i|, inflated by the safety factor.

    The scan covers all grid nodes crossed with the evaluator's action samples
    (box vertices for affine dynamics, where the extrema of the multiaffine
    components live).  An axis with identically zero dynamics gets a
    machine-epsilon floor and a warning.
    """
    speeds = _speed_fields(ev, grid.node_points())
    alpha = ev.safety_factor * speeds.max(axis=1)
    zero = alpha <= 0.0
    if np.any(zero):
        warnings.warn(
            "dynamics identically zero along axes %s; dissipation floored at machine epsilon"
            % np.flatnonzero(zero).tolist(),
            stacklevel=2,
        )
        alpha[zero] = np.finfo(np.float64).eps
    return alpha


def dissipation_fields(ev: HamiltonianEvaluator, grid: Grid) -> np.ndarray:
    """Per-node dissipation bounds alpha_i(x), shape (n, N), epsilon-floored.

    Local bounds keep the Lax-Friedrichs viscosity proportional to the locally
    attainable speed instead of the global maximum, which preserves the sharp
    flat regions of the value function in slow parts of the flow.
    """
    speeds = ev.safety_factor * _speed_fields(ev, grid.node_points())
    np.maximum(speeds, np.finfo(np.float64).eps, out=speeds)
    return speeds
