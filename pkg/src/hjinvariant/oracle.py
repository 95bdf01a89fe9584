"""Brute-force ground truth for small instances.

Two independent references for testing the grid solvers:

* :func:`brute_force_value` -- plain value iteration on a fully discretized
  game (finite node set, finite action sets, one-step Euler transitions with
  multilinear weights).  It intentionally shares no code with the solver
  package: transitions are assembled here with an explicit floor-based
  weight construction and the recursion is written directly, so agreement
  with the semi-Lagrangian backend is a genuine cross-check.

* :func:`direct_payoff` -- for singleton action sets the game degenerates to
  a single trajectory, and the discounted running maximum of the constraint
  can be evaluated by quadrature-free sampling along an RK4 path.  The
  reported error bar combines the discounted tail bound with an observed
  one-step modulus of the sampled integrand.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import GameModel, eval_constraint
from .grid import Grid

__all__ = ["DiscreteGame", "brute_force_value", "direct_payoff"]


@dataclass
class DiscreteGame:
    """Fully discretized game on a coarse grid with finite action sets.

    Transitions take one explicit Euler step, clamp to the grid box, and
    distribute onto the enclosing cell's corners with multilinear weights.
    Weight tables are validated to be nonnegative and sum to one per
    (node, action pair).
    """

    grid: Grid
    model: GameModel
    control_points: np.ndarray
    disturbance_points: np.ndarray
    dt: float
    gamma: float

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        self.control_points = np.atleast_2d(np.asarray(self.control_points, dtype=np.float64))
        self.disturbance_points = np.atleast_2d(np.asarray(self.disturbance_points, dtype=np.float64))
        self.discount = float(np.exp(-self.gamma * self.dt))
        self.obstacle = np.asarray(
            eval_constraint(self.model, self.grid.node_points()), dtype=np.float64
        )
        self._build_transitions()

    def _build_transitions(self):
        grid = self.grid
        n = grid.dim
        nodes = grid.node_points()
        n_nodes = nodes.shape[0]
        counts = [int(c) for c in grid.counts]
        lower = grid.lower
        spacing = grid.spacing

        strides = [1] * n
        for i in reversed(range(n - 1)):
            strides[i] = strides[i + 1] * counts[i + 1]

        tables = []
        for d in self.disturbance_points:
            row = []
            for u in self.control_points:
                flow = self.model.dynamics(nodes, u, d)
                feet = nodes + self.dt * flow
                idx = np.empty((2**n, n_nodes), dtype=np.int64)
                wts = np.empty((2**n, n_nodes), dtype=np.float64)
                cell = []
                frac = []
                for i in range(n):
                    q = np.minimum(np.maximum(feet[:, i], lower[i]), grid.upper[i])
                    t = (q - lower[i]) / spacing[i]
                    c = np.floor(t).astype(np.int64)
                    c = np.minimum(np.maximum(c, 0), counts[i] - 2)
                    g = t - c
                    cell.append(c)
                    frac.append(np.minimum(np.maximum(g, 0.0), 1.0))
                for corner in range(2**n):
                    flat = np.zeros(n_nodes, dtype=np.int64)
                    w = np.ones(n_nodes)
                    for i in range(n):
                        bit = (corner >> (n - 1 - i)) & 1
                        flat += (cell[i] + bit) * strides[i]
                        w = w * (frac[i] if bit else (1.0 - frac[i]))
                    idx[corner] = flat
                    wts[corner] = w
                if wts.min() < 0 or np.abs(wts.sum(axis=0) - 1.0).max() > 1e-12:
                    raise AssertionError("transition weights must be a partition of unity")
                row.append((idx, wts))
            tables.append(row)
        self._tables = tables


def brute_force_value(game: DiscreteGame, kind: str, tol: float, max_iters: int = 10**7) -> np.ndarray:
    """Exact fixed point (to tol) of the discrete minimax recursion.

    ``V(x) = max{ h(x), discount * OPT_{u,d} sum_nodes w * V(node) }`` with
    OPT = max over disturbances of min over controls for the lower kind and
    the transposed ordering for the upper kind.  Straight value iteration
    from ``max(h, 0)``, no algorithmic shortcuts.
    """
    if kind not in ("lower", "upper"):
        raise ValueError(f"kind must be 'lower' or 'upper', got {kind!r}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    h = game.obstacle
    v = np.maximum(h, 0.0)
    beta = game.discount
    for _ in range(max_iters):
        if kind == "lower":
            outer = None
            for row in game._tables:
                inner = None
                for idx, wts in row:
                    ev = (wts * v[idx]).sum(axis=0)
                    inner = ev if inner is None else np.minimum(inner, ev)
                outer = inner if outer is None else np.maximum(outer, inner)
        else:
            outer = None
            for j in range(len(game._tables[0])):
                inner = None
                for row in game._tables:
                    idx, wts = row[j]
                    ev = (wts * v[idx]).sum(axis=0)
                    inner = ev if inner is None else np.maximum(inner, ev)
                outer = inner if outer is None else np.minimum(outer, inner)
        new = np.maximum(h, beta * outer)
        res = np.abs(new - v).max()
        v = new
        if res <= tol:
            return v
    raise RuntimeError(f"value iteration did not reach tol {tol} in {max_iters} iterations")


def direct_payoff(
    model: GameModel,
    x0,
    gamma: float,
    t_final: float | None = None,
    dt_sim: float = 0.01,
    tail_cut: float = 1e-6,
) -> tuple[float, float]:
    """Discounted running constraint maximum along the unique trajectory.

    Requires singleton action boxes.  Integrates with RK4 and returns
    ``(payoff, error_bar)`` where the payoff is the maximum of
    ``e^{-gamma t} h(x(t))`` over the sampled times and the error bar adds
    the tail bound ``e^{-gamma t_final} M`` to the largest observed one-step
    change of the sampled integrand.  ``t_final`` defaults to the horizon
    making the tail bound equal ``tail_cut``; an explicit shorter horizon is
    rejected.
    """
    if np.any(model.control_box.radius > 0) or np.any(model.disturbance_box.radius > 0):
        raise ValueError("direct payoff requires singleton control and disturbance boxes")
    if gamma <= 0 or dt_sim <= 0:
        raise ValueError("gamma and dt_sim must be positive")
    m_bound = model.constraint_bound
    needed = float(np.log(m_bound / tail_cut) / gamma)
    if t_final is None:
        t_final = needed
    elif np.exp(-gamma * t_final) * m_bound >= tail_cut:
        raise ValueError(
            f"t_final {t_final} too short: tail bound exceeds {tail_cut}; need >= {needed:.6g}"
        )
    u = model.control_box.center
    d = model.disturbance_box.center
    f = model.dynamics

    n_steps = int(np.ceil(t_final / dt_sim))
    x = np.asarray(x0, dtype=np.float64).reshape(-1)
    t = 0.0
    g_prev = float(eval_constraint(model, x))
    best = g_prev
    modulus = 0.0
    for _ in range(n_steps):
        k1 = f(x, u, d)
        k2 = f(x + (dt_sim / 2.0) * k1, u, d)
        k3 = f(x + (dt_sim / 2.0) * k2, u, d)
        k4 = f(x + dt_sim * k3, u, d)
        x = x + (dt_sim / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += dt_sim
        g = float(np.exp(-gamma * t) * eval_constraint(model, x))
        modulus = max(modulus, abs(g - g_prev))
        g_prev = g
        if g > best:
            best = g
    error_bar = float(np.exp(-gamma * t) * m_bound + modulus)
    return best, error_bar
