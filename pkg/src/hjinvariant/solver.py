"""Stationary solvers for the obstacle-form Hamilton-Jacobi inequalities.

Both backends compute the discounted value of the constrained game, i.e. the
bounded solution of ``min{gamma*V - H(x, dV/dx), V - h} = 0`` on a grid, with
``H`` the sup-inf (lower) or inf-sup (upper) minimax Hamiltonian.

FD backend -- explicit pseudo-time marching

    V <- V - dt * min{gamma*V - Hhat(x, D-V, D+V), V - h}

with the Lax-Friedrichs numerical Hamiltonian built from central gradients
plus per-axis gradient-jump dissipation, and dt from the CFL bound
``cfl / (gamma + sum_i alpha_i / dx_i)``.  The sweep is monotone under that
bound, which traps every iterate (and hence the converged field) inside
``[0, M]`` given the ``max(h, 0)`` start.  Convergence is measured on the
sup-norm of the variational-inequality residual itself.

SL backend -- fixed-point iteration of the discrete dynamic programming form

    V <- max{ h, e^{-gamma*dt} * OPT_{u,d} V(clamp(x + dt f(x,u,d))) }

where OPT is max over disturbance samples of min over control samples for the
lower value (the disturbance commits first) and the transposed ordering for
the upper value, and the transported value is read off by multilinear
interpolation.  The map is a sup-norm contraction with factor
``e^{-gamma*dt}`` and is monotone, so iterates from ``max(h, 0)`` increase
toward the fixed point; convergence is measured on the sup-norm of the
iterate difference.

Both backends start from ``V0 = max(h, 0)``, which is a subsolution of both
sweeps: it makes SL iterates nondecreasing, keeps every iterate inside the
provable value band ``[0, M]``, and removes the slow transient that a start
from ``h`` suffers inside the safe core.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dynamics import GameModel, eval_constraint
from .grid import Grid, ValueField, build_interpolation_stencil, interior_band_mask
from .hamiltonian import (
    DEFAULT_SAFETY_FACTOR,
    HamiltonianEvaluator,
    dissipation_bounds,
    dissipation_fields,
    make_evaluator,
)

__all__ = [
    "SolveConfig",
    "SolveReport",
    "BothValuesResult",
    "solve_fd",
    "solve_sl",
    "solve_both_values",
    "validate_grid_margin",
    "set_threads",
    "BOUNDARY_BAND_CELLS",
]

BOUNDARY_BAND_CELLS = 2


def set_threads(threads: int) -> int:
    """Set the sweep thread count; 0 means all available.  Returns the count.

    Sweeps are bit-identical for any thread count, so this only affects speed.
    """
    import numba

    maximum = numba.config.NUMBA_NUM_THREADS
    n = maximum if threads <= 0 else min(threads, maximum)
    numba.set_num_threads(n)
    return n


@dataclass
class SolveConfig:
    """Discretization and convergence settings for one solve.

    dt = None selects the backend default: the CFL step
    ``cfl / (gamma + sum_i alpha_i/dx_i)`` for FD, and
    ``min_i dx_i / (2 max_i alpha_i)`` for SL (foot points then typically stay
    within one cell).  ``fd_dissipation`` chooses per-node ("local") or global
    Lax-Friedrichs dissipation bounds.  ``margin_epsilon`` is the sublevel
    threshold used by the grid-margin precondition check (None skips it).
    """

    gamma: float = 0.1
    backend: str = "sl"
    kind: str = "lower"
    dt: float | None = None
    cfl: float = 0.5
    tol: float = 1e-8
    max_iters: int = 200000
    hamiltonian_mode: str = "auto"
    control_samples: int | None = None
    disturbance_samples: int | None = None
    safety_factor: float = DEFAULT_SAFETY_FACTOR
    fd_dissipation: str = "local"
    foot_rule: str = "euler"
    margin_epsilon: float | None = 0.01
    progress_every: int = 0
    threads: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError("gamma must be positive")
        if self.backend not in ("fd", "sl"):
            raise ValueError(f"backend must be 'fd' or 'sl', got {self.backend!r}")
        if self.kind not in ("lower", "upper"):
            raise ValueError(f"kind must be 'lower' or 'upper', got {self.kind!r}")
        if self.dt is not None and not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError("explicit dt must be positive")
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.hamiltonian_mode not in ("auto", "analytic", "sampled"):
            raise ValueError(f"bad hamiltonian mode {self.hamiltonian_mode!r}")
        if self.fd_dissipation not in ("local", "global"):
            raise ValueError(f"fd_dissipation must be 'local' or 'global', got {self.fd_dissipation!r}")
        if self.foot_rule not in ("euler", "rk2"):
            raise ValueError(f"foot_rule must be 'euler' or 'rk2', got {self.foot_rule!r}")


@dataclass
class SolveReport:
    """Outcome of one solve.  ``converged`` implies final residual <= tol.

    ``contraction_max``/``contraction_mean`` summarize the per-iteration
    residual ratios after the first sweep.  ``wall_time`` is in-memory
    diagnostics only; the serialized report omits it so repeated runs produce
    byte-identical files.
    """

    backend: str
    kind: str
    iterations: int
    converged: bool
    final_residual: float
    tol: float
    gamma: float
    dt: float
    dissipation: np.ndarray
    contraction_max: float
    contraction_mean: float
    wall_time: float = 0.0
    min_update_history: np.ndarray = field(default_factory=lambda: np.empty(0))

    def to_text(self) -> str:
        lines = [
            f"backend = {self.backend}",
            f"kind = {self.kind}",
            f"converged = {'true' if self.converged else 'false'}",
            f"iterations = {self.iterations}",
            f"final_residual = {self.final_residual:.17g}",
            f"tol = {self.tol:.17g}",
            f"gamma = {self.gamma:.17g}",
            f"dt = {self.dt:.17g}",
            "dissipation = " + " ".join(f"{a:.17g}" for a in self.dissipation),
            f"contraction_max = {self.contraction_max:.17g}",
            f"contraction_mean = {self.contraction_mean:.17g}",
        ]
        return "\n".join(lines) + "\n"


@dataclass
class BothValuesResult:
    """Lower and upper solves on the same discretization plus their gap.

    The gap statistics are taken over nodes outside the boundary band; the
    minimum doubles as a check of the discrete minimax inequality
    ``V- <= V+``.
    """

    lower: ValueField
    upper: ValueField
    lower_report: SolveReport
    upper_report: SolveReport
    gap_max: float
    gap_min: float
    band_cells: int = BOUNDARY_BAND_CELLS


def validate_grid_margin(
    model: GameModel,
    grid: Grid,
    epsilon_set: float = 0.01,
    margin_cells: int = BOUNDARY_BAND_CELLS,
    samples_per_axis: int = 129,
) -> None:
    """Check that {h <= epsilon_set} sits inside the grid box with a margin.

    Densely samples the band between the ``margin_cells``-shrunk box and the
    full box and requires ``h > epsilon_set`` there; a violation means the
    computational box truncates the constraint set, which invalidates the
    clamping of foot points and boundary extrapolation.
    """
    shrink = margin_cells * grid.spacing
    inner_lo = grid.lower + shrink
    inner_hi = grid.upper - shrink
    if np.any(inner_lo >= inner_hi):
        raise ValueError("grid too coarse for the requested margin")
    axes = [np.linspace(grid.lower[i], grid.upper[i], samples_per_axis) for i in range(grid.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    in_band = np.any((pts < inner_lo) | (pts > inner_hi), axis=1)
    band_pts = pts[in_band]
    hv = eval_constraint(model, band_pts)
    bad = hv <= epsilon_set
    if np.any(bad):
        worst = band_pts[np.argmin(hv)]
        raise ValueError(
            f"sublevel set {{h <= {epsilon_set}}} reaches within {margin_cells} cells of the "
            f"grid boundary (h = {float(np.min(hv)):.6g} at {worst.tolist()}); enlarge the box"
        )


def _strides(counts: np.ndarray) -> np.ndarray:
    n = counts.size
    strides = np.empty(n, dtype=np.int64)
    s = 1
    for i in reversed(range(n)):
        strides[i] = s
        s *= int(counts[i])
    return strides


def _setup(model: GameModel, grid: Grid, config: SolveConfig):
    if config.margin_epsilon is not None:
        validate_grid_margin(model, grid, config.margin_epsilon)
    ev = make_evaluator(
        model,
        mode=config.hamiltonian_mode,
        control_samples=config.control_samples,
        disturbance_samples=config.disturbance_samples,
        safety_factor=config.safety_factor,
    )
    alpha = dissipation_bounds(ev, grid)
    points = grid.node_points()
    obstacle = np.asarray(eval_constraint(model, points), dtype=np.float64)
    set_threads(config.threads)
    return ev, alpha, points, obstacle


def _progress(config: SolveConfig, k: int, res: float) -> None:
    if config.progress_every > 0 and (k + 1) % config.progress_every == 0:
        print(f"iter {k + 1}  residual {res:.6e}", file=sys.stderr)


def _contraction_stats(history: np.ndarray) -> tuple[float, float]:
    if history.size < 2:
        return float("nan"), float("nan")
    prev = history[:-1]
    nxt = history[1:]
    ok = prev > 0
    if not ok.any():
        return float("nan"), float("nan")
    ratios = nxt[ok] / prev[ok]
    return float(ratios.max()), float(ratios.mean())


def solve_sl(model: GameModel, grid: Grid, config: SolveConfig) -> tuple[ValueField, SolveReport]:
    """Solve by semi-Lagrangian fixed-point iteration.

    Foot points use one explicit Euler step by default (``foot_rule="rk2"``
    selects a midpoint step) and are clamped to the grid box before the
    multilinear read-back.  Non-convergence within ``max_iters`` is reported,
    not raised.
    """
    t0 = time.perf_counter()
    ev, alpha, points, obstacle = _setup(model, grid, config)
    dt = config.dt if config.dt is not None else float(grid.spacing.min() / (2.0 * alpha.max()))
    beta = float(np.exp(-config.gamma * dt))

    u_pts = ev.control_points
    d_pts = ev.disturbance_points
    combos_idx = []
    combos_w = []
    dyn = model.dynamics
    for d in d_pts:
        for u in u_pts:
            flow = dyn(points, u, d)
            if config.foot_rule == "rk2":
                mid = points + (0.5 * dt) * flow
                flow = dyn(mid, u, d)
            feet = points + dt * flow
            idx, w = build_interpolation_stencil(grid, feet)
            combos_idx.append(idx)
            combos_w.append(w)
    corner_idx = np.ascontiguousarray(np.stack(combos_idx))
    corner_w = np.ascontiguousarray(np.stack(combos_w))

    values = np.maximum(obstacle, 0.0)
    out = np.empty_like(values)
    history = []
    min_updates = []
    converged = False
    res = float("inf")
    k = 0
    for k in range(config.max_iters):
        res, min_delta = _kernels.sl_sweep(
            values, out, obstacle, corner_idx, corner_w,
            len(d_pts), len(u_pts), beta, config.kind == "lower",
        )
        values, out = out, values
        history.append(res)
        min_updates.append(min_delta)
        _progress(config, k, res)
        if res <= config.tol:
            converged = True
            break

    history = np.asarray(history)
    cmax, cmean = _contraction_stats(history)
    fld = ValueField(grid, values, config.gamma, config.kind, residual_history=history)
    report = SolveReport(
        backend="sl",
        kind=config.kind,
        iterations=k + 1,
        converged=converged,
        final_residual=float(res),
        tol=config.tol,
        gamma=config.gamma,
        dt=dt,
        dissipation=alpha,
        contraction_max=cmax,
        contraction_mean=cmean,
        wall_time=time.perf_counter() - t0,
        min_update_history=np.asarray(min_updates),
    )
    return fld, report


def solve_fd(model: GameModel, grid: Grid, config: SolveConfig) -> tuple[ValueField, SolveReport]:
    """Solve by explicit Lax-Friedrichs time marching.

    An explicit ``dt`` above the CFL bound is a configuration error;
    non-convergence within ``max_iters`` is reported, not raised.
    """
    t0 = time.perf_counter()
    ev, alpha, points, obstacle = _setup(model, grid, config)
    dx = grid.spacing
    dt_cfl = float(config.cfl / (config.gamma + (alpha / dx).sum()))
    if config.dt is None:
        dt = dt_cfl
    else:
        dt = config.dt
        limit = 1.0 / (config.gamma + (alpha / dx).sum())
        if dt > limit:
            raise ValueError(f"explicit dt {dt} violates the CFL bound {limit}")

    if config.fd_dissipation == "local":
        alpha_nodes = np.ascontiguousarray(dissipation_fields(ev, grid))
    else:
        alpha_nodes = np.ascontiguousarray(
            np.repeat(alpha[:, None], grid.num_points, axis=1)
        )
    inv_dx = np.ascontiguousarray(1.0 / dx)
    counts = np.ascontiguousarray(grid.counts.astype(np.int64))
    strides = _strides(grid.counts)

    values = np.maximum(obstacle, 0.0)
    out = np.empty_like(values)
    pbar_buf = np.empty((grid.num_points, grid.dim))
    history = []
    converged = False
    res = float("inf")
    k = 0

    if ev.mode == "analytic":
        dyn = model.dynamics
        drift = np.ascontiguousarray(dyn.drift(points))
        ctrl_mat = np.ascontiguousarray(dyn.control_matrix(points))
        dist_mat = np.ascontiguousarray(dyn.disturbance_matrix(points))
        ubox, dbox = model.control_box, model.disturbance_box
        for k in range(config.max_iters):
            res = _kernels.fd_sweep_affine(
                values, out, obstacle, drift, ctrl_mat, dist_mat,
                ubox.center, ubox.radius, dbox.center, dbox.radius,
                alpha_nodes, inv_dx, counts, strides, config.gamma, dt, pbar_buf,
            )
            values, out = out, values
            history.append(res)
            _progress(config, k, res)
            if res <= config.tol:
                converged = True
                break
    else:
        flows = []
        for d in ev.disturbance_points:
            for u in ev.control_points:
                flows.append(model.dynamics(points, u, d))
        flow = np.ascontiguousarray(np.stack(flows))
        for k in range(config.max_iters):
            res = _kernels.fd_sweep_sampled(
                values, out, obstacle, flow,
                len(ev.disturbance_points), len(ev.control_points),
                alpha_nodes, inv_dx, counts, strides, config.gamma, dt,
                config.kind == "lower", pbar_buf,
            )
            values, out = out, values
            history.append(res)
            _progress(config, k, res)
            if res <= config.tol:
                converged = True
                break

    history = np.asarray(history)
    cmax, cmean = _contraction_stats(history)
    fld = ValueField(grid, values, config.gamma, config.kind, residual_history=history)
    report = SolveReport(
        backend="fd",
        kind=config.kind,
        iterations=k + 1,
        converged=converged,
        final_residual=float(res),
        tol=config.tol,
        gamma=config.gamma,
        dt=dt,
        dissipation=alpha,
        contraction_max=cmax,
        contraction_mean=cmean,
        wall_time=time.perf_counter() - t0,
    )
    return fld, report


def solve_both_values(
    model: GameModel, grid: Grid, config: SolveConfig
) -> BothValuesResult:
    """Solve both game orderings on one discretization and report their gap.

    A vanishing gap is the numerical reflection of the Isaacs condition; a
    negative minimum beyond round-off would violate the discrete minimax
    inequality and indicates a bug.
    """
    from dataclasses import replace

    solve = solve_sl if config.backend == "sl" else solve_fd
    lower, rep_lo = solve(model, grid, replace(config, kind="lower"))
    upper, rep_hi = solve(model, grid, replace(config, kind="upper"))
    band = interior_band_mask(grid, BOUNDARY_BAND_CELLS)
    gap = upper.values[band] - lower.values[band]
    return BothValuesResult(
        lower=lower,
        upper=upper,
        lower_report=rep_lo,
        upper_report=rep_hi,
        gap_max=float(gap.max()),
        gap_min=float(gap.min()),
    )
