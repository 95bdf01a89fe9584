"""Command-line interface: solve, extract, compare, simulate, verify.

Exit codes: 0 on success, 1 on usage or configuration errors (and failed
verification checks), 2 when a solve stops without reaching its tolerance
(output files are still written).  Progress and timing go to standard error;
output files never contain timing, so repeated runs are byte-identical.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .dynamics import eval_constraint
from .grid import Grid, load_field, save_field
from .hamiltonian import make_evaluator, dissipation_bounds
from .oracle import DiscreteGame, brute_force_value
from .setops import (
    DEFAULT_EPSILON_SET,
    GridMask,
    MaskComparison,
    compare_masks,
    contour_to_csv,
    extract_sublevel,
    field_to_vtk,
    marching_squares,
    mask_from_csv,
    mask_to_csv,
)
from .solver import set_threads, solve_both_values, solve_fd, solve_sl, validate_grid_margin
from .synthesis import (
    ConstantPolicy,
    FeedbackPolicy,
    RandomPolicy,
    SequencePolicy,
    SimulationDiverged,
    simulate,
    trajectory_to_csv,
    verify_invariance,
)

BOUND_TOL = 1e-9


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on usage errors; the exit-code contract
    # reserves 2 for non-convergence, so remap usage errors to 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="hjinvariant", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default=".", help="output directory (default: current)")
        p.add_argument("--seed", type=int, default=None, help="override random seed")
        p.add_argument("--threads", type=int, default=0, help="sweep threads, 0 = auto")

    p = sub.add_parser("solve", parents=[], help="solve the stationary value inequalities")
    p.add_argument("--config", required=True)
    p.add_argument("--value", choices=("lower", "upper", "both"), default="both")
    p.add_argument("--backend", choices=("fd", "sl"), default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--progress-every", type=int, default=None)
    common(p)

    p = sub.add_parser("extract", help="extract sublevel masks and contours from a field file")
    p.add_argument("--field", required=True)
    p.add_argument("--epsilon-set", type=float, default=DEFAULT_EPSILON_SET)
    p.add_argument("--levels", default="", help="comma-separated contour levels (2-D only)")
    p.add_argument("--vtk", action="store_true", help="also write a VTK structured-points file")
    common(p)

    p = sub.add_parser("compare", help="compare two fields or two mask CSVs")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--epsilon-set", type=float, default=DEFAULT_EPSILON_SET)
    common(p)

    p = sub.add_parser("simulate", help="integrate one closed-loop trajectory")
    p.add_argument("--config", required=True)
    p.add_argument("--field", default=None, help="value field for feedback policies")
    p.add_argument("--x0", default=None, help="comma-separated initial state override")
    p.add_argument("--t-final", type=float, default=None)
    p.add_argument("--dt-sim", type=float, default=None)
    common(p)

    p = sub.add_parser("verify", help="run invariant checks and closed-loop verification")
    p.add_argument("--config", required=True)
    p.add_argument("--field", action="append", default=[], help="field file(s) to check")
    p.add_argument("--quick", action="store_true", help="only the coarse oracle equivalence check")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    common(p)
    return parser


def _outdir(args, rc: RunConfig | None = None) -> Path:
    out = args.out
    if out == "." and rc is not None and rc.has("paths"):
        out = rc.section("paths").get("out_dir", ".")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _cmd_solve(args) -> int:
    rc = load_config(args.config)
    rc.require("model", "grid", "solve")
    model = rc.build_model()
    grid = rc.build_grid()
    kinds = ("lower", "upper") if args.value == "both" else (args.value,)
    out = _outdir(args, rc)
    exit_code = 0

    cfg = rc.build_solve_config(
        backend=args.backend, tol=args.tol, max_iters=args.max_iters,
        progress_every=args.progress_every,
    )
    cfg.threads = args.threads

    if args.value == "both":
        result = solve_both_values(model, grid, cfg)
        fields = {"lower": (result.lower, result.lower_report), "upper": (result.upper, result.upper_report)}
        gap_text = (
            f"isaacs_gap_max = {result.gap_max:.17g}\n"
            f"isaacs_gap_min = {result.gap_min:.17g}\n"
            f"band_cells = {result.band_cells}\n"
        )
        (out / "isaacs.txt").write_text(gap_text, encoding="ascii")
        print(gap_text, end="")
    else:
        solve = solve_sl if cfg.backend == "sl" else solve_fd
        from dataclasses import replace

        fld, report = solve(model, grid, replace(cfg, kind=args.value))
        fields = {args.value: (fld, report)}

    for kind in kinds:
        fld, report = fields[kind]
        save_field(fld, out / f"V_{kind}.field")
        (out / f"report_{kind}.txt").write_text(report.to_text(), encoding="ascii")
        print(
            f"{kind}: converged={report.converged} iterations={report.iterations} "
            f"residual={report.final_residual:.3e}"
        )
        print(f"{kind}: wall time {report.wall_time:.1f} s", file=sys.stderr)
        if not report.converged:
            exit_code = 2
    return exit_code


def _cmd_extract(args) -> int:
    fld = load_field(args.field)
    if args.epsilon_set < 0:
        print("error: epsilon-set must be nonnegative", file=sys.stderr)
        return 1
    out = _outdir(args)
    mask = extract_sublevel(fld, args.epsilon_set)
    mask_to_csv(mask, out / "mask.csv")
    print(f"mask: {mask.count} of {mask.grid.num_points} nodes at epsilon_set {args.epsilon_set:g}")
    levels = [float(s) for s in args.levels.split(",") if s.strip() != ""]
    for level in levels:
        contour = marching_squares(fld, level)
        name = f"contour_{level:g}.csv"
        contour_to_csv(contour, out / name)
        print(f"contour level {level:g}: {len(contour.polylines)} polyline(s) -> {name}")
    if args.vtk:
        field_to_vtk(fld, out / "field.vtk")
    return 0


def _load_mask_or_field(path: str, epsilon_set: float):
    if path.endswith(".csv"):
        return mask_from_csv(path)
    fld = load_field(path)
    mask = extract_sublevel(fld, epsilon_set)
    return fld.grid.node_points(), mask.flags


def _cmd_compare(args) -> int:
    pa, fa = _load_mask_or_field(args.a, args.epsilon_set)
    pb, fb = _load_mask_or_field(args.b, args.epsilon_set)
    if pa.shape != pb.shape or not np.array_equal(pa, pb):
        print("error: inputs live on different grids", file=sys.stderr)
        return 1
    inter = int((fa & fb).sum())
    union = int((fa | fb).sum())
    only_a = int((fa & ~fb).sum())
    only_b = int((fb & ~fa).sum())
    report = MaskComparison(
        only_a=only_a, only_b=only_b, intersection=inter,
        jaccard=1.0 if union == 0 else inter / union,
        symmetric_difference_fraction=0.0 if union == 0 else (only_a + only_b) / union,
    )
    print(report.to_text(), end="")
    return 0


def _policies(rc: RunConfig, model, fld, seed):
    sec = rc.section("simulate")
    kind = sec.get("control_policy", "feedback")
    if kind == "feedback":
        if fld is None:
            raise ConfigError("feedback control policy requires --field")
        control = FeedbackPolicy.for_control(fld, model)
    elif kind == "constant":
        control = ConstantPolicy(np.asarray(sec.get("control_value"), dtype=float))
    elif kind == "sequence":
        control = SequencePolicy(np.asarray(sec.get("control_sequence"), dtype=float))
    else:
        raise ConfigError(f"unknown control policy {kind!r}")
    kind = sec.get("disturbance_policy", "worst")
    if kind == "worst":
        if fld is None:
            raise ConfigError("worst-case disturbance policy requires --field")
        disturbance = FeedbackPolicy.for_disturbance(fld, model)
    elif kind == "random":
        disturbance = RandomPolicy(int(seed))
    elif kind == "constant":
        disturbance = ConstantPolicy(np.asarray(sec.get("disturbance_value"), dtype=float))
    elif kind == "sequence":
        disturbance = SequencePolicy(np.asarray(sec.get("disturbance_sequence"), dtype=float))
    else:
        raise ConfigError(f"unknown disturbance policy {kind!r}")
    return control, disturbance


def _cmd_simulate(args) -> int:
    rc = load_config(args.config)
    rc.require("model", "simulate")
    model = rc.build_model()
    sec = rc.section("simulate")
    fld = load_field(args.field) if args.field else None
    seed = args.seed if args.seed is not None else sec.get("seed", 0)
    x0 = np.asarray(
        [float(v) for v in args.x0.split(",")] if args.x0 else sec.get("x0"), dtype=float
    )
    t_final = args.t_final if args.t_final is not None else float(sec.get("t_final", 10.0))
    dt_sim = args.dt_sim if args.dt_sim is not None else float(sec.get("dt_sim", 0.01))
    control, disturbance = _policies(rc, model, fld, seed)
    out = _outdir(args, rc)
    try:
        traj = simulate(model, control, disturbance, x0, t_final, dt_sim)
    except SimulationDiverged as exc:
        if exc.partial is not None:
            trajectory_to_csv(exc.partial, out / "trajectory.csv")
        print(f"error: {exc}", file=sys.stderr)
        return 1
    trajectory_to_csv(traj, out / "trajectory.csv")
    print(f"trajectory: {traj.times.shape[0]} samples, sup h = {traj.sup_constraint:.6g}")
    return 0


def _oracle_equivalence(rc: RunConfig, threads: int) -> float:
    model = rc.build_model()
    box = rc.build_grid()
    vsec = rc.section("verify", default={})
    counts = vsec.get("oracle_counts", [21] * box.dim)
    tol = float(vsec.get("oracle_tol", 1e-13))
    coarse = Grid(box.lower, box.upper, np.asarray(counts))
    ev = make_evaluator(model)
    alpha = dissipation_bounds(ev, coarse)
    dt = float(coarse.spacing.min() / (2.0 * alpha.max()))
    cfg = rc.build_solve_config(backend="sl", tol=tol, dt=dt)
    cfg.threads = threads
    game = DiscreteGame(
        grid=coarse, model=model,
        control_points=ev.control_points, disturbance_points=ev.disturbance_points,
        dt=dt, gamma=cfg.gamma,
    )
    worst = 0.0
    from dataclasses import replace

    for kind in ("lower", "upper"):
        fld, report = solve_sl(model, coarse, replace(cfg, kind=kind))
        ref = brute_force_value(game, kind, tol)
        worst = max(worst, float(np.abs(fld.values - ref).max()))
    return worst


def _cmd_verify(args) -> int:
    rc = load_config(args.config)
    rc.require("model")
    model = rc.build_model()
    failures = []
    checks = []

    def check(name, ok, detail=""):
        checks.append((name, ok, detail))
        if not ok:
            failures.append(name)

    if args.quick:
        rc.require("grid")
        diff = _oracle_equivalence(rc, args.threads)
        check("oracle-equivalence", diff <= 1e-10, f"sup diff {diff:.3e}")
    else:
        loaded = []
        for path in args.field:
            fld = load_field(path)
            loaded.append((path, fld))
            h = np.asarray(eval_constraint(model, fld.grid.node_points()))
            m = model.constraint_bound
            check(
                f"value-bounds[{path}]",
                fld.values.min() >= -BOUND_TOL and fld.values.max() <= m + BOUND_TOL,
                f"min {fld.values.min():.3e} max {fld.values.max():.6g} bound {m:g}",
            )
            check(
                f"obstacle-dominance[{path}]",
                bool((fld.values >= h - BOUND_TOL).all()),
                f"worst slack {float((fld.values - h).min()):.3e}",
            )
            try:
                validate_grid_margin(model, fld.grid, rc.epsilon_set())
                check(f"grid-margin[{path}]", True)
            except ValueError as exc:
                check(f"grid-margin[{path}]", False, str(exc))
        kinds = {fld.kind: fld for _, fld in loaded}
        if "lower" in kinds and "upper" in kinds:
            lo, hi = kinds["lower"], kinds["upper"]
            if lo.grid.shape == hi.grid.shape:
                worst = float((hi.values - lo.values).min())
                check("minimax-order", worst >= -BOUND_TOL, f"min(V+ - V-) = {worst:.3e}")
        if rc.has("grid"):
            diff = _oracle_equivalence(rc, args.threads)
            check("oracle-equivalence", diff <= 1e-10, f"sup diff {diff:.3e}")
        if loaded and rc.has("verify"):
            vsec = rc.section("verify")
            fld = kinds.get("lower", loaded[0][1])
            mask = extract_sublevel(fld, rc.epsilon_set())
            report = verify_invariance(
                model, fld, mask,
                trials=args.trials if args.trials is not None else int(vsec.get("trials", 100)),
                epsilon=args.epsilon if args.epsilon is not None else float(vsec.get("epsilon", 0.05)),
                t_final=float(vsec.get("t_final", 10.0)),
                dt_sim=float(vsec.get("dt_sim", 0.01)),
                seed=args.seed if args.seed is not None else int(vsec.get("seed", 0)),
            )
            out = _outdir(args, rc)
            (out / "verification.txt").write_text(report.to_text(), encoding="ascii")
            print(report.to_text(), end="")

    for name, ok, detail in checks:
        print(f"{'ok  ' if ok else 'FAIL'} {name}" + (f": {detail}" if detail else ""))
    if failures:
        print(f"error: violated invariant(s): {', '.join(failures)}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if getattr(args, "threads", None) is not None:
        set_threads(args.threads)
    try:
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command == "extract":
            return _cmd_extract(args)
        if args.command == "compare":
            return _cmd_compare(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "verify":
            return _cmd_verify(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
