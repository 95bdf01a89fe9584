"""Acceptance suite: the release gate, one test per criterion.

Each criterion prints a single summary line (run with ``pytest -s`` to see
them live).  The jet-engine reference setup is the 201x201 grid on
[-1, 1]^2 with discount 0.1, semi-Lagrangian backend, tolerance 1e-8.
"""

from __future__ import annotations

import time
from dataclasses import replace

import numpy as np
import pytest

from hjinvariant import Grid, SolveConfig, builtin_model, solve_both_values, solve_fd, solve_sl
from hjinvariant.cli import main
from hjinvariant.dynamics import eval_constraint
from hjinvariant.grid import interior_band_mask, interpolate, load_field, save_field
from hjinvariant.hamiltonian import dissipation_bounds, make_evaluator
from hjinvariant.oracle import DiscreteGame, brute_force_value, direct_payoff
from hjinvariant.setops import compare_masks, extract_sublevel, mask_to_csv
from hjinvariant.synthesis import verify_invariance

GAMMA = 0.1
TOL = 1e-8
BOUND_M = 0.5
NONNEG_TOL = 1e-9
EPSILON_SET = 0.01


def report(criterion: int, passed: bool, detail: str) -> None:
    print(f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} - {detail}")
    assert passed, detail


@pytest.fixture(scope="module")
def reference(jet_model):
    """Criterion-1 setup: SL both kinds on the 201x201 reference grid."""
    grid = Grid([-1.0, -1.0], [1.0, 1.0], [201, 201])
    cfg = SolveConfig(gamma=GAMMA, backend="sl", tol=TOL)
    t0 = time.perf_counter()
    result = solve_both_values(jet_model, grid, cfg)
    return grid, result, time.perf_counter() - t0


@pytest.fixture(scope="module")
def fd_reference(jet_model, reference):
    grid, _, _ = reference
    t0 = time.perf_counter()
    fld, rep = solve_fd(jet_model, grid, SolveConfig(gamma=GAMMA, backend="fd", tol=1e-7))
    return fld, rep, time.perf_counter() - t0


def test_criterion_1_jet_engine_benchmark(jet_model, reference):
    grid, result, elapsed = reference
    lo, hi = result.lower, result.upper

    converged = result.lower_report.converged and result.upper_report.converged
    assert converged, "criterion 1a: both solves must converge"

    vmin = min(lo.values.min(), hi.values.min())
    vmax = max(lo.values.max(), hi.values.max())
    ok_bounds = vmin >= -NONNEG_TOL and vmax <= BOUND_M + NONNEG_TOL

    ok_order = (hi.values - lo.values).min() >= -NONNEG_TOL

    band = interior_band_mask(grid, 2)
    gap = float((hi.values - lo.values)[band].max())
    ok_gap = gap <= 5e-3

    mask_lo = extract_sublevel(lo, EPSILON_SET)
    mask_hi = extract_sublevel(hi, EPSILON_SET)
    cmp = compare_masks(mask_lo, mask_hi)
    ok_masks = mask_lo.count > 0 and cmp.symmetric_difference_fraction <= 0.01

    h = np.asarray(eval_constraint(jet_model, grid.node_points()))
    ok_contained = bool((h[mask_lo.flags] <= EPSILON_SET).all()
                        and (h[mask_hi.flags] <= EPSILON_SET).all())

    report(
        1,
        converged and ok_bounds and ok_order and ok_gap and ok_masks and ok_contained,
        f"converged both; V in [{vmin:.2e}, {vmax:.6f}]; min(V+-V-) >= {-NONNEG_TOL}; "
        f"isaacs gap {gap:.2e} <= 5e-3; mask symdiff {cmp.symmetric_difference_fraction:.4f} <= 0.01 "
        f"({mask_lo.count} nodes); masks inside {{h <= 0.01}}; {elapsed:.0f}s",
    )


def test_criterion_2_oracle_equivalence(jet_model):
    t0 = time.perf_counter()
    grid = Grid([-1.0, -1.0], [1.0, 1.0], [21, 21])
    ev = make_evaluator(jet_model)  # affine: box-vertex action samples
    alpha = dissipation_bounds(ev, grid)
    dt = float(grid.spacing.min() / (2.0 * alpha.max()))
    game = DiscreteGame(
        grid=grid, model=jet_model, control_points=ev.control_points,
        disturbance_points=ev.disturbance_points, dt=dt, gamma=GAMMA,
    )
    worst = 0.0
    for kind in ("lower", "upper"):
        fld, rep = solve_sl(jet_model, grid, SolveConfig(gamma=GAMMA, tol=1e-13, dt=dt, kind=kind))
        assert rep.converged
        ref = brute_force_value(game, kind, 1e-13)
        worst = max(worst, float(np.abs(fld.values - ref).max()))
    report(2, worst <= 1e-10,
           f"SL vs value iteration sup diff {worst:.2e} <= 1e-10 (both kinds, identical dt); "
           f"{time.perf_counter() - t0:.0f}s")


def test_criterion_3_backend_consistency(jet_model, reference, fd_reference):
    grid, result, _ = reference
    fd_fld, fd_rep, fd_elapsed = fd_reference
    assert fd_rep.converged

    band = interior_band_mask(grid, 2)
    diff_fine = float(np.abs(fd_fld.values - result.lower.values)[band].max())
    ok_sup = diff_fine <= 0.02

    mask_sl = extract_sublevel(result.lower, EPSILON_SET)
    mask_fd = extract_sublevel(fd_fld, EPSILON_SET)
    frac = compare_masks(mask_sl, mask_fd).symmetric_difference_fraction
    ok_masks = frac <= 0.02

    # refinement: coarse comparison at half the resolution (dx doubled)
    coarse = Grid([-1.0, -1.0], [1.0, 1.0], [101, 101])
    sl_c, _ = solve_sl(jet_model, coarse, SolveConfig(gamma=GAMMA, tol=TOL))
    fd_c, _ = solve_fd(jet_model, coarse, SolveConfig(gamma=GAMMA, backend="fd", tol=1e-7))
    band_c = interior_band_mask(coarse, 2)
    diff_coarse = float(np.abs(fd_c.values - sl_c.values)[band_c].max())
    ok_refine = diff_fine <= diff_coarse

    report(3, ok_sup and ok_masks and ok_refine,
           f"FD-SL sup off band {diff_fine:.4f} <= 0.02; mask symdiff {frac:.4f} <= 0.02; "
           f"halving dx shrinks discrepancy ({diff_coarse:.4f} -> {diff_fine:.4f}); "
           f"FD {fd_elapsed:.0f}s")


def test_criterion_4_contraction_and_monotonicity(reference):
    _, result, _ = reference
    worst_excess = -np.inf
    worst_drop = np.inf
    for fld, rep in ((result.lower, result.lower_report), (result.upper, result.upper_report)):
        hist = fld.residual_history
        beta = np.exp(-rep.gamma * rep.dt)
        excess = float((hist[1:] - (beta * hist[:-1] + 1e-12)).max())
        worst_excess = max(worst_excess, excess)
        worst_drop = min(worst_drop, float(rep.min_update_history.min()))
    report(4, worst_excess <= 0.0 and worst_drop >= -1e-12,
           f"residual ratios within e^(-gamma dt) (worst excess {worst_excess:.2e}); "
           f"iterates nondecreasing (worst delta {worst_drop:.2e} >= -1e-12)")


def test_criterion_5_singleton_payoff_match(singleton_model):
    t0 = time.perf_counter()
    grid = Grid([-1.0], [1.0], [401])  # dx = 0.005
    fld, rep = solve_sl(singleton_model, grid, SolveConfig(gamma=GAMMA, tol=1e-10))
    assert rep.converged
    rng = np.random.default_rng(2024)
    x0s = rng.uniform(-1.0, 1.0, size=50)
    worst = -np.inf
    for x0 in x0s:
        payoff, err = direct_payoff(singleton_model, np.array([x0]), gamma=GAMMA, dt_sim=0.01)
        gap = abs(float(interpolate(fld, np.array([x0]))) - payoff)
        worst = max(worst, gap - err)
    report(5, worst <= 0.05,
           f"50 states: max(|V - payoff| - errbar) = {worst:.2e} <= 0.05; "
           f"{time.perf_counter() - t0:.0f}s")


def test_criterion_6_closed_loop_invariance(jet_model, reference):
    _, result, _ = reference
    t0 = time.perf_counter()
    mask = extract_sublevel(result.lower, EPSILON_SET)
    kwargs = dict(trials=100, epsilon=0.05, t_final=10.0, dt_sim=0.01, seed=2024)
    rep1 = verify_invariance(jet_model, result.lower, mask, **kwargs)
    rep2 = verify_invariance(jet_model, result.lower, mask, **kwargs)
    ok_fraction = rep1.pass_fraction >= 0.99
    ok_repro = np.array_equal(rep1.per_run_sup, rep2.per_run_sup) and rep1.to_text() == rep2.to_text()
    report(6, ok_fraction and ok_repro,
           f"pass fraction {rep1.pass_fraction:.3f} >= 0.99 over {rep1.runs} runs "
           f"(worst sup h {rep1.worst_sup_constraint:.4f}, mode {rep1.worst_disturbance_mode}); "
           f"bit-identical repeat; {time.perf_counter() - t0:.0f}s")


def test_criterion_7_determinism(tmp_path, jet_model, reference, fd_reference):
    t0 = time.perf_counter()
    grid, result, _ = reference
    fd_fld, _, _ = fd_reference

    # field files from the session artifacts
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    save_field(result.lower, a / "V_lower.field")
    save_field(fd_fld, a / "V_fd.field")

    # re-solve the reference lower value at different thread counts
    re_lo, _ = solve_sl(jet_model, grid, SolveConfig(gamma=GAMMA, tol=TOL, threads=1))
    re_fd, _ = solve_fd(jet_model, grid, SolveConfig(gamma=GAMMA, backend="fd", tol=1e-7, threads=1))
    save_field(re_lo, b / "V_lower.field")
    save_field(re_fd, b / "V_fd.field")
    ok_fields = (
        (a / "V_lower.field").read_bytes() == (b / "V_lower.field").read_bytes()
        and (a / "V_fd.field").read_bytes() == (b / "V_fd.field").read_bytes()
    )

    # downstream artifacts: masks and verification reports, twice each
    for dest in (a, b):
        fld = load_field(dest / "V_lower.field")
        mask = extract_sublevel(fld, EPSILON_SET)
        mask_to_csv(mask, dest / "mask.csv")
        rep = verify_invariance(jet_model, fld, mask, trials=20, epsilon=0.05,
                                t_final=5.0, dt_sim=0.01, seed=7)
        (dest / "verification.txt").write_text(rep.to_text())
    ok_downstream = (
        (a / "mask.csv").read_bytes() == (b / "mask.csv").read_bytes()
        and (a / "verification.txt").read_bytes() == (b / "verification.txt").read_bytes()
    )

    report(7, ok_fields and ok_downstream,
           f"field/mask/verification bytes identical across reruns and threads 1 vs auto; "
           f"{time.perf_counter() - t0:.0f}s")
