from __future__ import annotations

import numpy as np
import pytest

from hjinvariant import Grid, builtin_model
from hjinvariant.dynamics import Box, GameModel, GeneralDynamics
from hjinvariant.hamiltonian import (
    dissipation_bounds,
    dissipation_fields,
    eval_lower_hamiltonian,
    eval_upper_hamiltonian,
    make_evaluator,
)


@pytest.fixture(scope="module")
def jet_analytic(jet_model):
    return make_evaluator(jet_model, mode="analytic")


@pytest.fixture(scope="module")
def jet_sampled(jet_model):
    return make_evaluator(jet_model, mode="sampled")


def brute_vertex_minimax(model, x, p, lower):
    """Independent oracle: enumerate box vertices directly."""
    uv = model.control_box.vertices()
    dv = model.disturbance_box.vertices()
    table = np.array([[p @ model.dynamics(x, u, d) for u in uv] for d in dv])
    if lower:
        return table.min(axis=1).max()
    return table.max(axis=0).min()


class TestJetExamples:
    def test_zero_momentum(self, jet_analytic):
        assert eval_lower_hamiltonian(jet_analytic, np.zeros(2), np.zeros(2)) == 0.0
        assert eval_upper_hamiltonian(jet_analytic, np.array([0.3, -0.2]), np.zeros(2)) == 0.0

    def test_pure_disturbance_channel(self, jet_analytic, jet_model):
        # p . f = d at the origin; sup over d in [-0.02, 0.02] is 0.02
        x, p = np.zeros(2), np.array([1.0, 0.0])
        got = eval_lower_hamiltonian(jet_analytic, x, p)
        assert got == pytest.approx(0.02, abs=1e-15)
        assert got == pytest.approx(brute_vertex_minimax(jet_model, x, p, True), abs=1e-15)
        assert eval_upper_hamiltonian(jet_analytic, x, p) == pytest.approx(0.02, abs=1e-15)

    def test_pure_control_channel(self, jet_analytic, jet_model):
        # p . f = (0.8076 + u) * 0.1, minimized over u in [-0.01, 0.01]
        x, p = np.array([0.1, 0.0]), np.array([0.0, 1.0])
        got = eval_lower_hamiltonian(jet_analytic, x, p)
        assert got == pytest.approx(0.07976, abs=1e-15)
        assert got == pytest.approx(brute_vertex_minimax(jet_model, x, p, True), abs=1e-15)


class TestProperties:
    def test_positive_homogeneity_analytic(self, jet_analytic):
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = rng.uniform(-1, 1, size=2)
            p = rng.normal(size=2)
            base = eval_lower_hamiltonian(jet_analytic, x, p)
            for lam in (0.0, 0.5, 2.0, 4.0):  # powers of two stay exact in float
                assert eval_lower_hamiltonian(jet_analytic, x, lam * p) == lam * base
            lam = rng.uniform(0, 10)
            assert eval_lower_hamiltonian(jet_analytic, x, lam * p) == pytest.approx(
                lam * base, rel=1e-12, abs=1e-12
            )

    def test_positive_homogeneity_sampled(self, jet_sampled):
        rng = np.random.default_rng(1)
        for _ in range(50):
            x = rng.uniform(-1, 1, size=2)
            p = rng.normal(size=2)
            lam = rng.uniform(0, 5)
            got = eval_upper_hamiltonian(jet_sampled, x, lam * p)
            want = lam * eval_upper_hamiltonian(jet_sampled, x, p)
            assert got == pytest.approx(want, rel=1e-12, abs=1e-12)

    def test_minimax_inequality_sampled(self, jet_sampled):
        rng = np.random.default_rng(2)
        for _ in range(200):
            x = rng.uniform(-1, 1, size=2)
            p = rng.normal(size=2)
            lo = eval_lower_hamiltonian(jet_sampled, x, p)
            hi = eval_upper_hamiltonian(jet_sampled, x, p)
            assert lo <= hi + 1e-15

    def test_analytic_equals_vertex_sampled(self, jet_analytic, jet_sampled):
        rng = np.random.default_rng(3)
        for _ in range(100):
            x = rng.uniform(-1, 1, size=2)
            p = rng.normal(size=2)
            a = eval_lower_hamiltonian(jet_analytic, x, p)
            s = eval_lower_hamiltonian(jet_sampled, x, p)
            assert a == pytest.approx(s, abs=1e-12)

    def test_analytic_equals_dense_sampled(self, jet_model, jet_analytic):
        # uniform grids include the endpoints, so affine optima stay exact
        dense = make_evaluator(jet_model, mode="sampled", control_samples=9, disturbance_samples=9)
        rng = np.random.default_rng(4)
        for _ in range(50):
            x = rng.uniform(-1, 1, size=2)
            p = rng.normal(size=2)
            assert eval_lower_hamiltonian(dense, x, p) == pytest.approx(
                eval_lower_hamiltonian(jet_analytic, x, p), abs=1e-12
            )

    def test_lipschitz_in_momentum(self, jet_analytic):
        grid = Grid([-1, -1], [1, 1], [21, 21])
        alpha = dissipation_bounds(jet_analytic, grid)
        rng = np.random.default_rng(5)
        for _ in range(100):
            x = rng.uniform(-1, 1, size=2)
            p = rng.normal(size=2)
            q = rng.normal(size=2)
            gap = abs(
                eval_lower_hamiltonian(jet_analytic, x, p)
                - eval_lower_hamiltonian(jet_analytic, x, q)
            )
            assert gap <= (alpha * np.abs(p - q)).sum() + 1e-12

    def test_analytic_mode_requires_affine(self):
        dyn = GeneralDynamics(lambda x, u, d: -np.asarray(x), 1, 1, 1)
        model = GameModel(
            state_dim=1, control_box=Box([0.0], [0.0]), disturbance_box=Box([0.0], [0.0]),
            dynamics=dyn, constraint=lambda x: np.zeros(np.asarray(x).shape[:-1]),
            constraint_bound=0.5,
        )
        with pytest.raises(ValueError, match="affine"):
            make_evaluator(model, mode="analytic")
        ev = make_evaluator(model)  # auto falls back to sampled
        assert ev.mode == "sampled"


class TestDissipationBounds:
    def test_singleton_contraction(self, singleton_model):
        ev = make_evaluator(singleton_model)
        grid = Grid([-1.0], [1.0], [201])
        alpha = dissipation_bounds(ev, grid)
        assert alpha[0] == pytest.approx(1.1, abs=1e-12)

    def test_constant_dynamics_flooring_warns(self):
        c = 0.7
        dyn = GeneralDynamics(
            lambda x, u, d: np.broadcast_to([c, 0.0], np.asarray(x).shape).copy(), 2, 1, 1
        )
        model = GameModel(
            state_dim=2, control_box=Box([0.0], [0.0]), disturbance_box=Box([0.0], [0.0]),
            dynamics=dyn, constraint=lambda x: np.zeros(np.asarray(x).shape[:-1]),
            constraint_bound=0.5,
        )
        ev = make_evaluator(model)
        grid = Grid([-1, -1], [1, 1], [5, 5])
        with pytest.warns(UserWarning, match="floored"):
            alpha = dissipation_bounds(ev, grid)
        assert alpha[0] == pytest.approx(1.1 * c)
        assert alpha[1] == np.finfo(np.float64).eps

    def test_jet_vertex_scan(self, jet_model, jet_analytic):
        grid = Grid([-1, -1], [1, 1], [41, 41])
        alpha = dissipation_bounds(jet_analytic, grid)
        # independent scan: max |f_i| over mesh x box-vertex actions
        xs = np.linspace(-1, 1, 41)
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        best = np.zeros(2)
        for u in (-0.01, 0.01):
            for d in (-0.02, 0.02):
                f1 = -Y - 1.5 * X**2 - 0.5 * X**3 + d
                f2 = (0.8076 + u) * X - 0.9424 * Y
                best[0] = max(best[0], np.abs(f1).max())
                best[1] = max(best[1], np.abs(f2).max())
        np.testing.assert_allclose(alpha, 1.1 * best, rtol=1e-14)
        np.testing.assert_allclose(alpha, [1.1 * 3.02, 1.1 * 1.76], rtol=1e-12)

    def test_local_fields_bounded_by_global(self, jet_analytic):
        grid = Grid([-1, -1], [1, 1], [21, 21])
        local = dissipation_fields(jet_analytic, grid)
        alpha = dissipation_bounds(jet_analytic, grid)
        assert local.shape == (2, grid.num_points)
        assert np.all(local <= alpha[:, None] + 1e-15)
        assert np.all(local > 0)
