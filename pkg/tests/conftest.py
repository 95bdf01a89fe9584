from __future__ import annotations

import numpy as np
import pytest

from hjinvariant import Grid, ValueField, builtin_model


@pytest.fixture(scope="session")
def jet_model():
    return builtin_model("jet_engine")


@pytest.fixture(scope="session")
def singleton_model():
    return builtin_model("singleton_1d")


@pytest.fixture
def square_grid():
    return Grid([-1.0, -1.0], [1.0, 1.0], [201, 201])


def make_field(grid: Grid, fn, gamma: float = 0.1, kind: str = "lower") -> ValueField:
    """Field with nodal values fn(points); fn maps (N, n) -> (N,)."""
    vals = np.asarray(fn(grid.node_points()), dtype=np.float64)
    return ValueField(grid, vals, gamma, kind)
