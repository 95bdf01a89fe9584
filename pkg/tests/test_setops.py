from __future__ import annotations

import numpy as np
import pytest

from hjinvariant import Grid, ValueField, builtin_model, interpolate
from hjinvariant.dynamics import eval_constraint
from hjinvariant.setops import (
    GridMask,
    compare_masks,
    contour_to_csv,
    extract_sublevel,
    field_to_vtk,
    marching_squares,
    mask_from_csv,
    mask_to_csv,
)

from conftest import make_field


@pytest.fixture(scope="module")
def jet_h_field(jet_model):
    grid = Grid([-1, -1], [1, 1], [201, 201])
    vals = np.asarray(eval_constraint(jet_model, grid.node_points()))
    return ValueField(grid, vals, 0.1, "lower")


def polyline_length(poly: np.ndarray) -> float:
    return float(np.sqrt(((poly[1:] - poly[:-1]) ** 2).sum(axis=1)).sum())


class TestExtractSublevel:
    def test_constant_above_threshold_empty(self):
        g = Grid([0, 0], [1, 1], [5, 5])
        fld = ValueField(g, np.full(25, 0.3), 0.1, "lower")
        assert extract_sublevel(fld, 0.01).count == 0

    def test_jet_constraint_sign_structure(self, jet_h_field):
        mask = extract_sublevel(jet_h_field, 0.0)
        pts = jet_h_field.grid.node_points()
        inside = (pts**2).sum(axis=1) <= 0.25
        assert np.array_equal(mask.flags, inside)

    def test_negative_threshold_rejected(self, jet_h_field):
        with pytest.raises(ValueError):
            extract_sublevel(jet_h_field, -1.0)

    def test_nested_in_threshold(self):
        g = Grid([0, 0], [1, 1], [9, 9])
        rng = np.random.default_rng(0)
        fld = ValueField(g, rng.uniform(-1, 1, g.num_points), 0.1, "lower")
        eps = sorted(rng.uniform(0, 1, size=6))
        prev = extract_sublevel(fld, eps[0])
        for e in eps[1:]:
            cur = extract_sublevel(fld, e)
            assert np.all(~prev.flags | cur.flags)  # prev subset of cur
            prev = cur


class TestCompareMasks:
    def test_identical_nonempty(self):
        g = Grid([0], [1], [5])
        a = GridMask(g, [1, 1, 0, 0, 0], 0.1)
        rep = compare_masks(a, a)
        assert rep.jaccard == 1.0
        assert rep.symmetric_difference_fraction == 0.0

    def test_both_empty_convention(self):
        g = Grid([0], [1], [5])
        a = GridMask(g, np.zeros(5, bool), 0.1)
        rep = compare_masks(a, a)
        assert rep.symmetric_difference_fraction == 0.0
        assert rep.jaccard == 1.0

    def test_disjoint(self):
        g = Grid([0], [1], [5])
        a = GridMask(g, [1, 1, 0, 0, 0], 0.1)
        b = GridMask(g, [0, 0, 1, 1, 0], 0.1)
        rep = compare_masks(a, b)
        assert rep.jaccard == 0.0
        assert rep.symmetric_difference_fraction == 1.0
        assert rep.only_a == 2 and rep.only_b == 2 and rep.intersection == 0

    def test_grid_mismatch_rejected(self):
        a = GridMask(Grid([0], [1], [5]), np.zeros(5, bool), 0.1)
        b = GridMask(Grid([0], [2], [5]), np.zeros(5, bool), 0.1)
        with pytest.raises(ValueError):
            compare_masks(a, b)


class TestMarchingSquares:
    def test_planar_field_vertical_line(self):
        g = Grid([-1, -1], [1, 1], [21, 21])
        fld = make_field(g, lambda p: p[:, 0])
        contour = marching_squares(fld, 0.0)
        assert len(contour.polylines) == 1
        poly = contour.polylines[0]
        assert np.allclose(poly[:, 0], 0.0, atol=1e-14)
        dx = g.spacing[0]
        assert polyline_length(poly) == pytest.approx(2.0, abs=dx)

    def test_circle_perimeter(self, jet_h_field):
        contour = marching_squares(jet_h_field, 0.0)
        assert len(contour.polylines) == 1
        poly = contour.polylines[0]
        assert np.allclose(poly[0], poly[-1])  # closed loop
        assert polyline_length(poly) == pytest.approx(2 * np.pi * 0.5, rel=0.02)

    def test_constant_field_no_contour(self):
        g = Grid([0, 0], [1, 1], [5, 5])
        fld = ValueField(g, np.full(25, 1.0), 0.1, "lower")
        assert marching_squares(fld, 0.0).polylines == []

    def test_vertices_interpolate_to_level(self, jet_h_field):
        for level in (0.0, 0.05, 0.2):
            contour = marching_squares(jet_h_field, level)
            for poly in contour.polylines:
                vals = interpolate(jet_h_field, poly)
                np.testing.assert_allclose(vals, level, rtol=0, atol=1e-9)

    def test_saddle_resolved_by_center_rule(self):
        # checkerboard 3x3: saddle cell in the middle of each 2x2 block
        g = Grid([0, 0], [1, 1], [3, 3])
        vals = np.array([[1.0, -1.0, 1.0], [-1.0, 1.0, -1.0], [1.0, -1.0, 1.0]])
        fld = ValueField(g, vals.ravel(), 0.1, "lower")
        contour = marching_squares(fld, 0.0)
        assert len(contour.polylines) >= 1
        for poly in contour.polylines:
            np.testing.assert_allclose(interpolate(fld, poly), 0.0, atol=1e-12)

    def test_requires_2d(self):
        g = Grid([0], [1], [5])
        fld = ValueField(g, np.arange(5.0), 0.1, "lower")
        with pytest.raises(ValueError, match="2-D"):
            marching_squares(fld, 0.5)


class TestExports:
    def test_mask_csv_round_trip(self, tmp_path):
        g = Grid([0, 0], [1, 1], [4, 3])
        mask = GridMask(g, np.arange(12) % 2 == 0, 0.01)
        path = tmp_path / "mask.csv"
        mask_to_csv(mask, path)
        pts, flags = mask_from_csv(path)
        np.testing.assert_array_equal(pts, g.node_points())
        np.testing.assert_array_equal(flags, mask.flags)

    def test_contour_csv(self, tmp_path):
        g = Grid([-1, -1], [1, 1], [11, 11])
        fld = make_field(g, lambda p: p[:, 0])
        contour = marching_squares(fld, 0.0)
        path = tmp_path / "c.csv"
        contour_to_csv(contour, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "polyline,x,y"
        assert len(lines) == 1 + sum(len(p) for p in contour.polylines)

    def test_vtk_structured_points(self, tmp_path):
        g = Grid([-1, 0], [1, 2], [3, 4])
        fld = ValueField(g, np.arange(12.0), 0.1, "lower")
        path = tmp_path / "f.vtk"
        field_to_vtk(fld, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "# vtk DataFile Version 2.0"
        assert lines[3] == "DATASET STRUCTURED_POINTS"
        assert lines[4] == "DIMENSIONS 3 4 1"
        assert lines[7] == "POINT_DATA 12"
        # x varies fastest: first three data values walk axis 0
        data = [float(v) for v in lines[10:13]]
        arr = fld.reshape()
        assert data == [arr[0, 0], arr[1, 0], arr[2, 0]]
