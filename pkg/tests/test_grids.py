import numpy as np
import pytest

from augdp.grids import (
    AxisGrid,
    InputGrid,
    PointGrid,
    ProductGrid,
    as_state_grid,
    locate_points,
)


class TestAxisGrid:
    def test_sorted_and_deduplicated(self):
        g = AxisGrid([3.0, 1.0, 2.0, 1.0])
        assert list(g.values) == [1.0, 2.0, 3.0]
        assert g.size == 3 and g.dim == 1

    def test_rejects_empty_and_nonfinite(self):
        with pytest.raises(ValueError):
            AxisGrid([])
        with pytest.raises(ValueError):
            AxisGrid([0.0, np.inf])

    def test_project_ties_go_up(self):
        g = AxisGrid([0.0, 1.0])
        assert list(g.project(np.array([-5.0, 0.49, 0.5, 0.51, 7.0]))) == [0, 0, 1, 1, 1]

    def test_project_bounded(self):
        g = AxisGrid([0.0, 1.0, 2.0])
        ids = g.project_bounded(np.array([-0.1, 0.0, 2.0, 2.1, np.nan]), atol=1e-9)
        assert list(ids) == [-1, 0, 2, -1, -1]

    def test_locate_exact_tolerance(self):
        g = AxisGrid([0.0, 0.5, 1.0])
        assert g.locate_exact(0.5) == 1
        assert g.locate_exact(0.5 + 1e-12) == 1
        assert g.locate_exact(0.3) == -1

    def test_single_point_axis(self):
        g = AxisGrid([2.0])
        assert list(g.project(np.array([-1.0, 5.0]))) == [0, 0]


class TestPointGrid:
    def test_order_preserved_and_unique(self):
        g = PointGrid([[2.0, 0.0], [1.0, 1.0]])
        assert g.locate_exact([2.0, 0.0]) == 0
        assert g.locate_exact([1.0, 1.0]) == 1
        with pytest.raises(ValueError):
            PointGrid([[1.0], [1.0]])

    def test_nearest_first_min_wins(self):
        g = PointGrid([0.0, 2.0])
        assert g.locate_nearest([1.0]) == 0  # equidistant, lower id

    def test_locate_exact_miss(self):
        g = PointGrid([0.0, 1.0])
        assert g.locate_exact([0.4]) == -1
        assert g.locate_exact([np.nan]) == -1


class TestProductGrid:
    def test_row_major_layout(self):
        g = ProductGrid([PointGrid([0.0, 1.0]), AxisGrid([10.0, 20.0, 30.0])])
        assert g.size == 6 and g.dim == 2
        assert g.strides == [3, 1]
        np.testing.assert_array_equal(g.points[4], [1.0, 20.0])
        assert g.locate_exact([1.0, 20.0]) == 4

    def test_locate_nearest_composes(self):
        g = ProductGrid([AxisGrid([0.0, 1.0]), AxisGrid([0.0, 10.0])])
        assert g.locate_nearest([0.9, 2.0]) == 2  # (1, 0)

    def test_bounds(self):
        g = ProductGrid([AxisGrid([-1.0, 1.0]), AxisGrid([5.0, 9.0])])
        lo, hi = g.bounds
        np.testing.assert_array_equal(lo, [-1.0, 5.0])
        np.testing.assert_array_equal(hi, [1.0, 9.0])


class TestLocatePoints:
    @pytest.mark.parametrize("strict", [False, True])
    def test_matches_scalar_semantics(self, strict):
        rng = np.random.default_rng(0)
        grid = ProductGrid([PointGrid(rng.integers(-3, 4, size=(5, 1))), AxisGrid([0.0, 0.5, 1.0])])
        queries = np.column_stack(
            [rng.integers(-4, 5, size=40).astype(float), rng.random(40) * 1.6 - 0.3]
        )
        queries[3] = [np.nan, 0.5]
        got = locate_points(grid, queries, atol=1e-9, strict=strict)
        for row, q in enumerate(queries):
            if strict:
                expect = grid.locate_exact(q, 1e-9)
            else:
                lo, hi = grid.bounds
                bad = (~np.isfinite(q)).any() or (q < lo - 1e-9).any() or (q > hi + 1e-9).any()
                expect = -1 if bad else grid.locate_nearest(q)
            assert got[row] == expect, (row, q)


class TestInputGrid:
    def test_order_and_uniqueness(self):
        g = InputGrid([3.0, -1.0, 0.0])
        np.testing.assert_array_equal(g.points.ravel(), [3.0, -1.0, 0.0])
        with pytest.raises(ValueError):
            InputGrid([0.0, 0.0])

    def test_as_state_grid_coercion(self):
        g = as_state_grid([1.0, 2.0])
        assert isinstance(g, PointGrid)
        assert as_state_grid(g) is g
