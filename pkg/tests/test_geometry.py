import math
import unittest

import numpy as np

from ghcm.geometry import (
    block_of,
    blocks_visible,
    build_block_grid,
    pairs_within,
    side_length,
    torus_distance,
    visibility_radius,
    visible_pairs,
    wrap,
)
from ghcm.util import ConfigurationError, ContractError
from tests.utils import brute_force_pairs, sl_params


class TestTorus(unittest.TestCase):
    def test_side_and_radius(self):
        self.assertAlmostEqual(side_length(1e4, 2), 100.0)
        self.assertAlmostEqual(visibility_radius(1e4, 2), math.sqrt(math.log(1e4)))
        self.assertAlmostEqual(side_length(8.0, 3), 2.0)

    def test_distance_wraps_around(self):
        self.assertAlmostEqual(torus_distance([4.9, 0.0], [-4.9, 0.0], 10.0), 0.2)
        self.assertAlmostEqual(torus_distance([0.0, 0.0], [3.0, 4.0], 100.0), 5.0)
        self.assertEqual(torus_distance([1.0, 2.0], [1.0, 2.0], 10.0), 0.0)

    def test_distance_is_a_bounded_metric(self):
        rng = np.random.default_rng(8)
        for d, side in ((1, 7.0), (2, 10.0), (3, 4.0)):
            bound = math.sqrt(d) * side / 2.0
            for _ in range(200):
                u, v, w = rng.uniform(-side / 2.0, side / 2.0, size=(3, d))
                uv = torus_distance(u, v, side)
                self.assertAlmostEqual(uv, torus_distance(v, u, side), places=12)
                self.assertLessEqual(uv, torus_distance(u, w, side) + torus_distance(w, v, side) + 1e-12)
                self.assertLessEqual(uv, bound + 1e-12)

    def test_distance_dimension_mismatch(self):
        with self.assertRaises(ContractError):
            torus_distance([0.0, 0.0], [0.0, 0.0, 0.0], 10.0)

    def test_wrap_is_half_open(self):
        out = wrap(np.array([5.0, -5.0, 12.5, -7.5]), 10.0)
        np.testing.assert_allclose(out, [-5.0, -5.0, 2.5, 2.5])
        self.assertTrue(((out >= -5.0) & (out < 5.0)).all())


class TestBlockGrid(unittest.TestCase):
    def test_blocks_per_side(self):
        grid = build_block_grid(sl_params(n=1e4), 0.01)
        self.assertEqual(grid.blocks_per_side, 329)
        self.assertGreaterEqual(grid.block_volume, grid.target_block_volume)
        self.assertAlmostEqual(grid.side, 100.0)

    def test_block_diameter_within_radius(self):
        grid = build_block_grid(sl_params(n=1e4), 0.01)
        self.assertLessEqual(math.sqrt(2) * grid.block_side, grid.visibility_radius)

    def test_chi_too_large(self):
        with self.assertRaises(ConfigurationError):
            build_block_grid(sl_params(n=1e4), 1.0)

    def test_chi_must_be_positive(self):
        with self.assertRaises(ConfigurationError):
            build_block_grid(sl_params(n=1e4), 0.0)

    def test_visible_blocks(self):
        grid = build_block_grid(sl_params(n=1e4), 0.01)
        visible = grid.visible_blocks(0)
        self.assertIn(0, visible)
        self.assertTrue((np.diff(visible) > 0).all())
        for j in visible[:50]:
            self.assertTrue(blocks_visible(0, int(j), grid))
            self.assertTrue(blocks_visible(int(j), 0, grid))
        far = int(np.ravel_multi_index((grid.blocks_per_side // 2, 0), grid.shape))
        self.assertFalse(blocks_visible(0, far, grid))
        self.assertNotIn(far, visible)

    def test_visible_blocks_are_fully_visible(self):
        """Every pair of points drawn from two visible blocks is a visible pair."""
        grid = build_block_grid(sl_params(n=1e4), 0.01)
        rng = np.random.default_rng(3)
        half = grid.side / 2.0
        for j in grid.visible_blocks(0)[::7]:
            corner_i = -half + grid.coords(0) * grid.block_side
            corner_j = -half + grid.coords(int(j)) * grid.block_side
            a = corner_i + rng.random((20, 2)) * grid.block_side
            b = corner_j + rng.random((20, 2)) * grid.block_side
            for u in a:
                for v in b:
                    self.assertLessEqual(torus_distance(u, v, grid.side), grid.visibility_radius + 1e-9)

    def test_block_of(self):
        grid = build_block_grid(sl_params(n=1e4), 0.01)
        self.assertEqual(block_of([-50.0, -50.0], grid), 0)
        self.assertEqual(block_of([49.999, 49.999], grid), grid.block_count - 1)
        blocks = block_of(np.array([[-50.0, -50.0], [0.0, 0.0]]), grid)
        self.assertEqual(blocks.shape, (2,))


class TestPairs(unittest.TestCase):
    def test_binned_matches_brute_force(self):
        rng = np.random.default_rng(7)
        points = wrap(rng.uniform(-10.0, 10.0, size=(300, 2)), 20.0)
        pairs = pairs_within(points, 20.0, 2.0)
        self.assertEqual({tuple(p) for p in pairs.tolist()}, brute_force_pairs(points, 20.0, 2.0))

    def test_small_torus_falls_back(self):
        rng = np.random.default_rng(11)
        points = wrap(rng.uniform(-2.5, 2.5, size=(40, 2)), 5.0)
        pairs = pairs_within(points, 5.0, 2.0)
        self.assertEqual({tuple(p) for p in pairs.tolist()}, brute_force_pairs(points, 5.0, 2.0))

    def test_three_dimensions(self):
        rng = np.random.default_rng(5)
        points = wrap(rng.uniform(-4.0, 4.0, size=(200, 3)), 8.0)
        pairs = pairs_within(points, 8.0, 1.5)
        self.assertEqual({tuple(p) for p in pairs.tolist()}, brute_force_pairs(points, 8.0, 1.5))

    def test_pairs_sorted_and_ordered(self):
        rng = np.random.default_rng(2)
        points = wrap(rng.uniform(-10.0, 10.0, size=(200, 2)), 20.0)
        pairs = pairs_within(points, 20.0, 2.0)
        self.assertTrue((pairs[:, 0] < pairs[:, 1]).all())
        keys = pairs[:, 0] * 1000 + pairs[:, 1]
        self.assertTrue((np.diff(keys) > 0).all())

    def test_degenerate_inputs(self):
        self.assertEqual(pairs_within(np.zeros((0, 2)), 10.0, 1.0).shape, (0, 2))
        self.assertEqual(pairs_within(np.zeros((1, 2)), 10.0, 1.0).shape, (0, 2))

    def test_visible_pairs_uses_grid_radius(self):
        params = sl_params(n=1e3)
        grid = build_block_grid(params, 0.01)
        rng = np.random.default_rng(1)
        points = wrap(rng.uniform(-grid.side / 2, grid.side / 2, size=(150, 2)), grid.side)
        np.testing.assert_array_equal(
            visible_pairs(points, grid), pairs_within(points, params.side, params.radius)
        )


if __name__ == "__main__":
    unittest.main()
