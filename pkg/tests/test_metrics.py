"""实验统计量单元测试."""

import math
import os
import sys
import unittest

import numpy as np

try:
    from mfgflock.core import metrics
    from mfgflock.core.mfg_solver import gaussian_density, point_mass
    from mfgflock.core.model import FleetTrajectory, Grid, MeanField
except ImportError:
    SCRIPT_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    SRC_DIR = os.path.join(SCRIPT_DIR, "src")
    if SRC_DIR not in sys.path:
        sys.path.insert(0, SRC_DIR)
    from mfgflock.core import metrics
    from mfgflock.core.mfg_solver import gaussian_density, point_mass
    from mfgflock.core.model import FleetTrajectory, Grid, MeanField


def _trajectory(positions, velocities=None, epr=None) -> FleetTrajectory:
    positions = np.asarray(positions, dtype=float)
    n, levels = positions.shape
    velocities = np.zeros_like(positions) if velocities is None else np.asarray(velocities, dtype=float)
    epr = np.ones_like(positions) if epr is None else np.asarray(epr, dtype=float)
    return FleetTrajectory(
        positions=positions,
        velocities=velocities,
        rates=np.ones_like(positions),
        energy_per_rate=epr,
        times=np.arange(levels, dtype=float),
        seed=0,
        controller_tag="mfg",
    )


# ── 碰撞 ─────────────────────────────────────────────────────────────────────


class TestCollisionFraction(unittest.TestCase):

    def test_examples(self):
        self.assertAlmostEqual(metrics.collision_fraction([0.0, 1.0, 10.0], 2.5), 1 / 3)
        self.assertEqual(metrics.collision_fraction([0.0, 5.0, 10.0], 2.5), 0.0)
        self.assertEqual(metrics.collision_fraction([4.0, 4.0, 4.0, 4.0], 2.5), 1.0)

    def test_single_uav(self):
        self.assertEqual(metrics.collision_fraction([42.0], 2.5), 0.0)

    def test_translation_invariant(self):
        z = np.random.default_rng(0).uniform(0, 50, 30)
        self.assertEqual(metrics.collision_fraction(z, 2.5), metrics.collision_fraction(z + 100.0, 2.5))

    def test_monotone_in_safe_distance(self):
        z = np.random.default_rng(1).uniform(0, 100, 40)
        values = [metrics.collision_fraction(z, d) for d in (0.5, 1.0, 2.5, 5.0, 20.0)]
        self.assertTrue(np.all(np.diff(values) >= 0))

    def test_series_and_probability(self):
        traj = _trajectory(np.tile([[0.0], [1.0], [10.0]], (1, 5)))
        np.testing.assert_allclose(metrics.collision_fraction_series(traj, 2.5), 1 / 3)
        self.assertAlmostEqual(metrics.empirical_collision_probability(traj, 2.5), 1 / 3)

    def test_collision_free_onset(self):
        times = np.arange(5, dtype=float)
        self.assertEqual(metrics.collision_free_onset(np.array([0.2, 0.0, 0.1, 0.0, 0.0]), times), 3.0)
        self.assertEqual(metrics.collision_free_onset(np.array([0.2, 0.0, 0.1, 0.0, 0.0]), times, 0.1), 1.0)
        self.assertIsNone(metrics.collision_free_onset(np.array([0.0, 0.0, 0.3]), times[:3]))


class TestMeanFieldCollision(unittest.TestCase):

    def setUp(self):
        self.grid = Grid(z_min=100.0, z_max=200.0, n_z=501, t_horizon=1.0, n_t=2)

    def test_gaussian_matches_closed_form(self):
        sigma = math.sqrt(30.0)
        m = gaussian_density(self.grid, 150.0, sigma)
        expected = math.erf(2.5 / (2.0 * sigma))
        value = metrics.mean_field_collision_probability(m, self.grid, 2.5)
        self.assertAlmostEqual(value / expected, 1.0, delta=0.03)

    def test_uniform_density_stays_above_one_percent(self):
        m = np.full(self.grid.n_z, 1.0 / self.grid.length)
        value = metrics.mean_field_collision_probability(m, self.grid, 2.5)
        self.assertAlmostEqual(value, 2 * 0.025 - 0.025 ** 2, delta=0.003)
        self.assertGreater(value, 0.01)

    def test_point_mass_always_collides(self):
        m = point_mass(self.grid, 150.0)
        self.assertAlmostEqual(metrics.mean_field_collision_probability(m, self.grid, 2.5), 1.0, places=12)

    def test_series_per_level(self):
        m = gaussian_density(self.grid, 150.0, 8.0)
        field = MeanField(
            density=np.tile(m, (self.grid.n_t + 1, 1)),
            velocity=np.zeros((self.grid.n_t + 1, self.grid.n_z)),
            grid=self.grid,
        )
        series = metrics.mean_field_collision_series(field, 2.5)
        self.assertEqual(series.shape, (3,))
        np.testing.assert_allclose(series, metrics.mean_field_collision_probability(m, self.grid, 2.5))


# ── 能耗 ─────────────────────────────────────────────────────────────────────


class TestEnergyMetrics(unittest.TestCase):

    def test_series_is_fleet_mean(self):
        epr = np.array([[1.0, 2.0, 3.0], [3.0, 4.0, 5.0]])
        traj = _trajectory(np.zeros((2, 3)), epr=epr)
        np.testing.assert_allclose(metrics.energy_per_rate_series(traj), [2.0, 3.0, 4.0])

    def test_steady_state_mean(self):
        self.assertEqual(metrics.steady_state_mean(np.arange(8.0)), 6.5)

    def test_saving_percent(self):
        self.assertAlmostEqual(metrics.saving_percent(80.0, 100.0), 20.0)
        self.assertAlmostEqual(metrics.saving_percent(110.0, 100.0), -10.0)
        self.assertEqual(metrics.saving_percent(1.0, 0.0), 0.0)


# ── 集群 ─────────────────────────────────────────────────────────────────────


class TestFlockingTime(unittest.TestCase):

    def test_trajectory_onset(self):
        v = np.array([[1.0, 0.5, 0.01, 0.0, 0.0], [-1.0, -0.5, -0.01, 0.0, 0.0]])
        traj = _trajectory(np.zeros((2, 5)), velocities=v)
        np.testing.assert_allclose(metrics.velocity_spread(traj), [1.0, 0.5, 0.01, 0.0, 0.0])
        self.assertEqual(metrics.flocking_time(traj, 0.1), 2.0)

    def test_relapse_means_no_flocking(self):
        v = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]])
        self.assertIsNone(metrics.flocking_time(_trajectory(np.zeros((2, 3)), velocities=v), 0.1))

    def test_mean_field_uniform_velocity(self):
        grid = Grid(n_z=31, t_horizon=1.0, n_t=10)
        m = gaussian_density(grid, 150.0, 20.0)
        field = MeanField(density=np.tile(m, (11, 1)), velocity=np.full((11, 31), -2.0), grid=grid)
        np.testing.assert_allclose(metrics.velocity_spread(field), 0.0, atol=1e-12)
        self.assertEqual(metrics.flocking_time(field), 0.0)

    def test_mean_field_weighting(self):
        grid = Grid(n_z=31, t_horizon=1.0, n_t=10)
        m = point_mass(grid, 150.0)
        velocity = np.tile(np.linspace(-5.0, 5.0, 31), (11, 1))
        field = MeanField(density=np.tile(m, (11, 1)), velocity=velocity, grid=grid)
        # 全部质量位于单个节点，离散度为 0
        np.testing.assert_allclose(metrics.velocity_spread(field), 0.0, atol=1e-12)


# ── 密度 ─────────────────────────────────────────────────────────────────────


class TestDensityMetrics(unittest.TestCase):

    def setUp(self):
        self.grid = Grid(n_z=301, t_horizon=4.0, n_t=4)

    def test_histogram_rows_integrate_to_one(self):
        positions = np.random.default_rng(4).uniform(0, 300, (50, 5))
        heat = metrics.density_heatmap(_trajectory(positions), self.grid)
        self.assertEqual(heat.shape, (5, 301))
        np.testing.assert_allclose(metrics.heatmap_row_masses(heat, self.grid), 1.0, rtol=1e-12)

    def test_histogram_boundary_nodes(self):
        heat = metrics.trajectory_histogram(np.array([[0.0], [300.0]]), self.grid)
        self.assertEqual(heat[0, 0], 1.0)
        self.assertEqual(heat[0, -1], 1.0)

    def test_trajectory_heatmap_needs_grid(self):
        with self.assertRaises(ValueError):
            metrics.density_heatmap(_trajectory(np.zeros((2, 3))))

    def test_mean_field_heatmap_passthrough(self):
        density = np.tile(gaussian_density(self.grid, 150.0, 10.0), (5, 1))
        field = MeanField(density=density, velocity=np.zeros_like(density), grid=self.grid)
        self.assertIs(metrics.density_heatmap(field), density)

    def test_spreading_onset(self):
        rows = [gaussian_density(self.grid, 150.0, s) for s in (5.0, 6.0, 9.0, 11.0, 20.0)]
        self.assertEqual(metrics.spreading_onset_time(np.array(rows), self.grid), 3.0)
        steady = np.tile(rows[0], (5, 1))
        self.assertIsNone(metrics.spreading_onset_time(steady, self.grid))

    def test_interquartile_width_of_gaussian(self):
        row = gaussian_density(self.grid, 150.0, 10.0)
        # 正态分布四分位距 ≈ 1.349σ
        self.assertAlmostEqual(metrics.interquartile_width(row[None, :], self.grid)[0], 13.49, delta=1.0)

    def test_l1_distance(self):
        a = point_mass(self.grid, 100.0)
        b = point_mass(self.grid, 200.0)
        self.assertAlmostEqual(float(metrics.l1_density_distance(a, b, self.grid)), 2.0)
        self.assertEqual(float(metrics.l1_density_distance(a, a, self.grid)), 0.0)
        stacked = metrics.l1_density_distance(np.vstack([a, a]), np.vstack([a, b]), self.grid)
        np.testing.assert_allclose(stacked, [0.0, 2.0])


if __name__ == "__main__":
    unittest.main()
