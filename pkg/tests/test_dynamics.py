"""风扰动力学单元测试."""

import os
import sys
import unittest

import numpy as np

try:
    from mfgflock.core.dynamics import drift, em_step, reflect, simulate_paths
    from mfgflock.core.errors import SchemeError
    from mfgflock.core.model import UAVState, WindModel
except ImportError:
    SCRIPT_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    SRC_DIR = os.path.join(SCRIPT_DIR, "src")
    if SRC_DIR not in sys.path:
        sys.path.insert(0, SRC_DIR)
    from mfgflock.core.dynamics import drift, em_step, reflect, simulate_paths
    from mfgflock.core.errors import SchemeError
    from mfgflock.core.model import UAVState, WindModel


# ── 单步 ─────────────────────────────────────────────────────────────────────


class TestEmStep(unittest.TestCase):

    def test_drift_cancels(self):
        out = em_step(UAVState(0.0, 3.0), WindModel(-3.0, 0.1), dt=1.0, noise_increment=0.0)
        self.assertEqual(out.position, 0.0)
        self.assertEqual(out.velocity, 3.0)

    def test_pure_drift(self):
        out = em_step(UAVState(10.0, 0.0), WindModel(-3.0, 0.0), dt=2.0, noise_increment=1.7)
        self.assertEqual(out.position, 4.0)

    def test_single_diffusion_term(self):
        out = em_step(UAVState(0.0, 0.0), WindModel(0.0, 0.1), dt=1.0, noise_increment=1.0)
        self.assertAlmostEqual(out.position, 0.1, places=15)

    def test_reflection_keeps_domain(self):
        z = np.array([1.0, 299.0, 150.0])
        out = em_step(UAVState(z, np.array([-5.0, 5.0, 0.0])), WindModel(0.0, 0.0), 1.0, np.zeros(3))
        np.testing.assert_allclose(out.position, [4.0, 296.0, 150.0])

    def test_rejects_bad_input(self):
        with self.assertRaises(ValueError):
            em_step(UAVState(0.0, 0.0), WindModel(), dt=0.0, noise_increment=0.0)
        with self.assertRaises(SchemeError):
            em_step(UAVState(float("nan"), 0.0), WindModel(), dt=0.1, noise_increment=0.0)

    def test_drift(self):
        self.assertEqual(drift(3.0, WindModel(-3.0)), 0.0)
        self.assertEqual(drift(0.0, WindModel(-3.0)), -3.0)
        self.assertEqual(drift(2.5, WindModel(0.0)), 2.5)


class TestReflect(unittest.TestCase):

    def test_multiple_folds(self):
        x = np.array([-1.0, 301.0, 650.0, -310.0, 0.0, 300.0])
        np.testing.assert_allclose(reflect(x, 0.0, 300.0), [1.0, 299.0, 50.0, 290.0, 0.0, 300.0])

    def test_always_in_domain(self):
        x = np.random.default_rng(3).normal(150.0, 1000.0, 5000)
        y = reflect(x, 0.0, 300.0)
        self.assertTrue(np.all((y >= 0.0) & (y <= 300.0)))


# ── 集合性质 ─────────────────────────────────────────────────────────────────


class TestEnsemble(unittest.TestCase):

    def test_deterministic_matches_closed_form(self):
        # 步长与漂移取二进制精确值
        steps = 10_000
        path = simulate_paths(0.0, 3.5, WindModel(-3.0, 0.0), 0.25, steps, 1, np.random.default_rng(0))[0]
        closed = np.arange(steps + 1) * 0.125
        self.assertLessEqual(np.max(np.abs(path - closed)), 1e-12)

    def test_random_walk_variance(self):
        wind = WindModel(-3.0, 0.1)
        dt, steps = 0.1, 100
        paths = simulate_paths(150.0, 3.0, wind, dt, steps, 10_000, np.random.default_rng(42))
        t = dt * steps
        self.assertAlmostEqual(paths[:, -1].var() / (wind.volatility ** 2 * t), 1.0, delta=0.05)
        # 均值的标准误差为 η·sqrt(t)/100 ≈ 0.003 m
        self.assertAlmostEqual(paths[:, -1].mean(), 150.0, delta=0.02)


if __name__ == "__main__":
    unittest.main()
