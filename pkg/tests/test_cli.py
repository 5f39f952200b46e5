"""CLI、输出目录、导出与 oracle 测试.

完整流程只在 configs/small.yaml 的小规模实例上运行。
"""

import argparse
import io
import json
import os
import sys
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from datetime import datetime, timezone
from unittest.mock import patch

import numpy as np
import pandas as pd

try:
    from mfgflock import cli
    from mfgflock.core import oracles
    from mfgflock.core.config import config_hash, load_config
    from mfgflock.core.exporter import gamma_label, trajectory_frame
    from mfgflock.core.mfg_solver import picard_solve, rate_field
    from mfgflock.core.model import CostWeights, FleetTrajectory, WindModel
    from mfgflock.core.paths import OUTPUT_ROOT_ENV, get_output_root, run_dir_name
    from mfgflock.core.terminal import badge, converged_badge
except ImportError:
    SCRIPT_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    SRC_DIR = os.path.join(SCRIPT_DIR, "src")
    if SRC_DIR not in sys.path:
        sys.path.insert(0, SRC_DIR)
    from mfgflock import cli
    from mfgflock.core import oracles
    from mfgflock.core.config import config_hash, load_config
    from mfgflock.core.exporter import gamma_label, trajectory_frame
    from mfgflock.core.mfg_solver import picard_solve, rate_field
    from mfgflock.core.model import CostWeights, FleetTrajectory, WindModel
    from mfgflock.core.paths import OUTPUT_ROOT_ENV, get_output_root, run_dir_name
    from mfgflock.core.terminal import badge, converged_badge


REPO_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SMALL_CONFIG = os.path.join(REPO_DIR, "configs", "small.yaml")


def _run_main(argv: list[str]) -> tuple[int, str, str]:
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = cli.main(argv)
    return code, out.getvalue(), err.getvalue()


# ── 参数解析 ─────────────────────────────────────────────────────────────────


class TestArgumentParsing(unittest.TestCase):

    def test_parse_seeds(self):
        self.assertEqual(cli.parse_seeds("3"), [0, 1, 2])
        self.assertEqual(cli.parse_seeds("5,7,9"), [5, 7, 9])
        with self.assertRaises(argparse.ArgumentTypeError):
            cli.parse_seeds("0")
        with self.assertRaises(argparse.ArgumentTypeError):
            cli.parse_seeds("many")

    def test_parse_gammas(self):
        self.assertEqual(cli.parse_gammas("0.1,1,10"), [0.1, 1.0, 10.0])
        with self.assertRaises(argparse.ArgumentTypeError):
            cli.parse_gammas("1,-2")
        with self.assertRaises(argparse.ArgumentTypeError):
            cli.parse_gammas("a,b")

    def test_verbosity_flags_exclusive(self):
        with redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit):
                cli.build_parser().parse_args(["-v", "-q", "validate", "--config", SMALL_CONFIG])

    def test_no_command_prints_help(self):
        code, out, _ = _run_main([])
        self.assertEqual(code, cli.EXIT_INVALID)
        self.assertIn("mfgflock", out)


# ── 命令 ─────────────────────────────────────────────────────────────────────


class TestValidateCommand(unittest.TestCase):

    def test_valid_config(self):
        code, out, _ = _run_main(["-q", "validate", "--config", SMALL_CONFIG])
        self.assertEqual(code, cli.EXIT_OK)
        self.assertIn("PASS", out)
        self.assertIn("[mfg_solver]", out)

    def test_missing_config(self):
        code, _, err = _run_main(["-q", "validate", "--config", "/nonexistent/scenario.yaml"])
        self.assertEqual(code, cli.EXIT_INVALID)
        self.assertIn("配置加载失败", err)

    def test_invalid_config(self):
        path = os.path.join(tempfile.mkdtemp(), "bad.yaml")
        with open(path, "w", encoding="utf-8") as f:
            f.write("channel: {}\ndynamics: {}\ncost: {beta: 0.7}\nmfg_solver: {}\n"
                    "agent_sim: {}\nmetrics: {}\ncli: {}\n")
        code, _, err = _run_main(["-q", "validate", "--config", path])
        self.assertEqual(code, cli.EXIT_INVALID)
        self.assertIn("cost.beta", err)


class TestRunCommand(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.out_root = tempfile.mkdtemp()
        cls.code, cls.stdout, _ = _run_main(
            ["-q", "run", "--config", SMALL_CONFIG, "--seeds", "2", "--out", cls.out_root]
        )
        runs = os.listdir(cls.out_root)
        cls.run_dir = os.path.join(cls.out_root, runs[0]) if len(runs) == 1 else None

    def test_exit_code_and_single_run_dir(self):
        self.assertEqual(self.code, cli.EXIT_OK)
        self.assertIsNotNone(self.run_dir)

    def test_expected_files(self):
        expected = [
            "config.yaml",
            "summary.json",
            "report.md",
            "heatmap_1.csv",
            "collision_fraction.csv",
            "energy_per_rate.csv",
            os.path.join("solve_mfg_gamma1", "density.csv"),
            os.path.join("solve_mfg_gamma1", "velocity.csv"),
            os.path.join("solve_mfg_gamma1", "psi.csv"),
            os.path.join("solve_mfg_gamma1", "solve_report.json"),
            os.path.join("solve_mfg_we0_gamma1", "solve_report.json"),
            os.path.join("trajectories", "mfg_gamma1_seed0.csv"),
            os.path.join("trajectories", "mfg_gamma1_seed0.json"),
            os.path.join("trajectories", "cs_classic_gamma1_seed0.csv"),
        ]
        for rel in expected:
            with self.subTest(file=rel):
                self.assertTrue(os.path.isfile(os.path.join(self.run_dir, rel)))
        self.assertFalse(os.path.exists(os.path.join(self.run_dir, "solve_cs_classic_gamma1")))

    def test_summary_contents(self):
        with open(os.path.join(self.run_dir, "summary.json"), encoding="utf-8") as f:
            summary = json.load(f)
        self.assertEqual(summary["seeds"], [0, 1])
        self.assertEqual(summary["controller_tags"], ["mfg", "mfg_we0", "cs_classic"])
        self.assertIn("1", summary["saving_percent"])
        self.assertTrue(summary["all_converged"])
        stats = summary["runs"]["mfg"]["1"]
        self.assertGreater(stats["mean_energy_per_rate"], 0.0)
        self.assertTrue(0.0 <= stats["empirical_collision_probability"] <= 1.0)
        self.assertIsNotNone(stats["max_l1_density_distance"])
        self.assertIsNone(summary["runs"]["cs_classic"]["1"]["max_l1_density_distance"])
        self.assertTrue(0.0 < stats["mean_field_collision_probability"] <= 1.0)
        self.assertIsNone(summary["runs"]["cs_classic"]["1"]["mean_field_collision_probability"])

    def test_config_echo_reloads_to_same_hash(self):
        with open(os.path.join(self.run_dir, "summary.json"), encoding="utf-8") as f:
            digest = json.load(f)["config_hash"]
        echo = load_config(os.path.join(self.run_dir, "config.yaml"))
        self.assertEqual(config_hash(echo), digest)
        self.assertTrue(os.path.basename(self.run_dir).endswith(digest[:12]))

    def test_series_columns(self):
        frame = pd.read_csv(os.path.join(self.run_dir, "collision_fraction.csv"))
        self.assertEqual(len(frame), 41)
        for col in ("t", "mfg_g1_mean", "mfg_g1_std", "mfg_g1_seed0", "mfg_we0_g1_mean", "cs_classic_g1_mean"):
            self.assertIn(col, frame.columns)

    def test_trajectory_csv(self):
        frame = pd.read_csv(os.path.join(self.run_dir, "trajectories", "mfg_gamma1_seed0.csv"))
        self.assertEqual(list(frame.columns), ["t", "uav_id", "z", "v", "rate", "epr"])
        self.assertEqual(len(frame), 10 * 41)
        with open(os.path.join(self.run_dir, "trajectories", "mfg_gamma1_seed0.json"), encoding="utf-8") as f:
            meta = json.load(f)
        self.assertEqual(meta["seed"], 0)
        self.assertEqual(meta["controller_tag"], "mfg")
        self.assertIn("config_hash", meta)

    def test_report_mentions_solves(self):
        with open(os.path.join(self.run_dir, "report.md"), encoding="utf-8") as f:
            report = f.read()
        self.assertIn("## 求解", report)
        self.assertIn("## 能耗节省", report)


class TestExplicitSeedList(unittest.TestCase):

    def test_echo_keeps_listed_seeds(self):
        out_root = tempfile.mkdtemp()
        code, _, _ = _run_main(["-q", "run", "--config", SMALL_CONFIG, "--seeds", "5,3,9", "--out", out_root])
        self.assertEqual(code, cli.EXIT_OK)
        run_dir = os.path.join(out_root, os.listdir(out_root)[0])
        echo = load_config(os.path.join(run_dir, "config.yaml"))
        self.assertEqual(echo.fleet.seeds, [5, 3, 9])
        with open(os.path.join(run_dir, "summary.json"), encoding="utf-8") as f:
            summary = json.load(f)
        self.assertEqual(summary["seeds"], [5, 3, 9])
        self.assertEqual(config_hash(echo), summary["config_hash"])
        self.assertTrue(os.path.isfile(os.path.join(run_dir, "trajectories", "mfg_gamma1_seed5.csv")))


class TestStrictMode(unittest.TestCase):

    def test_non_converged_solve_exits_2(self):
        tmp = tempfile.mkdtemp()
        path = os.path.join(tmp, "strict.yaml")
        with open(path, "w", encoding="utf-8") as f:
            f.write(
                "channel: {}\ndynamics: {}\ncost: {}\n"
                "mfg_solver: {n_z: 31, t_horizon: 2.0, n_t: 20, max_iters: 1, tol: 1.0e-300}\n"
                "agent_sim: {n_uavs: 4, n_seeds: 1}\nmetrics: {}\ncli: {gammas: [1.0]}\n"
            )
        code, _, err = _run_main(["-q", "run", "--config", path, "--out", tmp, "--strict"])
        self.assertEqual(code, cli.EXIT_NOT_CONVERGED)
        self.assertIn("--strict", err)


class TestOracleCommand(unittest.TestCase):

    def test_small_instance_passes(self):
        code, out, _ = _run_main(["-q", "oracle", "--config", SMALL_CONFIG])
        self.assertEqual(code, cli.EXIT_OK)
        for name in ("hamiltonian_grid_search", "fpk_conservation", "fpk_moments",
                     "dynamics_exactness", "n_player_hamiltonian"):
            self.assertIn(name, out)
        self.assertNotIn("FAIL", out)


# ── 独立 oracle ──────────────────────────────────────────────────────────────


class TestOracles(unittest.TestCase):

    def test_fpk_moments(self):
        self.assertTrue(oracles.fpk_moments().passed)

    def test_dynamics_exactness(self):
        result = oracles.dynamics_exactness(n_steps=1000, n_paths=10_000)
        self.assertTrue(result.passed, result.detail)

    def test_n_player_matches_closed_form(self):
        rng = np.random.default_rng(0)
        result = oracles.n_player_hamiltonian(
            positions=rng.uniform(140.0, 160.0, 4),
            velocities=rng.normal(0.0, 1.0, 4),
            psi_gradients=rng.normal(0.0, 0.5, 4),
            rates=np.full(4, 1.0e6),
            weights=CostWeights(),
            wind=WindModel(),
            tx_power_w=0.2,
        )
        self.assertTrue(result.passed, result.detail)

    def test_n_player_degenerate_weights(self):
        result = oracles.n_player_hamiltonian(
            positions=[0.0, 5.0],
            velocities=[1.0, -1.0],
            psi_gradients=[0.3, -0.3],
            rates=[1.0e6, 1.0e6],
            weights=CostWeights(w_energy=0.0, w_flock=0.0),
            wind=WindModel(),
            tx_power_w=0.2,
        )
        self.assertTrue(result.passed, result.detail)

    def test_hamiltonian_search_covers_every_level(self):
        config = load_config(SMALL_CONFIG)
        field, value, _ = picard_solve(config)
        rate = rate_field(config.grid, config.channel, config.hotspot)
        args = (field, value, rate, config.weights, config.wind, config.channel.tx_power_w, config.solver.v_max)
        full = oracles.hamiltonian_grid_search(*args)
        self.assertEqual(full.checked, config.grid.n_z * config.grid.n_t)
        self.assertTrue(full.passed, full.detail)
        subset = oracles.hamiltonian_grid_search(*args, levels=[0, 5])
        self.assertEqual(subset.checked, 2 * config.grid.n_z)


# ── 输出目录与导出 ───────────────────────────────────────────────────────────


class TestPaths(unittest.TestCase):

    def test_priority(self):
        with patch.dict(os.environ, {OUTPUT_ROOT_ENV: "/tmp/from_env"}):
            self.assertEqual(get_output_root("/tmp/cli", "/tmp/cfg"), "/tmp/cli")
            self.assertEqual(get_output_root(None, "/tmp/cfg"), "/tmp/cfg")
            self.assertEqual(get_output_root(None, None), "/tmp/from_env")

    def test_xdg_fallback(self):
        env = {k: v for k, v in os.environ.items() if k != OUTPUT_ROOT_ENV}
        env["XDG_DATA_HOME"] = "/tmp/xdg"
        with patch.dict(os.environ, env, clear=True):
            self.assertEqual(get_output_root(), os.path.join("/tmp/xdg", "mfgflock", "runs"))

    def test_run_dir_name(self):
        now = datetime(2024, 3, 5, 7, 8, 9, tzinfo=timezone.utc)
        self.assertEqual(run_dir_name("abcdef0123456789", now), "20240305T070809Z_abcdef012345")


class TestExporterHelpers(unittest.TestCase):

    def test_gamma_label(self):
        self.assertEqual(gamma_label(1.0), "1")
        self.assertEqual(gamma_label(0.1), "0.1")
        self.assertEqual(gamma_label(10.0), "10")

    def test_trajectory_frame_long_format(self):
        positions = np.array([[0.0, 1.0, 2.0], [5.0, 6.0, 7.0]])
        traj = FleetTrajectory(
            positions=positions,
            velocities=np.zeros_like(positions),
            rates=np.ones_like(positions),
            energy_per_rate=np.ones_like(positions),
            times=np.array([0.0, 0.1, 0.2]),
            seed=0,
            controller_tag="mfg",
        )
        frame = trajectory_frame(traj)
        self.assertEqual(len(frame), 6)
        self.assertEqual(frame["uav_id"].tolist(), [0, 0, 0, 1, 1, 1])
        self.assertEqual(frame["z"].tolist(), [0.0, 1.0, 2.0, 5.0, 6.0, 7.0])

    def test_badges_plain_when_not_tty(self):
        with patch("sys.stdout", io.StringIO()):
            self.assertEqual(badge(True), "PASS")
            self.assertEqual(badge(False), "FAIL")
            self.assertEqual(converged_badge(False), "未收敛")


if __name__ == "__main__":
    unittest.main()
