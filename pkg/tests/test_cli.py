import filecmp
import io
import json
import math
import os
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from unittest.mock import patch

import numpy as np

from ghcm.cli import build_parser, main
from ghcm.config import parse_config
from ghcm.core import handle
from ghcm.db import load_instance, read_labeling
from ghcm.divergence import choose_constants
from ghcm.experiment import (
    TRIAL_COLUMNS,
    BenchRow,
    bench_within_tolerance,
    run_trial,
    summarize,
)
from ghcm.recovery import full_recover
from ghcm.sampler import sample_ghcm
from ghcm.util import DEFAULT2, MAP_SEED, PROPAGATED, REFINED


class CommandTestCase(unittest.TestCase):
    def setUp(self):
        self.workdir = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.workdir.cleanup()

    def path(self, name):
        return os.path.join(self.workdir.name, name)

    def write_config(self, name="config.json", **fields):
        data = {"preset": "geometric-sl", "lambda": 2.0, "n": 1000, "mu": 4.0}
        data.update(fields)
        path = self.path(name)
        with open(path, "w") as handle:
            json.dump(data, handle)
        return path

    def run_command(self, command, **options):
        stdout = io.StringIO()
        with redirect_stdout(stdout):
            status = handle(command, **options)
        return status, stdout.getvalue()


class TestDivergenceCommand(CommandTestCase):
    def test_reports_ratio_and_constants(self):
        status, out = self.run_command("divergence", config=self.write_config(mu=2.0, n=1e4))
        self.assertEqual(status, 0)
        document = json.loads(out)
        expected = 2.0 * math.pi * 0.5 * (1.0 - math.exp(-0.5))
        self.assertAlmostEqual(document["threshold"]["threshold_ratio"], expected, places=6)
        self.assertEqual(document["threshold"]["regime"], "above")
        self.assertGreater(document["constants"]["chi"], 0.0)

    def test_infeasible_constants_are_reported(self):
        status, out = self.run_command("divergence", config=self.write_config(**{"lambda": 0.1}))
        self.assertEqual(status, 0)
        document = json.loads(out)
        self.assertIsNone(document["constants"])
        self.assertIn("constants_error", document)

    def test_equal_bernoulli_rows_are_below(self):
        config = self.write_config(preset="geometric-pds", mu=None, p=0.3, q=0.3)
        status, out = self.run_command("divergence", config=config)
        self.assertEqual(status, 0)
        threshold = json.loads(out)["threshold"]
        self.assertAlmostEqual(threshold["threshold_ratio"], 0.0, places=12)
        self.assertEqual(threshold["regime"], "below")

    def test_missing_field_exits_with_config_code(self):
        path = self.path("bad.json")
        with open(path, "w") as handle:
            json.dump({"preset": "geometric-sl", "lambda": 2.0, "n": 1000}, handle)
        status, out = self.run_command("divergence", config=path)
        self.assertEqual(status, 2)
        self.assertEqual(out, "")


class TestRecoverCommand(CommandTestCase):
    def sample(self, name="instance.sqlite", **fields):
        out = self.path(name)
        status, _ = self.run_command("sample", config=self.write_config(**fields), seed=5, out=out)
        self.assertEqual(status, 0)
        return out

    def test_corrupt_instance(self):
        path = self.path("broken.sqlite")
        with open(path, "w") as handle:
            handle.write("definitely not sqlite" * 50)
        status, _ = self.run_command("recover", instance=path, out=self.path("labels.csv"))
        self.assertEqual(status, 3)

    def test_below_threshold_refused_without_force(self):
        instance = self.sample(mu=0.5)
        labels = self.path("labels.csv")
        status, _ = self.run_command("recover", instance=instance, out=labels)
        self.assertEqual(status, 4)
        self.assertFalse(os.path.exists(labels))

        status, out = self.run_command("recover", instance=instance, out=labels, force=True)
        self.assertEqual(status, 0)
        document = json.loads(out)
        self.assertEqual(document["threshold"]["regime"], "below")
        self.assertIn("evaluation", document)

    def test_full_recovery_document(self):
        instance = self.sample()
        labels = self.path("labels.csv")
        status, out = self.run_command("recover", instance=instance, out=labels)
        self.assertEqual(status, 0)
        document = json.loads(out)
        self.assertIn("phase1_evaluation", document)
        self.assertNotIn("timings", document)
        header, labeling = read_labeling(labels)
        self.assertEqual(header["phase"], "full")
        self.assertEqual(header["seed"], 5)
        self.assertIsNone(header["timings"])
        self.assertEqual(len(labeling), load_instance(instance).vertex_count)

    def test_matches_in_process_run(self):
        labels = self.path("labels.csv")
        status, _ = self.run_command("recover", instance=self.sample(), out=labels)
        self.assertEqual(status, 0)
        _, labeling = read_labeling(labels)
        params = parse_config({"preset": "geometric-sl", "lambda": 2.0, "n": 1000, "mu": 4.0}).model_params()
        inst = sample_ghcm(params, 5)
        expected = full_recover(inst.public, choose_constants(params.lam, params.d))
        np.testing.assert_array_equal(labeling.labels, expected.labels)
        self.assertEqual(labeling.provenance.tolist(), expected.provenance.tolist())

    def test_phase1_only_with_timings(self):
        instance = self.sample()
        labels = self.path("labels.csv")
        status, out = self.run_command(
            "recover", instance=instance, out=labels, phase1_only=True, timings=True
        )
        self.assertEqual(status, 0)
        document = json.loads(out)
        self.assertNotIn("phase1_evaluation", document)
        self.assertIn("phase1", document["timings"])
        header, labeling = read_labeling(labels)
        self.assertEqual(header["phase"], "phase1")
        self.assertNotIn(REFINED, set(labeling.provenance))
        self.assertLessEqual(set(labeling.provenance), {MAP_SEED, PROPAGATED, DEFAULT2})


class TestOracleCheckCommand(CommandTestCase):
    def test_map_seed_agrees_with_brute_force(self):
        config = self.write_config(mu=1.0, n=1e4)
        status, out = self.run_command("oracle-check", config=config, seed=1, trials=3)
        self.assertEqual(status, 0)
        self.assertEqual(json.loads(out), {"trials": 3, "mismatched_seeds": []})


class TestSweepCommand(CommandTestCase):
    def sweep_config(self, **fields):
        return self.write_config(sweep=[{"name": "mu", "values": [3.0, 4.0]}], **fields)

    def test_zero_trials_writes_header_only(self):
        out = self.path("sweep.csv")
        status, _ = self.run_command("sweep", config=self.sweep_config(), trials=0, out=out)
        self.assertEqual(status, 0)
        with open(out) as handle:
            lines = handle.read().splitlines()
        self.assertTrue(lines[0].startswith("# ghcm sweep schema=1"))
        self.assertEqual(lines[-1], ",".join(["point", "trial", "mu", *TRIAL_COLUMNS]))
        self.assertEqual(sum(1 for line in lines if not line.startswith("#")), 1)

    def test_output_independent_of_threads(self):
        config = self.sweep_config(trials=2, base_seed=11)
        first, second = self.path("one.csv"), self.path("two.csv")
        status_one, _ = self.run_command("sweep", config=config, out=first, threads=1)
        status_two, _ = self.run_command("sweep", config=config, out=second, threads=2)
        self.assertEqual(status_one, status_two)
        self.assertTrue(filecmp.cmp(first, second, shallow=False))
        with open(first) as handle:
            lines = handle.read().splitlines()
        rows = [line for line in lines if not line.startswith("#")][1:]
        self.assertEqual([row.split(",")[:2] for row in rows], [["0", "0"], ["0", "1"], ["1", "0"], ["1", "1"]])
        self.assertEqual(sum(1 for line in lines if line.startswith("# summary")), 2)


class TestBenchCommand(CommandTestCase):
    def test_single_size(self):
        out = self.path("bench.csv")
        status, _ = self.run_command("bench", config=self.write_config(bench_n=[1000]), out=out)
        self.assertEqual(status, 0)
        with open(out) as handle:
            lines = handle.read().splitlines()
        self.assertEqual(len(lines), 3)
        self.assertTrue(lines[2].startswith("1000,0,"))

    def test_tolerance(self):
        fast = BenchRow(n=1e3, seed=0, vertex_count=1000, edge_count=1000, expected_edges=1000.0, seconds=1.0)
        slow = BenchRow(n=1e4, seed=0, vertex_count=10000, edge_count=10000, expected_edges=10000.0, seconds=25.0)
        self.assertTrue(bench_within_tolerance([fast]))
        self.assertFalse(bench_within_tolerance([fast, slow]))
        self.assertEqual(fast.edge_ratio, 1.0)


class TestTrialRecords(unittest.TestCase):
    def test_failed_trial_is_recorded(self):
        config = parse_config({"preset": "geometric-sl", "lambda": 2.0, "n": 1000, "mu": 4.0, "constants": {"chi": 50.0}})
        record = run_trial(config, 0, {}, 0)
        self.assertTrue(record.error.startswith("ConfigurationError"))
        self.assertIsNone(record.agreement)
        self.assertEqual(summarize(config, [record]), ["point=0 trials=1 errors=1 exact_rate= almost_exact_rate="])

    def test_unexpected_exception_is_recorded(self):
        config = parse_config({"preset": "geometric-sl", "lambda": 2.0, "n": 1000, "mu": 4.0})
        with patch("ghcm.experiment.full_recover", side_effect=RuntimeError("boom")):
            record = run_trial(config, 0, {}, 0)
        self.assertEqual(record.error, "RuntimeError: boom")
        self.assertIsNone(record.agreement)
        self.assertGreater(record.vertex_count, 0)


class TestParser(unittest.TestCase):
    def test_recover_flags(self):
        args = build_parser().parse_args(["recover", "inst.sqlite", "--out", "l.csv", "--phase1-only"])
        self.assertEqual(args.instance, "inst.sqlite")
        self.assertTrue(args.phase1_only)
        self.assertFalse(args.force)

    def test_missing_required_option(self):
        with redirect_stderr(io.StringIO()), self.assertRaises(SystemExit):
            build_parser().parse_args(["sample", "--config", "c.json"])

    def test_main_dispatches(self):
        with tempfile.TemporaryDirectory() as workdir:
            path = os.path.join(workdir, "config.json")
            with open(path, "w") as handle:
                json.dump({"preset": "geometric-pds", "lambda": 2.0, "n": 1e4, "p": 0.9, "q": 0.1}, handle)
            stdout = io.StringIO()
            with redirect_stdout(stdout):
                status = main(["divergence", "--config", path])
        self.assertEqual(status, 0)
        self.assertEqual(json.loads(stdout.getvalue())["params"]["d"], 2)


if __name__ == "__main__":
    unittest.main()
