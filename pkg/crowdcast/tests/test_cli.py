import io
import os
import unittest
from contextlib import redirect_stderr, redirect_stdout
from unittest import mock

import pandas as pd
from monty.tempfile import ScratchDir

from crowdcast.cli import run, EXIT_OK, EXIT_USER_ERROR, EXIT_INTERNAL_ERROR
from crowdcast.core.params import ModelParams

SMALL_CONFIG = """\
model:
  d_e: 4
  d_r: 2
  d_h: 4
  tcn_layers: 1
train:
  batch_size: 4
  lr: 0.001
"""


def _run(*argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = run(list(argv))
    return code, out.getvalue(), err.getvalue()


class ExitCodeTest(unittest.TestCase):

    def test_usage_errors(self):
        self.assertEqual(_run()[0], EXIT_USER_ERROR)
        self.assertEqual(_run("gen", "--bogus")[0], EXIT_USER_ERROR)
        code, _, err = _run("gen", "--out", "x", "--template", "spiral")
        self.assertEqual(code, EXIT_USER_ERROR)
        self.assertIn("error", err)

    def test_help(self):
        code, out, _ = _run("--help")
        self.assertEqual(code, EXIT_OK)
        self.assertIn("predict", out)

    def test_missing_input(self):
        code, _, err = _run("eval", "--data", "/nonexistent/scenes", "--models", "cv")
        self.assertEqual(code, EXIT_USER_ERROR)
        self.assertIn("/nonexistent/scenes", err)

    def test_bad_seed_variable(self):
        with mock.patch.dict(os.environ, {"CROWDCAST_SEED": "abc"}):
            self.assertEqual(_run("bench", "--n-peds", "2")[0], EXIT_USER_ERROR)

    def test_internal_error(self):
        with mock.patch("crowdcast.cli.generate_scenes", side_effect=RuntimeError("boom")):
            code, _, err = _run("gen", "--out", "scenes")
        self.assertEqual(code, EXIT_INTERNAL_ERROR)
        self.assertIn("RuntimeError", err)


class WorkflowTest(unittest.TestCase):

    def test_gen_train_eval_predict(self):
        with ScratchDir("."):
            with open("small.yaml", "w") as f:
                f.write(SMALL_CONFIG)
            code, _, _ = _run("gen", "--template", "crossing", "merge", "--n", "2", "--scenes",
                              "2", "--frames", "22", "--seed", "1", "--out", "scenes")
            self.assertEqual(code, EXIT_OK)
            self.assertTrue(os.path.exists(os.path.join("scenes", "manifest.json")))

            code, out, _ = _run("train", "--data", "scenes", "--config", "small.yaml",
                                "--epochs", "1", "--out", "ckpt")
            self.assertEqual(code, EXIT_OK)
            self.assertIn("best epoch", out)
            for name in ("final.ckpt", "best.ckpt", "train_log.csv"):
                self.assertTrue(os.path.exists(os.path.join("ckpt", name)))
            params = ModelParams.load(os.path.join("ckpt", "final.ckpt"))
            self.assertEqual(params.config.d_e, 4)

            code, _, _ = _run("eval", "--checkpoint", "ckpt/final.ckpt", "--data", "scenes",
                              "--n-samples", "3", "--out", "report.csv")
            self.assertEqual(code, EXIT_OK)
            report = pd.read_csv("report.csv")
            self.assertTrue({"lr", "cv"} <= set(report["model"]))
            self.assertEqual(report["model"].nunique(), 3)

            scene = os.path.join("scenes", "scene_0000_crossing.txt")
            code, _, _ = _run("predict", "--checkpoint", "ckpt/final.ckpt", "--input", scene,
                              "--output", "pred.csv")
            self.assertEqual(code, EXIT_OK)
            table = pd.read_csv("pred.csv")
            self.assertEqual(len(table), 2 * 12)
            self.assertEqual(sorted(table["step"].unique()), list(range(1, 13)))

            # without --output only the table reaches standard output
            code, out, _ = _run("predict", "--checkpoint", "ckpt/final.ckpt", "--input", scene)
            self.assertEqual(code, EXIT_OK)
            with open("pred.csv") as f:
                self.assertEqual(out, f.read())

            code, out, _ = _run("predict", "--checkpoint", "ckpt/final.ckpt", "--input", scene,
                                "--stride", "1")
            self.assertEqual(pd.read_csv(io.StringIO(out))["window_id"].nunique(), 15)

            self.assertEqual(_run("predict", "--checkpoint", "ckpt/final.ckpt", "--input", scene,
                                  "--horizon", "20")[0], EXIT_USER_ERROR)
            self.assertEqual(_run("eval", "--data", "scenes", "--models", "model")[0],
                             EXIT_USER_ERROR)

    def test_reproducible_training(self):
        with ScratchDir("."):
            with open("small.yaml", "w") as f:
                f.write(SMALL_CONFIG)
            _run("gen", "--n", "2", "--scenes", "2", "--frames", "21", "--out", "scenes")
            for out in ("a", "b"):
                code, _, _ = _run("train", "--data", "scenes", "--config", "small.yaml",
                                  "--epochs", "2", "--seed", "3", "--out", out)
                self.assertEqual(code, EXIT_OK)
            first = ModelParams.load(os.path.join("a", "final.ckpt"))
            second = ModelParams.load(os.path.join("b", "final.ckpt"))
            self.assertTrue(first.identical_to(second))

    def test_bench(self):
        with ScratchDir("."):
            code, out, _ = _run("bench", "--n-peds", "4", "--repeats", "5", "--warmup", "0",
                                "--scenes", "1", "--no-pin", "--out", "bench.csv")
            self.assertEqual(code, EXIT_OK)
            self.assertIn("note:", out)
            table = pd.read_csv("bench.csv")
            self.assertEqual(table["mode"].tolist(), ["graph", "direct"])


if __name__ == "__main__":
    unittest.main()
