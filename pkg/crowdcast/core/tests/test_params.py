import os
import unittest

import numpy as np
from monty.serialization import dumpfn, loadfn
from monty.tempfile import ScratchDir

from crowdcast.core.config import ModelConfig
from crowdcast.core.exceptions import ConfigError, ShapeError
from crowdcast.core.ndnum import GradientTape
from crowdcast.core.params import ModelParams
from crowdcast.models.seqnet import init_params, parameter_shapes

TEST_DIR = os.path.dirname(os.path.abspath(__file__))


class ModelParamsTest(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.config = ModelConfig(d_e=4, d_r=3, d_h=5, tcn_layers=2, T_obs=4, T_pred=3)
        cls.params = init_params(cls.config, seed=5)

    def test_names_follow_parameter_shapes(self):
        shapes = parameter_shapes(self.config)
        self.assertEqual(self.params.names, list(shapes))
        for name, shape in shapes.items():
            self.assertEqual(self.params[name].shape, shape)

    def test_initialization(self):
        self.assertTrue(np.all(self.params["social.b_c"] == 0))
        self.assertTrue(np.all(self.params["tcn.1.a"] == 0.25))
        bound = np.sqrt(1.0 / 2)
        self.assertTrue(np.all(np.abs(self.params["social.W_e"]) <= bound))
        self.assertTrue(init_params(self.config, seed=5).identical_to(self.params))
        self.assertFalse(init_params(self.config, seed=6).identical_to(self.params))

    def test_arrays_are_read_only(self):
        with self.assertRaises(ValueError):
            self.params["head.b_o"][0] = 1.0
        copies = self.params.arrays()
        copies["head.b_o"][0] = 1.0
        self.assertEqual(self.params["head.b_o"][0], 0.0)

    def test_watch_registers_every_parameter(self):
        tape = GradientTape()
        watched = self.params.watch(tape)
        self.assertEqual(list(tape.leaves), self.params.names)
        self.assertTrue(all(t.node is not None for t in watched.values()))
        self.assertTrue(all(t.node is None for t in self.params.constants().values()))

    def test_updated(self):
        new = self.params.updated({"head.b_o": np.ones(5)})
        np.testing.assert_array_equal(new["head.b_o"], np.ones(5))
        self.assertEqual(self.params["head.b_o"][0], 0.0)
        self.assertIs(new.config, self.params.config)
        with self.assertRaises(ShapeError):
            self.params.updated({"head.b_o": np.ones(4)})
        with self.assertRaises(ShapeError):
            self.params.updated({"head.nothing": np.ones(5)})

    def test_save_load_is_bit_exact(self):
        rng = np.random.default_rng(0)
        # values whose decimal forms are long
        noisy = self.params.updated({name: rng.normal(size=value.shape) / 3.0
                                     for name, value in self.params.items()})
        with ScratchDir("."):
            noisy.save("model.ckpt")
            loaded = ModelParams.load("model.ckpt")
        self.assertTrue(loaded.identical_to(noisy))
        self.assertEqual(loaded.config, self.config)

    def test_checkpoint_layout(self):
        with ScratchDir("."):
            self.params.save("model.ckpt")
            raw = loadfn("model.ckpt", cls=None)
        self.assertEqual(raw["format_version"], 1)
        self.assertEqual(raw["params"]["social.W_e"]["shape"], [2, 4])
        self.assertEqual(len(raw["params"]["social.W_e"]["data"]), 8)
        self.assertEqual(raw["config"]["T_pred"], 3)

    def test_rejects_unknown_format(self):
        d = self.params.as_dict()
        d["format_version"] = 2
        with self.assertRaises(ConfigError):
            ModelParams.from_dict(d)
        with ScratchDir("."):
            dumpfn({"not": "a checkpoint"}, "other.json")
            with self.assertRaises(ConfigError):
                ModelParams.load("other.json")

    def test_inconsistent_shape(self):
        d = self.params.as_dict()
        d["params"]["head.b_o"]["shape"] = [4]
        with self.assertRaises(ShapeError):
            ModelParams.from_dict(d)

    def test_missing_file(self):
        with ScratchDir("."):
            with self.assertRaises(FileNotFoundError):
                ModelParams.load("absent.ckpt")


if __name__ == "__main__":
    unittest.main()
