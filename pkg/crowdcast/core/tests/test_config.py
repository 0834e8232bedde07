import os
import unittest
from unittest import mock

from monty.tempfile import ScratchDir

from crowdcast.core.config import ModelConfig, TrainConfig, load_config, override, \
    resolve_seed, SEED_ENV_VAR
from crowdcast.core.exceptions import ConfigError
from crowdcast.core.registry import Registry


class ModelConfigTest(unittest.TestCase):

    def test_defaults(self):
        config = ModelConfig()
        self.assertEqual(config.horizon, (8, 12))
        self.assertEqual(config.d_e, 32)
        self.assertTrue(config.social)

    def test_invalid_values(self):
        for kwargs in ({"tcn_kernel": 2}, {"extrapolator_kernel": 0}, {"d_e": 0},
                       {"T_obs": 1}, {"T_pred": 0}, {"sigma_floor": 0.0}):
            with self.assertRaises(ConfigError):
                ModelConfig(**kwargs)

    def test_equality_and_round_trip(self):
        config = ModelConfig(d_e=8, social=False)
        self.assertEqual(ModelConfig.from_dict(config.as_dict()), config)
        self.assertNotEqual(config, ModelConfig(d_e=8))
        self.assertEqual(len({config, ModelConfig(d_e=8, social=False)}), 1)


class TrainConfigTest(unittest.TestCase):

    def test_zero_learning_rate_allowed(self):
        self.assertEqual(TrainConfig(lr=0).lr, 0.0)

    def test_invalid_values(self):
        for kwargs in ({"lr": -0.1}, {"batch_size": 0}, {"epochs": 0},
                       {"validation_fraction": 1.0}, {"lr_decay": 0.0},
                       {"checkpoint_interval": -1}):
            with self.assertRaises(ConfigError):
                TrainConfig(**kwargs)

    def test_override(self):
        config = override(TrainConfig(), lr=0.5, epochs=None)
        self.assertEqual(config.lr, 0.5)
        self.assertEqual(config.epochs, 30)


class LoadConfigTest(unittest.TestCase):

    def test_yaml_sections(self):
        with ScratchDir("."):
            with open("config.yaml", "w") as f:
                f.write("model:\n  d_e: 16\n  T_pred: 20\ntrain:\n  lr: 0.001\n")
            model, train = load_config("config.yaml")
        self.assertEqual(model.d_e, 16)
        self.assertEqual(model.T_pred, 20)
        self.assertEqual(model.d_r, 16)
        self.assertEqual(train.lr, 0.001)
        self.assertEqual(train.epochs, 30)

    def test_missing_sections_give_defaults(self):
        with ScratchDir("."):
            with open("config.yaml", "w") as f:
                f.write("train:\n  epochs: 2\n")
            model, train = load_config("config.yaml")
        self.assertEqual(model, ModelConfig())
        self.assertEqual(train.epochs, 2)

    def test_unknown_keys(self):
        with ScratchDir("."):
            with open("bad_section.yaml", "w") as f:
                f.write("optimizer:\n  lr: 1\n")
            with open("bad_key.yaml", "w") as f:
                f.write("model:\n  width: 3\n")
            with self.assertRaises(ConfigError):
                load_config("bad_section.yaml")
            with self.assertRaises(ConfigError):
                load_config("bad_key.yaml")


class SeedTest(unittest.TestCase):

    def test_resolution_order(self):
        with mock.patch.dict(os.environ, {SEED_ENV_VAR: "17"}):
            self.assertEqual(resolve_seed(3), 3)
            self.assertEqual(resolve_seed(), 17)
        with mock.patch.dict(os.environ, {}, clear=True):
            self.assertEqual(resolve_seed(), 0)
        with mock.patch.dict(os.environ, {SEED_ENV_VAR: "seventeen"}):
            with self.assertRaises(ConfigError):
                resolve_seed()


class RegistryTest(unittest.TestCase):

    def test_same_name_same_instance(self):
        self.assertIs(Registry("scratch_test"), Registry("scratch_test"))

    def test_register_and_lookup(self):
        registry = Registry("scratch_lookup_test")

        @registry.register("thing")
        def thing():
            return 1

        self.assertIs(registry.lookup("thing"), thing)
        with self.assertRaises(ConfigError) as ctx:
            registry.lookup("other", error_cls=ConfigError)
        self.assertIn("thing", str(ctx.exception))


if __name__ == "__main__":
    unittest.main()
