import unittest

import numpy as np

from crowdcast.core.config import ModelConfig
from crowdcast.core.exceptions import ConfigError
from crowdcast.core.ndnum import Tensor, apply_primitive, finite_diff_check
from crowdcast.dataio.windows import SceneWindow, to_displacements
from crowdcast.models.gauss import decode_params, nll
from crowdcast.models.seqnet import TemporalBlock, Extrapolator, init_params, tcn_forward, \
    extrapolate, model_forward

SMALL = dict(d_e=4, d_r=3, d_h=4, tcn_layers=2, T_obs=4, T_pred=3)
N_CASES = 50


def _window(n, T_obs, T_pred, seed=0):
    rng = np.random.default_rng(seed)
    steps = rng.normal(loc=0.4, scale=0.1, size=(n, T_obs + T_pred, 2))
    return SceneWindow(np.cumsum(steps, axis=1) + rng.normal(scale=3.0, size=(n, 1, 2)),
                       list(range(1, n + 1)), T_obs, T_pred)


def _randomized(config, seed):
    params = init_params(config, seed)
    rng = np.random.default_rng(seed + 100)
    return params.updated({name: rng.normal(scale=0.5, size=value.shape)
                           for name, value in params.items()})


def _mean(tensor):
    return apply_primitive("reduce-sum", [tensor], {"axis": None}) * (1.0 / tensor.size)


class TcnForwardTest(unittest.TestCase):

    def test_zero_input(self):
        rng = np.random.default_rng(0)
        blocks = [TemporalBlock(Tensor(rng.normal(size=(3, 4, 4))), Tensor(np.zeros(4)),
                                Tensor([0.25])) for _ in range(3)]
        out = tcn_forward(Tensor(np.zeros((8, 2, 4))), blocks)
        np.testing.assert_array_equal(out.data, 0.0)

    def test_identity_block(self):
        W = np.zeros((3, 4, 4))
        W[1] = np.eye(4)
        S = np.random.default_rng(1).normal(size=(8, 2, 4))
        block = TemporalBlock(Tensor(W), Tensor(np.zeros(4)), Tensor([0.25]))
        out = tcn_forward(Tensor(S), [block], residual=False).data
        np.testing.assert_array_equal(out, np.where(S > 0, S, 0.25 * S))

    def test_matches_sliding_window(self):
        rng = np.random.default_rng(2)
        S = rng.normal(size=(6, 3, 4))
        W, b = rng.normal(size=(3, 4, 4)), rng.normal(size=4)
        out = tcn_forward(Tensor(S), [TemporalBlock(Tensor(W), Tensor(b), Tensor([0.2]))]).data
        for i in range(3):
            for t in range(6):
                pre = b.copy()
                for tap in range(3):
                    source = t + tap - 1
                    if 0 <= source < 6:
                        pre = pre + S[source, i] @ W[tap]
                expected = np.where(pre > 0, pre, 0.2 * pre) + S[t, i]
                np.testing.assert_allclose(out[t, i], expected, rtol=0, atol=1e-12)

    def test_needs_a_block(self):
        with self.assertRaises(ConfigError):
            tcn_forward(Tensor(np.zeros((8, 1, 4))), [])


class ExtrapolateTest(unittest.TestCase):

    def _extrapolator(self, T_obs, T_pred, d_e, rng, zero=False):
        make = np.zeros if zero else (lambda shape: rng.normal(size=shape))
        return Extrapolator(Tensor(make((T_pred, T_obs, 3))), Tensor(make((T_pred, 1, 1))),
                            Tensor([0.25]), Tensor(make((d_e, 5))), Tensor(make((5,))))

    def test_default_horizon(self):
        rng = np.random.default_rng(3)
        out = extrapolate(Tensor(rng.normal(size=(8, 2, 4))), self._extrapolator(8, 12, 4, rng))
        self.assertEqual(out.shape, (12, 2, 5))

    def test_long_horizon(self):
        rng = np.random.default_rng(4)
        out = extrapolate(Tensor(rng.normal(size=(8, 2, 4))), self._extrapolator(8, 20, 4, rng))
        self.assertEqual(out.shape, (20, 2, 5))

    def test_zero_case(self):
        rng = np.random.default_rng(5)
        out = extrapolate(Tensor(np.zeros((8, 3, 4))), self._extrapolator(8, 12, 4, rng, zero=True))
        np.testing.assert_array_equal(out.data, 0.0)


class ModelForwardTest(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.config = ModelConfig(**SMALL)
        cls.params = _randomized(cls.config, 0)
        cls.window = _window(3, 4, 3)

    def test_output_shape(self):
        raw = model_forward(to_displacements(self.window), self.params)
        self.assertEqual(raw.shape, (3, 3, 5))
        params = init_params(ModelConfig(T_pred=20))
        raw = model_forward(to_displacements(_window(2, 8, 20)), params)
        self.assertEqual(raw.shape, (20, 2, 5))

    def test_stationary_single_pedestrian(self):
        window = SceneWindow(np.full((1, 20, 2), 4.0), [1], 8, 12)
        raw = model_forward(to_displacements(window), init_params())
        self.assertTrue(np.all(np.isfinite(raw.data)))

    def test_deterministic(self):
        first = model_forward(to_displacements(self.window), self.params).data
        second = model_forward(to_displacements(self.window), self.params).data
        self.assertEqual(first.tobytes(), second.tobytes())

    def test_permutation_equivariance(self):
        for seed in range(N_CASES):
            rng = np.random.default_rng([11, seed])
            window = _window(int(rng.integers(2, 7)), 4, 3, seed=seed)
            order = list(rng.permutation(window.n_peds))
            raw = model_forward(to_displacements(window), self.params).data
            permuted = model_forward(to_displacements(window.permuted(order)), self.params).data
            np.testing.assert_array_equal(permuted, raw[:, order])

    def test_translation_invariance(self):
        for seed in range(N_CASES):
            rng = np.random.default_rng([12, seed])
            window = _window(int(rng.integers(1, 6)), 4, 3, seed=seed)
            # dyadic positions and shifts keep every sum and difference exact
            positions = np.round(window.positions * 64) / 64
            shift = rng.integers(-400, 400, size=2) / 4.0
            base = SceneWindow(positions, window.track_ids, 4, 3)
            moved = SceneWindow(positions + shift, window.track_ids, 4, 3)
            np.testing.assert_array_equal(model_forward(to_displacements(moved), self.params).data,
                                          model_forward(to_displacements(base), self.params).data)

    def test_ignores_future(self):
        positions = self.window.positions.copy()
        positions[:, self.config.T_obs:] += 100.0
        altered = SceneWindow(positions, self.window.track_ids, 4, 3)
        raw = model_forward(to_displacements(self.window), self.params).data
        raw_altered = model_forward(to_displacements(altered), self.params).data
        np.testing.assert_array_equal(raw, raw_altered)

    def test_horizon_mismatch(self):
        with self.assertRaises(ConfigError):
            model_forward(to_displacements(_window(1, 8, 3)), self.params)
        with self.assertRaises(ConfigError):
            model_forward(to_displacements(self.window), self.params.constants())

    def test_plain_configuration(self):
        config = ModelConfig(social=False, **SMALL)
        params = init_params(config)
        self.assertNotIn("social.W_r", params)
        raw = model_forward(to_displacements(self.window), params)
        self.assertEqual(raw.shape, (3, 3, 5))

    def test_mean_output_gradient(self):
        encoded = to_displacements(self.window)

        def f(p):
            return _mean(model_forward(encoded, p, self.config))

        self.assertLess(finite_diff_check(f, self.params, floor=1e-4), 1e-4)

    def test_nll_gradient(self):
        encoded = to_displacements(self.window)
        targets = np.swapaxes(encoded.future, 0, 1)

        def f(p):
            return nll(decode_params(model_forward(encoded, p, self.config)), targets).mean

        self.assertLess(finite_diff_check(f, self.params, floor=1e-4), 1e-4)

    def test_nll_gradient_default_size(self):
        # two pedestrians, 8 observed and 12 predicted steps, default widths;
        # the perturbation moves the initialization off PReLU and pooling kinks
        config = ModelConfig()
        params = init_params(config, 0)
        rng = np.random.default_rng(13)
        params = params.updated({name: value + rng.normal(scale=0.1, size=value.shape)
                                 for name, value in params.items()})
        encoded = to_displacements(_window(2, 8, 12, seed=13))
        targets = np.swapaxes(encoded.future, 0, 1)

        def f(p):
            return nll(decode_params(model_forward(encoded, p, config)), targets).mean

        self.assertLess(finite_diff_check(f, params, eps=1e-6, floor=1e-4, max_coords=4), 1e-4)


if __name__ == "__main__":
    unittest.main()
