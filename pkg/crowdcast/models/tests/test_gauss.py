import math
import unittest

import numpy as np

from crowdcast.core.exceptions import DomainError, NumericsError, ShapeError
from crowdcast.core.ndnum import Tensor, GradientTape, backward
from crowdcast.dataio.windows import SceneWindow, to_displacements
from crowdcast.models.gauss import BiGaussianSeq, decode_params, nll, point_nll, \
    sample_displacements, sample_many, displacements_to_absolute, distribution_frame, \
    LOG_2PI, DISTRIBUTION_COLUMNS


def _raw(values, T_pred=1, n=1):
    return Tensor(np.broadcast_to(np.asarray(values, dtype=float), (T_pred, n, 5)))


def _oracle_nll(x, y, mx, my, sx, sy, rho):
    nx, ny = (x - mx) / sx, (y - my) / sy
    z = nx * nx + ny * ny - 2 * rho * nx * ny
    density = math.exp(-z / (2 * (1 - rho * rho))) / \
        (2 * math.pi * sx * sy * math.sqrt(1 - rho * rho))
    return -math.log(density)


class DecodeParamsTest(unittest.TestCase):

    def test_zero_raw(self):
        dist = decode_params(_raw([0, 0, 0, 0, 0]))
        np.testing.assert_array_equal(dist.mu.data, [[[0.0, 0.0]]])
        np.testing.assert_array_equal(dist.sigma.data, [[[1.0, 1.0]]])
        np.testing.assert_array_equal(dist.rho.data, [[[0.0]]])

    def test_large_correlation(self):
        rho = decode_params(_raw([0, 0, 0, 0, 10])).rho_values[0, 0]
        self.assertAlmostEqual(rho, math.tanh(10), places=15)
        self.assertGreater(rho, 0.99999)
        self.assertLess(rho, 1.0)

    def test_exp_sigma(self):
        sigma_x = decode_params(_raw([0, 0, -1, 0, 0])).sigma_x[0, 0]
        self.assertAlmostEqual(sigma_x, 0.3679, places=4)

    def test_extremes_stay_valid(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            raw = rng.uniform(-50, 50, size=(4, 3, 5))
            raw[rng.random(size=raw.shape) < 0.3] = 50.0 * rng.choice([-1.0, 1.0])
            dist = decode_params(Tensor(raw))
            dist.validate()
            self.assertTrue(np.all(dist.sigma.data >= 1e-6))

    def test_non_finite(self):
        with self.assertRaises(NumericsError):
            decode_params(_raw([0, np.nan, 0, 0, 0]))
        with self.assertRaises(NumericsError):
            decode_params(_raw([0, 0, np.inf, 0, 0]))

    def test_wrong_channel_count(self):
        with self.assertRaises(ShapeError):
            decode_params(Tensor(np.zeros((2, 1, 4))))


class NllTest(unittest.TestCase):

    def test_standard_normal_at_mean(self):
        dist = BiGaussianSeq.constant(1, 1)
        result = nll(dist, np.zeros((1, 1, 2)))
        self.assertAlmostEqual(result.mean.item(), LOG_2PI, places=12)
        self.assertAlmostEqual(result.mean.item(), 1.837877, places=6)

    def test_correlated_at_mean(self):
        dist = BiGaussianSeq.constant(3, 2, mu=(1.0, -2.0), rho=0.5)
        result = nll(dist, np.broadcast_to([1.0, -2.0], (3, 2, 2)))
        self.assertAlmostEqual(result.mean.item(), math.log(2 * math.pi * math.sqrt(0.75)),
                               places=12)
        self.assertAlmostEqual(result.mean.item(), 1.694036, places=6)
        self.assertAlmostEqual(result.total.item(), 6 * result.mean.item(), places=10)

    def test_matches_density_formula(self):
        rng = np.random.default_rng(1)
        mu = rng.normal(size=(5, 4, 2))
        sigma = rng.uniform(0.2, 3.0, size=(5, 4, 2))
        rho = rng.uniform(-0.95, 0.95, size=(5, 4, 1))
        targets = rng.normal(scale=2.0, size=(5, 4, 2))
        per_point = point_nll(BiGaussianSeq(mu, sigma, rho), targets).data
        for t in range(5):
            for i in range(4):
                expected = _oracle_nll(targets[t, i, 0], targets[t, i, 1], mu[t, i, 0],
                                       mu[t, i, 1], sigma[t, i, 0], sigma[t, i, 1], rho[t, i, 0])
                self.assertAlmostEqual(per_point[t, i, 0], expected, delta=1e-10)

    def test_custom_count(self):
        dist = BiGaussianSeq.constant(2, 2)
        result = nll(dist, np.zeros((2, 2, 2)), count=8)
        self.assertAlmostEqual(result.mean.item(), 4 * LOG_2PI / 8, places=12)

    def test_gradient_vanishes_at_target(self):
        rng = np.random.default_rng(2)
        targets = rng.normal(size=(3, 2, 2))
        tape = GradientTape()
        mu = tape.watch("mu", targets)
        dist = BiGaussianSeq(mu, rng.uniform(0.5, 2.0, size=(3, 2, 2)),
                             rng.uniform(-0.5, 0.5, size=(3, 2, 1)))
        grads = backward(nll(dist, targets).total)
        np.testing.assert_array_equal(grads["mu"].data, 0.0)

    def test_invalid_parameters(self):
        with self.assertRaises(DomainError):
            nll(BiGaussianSeq.constant(1, 1, sigma=(0.0, 1.0)), np.zeros((1, 1, 2)))
        with self.assertRaises(DomainError):
            nll(BiGaussianSeq.constant(1, 1, rho=1.0), np.zeros((1, 1, 2)))
        with self.assertRaises(ShapeError):
            nll(BiGaussianSeq.constant(1, 1), np.zeros((2, 1, 2)))


class SamplingTest(unittest.TestCase):

    def test_vanishing_covariance(self):
        dist = BiGaussianSeq.constant(12, 3, mu=(0.3, -0.7), sigma=(1e-9, 1e-9), rho=0.4)
        sample = sample_displacements(dist, np.random.default_rng(0))
        np.testing.assert_allclose(sample, dist.mu.data, rtol=0, atol=1e-7)

    def test_seeded(self):
        dist = BiGaussianSeq.constant(12, 3, rho=-0.3)
        first = sample_many(dist, np.random.default_rng(5), 4)
        second = sample_many(dist, np.random.default_rng(5), 4)
        self.assertEqual(first.tobytes(), second.tobytes())
        prefix = sample_many(dist, np.random.default_rng(5), 2)
        np.testing.assert_array_equal(prefix, first[:2])
        self.assertEqual(first.shape, (4, 12, 3, 2))

    def test_statistics(self):
        mu, sigma, rho = (1.5, -0.5), (2.0, 0.5), 0.6
        # 100000 independent draws in one call
        dist = BiGaussianSeq.constant(1000, 100, mu=mu, sigma=sigma, rho=rho)
        sample = sample_displacements(dist, np.random.default_rng(42)).reshape(-1, 2)
        n = len(sample)
        for dim in range(2):
            error = abs(sample[:, dim].mean() - mu[dim])
            self.assertLess(error, 4 * sigma[dim] / math.sqrt(n))
        self.assertLess(abs(np.corrcoef(sample.T)[0, 1] - rho), 0.02)
        np.testing.assert_allclose(sample.std(axis=0), sigma, rtol=0.02)


class DisplacementsToAbsoluteTest(unittest.TestCase):

    def test_cumsum(self):
        out = displacements_to_absolute(np.tile([1.0, 0.0], (3, 1, 1)), [[0.0, 0.0]])
        np.testing.assert_array_equal(out[:, 0], [[1, 0], [2, 0], [3, 0]])

    def test_zero(self):
        out = displacements_to_absolute(np.zeros((4, 2, 2)), [[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(out, np.broadcast_to([[1.0, 2.0], [3.0, 4.0]], (4, 2, 2)))

    def test_inverts_window_encoding(self):
        rng = np.random.default_rng(3)
        positions = rng.integers(-100, 100, size=(3, 20, 2)) / 16.0
        encoded = to_displacements(SceneWindow(positions, [1, 2, 3], 8, 12))
        rebuilt = displacements_to_absolute(np.swapaxes(encoded.future, 0, 1), encoded.origin)
        np.testing.assert_array_equal(rebuilt, np.swapaxes(positions[:, 8:], 0, 1))

    def test_sample_batches(self):
        out = displacements_to_absolute(np.ones((5, 3, 2, 2)), np.zeros((2, 2)))
        self.assertEqual(out.shape, (5, 3, 2, 2))
        np.testing.assert_array_equal(out[:, -1], 3.0)


class DistributionFrameTest(unittest.TestCase):

    def test_rows(self):
        dist = BiGaussianSeq.constant(3, 2, mu=(1.0, 0.0), sigma=(0.5, 0.25), rho=0.1)
        frame = distribution_frame(dist, [7, 9], [[0.0, 0.0], [10.0, 10.0]], window_id=4)
        self.assertEqual(list(frame.columns), DISTRIBUTION_COLUMNS + ["x", "y"])
        self.assertEqual(len(frame), 6)
        self.assertEqual(frame["track_id"].tolist(), [7, 7, 7, 9, 9, 9])
        self.assertEqual(frame["step"].tolist(), [1, 2, 3, 1, 2, 3])
        self.assertTrue((frame["window_id"] == 4).all())
        last = frame.iloc[-1]
        self.assertEqual((last["x"], last["y"]), (13.0, 10.0))


if __name__ == "__main__":
    unittest.main()
