import unittest

import numpy as np

from crowdcast.core.exceptions import ConfigError, DomainError, ShapeError
from crowdcast.dataio.trajectories import TrajectoryDataset
from crowdcast.dataio.windows import SceneWindow, make_windows, to_displacements, \
    consecutive_grid, density_group, GROUP1, GROUP2, GROUP3, UNGROUPED


def _track(track_id, frames, velocity=(0.5, 0.0)):
    return [(f, track_id, velocity[0] * f, velocity[1] * f) for f in frames]


class MakeWindowsTest(unittest.TestCase):

    def test_exact_fit(self):
        windows = make_windows(TrajectoryDataset(_track(1, range(20))), 8, 12)
        self.assertEqual(len(windows), 1)
        self.assertEqual(windows[0].n_peds, 1)
        self.assertEqual(windows[0].observed.shape, (1, 8, 2))
        self.assertEqual(windows[0].future.shape, (1, 12, 2))

    def test_one_extra_frame(self):
        windows = make_windows(TrajectoryDataset(_track(1, range(21))), 8, 12)
        self.assertEqual([w.start_frame for w in windows], [0, 1])

    def test_partial_presence(self):
        dataset = TrajectoryDataset(_track(1, range(0, 20)) + _track(2, range(5, 25)),
                                    scene_id="two")
        windows = make_windows(dataset, 8, 12)
        self.assertEqual([w.start_frame for w in windows], [0, 5])
        self.assertEqual(windows[0].track_ids, [1])
        self.assertEqual(windows[1].track_ids, [2])
        self.assertTrue(all(w.scene_id == "two" for w in windows))
        self.assertEqual(windows[0].scene_density, 40 / 25)

    def test_stride(self):
        windows = make_windows(TrajectoryDataset(_track(1, range(30))), 8, 12, stride=5)
        self.assertEqual([w.start_frame for w in windows], [0, 5, 10])

    def test_too_short(self):
        self.assertEqual(make_windows(TrajectoryDataset(_track(1, range(19))), 8, 12), [])

    def test_frames_without_records_break_windows(self):
        dataset = TrajectoryDataset(_track(1, range(0, 10)) + _track(1, range(20, 30)))
        self.assertEqual(make_windows(dataset, 8, 12), [])
        self.assertEqual([w.start_frame for w in make_windows(dataset, 4, 4)],
                         [0, 1, 2, 20, 21, 22])

    def test_frame_step(self):
        records = [(10 * f, 1, 0.5 * f, 0.0) for f in range(20)]
        windows = make_windows(TrajectoryDataset(records), 8, 12)
        self.assertEqual([w.start_frame for w in windows], [0])
        gapped = [r for r in records if r[0] != 100]
        self.assertEqual(make_windows(TrajectoryDataset(gapped), 8, 12), [])

    def test_consecutive_grid(self):
        grid = np.arange(6, dtype=float).reshape(1, 3, 2)
        tracks, frames, expanded = consecutive_grid([7], [0, 4, 12], grid)
        self.assertEqual(tracks, [7])
        self.assertEqual(frames, [0, 4, 8, 12])
        np.testing.assert_array_equal(expanded[0, [0, 1, 3]], grid[0])
        self.assertTrue(np.isnan(expanded[0, 2]).all())

    def test_observation_only(self):
        windows = make_windows(TrajectoryDataset(_track(1, range(8))), 8, 12,
                               observation_only=True)
        self.assertEqual(len(windows), 1)
        self.assertIsNone(windows[0].future)
        self.assertEqual(windows[0].length, 8)

    def test_invalid_arguments(self):
        dataset = TrajectoryDataset(_track(1, range(20)))
        for args in ((1, 12, 1), (8, 0, 1), (8, 12, 0)):
            with self.assertRaises(ConfigError):
                make_windows(dataset, *args)

    def test_window_shape_checked(self):
        with self.assertRaises(ShapeError):
            SceneWindow(np.zeros((2, 19, 2)), [1, 2], 8, 12)
        with self.assertRaises(ShapeError):
            SceneWindow(np.zeros((2, 20, 2)), [1], 8, 12)

    def test_permuted(self):
        dataset = TrajectoryDataset(_track(1, range(20)) + _track(2, range(20), (0.0, 1.0)))
        window = make_windows(dataset, 8, 12)[0]
        swapped = window.permuted([1, 0])
        self.assertEqual(swapped.track_ids, [2, 1])
        np.testing.assert_array_equal(swapped.positions[0], window.positions[1])


class DisplacementTest(unittest.TestCase):

    def test_constant_velocity(self):
        window = SceneWindow([[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]], [1], 2, 1)
        encoded = to_displacements(window)
        np.testing.assert_array_equal(encoded.displacements[0], [[0, 0], [1, 0], [1, 0]])
        np.testing.assert_array_equal(encoded.origin, [[1.0, 0.0]])
        np.testing.assert_array_equal(encoded.initial, [[0.0, 0.0]])
        np.testing.assert_array_equal(encoded.future, [[[1.0, 0.0]]])

    def test_stationary(self):
        window = SceneWindow(np.full((2, 20, 2), 3.25), [1, 2], 8, 12)
        np.testing.assert_array_equal(to_displacements(window).displacements, 0.0)

    def test_round_trip_is_exact(self):
        # dyadic grid values are summed and differenced without rounding
        rng = np.random.default_rng(4)
        positions = rng.integers(-800, 800, size=(5, 20, 2)) / 8.0
        window = SceneWindow(positions, list(range(5)), 8, 12)
        rebuilt = to_displacements(window).reconstruct()
        self.assertEqual(rebuilt.tobytes(), window.positions.tobytes())

    def test_round_trip_close_for_any_values(self):
        rng = np.random.default_rng(5)
        window = SceneWindow(rng.normal(scale=30.0, size=(4, 20, 2)), list(range(4)), 8, 12)
        np.testing.assert_allclose(to_displacements(window).reconstruct(), window.positions,
                                   rtol=0, atol=1e-12)


class DensityGroupTest(unittest.TestCase):

    def test_groups(self):
        self.assertEqual(density_group(10), GROUP1)
        self.assertEqual(density_group(40), GROUP2)
        self.assertEqual(density_group(65), UNGROUPED)
        self.assertEqual(density_group(90), GROUP3)

    def test_boundaries(self):
        self.assertEqual(density_group(0), GROUP1)
        self.assertEqual(density_group(14.99), GROUP1)
        for n in (15, 16.5, 18, 62, 71):
            self.assertEqual(density_group(n), UNGROUPED)
        self.assertEqual(density_group(18.01), GROUP2)
        self.assertEqual(density_group(71.01), GROUP3)

    def test_invalid(self):
        with self.assertRaises(DomainError):
            density_group(-1)
        with self.assertRaises(DomainError):
            density_group(float("nan"))

    def test_window_group(self):
        window = SceneWindow(np.zeros((1, 20, 2)), [1], 8, 12, scene_density=30.0)
        self.assertEqual(window.density_group, GROUP2)


if __name__ == "__main__":
    unittest.main()
