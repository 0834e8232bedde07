"""
Fixed-length scene windows, displacement encoding and density groups.
"""

import logging
import math

import numpy as np

from crowdcast.core.exceptions import ConfigError, DomainError, ShapeError

logger = logging.getLogger(__name__)

GROUP1 = "Group1"
GROUP2 = "Group2"
GROUP3 = "Group3"
UNGROUPED = "Ungrouped"
GROUPS = (GROUP1, GROUP2, GROUP3, UNGROUPED)


class SceneWindow(object):
    """
    Slice of T = T_obs + T_pred consecutive frames holding the pedestrians
    present at every one of them.

    Attributes:
        positions (np.ndarray): [n_peds, T, 2] meters; T = T_obs for
            observation-only windows
        mask (np.ndarray): [n_peds, T] presence flags, all true
        track_ids (list): track id per pedestrian row
        T_obs (int): observed steps
        T_pred (int): predicted steps
        scene_id (str): scene the window was cut from
        start_frame (int): first frame id of the window
        scene_density (float): average pedestrians per frame of the scene
        observation_only (bool): True when the future steps are unknown
    """

    def __init__(self, positions, track_ids, T_obs, T_pred, scene_id=None, start_frame=0,
                 scene_density=None, observation_only=False, mask=None):
        positions = np.array(positions, dtype=np.float64)
        if T_obs < 2 or T_pred < 1:
            raise ConfigError("windows need T_obs >= 2 and T_pred >= 1, got {} and {}".format(
                T_obs, T_pred))
        length = T_obs if observation_only else T_obs + T_pred
        if positions.ndim != 3 or positions.shape[1:] != (length, 2):
            raise ShapeError("window positions must have shape [n, {}, 2], got {}".format(
                length, positions.shape))
        if len(track_ids) != positions.shape[0]:
            raise ShapeError("{} track ids for {} pedestrians".format(
                len(track_ids), positions.shape[0]))
        positions.setflags(write=False)
        self.positions = positions
        self.mask = np.ones(positions.shape[:2], dtype=bool) if mask is None \
            else np.asarray(mask, dtype=bool)
        self.track_ids = [int(t) for t in track_ids]
        self.T_obs = int(T_obs)
        self.T_pred = int(T_pred)
        self.scene_id = scene_id
        self.start_frame = int(start_frame)
        self.scene_density = float(positions.shape[0]) if scene_density is None \
            else float(scene_density)
        self.observation_only = bool(observation_only)

    @property
    def n_peds(self):
        return self.positions.shape[0]

    @property
    def length(self):
        return self.positions.shape[1]

    @property
    def observed(self):
        """[n_peds, T_obs, 2] observed positions."""
        return self.positions[:, :self.T_obs]

    @property
    def future(self):
        """[n_peds, T_pred, 2] ground truth positions, None when unknown."""
        if self.observation_only:
            return None
        return self.positions[:, self.T_obs:]

    @property
    def density_group(self):
        return density_group(self.scene_density)

    def permuted(self, order):
        """
        Returns the same window with pedestrian rows reordered.
        """
        order = list(order)
        return SceneWindow(self.positions[order], [self.track_ids[i] for i in order], self.T_obs,
                           self.T_pred, self.scene_id, self.start_frame, self.scene_density,
                           self.observation_only, self.mask[order])

    def __repr__(self):
        return "SceneWindow(scene={}, start={}, n_peds={}, T={}+{})".format(
            self.scene_id, self.start_frame, self.n_peds, self.T_obs, self.T_pred)


class DisplacementWindow(object):
    """
    Per-step displacements of a window.

    Attributes:
        window (SceneWindow): source window
        displacements (np.ndarray): [n_peds, T, 2], first step zero
        initial (np.ndarray): [n_peds, 2] first absolute position
        origin (np.ndarray): [n_peds, 2] last observed absolute position
    """

    def __init__(self, window, displacements, initial, origin):
        self.window = window
        self.displacements = displacements
        self.initial = initial
        self.origin = origin

    @property
    def T_obs(self):
        return self.window.T_obs

    @property
    def T_pred(self):
        return self.window.T_pred

    @property
    def n_peds(self):
        return self.window.n_peds

    @property
    def observed(self):
        return self.displacements[:, :self.T_obs]

    @property
    def future(self):
        if self.window.observation_only:
            return None
        return self.displacements[:, self.T_obs:]

    def reconstruct(self):
        """
        Returns:
            np.ndarray: cumsum of displacements plus the initial position,
            [n_peds, T, 2]
        """
        return np.cumsum(self.displacements, axis=1) + self.initial[:, np.newaxis, :]


def consecutive_grid(tracks, frames, grid):
    """
    Expands a position grid to every frame from the first to the last one
    at the scene's frame step (the gcd of the gaps between frame ids).
    Frames nobody was recorded at become absent (NaN) columns.

    Returns:
        (list, list, np.ndarray): track ids, consecutive frame ids and
        the expanded [n_tracks, n_frames, 2] grid
    """
    if len(frames) < 2:
        return tracks, list(frames), grid
    ids = np.asarray(frames, dtype=np.int64)
    step = int(np.gcd.reduce(np.diff(ids)))
    full = list(range(int(ids[0]), int(ids[-1]) + 1, step))
    if len(full) == len(frames):
        return tracks, full, grid
    expanded = np.full((grid.shape[0], len(full), 2), np.nan)
    expanded[:, (ids - ids[0]) // step] = grid
    logger.debug("filled %d frames without records at step %d", len(full) - len(frames), step)
    return tracks, full, expanded


def make_windows(dataset, T_obs, T_pred, stride=1, observation_only=False):
    """
    Cuts a dataset into windows over consecutive frames at the scene's frame
    step; frames without any record count as absent for everyone. A window
    starts at every ``stride``-th frame offset and keeps the pedestrians
    present at all of its frames; offsets without any such pedestrian
    yield no window.

    Args:
        dataset (TrajectoryDataset): scene records
        T_obs (int): observed steps, at least 2
        T_pred (int): predicted steps, at least 1
        stride (int): offset between consecutive window starts
        observation_only (bool): cut windows of T_obs frames whose future
            is unknown (used for prediction)

    Returns:
        [SceneWindow]: windows in start order
    """
    if T_obs < 2 or T_pred < 1 or stride < 1:
        raise ConfigError("make_windows needs T_obs >= 2, T_pred >= 1, stride >= 1, "
                          "got {}, {}, {}".format(T_obs, T_pred, stride))
    tracks, frames, grid = consecutive_grid(*dataset.position_grid())
    length = T_obs if observation_only else T_obs + T_pred
    present = ~np.isnan(grid[:, :, 0])
    density = dataset.avg_peds_per_frame()
    windows = []
    for start in range(0, len(frames) - length + 1, stride):
        full = present[:, start:start + length].all(axis=1)
        if not full.any():
            continue
        rows = np.flatnonzero(full)
        windows.append(SceneWindow(grid[rows, start:start + length],
                                   [tracks[r] for r in rows], T_obs, T_pred,
                                   scene_id=dataset.scene_id, start_frame=frames[start],
                                   scene_density=density, observation_only=observation_only))
    if not windows:
        logger.warning("no %d-frame window with a fully present pedestrian in scene %s",
                       length, dataset.scene_id)
    else:
        logger.debug("cut %d windows from scene %s", len(windows), dataset.scene_id)
    return windows


def to_displacements(window):
    """
    Encodes a window as per-step displacements: step 0 is zero, step t is
    position[t] - position[t - 1]; the origin is the position at step
    T_obs - 1.

    Args:
        window (SceneWindow): source window

    Returns:
        DisplacementWindow: encoded window
    """
    positions = window.positions
    displacements = np.zeros(positions.shape)
    displacements[:, 1:] = positions[:, 1:] - positions[:, :-1]
    return DisplacementWindow(window, displacements, positions[:, 0].copy(),
                              positions[:, window.T_obs - 1].copy())


def density_group(avg_peds_per_frame):
    """
    Density group of a scene from its average pedestrians per frame:
    below 15 is Group1, strictly between 18 and 62 is Group2, above 71 is
    Group3; the ranges [15, 18] and [62, 71] are Ungrouped.

    Args:
        avg_peds_per_frame (float): average count, non-negative

    Returns:
        str: group label

    Raises:
        DomainError: negative or non-finite count
    """
    n = float(avg_peds_per_frame)
    if not math.isfinite(n) or n < 0:
        raise DomainError("average pedestrians per frame must be a non-negative number, "
                          "got {}".format(avg_peds_per_frame))
    if n < 15:
        return GROUP1
    if 18 < n < 62:
        return GROUP2
    if n > 71:
        return GROUP3
    return UNGROUPED
