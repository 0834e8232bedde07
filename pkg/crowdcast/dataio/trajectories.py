"""
Trajectory and ego pose files.

Both formats are plain UTF-8 text with one record per line and
whitespace- or tab-separated fields; lines starting with ``#`` and blank
lines are skipped::

    # frame_id track_id x y
    0 1 0.0 0.0
    1 1 1.0 0.0

Ego pose files hold ``frame_id x y heading`` with the heading in radians.
"""

import logging
import math

import numpy as np
import pandas as pd

from crowdcast.core.exceptions import ParseError, DuplicateError, MissingPoseError, ConfigError

logger = logging.getLogger(__name__)

DEFAULT_FRAME_RATE = 2.5
COLUMNS = ["frame_id", "track_id", "x", "y"]
POSE_COLUMNS = ["frame_id", "x", "y", "heading"]


class TrajectoryDataset(object):
    """
    Per-frame pedestrian observations of one scene, sorted by
    (frame_id, track_id).

    Attributes:
        records (pd.DataFrame): columns frame_id, track_id (int64), x, y
            (float64, meters)
        frame_rate (float): sampling rate in Hz
        scene_id (str): identifier of the scene the records come from
    """

    def __init__(self, records=None, frame_rate=DEFAULT_FRAME_RATE, scene_id=None):
        if not frame_rate > 0:
            raise ConfigError("frame_rate must be positive, got {}".format(frame_rate))
        if records is None:
            records = pd.DataFrame(columns=COLUMNS)
        elif not isinstance(records, pd.DataFrame):
            records = pd.DataFrame(list(records), columns=COLUMNS)
        records = records[COLUMNS].astype({"frame_id": np.int64, "track_id": np.int64,
                                           "x": np.float64, "y": np.float64})
        duplicated = records.duplicated(subset=["frame_id", "track_id"])
        if duplicated.any():
            first = records[duplicated].iloc[0]
            raise DuplicateError("duplicate record for frame {} track {}".format(
                first["frame_id"], first["track_id"]))
        self.records = records.sort_values(["frame_id", "track_id"], kind="mergesort")\
            .reset_index(drop=True)
        self.frame_rate = float(frame_rate)
        self.scene_id = scene_id

    def __len__(self):
        return len(self.records)

    def __eq__(self, other):
        if not isinstance(other, TrajectoryDataset):
            return False
        return self.frame_rate == other.frame_rate and self.records.equals(other.records)

    def __repr__(self):
        return "TrajectoryDataset(scene={}, records={}, tracks={}, frames={})".format(
            self.scene_id, len(self), self.n_tracks, len(self.frame_ids))

    @property
    def track_ids(self):
        return sorted(int(t) for t in self.records["track_id"].unique())

    @property
    def n_tracks(self):
        return int(self.records["track_id"].nunique())

    @property
    def frame_ids(self):
        return sorted(int(f) for f in self.records["frame_id"].unique())

    def avg_peds_per_frame(self):
        """
        Average number of pedestrians per frame, 0 for an empty dataset.
        """
        n_frames = len(self.frame_ids)
        return len(self) / n_frames if n_frames else 0.0

    def position_grid(self):
        """
        Dense view of the records.

        Returns:
            (list, list, np.ndarray): track ids, frame ids and an array
            [n_tracks, n_frames, 2] holding NaN where a track is absent
        """
        tracks = self.track_ids
        frames = self.frame_ids
        grid = np.full((len(tracks), len(frames), 2), np.nan)
        if len(self):
            track_index = {t: i for i, t in enumerate(tracks)}
            frame_index = {f: i for i, f in enumerate(frames)}
            rows = self.records["track_id"].map(track_index).to_numpy()
            cols = self.records["frame_id"].map(frame_index).to_numpy()
            grid[rows, cols, 0] = self.records["x"].to_numpy()
            grid[rows, cols, 1] = self.records["y"].to_numpy()
        return tracks, frames, grid

    def with_records(self, records, frame_rate=None):
        return TrajectoryDataset(records, frame_rate or self.frame_rate, self.scene_id)


class EgoPoseTrack(object):
    """
    Ego vehicle pose per frame in the frame of the record start.

    Attributes:
        poses (pd.DataFrame): indexed by frame_id, columns x, y, heading;
            headings are wrapped into (-pi, pi]
    """

    def __init__(self, poses):
        if not isinstance(poses, pd.DataFrame):
            poses = pd.DataFrame(list(poses), columns=POSE_COLUMNS)
        poses = poses[POSE_COLUMNS].astype({"frame_id": np.int64, "x": np.float64,
                                            "y": np.float64, "heading": np.float64})
        if poses["frame_id"].duplicated().any():
            frame = poses.loc[poses["frame_id"].duplicated(), "frame_id"].iloc[0]
            raise DuplicateError("duplicate ego pose for frame {}".format(frame))
        poses = poses.assign(heading=poses["heading"].map(wrap_angle))
        self.poses = poses.set_index("frame_id").sort_index()

    def __len__(self):
        return len(self.poses)

    def __contains__(self, frame_id):
        return frame_id in self.poses.index

    @classmethod
    def identity(cls, frame_ids):
        return cls([(f, 0.0, 0.0, 0.0) for f in frame_ids])


def wrap_angle(angle):
    """
    Wraps an angle in radians into (-pi, pi].
    """
    wrapped = math.remainder(angle, 2 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped


def _read_rows(path, n_fields, kinds):
    rows = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            fields = stripped.split()
            if len(fields) != n_fields:
                raise ParseError("expected {} fields, got {}".format(n_fields, len(fields)),
                                 line=line_no)
            row = []
            for field, kind in zip(fields, kinds):
                try:
                    value = float(field)
                except ValueError:
                    raise ParseError("'{}' is not a number".format(field), line=line_no)
                if not math.isfinite(value):
                    raise ParseError("'{}' is not finite".format(field), line=line_no)
                if kind is int:
                    if value != int(value):
                        raise ParseError("'{}' is not an integer id".format(field), line=line_no)
                    value = int(value)
                row.append(value)
            rows.append(tuple(row))
    return rows


def load_trajectories(path, frame_rate=DEFAULT_FRAME_RATE, scene_id=None):
    """
    Parses a four-column trajectory file.

    Args:
        path (str): file path
        frame_rate (float): sampling rate of the file in Hz
        scene_id (str): scene identifier, defaults to the path

    Returns:
        TrajectoryDataset: parsed records

    Raises:
        ParseError: malformed row, with its line number
        DuplicateError: repeated (frame_id, track_id) pair
    """
    rows = _read_rows(path, 4, (int, int, float, float))
    dataset = TrajectoryDataset(rows, frame_rate, scene_id if scene_id is not None else str(path))
    logger.info("loaded %d records, %d tracks from %s", len(dataset), dataset.n_tracks, path)
    return dataset


def write_trajectories(dataset, path):
    """
    Writes a dataset in the four-column format. Coordinates use the
    shortest representation that parses back to the same float.
    """
    with open(path, "w", encoding="utf-8") as f:
        for frame_id, track_id, x, y in dataset.records.itertuples(index=False):
            f.write("{} {} {} {}\n".format(int(frame_id), int(track_id), repr(float(x)), repr(float(y))))


def load_ego_poses(path):
    """
    Parses an ego pose file (``frame_id x y heading``).

    Returns:
        EgoPoseTrack: poses
    """
    rows = _read_rows(path, 4, (int, float, float, float))
    logger.info("loaded %d ego poses from %s", len(rows), path)
    return EgoPoseTrack(rows)


def to_global(dataset, ego):
    """
    Converts ego-relative positions to the global frame anchored at the
    ego position of the first time-step: every position is rotated by the
    ego heading of its frame, then translated by the ego position.

    Args:
        dataset (TrajectoryDataset): ego-relative records
        ego (EgoPoseTrack): pose per frame

    Returns:
        TrajectoryDataset: global records

    Raises:
        MissingPoseError: a frame of the dataset has no pose
    """
    for frame_id in dataset.frame_ids:
        if frame_id not in ego:
            raise MissingPoseError(frame_id)
    records = dataset.records
    poses = ego.poses.loc[records["frame_id"].to_numpy()]
    heading = poses["heading"].to_numpy()
    cos, sin = np.cos(heading), np.sin(heading)
    x, y = records["x"].to_numpy(), records["y"].to_numpy()
    global_records = records.assign(
        x=poses["x"].to_numpy() + (cos * x - sin * y),
        y=poses["y"].to_numpy() + (sin * x + cos * y))
    return dataset.with_records(global_records)


def downsample(dataset, k):
    """
    Keeps every k-th frame (counted over the sorted distinct frame ids,
    starting with the first) and divides the frame rate by k.

    Args:
        dataset (TrajectoryDataset): source records, e.g. at 10 Hz
        k (int): decimation factor

    Returns:
        TrajectoryDataset: decimated records
    """
    if k < 1:
        raise ConfigError("downsample factor must be at least 1, got {}".format(k))
    if k == 1:
        return dataset
    kept = set(dataset.frame_ids[::k])
    records = dataset.records[dataset.records["frame_id"].isin(kept)]
    return dataset.with_records(records, frame_rate=dataset.frame_rate / k)
