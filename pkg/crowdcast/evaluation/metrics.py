"""
Displacement error metrics and the best-of-N evaluation protocol.
"""

import concurrent.futures
import logging
from collections import OrderedDict, namedtuple
from functools import partial

import numpy as np
import pandas as pd
from monty.json import MSONable

from crowdcast.core.exceptions import ConfigError, InputError, ShapeError
from crowdcast.dataio.windows import GROUPS

logger = logging.getLogger(__name__)

BestOfN = namedtuple("BestOfN", ["ade", "fde", "index"])
WindowScore = namedtuple("WindowScore", ["ade", "fde", "n_peds", "group", "index"])


def _distances(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 3 or pred.shape[-1] != 2:
        raise ShapeError("predictions {} and ground truth {} must share a [T_pred, n, 2] "
                         "shape".format(pred.shape, gt.shape))
    if pred.shape[0] == 0 or pred.shape[1] == 0:
        raise ShapeError("cannot score an empty prediction of shape {}".format(pred.shape))
    return np.hypot(pred[..., 0] - gt[..., 0], pred[..., 1] - gt[..., 1])


def ade(pred, gt):
    """
    Average displacement error: mean Euclidean distance over every
    pedestrian and predicted step.

    Args:
        pred (array-like): predicted positions [T_pred, n, 2]
        gt (array-like): true positions [T_pred, n, 2]

    Returns:
        float: meters
    """
    return float(np.mean(_distances(pred, gt)))


def fde(pred, gt):
    """
    Final displacement error: mean Euclidean distance at the last step.

    Args:
        pred (array-like): predicted positions [T_pred, n, 2]
        gt (array-like): true positions [T_pred, n, 2]

    Returns:
        float: meters
    """
    return float(np.mean(_distances(pred, gt)[-1]))


def best_of_n(predictor, window, n_samples, rng, select_per_metric=False):
    """
    Draws candidate trajectories and keeps the one closest to the ground
    truth by ADE (lowest index on ties), reporting its FDE.

    Args:
        predictor (Predictor): model or baseline
        window (SceneWindow): window with known future
        n_samples (int): candidates for stochastic predictors, N >= 1
        rng (np.random.Generator): generator of this window
        select_per_metric (bool): report the smallest FDE over all
            candidates instead of the FDE of the ADE-best one

    Returns:
        BestOfN: (min ADE, FDE, index of the ADE-best candidate)
    """
    if n_samples < 1:
        raise ConfigError("best-of-N needs N >= 1, got {}".format(n_samples))
    if window.future is None:
        raise InputError("window {} has no ground truth future".format(window))
    gt = np.swapaxes(window.future, 0, 1)
    candidates = predictor.candidates(window, n_samples, rng)
    ades = [ade(c, gt) for c in candidates]
    fdes = [fde(c, gt) for c in candidates]
    best = int(np.argmin(ades))
    return BestOfN(ades[best], min(fdes) if select_per_metric else fdes[best], best)


def window_rng(seed, index):
    """Generator of one window, independent of evaluation order."""
    return np.random.default_rng([seed, index])


def _score_window(indexed_window, predictor, n_samples, seed, select_per_metric):
    index, window = indexed_window
    result = best_of_n(predictor, window, n_samples, window_rng(seed, index), select_per_metric)
    return WindowScore(result.ade, result.fde, window.n_peds, window.density_group, index)


class EvalReport(MSONable):
    """
    Aggregated best-of-N scores. Whole-set and per-group errors are
    pedestrian-weighted means of per-window errors, so the group rows
    reconcile with the total.

    Attributes:
        predictor (str): predictor name
        ade (float): meters
        fde (float): meters
        n_windows (int): windows scored
        n_pedestrians (int): pedestrian rows scored
        samples_per_window (int): N of the protocol
        groups (dict): density group -> dict of ade, fde, n_windows,
            n_pedestrians
    """

    def __init__(self, predictor, ade, fde, n_windows, n_pedestrians, samples_per_window,
                 groups=None):
        self.predictor = predictor
        self.ade = float(ade)
        self.fde = float(fde)
        self.n_windows = int(n_windows)
        self.n_pedestrians = int(n_pedestrians)
        self.samples_per_window = int(samples_per_window)
        self.groups = groups or {}

    @classmethod
    def from_scores(cls, predictor, scores, samples_per_window):
        if not scores:
            raise InputError("no window was scored")
        frame = pd.DataFrame(scores, columns=WindowScore._fields)

        def _summary(rows):
            weights = rows["n_peds"].to_numpy(dtype=float)
            return {"ade": float(np.average(rows["ade"], weights=weights)),
                    "fde": float(np.average(rows["fde"], weights=weights)),
                    "n_windows": int(len(rows)),
                    "n_pedestrians": int(weights.sum())}

        total = _summary(frame)
        groups = OrderedDict((group, _summary(frame[frame["group"] == group]))
                             for group in GROUPS if (frame["group"] == group).any())
        return cls(predictor, total["ade"], total["fde"], total["n_windows"],
                   total["n_pedestrians"], samples_per_window, groups)

    def rows(self):
        """
        Returns:
            pd.DataFrame: one row for the whole set and one per group
        """
        rows = [(self.predictor, "All", self.ade, self.fde, self.n_windows, self.n_pedestrians)]
        for group, summary in self.groups.items():
            rows.append((self.predictor, group, summary["ade"], summary["fde"],
                         summary["n_windows"], summary["n_pedestrians"]))
        return pd.DataFrame(rows, columns=["model", "group", "ade", "fde", "n_windows",
                                           "n_pedestrians"])

    def __repr__(self):
        return "EvalReport({}: ade={:.4f}, fde={:.4f}, windows={}, N={})".format(
            self.predictor, self.ade, self.fde, self.n_windows, self.samples_per_window)


def evaluate_predictor(predictor, windows, n_samples=20, seed=0, max_workers=None,
                       select_per_metric=False):
    """
    Best-of-N evaluation over windows. Deterministic predictors are
    scored with N = 1. Each window draws from its own generator seeded by
    (seed, window index), so serial and parallel runs agree.

    Args:
        predictor (Predictor): model or baseline
        windows ([SceneWindow]): windows with known future
        n_samples (int): N for stochastic predictors
        seed (int): evaluation seed
        max_workers (int): evaluate in a process pool with this many
            workers; serial when None or 1
        select_per_metric (bool): see :func:`best_of_n`

    Returns:
        EvalReport: aggregated scores
    """
    if not windows:
        raise InputError("cannot evaluate on an empty window list")
    n = 1 if predictor.deterministic else n_samples
    func = partial(_score_window, predictor=predictor, n_samples=n, seed=seed,
                   select_per_metric=select_per_metric)
    indexed = list(enumerate(windows))
    if max_workers is None or max_workers <= 1:
        scores = [func(item) for item in indexed]
    else:
        chunk_size = min(int(len(indexed) / max_workers) + 1, 200)
        with concurrent.futures.ProcessPoolExecutor(max_workers=max_workers) as executor:
            scores = list(executor.map(func, indexed, chunksize=chunk_size))
    report = EvalReport.from_scores(predictor.name, scores, n)
    logger.info("%s", report)
    return report


def report_frame(reports):
    """
    Long-form table of several reports (model x group rows).
    """
    return pd.concat([report.rows() for report in reports], ignore_index=True)


def format_table(frame):
    """
    Aligned text table with density groups as rows and one ADE/FDE column
    pair per model.
    """
    wide = frame.pivot(index="group", columns="model", values=["ade", "fde"])
    wide = wide.swaplevel(axis=1).sort_index(axis=1, level=0, sort_remaining=False)
    order = [g for g in ("All",) + GROUPS if g in wide.index]
    return wide.loc[order].to_string(float_format=lambda v: "{:.4f}".format(v))
