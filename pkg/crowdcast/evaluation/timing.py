"""
Per-sequence preprocessing and inference timing of the direct offset
path against graph construction.

Reported figures are wall-clock medians of repeated passes over the same
windows after warm-up passes. Absolute milliseconds depend on the
machine; only the direction of the comparison is meaningful.
"""

import logging
import os
from collections import namedtuple

import numpy as np
import pandas as pd
from chronic import Timer, timings, clear

from crowdcast.core.exceptions import ConfigError, InputError
from crowdcast.core.ndnum import Tensor
from crowdcast.dataio.windows import to_displacements
from crowdcast.models.baselines import build_graph
from crowdcast.models.seqnet import model_forward
from crowdcast.models.social import pairwise_offsets

logger = logging.getLogger(__name__)

MODES = ("graph", "graph-offsets", "direct")
MIN_REPEATS = 5

# per-sequence milliseconds and speed-ups reported for the original GPU runs
REFERENCE = {
    "graph": {"preprocess_ms": 12.61, "inference_ms": 3.20, "total_ms": 15.81,
              "preprocess_speedup": 1.0, "total_speedup": 1.0},
    "graph-offsets": {"preprocess_ms": 2.90, "inference_ms": 2.93, "total_ms": 5.83,
                      "preprocess_speedup": 4.3, "total_speedup": 2.7},
    "direct": {"preprocess_ms": 0.23, "inference_ms": 3.15, "total_ms": 3.38,
               "preprocess_speedup": 54.8, "total_speedup": 4.7},
}
NOTE = ("reference figures come from a different machine and dataset and are not expected "
        "to reproduce; compare the measured speed-up direction only")

TimingStats = namedtuple("TimingStats", ["median_ms", "p10_ms", "p90_ms"])


def _direct(window):
    return pairwise_offsets(Tensor(np.swapaxes(window.positions, 0, 1)))


WORKLOADS = {
    "graph": build_graph,
    "graph-offsets": lambda window: build_graph(window, kernel="offsets"),
    "direct": _direct,
}


def pin_single_cpu():
    """
    Restricts the process to its first allowed CPU where the platform
    supports it.

    Returns:
        set: previous CPU set, None when pinning is unavailable
    """
    if not hasattr(os, "sched_setaffinity"):
        logger.warning("CPU pinning unavailable on this platform")
        return None
    previous = os.sched_getaffinity(0)
    os.sched_setaffinity(0, {min(previous)})
    return previous


def restore_cpus(previous):
    if previous is not None:
        os.sched_setaffinity(0, previous)


def time_per_sequence(func, windows, repeats, warmup=2, label="_bench"):
    """
    Times ``func`` over every window, ``repeats`` times after ``warmup``
    discarded passes.

    Args:
        func (callable): work applied to one window
        windows ([SceneWindow]): inputs
        repeats (int): timed passes, at least 5
        warmup (int): discarded passes
        label (str): chronic timer name

    Returns:
        TimingStats: median, 10th and 90th percentile per-sequence ms
    """
    if not windows:
        raise InputError("cannot time an empty window list")
    if repeats < MIN_REPEATS:
        raise ConfigError("at least {} repeats are required, got {}".format(MIN_REPEATS, repeats))
    for _ in range(warmup):
        for window in windows:
            func(window)
    clear()
    per_sequence = []
    elapsed = 0.0
    for _ in range(repeats):
        with Timer(label):
            for window in windows:
                func(window)
        total = timings[label]["total_elapsed"]
        per_sequence.append(1000.0 * (total - elapsed) / len(windows))
        elapsed = total
    p10, median, p90 = np.percentile(per_sequence, [10, 50, 90])
    return TimingStats(float(median), float(p10), float(p90))


def bench_preprocess(windows, mode, repeats=20, warmup=2):
    """
    Per-sequence preprocessing time of one path.

    Args:
        windows ([SceneWindow]): identical inputs for every mode
        mode (str): "graph" (graph construction with the inverse-distance
            kernel), "graph-offsets" (graph construction without the
            kernel) or "direct" (pairwise offsets only)
        repeats (int): timed passes, at least 5
        warmup (int): discarded passes

    Returns:
        TimingStats: median, 10th and 90th percentile per-sequence ms
    """
    if mode not in WORKLOADS:
        raise ConfigError("unknown benchmark mode '{}', expected one of: {}".format(
            mode, ", ".join(MODES)))
    stats = time_per_sequence(WORKLOADS[mode], windows, repeats, warmup, label="_" + mode)
    logger.info("%s preprocessing: median %.4f ms per sequence", mode, stats.median_ms)
    return stats


def bench_inference(windows, params, repeats=20, warmup=2):
    """
    Per-sequence time of the network forward pass.
    """
    encoded = [to_displacements(window) for window in windows]
    indexed = {id(w): e for w, e in zip(windows, encoded)}
    return time_per_sequence(lambda window: model_forward(indexed[id(window)], params),
                             windows, repeats, warmup, label="_inference")


def bench_table(windows, modes, repeats=20, warmup=2, params=None, pin=True):
    """
    Preprocessing, inference and total per-sequence medians of several
    modes next to the reference figures.

    Args:
        windows ([SceneWindow]): inputs
        modes ([str]): modes to time
        repeats (int): timed passes
        warmup (int): discarded passes
        params (ModelParams): network timed for the inference column;
            skipped when None
        pin (bool): pin the process to one CPU while timing

    Returns:
        pd.DataFrame: one row per mode
    """
    previous = pin_single_cpu() if pin else None
    try:
        preprocess = {mode: bench_preprocess(windows, mode, repeats, warmup) for mode in modes}
        inference = bench_inference(windows, params, repeats, warmup) if params is not None \
            else None
    finally:
        restore_cpus(previous)
    graph_median = preprocess["graph"].median_ms if "graph" in preprocess else None
    rows = []
    for mode in modes:
        stats = preprocess[mode]
        inference_ms = inference.median_ms if inference is not None else float("nan")
        rows.append({
            "mode": mode,
            "n_windows": len(windows),
            "repeats": repeats,
            "preprocess_median_ms": stats.median_ms,
            "preprocess_p10_ms": stats.p10_ms,
            "preprocess_p90_ms": stats.p90_ms,
            "inference_median_ms": inference_ms,
            "total_median_ms": stats.median_ms + inference_ms,
            "measured_speedup": graph_median / stats.median_ms if graph_median else float("nan"),
            "reference_preprocess_ms": REFERENCE[mode]["preprocess_ms"],
            "reference_speedup": REFERENCE[mode]["preprocess_speedup"],
            "note": NOTE,
        })
    return pd.DataFrame(rows)


def expand_modes(mode):
    """
    Modes of a command-line choice: ``both`` is graph and direct, ``all``
    adds graph-offsets.
    """
    if mode == "both":
        return ["graph", "direct"]
    if mode == "all":
        return list(MODES)
    if mode in MODES:
        return [mode]
    raise ConfigError("unknown benchmark mode '{}'".format(mode))
