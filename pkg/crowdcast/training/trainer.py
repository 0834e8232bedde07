"""
Training loop: seeded shuffling, mini-batch mean negative log likelihood,
plain SGD, per-epoch validation and checkpointing.
"""

import logging
import math
import os
from collections import namedtuple

import numpy as np
import pandas as pd
from chronic import Timer, timings, clear

from crowdcast.core.config import ModelConfig, TrainConfig
from crowdcast.core.exceptions import ConfigError, InputError, NumericsError
from crowdcast.core.ndnum import GradientTape, backward, sgd_step
from crowdcast.dataio.windows import make_windows, to_displacements
from crowdcast.evaluation.metrics import evaluate_predictor
from crowdcast.models.gauss import decode_params, nll
from crowdcast.models.predictors import get_predictor, predictor_for
from crowdcast.models.seqnet import init_params, model_forward
from crowdcast.synth.scenes import generate_scene

logger = logging.getLogger(__name__)

# wall_seconds is the only column that varies between runs with one seed
LOG_COLUMNS = ["epoch", "train_nll", "val_nll", "wall_seconds"]
BEST_CHECKPOINT = "best.ckpt"
LAST_GOOD_CHECKPOINT = "last_good.ckpt"

TrainResult = namedtuple("TrainResult", ["params", "best_params", "best_epoch", "log"])


def check_horizon(windows, config):
    """
    Raises:
        ConfigError: a window's T_obs or T_pred differs from the model's
    """
    for window in windows:
        if window.T_obs != config.T_obs or window.T_pred != config.T_pred:
            raise ConfigError("window {} has horizon {}+{}, model expects {}+{}".format(
                window, window.T_obs, window.T_pred, config.T_obs, config.T_pred))


def split_by_scene(windows, validation_fraction, seed):
    """
    Splits windows into training and validation sets by scene, so
    overlapping windows of one scene never end up on both sides.

    Args:
        windows ([SceneWindow]): all windows
        validation_fraction (float): share of scenes held out
        seed (int): seed of the scene permutation

    Returns:
        ([SceneWindow], [SceneWindow]): training and validation windows
    """
    scenes = sorted({str(w.scene_id) for w in windows})
    n_val = int(math.floor(validation_fraction * len(scenes)))
    if validation_fraction > 0 and n_val == 0 and len(scenes) > 1:
        n_val = 1
    if validation_fraction > 0 and n_val == 0:
        logger.warning("a single scene cannot be split; training without validation")
    order = np.random.default_rng(seed).permutation(len(scenes))
    held_out = {scenes[i] for i in order[:n_val]}
    train = [w for w in windows if str(w.scene_id) not in held_out]
    val = [w for w in windows if str(w.scene_id) in held_out]
    return train, val


def batch_loss(p, encoded, config):
    """
    Mean negative log likelihood over every (pedestrian, step) point of a
    batch.

    Args:
        p (dict): parameter name -> Tensor
        encoded ([DisplacementWindow]): batch
        config (ModelConfig): model configuration

    Returns:
        Tensor: scalar loss
    """
    total, count = None, 0
    for window in encoded:
        dist = decode_params(model_forward(window, p, config), config.sigma_floor)
        targets = np.swapaxes(window.future, 0, 1)
        window_total = nll(dist, targets).total
        total = window_total if total is None else total + window_total
        count += targets.shape[0] * targets.shape[1]
    return total * (1.0 / count)


def dataset_nll(params, encoded):
    """
    Mean negative log likelihood per point over a window set, NaN when
    the set is empty.
    """
    if not encoded:
        return float("nan")
    return batch_loss(params.constants(), encoded, params.config).item()


def _save(params, out_dir, name):
    if out_dir is None:
        return None
    path = os.path.join(out_dir, name)
    params.save(path)
    return path


def train(windows, model_config=None, train_config=None, out_dir=None, log_path=None,
          params=None):
    """
    Trains the model with SGD on the batch mean negative log likelihood.

    Args:
        windows ([SceneWindow]): training data, split into training and
            validation scenes according to ``train_config``
        model_config (ModelConfig): model configuration
        train_config (TrainConfig): optimization settings
        out_dir (str): checkpoint directory (best, interval and last good
            checkpoints); nothing is written when None
        log_path (str): training log CSV destination; the wall_seconds
            column is measured time, every other column repeats exactly
            for a fixed seed
        params (ModelParams): starting point, seeded initialization if None

    Returns:
        TrainResult: final parameters, best-validation parameters, best
        epoch and the log (epoch 0 is the untrained model)

    Raises:
        InputError: no training window
        ConfigError: window horizons differ from the model's
        NumericsError: the loss became non-finite; the parameters before
            the failing step are saved as the last good checkpoint
    """
    model_config = model_config or (params.config if params is not None else ModelConfig())
    train_config = train_config or TrainConfig()
    if not windows:
        raise InputError("cannot train on an empty window list")
    check_horizon(windows, model_config)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    train_windows, val_windows = split_by_scene(windows, train_config.validation_fraction,
                                                train_config.seed)
    if not train_windows:
        raise InputError("every window went to validation")
    train_encoded = [to_displacements(w) for w in train_windows]
    val_encoded = [to_displacements(w) for w in val_windows]
    logger.info("training on %d windows, validating on %d", len(train_encoded), len(val_encoded))

    params = params if params is not None else init_params(model_config, train_config.seed)
    lr = train_config.lr
    clear()
    wall = 0.0
    train_nll, val_nll = dataset_nll(params, train_encoded), dataset_nll(params, val_encoded)
    log = [(0, train_nll, val_nll, wall)]
    best_params, best_epoch = params, 0
    best_score = val_nll if val_encoded else train_nll
    _save(best_params, out_dir, BEST_CHECKPOINT)

    for epoch in range(1, train_config.epochs + 1):
        rng = np.random.default_rng([train_config.seed, epoch])
        order = rng.permutation(len(train_encoded))
        with Timer("_epoch"):
            for start in range(0, len(order), train_config.batch_size):
                batch = [train_encoded[i] for i in order[start:start + train_config.batch_size]]
                tape = GradientTape()
                try:
                    loss = batch_loss(params.watch(tape), batch, model_config)
                    if not math.isfinite(loss.item()):
                        raise NumericsError("loss is {}".format(loss.item()))
                    stepped = sgd_step(params, backward(loss), lr)
                    if not stepped.is_finite():
                        raise NumericsError("update produced non-finite parameters")
                except NumericsError as ex:
                    path = _save(params, out_dir, LAST_GOOD_CHECKPOINT)
                    raise NumericsError("non-finite loss in epoch {} ({}){}".format(
                        epoch, ex, "; last good parameters saved to {}".format(path) if path else ""))
                params = stepped
        wall = timings["_epoch"]["total_elapsed"]
        train_nll, val_nll = dataset_nll(params, train_encoded), dataset_nll(params, val_encoded)
        log.append((epoch, train_nll, val_nll, wall))
        logger.info("epoch %d: train nll %.6f, val nll %.6f", epoch, train_nll, val_nll)

        score = val_nll if val_encoded else train_nll
        if score < best_score:
            best_score, best_params, best_epoch = score, params, epoch
            _save(best_params, out_dir, BEST_CHECKPOINT)
        if train_config.checkpoint_interval and epoch % train_config.checkpoint_interval == 0:
            _save(params, out_dir, "epoch_{:04d}.ckpt".format(epoch))
        lr *= train_config.lr_decay

    log = pd.DataFrame(log, columns=LOG_COLUMNS)
    if log_path is not None:
        log.to_csv(log_path, index=False)
    return TrainResult(params, best_params, best_epoch, log)


def evaluate(params, windows, n_samples=20, seed=0, max_workers=None, select_per_metric=False):
    """
    Best-of-N evaluation of trained parameters.

    Args:
        params (ModelParams): parameters
        windows ([SceneWindow]): windows with known future
        n_samples (int): N
        seed (int): evaluation seed
        max_workers (int): process pool size, serial when None
        select_per_metric (bool): report the smallest FDE over samples

    Returns:
        EvalReport: aggregated scores

    Raises:
        ConfigError: window horizons differ from the model's
    """
    check_horizon(windows, params.config)
    return evaluate_predictor(predictor_for(params), windows, n_samples, seed, max_workers,
                              select_per_metric)


def scene_windows(datasets, T_obs, T_pred, stride=1):
    """Windows of several scenes, in scene order."""
    windows = []
    for dataset in datasets:
        windows.extend(make_windows(dataset, T_obs, T_pred, stride))
    return windows


def learning_signal(templates=("crossing", "merge"), n_train_scenes=10, n_test_scenes=4,
                    n_agents=3, seed=0, model_config=None, train_config=None, n_samples=20):
    """
    Trains on synthetic scenes and compares best-of-N ADE on held-out
    scenes of the same templates against the constant-velocity baseline.

    Returns:
        dict: model_ade, baseline_ade, improvement (relative ADE
        reduction), n_train_windows, n_test_windows
    """
    model_config = model_config or ModelConfig()
    train_config = train_config or TrainConfig(seed=seed)

    def _datasets(count, offset):
        return [generate_scene(templates[i % len(templates)], n_agents, seed + offset + i)
                for i in range(count)]

    train_windows = scene_windows(_datasets(n_train_scenes, 0), model_config.T_obs,
                                  model_config.T_pred)
    test_windows = scene_windows(_datasets(n_test_scenes, n_train_scenes), model_config.T_obs,
                                 model_config.T_pred)
    result = train(train_windows, model_config, train_config)
    model = evaluate(result.best_params, test_windows, n_samples, seed)
    baseline = evaluate_predictor(get_predictor("cv"), test_windows, 1, seed)
    improvement = 1.0 - model.ade / baseline.ade if baseline.ade > 0 else float("nan")
    logger.info("learning signal: model ade %.4f, constant velocity ade %.4f (%.1f%%)",
                model.ade, baseline.ade, 100 * improvement)
    return {"model_ade": model.ade, "baseline_ade": baseline.ade, "improvement": improvement,
            "n_train_windows": len(train_windows), "n_test_windows": len(test_windows)}
