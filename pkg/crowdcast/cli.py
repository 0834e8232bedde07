"""
Command-line interface to crowdcast: synthetic data generation, training,
evaluation, prediction and the preprocessing benchmark.

Exit codes: 0 on success, 1 on user errors (bad flags, unreadable or
invalid inputs), 2 on internal errors.
"""

import argparse
import json
import logging
import os
import sys
import traceback

import pandas as pd

import crowdcast
from crowdcast.core.config import ModelConfig, TrainConfig, load_config, override, resolve_seed
from crowdcast.core.exceptions import ConfigError, InputError, USER_ERRORS
from crowdcast.core.params import ModelParams
from crowdcast.dataio.trajectories import load_ego_poses, to_global, downsample
from crowdcast.dataio.windows import make_windows, to_displacements
from crowdcast.evaluation.metrics import evaluate_predictor, report_frame, format_table
from crowdcast.evaluation.timing import bench_table, expand_modes, MODES
from crowdcast.models.gauss import decode_params, distribution_frame
from crowdcast.models.predictors import get_predictor, predictor_for, PREDICTORS
from crowdcast.models.seqnet import init_params, model_forward
from crowdcast.synth.scenes import SCENE_TEMPLATES, generate_scenes, load_scene_dir, \
    generate_scene
from crowdcast.training.trainer import train, scene_windows

LOG = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USER_ERROR = 1
EXIT_INTERNAL_ERROR = 2


class UsageError(Exception):
    """Command line could not be parsed."""
    pass


class _Parser(argparse.ArgumentParser):

    def error(self, message):
        raise UsageError("{}: {}".format(self.prog, message))


def _print_config(resolved, stream=None):
    print(json.dumps(resolved, sort_keys=True, indent=2, default=str), file=stream or sys.stdout)


def _args_dict(args):
    return {k: v for k, v in vars(args).items() if k != "func"}


def _load_datasets(args):
    """Datasets from --data/--input with optional ego poses and decimation."""
    path = getattr(args, "data", None) or getattr(args, "input", None)
    datasets = load_scene_dir(path)
    if getattr(args, "ego_poses", None):
        if len(datasets) != 1:
            raise ConfigError("--ego-poses applies to a single trajectory file")
        datasets = [to_global(datasets[0], load_ego_poses(args.ego_poses))]
    if getattr(args, "downsample", 1) and args.downsample > 1:
        datasets = [downsample(d, args.downsample) for d in datasets]
    return datasets


def _model_and_train_configs(args):
    model_config, train_config = load_config(args.config) if args.config else \
        (ModelConfig(), TrainConfig())
    model_config = override(model_config, T_obs=args.t_obs, T_pred=args.t_pred,
                            social=False if args.no_social else None)
    train_config = override(train_config, lr=args.lr, batch_size=args.batch_size,
                            epochs=args.epochs, seed=args.seed, lr_decay=args.lr_decay,
                            validation_fraction=args.validation_fraction,
                            checkpoint_interval=args.checkpoint_interval)
    return model_config, train_config


def run_gen(args):
    """Writes synthetic scenes and their manifest."""
    _print_config(_args_dict(args))
    manifest = generate_scenes(args.template, args.n, args.scenes, args.seed, args.out,
                               n_frames=args.frames)
    print("wrote {} scenes to {}".format(len(manifest), args.out))


def run_train(args):
    """
    Trains a model and writes checkpoints plus the training log. For a
    fixed seed every train_log.csv column except wall_seconds repeats
    exactly.
    """
    model_config, train_config = _model_and_train_configs(args)
    _print_config({"args": _args_dict(args), "model": model_config.as_dict(),
                   "train": train_config.as_dict()})
    windows = scene_windows(_load_datasets(args), model_config.T_obs, model_config.T_pred,
                            args.stride)
    if not windows:
        raise InputError("no {}+{} step window in {}".format(model_config.T_obs,
                                                              model_config.T_pred, args.data))
    os.makedirs(args.out, exist_ok=True)
    log_path = os.path.join(args.out, "train_log.csv")
    result = train(windows, model_config, train_config, out_dir=args.out, log_path=log_path)
    result.params.save(os.path.join(args.out, "final.ckpt"))
    print(result.log.to_string(index=False))
    print("best epoch {}; checkpoints and log in {}".format(result.best_epoch, args.out))


def run_eval(args):
    """Best-of-N evaluation of a checkpoint and the baselines."""
    params = ModelParams.load(args.checkpoint) if args.checkpoint else None
    config = params.config if params is not None else ModelConfig(T_obs=args.t_obs or 8,
                                                                  T_pred=args.t_pred or 12)
    _print_config({"args": _args_dict(args), "model": config.as_dict()})
    windows = scene_windows(_load_datasets(args), config.T_obs, config.T_pred, args.stride)
    if not windows:
        raise InputError("no {}+{} step window in {}".format(config.T_obs, config.T_pred, args.data))
    predictors = []
    for name in args.models:
        if name == "model":
            if params is None:
                raise ConfigError("evaluating the model needs --checkpoint")
            predictors.append(predictor_for(params))
        else:
            predictors.append(get_predictor(name, params))
    reports = [evaluate_predictor(p, windows, args.n_samples, args.seed, args.workers,
                                  args.select_per_metric) for p in predictors]
    frame = report_frame(reports)
    if args.out:
        frame.to_csv(args.out, index=False, float_format="%.6f")
    print(format_table(frame))


def run_predict(args):
    """Writes the per-step predicted distributions of every pedestrian."""
    params = ModelParams.load(args.checkpoint)
    config = params.config
    # the table goes to standard output when there is no --output
    _print_config({"args": _args_dict(args), "model": config.as_dict()},
                  stream=None if args.output else sys.stderr)
    if args.horizon is not None and args.horizon != config.T_pred:
        raise ConfigError("--horizon {} differs from the checkpoint's prediction horizon {}".format(
            args.horizon, config.T_pred))
    dataset = _load_datasets(args)[0]
    windows = make_windows(dataset, config.T_obs, config.T_pred, args.stride or 1,
                           observation_only=True)
    if not windows:
        raise InputError("no pedestrian observed for {} consecutive frames in {}".format(
            config.T_obs, args.input))
    if args.stride is None:
        windows = windows[-1:]
    frames = []
    for window_id, window in enumerate(windows):
        dist = decode_params(model_forward(to_displacements(window), params), config.sigma_floor)
        frames.append(distribution_frame(dist, window.track_ids, window.observed[:, -1],
                                         window_id))
    table = pd.concat(frames, ignore_index=True)
    if args.output:
        table.to_csv(args.output, index=False, float_format="%.9g")
        print("wrote {} rows to {}".format(len(table), args.output))
    else:
        print(table.to_csv(index=False, float_format="%.9g"), end="")


def run_bench(args):
    """Times preprocessing paths on synthetic crowd windows."""
    _print_config(_args_dict(args))
    modes = expand_modes(args.mode)
    config = ModelConfig()
    length = config.T_obs + config.T_pred
    windows = []
    for index in range(args.scenes):
        dataset = generate_scene("dense-crowd", args.n_peds, args.seed + index, n_frames=length)
        windows.extend(make_windows(dataset, config.T_obs, config.T_pred, stride=length))
    params = None if args.no_inference else init_params(config, args.seed)
    table = bench_table(windows, modes, args.repeats, args.warmup, params, pin=not args.no_pin)
    if args.out:
        table.to_csv(args.out, index=False, float_format="%.6f")
    print(table.drop(columns=["note"]).to_string(index=False))
    print("note: {}".format(table["note"].iloc[0]))


def build_parser():
    parser = _Parser(prog="crowdcast", description="""
    crowdcast predicts pedestrian trajectories with learned social interaction
    weights, temporal convolutions and a bivariate Gaussian output.""",
                     epilog="Version: {}".format(crowdcast.__version__))
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for info, -vv for debug logging")
    subparsers = parser.add_subparsers(dest="command", parser_class=_Parser)
    subparsers.required = True

    def _seed(sub):
        sub.add_argument("--seed", type=int, default=None,
                         help="random seed, falls back to $CROWDCAST_SEED, then 0")

    def _ingest(sub):
        sub.add_argument("--ego-poses", help="ego pose file converting the input to global "
                                             "coordinates")
        sub.add_argument("--downsample", type=int, default=1,
                         help="keep every k-th frame (e.g. 4 for 10 Hz sources)")

    # gen
    parser_gen = subparsers.add_parser("gen", help="generate synthetic scenes")
    parser_gen.add_argument("--template", nargs="+", default=["crossing"],
                            choices=sorted(SCENE_TEMPLATES), help="scene templates, cycled")
    parser_gen.add_argument("--n", type=int, default=3, help="agents per scene")
    parser_gen.add_argument("--scenes", type=int, default=10, help="number of scenes")
    parser_gen.add_argument("--frames", type=int, default=40, help="frames per scene")
    parser_gen.add_argument("--out", required=True, help="output directory")
    _seed(parser_gen)
    parser_gen.set_defaults(func=run_gen)

    # train
    parser_train = subparsers.add_parser("train", help="train a model")
    parser_train.add_argument("--data", required=True, help="scene directory or trajectory file")
    parser_train.add_argument("--config", help="YAML configuration with model/train sections")
    parser_train.add_argument("--out", default="checkpoints", help="checkpoint directory")
    parser_train.add_argument("--epochs", type=int)
    parser_train.add_argument("--lr", type=float)
    parser_train.add_argument("--lr-decay", type=float, help="per-epoch learning-rate factor")
    parser_train.add_argument("--batch-size", type=int)
    parser_train.add_argument("--validation-fraction", type=float)
    parser_train.add_argument("--checkpoint-interval", type=int)
    parser_train.add_argument("--t-obs", type=int)
    parser_train.add_argument("--t-pred", type=int)
    parser_train.add_argument("--stride", type=int, default=1, help="window stride")
    parser_train.add_argument("--no-social", action="store_true",
                              help="train the plain sequence baseline")
    _ingest(parser_train)
    _seed(parser_train)
    parser_train.set_defaults(func=run_train)

    # eval
    parser_eval = subparsers.add_parser("eval", help="best-of-N evaluation")
    parser_eval.add_argument("--checkpoint", help="model checkpoint")
    parser_eval.add_argument("--data", required=True, help="scene directory or trajectory file")
    parser_eval.add_argument("--n-samples", type=int, default=20, help="N of best-of-N")
    parser_eval.add_argument("--models", nargs="+", default=["model", "lr", "cv"],
                             choices=["model"] + sorted(PREDICTORS),
                             help="predictors to evaluate")
    parser_eval.add_argument("--select-per-metric", action="store_true",
                             help="report the smallest FDE over samples")
    parser_eval.add_argument("--workers", type=int, default=None, help="process pool size")
    parser_eval.add_argument("--stride", type=int, default=1, help="window stride")
    parser_eval.add_argument("--t-obs", type=int, help="observed steps without a checkpoint")
    parser_eval.add_argument("--t-pred", type=int, help="predicted steps without a checkpoint")
    parser_eval.add_argument("--out", help="report CSV")
    _ingest(parser_eval)
    _seed(parser_eval)
    parser_eval.set_defaults(func=run_eval)

    # predict
    parser_predict = subparsers.add_parser("predict", help="predict distributions")
    parser_predict.add_argument("--checkpoint", required=True, help="model checkpoint")
    parser_predict.add_argument("--input", required=True, help="trajectory file")
    parser_predict.add_argument("--horizon", type=int, help="expected prediction steps")
    parser_predict.add_argument("--stride", type=int, default=None,
                                help="predict every window at this stride instead of the last")
    parser_predict.add_argument("--output", help="CSV file, standard output if absent")
    _ingest(parser_predict)
    _seed(parser_predict)
    parser_predict.set_defaults(func=run_predict)

    # bench
    parser_bench = subparsers.add_parser("bench", help="preprocessing benchmark")
    parser_bench.add_argument("--mode", default="both", choices=list(MODES) + ["both", "all"])
    parser_bench.add_argument("--n-peds", type=int, default=50)
    parser_bench.add_argument("--repeats", type=int, default=20)
    parser_bench.add_argument("--warmup", type=int, default=2)
    parser_bench.add_argument("--scenes", type=int, default=5, help="windows timed per pass")
    parser_bench.add_argument("--no-inference", action="store_true",
                              help="skip the inference column")
    parser_bench.add_argument("--no-pin", action="store_true", help="do not pin to one CPU")
    parser_bench.add_argument("--out", help="CSV file")
    _seed(parser_bench)
    parser_bench.set_defaults(func=run_bench)
    return parser


def run(argv=None):
    """
    Parses ``argv`` and dispatches to the subcommand.

    Args:
        argv ([str]): arguments without the program name

    Returns:
        int: exit code
    """
    try:
        args = build_parser().parse_args(argv)
    except UsageError as ex:
        print("error: {}".format(ex), file=sys.stderr)
        return EXIT_USER_ERROR
    except SystemExit as ex:
        # --help
        return ex.code if isinstance(ex.code, int) else EXIT_OK
    crowdcast.set_verbosity(args.verbose)
    try:
        args.seed = resolve_seed(args.seed)
        args.func(args)
    except USER_ERRORS as ex:
        print("error: {}".format(ex), file=sys.stderr)
        return EXIT_USER_ERROR
    except Exception as ex:
        print("internal error: {}: {}".format(type(ex).__name__, ex), file=sys.stderr)
        LOG.debug("%s", traceback.format_exc())
        return EXIT_INTERNAL_ERROR
    return EXIT_OK


def main():
    """Main body for CLI"""
    sys.exit(run())


if __name__ == "__main__":
    main()
