"""
Model and training configuration. Both configurations are MSONable, so
they round-trip through checkpoints and can be read from YAML or JSON
files with ``monty.serialization.loadfn``.
"""

import logging
import os

from monty.json import MSONable
from monty.serialization import loadfn

from crowdcast.core.exceptions import ConfigError

logger = logging.getLogger(__name__)

SEED_ENV_VAR = "CROWDCAST_SEED"


def _require(condition, message, *args):
    if not condition:
        raise ConfigError(message.format(*args))


class ModelConfig(MSONable):
    """
    Hyperparameters of the interaction-aware temporal convolution model.

    Attributes:
        d_e (int): width of the displacement embedding
        d_r (int): width of the pairwise offset embedding
        d_h (int): hidden width of the interaction MLP
        tcn_layers (int): number of residual temporal convolution blocks
        tcn_kernel (int): temporal kernel size (odd)
        extrapolator_kernel (int): kernel size of the time-as-channels
            convolution along the feature axis (odd)
        pool_window (int): channel max-pool window after the fuse MLP
        T_obs (int): observed steps
        T_pred (int): predicted steps
        prelu_init (float): initial PReLU slope
        tcn_residual (bool): whether temporal blocks add their input back
        social (bool): whether the interaction branch is active; False
            gives the plain sequence baseline
        sigma_floor (float): lower bound applied to decoded standard
            deviations
    """

    def __init__(self, d_e=32, d_r=16, d_h=32, tcn_layers=3, tcn_kernel=3,
                 extrapolator_kernel=3, pool_window=2, T_obs=8, T_pred=12,
                 prelu_init=0.25, tcn_residual=True, social=True, sigma_floor=1e-6):
        self.d_e = int(d_e)
        self.d_r = int(d_r)
        self.d_h = int(d_h)
        self.tcn_layers = int(tcn_layers)
        self.tcn_kernel = int(tcn_kernel)
        self.extrapolator_kernel = int(extrapolator_kernel)
        self.pool_window = int(pool_window)
        self.T_obs = int(T_obs)
        self.T_pred = int(T_pred)
        self.prelu_init = float(prelu_init)
        self.tcn_residual = bool(tcn_residual)
        self.social = bool(social)
        self.sigma_floor = float(sigma_floor)
        self.validate()

    def validate(self):
        for name in ("d_e", "d_r", "d_h", "tcn_layers", "pool_window"):
            _require(getattr(self, name) >= 1, "{} must be at least 1, got {}",
                     name, getattr(self, name))
        for name in ("tcn_kernel", "extrapolator_kernel"):
            value = getattr(self, name)
            _require(value >= 1 and value % 2 == 1, "{} must be a positive odd number, got {}",
                     name, value)
        _require(self.T_obs >= 2, "T_obs must be at least 2, got {}", self.T_obs)
        _require(self.T_pred >= 1, "T_pred must be at least 1, got {}", self.T_pred)
        _require(self.sigma_floor > 0, "sigma_floor must be positive, got {}", self.sigma_floor)

    @property
    def horizon(self):
        return self.T_obs, self.T_pred

    def __eq__(self, other):
        return isinstance(other, ModelConfig) and self.as_dict() == other.as_dict()

    def __hash__(self):
        return hash(tuple(sorted(self.as_dict().items())))


class TrainConfig(MSONable):
    """
    Optimization settings.

    Attributes:
        lr (float): SGD learning rate
        batch_size (int): windows per update
        epochs (int): passes over the training windows
        seed (int): seed of the shuffling and initialization streams
        checkpoint_interval (int): save a checkpoint every this many
            epochs, 0 disables interval checkpoints
        validation_fraction (float): share of scenes held out for
            validation, in [0, 1)
        lr_decay (float): multiplicative learning-rate factor applied
            after every epoch, 1 keeps the rate constant
    """

    def __init__(self, lr=0.01, batch_size=64, epochs=30, seed=0, checkpoint_interval=0,
                 validation_fraction=0.2, lr_decay=1.0):
        self.lr = float(lr)
        self.batch_size = int(batch_size)
        self.epochs = int(epochs)
        self.seed = int(seed)
        self.checkpoint_interval = int(checkpoint_interval)
        self.validation_fraction = float(validation_fraction)
        self.lr_decay = float(lr_decay)
        self.validate()

    def validate(self):
        # lr == 0 is accepted as the degenerate optimizer
        _require(self.lr >= 0, "lr must not be negative, got {}", self.lr)
        _require(self.batch_size >= 1, "batch_size must be at least 1, got {}", self.batch_size)
        _require(self.epochs >= 1, "epochs must be at least 1, got {}", self.epochs)
        _require(self.checkpoint_interval >= 0, "checkpoint_interval must not be negative, got {}",
                 self.checkpoint_interval)
        _require(0 <= self.validation_fraction < 1,
                 "validation_fraction must lie in [0, 1), got {}", self.validation_fraction)
        _require(0 < self.lr_decay <= 1, "lr_decay must lie in (0, 1], got {}", self.lr_decay)


def _section(contents, name, cls):
    section = contents.get(name) or {}
    if not isinstance(section, dict):
        raise ConfigError("section '{}' must be a mapping".format(name))
    try:
        return cls(**section)
    except TypeError as ex:
        raise ConfigError("invalid key in section '{}': {}".format(name, ex))


def load_config(path):
    """
    Reads a YAML (or JSON) configuration file with optional ``model`` and
    ``train`` sections.

    Args:
        path (str): configuration file

    Returns:
        (ModelConfig, TrainConfig): configurations, defaults where absent
    """
    contents = loadfn(path) or {}
    if not isinstance(contents, dict):
        raise ConfigError("configuration file {} must hold a mapping".format(path))
    unknown = set(contents) - {"model", "train"}
    if unknown:
        raise ConfigError("unknown configuration sections: {}".format(", ".join(sorted(unknown))))
    return _section(contents, "model", ModelConfig), _section(contents, "train", TrainConfig)


def override(config, **overrides):
    """
    Returns a copy of ``config`` with the non-None overrides applied.
    """
    d = config.as_dict()
    d.update({k: v for k, v in overrides.items() if v is not None})
    return config.__class__.from_dict(d)


def resolve_seed(seed=None):
    """
    Returns the explicit seed, else the ``CROWDCAST_SEED`` environment
    variable, else 0.
    """
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV_VAR)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise ConfigError("{} must be an integer, got '{}'".format(SEED_ENV_VAR, env))
