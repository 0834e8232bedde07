"""
Temporal convolution stack, time extrapolator and the end-to-end model
forward pass.
"""

import logging
from collections import OrderedDict, namedtuple

import numpy as np

from crowdcast.core.config import ModelConfig
from crowdcast.core.exceptions import ConfigError, ShapeError
from crowdcast.core.ndnum import apply_primitive
from crowdcast.core.params import ModelParams
from crowdcast.models.social import prelu, social_features, time_major, in_canonical_order

logger = logging.getLogger(__name__)

N_OUTPUT_CHANNELS = 5

TemporalBlock = namedtuple("TemporalBlock", ["W", "b", "slope"])
Extrapolator = namedtuple("Extrapolator", ["Q", "b", "slope", "W_o", "b_o"])


def parameter_shapes(config):
    """
    Names and shapes of every learnable array of a configuration, in
    checkpoint order.

    Args:
        config (ModelConfig): model configuration

    Returns:
        OrderedDict: parameter name -> shape tuple
    """
    d_e, d_r, d_h = config.d_e, config.d_r, config.d_h
    shapes = OrderedDict()
    shapes["social.W_e"] = (2, d_e)
    if config.social:
        shapes["social.W_r"] = (2, d_r)
        shapes["social.W_s1"] = (d_r, d_h)
        shapes["social.b_s1"] = (d_h,)
        shapes["social.a_s"] = (1,)
        shapes["social.W_s2"] = (d_h, 1)
        shapes["social.b_s2"] = (1,)
    shapes["social.W_c"] = (2 * d_e, config.pool_window * d_e)
    shapes["social.b_c"] = (config.pool_window * d_e,)
    shapes["social.a_c"] = (1,)
    for layer in range(config.tcn_layers):
        shapes["tcn.{}.W".format(layer)] = (config.tcn_kernel, d_e, d_e)
        shapes["tcn.{}.b".format(layer)] = (d_e,)
        shapes["tcn.{}.a".format(layer)] = (1,)
    shapes["extrap.Q"] = (config.T_pred, config.T_obs, config.extrapolator_kernel)
    shapes["extrap.b"] = (config.T_pred, 1, 1)
    shapes["extrap.a"] = (1,)
    shapes["head.W_o"] = (d_e, N_OUTPUT_CHANNELS)
    shapes["head.b_o"] = (N_OUTPUT_CHANNELS,)
    return shapes


def _fan_in(name, shape):
    if name == "extrap.Q":
        return shape[1] * shape[2]
    if len(shape) == 3:
        return shape[0] * shape[1]
    return shape[0]


def init_params(config=None, seed=0):
    """
    Initializes parameters: weights uniform in +-sqrt(1 / fan_in), biases
    zero, PReLU slopes at ``config.prelu_init``.

    Args:
        config (ModelConfig): model configuration, defaults if None
        seed (int): initialization seed

    Returns:
        ModelParams: fresh parameters
    """
    config = config or ModelConfig()
    rng = np.random.default_rng(seed)
    params = OrderedDict()
    for name, shape in parameter_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf.startswith("a"):
            params[name] = np.full(shape, config.prelu_init)
        elif leaf.startswith("b"):
            params[name] = np.zeros(shape)
        else:
            bound = np.sqrt(1.0 / _fan_in(name, shape))
            params[name] = rng.uniform(-bound, bound, size=shape)
    logger.debug("initialized %d parameter arrays with seed %s", len(params), seed)
    return ModelParams(params, config)


def tcn_forward(S, blocks, residual=True):
    """
    Stack of temporal convolution blocks, each
    ``y = PReLU(conv_t(x, W) + b)`` followed by ``y + x`` when residual.

    Args:
        S (Tensor): spatial features [T_obs, n, d_e]
        blocks ([TemporalBlock]): per-block kernel [k, d_e, d_e], bias
            [d_e] and PReLU slope
        residual (bool): whether to add the block input back

    Returns:
        Tensor: temporal features [T_obs, n, d_e]
    """
    if not blocks:
        raise ConfigError("the temporal stack needs at least one block")
    H = S
    for block in blocks:
        out = prelu(apply_primitive("conv-temporal", [H, block.W]) + block.b, block.slope)
        H = out + H if residual else out
    return H


def extrapolate(H, extrapolator):
    """
    Maps the observed time axis onto the prediction horizon in one shot
    by convolving with the steps as channels, then applies the per-step
    linear head.

    Args:
        H (Tensor): temporal features [T_obs, n, d_e]
        extrapolator (Extrapolator): kernel Q [T_pred, T_obs, k], bias
            [T_pred, 1, 1], PReLU slope, head W_o [d_e, 5] and b_o [5]

    Returns:
        Tensor: raw distribution channels [T_pred, n, 5]
    """
    Z = prelu(apply_primitive("conv-channel-time", [H, extrapolator.Q]) + extrapolator.b,
              extrapolator.slope)
    return Z @ extrapolator.W_o + extrapolator.b_o


def _blocks(p, config):
    return [TemporalBlock(p["tcn.{}.W".format(layer)], p["tcn.{}.b".format(layer)],
                          p["tcn.{}.a".format(layer)]) for layer in range(config.tcn_layers)]


def _extrapolator(p):
    return Extrapolator(p["extrap.Q"], p["extrap.b"], p["extrap.a"], p["head.W_o"], p["head.b_o"])


def model_inputs(window):
    """
    Time-major observed inputs of a window.

    Args:
        window (DisplacementWindow): encoded window

    Returns:
        (Tensor, Tensor): observed displacements and absolute positions,
        both [T_obs, n, 2]
    """
    if window.n_peds < 1:
        raise ShapeError("model input window has no pedestrian")
    return time_major(window.observed), time_major(window.window.observed)


def model_forward(window, params, config=None):
    """
    Full forward pass: displacement embedding, interaction weights, social
    aggregation, fusion, temporal stack and extrapolation. Only the
    observed segment of the window is read, and pedestrians are processed
    in canonical order so the output rows follow the input rows exactly.

    Args:
        window (DisplacementWindow): encoded window with n >= 1
        params (ModelParams or dict): parameters; a dict maps names to
            (possibly watched) Tensors
        config (ModelConfig): required when params is a dict

    Returns:
        Tensor: raw output [T_pred, n, 5] in displacement space
    """
    if isinstance(params, ModelParams):
        config = config or params.config
        params = params.constants()
    if config is None:
        raise ConfigError("model_forward needs a configuration")
    if window.T_obs != config.T_obs:
        raise ConfigError("window observes {} steps, model expects {}".format(
            window.T_obs, config.T_obs))
    disp, positions = model_inputs(window)
    return in_canonical_order(_forward, disp, positions, params, config)


def _forward(disp, positions, params, config):
    S = social_features(disp, positions, params, config)
    H = tcn_forward(S, _blocks(params, config), residual=config.tcn_residual)
    return extrapolate(H, _extrapolator(params))