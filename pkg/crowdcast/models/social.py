"""
Social interaction extractor.

Observed displacements are embedded per pedestrian and step; pairwise
relative positions are mapped through a small MLP to one interaction
weight per ordered pair; neighbor embeddings are summed with those
weights and fused with the pedestrian's own embedding.

All tensors are time-major: ``[T_obs, n, channels]``.
"""

import logging
from collections import namedtuple

import numpy as np

from crowdcast.core.ndnum import Tensor, apply_primitive
from crowdcast.core.exceptions import ShapeError

logger = logging.getLogger(__name__)

InteractionMLP = namedtuple("InteractionMLP", ["W1", "b1", "slope", "W2", "b2"])
InteractionMLP.__doc__ = """Weights of the pairwise interaction MLP, d_r -> d_h -> 1."""

FuseMLP = namedtuple("FuseMLP", ["W", "b", "slope"])
FuseMLP.__doc__ = """Weights of the fuse MLP, 2 d_e -> pool_window d_e."""


def prelu(x, slope):
    return apply_primitive("prelu", [x, slope])


def time_major(array):
    """
    Converts a pedestrian-major array ``[n, T, ...]`` to a time-major
    constant Tensor ``[T, n, ...]``.
    """
    return Tensor(np.swapaxes(np.asarray(array, dtype=np.float64), 0, 1))


def _as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def embed_positions(disp, W_e):
    """
    Linear embedding of per-step displacements, e = X W_e (no bias).

    Args:
        disp (Tensor or DisplacementWindow): observed displacements
            [T_obs, n, 2], or a window whose observed segment is used
        W_e (Tensor): embedding matrix [2, d_e]

    Returns:
        Tensor: embeddings [T_obs, n, d_e]
    """
    if hasattr(disp, "observed") and hasattr(disp, "displacements"):
        disp = time_major(disp.observed)
    disp = _as_tensor(disp)
    if disp.ndim != 3 or disp.shape[-1] != 2:
        raise ShapeError("embed_positions: displacements must be [T, n, 2], got {}".format(
            disp.shape))
    return disp @ W_e


def pairwise_offsets(positions):
    """
    Relative positions d[t, i, j] = x[t, j] - x[t, i].

    Args:
        positions (Tensor): absolute positions [T, n, 2]

    Returns:
        Tensor: offsets [T, n, n, 2], antisymmetric with a zero diagonal
    """
    positions = _as_tensor(positions)
    if positions.ndim != 3 or positions.shape[-1] != 2 or positions.shape[1] < 1:
        raise ShapeError("pairwise_offsets: positions must be [T, n >= 1, 2], got {}".format(
            positions.shape))
    steps, n, _ = positions.shape
    others = apply_primitive("reshape", [positions], {"shape": (steps, 1, n, 2)})
    selves = apply_primitive("reshape", [positions], {"shape": (steps, n, 1, 2)})
    return others - selves


def interaction_weights(offsets, W_r, W_s):
    """
    Interaction weight per ordered pair, r = MLP(d W_r; W_s), with the
    diagonal (self pairs) forced to zero.

    Args:
        offsets (Tensor): [T, n, n, 2]
        W_r (Tensor): offset embedding [2, d_r]
        W_s (InteractionMLP): two-layer MLP with a PReLU in between

    Returns:
        Tensor: weights [T, n, n]; r[t, i, j] is the weight of j on i
    """
    steps, n = offsets.shape[0], offsets.shape[1]
    hidden = prelu(offsets @ W_r @ W_s.W1 + W_s.b1, W_s.slope)
    scores = hidden @ W_s.W2 + W_s.b2
    scores = apply_primitive("reshape", [scores], {"shape": (steps, n, n)})
    return exclude_self(scores)


def exclude_self(weights):
    """Zeroes r[t, i, i]."""
    n = weights.shape[-1]
    return apply_primitive("masked-fill", [weights], {"mask": np.eye(n, dtype=bool), "value": 0.0})


def aggregate_social(E, R):
    """
    Weighted neighbor sum f[t, i] = sum over j != i of r[t, i, j] e[t, j].

    Args:
        E (Tensor): embeddings [T, n, d_e]
        R (Tensor): interaction weights [T, n, n]; a non-zero diagonal
            is ignored

    Returns:
        Tensor: social features [T, n, d_e]
    """
    if R.ndim != 3 or R.shape[:2] != E.shape[:2] or R.shape[1] != R.shape[2]:
        raise ShapeError("aggregate_social: weights {} do not match embeddings {}".format(
            R.shape, E.shape))
    return exclude_self(R) @ E


def fuse_features(E, F, W_c, pool_window=2):
    """
    Spatial social feature s = maxpool(PReLU([e, f] W_c + b)).

    Args:
        E (Tensor): own embeddings [T, n, d_e]
        F (Tensor): social features [T, n, d_e]
        W_c (FuseMLP): fuse MLP weights
        pool_window (int): channel max-pool window

    Returns:
        Tensor: fused features [T, n, d_e]; W_c.W is [2 d_e, pool_window d_e]
    """
    joined = apply_primitive("concat", [E, F], {"axis": -1})
    fused = prelu(joined @ W_c.W + W_c.b, W_c.slope)
    return apply_primitive("max-pool-channel", [fused], {"window": pool_window})


def canonical_order(positions):
    """
    Row order that sorts pedestrians lexicographically by their observed
    positions; equal tracks keep their input order.

    Args:
        positions (np.ndarray): observed absolute positions [T, n, 2]

    Returns:
        np.ndarray: row indices [n]
    """
    positions = np.asarray(positions, dtype=np.float64)
    keys = np.swapaxes(positions, 0, 1).reshape(positions.shape[1], -1)
    return np.lexsort(keys.T[::-1])


def take_pedestrians(tensor, order):
    """Reorders the pedestrian axis (axis 1) of a time-major tensor."""
    return apply_primitive("take", [tensor], {"indices": order, "axis": 1})


def in_canonical_order(fn, disp, positions, *args):
    """
    Evaluates ``fn(disp, positions, *args)`` on pedestrians sorted by
    :func:`canonical_order` and returns its ``[T, n, C]`` result in the
    caller's row order. Reordering the input rows reorders the output rows
    and leaves every value bit-identical.
    """
    disp, positions = _as_tensor(disp), _as_tensor(positions)
    order = canonical_order(positions.data)
    # always reordered so every call sees C-contiguous inputs
    out = fn(take_pedestrians(disp, order), take_pedestrians(positions, order), *args)
    return take_pedestrians(out, np.argsort(order))


def social_features(disp, positions, p, config):
    """
    Runs the whole extractor. Pedestrians are processed in canonical order.

    Args:
        disp (Tensor): observed displacements [T_obs, n, 2]
        positions (Tensor): observed absolute positions [T_obs, n, 2]
        p (dict): parameter name -> Tensor
        config (ModelConfig): dimensions and switches

    Returns:
        Tensor: spatial social features [T_obs, n, d_e]
    """
    return in_canonical_order(_social_features, disp, positions, p, config)


def _social_features(disp, positions, p, config):
    E = embed_positions(disp, p["social.W_e"])
    if config.social:
        R = interaction_weights(pairwise_offsets(positions), p["social.W_r"],
                                InteractionMLP(p["social.W_s1"], p["social.b_s1"], p["social.a_s"],
                                               p["social.W_s2"], p["social.b_s2"]))
        F = aggregate_social(E, R)
    else:
        F = Tensor(np.zeros(E.shape))
    return fuse_features(E, F, FuseMLP(p["social.W_c"], p["social.b_c"], p["social.a_c"]),
                         config.pool_window)
