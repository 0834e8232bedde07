"""
Bivariate Gaussian output head: decoding of raw network channels,
negative log likelihood, sampling and conversion back to absolute
positions.
"""

import logging
import math
from collections import namedtuple

import numpy as np
import pandas as pd

from crowdcast.core.exceptions import DomainError, NumericsError, ShapeError
from crowdcast.core.ndnum import Tensor, apply_primitive

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2 * math.pi)
DISTRIBUTION_COLUMNS = ["window_id", "track_id", "step", "mu_x", "mu_y",
                        "sigma_x", "sigma_y", "rho"]

# largest correlation magnitude; tanh rounds to exactly 1 beyond about 19
RHO_LIMIT = 1.0 - 1e-12

NLL = namedtuple("NLL", ["total", "mean"])

# one-hot channel selectors of the raw [.., 5] output
_SELECT_MU = np.eye(5)[:, 0:2]
_SELECT_LOG_SIGMA = np.eye(5)[:, 2:4]
_SELECT_RHO = np.eye(5)[:, 4:5]


class BiGaussianSeq(object):
    """
    Per step and pedestrian bivariate Gaussian over displacements.

    Attributes:
        mu (Tensor): means [T_pred, n, 2]
        sigma (Tensor): standard deviations [T_pred, n, 2], positive
        rho (Tensor): correlations [T_pred, n, 1], in (-1, 1)
    """

    def __init__(self, mu, sigma, rho):
        self.mu = mu if isinstance(mu, Tensor) else Tensor(mu)
        self.sigma = sigma if isinstance(sigma, Tensor) else Tensor(sigma)
        rho = rho if isinstance(rho, Tensor) else Tensor(rho)
        if rho.shape == self.mu.shape[:-1]:
            rho = apply_primitive("reshape", [rho], {"shape": rho.shape + (1,)})
        self.rho = rho
        if self.sigma.shape != self.mu.shape or self.rho.shape != self.mu.shape[:-1] + (1,):
            raise ShapeError("inconsistent distribution shapes: mu {}, sigma {}, rho {}".format(
                self.mu.shape, self.sigma.shape, self.rho.shape))

    @classmethod
    def constant(cls, T_pred, n, mu=(0.0, 0.0), sigma=(1.0, 1.0), rho=0.0):
        """Same distribution at every step and pedestrian."""
        shape = (T_pred, n)
        return cls(np.broadcast_to(np.asarray(mu, dtype=float), shape + (2,)),
                   np.broadcast_to(np.asarray(sigma, dtype=float), shape + (2,)),
                   np.full(shape + (1,), float(rho)))

    @property
    def T_pred(self):
        return self.mu.shape[0]

    @property
    def n_peds(self):
        return self.mu.shape[1]

    @property
    def mu_x(self):
        return self.mu.data[..., 0]

    @property
    def mu_y(self):
        return self.mu.data[..., 1]

    @property
    def sigma_x(self):
        return self.sigma.data[..., 0]

    @property
    def sigma_y(self):
        return self.sigma.data[..., 1]

    @property
    def rho_values(self):
        return self.rho.data[..., 0]

    def validate(self):
        """
        Raises:
            DomainError: a standard deviation is not positive, a
                correlation lies outside (-1, 1) or a value is not finite
        """
        for name, value in (("mu", self.mu), ("sigma", self.sigma), ("rho", self.rho)):
            if not np.all(np.isfinite(value.data)):
                raise DomainError("{} holds non-finite values".format(name))
        if np.any(self.sigma.data <= 0):
            raise DomainError("standard deviations must be positive")
        if np.any(np.abs(self.rho.data) >= 1):
            raise DomainError("correlations must lie strictly between -1 and 1")

    def detached(self):
        """Copy with the tape handles dropped."""
        return BiGaussianSeq(Tensor(self.mu.data), Tensor(self.sigma.data), Tensor(self.rho.data))


def decode_params(raw, sigma_floor=1e-6):
    """
    Decodes raw channels into distribution parameters: channels 0-1 are
    the means, exp of channels 2-3 the standard deviations (at least
    ``sigma_floor``) and tanh of channel 4 the correlation, kept within
    +-RHO_LIMIT.

    Args:
        raw (Tensor): raw output [T_pred, n, 5]
        sigma_floor (float): lower bound of the standard deviations

    Returns:
        BiGaussianSeq: decoded distribution

    Raises:
        NumericsError: raw holds non-finite values
    """
    raw = raw if isinstance(raw, Tensor) else Tensor(raw)
    if raw.ndim < 1 or raw.shape[-1] != 5:
        raise ShapeError("decode_params: raw output must have 5 channels, got shape {}".format(
            raw.shape))
    if not np.all(np.isfinite(raw.data)):
        raise NumericsError("raw network output holds non-finite values")
    mu = raw @ Tensor(_SELECT_MU)
    sigma = apply_primitive("exp", [raw @ Tensor(_SELECT_LOG_SIGMA)])
    floored = sigma.data < sigma_floor
    if floored.any():
        logger.debug("%d standard deviations raised to the floor %s", int(floored.sum()), sigma_floor)
        sigma = apply_primitive("masked-fill", [sigma], {"mask": floored, "value": sigma_floor})
    rho = apply_primitive("tanh", [raw @ Tensor(_SELECT_RHO)])
    for sign in (1.0, -1.0):
        clipped = sign * rho.data > RHO_LIMIT
        if clipped.any():
            rho = apply_primitive("masked-fill", [rho], {"mask": clipped, "value": sign * RHO_LIMIT})
    return BiGaussianSeq(mu, sigma, rho)


def _exp(x):
    return apply_primitive("exp", [x])


def _log(x):
    return apply_primitive("log", [x])


def point_nll(params, targets):
    """
    Negative log density of every target point.

    Args:
        params (BiGaussianSeq): distribution [T_pred, n]
        targets (array-like or Tensor): ground truth displacements
            [T_pred, n, 2]

    Returns:
        Tensor: [T_pred, n, 1] per point negative log likelihood
    """
    targets = targets if isinstance(targets, Tensor) else Tensor(targets)
    if targets.shape != params.mu.shape:
        raise ShapeError("nll: targets {} do not match distribution {}".format(
            targets.shape, params.mu.shape))
    params.validate()
    log_sigma = _log(params.sigma)
    normalized = (targets - params.mu) * _exp(-log_sigma)
    nx = normalized @ Tensor(np.array([[1.0], [0.0]]))
    ny = normalized @ Tensor(np.array([[0.0], [1.0]]))
    rho = params.rho
    log_one_minus = _log(Tensor(1.0) - rho * rho)
    quadratic = nx * nx + ny * ny - 2.0 * (rho * nx * ny)
    log_sigmas = log_sigma @ Tensor(np.ones((2, 1)))
    return LOG_2PI + log_sigmas + 0.5 * log_one_minus + 0.5 * (quadratic * _exp(-log_one_minus))


def nll(params, targets, count=None):
    """
    Negative log likelihood of the targets, summed over prediction steps
    and pedestrians, and its mean per point.

    Args:
        params (BiGaussianSeq): distribution
        targets (array-like or Tensor): ground truth displacements
            [T_pred, n, 2]
        count (int): number of points of the mean, defaults to n T_pred

    Returns:
        NLL: (total, mean) scalar Tensors

    Raises:
        DomainError: invalid distribution parameters
    """
    per_point = point_nll(params, targets)
    total = apply_primitive("reduce-sum", [per_point], {"axis": None})
    count = count if count is not None else per_point.size
    return NLL(total, total * (1.0 / count))


def sample_displacements(params, rng):
    """
    One draw per step and pedestrian through the Cholesky factor of the
    covariance: x = mu_x + sigma_x z1, y = mu_y + sigma_y (rho z1 +
    sqrt(1 - rho^2) z2).

    Args:
        params (BiGaussianSeq): distribution
        rng (np.random.Generator): seeded generator

    Returns:
        np.ndarray: sampled displacements [T_pred, n, 2]
    """
    z1, z2 = rng.standard_normal((2,) + params.mu.shape[:-1])
    rho = params.rho_values
    sample = np.empty(params.mu.shape)
    sample[..., 0] = params.mu_x + params.sigma_x * z1
    sample[..., 1] = params.mu_y + params.sigma_y * (rho * z1 + np.sqrt(1.0 - rho * rho) * z2)
    return sample


def sample_many(params, rng, n_samples):
    """
    ``n_samples`` sequential draws; the first k draws of a longer call
    equal a call with ``n_samples = k`` on an identically seeded generator.

    Returns:
        np.ndarray: [n_samples, T_pred, n, 2]
    """
    return np.stack([sample_displacements(params, rng) for _ in range(n_samples)])


def displacements_to_absolute(disp_pred, origin):
    """
    Absolute positions from predicted displacements,
    position[t] = origin + sum over steps up to t of disp_pred.

    Args:
        disp_pred (array-like or Tensor): [..., T_pred, n, 2]
        origin (array-like): last observed positions [n, 2]

    Returns:
        np.ndarray: trajectories [..., T_pred, n, 2]
    """
    disp = disp_pred.data if isinstance(disp_pred, Tensor) else np.asarray(disp_pred, dtype=float)
    return np.asarray(origin, dtype=float) + np.cumsum(disp, axis=-3)


def distribution_frame(params, track_ids, origin, window_id=0):
    """
    Tabulates a predicted distribution, one row per pedestrian and step
    (steps counted from 1), with the absolute mean position in ``x``, ``y``.

    Returns:
        pd.DataFrame: columns of :data:`DISTRIBUTION_COLUMNS` plus x, y
    """
    means = displacements_to_absolute(params.mu, origin)
    rows = []
    for i, track_id in enumerate(track_ids):
        for step in range(params.T_pred):
            rows.append((window_id, track_id, step + 1, params.mu_x[step, i], params.mu_y[step, i],
                         params.sigma_x[step, i], params.sigma_y[step, i],
                         params.rho_values[step, i], means[step, i, 0], means[step, i, 1]))
    return pd.DataFrame(rows, columns=DISTRIBUTION_COLUMNS + ["x", "y"])
