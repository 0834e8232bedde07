"""
Named predictors behind a common interface. Every predictor turns a
:class:`~crowdcast.dataio.windows.SceneWindow` into one or more candidate
absolute trajectories; deterministic predictors always return a single
candidate.
"""

import logging

import numpy as np

from crowdcast.core.exceptions import ConfigError
from crowdcast.core.registry import Registry
from crowdcast.dataio.windows import to_displacements
from crowdcast.models.baselines import linear_regression_predict, constant_velocity_predict
from crowdcast.models.gauss import decode_params, sample_many, displacements_to_absolute
from crowdcast.models.seqnet import model_forward

logger = logging.getLogger(__name__)

PREDICTORS = Registry("predictors")


class Predictor(object):
    """
    Base class of predictors.

    Attributes:
        name (str): registry name
        deterministic (bool): True when a single candidate is produced
    """
    name = None
    deterministic = True

    def candidates(self, window, n_samples, rng):
        """
        Args:
            window (SceneWindow): window to predict
            n_samples (int): candidates requested (ignored when
                deterministic)
            rng (np.random.Generator): generator of the window

        Returns:
            np.ndarray: [N, T_pred, n, 2] absolute trajectories
        """
        raise NotImplementedError

    def __repr__(self):
        return "{}()".format(self.__class__.__name__)


@PREDICTORS.register("lr")
class LinearRegressionPredictor(Predictor):
    name = "lr"

    def candidates(self, window, n_samples, rng):
        return linear_regression_predict(window)[np.newaxis]


@PREDICTORS.register("cv")
class ConstantVelocityPredictor(Predictor):
    name = "cv"

    def candidates(self, window, n_samples, rng):
        return constant_velocity_predict(window)[np.newaxis]


@PREDICTORS.register("social-iwstcnn")
class NetworkPredictor(Predictor):
    """
    Samples the bivariate Gaussian output of the network.
    """
    name = "social-iwstcnn"
    deterministic = False

    def __init__(self, params):
        """
        Args:
            params (ModelParams): trained parameters
        """
        self.params = params

    @property
    def config(self):
        return self.params.config

    def distribution(self, window):
        """
        Returns:
            BiGaussianSeq: predicted displacement distribution
        """
        if window.T_obs != self.config.T_obs or window.T_pred != self.config.T_pred:
            raise ConfigError("window horizon {}+{} does not match the model's {}+{}".format(
                window.T_obs, window.T_pred, self.config.T_obs, self.config.T_pred))
        raw = model_forward(to_displacements(window), self.params)
        return decode_params(raw, self.config.sigma_floor)

    def mean_trajectory(self, window):
        return displacements_to_absolute(self.distribution(window).mu, window.observed[:, -1])

    def candidates(self, window, n_samples, rng):
        dist = self.distribution(window)
        samples = sample_many(dist, rng, n_samples)
        return displacements_to_absolute(samples, window.observed[:, -1])

    def __repr__(self):
        return "{}(social={})".format(self.__class__.__name__, self.config.social)


@PREDICTORS.register("plain-tcn")
class PlainSequencePredictor(NetworkPredictor):
    """
    Network without the interaction branch.
    """
    name = "plain-tcn"

    def __init__(self, params):
        if params.config.social:
            raise ConfigError("plain-tcn needs parameters trained with social = False")
        super(PlainSequencePredictor, self).__init__(params)


def get_predictor(name, params=None):
    """
    Instantiates a registered predictor.

    Args:
        name (str): registry name
        params (ModelParams): parameters of network predictors

    Returns:
        Predictor: predictor instance
    """
    cls = PREDICTORS.lookup(name, error_cls=ConfigError)
    if issubclass(cls, NetworkPredictor):
        if params is None:
            raise ConfigError("predictor '{}' needs a checkpoint".format(name))
        return cls(params)
    return cls()


def predictor_for(params):
    """Network predictor matching the configuration of ``params``."""
    return get_predictor("social-iwstcnn" if params.config.social else "plain-tcn", params)
