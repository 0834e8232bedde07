"""
Reference predictors and the rival graph preprocessing path.

The graph path rebuilds what a spatio-temporal graph model does before
inference: copy the relative locations into vertices and weight every
pair by the inverse Euclidean distance. It exists to be timed against
:func:`crowdcast.models.social.pairwise_offsets`.
"""

import logging

import networkx as nx
import numpy as np
from scipy import stats

from crowdcast.core.exceptions import ConfigError, ShapeError
from crowdcast.dataio.windows import to_displacements

logger = logging.getLogger(__name__)

COINCIDENT_EPS = 1e-6
KERNEL_DIAGONAL = 1.0
KERNELS = ("inverse-distance", "offsets")


def linear_regression_predict(window):
    """
    Ordinary least squares of position against time, per pedestrian and
    dimension, over the observed steps, extrapolated over the prediction
    steps.

    Args:
        window (SceneWindow): window with T_obs >= 2

    Returns:
        np.ndarray: predicted positions [T_pred, n, 2]
    """
    observed = window.observed
    t_obs = np.arange(window.T_obs, dtype=float)
    t_pred = np.arange(window.T_obs, window.T_obs + window.T_pred, dtype=float)
    prediction = np.empty((window.T_pred, window.n_peds, 2))
    for i in range(window.n_peds):
        for dim in range(2):
            fit = stats.linregress(t_obs, observed[i, :, dim])
            prediction[:, i, dim] = fit.intercept + fit.slope * t_pred
    return prediction


def constant_velocity_predict(window):
    """
    Repeats the last observed displacement over the prediction steps.

    Args:
        window (SceneWindow): window with T_obs >= 2

    Returns:
        np.ndarray: predicted positions [T_pred, n, 2]
    """
    observed = window.observed
    last = observed[:, -1]
    velocity = last - observed[:, -2]
    steps = np.arange(1, window.T_pred + 1, dtype=float)[:, np.newaxis, np.newaxis]
    return last[np.newaxis] + steps * velocity[np.newaxis]


def stgcnn_kernel(positions):
    """
    Inverse Euclidean distance between every pair of pedestrians,
    ``1 / sqrt(dx * dx + dy * dy)``. Pairs closer than 1e-6 get 1e-6 as
    distance; the diagonal is 1.

    Args:
        positions (array-like): [T, n, 2]

    Returns:
        np.ndarray: symmetric adjacency [T, n, n]
    """
    positions = np.asarray(positions, dtype=np.float64)
    if positions.ndim != 3 or positions.shape[-1] != 2:
        raise ShapeError("stgcnn_kernel: positions must be [T, n, 2], got {}".format(
            positions.shape))
    delta = positions[:, :, np.newaxis, :] - positions[:, np.newaxis, :, :]
    dist = np.sqrt(delta[..., 0] * delta[..., 0] + delta[..., 1] * delta[..., 1])
    adjacency = 1.0 / np.maximum(dist, COINCIDENT_EPS)
    n = positions.shape[1]
    adjacency[:, np.arange(n), np.arange(n)] = KERNEL_DIAGONAL
    return adjacency


class SpatialGraph(object):
    """
    Per-step pedestrian graphs of a window.

    Attributes:
        vertices (np.ndarray): [T, n, 2] copied relative locations
        adjacency (np.ndarray): [T, n, n] edge weights; all ones for the
            offsets kernel
        offsets (np.ndarray): [T, n, n, 2] edge offsets for the offsets
            kernel, else None
        laplacian (np.ndarray): [T, n, n] normalized Laplacian when
            requested, else None
    """

    def __init__(self, vertices, adjacency, offsets=None, laplacian=None):
        self.vertices = vertices
        self.adjacency = adjacency
        self.offsets = offsets
        self.laplacian = laplacian

    @property
    def n_steps(self):
        return self.vertices.shape[0]

    @property
    def n_vertices(self):
        return self.vertices.shape[1]

    def to_networkx(self, step):
        """
        Returns:
            nx.Graph: weighted graph of one step
        """
        return nx.from_numpy_array(self.adjacency[step])


def build_graph(window, kernel="inverse-distance", normalize=False):
    """
    Builds the spatial graph of every step the way graph-based predictors
    preprocess a sequence: the relative locations are copied to vertices
    and every pair gets an edge weight.

    Args:
        window (SceneWindow): source window
        kernel (str): "inverse-distance" weights each edge with
            :func:`stgcnn_kernel`; "offsets" stores the raw offsets without
            squares or square roots
        normalize (bool): also compute the symmetric normalized Laplacian
            of every step with networkx

    Returns:
        SpatialGraph: graph of the window
    """
    if kernel not in KERNELS:
        raise ConfigError("unknown graph kernel '{}', expected one of: {}".format(
            kernel, ", ".join(KERNELS)))
    vertices = np.swapaxes(to_displacements(window).displacements, 0, 1).copy()
    positions = np.swapaxes(window.positions, 0, 1)
    offsets = None
    if kernel == "offsets":
        offsets = positions[:, np.newaxis, :, :] - positions[:, :, np.newaxis, :]
        adjacency = np.ones(offsets.shape[:3])
    else:
        adjacency = stgcnn_kernel(positions)
    laplacian = None
    if normalize:
        laplacian = np.stack([nx.normalized_laplacian_matrix(nx.from_numpy_array(step)).toarray()
                              for step in adjacency])
    return SpatialGraph(vertices, adjacency, offsets, laplacian)
