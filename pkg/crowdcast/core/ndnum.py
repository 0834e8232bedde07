"""
Dense tensors with reverse-mode automatic differentiation.

A forward pass records every primitive application on a
:class:`GradientTape` (define-by-run, one tape per pass). Parameters enter
the tape through :meth:`GradientTape.watch`; :func:`backward` replays the
tape in reverse from a scalar and returns one gradient per watched
parameter.
"""

import logging
from collections import OrderedDict

import numpy as np

from crowdcast.core.exceptions import ShapeError, TapeError, RankError, NumericsError
from crowdcast.core.registry import Registry
# noinspection PyUnresolvedReferences
import crowdcast.core.primitives

logger = logging.getLogger(__name__)

LEAF = "leaf"


class Tensor(object):
    """
    Immutable dense float64 array, optionally recorded on a gradient tape.

    Attributes:
        node (TapeNode): handle of the operation that produced this tensor,
            None for constants
    """

    __slots__ = ["_data", "node"]
    # numpy arrays on the left defer to the reflected operators
    __array_ufunc__ = None

    def __init__(self, data, node=None):
        """
        Args:
            data (array-like): values, copied and stored as float64
            node (TapeNode): producing tape node, if any
        """
        if isinstance(data, Tensor):
            data = data.data
        data = np.array(data, dtype=np.float64)
        data.setflags(write=False)
        self._data = data
        self.node = node

    @classmethod
    def _wrap(cls, array, node=None):
        # skips the defensive copy for arrays created by primitives
        tensor = cls.__new__(cls)
        array = np.asarray(array, dtype=np.float64)
        array.setflags(write=False)
        tensor._data = array
        tensor.node = node
        return tensor

    @classmethod
    def constant(cls, data):
        """
        Creates a tensor that never receives a gradient.

        Args:
            data (array-like): values

        Returns:
            Tensor: constant tensor
        """
        return cls(data)

    @property
    def data(self):
        return self._data

    @property
    def shape(self):
        return self._data.shape

    @property
    def ndim(self):
        return self._data.ndim

    @property
    def size(self):
        return self._data.size

    @property
    def tape(self):
        return self.node.tape if self.node is not None else None

    def numpy(self):
        """
        Returns:
            np.ndarray: writable copy of the values
        """
        return np.array(self._data)

    def item(self):
        return float(self._data.reshape(-1)[0]) if self.size == 1 else self._data.item()

    def _lift(self, other):
        return other if isinstance(other, Tensor) else Tensor(other)

    def __add__(self, other):
        return apply_primitive("add", [self, self._lift(other)])

    def __radd__(self, other):
        return apply_primitive("add", [self._lift(other), self])

    def __sub__(self, other):
        return apply_primitive("sub", [self, self._lift(other)])

    def __rsub__(self, other):
        return apply_primitive("sub", [self._lift(other), self])

    def __mul__(self, other):
        if isinstance(other, Tensor) or np.ndim(other) > 0:
            return apply_primitive("mul-elementwise", [self, self._lift(other)])
        return apply_primitive("scalar-mul", [self], {"scalar": float(other)})

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return apply_primitive("scalar-mul", [self], {"scalar": -1.0})

    def __matmul__(self, other):
        return apply_primitive("matmul", [self, self._lift(other)])

    def __repr__(self):
        return "Tensor(shape={}, on_tape={})".format(self.shape, self.node is not None)


class TapeNode(object):
    """
    One recorded primitive application (or a watched leaf).
    """

    __slots__ = ["tape", "index", "kind", "parents", "inputs", "output", "attrs", "name"]

    def __init__(self, tape, index, kind, parents, inputs, output, attrs, name=None):
        self.tape = tape
        self.index = index
        self.kind = kind
        self.parents = parents
        self.inputs = inputs
        self.output = output
        self.attrs = attrs
        self.name = name


class GradientTape(object):
    """
    Append-only record of primitive applications. Parents always precede
    their children because a node can only be recorded once its inputs
    exist.
    """

    def __init__(self):
        self.nodes = []
        self._leaves = OrderedDict()

    def __len__(self):
        return len(self.nodes)

    def watch(self, name, value):
        """
        Registers a parameter as a differentiable leaf.

        Args:
            name (str): parameter name, used as key in the gradient map
            value (array-like or Tensor): parameter value

        Returns:
            Tensor: tensor recorded on this tape
        """
        if name in self._leaves:
            raise TapeError("parameter '{}' is already watched on this tape".format(name))
        data = value.data if isinstance(value, Tensor) else value
        tensor = Tensor(data)
        node = TapeNode(self, len(self.nodes), LEAF, [], [], tensor.data, {}, name=name)
        self.nodes.append(node)
        self._leaves[name] = node
        tensor.node = node
        return tensor

    def record(self, kind, parents, inputs, output, attrs):
        node = TapeNode(self, len(self.nodes), kind, parents, inputs, output, attrs)
        self.nodes.append(node)
        return node

    @property
    def leaves(self):
        return OrderedDict(self._leaves)


def apply_primitive(kind, inputs, attrs=None):
    """
    Applies a primitive operation, recording it when any input is on a tape.

    Args:
        kind (str): primitive name, one of the names registered in
            ``Registry("primitives")``
        inputs ([Tensor]): operands
        attrs (dict): primitive attributes (axis, scalar, mask, ...)

    Returns:
        Tensor: result

    Raises:
        ShapeError: operand shapes invalid for the primitive
        TapeError: operands recorded on different tapes
    """
    primitive = Registry("primitives").lookup(kind, error_cls=ValueError)
    inputs = list(inputs)
    for tensor in inputs:
        if not isinstance(tensor, Tensor):
            raise TypeError("{}: expected Tensor inputs, got {}".format(kind, type(tensor)))
    primitive.check_arity(kind, len(inputs))
    attrs = dict(attrs or {})

    tapes = {id(t.node.tape): t.node.tape for t in inputs if t.node is not None}
    if len(tapes) > 1:
        raise TapeError("{}: inputs are recorded on {} different tapes".format(kind, len(tapes)))

    values = [t.data for t in inputs]
    output = primitive.forward(kind, values, attrs)
    if not tapes:
        return Tensor._wrap(output)
    tape = next(iter(tapes.values()))
    result = Tensor._wrap(output)
    result.node = tape.record(kind, [t.node for t in inputs], values, result.data, attrs)
    return result


def backward(loss):
    """
    Computes gradients of a scalar with respect to every watched parameter.

    Args:
        loss (Tensor): scalar (size-1) tensor recorded on a tape

    Returns:
        OrderedDict: parameter name -> Tensor gradient; parameters the loss
        does not depend on map to zeros

    Raises:
        RankError: loss is not a scalar
        TapeError: loss is not recorded on a tape
    """
    if loss.size != 1:
        raise RankError("backward needs a scalar loss, got shape {}".format(loss.shape))
    if loss.node is None:
        raise TapeError("loss is not recorded on a gradient tape")
    registry = Registry("primitives")
    tape = loss.node.tape
    grads = [None] * len(tape.nodes)
    grads[loss.node.index] = np.ones(loss.shape)

    for node in reversed(tape.nodes[:loss.node.index + 1]):
        grad = grads[node.index]
        if grad is None or node.kind == LEAF:
            continue
        primitive = registry[node.kind]
        parent_grads = primitive.backward(node.kind, grad, node.inputs, node.output, node.attrs)
        for parent, parent_grad in zip(node.parents, parent_grads):
            if parent is None or parent_grad is None:
                continue
            if grads[parent.index] is None:
                grads[parent.index] = parent_grad
            else:
                grads[parent.index] = grads[parent.index] + parent_grad

    gradient_map = OrderedDict()
    for name, leaf in tape.leaves.items():
        grad = grads[leaf.index]
        gradient_map[name] = Tensor(grad if grad is not None else np.zeros(leaf.output.shape))
    return gradient_map


def sgd_step(params, grads, lr):
    """
    One plain stochastic gradient descent update, p <- p - lr * g.

    Args:
        params (ModelParams): current parameters
        grads (dict): parameter name -> Tensor or array gradient
        lr (float): learning rate

    Returns:
        ModelParams: updated parameters (the input is not modified)

    Raises:
        ShapeError: a gradient is missing or its shape differs from the parameter
    """
    updated = OrderedDict()
    for name, value in params.items():
        if name not in grads:
            raise ShapeError("sgd_step: no gradient for parameter '{}'".format(name))
        grad = grads[name]
        grad = grad.data if isinstance(grad, Tensor) else np.asarray(grad, dtype=np.float64)
        if grad.shape != value.shape:
            raise ShapeError("sgd_step: gradient shape {} does not match parameter '{}' "
                             "shape {}".format(grad.shape, name, value.shape))
        updated[name] = value - lr * grad
    return params.updated(updated)


def _as_arrays(params):
    if hasattr(params, "arrays"):
        return params.arrays()
    return OrderedDict((name, np.array(value.data if isinstance(value, Tensor) else value,
                                       dtype=np.float64))
                       for name, value in params.items())


def _scalar_value(f, tensors):
    value = f(tensors)
    value = value.data if isinstance(value, Tensor) else np.asarray(value)
    if value.size != 1:
        raise RankError("finite differences need a scalar function, got shape {}".format(value.shape))
    return float(value.reshape(-1)[0])


def finite_diff_check(f, params, eps=1e-5, floor=1e-8, max_coords=None, seed=0):
    """
    Compares reverse-mode gradients against central finite differences.

    Args:
        f (callable): maps a dict of parameter name -> Tensor to a scalar
            Tensor; must be deterministic and accept both watched and
            constant tensors
        params (ModelParams or dict): point at which to check
        eps (float): finite-difference step
        floor (float): lower bound of the relative-error denominator
        max_coords (int): if given, at most this many randomly chosen
            coordinates per parameter are checked
        seed (int): seed for the coordinate selection

    Returns:
        float: max over checked coordinates of
            |analytic - central| / max(|analytic|, |central|, floor)

    Raises:
        ValueError: eps is not positive
        NumericsError: f is non-finite at a perturbed point
    """
    if not eps > 0:
        raise ValueError("finite_diff_check needs eps > 0, got {}".format(eps))
    values = _as_arrays(params)
    tape = GradientTape()
    watched = OrderedDict((name, tape.watch(name, value)) for name, value in values.items())
    grads = backward(f(watched))

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, value in values.items():
        analytic = grads[name].data.reshape(-1)
        coords = np.arange(value.size)
        if max_coords is not None and value.size > max_coords:
            coords = np.sort(rng.choice(value.size, size=max_coords, replace=False))
        for coord in coords:
            estimates = []
            for step in (eps, -eps):
                perturbed = value.reshape(-1).copy()
                perturbed[coord] += step
                tensors = OrderedDict((k, Tensor(v)) for k, v in values.items())
                tensors[name] = Tensor(perturbed.reshape(value.shape))
                estimates.append(_scalar_value(f, tensors))
            if not np.all(np.isfinite(estimates)):
                raise NumericsError("f is not finite when perturbing {}[{}]".format(name, coord))
            central = (estimates[0] - estimates[1]) / (2 * eps)
            exact = analytic[coord]
            error = abs(exact - central) / max(abs(exact), abs(central), floor)
            if error > worst:
                logger.debug("finite differences: %s[%s] analytic %s central %s",
                             name, coord, exact, central)
                worst = error
    return worst
