"""
Forward and backward rules of the primitive operations recorded on a
gradient tape. Every primitive is registered in ``Registry("primitives")``
under its kind name; :func:`crowdcast.core.ndnum.apply_primitive` looks
them up there.

Time-major layouts are used throughout: sequences are ``[T, n, C]``
(time, pedestrians, channels).
"""

import numpy as np

from crowdcast.core.exceptions import ShapeError
from crowdcast.core.registry import Registry

PRIMITIVES = Registry("primitives")


def _shape_error(kind, message, *shapes):
    return ShapeError("{}: {} (shapes: {})".format(
        kind, message, ", ".join(str(tuple(s)) for s in shapes)))


def _unbroadcast(grad, shape):
    """Sums a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(kind, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise _shape_error(kind, "operands do not broadcast", a.shape, b.shape)


class Primitive(object):
    """
    Base class of primitive rules. Subclasses implement ``forward`` and
    ``backward`` as static methods; ``arity`` of None accepts one or more
    inputs.
    """
    arity = 1

    @classmethod
    def check_arity(cls, kind, n_inputs):
        if cls.arity is None:
            if n_inputs < 1:
                raise ShapeError("{}: needs at least one input".format(kind))
        elif n_inputs != cls.arity:
            raise ShapeError("{}: expected {} inputs, got {}".format(kind, cls.arity, n_inputs))

    @staticmethod
    def forward(kind, xs, attrs):
        raise NotImplementedError

    @staticmethod
    def backward(kind, grad, xs, out, attrs):
        raise NotImplementedError


@PRIMITIVES.register("matmul")
class MatMul(Primitive):
    """
    ``[..., m, k] @ [k, p]`` or batched ``[B..., m, k] @ [B..., k, p]`` with
    identical leading dimensions.
    """
    arity = 2

    @staticmethod
    def forward(kind, xs, attrs):
        a, b = xs
        if a.ndim < 2 or b.ndim < 2:
            raise _shape_error(kind, "operands must have rank >= 2", a.shape, b.shape)
        if b.ndim != 2 and (b.ndim != a.ndim or a.shape[:-2] != b.shape[:-2]):
            raise _shape_error(kind, "right operand must be 2-D or share leading dimensions",
                               a.shape, b.shape)
        if a.shape[-1] != b.shape[-2]:
            raise _shape_error(kind, "inner dimensions {} and {} differ".format(
                a.shape[-1], b.shape[-2]), a.shape, b.shape)
        return np.matmul(a, b)

    @staticmethod
    def backward(kind, grad, xs, out, attrs):
        a, b = xs
        grad_a = np.matmul(grad, np.swapaxes(b, -1, -2))
        if b.ndim == 2:
            grad_b = a.reshape(-1, a.shape[-1]).T @ grad.reshape(-1, grad.shape[-1])
        else:
            grad_b = np.matmul(np.swapaxes(a, -1, -2), grad)
        return [grad_a, grad_b]


@PRIMITIVES.register("add")
class Add(Primitive):
    arity = 2

    @staticmethod
    def forward(kind, xs, attrs):
        _broadcast_shape(kind, *xs)
        return xs[0] + xs[1]

    @staticmethod
    def backward(kind, grad, xs, out, attrs):
        return [_unbroadcast(grad, xs[0].shape), _unbroadcast(grad, xs[1].shape)]


@PRIMITIVES.register("sub")
class Sub(Primitive):
    arity = 2

    @staticmethod
    def forward(kind, xs, attrs):
        _broadcast_shape(kind, *xs)
        return xs[0] - xs[1]

    @staticmethod
    def backward(kind, grad, xs, out, attrs):
        return [_unbroadcast(grad, xs[0].shape), _unbroadcast(-grad, xs[1].shape)]


@PRIMITIVES.register("mul-elementwise")
class Mul(Primitive):
    arity = 2

    @staticmethod
    def forward(kind, xs, attrs):
        _broadcast_shape(kind, *xs)
        return xs[0] * xs[1]

    @staticmethod
    def backward(kind, grad, xs, out, attrs):
        a, b = xs
        return [_unbroadcast(grad * b, a.shape), _unbroadcast(grad * a, b.shape)]


@PRIMITIVES.register("scalar-mul")
class ScalarMul(Primitive):

    @staticmethod
    def forward(kind, xs, attrs):
        return xs[0] * attrs["scalar"]

    @staticmethod
    def backward(kind, grad, xs, out, attrs):
        return [grad * attrs["scalar"]]


@PRIMITIVES.register("exp")
class Exp(Primitive):

    @staticmethod
    def forward(kind, xs, attrs):
        return np.exp(xs[0])

    @staticmethod
    def backward(kind, grad, xs, out, attrs):
        return [grad * out]


@PRIMITIVES.register("log")
class Log(Primitive):

    @staticmethod
    def forward(kind, xs, attrs):
        return np.log(xs[0])

    @staticmethod
    def backward(kind, grad, xs, out, attrs):
        return [grad / xs[0]]


@PRIMITIVES.register("tanh")
class Tanh(Primitive):

    @staticmethod
    def forward(kind, xs, attrs):
        return np.tanh(xs[0])

    @staticmethod
    def backward(kind, grad, xs, out, attrs):
        return [grad * (1.0 - out * out)]


@PRIMITIVES.register("prelu")
class PReLU(Primitive):
    """
    Parametric ReLU; the second input is the single learnable slope
    applied to non-positive entries.
    """
    arity = 2

    @staticmethod
    def forward(kind, xs, attrs):
        x, slope = xs
        if slope.size != 1:
            raise _shape_error(kind, "slope must hold a single value", x.shape, slope.shape)
        return np.where(x > 0, x, slope.reshape(()) * x)

    @staticmethod
    def backward(kind, grad, xs, out, attrs):
        x, slope = xs
        positive = x > 0
        grad_x = np.where(positive, grad, slope.reshape(()) * grad)
        grad_slope = np.sum(np.where(positive, 0.0, x * grad)).reshape(slope.shape)
        return [grad_x, grad_slope]


@PRIMITIVES.register("max-pool-channel")
class MaxPoolChannel(Primitive):
    """
    Max over non-overlapping groups of ``window`` adjacent channels on the
    last axis. Ties go to the first channel of the group.
    """

    @staticmethod
    def _grouped(kind, x, window):
        if window < 1 or x.shape[-1] % window:
            raise _shape_error(kind, "channel count not divisible by window {}".format(window),
                               x.shape)
        return x.reshape(x.shape[:-1] + (x.shape[-1] // window, window))

    @staticmethod
    def forward(kind, xs, attrs):
        grouped = MaxPoolChannel._grouped(kind, xs[0], attrs.get("window", 2))
        return grouped.max(axis=-1)

    @staticmethod
    def backward(kind, grad, xs, out, attrs):
        x = xs[0]
        grouped = MaxPoolChannel._grouped(kind, x, attrs.get("window", 2))
        winners = np.argmax(grouped, axis=-1)[..., np.newaxis]
        grad_grouped = np.zeros(grouped.shape)
        np.put_along_axis(grad_grouped, winners, grad[..., np.newaxis], axis=-1)
        return [grad_grouped.reshape(x.shape)]


@PRIMITIVES.register("reduce-sum")
class ReduceSum(Primitive):
    """Sum over ``axis`` (all axes when None)."""

    @staticmethod
    def forward(kind, xs, attrs):
        axis = attrs.get("axis")
        if axis is not None and not -xs[0].ndim <= axis < xs[0].ndim:
            raise _shape_error(kind, "axis {} out of range".format(axis), xs[0].shape)
        return np.asarray(np.sum(xs[0], axis=axis))

    @staticmethod
    def backward(kind, grad, xs, out, attrs):
        axis = attrs.get("axis")
        if axis is not None:
            grad = np.expand_dims(grad, axis)
        return [np.broadcast_to(grad, xs[0].shape).copy()]


@PRIMITIVES.register("cumsum-time")
class CumsumTime(Primitive):
    """Running sum along the time axis (``axis``, default 0)."""

    @staticmethod
    def forward(kind, xs, attrs):
        axis = attrs.get("axis", 0)
        if not -xs[0].ndim <= axis < xs[0].ndim:
            raise _shape_error(kind, "axis {} out of range".format(axis), xs[0].shape)
        return np.cumsum(xs[0], axis=axis)

    @staticmethod
    def backward(kind, grad, xs, out, attrs):
        axis = attrs.get("axis", 0)
        reverse = np.flip(np.cumsum(np.flip(grad, axis=axis), axis=axis), axis=axis)
        return [reverse]


@PRIMITIVES.register("conv-temporal")
class ConvTemporal(Primitive):
    """
    1-D convolution along time with symmetric zero padding, so the output
    keeps the input length. Input ``[T, n, C_in]``, kernel
    ``[k, C_in, C_out]`` with odd ``k``, output ``[T, n, C_out]``.
    """
    arity = 2

    @staticmethod
    def _padded(kind, x, w):
        if x.ndim != 3 or w.ndim != 3:
            raise _shape_error(kind, "expected [T, n, C_in] input and [k, C_in, C_out] kernel",
                               x.shape, w.shape)
        if w.shape[0] % 2 == 0:
            raise _shape_error(kind, "kernel size {} must be odd".format(w.shape[0]), w.shape)
        if x.shape[2] != w.shape[1]:
            raise _shape_error(kind, "input channels {} differ from kernel channels {}".format(
                x.shape[2], w.shape[1]), x.shape, w.shape)
        pad = (w.shape[0] - 1) // 2
        return np.pad(x, ((pad, pad), (0, 0), (0, 0)))

    @staticmethod
    def forward(kind, xs, attrs):
        x, w = xs
        padded = ConvTemporal._padded(kind, x, w)
        steps = x.shape[0]
        out = np.zeros((steps, x.shape[1], w.shape[2]))
        for tap in range(w.shape[0]):
            out = out + np.matmul(padded[tap:tap + steps], w[tap])
        return out

    @staticmethod
    def backward(kind, grad, xs, out, attrs):
        x, w = xs
        padded = ConvTemporal._padded(kind, x, w)
        steps = x.shape[0]
        pad = (w.shape[0] - 1) // 2
        grad_padded = np.zeros(padded.shape)
        grad_w = np.zeros(w.shape)
        for tap in range(w.shape[0]):
            grad_padded[tap:tap + steps] += np.matmul(grad, w[tap].T)
            grad_w[tap] = np.tensordot(padded[tap:tap + steps], grad, axes=([0, 1], [0, 1]))
        return [grad_padded[pad:pad + steps], grad_w]


@PRIMITIVES.register("conv-channel-time")
class ConvChannelTime(Primitive):
    """
    Convolution that treats the time axis as channels: input ``[S, n, C]``
    with S observed steps, kernel ``[P, S, k]`` with odd ``k`` sliding over
    the feature axis C, output ``[P, n, C]`` with P predicted steps.
    """
    arity = 2

    @staticmethod
    def _padded(kind, x, w):
        if x.ndim != 3 or w.ndim != 3:
            raise _shape_error(kind, "expected [S, n, C] input and [P, S, k] kernel",
                               x.shape, w.shape)
        if w.shape[2] % 2 == 0:
            raise _shape_error(kind, "kernel size {} must be odd".format(w.shape[2]), w.shape)
        if x.shape[0] != w.shape[1]:
            raise _shape_error(kind, "input steps {} differ from kernel input channels {}".format(
                x.shape[0], w.shape[1]), x.shape, w.shape)
        pad = (w.shape[2] - 1) // 2
        return np.pad(x, ((0, 0), (0, 0), (pad, pad)))

    @staticmethod
    def forward(kind, xs, attrs):
        x, w = xs
        padded = ConvChannelTime._padded(kind, x, w)
        width = x.shape[2]
        out = np.zeros((w.shape[0], x.shape[1], width))
        for tap in range(w.shape[2]):
            out = out + np.einsum("ps,sic->pic", w[:, :, tap], padded[:, :, tap:tap + width])
        return out

    @staticmethod
    def backward(kind, grad, xs, out, attrs):
        x, w = xs
        padded = ConvChannelTime._padded(kind, x, w)
        width = x.shape[2]
        pad = (w.shape[2] - 1) // 2
        grad_padded = np.zeros(padded.shape)
        grad_w = np.zeros(w.shape)
        for tap in range(w.shape[2]):
            grad_padded[:, :, tap:tap + width] += np.einsum("ps,pic->sic", w[:, :, tap], grad)
            grad_w[:, :, tap] = np.einsum("pic,sic->ps", grad, padded[:, :, tap:tap + width])
        return [grad_padded[:, :, pad:pad + width], grad_w]


@PRIMITIVES.register("concat")
class Concat(Primitive):
    """Concatenation along ``axis`` (default last)."""
    arity = None

    @staticmethod
    def forward(kind, xs, attrs):
        axis = attrs.get("axis", -1)
        first = xs[0]
        axis_ = axis % first.ndim
        for other in xs[1:]:
            if other.ndim != first.ndim or \
                    other.shape[:axis_] + other.shape[axis_ + 1:] != \
                    first.shape[:axis_] + first.shape[axis_ + 1:]:
                raise _shape_error(kind, "shapes differ off axis {}".format(axis),
                                   *[x.shape for x in xs])
        return np.concatenate(xs, axis=axis)

    @staticmethod
    def backward(kind, grad, xs, out, attrs):
        axis = attrs.get("axis", -1)
        splits = np.cumsum([x.shape[axis] for x in xs])[:-1]
        return np.split(grad, splits, axis=axis)


@PRIMITIVES.register("reshape")
class Reshape(Primitive):

    @staticmethod
    def forward(kind, xs, attrs):
        shape = tuple(attrs["shape"])
        if int(np.prod(shape)) != xs[0].size:
            raise _shape_error(kind, "cannot reshape {} values".format(xs[0].size),
                               xs[0].shape, shape)
        return xs[0].reshape(shape)

    @staticmethod
    def backward(kind, grad, xs, out, attrs):
        return [grad.reshape(xs[0].shape)]


@PRIMITIVES.register("take")
class Take(Primitive):
    """Selects ``indices`` along ``axis``; repeated indices accumulate gradient."""

    @staticmethod
    def forward(kind, xs, attrs):
        x = xs[0]
        indices = np.asarray(attrs["indices"], dtype=np.int64)
        axis = attrs.get("axis", 0)
        if indices.ndim != 1 or (indices.size and (indices.min() < -x.shape[axis]
                                                   or indices.max() >= x.shape[axis])):
            raise _shape_error(kind, "indices out of range along axis {}".format(axis),
                               x.shape, indices.shape)
        return np.take(x, indices, axis=axis)

    @staticmethod
    def backward(kind, grad, xs, out, attrs):
        axis = attrs.get("axis", 0)
        result = np.zeros(xs[0].shape)
        np.add.at(np.moveaxis(result, axis, 0), np.asarray(attrs["indices"], dtype=np.int64),
                  np.moveaxis(grad, axis, 0))
        return [result]


@PRIMITIVES.register("masked-fill")
class MaskedFill(Primitive):
    """
    Replaces entries where ``mask`` is true by ``value`` (default 0); those
    entries pass no gradient.
    """

    @staticmethod
    def forward(kind, xs, attrs):
        x = xs[0]
        mask = np.asarray(attrs["mask"], dtype=bool)
        try:
            shape = np.broadcast_shapes(x.shape, mask.shape)
        except ValueError:
            shape = None
        if shape != x.shape:
            raise _shape_error(kind, "mask does not broadcast to the input", x.shape, mask.shape)
        return np.where(mask, attrs.get("value", 0.0), x)

    @staticmethod
    def backward(kind, grad, xs, out, attrs):
        mask = np.asarray(attrs["mask"], dtype=bool)
        return [np.where(mask, 0.0, grad)]
