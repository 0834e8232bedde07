"""
Named collections of learnable arrays and their checkpoint format.

A checkpoint is a JSON document written with ``monty.serialization.dumpfn``::

    {"@module": "crowdcast.core.params", "@class": "ModelParams",
     "format_version": 1,
     "config": {... ModelConfig ...},
     "params": {"social.W_e": {"shape": [2, 32], "data": [...]}, ...}}

``data`` is the row-major flattening of the array. Floats are written
with their shortest round-trip representation, so save then load gives
back bit-identical arrays.
"""

import logging
from collections import OrderedDict

import numpy as np
from monty.json import MSONable
from monty.serialization import dumpfn, loadfn

from crowdcast.core.config import ModelConfig
from crowdcast.core.exceptions import ConfigError, ShapeError
from crowdcast.core.ndnum import Tensor

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class ModelParams(MSONable):
    """
    Ordered mapping of parameter name to float64 array, together with the
    model configuration the parameters belong to. Instances are treated
    as immutable; updates return new instances.
    """

    def __init__(self, params, config=None):
        """
        Args:
            params (dict): parameter name -> array-like
            config (ModelConfig): configuration the parameters were
                initialized for
        """
        self._params = OrderedDict()
        for name, value in params.items():
            value = value.data if isinstance(value, Tensor) else value
            array = np.array(value, dtype=np.float64)
            array.setflags(write=False)
            self._params[name] = array
        self.config = config if config is not None else ModelConfig()

    def __len__(self):
        return len(self._params)

    def __contains__(self, name):
        return name in self._params

    def __getitem__(self, name):
        return self._params[name]

    def __iter__(self):
        return iter(self._params)

    @property
    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def arrays(self):
        """
        Returns:
            OrderedDict: parameter name -> writable array copy
        """
        return OrderedDict((name, np.array(value)) for name, value in self._params.items())

    def watch(self, tape):
        """
        Registers every parameter on a gradient tape.

        Args:
            tape (GradientTape): tape of the current forward pass

        Returns:
            OrderedDict: parameter name -> watched Tensor
        """
        return OrderedDict((name, tape.watch(name, value)) for name, value in self._params.items())

    def constants(self):
        """
        Returns:
            OrderedDict: parameter name -> constant Tensor (no gradient)
        """
        return OrderedDict((name, Tensor(value)) for name, value in self._params.items())

    def updated(self, new_values):
        """
        Returns a copy with some parameters replaced.

        Args:
            new_values (dict): parameter name -> new array of identical shape

        Returns:
            ModelParams: new instance sharing the configuration
        """
        merged = OrderedDict(self._params)
        for name, value in new_values.items():
            if name not in merged:
                raise ShapeError("unknown parameter '{}'".format(name))
            value = np.asarray(value.data if isinstance(value, Tensor) else value, dtype=np.float64)
            if value.shape != merged[name].shape:
                raise ShapeError("parameter '{}' has shape {}, got {}".format(
                    name, merged[name].shape, value.shape))
            merged[name] = value
        return self.__class__(merged, self.config)

    def n_values(self):
        return int(sum(value.size for value in self._params.values()))

    def is_finite(self):
        return all(np.all(np.isfinite(value)) for value in self._params.values())

    def identical_to(self, other):
        """
        Bitwise comparison of names, shapes and values.
        """
        if self.names != other.names:
            return False
        return all(np.array_equal(self[name], other[name]) and
                   self[name].tobytes() == other[name].tobytes() for name in self.names)

    def as_dict(self):
        return {"@module": self.__class__.__module__,
                "@class": self.__class__.__name__,
                "format_version": FORMAT_VERSION,
                "config": self.config.as_dict(),
                "params": OrderedDict(
                    (name, {"shape": list(value.shape),
                            "data": [float(v) for v in value.reshape(-1)]})
                    for name, value in self._params.items())}

    @classmethod
    def from_dict(cls, d):
        version = d.get("format_version")
        if version != FORMAT_VERSION:
            raise ConfigError("unsupported checkpoint format version {}".format(version))
        params = OrderedDict()
        for name, entry in d["params"].items():
            shape = tuple(entry["shape"])
            data = np.array(entry["data"], dtype=np.float64)
            if data.size != int(np.prod(shape)):
                raise ShapeError("checkpoint parameter '{}' holds {} values for shape {}".format(
                    name, data.size, shape))
            params[name] = data.reshape(shape)
        config = d.get("config")
        if isinstance(config, dict):
            config = ModelConfig.from_dict(config)
        return cls(params, config)

    def save(self, path):
        """
        Writes the checkpoint JSON file.

        Args:
            path (str): destination file
        """
        dumpfn(self, path)
        logger.info("saved %d parameters (%d values) to %s", len(self), self.n_values(), path)

    @classmethod
    def load(cls, path):
        """
        Reads a checkpoint written by :meth:`save`.

        Args:
            path (str): checkpoint file

        Returns:
            ModelParams: loaded parameters
        """
        loaded = loadfn(path)
        if isinstance(loaded, dict):
            loaded = cls.from_dict(loaded)
        if not isinstance(loaded, cls):
            raise ConfigError("{} does not hold model parameters".format(path))
        return loaded
