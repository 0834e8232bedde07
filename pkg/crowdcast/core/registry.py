"""
Named registries shared across crowdcast. Asking for the same name twice
returns the same dictionary, so modules can register entries at import
time and look them up elsewhere.
"""

import abc


class RegistryMeta(abc.ABCMeta):

    all_instances = None

    def __init__(cls, name, bases, nmspc):
        super(RegistryMeta, cls).__init__(name, bases, nmspc)
        if cls.all_instances is None:
            cls.all_instances = dict()

    def __call__(cls, name=None):
        if name is None:
            raise ValueError("Must specify a name to get a Registry")
        if name not in cls.all_instances:
            cls.all_instances[name] = super(RegistryMeta, cls).__call__()
        return cls.all_instances[name]


class Registry(dict, metaclass=RegistryMeta):
    """
    Dictionary singleton per registry name.

    Usage example:
        @Registry("scene_templates").register("crossing")
        def crossing(n_agents, rng, config):
            ...

        template = Registry("scene_templates")["crossing"]
    """

    def register(self, key):
        """
        Decorator registering the decorated object under ``key``.

        Args:
            key (str): name to register under

        Returns:
            callable: decorator returning its argument unchanged
        """
        def _register(obj):
            self[key] = obj
            return obj
        return _register

    def lookup(self, key, error_cls=KeyError):
        """
        Looks up an entry, raising ``error_cls`` with the known names
        when it is missing.

        Args:
            key (str): registered name
            error_cls (type): exception type raised for unknown names

        Returns:
            registered object
        """
        try:
            return self[key]
        except KeyError:
            raise error_cls("Unknown name '{}', expected one of: {}".format(
                key, ", ".join(sorted(self.keys()))))
