"""Exception hierarchy shared by the library, trainer and CLI."""


class MackrlError(Exception):
    """Base class for all errors raised by mackrl"""


class DomainError(MackrlError, ValueError):
    """An operation was called outside its preconditions"""


class StructuralError(MackrlError):
    """A policy tree is missing a node that a reachable subgroup needs"""


class ZeroProbabilityError(DomainError):
    """A joint action has probability zero, so its log is undefined"""


class DegenerateResolutionError(DomainError):
    """Holenstein grid too coarse: the acceptance set is empty"""


class ConfigError(DomainError):
    """A settings or run configuration could not be used"""


class TrainingDivergedError(MackrlError):
    """A loss or a parameter became non-finite during training"""

    def __init__(self, message, dump_dir=None):
        super().__init__(message)
        self.dump_dir = dump_dir
