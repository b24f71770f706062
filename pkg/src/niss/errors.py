"""Exception hierarchy shared by every module in the package."""


class NissError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(NissError, ValueError):
    """A numeric argument is outside its admissible range."""


class ShapeError(NissError, ValueError):
    """Vector or array dimensions do not line up."""


class ProtocolError(NissError, RuntimeError):
    """The share exchange or aggregation cannot proceed as requested."""


class ConfigError(NissError, ValueError):
    """An experiment or training configuration is invalid."""


class FormatError(NissError, ValueError):
    """A data file does not follow the expected on-disk layout."""


class RoundFailure(NissError, RuntimeError):
    """A training round aborted; ``round`` names the failing round."""

    def __init__(self, round_index: int, cause: BaseException):
        super().__init__(f"round {round_index} failed: {cause}")
        self.round = round_index
        self.cause = cause
