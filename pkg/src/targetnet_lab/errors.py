"""Exception hierarchy shared by every module of the lab."""


class LabError(Exception):
    """Base class for all errors raised by targetnet_lab."""


class InvalidInputError(LabError, ValueError):
    """Shapes, probabilities or parameters violate a documented precondition."""


class NoStationaryDistributionError(LabError):
    """The chain has no unique stationary distribution."""


class SingularSystemError(LabError):
    """A linear system that must be solved is singular."""


class ConfigError(LabError, ValueError):
    """An experiment or algorithm configuration is malformed."""

    def __init__(self, message, field=None, line=None):
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.field = field
        self.line = line
