"""Exception hierarchy shared by all simulator modules."""


class SimulationError(Exception):
    """Base class for every error raised by the simulator."""


class ConfigurationError(SimulationError, ValueError):
    """Invalid geometry, grid, or scenario configuration."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        prefix = ""
        if key is not None:
            prefix = f"{key}: "
            if line is not None:
                prefix = f"line {line}: {key}: "
        super().__init__(prefix + message)


class DomainError(SimulationError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class TransitionError(SimulationError):
    """A scattering transition lost too much weight at the spectrum edges."""


class PopulationError(SimulationError):
    """Level populations are undefined (nothing inside the active region)."""
