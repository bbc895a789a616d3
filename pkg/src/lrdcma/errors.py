"""Exception hierarchy shared by all modules."""


class LrdcmaError(Exception):
    """Base class for all errors raised by the package."""


class ParameterError(LrdcmaError, ValueError):
    """An argument is outside its admissible range."""


class DomainError(ParameterError):
    """A value lies outside the mathematical domain of an operation."""


class ConfigError(LrdcmaError, ValueError):
    """One or more configuration problems; ``problems`` lists them all."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class UnsupportedConfigurationError(ConfigError):
    """A configuration the implementation deliberately rejects."""


class ResolutionError(LrdcmaError):
    """A Monte Carlo budget is too small for the requested quantity."""


class NumericError(LrdcmaError, ArithmeticError):
    """A numerical routine failed to reach its tolerance."""


class StateError(LrdcmaError, RuntimeError):
    """An object lacks the state required by an operation."""
