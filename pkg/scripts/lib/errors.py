"""Exception hierarchy for the poisoning laboratory.

Every error carries the exit code the command-line tools report for it:
2 for configuration problems, 3 for data problems, 4 for numeric failures.
"""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class PoisonLabError(Exception):
    """Base class for all library errors."""

    exit_code: int = 1


class ConfigError(PoisonLabError):
    """Invalid configuration or model parameters."""

    exit_code = EXIT_CONFIG


class DataError(PoisonLabError):
    """Unreadable, malformed, or inconsistent input data."""

    exit_code = EXIT_DATA


class FeatureFileError(DataError):
    """Feature file is truncated, corrupt, or of the wrong version/dimension."""


class ReportError(DataError):
    """Experiment reports cannot be combined."""


class AssumptionViolated(DataError):
    """The target arm is the worst arm at some context.

    Attributes:
        context_index: Index of the offending context in the probe set
    """

    def __init__(self, message: str, context_index: int | None = None) -> None:
        super().__init__(message)
        self.context_index = context_index

    def __reduce__(self) -> tuple[type["AssumptionViolated"], tuple[str, int | None]]:
        return (AssumptionViolated, (str(self), self.context_index))


class NumericError(PoisonLabError):
    """Non-finite or otherwise broken numerics."""

    exit_code = EXIT_NUMERIC


class DegenerateDenominator(NumericError):
    """White-box mixing probability undefined: target mean equals the worst mean."""


class TrialError(PoisonLabError):
    """A trial failed; carries the trial seed so the run can be replayed.

    The exit code is inherited from the wrapped error.
    """

    def __init__(self, seed: int, cause: Exception) -> None:
        super().__init__(f"trial with seed {seed} failed: {cause}")
        self.seed = seed
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", EXIT_NUMERIC)

    def __reduce__(self) -> tuple[type["TrialError"], tuple[int, Exception]]:
        return (TrialError, (self.seed, self.cause))
