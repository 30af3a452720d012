class ConfigError(ValueError):
    """Malformed or out-of-range configuration (CLI exit code 2)."""


class AssumptionViolation(ValueError):
    """A modelling assumption required by the design does not hold (CLI exit code 3)."""


class VerificationFailure(RuntimeError):
    """An oracle comparison failed (CLI exit code 4)."""
