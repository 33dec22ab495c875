"""Exception and warning types shared across the package."""


class QmclabError(Exception):
    """Base class for package-specific errors."""


class DimensionError(QmclabError, ValueError):
    """Shape or layout mismatch, or a size-cap overflow."""


class NotHermitianError(QmclabError, ValueError):
    """Input required to be Hermitian deviates beyond tolerance."""

    def __init__(self, message: str, violation: float = 0.0):
        super().__init__(message)
        self.violation = violation


class NotPSDError(QmclabError, ValueError):
    """Input required to be positive semidefinite has a substantially
    negative eigenvalue."""

    def __init__(self, message: str, violation: float = 0.0):
        super().__init__(message)
        self.violation = violation


class TraceError(QmclabError, ValueError):
    """Input required to have unit trace deviates beyond tolerance."""

    def __init__(self, message: str, violation: float = 0.0):
        super().__init__(message)
        self.violation = violation


class InvalidExponentError(QmclabError, ValueError):
    """Schatten exponent outside [1, inf]."""


class InfeasibleTargetError(QmclabError, ValueError):
    """A requested discrepancy target cannot be bracketed."""


class UnknownFormulaError(QmclabError, ValueError):
    """Unknown sample-budget formula name."""


class ConfigError(QmclabError, ValueError):
    """Invalid campaign or CLI configuration."""


class MarginalMismatchWarning(UserWarning):
    """Reduced states that should agree differ beyond tolerance."""


class SupportLeakWarning(UserWarning):
    """An operator has weight outside the support of a reference state."""
