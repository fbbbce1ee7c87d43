"""Exception hierarchy shared by all modules."""


class FinslerError(Exception):
    """Base class for every error raised by this package."""


# jets
class InvalidOrderError(FinslerError, ValueError):
    pass


class OrderExceededError(FinslerError, ValueError):
    pass


class SingularJetError(FinslerError, ZeroDivisionError):
    pass


class JetDomainError(FinslerError, ValueError):
    pass


class RootFailureError(FinslerError, ArithmeticError):
    pass


class DegenerateImplicitError(FinslerError, ArithmeticError):
    pass


# metrics
class BuildRejectedError(FinslerError, ValueError):
    """A metric spec failed one of its build-time invariant checks."""

    def __init__(self, check: str, message: str, path: str = ""):
        super().__init__(f"{check}: {message}")
        self.check = check
        self.path = path


class OutOfDomainError(FinslerError, ValueError):
    pass


class ApexError(FinslerError, ValueError):
    """Evaluation at y = 0, where F is not differentiable."""


# tensors
class DegenerateMetricError(FinslerError, ArithmeticError):
    def __init__(self, min_eig: float, message: str = ""):
        super().__init__(message or f"fundamental form not positive definite (min eigenvalue {min_eig:.3e})")
        self.min_eig = min_eig


# geodesics / curvature
class AccuracyError(FinslerError, ArithmeticError):
    def __init__(self, message: str, suggested_steps: int | None = None):
        if suggested_steps is not None:
            message = f"{message}; try steps >= {suggested_steps}"
        super().__init__(message)
        self.suggested_steps = suggested_steps


class InconsistencyError(FinslerError, ArithmeticError):
    """Two independent computation routes disagree beyond tolerance."""


class DegenerateFlagError(FinslerError, ValueError):
    pass


class NotScalarCurvatureError(FinslerError, ValueError):
    pass


# harness
class ConfigError(FinslerError, ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DimensionRefusalError(FinslerError, ValueError):
    pass
