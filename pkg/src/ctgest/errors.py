"""Exception types shared across the package."""


class CohortParseError(ValueError):
    """A cohort CSV row violates the schema or a trajectory invariant."""


class ConfigError(ValueError):
    """A run-configuration file contains an unknown key or a bad value."""


class NoEventsError(RuntimeError):
    """Boundary diagnostic: the cohort contains no treatment initiations,
    so the initiation-rate scale is driven to zero and nothing is estimable."""


class NonConvergenceError(RuntimeError):
    """An iterative solver ran out of iterations.

    Carries the last iterate and the residual norm so callers can inspect
    how close the solver got.
    """

    def __init__(self, message, last_iterate=None, residual_norm=None, trace=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual_norm = residual_norm
        self.trace = trace


class SingularityError(RuntimeError):
    """A matrix required to be invertible is singular or numerically rank
    deficient (estimating-equation Jacobian, test covariance, ...)."""


class OdeIntegrationError(RuntimeError):
    """Backward integration of the counterfactual transform failed; the
    message names the offending segment."""
