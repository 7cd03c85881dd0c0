"""Typed errors raised across the package."""


class HJHomogError(Exception):
    """Base class for all package errors."""


class NoSingleBranchError(HJHomogError):
    """The cell condition has no root on either monotone branch."""


class BranchExitError(HJHomogError):
    """A perturbed level leaves the branch the solve started on."""


class DegenerateBranchError(HJHomogError):
    """The momentum derivative vanishes where a density or inverse is needed."""


class SupportError(HJHomogError):
    """A bump support precondition is violated."""


class WindowError(HJHomogError):
    """An occupancy field window is too small for the requested lattice sites."""


class DivergenceError(HJHomogError):
    """The discounted sweep iteration stopped contracting."""

    def __init__(self, message, theta=None):
        super().__init__(message)
        self.theta = theta


class StepSizeError(HJHomogError):
    """A trajectory step exceeded the advertised speed bound."""


class LegendreConvergenceError(HJHomogError):
    """The numeric Legendre transform failed to converge."""

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class ConfigError(HJHomogError):
    """An experiment configuration is invalid."""
