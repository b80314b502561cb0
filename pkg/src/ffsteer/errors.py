"""Exception types raised across the package."""


class FfSteerError(Exception):
    """Base class for all package errors."""


class NonClosure(FfSteerError):
    """A track requested as closed does not close within tolerance."""


class OffTrack(FfSteerError):
    """A query point is too far from the centerline to project."""


class NumericalDivergence(FfSteerError):
    """The vehicle state left its sanity bounds."""


class NotAttainable(FfSteerError):
    """A steady-state lateral acceleration target is beyond the grip limit."""


class InfeasibleTrack(FfSteerError):
    """The acceleration limits imply a speed below the minimum on some sample."""


class RankDeficient(FfSteerError):
    """A least-squares regressor matrix does not have full column rank."""


class ZeroVariance(FfSteerError):
    """A series is constant where a normalisation by its variance is needed."""


class Diverged(FfSteerError):
    """Training produced a non-finite loss."""


class ClosedLoopFailure(FfSteerError):
    """A closed-loop run that had to succeed (e.g. data collection) failed.

    The telemetry recorded up to the failure is kept on ``telemetry``.
    """

    def __init__(self, message: str, telemetry=None, fail_s: float | None = None):
        super().__init__(message)
        self.telemetry = telemetry
        self.fail_s = fail_s
