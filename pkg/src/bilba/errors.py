"""Exception types raised across the package."""


class BilbaError(Exception):
    pass


class InvalidGeometry(BilbaError, ValueError):
    pass


class NotOnBoundary(BilbaError, ValueError):
    pass


class ContactNotInSlice(BilbaError, KeyError):
    pass


class InvalidStart(BilbaError, ValueError):
    def __init__(self, message: str, particle: int | None = None):
        if particle is not None:
            message = f"particle {particle}: {message}"
        super().__init__(message)
        self.particle = particle


class DegenerateBelief(BilbaError, ValueError):
    pass


class FitFailure(BilbaError, RuntimeError):
    pass


class FeatureSingularity(BilbaError, ValueError):
    pass


class EmptyGraph(BilbaError, ValueError):
    pass


class InvalidParam(BilbaError, ValueError):
    pass


class NoSchedule(BilbaError, RuntimeError):
    pass


class SamplingFailure(BilbaError, RuntimeError):
    pass


class NoPlan(BilbaError, RuntimeError):
    pass


class ScenarioError(BilbaError, ValueError):
    pass
