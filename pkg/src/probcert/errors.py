"""Exception types raised across the package."""


class ProbCertError(Exception):
    """Base class for all errors raised by probcert."""


class NotPositiveDefinite(ProbCertError, ValueError):
    pass


class NonConvergence(ProbCertError, RuntimeError):
    pass


class DimensionMismatch(ProbCertError, ValueError):
    pass


class ParseError(ProbCertError, ValueError):
    pass


class UnsupportedActivation(ProbCertError, ValueError):
    pass


class InvalidDims(ProbCertError, ValueError):
    pass


class InvalidProbability(ProbCertError, ValueError):
    pass


class InvalidCount(ProbCertError, ValueError):
    pass


class DegenerateImage(ProbCertError, ValueError):
    pass


class DegenerateInput(ProbCertError, ValueError):
    pass


class ZeroNormal(ProbCertError, ValueError):
    pass


class NotTwoDimensional(ProbCertError, ValueError):
    pass


class SolverFailure(ProbCertError, RuntimeError):
    """A stage's SDP did not reach an acceptable solution."""

    def __init__(self, message, stage=None, status=None):
        super().__init__(message)
        self.stage = stage
        self.status = status
