"""Exception hierarchy shared by every stage of the pipeline."""


class MCEError(Exception):
    """Base class; ``code`` is the machine-readable name printed by the CLI."""

    @property
    def code(self) -> str:
        return type(self).__name__


# numerics
class NonFiniteIntegrand(MCEError):
    pass


class MaxIterationsExceeded(MCEError):
    pass


class SingularHessian(MCEError):
    pass


class ObjectiveUnbounded(MCEError):
    pass


class NoSignChange(MCEError):
    pass


# data / ranks
class DegenerateSample(MCEError):
    pass


# marginals / copula
class InfeasibleMean(MCEError):
    pass


class Infeasible(MCEError):
    """No copula-form density matches the requested moment targets.

    ``margin`` is the signed feasibility margin of the target vector on the
    quadrature grid (negative means certified infeasible).
    """

    def __init__(self, msg, margin=None):
        super().__init__(msg)
        self.margin = margin


class EnvelopeExceeded(UserWarning):
    pass


# control
class SingularCovariance(MCEError):
    pass


class BracketFailure(MCEError):
    pass


class TooFewSamples(MCEError):
    pass


# io / config
class ParseError(MCEError):
    def __init__(self, msg, line=None):
        super().__init__(msg if line is None else f"line {line}: {msg}")
        self.line = line


class MissingColumn(MCEError):
    pass


class ConfigError(MCEError):
    pass


class StageError(MCEError):
    """Wraps an error raised while fitting a phase-I stage."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage}: {cause.code if isinstance(cause, MCEError) else type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause

    @property
    def code(self) -> str:
        return self.cause.code if isinstance(self.cause, MCEError) else type(self.cause).__name__
