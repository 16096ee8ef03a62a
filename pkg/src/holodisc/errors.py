"""Exception hierarchy shared by all modules."""


class HolodiscError(Exception):
    """Base class for every error raised by the package."""


class DomainError(HolodiscError, ValueError):
    """An input lies outside the domain of an operation (e.g. a non-tangent vector)."""


class ProjectionError(HolodiscError):
    """Projection onto a Lagrangian is ill-posed.

    ``margin`` carries the offending distance (or eigenvalue gap) so callers
    can decide whether a smaller step would help.
    """

    def __init__(self, message, margin=None):
        super().__init__(message)
        self.margin = margin


class NonTransverseError(HolodiscError):
    pass


class MeshError(HolodiscError, ValueError):
    pass


class SamplingError(HolodiscError):
    """Loop sampling too coarse for an unambiguous phase unwrap or frame path."""


class ClosureError(HolodiscError):
    pass


class CornerNormalizationError(HolodiscError):
    pass


class TruncationError(HolodiscError):
    pass


class IndeterminateRankError(HolodiscError):
    """A kernel-dimension decision fell inside the ambiguity band; increase N."""


class ConsistencyError(HolodiscError):
    pass


class ScenarioError(HolodiscError, ValueError):
    pass


class InitializerError(HolodiscError):
    pass


class StageError(HolodiscError):
    """A pipeline stage failed; carries the stage name and a remediation hint."""

    def __init__(self, stage: str, cause: Exception, hint: str = ""):
        self.stage = stage
        self.cause = cause
        self.hint = hint
        text = f"[{stage}] {type(cause).__name__}: {cause}"
        if hint:
            text += f" (hint: {hint})"
        super().__init__(text)
