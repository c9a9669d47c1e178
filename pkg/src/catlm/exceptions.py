"""Exception hierarchy shared by all catlm modules."""


class CatlmError(Exception):
    """Base class for every error raised by catlm."""


class ValidationError(CatlmError, ValueError):
    """Input failed a structural or numerical precondition."""


class NegativeWeight(ValidationError):
    pass


class AllZero(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class SpaceMismatch(ValidationError):
    pass


class NonStochastic(ValidationError):
    """A row or a joint does not sum to one within tolerance."""


class NonStochasticTable(NonStochastic):
    pass


class UnknownElement(ValidationError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class MalformedProductSpace(ValidationError):
    pass


class HorizonTooLarge(ValidationError):
    pass


class VocabMismatch(ValidationError):
    pass


class NonFiniteInput(ValidationError):
    pass


class BoundarySimplex(ValidationError):
    """A probability fell below the floor where the Fisher-Rao chart is defined."""


class UnknownKind(ValidationError):
    pass


class NoDraftHead(CatlmError):
    pass


class NonConvergentStationary(CatlmError):
    pass


class NonFiniteGradient(CatlmError, FloatingPointError):
    pass


class DivergedLoss(CatlmError):
    pass


class InfiniteDivergenceError(CatlmError, ArithmeticError):
    """Arithmetic was attempted on an infinite divergence value."""


class ConfigInvalid(CatlmError):
    pass


class IoFailure(CatlmError, OSError):
    pass


class ProbeFailed(CatlmError):
    """A probe raised; ``probe`` names it and ``__cause__`` holds the module error."""

    def __init__(self, probe, cause):
        super().__init__(f"probe {probe!r} failed: {type(cause).__name__}: {cause}")
        self.probe = probe
