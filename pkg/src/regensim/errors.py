"""Exception hierarchy shared by all regensim modules."""


class RegensimError(Exception):
    """Base class for every error raised by this package."""


class InvalidModel(RegensimError, ValueError):
    """Malformed model input (shape, signs, row sums)."""


class SingularSystem(RegensimError, ArithmeticError):
    """A linear system that should be uniquely solvable is not."""


class ReducibleModel(SingularSystem, InvalidModel):
    """Generator whose off-diagonal support graph is not strongly connected."""


class NonConvergence(RegensimError, ArithmeticError):
    pass


class TooManyStates(RegensimError, ValueError):
    pass


class InvalidExponents(RegensimError, ValueError):
    pass


class OutOfRange(RegensimError, ValueError):
    pass


class ThinningBoundViolated(RegensimError, RuntimeError):
    """A true event rate exceeded the declared dominating rate."""


class ZeroGradient(RegensimError, RuntimeError):
    pass


class NumericalBlowup(RegensimError, FloatingPointError):
    pass


class QuadratureFailure(RegensimError, ArithmeticError):
    pass


class DegenerateSmallSet(RegensimError, ValueError):
    pass


class NegativeResidual(RegensimError, ValueError):
    pass


class EnvelopeViolation(RegensimError, RuntimeError):
    pass


class RejectionBudgetExceeded(RegensimError, RuntimeError):
    pass


class InsufficientCycles(RegensimError, ValueError):
    pass


class TooFewBatches(RegensimError, ValueError):
    pass


class InsufficientReplicates(RegensimError, ValueError):
    pass


class DomainError(RegensimError, ValueError):
    pass


class WindowTooLarge(RegensimError, ValueError):
    pass


class ConfigError(RegensimError, ValueError):
    """Invalid experiment configuration; ``field`` names the offending path."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class UnknownKind(RegensimError, KeyError):
    pass


class ReplicateFailure(RegensimError, RuntimeError):
    """An error raised inside one replicate of an experiment; ``index`` identifies it."""

    def __init__(self, index, cause):
        super().__init__(f"replicate {index}: {type(cause).__name__}: {cause}")
        self.index = index
        self.cause = cause
