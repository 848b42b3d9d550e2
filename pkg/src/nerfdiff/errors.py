"""Exception hierarchy shared by every subpackage."""


class NerfDiffError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(NerfDiffError, ValueError):
    """A precondition on arguments was violated."""


class DimensionError(ContractError):
    """Operand shapes are incompatible."""


class DomainError(NerfDiffError, ArithmeticError):
    """An op was evaluated outside its mathematical domain."""


class NumericError(NerfDiffError, FloatingPointError):
    """A NaN or infinity appeared where only finite values are allowed."""


class OptimizerError(NumericError):
    """A parameter received a non-finite gradient."""


class TrainingError(NumericError):
    """Training diverged."""


class SamplingError(NumericError):
    """Reverse diffusion produced a non-finite state."""


class SizeError(ContractError):
    """An exact enumeration would be too large."""


class ConditioningError(ContractError):
    """Conditioning on an event of probability zero."""


class PreconditionError(ContractError):
    """A structural precondition on a model does not hold."""


class StageError(NerfDiffError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
