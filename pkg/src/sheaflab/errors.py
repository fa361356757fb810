"""Exception hierarchy shared across the package."""


class SheafLabError(Exception):
    """Base class for all library errors."""


class CycleError(SheafLabError):
    pass


class NotGradable(SheafLabError):
    pass


class DimensionError(SheafLabError):
    pass


class UnknownElement(SheafLabError, KeyError):
    pass


class NonpositiveWeight(SheafLabError, ValueError):
    pass


class NotPartition(SheafLabError, ValueError):
    pass


class DecompositionError(SheafLabError, ValueError):
    pass


class BaseMismatch(SheafLabError, ValueError):
    pass


class NotCellPoset(SheafLabError):
    pass


class RankError(SheafLabError):
    pass


class NotSymmetric(SheafLabError, ValueError):
    pass


class StepTooLarge(SheafLabError, ValueError):
    pass


class NotCycles(SheafLabError, ValueError):
    pass


class RankDeficient(SheafLabError):
    pass


class DegenerateInput(SheafLabError, ValueError):
    pass


class HypothesisViolated(SheafLabError):
    pass


class NotContractible(SheafLabError):
    pass


class ShapeError(SheafLabError, ValueError):
    pass


class MissingFeatures(SheafLabError, KeyError):
    pass


class TapeMissing(SheafLabError, RuntimeError):
    pass


class NonFiniteLoss(SheafLabError, FloatingPointError):
    pass


class ClassViolation(SheafLabError, ValueError):
    pass


class HoleTooLarge(SheafLabError, ValueError):
    pass


class StuckWalk(SheafLabError, RuntimeError):
    pass


class IsolatedTerminal(SheafLabError, ValueError):
    pass


class SchemaVersionMismatch(SheafLabError, ValueError):
    pass


class ParseError(SheafLabError, ValueError):
    pass


class ValidationError(SheafLabError, ValueError):
    pass
