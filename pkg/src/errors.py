from __future__ import annotations


class KCutError(Exception):
    pass


# tensor_io

class MissingFile(KCutError, FileNotFoundError):
    pass


class BadMagic(KCutError, ValueError):
    pass


class UnsupportedDtype(KCutError, ValueError):
    pass


class FortranOrderUnsupported(KCutError, ValueError):
    pass


class TruncatedPayload(KCutError, ValueError):
    pass


class InvalidShape(KCutError, ValueError):
    pass


class LabelOverflow(KCutError, ValueError):
    pass


class IoFailure(KCutError, OSError):
    pass


# config

class MalformedJson(KCutError, ValueError):
    pass


class InvariantViolation(KCutError, ValueError):
    def __init__(self, field: str, message: str | None = None) -> None:
        self.field = field
        super().__init__(message or f"invalid value for {field}")


# numerics

class DegenerateAffinity(KCutError, ArithmeticError):
    pass


class NonFiniteInput(KCutError, ValueError):
    pass


class NonFiniteIntermediate(KCutError, ArithmeticError):
    pass


class NegativeCut(KCutError, ArithmeticError):
    pass


class EmptyClusterVolume(KCutError, ArithmeticError):
    pass


class ZeroRowNorm(KCutError, ArithmeticError):
    pass


# shapes and labels

class ShapeMismatch(KCutError, ValueError):
    pass


class LabelOutOfRange(KCutError, ValueError):
    pass


class NoPopulatedPartition(KCutError, ValueError):
    pass


class MissingDepthWithNonzeroWeight(KCutError, ValueError):
    pass


# evaluation and oracles

class NonFiniteCost(KCutError, ValueError):
    pass


class BackgroundClassRequired(KCutError, ValueError):
    pass


class TooLarge(KCutError, ValueError):
    pass


class InsufficientNodes(KCutError, ValueError):
    pass


class StageError(KCutError):
    def __init__(self, stage: str, cause: BaseException) -> None:
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage={stage}: {cause}")
