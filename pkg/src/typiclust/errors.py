"""Exception and warning types.

Every error carries a stable ``code`` (used in the CLI's machine-readable
error JSON) and an ``exit_code`` (2 for validation, 3 for numerical failure).
"""

from __future__ import annotations

from typing import Any


class TypiclustError(Exception):
    code = "error"
    exit_code = 2

    def __init__(self, message: str = "", **details: Any):
        super().__init__(message or self.code)
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"error": self.code, "message": str(self)}
        if self.details:
            out["details"] = self.details
        return out


class ValidationError(TypiclustError):
    code = "ValidationError"


class NumericalError(TypiclustError):
    code = "NumericalError"
    exit_code = 3


# --- embeddings / pool -------------------------------------------------------

class NonFiniteEntry(ValidationError):
    code = "NonFiniteEntry"

    def __init__(self, row: int, col: int):
        super().__init__(f"non-finite entry at row {row}, column {col}", row=row, col=col)
        self.row, self.col = row, col


class DuplicateId(ValidationError):
    code = "DuplicateId"

    def __init__(self, id_: int):
        super().__init__(f"duplicate example id {id_}", id=id_)
        self.id = id_


class LabelOutOfRange(ValidationError):
    code = "LabelOutOfRange"

    def __init__(self, row: int, value: int | None = None):
        super().__init__(f"label at row {row} out of range", row=row, value=value)
        self.row = row


class ZeroNormRow(ValidationError):
    code = "ZeroNormRow"

    def __init__(self, row: int):
        super().__init__(f"row {row} has (near) zero norm", row=row)
        self.row = row


class EmptyPool(ValidationError):
    code = "EmptyPool"


class InvalidConfig(ValidationError):
    code = "InvalidConfig"


# --- typicality / clustering -------------------------------------------------

class SubsetTooSmall(ValidationError):
    code = "SubsetTooSmall"


class EmptyCandidates(ValidationError):
    code = "EmptyCandidates"


class KTooLarge(ValidationError):
    code = "KTooLarge"


class BatchTooSmall(ValidationError):
    code = "BatchTooSmall"


# --- strategies / evaluation -------------------------------------------------

class MissingScores(ValidationError):
    code = "MissingScores"

    def __init__(self, index: int | None = None, message: str = ""):
        super().__init__(message or f"no score row for index {index}", index=index)
        self.index = index


class ClassCountMismatch(ValidationError):
    code = "ClassCountMismatch"


class EmptyLabeledSet(ValidationError):
    code = "EmptyLabeledSet"


# --- theory / linear mixture -------------------------------------------------

class BiasOutOfRange(ValidationError):
    code = "BiasOutOfRange"


class DerivativeUnavailable(NumericalError):
    code = "DerivativeUnavailable"


class DegenerateData(NumericalError):
    code = "DegenerateData"


class RadiusTooLarge(NumericalError):
    code = "RadiusTooLarge"


# --- file formats ------------------------------------------------------------

class FormatError(ValidationError):
    code = "FormatError"


class BadMagic(FormatError):
    code = "BadMagic"


class TruncatedPayload(FormatError):
    code = "TruncatedPayload"


class TrailingBytes(FormatError):
    code = "TrailingBytes"


class CountMismatch(FormatError):
    code = "CountMismatch"


class NonStochasticRow(FormatError):
    code = "NonStochasticRow"

    def __init__(self, row: int, total: float):
        super().__init__(f"score row {row} sums to {total!r}", row=row, total=total)
        self.row = row


# --- warnings ----------------------------------------------------------------

class CoincidentClusterWarning(UserWarning):
    """All k nearest neighbours of a point sit at distance zero."""


class RadiusTooLargeWarning(UserWarning):
    pass
