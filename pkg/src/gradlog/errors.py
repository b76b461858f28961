"""Engine error taxonomy.

Every error carries a stable machine-readable ``code`` so the CLI can print a
single ``<code>: <message>`` line and exit nonzero.
"""


class GradlogError(Exception):
    """Base class for all engine errors."""

    code = "engine-error"

    def __str__(self) -> str:
        return super().__str__()


class ParseError(GradlogError):
    code = "syntax-error"

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)
        self.line = line
        self.column = column


class ProgramError(GradlogError):
    """Structurally invalid program (bad AD sums, duplicate model bindings, ...)."""

    code = "program-error"


class DatasetError(GradlogError):
    code = "dataset-error"


class InstantiationError(GradlogError):
    """A builtin or neural call saw insufficiently instantiated arguments."""

    code = "instantiation-error"


class ZeroDivisorError(GradlogError):
    code = "zero-divisor"


class UnstratifiedError(GradlogError):
    code = "unstratified-negation"


class CyclicProgramError(GradlogError):
    code = "cyclic-program"


class DepthLimitError(GradlogError):
    code = "depth-limit"


class BudgetError(GradlogError):
    """A configurable work budget (circuit nodes, ground rules) was exceeded."""

    code = "budget-exceeded"


class DegenerateAdError(GradlogError):
    code = "degenerate-ad"


class UnknownModelError(GradlogError):
    code = "unknown-model"


class EncodingError(GradlogError):
    """Input terms could not be encoded for a neural model."""

    code = "encoding-error"


class BridgeError(GradlogError):
    code = "bridge-error"


class LabelError(GradlogError):
    """A circuit variable had no label during evaluation."""

    code = "missing-label"
