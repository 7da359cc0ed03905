"""Shared exception types."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration value."""


class ContractError(ValueError):
    """A call violated a documented precondition (lengths, alignment, head kind)."""


class ShapeError(ValueError):
    """Tensor primitive applied to incompatible shapes."""


class LengthError(ValueError):
    """Sequence exceeds the model's maximum length."""


class NumericError(ArithmeticError):
    """Non-finite value encountered where finite math is required."""


class DataError(ValueError):
    """Problem with a dataset file or record."""


class MalformedRecordError(DataError):
    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class EmptyDatasetError(DataError):
    pass


class CategoryInfeasibleError(ValueError):
    """A negative-example category cannot be synthesized from this dataset."""
