class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConstantArrayError(DomainError):
    """Correlation is undefined because one side has zero variance."""


class FormatError(ValueError):
    """A binary file failed validation; ``field`` names the offending header field."""

    def __init__(self, field: str, message: str, path=None):
        self.field = field
        self.path = path
        where = f"{path}: " if path is not None else ""
        super().__init__(f"{where}{field}: {message}")
