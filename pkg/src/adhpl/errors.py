"""Exception types raised across the package."""


class AdhplError(Exception):
    """Base class for all package errors."""


class ParseError(AdhplError):
    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class DuplicateEntryError(AdhplError):
    def __init__(self, row_id, col_id, line_no=None):
        where = f" (line {line_no})" if line_no is not None else ""
        super().__init__(f"duplicate entry for pair ({row_id}, {col_id}){where}")
        self.pair = (row_id, col_id)


class ConfigError(AdhplError):
    pass


class SplitError(AdhplError):
    pass


class GenerationError(AdhplError):
    pass


class EvaluationError(AdhplError):
    pass


class EmptyGroupError(AdhplError):
    """A row or column group has no known training entries."""

    def __init__(self, kind, index):
        super().__init__(f"{kind} group {index} has no training entries")
        self.kind = kind
        self.index = index


class DivergenceError(AdhplError):
    pass
