"""Exception hierarchy.

Every error raised by the package derives from :class:`ClaimTreesError`.
The four intermediate classes map onto the CLI exit codes (config 2,
data 3, fit 4, query 5).
"""


class ClaimTreesError(ValueError):
    exit_code = 1


class ConfigError(ClaimTreesError):
    exit_code = 2


class DataError(ClaimTreesError):
    exit_code = 3


class FitError(ClaimTreesError):
    exit_code = 4


class QueryError(ClaimTreesError):
    exit_code = 5


# --- configuration -----------------------------------------------------------

class InvalidConfig(ConfigError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"invalid value for {field!r}: {message}")


class InvalidSchema(ConfigError):
    pass


# --- data loading and preparation -------------------------------------------

class EmptyFile(DataError):
    pass


class UnknownColumn(DataError):
    def __init__(self, column, row=0):
        self.column, self.row = column, row
        super().__init__(f"unknown column {column!r} (row {row})")


class MissingColumn(DataError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"missing column {column!r}")


class UnknownCategoryLevel(DataError):
    def __init__(self, value, column, row):
        self.value, self.column, self.row = value, column, row
        super().__init__(f"unknown level {value!r} in column {column!r} at row {row}")


class UnparsableNumber(DataError):
    def __init__(self, value, column, row):
        self.value, self.column, self.row = value, column, row
        super().__init__(f"cannot parse {value!r} as a number in column {column!r} at row {row}")


class MissingValue(DataError):
    def __init__(self, column, row):
        self.column, self.row = column, row
        super().__init__(f"missing value in column {column!r} at row {row}")


class NonPositiveValuation(DataError):
    pass


class NonPositiveResponse(DataError):
    def __init__(self, row):
        self.row = row
        super().__init__(f"response at row {row} is not strictly positive")


class EmptyResult(DataError):
    pass


class EmptyPartition(DataError):
    pass


class SchemaMismatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class EmptyInput(DataError):
    pass


# --- fitting -----------------------------------------------------------------

class EmptyDataset(FitError):
    pass


class InvalidMtry(FitError):
    pass


class NonFiniteObjective(FitError):
    pass


class RankDeficient(FitError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__("design matrix is rank deficient; collinear columns: " + ", ".join(self.columns))


class NotApplicable(FitError):
    pass


class NoOobRows(FitError):
    pass


# --- queries on fitted models -------------------------------------------------

class UnknownFeature(QueryError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"unknown feature {name!r}")


class DuplicateFeature(QueryError):
    pass


class InvalidRepeats(QueryError):
    pass
