"""Exception hierarchy shared by every uqaudit module."""


class UQAuditError(Exception):
    """Base class for all errors raised by uqaudit."""


class ValidationError(UQAuditError, ValueError):
    """An input violates a documented precondition."""


class SchemaError(ValidationError):
    """A declared column is missing or the column schema is inconsistent."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class ParseError(ValidationError):
    """A CSV cell could not be parsed."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class ConfigError(ValidationError):
    """The run configuration is invalid."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class OOBError(UQAuditError):
    """Strict out-of-bag mode found training samples with no out-of-bag member."""

    def __init__(self, samples):
        self.samples = list(samples)
        super().__init__(
            f"{len(self.samples)} training sample(s) have no out-of-bag member: {self.samples}"
        )


class RecordLoadError(UQAuditError):
    """A persisted run record could not be read."""

    def __init__(self, path, reason):
        self.path = path
        super().__init__(f"cannot load record {path}: {reason}")


class MemberFitError(UQAuditError):
    """Fitting one member of an ensemble or leave-one-out set failed."""

    def __init__(self, index, cause):
        self.index = index
        self.cause = cause
        super().__init__(f"member {index}: {cause}")
