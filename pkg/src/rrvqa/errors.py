"""Exception hierarchy. Everything raised on bad input derives from VqaError."""


class VqaError(ValueError):
    pass


class Y4MParseError(VqaError):
    pass


class TruncatedFileError(VqaError):
    pass


class UnsupportedFormatError(VqaError):
    pass


class AlignmentError(VqaError):
    pass


class InputTooSmallError(VqaError):
    pass


class InternalConsistencyError(VqaError):
    pass


class EmptyInputError(VqaError):
    pass


class UndefinedCorrelationError(VqaError):
    pass


class DataError(VqaError):
    pass


class ModelFormatError(VqaError):
    pass


class ConfigurationError(VqaError):
    pass


class SchemaError(VqaError):
    pass
