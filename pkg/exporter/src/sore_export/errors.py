"""Exception hierarchy; the CLI maps each class onto an exit code."""


class ExportError(Exception):
    pass


class DataError(ExportError):
    """Bad input: malformed corpus records or feature files."""


class ModelError(ExportError):
    """Encoder problems: model not loadable or missing expected outputs."""
