"""Exception hierarchy.

Input/schema problems derive from :class:`InputError` (CLI exit code 2);
failures inside a pipeline stage are wrapped in :class:`StageError`
(CLI exit code 3).
"""


class OsoddError(Exception):
    pass


class InputError(OsoddError):
    pass


class UnknownTask(InputError, ValueError):
    pass


class InvalidTag(InputError, ValueError):
    pass


class MissingEmbedding(InputError, KeyError):
    def __init__(self, missing):
        self.missing = sorted(missing)
        shown = ", ".join(self.missing[:10])
        more = f" (+{len(self.missing) - 10} more)" if len(self.missing) > 10 else ""
        super().__init__(f"no embedding for object ids: {shown}{more}")

    def __str__(self):
        return self.args[0]


class DuplicateId(InputError, ValueError):
    pass


class IoFailure(InputError, OSError):
    pass


class SchemaMismatch(InputError, ValueError):
    pass


class DimensionMismatch(InputError, ValueError):
    pass


class ParseError(InputError, ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class UnknownClassName(InputError, KeyError):
    def __str__(self):
        return self.args[0]


class ConfigError(InputError, ValueError):
    pass


class InvalidClass(OsoddError, IndexError):
    pass


class EmptyBuffer(OsoddError, ValueError):
    pass


class TooFewPoints(OsoddError, ValueError):
    pass


class InsufficientKnownClasses(OsoddError, ValueError):
    pass


class StageError(OsoddError):
    """An error raised inside a named pipeline stage."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
