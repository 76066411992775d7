"""Exception hierarchy shared across the toolkit."""


class HapitraceError(Exception):
    """Base class for all toolkit errors."""


class HeaderSyntaxError(HapitraceError):
    """Raised when header text violates the restricted declaration grammar."""

    def __init__(self, message, line, column):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class ModelError(HapitraceError):
    """Semantic problem in an API model (duplicate names, bad references)."""


class ModelSchemaError(ModelError):
    """YAML document does not conform to the API-model schema."""

    def __init__(self, message, path=""):
        self.path = path
        super().__init__(f"{message} (at {path})" if path else message)


class MetaParamError(ModelError):
    """Meta-parameter overlay references unknown names or conflicts."""


class RegistryError(HapitraceError):
    """Schema registry construction or lookup failure."""


class IncompleteModelError(RegistryError):
    """Hybrid generation requested but profiled functions lack directions."""

    def __init__(self, offenders):
        self.offenders = list(offenders)
        super().__init__(
            "hybrid scenario needs directions on profiled functions: "
            + ", ".join(self.offenders)
        )


class FingerprintMismatchError(HapitraceError):
    """Registry or report fingerprint does not match the expected model."""


class TraceError(HapitraceError):
    """Base for trace reading/writing failures."""


class TraceDirectoryError(TraceError):
    """Trace directory missing, non-empty, or unwritable."""


class PayloadMismatchError(TraceError):
    """Event payload does not match its schema (arity or field kinds)."""


class UnknownSchemaError(TraceError):
    """Event references a schema id absent from the registry."""


class CorruptRecordError(TraceError):
    """Undecodable record in a stream file, with its location."""

    def __init__(self, message, stream, offset):
        self.stream = stream
        self.offset = offset
        super().__init__(f"{message} (stream {stream}, byte offset {offset})")


class MuxOrderingError(HapitraceError):
    """An input stream handed non-monotone timestamps to the muxer."""

    def __init__(self, stream, index):
        self.stream = stream
        self.index = index
        super().__init__(
            f"stream {stream} violates timestamp monotonicity at message {index}"
        )


class PipelineError(HapitraceError):
    """Invalid pipeline wiring or a sink failure."""


class UnknownFunctionError(HapitraceError):
    """Dispatch of a function name absent from the dispatch table."""


class WorkloadError(HapitraceError):
    """Workload document fails validation or the harness misuses it."""
