"""Exception types shared across the package."""


class PromptloopError(Exception):
    """Base class for all promptloop errors."""


class ConfigError(PromptloopError):
    """Invalid or incomplete configuration."""


class BackendUnavailableError(PromptloopError):
    """Backend could not be reached after all retry attempts."""


class EmptyResponseError(PromptloopError):
    """A chat backend returned an empty completion."""


class ProtocolError(PromptloopError):
    """The backend answered with a malformed or inconsistent payload."""


class DegenerateInputError(PromptloopError):
    """An input carries no usable signal (empty text, zero embedding)."""


class DimensionMismatchError(PromptloopError):
    """Vector operands disagree on dimension."""


class CorpusError(PromptloopError):
    """Reference corpus file is unreadable, malformed, or empty."""


class MutationRejectedError(PromptloopError):
    """The mutator produced no usable rewrite; the candidate is unchanged."""


class LogError(PromptloopError):
    """Event log violates ordering, format, or replay constraints."""


class DigestMismatchError(LogError):
    """Resume attempted with a config or corpus that does not match the log."""


class RunAbortedError(PromptloopError):
    """A backend failure aborted the run mid-flight; the log remains resumable."""
