"""Exception types shared across the package."""


class EdgegenError(Exception):
    """Base class for all package errors."""


# --- protocol ---

class ProtocolError(EdgegenError):
    """Malformed or inconsistent wire data."""


class FieldRangeError(ProtocolError, ValueError):
    """A value is outside its declared field range."""


class FramingError(ProtocolError):
    """Payload violates the packing rules (length, pad bits)."""


class NotAFrameError(FramingError):
    """Bytes do not start with a valid frame header."""


class CorruptFrameError(FramingError):
    """Frame header is valid but the content fails verification."""


class IncompleteFrameError(FramingError):
    """Buffer ends before the declared frame length."""


# --- vision ---

class ParameterError(EdgegenError, ValueError):
    """An operation parameter is out of its allowed range."""


# --- simnode ---

class ScenarioError(EdgegenError):
    """Scenario file cannot be parsed or violates an invariant."""


class TransportError(EdgegenError):
    """Network sink unreachable after bounded retry."""


# --- gateway ---

class NotFoundError(EdgegenError):
    """Referenced node/job/image does not exist."""


class PreconditionError(EdgegenError):
    """Operation requirements not met (e.g. no image received yet)."""


class ConfigError(EdgegenError):
    """Invalid or unknown configuration value."""


class StorageError(EdgegenError):
    """Session store cannot be read or written."""


# --- backends ---

class BackendError(EdgegenError):
    """Generation or LLM backend failed (transport, timeout, bad reply)."""


class ContractViolationError(BackendError):
    """Backend reply violates the HTTP contract (e.g. wrong dimensions)."""
