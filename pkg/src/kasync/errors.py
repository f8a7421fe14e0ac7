"""Exception hierarchy shared by all kasync modules."""


class KasyncError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(KasyncError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class UsageError(KasyncError):
    """A caller violated an operation precondition."""


class NumericError(KasyncError):
    """Non-finite value produced during a computation."""

    def __init__(self, message, iteration=None, layer=None):
        self.iteration = iteration
        self.layer = layer
        parts = [message]
        if layer is not None:
            parts.append(f"layer={layer}")
        if iteration is not None:
            parts.append(f"iteration={iteration}")
        super().__init__(" ".join(parts))


class FormatError(KasyncError):
    """Malformed binary input; ``offset`` is the byte position of the fault."""

    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


class SamplingError(KasyncError):
    """A sampling request cannot be satisfied by the source data."""


class InternalError(KasyncError):
    """Broken internal invariant, e.g. dispatching a busy client."""
