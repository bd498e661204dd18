"""Exception hierarchy shared by all layers."""


class VerkleError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgument(VerkleError, ValueError):
    pass


class Infeasible(VerkleError, ValueError):
    """No specialization plan exists for the requested parameters."""


class DecodeError(VerkleError, ValueError):
    pass


class EncodeError(VerkleError, ValueError):
    pass


class CorruptionError(VerkleError):
    """Persisted state is inconsistent (dangling id, kind mismatch, bad checksum)."""


class NotFound(VerkleError, KeyError):
    pass


class StorageError(VerkleError, OSError):
    pass


class GuardError(VerkleError):
    """A node-manager guard contract was violated."""
