"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for all tissuelens errors."""


class SchemaError(EngineError):
    """Malformed metadata, CSV header, or request body; message carries the field path."""


class IntegrityError(EngineError):
    """Stored data is inconsistent (tile size mismatch, CSV/mask ID mismatch, truncated store)."""


class BoundsError(EngineError):
    """Coordinates outside the valid domain (region outside plane, point outside lens)."""


class ChannelNotFoundError(EngineError):
    """Channel name not present in the dataset."""


class CapabilityError(EngineError):
    """Operation requires a capability the dataset lacks (e.g. mask reads without a mask)."""


class DegenerateRangeError(EngineError):
    """A channel has no usable value range (fewer than two distinct values)."""


class DensityError(EngineError):
    """Synthetic generation cannot place the requested objects without overlap."""


class StoreVersionError(EngineError):
    """Snapshot store schema version not supported; explicit migration required."""


class RestoreError(EngineError):
    """Snapshot cannot be restored against the open dataset."""
