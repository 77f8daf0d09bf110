"""Exception types shared across the package."""


class DragsimError(Exception):
    """Base class for all errors raised by dragsim."""


class RangeError(DragsimError):
    """A parameter value lies outside its declared physical range."""

    def __init__(self, name, value, lo, hi):
        self.name = name
        self.value = value
        self.lo = lo
        self.hi = hi
        super().__init__(
            f"parameter '{name}' = {value} outside declared range [{lo}, {hi}]"
        )


class DataError(DragsimError):
    """Input data violates a value-level contract (non-finite, out of [0,1], ...)."""


class ShapeError(DragsimError):
    """Array shapes do not match the operation's contract."""


class ArgumentError(DragsimError):
    """An argument is structurally invalid (empty list, unknown id, ...)."""


class AssetError(DragsimError):
    """A required external asset (pretrained feature network) is unavailable."""


class ManifestError(DragsimError):
    """Base class for dataset manifest problems."""


class ManifestSchemaError(ManifestError):
    """Manifest JSON does not match the documented schema."""


class DanglingImageError(ManifestError):
    """A manifest entry references an image file that does not exist."""

    def __init__(self, index, path):
        self.index = index
        self.path = path
        super().__init__(f"entry {index}: image file not found: {path}")


class CheckpointError(DragsimError):
    """Base class for checkpoint file problems."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint was written by an incompatible format version."""


class CheckpointCorruptError(CheckpointError):
    """Checkpoint file is truncated or otherwise unreadable."""


class TrainingDiverged(DragsimError):
    """Training loss became non-finite; the last good checkpoint is retained."""

    def __init__(self, message, last_good_path=None):
        self.last_good_path = last_good_path
        super().__init__(message)


class EmptyPatchError(DragsimError):
    """Structure selection produced no member pixels."""
