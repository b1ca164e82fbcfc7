"""Exception hierarchy shared by all prnuid modules."""


class PrnuError(Exception):
    """Base class for every error raised by this package."""


class DomainError(PrnuError, ValueError):
    """An input violates a documented precondition."""


class UnclassifiableExposure(DomainError):
    """ISO/exposure-time ratios match neither the auto, over, nor under pattern."""


class DegenerateInput(PrnuError):
    """An operation received data it cannot score (zero-variance plane, no off-peak energy)."""


class InsufficientImages(DomainError):
    """Fewer images available than a partition or estimate requires."""


class ManifestError(PrnuError):
    """Base class for manifest loading problems."""


class ManifestNotFound(ManifestError):
    """The manifest file itself does not exist."""


class ManifestSchemaError(ManifestError):
    """The manifest file does not parse as the documented delimited-text schema."""


class DuplicateEntry(ManifestError):
    """Two manifest rows share the same (camera_id, scene_id, exposure_type) triple."""


class MissingAsset(ManifestError):
    """A manifest row references an image file that does not exist."""
