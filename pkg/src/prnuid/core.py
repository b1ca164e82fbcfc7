"""Domain types shared by every stage of the identification pipeline.

Images are single-channel intensity matrices in [0, 255], held as float64 from
the moment they are decoded; multi-channel inputs are reduced to luminance at
decode time (see :mod:`prnuid.dataset`).  All types are treated as immutable
once constructed and are safe to share across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, UnclassifiableExposure

EXPOSURE_TYPES = ("Auto", "Over", "Under")

MIN_IMAGE_SIDE = 64

#: Decision threshold the identification pipeline defaults to.
DEFAULT_PCE_THRESHOLD = 60.0

#: Multipliers applied to the auto-exposure (ISO, exposure time) pair when a
#: capture is deliberately over- or under-exposed.
OVER_ISO_RATIO, OVER_EXP_RATIO = 3.0, 2.0
UNDER_ISO_RATIO, UNDER_EXP_RATIO = 0.5, 0.5


@dataclass(frozen=True)
class ImageMeta:
    """Acquisition metadata carried alongside each image."""

    camera_id: str
    camera_model: str
    scene_id: str
    exposure_type: str
    iso: float
    exposure_time_s: float
    f_number: float

    def __post_init__(self) -> None:
        if self.exposure_type not in EXPOSURE_TYPES:
            raise DomainError(
                f"exposure_type must be one of {EXPOSURE_TYPES}, got {self.exposure_type!r}"
            )
        for name in ("iso", "exposure_time_s", "f_number"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be a positive finite number, got {value!r}")


@dataclass(frozen=True)
class Image:
    """A decoded intensity plane plus its acquisition metadata."""

    pixels: np.ndarray
    meta: ImageMeta

    def __post_init__(self) -> None:
        pixels = np.asarray(self.pixels, dtype=np.float64)
        if pixels.ndim != 2:
            raise DomainError(f"pixels must be 2-D, got shape {pixels.shape}")
        h, w = pixels.shape
        if h < MIN_IMAGE_SIDE or w < MIN_IMAGE_SIDE:
            raise DomainError(
                f"image must be at least {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}, got {h}x{w}"
            )
        if not np.all(np.isfinite(pixels)):
            raise DomainError("pixels contain non-finite values")
        lo, hi = float(pixels.min()), float(pixels.max())
        if lo < 0.0 or hi > 255.0:
            raise DomainError(f"pixel values must lie in [0, 255], got [{lo}, {hi}]")
        object.__setattr__(self, "pixels", pixels)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


@dataclass(frozen=True)
class NoiseResidual:
    """High-frequency residual of one image after scene suppression."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DomainError(f"residual must be 2-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("residual contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


#: Row and column means of a fingerprint must vanish to this tolerance; the
#: zero-mean suppression stage guarantees it for estimated fingerprints.
FINGERPRINT_MEAN_TOL = 1e-9


@dataclass(frozen=True)
class CameraFingerprint:
    """Per-sensor gain pattern estimated from several images of one camera.

    ``mask`` marks pixels that no contributing image could inform (saturated in
    every image, or zero intensity throughout); their value is fixed at 0.
    """

    values: np.ndarray
    n_images: int
    mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DomainError(f"fingerprint must be 2-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("fingerprint contains non-finite values")
        if self.n_images < 1:
            raise DomainError(f"n_images must be positive, got {self.n_images}")
        mask = self.mask
        if mask is None:
            mask = np.zeros(values.shape, dtype=bool)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != values.shape:
            raise DomainError("mask shape must match fingerprint shape")
        row_means = np.abs(values.mean(axis=1))
        col_means = np.abs(values.mean(axis=0))
        if row_means.max(initial=0.0) > FINGERPRINT_MEAN_TOL or col_means.max(initial=0.0) > FINGERPRINT_MEAN_TOL:
            raise DomainError(
                "fingerprint row/column means exceed the zero-mean tolerance "
                f"({FINGERPRINT_MEAN_TOL}); run the suppression stage first"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class PceResult:
    """Signed peak-to-correlation-energy score and the decision it implies."""

    pce: float
    peak_location: tuple[int, int]
    correlation_peak: float
    decision: bool
    threshold: float

    def __post_init__(self) -> None:
        if self.decision != (self.pce > self.threshold):
            raise DomainError("decision must equal (pce > threshold)")
        if self.correlation_peak != 0.0 and np.sign(self.pce) != np.sign(self.correlation_peak):
            raise DomainError("pce must carry the sign of the correlation peak")


@dataclass(frozen=True)
class ExposureValue:
    """Light on the sensor, in stops, relative to the ISO-100 exposure value."""

    ev_rel_100: float


def exposure_value_rel(meta: ImageMeta, t_ref_s: float | None = None) -> ExposureValue:
    """Exposure value of ``meta`` relative to ISO 100, in stops.

    ``t_ref_s`` is the auto-exposure time of the same scene when known; with no
    reference, times are counted against 1 second.  The result is
    ``log2(iso / 100) + log2(exposure_time_s / t_ref_s)``, so it grows by one
    stop per doubling of either the ISO or the light-gathering time.
    """
    if t_ref_s is None:
        t_ref_s = 1.0
    if not (math.isfinite(t_ref_s) and t_ref_s > 0):
        raise DomainError(f"reference exposure time must be positive, got {t_ref_s!r}")
    if meta.iso <= 0 or meta.exposure_time_s <= 0:
        raise DomainError("iso and exposure_time_s must be positive")
    ev = math.log2(meta.iso / 100.0) + math.log2(meta.exposure_time_s / t_ref_s)
    return ExposureValue(ev_rel_100=ev)


def _ratio_matches(actual: float, expected: float, rel_tol: float) -> bool:
    return abs(actual - expected) <= rel_tol * expected


def classify_exposure_offset(
    auto: ImageMeta, candidate: ImageMeta, rel_tol: float = 0.10
) -> str:
    """Label ``candidate`` as Auto/Over/Under from its settings relative to ``auto``.

    Over-exposed captures triple the ISO and double the exposure time;
    under-exposed ones halve both.  Recorded values may deviate slightly from
    the programmed ones, hence the relative tolerance.
    """
    iso_ratio = candidate.iso / auto.iso
    exp_ratio = candidate.exposure_time_s / auto.exposure_time_s
    if _ratio_matches(iso_ratio, 1.0, rel_tol) and _ratio_matches(exp_ratio, 1.0, rel_tol):
        return "Auto"
    if _ratio_matches(iso_ratio, OVER_ISO_RATIO, rel_tol) and _ratio_matches(
        exp_ratio, OVER_EXP_RATIO, rel_tol
    ):
        return "Over"
    if _ratio_matches(iso_ratio, UNDER_ISO_RATIO, rel_tol) and _ratio_matches(
        exp_ratio, UNDER_EXP_RATIO, rel_tol
    ):
        return "Under"
    raise UnclassifiableExposure(
        f"ratios (iso={iso_ratio:.3f}, exp={exp_ratio:.3f}) match no exposure pattern"
    )
