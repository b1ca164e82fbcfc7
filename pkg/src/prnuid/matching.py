"""Decision path: correlate a questioned residual against fingerprint * image.

The correlation plane covers every cyclic shift; aligned, uncropped sensors
put the true peak at shift (0, 0), which is the default place to look.  The
signed score is the peak's squared value over the mean squared correlation
outside a small exclusion neighborhood around it, carrying the peak's sign so
anticorrelation cannot masquerade as a match.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DEFAULT_PCE_THRESHOLD, CameraFingerprint, Image, PceResult
from .denoise import DenoiseConfig
from .errors import DegenerateInput, DomainError
from .fingerprint import NuaConfig, image_residual, nua_suppress

ZERO_SHIFT_ONLY = "zero_shift_only"
FULL_PLANE = "full_plane"


@dataclass(frozen=True)
class MatchConfig:
    threshold: float = DEFAULT_PCE_THRESHOLD
    peak_search: str = ZERO_SHIFT_ONLY
    exclusion_radius: int = 5

    def __post_init__(self) -> None:
        if not np.isfinite(self.threshold):
            raise DomainError(f"threshold must be finite, got {self.threshold}")
        if self.peak_search not in (ZERO_SHIFT_ONLY, FULL_PLANE):
            raise DomainError(
                f"peak_search must be {ZERO_SHIFT_ONLY!r} or {FULL_PLANE!r}, got {self.peak_search!r}"
            )
        if self.exclusion_radius < 0:
            raise DomainError(f"exclusion_radius must be >= 0, got {self.exclusion_radius}")


class ResidualCorrelator:
    """One questioned residual, prepared once, correlated against many references.

    Scoring a trial correlates the same residual against every candidate
    fingerprint; holding the residual's spectrum avoids recomputing it per
    candidate while keeping the arithmetic identical to
    :func:`cross_correlation_plane`.
    """

    def __init__(self, questioned: np.ndarray):
        questioned = np.asarray(questioned, dtype=np.float64)
        if questioned.ndim != 2:
            raise DomainError(f"plane must be 2-D, got shape {questioned.shape}")
        centered = questioned - questioned.mean()
        self._norm = float(np.linalg.norm(centered))
        if self._norm == 0.0:
            raise DegenerateInput("cross-correlation of a zero-variance plane is undefined")
        self.shape = centered.shape
        self._spectrum = np.conj(np.fft.rfft2(centered))

    def plane(self, reference: np.ndarray) -> np.ndarray:
        reference = np.asarray(reference, dtype=np.float64)
        if reference.shape != self.shape:
            raise DomainError(f"shape mismatch: {self.shape} vs {reference.shape}")
        reference = reference - reference.mean()
        norm = self._norm * float(np.linalg.norm(reference))
        if norm == 0.0:
            raise DegenerateInput("cross-correlation of a zero-variance plane is undefined")
        return np.fft.irfft2(self._spectrum * np.fft.rfft2(reference), s=self.shape) / norm


def cross_correlation_plane(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Normalized circular cross-correlation of ``a`` against ``b`` at all shifts.

    Both inputs are mean-subtracted first; entry ``(dy, dx)`` correlates ``a``
    with ``b`` cyclically shifted back by ``(dy, dx)``, so identical inputs
    peak at (0, 0) with value 1.
    """
    return ResidualCorrelator(a).plane(b)


def _neighborhood_mask(shape: tuple[int, int], peak: tuple[int, int], radius: int) -> np.ndarray:
    rows = (np.arange(shape[0])[:, None] - peak[0]) % shape[0]
    cols = (np.arange(shape[1])[None, :] - peak[1]) % shape[1]
    span = 2 * radius + 1
    in_rows = (rows < span - radius) | (rows >= shape[0] - radius)
    in_cols = (cols < span - radius) | (cols >= shape[1] - radius)
    return in_rows & in_cols


def signed_pce(plane: np.ndarray, cfg: MatchConfig = MatchConfig()) -> PceResult:
    """Signed peak-to-correlation-energy score of a correlation plane."""
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2 or plane.size == 0:
        raise DomainError(f"plane must be a nonempty 2-D matrix, got shape {plane.shape}")
    h, w = plane.shape
    span = 2 * cfg.exclusion_radius + 1
    if span * span >= h * w or span > h or span > w:
        raise DomainError(
            f"exclusion neighborhood {span}x{span} does not fit a {h}x{w} plane"
        )
    if cfg.peak_search == ZERO_SHIFT_ONLY:
        peak_location = (0, 0)
    else:
        peak_location = np.unravel_index(int(np.abs(plane).argmax()), plane.shape)
        peak_location = (int(peak_location[0]), int(peak_location[1]))
    peak = float(plane[peak_location])
    excluded = _neighborhood_mask(plane.shape, peak_location, cfg.exclusion_radius)
    off_peak = plane[~excluded]
    energy = float(np.mean(off_peak * off_peak))
    if energy == 0.0:
        raise DegenerateInput("no correlation energy outside the peak neighborhood")
    pce = float(np.sign(peak)) * peak * peak / energy
    return PceResult(
        pce=pce,
        peak_location=peak_location,
        correlation_peak=peak,
        decision=pce > cfg.threshold,
        threshold=cfg.threshold,
    )


def match(
    image: Image,
    fp: CameraFingerprint,
    denoise_cfg: DenoiseConfig = DenoiseConfig(),
    nua_cfg: NuaConfig = NuaConfig(),
    cfg: MatchConfig = MatchConfig(),
) -> PceResult:
    """Score one questioned image against one camera fingerprint.

    No resampling happens here: mismatched shapes are an error, because
    silently cropping or scaling would change what the score means.
    """
    if image.shape != fp.shape:
        raise DomainError(
            f"image shape {image.shape} does not match fingerprint shape {fp.shape}"
        )
    residual = image_residual(image, denoise_cfg).values
    questioned = nua_suppress(residual, nua_cfg)
    reference = fp.values * image.pixels
    plane = cross_correlation_plane(questioned, reference)
    return signed_pce(plane, cfg)
