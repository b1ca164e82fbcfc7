"""Per-image residuals and the maximum-likelihood camera fingerprint.

The camera fingerprint is the ratio ``sum_i W_i * I_i / sum_i I_i^2`` over a
set of same-shape images, with saturated pixels excluded per image, passed
through the non-unique-artifact (NUA) suppression stage.  Suppression runs
zero-mean first (row means, then column means) and a frequency-domain Wiener
attenuation second; magnitude-outlier bins, which carry shared model/processing
structure rather than the per-sensor pattern, are pulled toward zero while
typical bins pass unchanged.

Fingerprint files are a flat binary container::

    magic   8 bytes   b"PRNUFP01"
    height  uint32 LE
    width   uint32 LE
    n_images uint32 LE
    meta_len uint32 LE
    values  height*width float64 LE, row-major
    mask    ceil(height*width / 8) bytes, row-major bits (numpy packbits order)
    meta    meta_len bytes, UTF-8 JSON object

The same layout is written and read by :func:`save_fingerprint` and
:func:`load_fingerprint`.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter

from .core import CameraFingerprint, Image, NoiseResidual
from .denoise import DenoiseConfig, denoise
from .errors import DomainError, MissingAsset

FINGERPRINT_MAGIC = b"PRNUFP01"
_HEADER = struct.Struct("<8sIIII")


@dataclass(frozen=True)
class NuaConfig:
    """Which suppression stages run, and the noise level the DFT stage assumes.

    ``wiener_dft_sigma`` of ``None`` means: estimate it from the matrix's own
    global standard deviation.
    """

    zero_mean: bool = True
    wiener_dft: bool = True
    wiener_dft_sigma: float | None = None
    dft_window_sizes: tuple[int, ...] = (3, 5, 7, 9)

    def __post_init__(self) -> None:
        if not (self.zero_mean or self.wiener_dft):
            raise DomainError("at least one suppression stage must be enabled")
        if self.wiener_dft_sigma is not None and not self.wiener_dft_sigma > 0:
            raise DomainError("wiener_dft_sigma must be positive when given")


@dataclass(frozen=True)
class SaturationRule:
    """When a pixel counts as saturated and is dropped from the estimate.

    A pixel is flagged iff it equals the image maximum, that maximum is at
    least ``intensity_floor``, and (when required) at least one neighbor holds
    the same value.  ``neighbors`` selects 4- or 8-connectivity.
    """

    intensity_floor: int = 250
    require_equal_neighbor: bool = True
    neighbors: int = 4

    def __post_init__(self) -> None:
        if not 0 < self.intensity_floor <= 255:
            raise DomainError(f"intensity_floor must be in (0, 255], got {self.intensity_floor}")
        if self.neighbors not in (4, 8):
            raise DomainError(f"neighbors must be 4 or 8, got {self.neighbors}")


def image_residual(image: Image, cfg: DenoiseConfig = DenoiseConfig()) -> NoiseResidual:
    """Noise residual of one image: pixels minus their denoised estimate."""
    return NoiseResidual(values=image.pixels - denoise(image.pixels, cfg))


def _zero_mean_rows_cols(matrix: np.ndarray) -> np.ndarray:
    out = matrix - matrix.mean(axis=1, keepdims=True)
    out -= out.mean(axis=0, keepdims=True)
    return out


def _wiener_dft(matrix: np.ndarray, cfg: NuaConfig) -> np.ndarray:
    sigma = cfg.wiener_dft_sigma
    if sigma is None:
        sigma = float(matrix.std(ddof=1)) if matrix.size > 1 else 0.0
    if sigma == 0.0:
        return matrix
    noise_var = sigma * sigma
    h, w = matrix.shape
    spectrum = np.fft.fft2(matrix)
    # Normalized so a white matrix has flat E[mag^2] equal to its variance.
    mag = np.abs(spectrum) / np.sqrt(h * w)
    signal_var = None
    for window in cfg.dft_window_sizes:
        est = np.maximum(uniform_filter(mag * mag, size=window, mode="wrap") - noise_var, 0.0)
        signal_var = est if signal_var is None else np.minimum(signal_var, est)
    gain = noise_var / (signal_var + noise_var)
    return np.real(np.fft.ifft2(spectrum * gain))


def nua_suppress(matrix: np.ndarray, cfg: NuaConfig = NuaConfig()) -> np.ndarray:
    """Remove non-unique artifacts from a residual or fingerprint matrix."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise DomainError(f"matrix must be 2-D, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise DomainError("matrix contains non-finite values")
    out = matrix
    if cfg.zero_mean:
        out = _zero_mean_rows_cols(out)
    if cfg.wiener_dft:
        out = _wiener_dft(out, cfg)
    return out


def saturation_mask(image: Image, rule: SaturationRule = SaturationRule()) -> np.ndarray:
    """Boolean map of saturated pixels to exclude from fingerprint estimation."""
    pixels = image.pixels
    peak = float(pixels.max())
    if peak < rule.intensity_floor:
        return np.zeros(pixels.shape, dtype=bool)
    at_peak = pixels == peak
    if not rule.require_equal_neighbor:
        return at_peak
    shifts = [(1, 0), (-1, 0), (0, 1), (0, -1)]
    if rule.neighbors == 8:
        shifts += [(1, 1), (1, -1), (-1, 1), (-1, -1)]
    neighbor_at_peak = np.zeros(pixels.shape, dtype=bool)
    for dy, dx in shifts:
        neighbor_at_peak |= np.roll(at_peak, (dy, dx), axis=(0, 1))
    return at_peak & neighbor_at_peak


def _residual_products(
    images: list[Image],
    denoise_cfg: DenoiseConfig,
    rule: SaturationRule | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Accumulate sum(W*I) and sum(I^2) with saturated pixels dropped per image.

    Accumulation order is the input order, so results are bit-stable however
    the residuals themselves were computed.
    """
    numerator = np.zeros(images[0].shape)
    denominator = np.zeros(images[0].shape)
    for image in images:
        w = image_residual(image, denoise_cfg).values
        keep = 1.0
        if rule is not None:
            keep = ~saturation_mask(image, rule)
        numerator += w * image.pixels * keep
        denominator += image.pixels * image.pixels * keep
    return numerator, denominator


def estimate_camera_fingerprint(
    images: list[Image],
    denoise_cfg: DenoiseConfig = DenoiseConfig(),
    nua_cfg: NuaConfig = NuaConfig(),
    rule: SaturationRule | None = SaturationRule(),
) -> CameraFingerprint:
    """Maximum-likelihood fingerprint from several same-shape images of one camera."""
    if len(images) < 2:
        raise DomainError(f"fingerprint estimation needs at least 2 images, got {len(images)}")
    shape = images[0].shape
    for i, image in enumerate(images):
        if image.shape != shape:
            raise DomainError(
                f"image {i} has shape {image.shape}, expected {shape} "
                f"(camera {image.meta.camera_id}, scene {image.meta.scene_id})"
            )
    numerator, denominator = _residual_products(images, denoise_cfg, rule)
    uninformed = denominator == 0.0
    ratio = np.divide(numerator, denominator, out=np.zeros_like(numerator), where=~uninformed)
    values = nua_suppress(ratio, nua_cfg)
    return CameraFingerprint(values=values, n_images=len(images), mask=uninformed)


def save_fingerprint(
    fp: CameraFingerprint, path: str | Path, meta: dict | None = None
) -> None:
    """Write a fingerprint in the documented flat binary layout."""
    path = Path(path)
    h, w = fp.shape
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(FINGERPRINT_MAGIC, h, w, fp.n_images, len(meta_bytes)))
        f.write(np.ascontiguousarray(fp.values, dtype="<f8").tobytes())
        f.write(np.packbits(fp.mask.ravel()).tobytes())
        f.write(meta_bytes)


def load_fingerprint(path: str | Path) -> tuple[CameraFingerprint, dict]:
    """Read a fingerprint written by :func:`save_fingerprint`."""
    path = Path(path)
    if not path.is_file():
        raise MissingAsset(f"fingerprint file not found: {path}")
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise DomainError(f"fingerprint file too short: {path}")
    magic, h, w, n_images, meta_len = _HEADER.unpack_from(blob)
    if magic != FINGERPRINT_MAGIC:
        raise DomainError(f"not a fingerprint file (bad magic): {path}")
    offset = _HEADER.size
    n_values = h * w
    values = np.frombuffer(blob, dtype="<f8", count=n_values, offset=offset).reshape(h, w)
    offset += n_values * 8
    n_mask_bytes = (n_values + 7) // 8
    mask_bits = np.frombuffer(blob, dtype=np.uint8, count=n_mask_bytes, offset=offset)
    mask = np.unpackbits(mask_bits, count=n_values).astype(bool).reshape(h, w)
    offset += n_mask_bytes
    meta = json.loads(blob[offset : offset + meta_len].decode("utf-8")) if meta_len else {}
    return CameraFingerprint(values=values.copy(), n_images=n_images, mask=mask), meta
