"""Synthetic sensor simulator: planted gain pattern, staggered exposures.

Renders follow the multiplicative sensor model: a noiseless scene is scaled by
the exposure's brightness gain, modulated by the camera's per-pixel gain
pattern, disturbed by read+shot noise, then clipped to [0, 255] and quantized
to 8 bits.  Clipping and quantization run last on purpose: they, not the
noise, are what destroy the sensor pattern in over-exposed renders.

Every render derives its randomness from a counter-style seed built from
(corpus seed, camera index, scene index, exposure mode), so corpora are
bit-identical however the rendering work is scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .core import (
    OVER_EXP_RATIO,
    OVER_ISO_RATIO,
    UNDER_EXP_RATIO,
    UNDER_ISO_RATIO,
    Image,
    ImageMeta,
)
from .dataset import Manifest, ManifestRow, save_manifest
from .errors import DomainError

DEFAULT_K_STRENGTH = 0.02
DEFAULT_SIGMA_READ = 2.0
DEFAULT_SIGMA_SHOT = 0.06
#: Real cameras tone-map rather than multiply raw gains, so the over-exposure
#: brightness boost is capped below the naive 3 x 2 product.
DEFAULT_GAIN_CAP = 4.0

#: Fraction of scenes rendered as dim interiors.  Dim scenes are where
#: under-exposure starves the sensor pattern below the decision threshold
#: while the auto-exposed capture still matches.
DIM_SCENE_FRACTION = 0.15
_DIM_MEAN_RANGE = (6.0, 11.0)
_DIM_AMPLITUDE_RANGE = (1.5, 3.5)
_NORMAL_MEAN_RANGE = (45.0, 195.0)
_NORMAL_AMPLITUDE_RANGE = (25.0, 55.0)

#: (ISO, exposure time) programmed for each mode, relative to a fixed
#: auto-exposure operating point.
AUTO_ISO, AUTO_EXPOSURE_S = 1000.0, 1.0 / 50.0
MODE_SETTINGS = {
    "Auto": (AUTO_ISO, AUTO_EXPOSURE_S),
    "Over": (AUTO_ISO * OVER_ISO_RATIO, AUTO_EXPOSURE_S * OVER_EXP_RATIO),
    "Under": (AUTO_ISO * UNDER_ISO_RATIO, AUTO_EXPOSURE_S * UNDER_EXP_RATIO),
}
F_NUMBER = 1.8

SCENE_GENERATORS = ("smooth_gradient", "texture_patches", "natural_mix")

# Tags keeping camera/scene/image seed streams disjoint.
_TAG_CAMERA, _TAG_SCENE, _TAG_IMAGE = 1, 2, 3
_MODE_INDEX = {"Auto": 0, "Over": 1, "Under": 2}


@dataclass(frozen=True)
class SyntheticCamera:
    """A sensor with a known planted gain pattern."""

    k_true: np.ndarray
    k_strength: float
    shape: tuple[int, int]
    seed: int

    @classmethod
    def generate(
        cls, shape: tuple[int, int], k_strength: float = DEFAULT_K_STRENGTH, seed: int = 0
    ) -> "SyntheticCamera":
        if not k_strength > 0:
            raise DomainError(f"k_strength must be positive, got {k_strength}")
        rng = np.random.default_rng(np.random.SeedSequence([_TAG_CAMERA, seed]))
        k = rng.standard_normal(shape)
        k -= k.mean()
        k *= k_strength / k.std()
        return cls(k_true=k, k_strength=k_strength, shape=tuple(shape), seed=seed)


@dataclass(frozen=True)
class SceneModel:
    """A noiseless scene in [0, 255]."""

    i0: np.ndarray
    generator: str
    seed: int

    @classmethod
    def generate(
        cls,
        shape: tuple[int, int],
        generator: str = "natural_mix",
        seed: int = 0,
        mean: float | None = None,
        amplitude: float | None = None,
    ) -> "SceneModel":
        """Build a scene; brightness is drawn from the corpus policy unless given.

        With probability :data:`DIM_SCENE_FRACTION` a scene is a dim interior,
        otherwise a normally lit one.
        """
        if generator not in SCENE_GENERATORS:
            raise DomainError(f"generator must be one of {SCENE_GENERATORS}, got {generator!r}")
        rng = np.random.default_rng(np.random.SeedSequence([_TAG_SCENE, seed]))
        dim = rng.uniform() < DIM_SCENE_FRACTION
        if mean is None:
            mean = float(rng.uniform(*(_DIM_MEAN_RANGE if dim else _NORMAL_MEAN_RANGE)))
        if amplitude is None:
            amplitude = float(
                rng.uniform(*(_DIM_AMPLITUDE_RANGE if dim else _NORMAL_AMPLITUDE_RANGE))
            )
        pattern = _scene_pattern(shape, generator, rng)
        i0 = np.clip(mean + amplitude * pattern, 0.0, 255.0)
        return cls(i0=i0, generator=generator, seed=seed)


def _normalize_pattern(p: np.ndarray) -> np.ndarray:
    p = p - p.mean()
    peak = np.abs(p).max()
    return p / peak if peak > 0 else p


def _smooth_pattern(shape, rng) -> np.ndarray:
    h, w = shape
    y, x = np.mgrid[0:h, 0:w].astype(np.float64)
    p = rng.uniform(-1, 1) * (x / w) + rng.uniform(-1, 1) * (y / h)
    for _ in range(3):
        fy, fx = rng.uniform(0.5, 3.0, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        p += rng.uniform(0.3, 1.0) * np.cos(2 * np.pi * (fx * x / w + fy * y / h) + phase)
    return _normalize_pattern(p)


def _patch_pattern(shape, rng) -> np.ndarray:
    h, w = shape
    block = int(rng.choice([16, 32, 64]))
    gh, gw = -(-h // block), -(-w // block)
    grid = rng.uniform(-1, 1, size=(gh, gw))
    p = np.repeat(np.repeat(grid, block, axis=0), block, axis=1)[:h, :w]
    return _normalize_pattern(p)


def _blob_pattern(shape, rng) -> np.ndarray:
    h, w = shape
    y, x = np.mgrid[0:h, 0:w].astype(np.float64)
    p = np.zeros(shape)
    for _ in range(3):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        s = rng.uniform(min(h, w) / 12, min(h, w) / 4)
        p += rng.uniform(-1, 1) * np.exp(-((y - cy) ** 2 + (x - cx) ** 2) / (2 * s * s))
    return _normalize_pattern(p)


def _scene_pattern(shape, generator: str, rng) -> np.ndarray:
    if generator == "smooth_gradient":
        return _smooth_pattern(shape, rng)
    if generator == "texture_patches":
        return _patch_pattern(shape, rng)
    mix = 0.55 * _smooth_pattern(shape, rng) + 0.3 * _patch_pattern(shape, rng)
    mix += 0.3 * _blob_pattern(shape, rng)
    return _normalize_pattern(mix)


@dataclass(frozen=True)
class ExposureModel:
    """Brightness gain and noise scaling for one exposure mode."""

    mode: str
    brightness_gain: float
    iso_noise_scale: float

    def __post_init__(self) -> None:
        if self.mode not in MODE_SETTINGS:
            raise DomainError(f"mode must be one of {tuple(MODE_SETTINGS)}, got {self.mode!r}")
        if self.mode == "Over" and not self.brightness_gain > 1.0:
            raise DomainError("Over exposure requires brightness_gain > 1")
        if self.mode == "Under" and not self.brightness_gain < 1.0:
            raise DomainError("Under exposure requires brightness_gain < 1")

    @classmethod
    def preset(cls, mode: str, gain_cap: float = DEFAULT_GAIN_CAP) -> "ExposureModel":
        if mode == "Auto":
            return cls(mode="Auto", brightness_gain=1.0, iso_noise_scale=1.0)
        if mode == "Over":
            gain = min(OVER_ISO_RATIO * OVER_EXP_RATIO, gain_cap)
            return cls(mode="Over", brightness_gain=gain, iso_noise_scale=OVER_ISO_RATIO)
        if mode == "Under":
            return cls(
                mode="Under",
                brightness_gain=UNDER_ISO_RATIO * UNDER_EXP_RATIO,
                iso_noise_scale=UNDER_ISO_RATIO,
            )
        raise DomainError(f"unknown exposure mode {mode!r}")


def _meta_for(camera_id: str, camera_model: str, scene_id: str, mode: str) -> ImageMeta:
    iso, exp = MODE_SETTINGS[mode]
    return ImageMeta(
        camera_id=camera_id,
        camera_model=camera_model,
        scene_id=scene_id,
        exposure_type=mode,
        iso=iso,
        exposure_time_s=exp,
        f_number=F_NUMBER,
    )


def render(
    camera: SyntheticCamera,
    scene: SceneModel,
    exposure: ExposureModel,
    seed: int | np.random.SeedSequence = 0,
    meta: ImageMeta | None = None,
    sigma_read: float = DEFAULT_SIGMA_READ,
    sigma_shot: float = DEFAULT_SIGMA_SHOT,
) -> Image:
    """Render one capture of ``scene`` by ``camera`` at the given exposure."""
    if camera.shape != scene.i0.shape:
        raise DomainError(f"camera shape {camera.shape} != scene shape {scene.i0.shape}")
    g = exposure.brightness_gain
    signal = g * scene.i0 * (1.0 + camera.k_true)
    noise_std = sigma_read + sigma_shot * np.sqrt(g * scene.i0) * exposure.iso_noise_scale
    rng = np.random.default_rng(seed)
    theta = rng.standard_normal(scene.i0.shape) * noise_std
    pixels = np.rint(np.clip(signal + theta, 0.0, 255.0))
    if meta is None:
        meta = _meta_for(
            camera_id=f"cam{camera.seed:02d}",
            camera_model="synthetic",
            scene_id=f"s{scene.seed}",
            mode=exposure.mode,
        )
    return Image(pixels=pixels, meta=meta)


class SyntheticCorpus:
    """A lazily rendered corpus: manifest up front, pixels on demand.

    Rendering on demand keeps memory flat and, because each image owns a
    deterministic seed, repeated loads return bit-identical pixels.
    """

    def __init__(
        self,
        n_cameras: int,
        scenes_per_camera: int,
        modes: tuple[str, ...] = ("Auto", "Over", "Under"),
        seed: int = 0,
        shape: tuple[int, int] = (256, 256),
        protocol: str = "A",
        generator: str = "natural_mix",
        k_strength: float = DEFAULT_K_STRENGTH,
        gain_cap: float = DEFAULT_GAIN_CAP,
        sigma_read: float = DEFAULT_SIGMA_READ,
        sigma_shot: float = DEFAULT_SIGMA_SHOT,
    ):
        if n_cameras < 2:
            raise DomainError(f"a corpus needs at least 2 cameras, got {n_cameras}")
        if protocol not in ("A", "B"):
            raise DomainError(f"protocol must be 'A' or 'B', got {protocol!r}")
        if seed < 0:
            raise DomainError("corpus seed must be non-negative")
        for mode in modes:
            if mode not in MODE_SETTINGS:
                raise DomainError(f"unknown exposure mode {mode!r}")
        self.seed = seed
        self.shape = tuple(shape)
        self.protocol = protocol
        self.generator = generator
        self.sigma_read = sigma_read
        self.sigma_shot = sigma_shot
        self.modes = tuple(modes)
        self.cameras = {
            f"cam{i:02d}": SyntheticCamera.generate(
                self.shape, k_strength, seed=self._camera_seed(i)
            )
            for i in range(n_cameras)
        }
        self.exposures = {mode: ExposureModel.preset(mode, gain_cap) for mode in self.modes}
        rows = []
        self._index: dict[tuple[str, str, str], tuple[int, int, str]] = {}
        for ci in range(n_cameras):
            camera_id = f"cam{ci:02d}"
            camera_model = f"model{ci // 2:02d}"
            for si in range(scenes_per_camera):
                scene_id = f"s{si:04d}" if protocol == "A" else f"c{ci:02d}s{si:04d}"
                for mode in self.modes:
                    path = f"images/{camera_id}_{scene_id}_{mode}.png"
                    rows.append(
                        ManifestRow(path=path, meta=_meta_for(camera_id, camera_model, scene_id, mode))
                    )
                    self._index[(camera_id, scene_id, mode)] = (ci, si, mode)
        self.manifest = Manifest(rows=tuple(rows))

    def _camera_seed(self, cam_idx: int) -> int:
        # Distinct per corpus seed; SyntheticCamera.generate tags it further.
        return self.seed * 100_003 + cam_idx

    def _scene(self, cam_idx: int, scene_idx: int) -> SceneModel:
        if self.protocol == "A":
            entropy = [self.seed, _TAG_SCENE, scene_idx]
        else:
            entropy = [self.seed, _TAG_SCENE, cam_idx, scene_idx]
        seed = int(np.random.SeedSequence(entropy).generate_state(1)[0])
        return SceneModel.generate(self.shape, self.generator, seed=seed)

    def load(self, row: ManifestRow) -> Image:
        """Render the image a manifest row describes."""
        key = (row.meta.camera_id, row.meta.scene_id, row.meta.exposure_type)
        if key not in self._index:
            raise DomainError(f"row {key} is not part of this corpus")
        cam_idx, scene_idx, mode = self._index[key]
        image_seed = np.random.SeedSequence(
            [self.seed, _TAG_IMAGE, cam_idx, scene_idx, _MODE_INDEX[mode]]
        )
        return render(
            camera=self.cameras[row.meta.camera_id],
            scene=self._scene(cam_idx, scene_idx),
            exposure=self.exposures[mode],
            seed=image_seed,
            meta=row.meta,
            sigma_read=self.sigma_read,
            sigma_shot=self.sigma_shot,
        )


def render_corpus(
    n_cameras: int,
    scenes_per_camera: int,
    modes: tuple[str, ...] = ("Auto", "Over", "Under"),
    seed: int = 0,
    **kwargs,
) -> SyntheticCorpus:
    """Build a lazily rendered corpus; see :class:`SyntheticCorpus` for knobs."""
    return SyntheticCorpus(n_cameras, scenes_per_camera, modes=modes, seed=seed, **kwargs)


def write_corpus(corpus: SyntheticCorpus, out_dir: str | Path) -> Path:
    """Render every image to 8-bit grayscale PNG and write the manifest.

    Returns the manifest path.  Output is byte-identical across invocations
    with the same corpus parameters.
    """
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    for row in corpus.manifest.rows:
        image = corpus.load(row)
        PILImage.fromarray(image.pixels.astype(np.uint8), mode="L").save(out_dir / row.path)
    manifest_path = out_dir / "manifest.csv"
    save_manifest(corpus.manifest, manifest_path)
    return manifest_path
