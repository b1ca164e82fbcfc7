"""Corpus ingestion: manifest schema, integrity checks, trial partitioning.

A manifest is UTF-8 comma-delimited text whose header row is exactly::

    path,camera_id,camera_model,scene_id,exposure_type,iso,exposure_time_s,f_number

Paths are interpreted relative to the manifest's own directory.  Loading
checks that every referenced file exists (decode stays lazy) and that no
(camera_id, scene_id, exposure_type) triple repeats.

Trial partitioning splits at scene level: a scene either contributes to the
fingerprint or to the questioned set, never both, and the same split serves
every exposure type within a trial so cross-exposure experiments keep the two
sides scene-disjoint.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .core import Image, ImageMeta
from .errors import (
    DomainError,
    DuplicateEntry,
    InsufficientImages,
    ManifestNotFound,
    ManifestSchemaError,
    MissingAsset,
)

MANIFEST_COLUMNS = (
    "path",
    "camera_id",
    "camera_model",
    "scene_id",
    "exposure_type",
    "iso",
    "exposure_time_s",
    "f_number",
)
SCHEMA_VERSION = 1

#: Luminance weights used when a decoded image is RGB.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class ManifestRow:
    path: str
    meta: ImageMeta

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.meta.camera_id, self.meta.scene_id, self.meta.exposure_type)


@dataclass(frozen=True)
class Manifest:
    rows: tuple[ManifestRow, ...]
    schema_version: int = SCHEMA_VERSION
    base_dir: Path = field(default_factory=Path)

    def __post_init__(self) -> None:
        seen: set[tuple[str, str, str]] = set()
        for row in self.rows:
            if row.key in seen:
                raise DuplicateEntry(f"duplicate (camera, scene, exposure) triple: {row.key}")
            seen.add(row.key)

    def cameras(self) -> tuple[str, ...]:
        return tuple(sorted({row.meta.camera_id for row in self.rows}))

    def camera_models(self) -> dict[str, str]:
        return {row.meta.camera_id: row.meta.camera_model for row in self.rows}

    def rows_for(self, camera_id: str, exposure_type: str | None = None) -> tuple[ManifestRow, ...]:
        return tuple(
            row
            for row in self.rows
            if row.meta.camera_id == camera_id
            and (exposure_type is None or row.meta.exposure_type == exposure_type)
        )

    def resolve(self, row: ManifestRow) -> Path:
        return self.base_dir / row.path

    def content_hash(self) -> str:
        digest = hashlib.sha256()
        for row in sorted(self.rows, key=lambda r: (r.key, r.path)):
            meta = row.meta
            digest.update(
                "|".join(
                    (
                        row.path,
                        meta.camera_id,
                        meta.camera_model,
                        meta.scene_id,
                        meta.exposure_type,
                        repr(meta.iso),
                        repr(meta.exposure_time_s),
                        repr(meta.f_number),
                    )
                ).encode("utf-8")
            )
            digest.update(b"\n")
        return digest.hexdigest()


def _parse_row(record: dict, line_no: int) -> ManifestRow:
    try:
        meta = ImageMeta(
            camera_id=record["camera_id"],
            camera_model=record["camera_model"],
            scene_id=record["scene_id"],
            exposure_type=record["exposure_type"],
            iso=float(record["iso"]),
            exposure_time_s=float(record["exposure_time_s"]),
            f_number=float(record["f_number"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestSchemaError(f"line {line_no}: {exc}") from exc
    path = record.get("path")
    if not path:
        raise ManifestSchemaError(f"line {line_no}: empty path")
    return ManifestRow(path=path, meta=meta)


def load_manifest(path: str | Path, check_assets: bool = True) -> Manifest:
    """Parse and validate a manifest file."""
    path = Path(path)
    if not path.is_file():
        raise ManifestNotFound(f"manifest not found: {path}")
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or tuple(reader.fieldnames) != MANIFEST_COLUMNS:
            raise ManifestSchemaError(
                f"manifest header must be {','.join(MANIFEST_COLUMNS)}, got {reader.fieldnames}"
            )
        rows = tuple(_parse_row(record, line_no) for line_no, record in enumerate(reader, start=2))
    manifest = Manifest(rows=rows, base_dir=path.parent)
    if check_assets:
        for row in manifest.rows:
            if not manifest.resolve(row).is_file():
                raise MissingAsset(f"manifest references missing image: {manifest.resolve(row)}")
    return manifest


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(MANIFEST_COLUMNS)
        for row in manifest.rows:
            meta = row.meta
            writer.writerow(
                (
                    row.path,
                    meta.camera_id,
                    meta.camera_model,
                    meta.scene_id,
                    meta.exposure_type,
                    repr(meta.iso),
                    repr(meta.exposure_time_s),
                    repr(meta.f_number),
                )
            )


def decode_image(path: str | Path, meta: ImageMeta) -> Image:
    """Decode an 8-bit grayscale or RGB raster into a luminance Image."""
    path = Path(path)
    if not path.is_file():
        raise MissingAsset(f"image not found: {path}")
    with PILImage.open(path) as pil:
        if pil.mode == "L":
            pixels = np.asarray(pil, dtype=np.float64)
        elif pil.mode in ("RGB", "RGBA"):
            rgb = np.asarray(pil.convert("RGB"), dtype=np.float64)
            pixels = rgb @ np.asarray(LUMA_WEIGHTS)
        else:
            raise DomainError(f"unsupported image mode {pil.mode!r} for {path}")
    return Image(pixels=np.clip(pixels, 0.0, 255.0), meta=meta)


class DiskCorpus:
    """Corpus view over a manifest whose images live on disk."""

    def __init__(self, manifest: Manifest):
        self.manifest = manifest

    def load(self, row: ManifestRow) -> Image:
        return decode_image(self.manifest.resolve(row), row.meta)


@dataclass(frozen=True)
class TrialPartition:
    """Scene-disjoint fingerprint/questioned split for one trial."""

    fingerprint_rows: dict[str, tuple[ManifestRow, ...]]
    questioned_rows: dict[str, tuple[ManifestRow, ...]]
    fingerprint_exposure: str
    questioned_exposure: str
    trial_seed: int

    def __post_init__(self) -> None:
        for camera_id, fp_rows in self.fingerprint_rows.items():
            fp_scenes = {row.meta.scene_id for row in fp_rows}
            q_scenes = {row.meta.scene_id for row in self.questioned_rows[camera_id]}
            if fp_scenes & q_scenes:
                raise DomainError(
                    f"camera {camera_id}: fingerprint and questioned sets share scenes "
                    f"{sorted(fp_scenes & q_scenes)}"
                )


def partition_trial(
    manifest: Manifest,
    exposure_type_for_fp: str,
    exposure_type_for_q: str,
    trial_seed: int,
    n_fingerprint: int = 30,
    n_questioned: int = 70,
) -> TrialPartition:
    """Split each camera's scenes into fingerprint and questioned sides.

    The shuffle is a function of (manifest content, trial seed) only, so
    cameras sharing a scene list (same-scene protocol) receive the same split
    and no fingerprint scene of any camera appears among questioned scenes.
    Selecting different exposure types draws both sides from that one split.
    """
    if n_fingerprint < 2 or n_questioned < 1:
        raise DomainError("need n_fingerprint >= 2 and n_questioned >= 1")
    digest = int.from_bytes(bytes.fromhex(manifest.content_hash())[:8], "big")
    fingerprint_rows: dict[str, tuple[ManifestRow, ...]] = {}
    questioned_rows: dict[str, tuple[ManifestRow, ...]] = {}
    for camera_id in manifest.cameras():
        fp_by_scene = {r.meta.scene_id: r for r in manifest.rows_for(camera_id, exposure_type_for_fp)}
        q_by_scene = {r.meta.scene_id: r for r in manifest.rows_for(camera_id, exposure_type_for_q)}
        scenes = sorted(set(fp_by_scene) & set(q_by_scene))
        needed = n_fingerprint + n_questioned
        if len(scenes) < needed:
            raise InsufficientImages(
                f"camera {camera_id}: {len(scenes)} scenes with both "
                f"{exposure_type_for_fp!r} and {exposure_type_for_q!r} images, "
                f"need {needed} (short by {needed - len(scenes)})"
            )
        rng = np.random.default_rng(np.random.SeedSequence([trial_seed, digest]))
        order = rng.permutation(len(scenes))
        fp_scenes = [scenes[i] for i in order[:n_fingerprint]]
        q_scenes = [scenes[i] for i in order[n_fingerprint : n_fingerprint + n_questioned]]
        fingerprint_rows[camera_id] = tuple(fp_by_scene[s] for s in sorted(fp_scenes))
        questioned_rows[camera_id] = tuple(q_by_scene[s] for s in sorted(q_scenes))
    return TrialPartition(
        fingerprint_rows=fingerprint_rows,
        questioned_rows=questioned_rows,
        fingerprint_exposure=exposure_type_for_fp,
        questioned_exposure=exposure_type_for_q,
        trial_seed=trial_seed,
    )
