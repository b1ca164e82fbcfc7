import numpy as np
import pytest

from prnuid.core import Image, ImageMeta


def make_meta(
    camera_id="cam00",
    camera_model="model00",
    scene_id="s0000",
    exposure_type="Auto",
    iso=1000.0,
    exposure_time_s=1.0 / 50.0,
    f_number=1.8,
) -> ImageMeta:
    return ImageMeta(
        camera_id=camera_id,
        camera_model=camera_model,
        scene_id=scene_id,
        exposure_type=exposure_type,
        iso=iso,
        exposure_time_s=exposure_time_s,
        f_number=f_number,
    )


def make_image(pixels: np.ndarray, **meta_kwargs) -> Image:
    return Image(pixels=pixels, meta=make_meta(**meta_kwargs))


@pytest.fixture
def rng():
    return np.random.default_rng(42)
