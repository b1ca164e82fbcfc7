import numpy as np
import pytest

from prnuid.core import FINGERPRINT_MEAN_TOL
from prnuid.denoise import DenoiseConfig
from prnuid.errors import DomainError
from prnuid.fingerprint import (
    NuaConfig,
    _residual_products,
    estimate_camera_fingerprint,
    image_residual,
    load_fingerprint,
    nua_suppress,
    saturation_mask,
    save_fingerprint,
)
from prnuid.sim import ExposureModel, SceneModel, SyntheticCamera, render

from conftest import make_image


def corr(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    return float((a * b).sum() / np.sqrt((a * a).sum() * (b * b).sum()))


SHAPE = (256, 256)
AUTO = ExposureModel.preset("Auto")


@pytest.fixture(scope="module")
def planted():
    """Two synthetic cameras photographing the same 30 scenes."""
    cam_a = SyntheticCamera.generate(SHAPE, 0.02, seed=1)
    cam_b = SyntheticCamera.generate(SHAPE, 0.02, seed=2)
    scenes = [SceneModel.generate(SHAPE, "natural_mix", seed=1000 + s) for s in range(30)]
    imgs_a = [render(cam_a, scene, AUTO, seed=i) for i, scene in enumerate(scenes)]
    imgs_b = [render(cam_b, scene, AUTO, seed=10_000 + i) for i, scene in enumerate(scenes)]
    return cam_a, cam_b, imgs_a, imgs_b


class TestImageResidual:
    def test_constant_image_residual_is_zero(self):
        image = make_image(np.full((64, 64), 77.0))
        assert np.abs(image_residual(image).values).max() < 1e-6

    def test_residual_correlates_with_planted_signal(self):
        cam = SyntheticCamera.generate(SHAPE, 0.02, seed=5)
        scene = SceneModel.generate(SHAPE, "smooth_gradient", seed=8, mean=120.0, amplitude=40.0)
        image = render(cam, scene, AUTO, seed=3)
        w = image_residual(image).values
        assert corr(w, scene.i0 * cam.k_true) > 0.3

    def test_same_camera_residuals_correlate_more(self, planted):
        _, _, imgs_a, imgs_b = planted
        for trial in range(10):
            w1 = image_residual(imgs_a[trial]).values
            w2 = image_residual(imgs_a[trial + 10]).values
            w_other = image_residual(imgs_b[trial + 10]).values
            assert corr(w1, w2) > corr(w1, w_other)


class TestNuaSuppress:
    def test_row_and_column_means_vanish(self, rng):
        for _ in range(10):
            matrix = rng.standard_normal((48, 80)) * rng.uniform(0.5, 20)
            out = nua_suppress(matrix)
            assert np.abs(out.mean(axis=1)).max() <= 1e-9
            assert np.abs(out.mean(axis=0)).max() <= 1e-9

    def test_row_gradient_is_wiped_by_zero_mean_stage(self):
        rows = np.outer(np.arange(32, dtype=float), np.ones(32))
        out = nua_suppress(rows, NuaConfig(zero_mean=True, wiener_dft=False))
        assert np.abs(out).max() < 1e-12

    def test_dft_spike_is_attenuated_but_typical_bins_survive(self, rng):
        x = rng.standard_normal((64, 64))
        yy, xx = np.mgrid[0:64, 0:64]
        spiked = x + 40.0 * np.cos(2 * np.pi * (5 * yy / 64 + 9 * xx / 64))
        out = nua_suppress(spiked, NuaConfig(zero_mean=False, wiener_dft=True))
        f_in = np.abs(np.fft.fft2(spiked))
        f_out = np.abs(np.fft.fft2(out))
        assert f_in[5, 9] / f_out[5, 9] > 10
        others = np.ones(f_in.shape, dtype=bool)
        others[5, 9] = others[-5, -9] = others[0, 0] = False
        rel_change = np.abs(f_out[others] - f_in[others]) / np.maximum(f_in[others], 1e-12)
        assert np.median(rel_change) < 0.10

    def test_requires_some_stage(self):
        with pytest.raises(DomainError):
            NuaConfig(zero_mean=False, wiener_dft=False)


class TestSaturationMask:
    def test_below_floor_nothing_saturates(self):
        image = make_image(np.full((64, 64), 240.0))
        assert not saturation_mask(image).any()

    def test_uniform_peak_masks_everything(self):
        image = make_image(np.full((64, 64), 255.0))
        assert saturation_mask(image).all()

    def test_isolated_peak_is_not_saturated(self):
        pixels = np.full((64, 64), 200.0)
        pixels[10, 10] = 255.0
        image = make_image(pixels)
        assert not saturation_mask(image).any()

    def test_plateau_is_saturated(self):
        pixels = np.full((64, 64), 200.0)
        pixels[10:14, 10:14] = 255.0
        mask = saturation_mask(make_image(pixels))
        assert mask[10:14, 10:14].all()
        assert mask.sum() == 16


class TestEstimateCameraFingerprint:
    def test_constant_images_give_near_zero_fingerprint(self):
        images = [make_image(np.full((64, 64), 100.0), scene_id=f"s{i}") for i in range(5)]
        fp = estimate_camera_fingerprint(images)
        assert np.abs(fp.values).max() < 1e-6
        assert fp.n_images == 5

    def test_rejects_single_image(self):
        with pytest.raises(DomainError):
            estimate_camera_fingerprint([make_image(np.full((64, 64), 100.0))])

    def test_rejects_shape_mismatch(self):
        images = [
            make_image(np.full((64, 64), 100.0), scene_id="a"),
            make_image(np.full((64, 128), 100.0), scene_id="b"),
        ]
        with pytest.raises(DomainError):
            estimate_camera_fingerprint(images)

    def test_recovers_planted_pattern(self, planted):
        cam_a, _, imgs_a, _ = planted
        fp30 = estimate_camera_fingerprint(imgs_a)
        assert corr(fp30.values, cam_a.k_true) > 0.5
        assert np.abs(fp30.values.mean(axis=1)).max() <= FINGERPRINT_MEAN_TOL
        assert np.abs(fp30.values.mean(axis=0)).max() <= FINGERPRINT_MEAN_TOL

    def test_more_images_recover_more(self, planted):
        cam_a, _, imgs_a, _ = planted
        fp30 = estimate_camera_fingerprint(imgs_a)
        fp5 = estimate_camera_fingerprint(imgs_a[:5])
        assert corr(fp30.values, cam_a.k_true) > corr(fp5.values, cam_a.k_true)

    def test_disjoint_halves_agree_and_cameras_differ(self, planted):
        _, _, imgs_a, imgs_b = planted
        half1 = estimate_camera_fingerprint(imgs_a[:15])
        half2 = estimate_camera_fingerprint(imgs_a[15:])
        other = estimate_camera_fingerprint(imgs_b)
        assert corr(half1.values, half2.values) > 0.2
        assert abs(corr(half1.values, other.values)) < 0.05

    def test_single_image_ratio_matches_residual_normalization(self, rng):
        # In the one-image limit the pre-suppression ratio is W*I / I^2 = W / I.
        pixels = np.clip(rng.uniform(10, 240, size=(64, 64)), 0, 255)
        image = make_image(pixels)
        numerator, denominator = _residual_products([image], DenoiseConfig(), rule=None)
        w = image_residual(image).values
        assert np.allclose(numerator / denominator, w / pixels, atol=1e-12)

    def test_uninformed_pixels_recorded_in_mask(self):
        # A plateau saturated in every contributing image has no usable data.
        base = np.full((64, 64), 120.0)
        rng = np.random.default_rng(0)
        images = []
        for i in range(4):
            pixels = np.clip(base + rng.normal(0, 5, size=base.shape), 0, 250)
            pixels[20:28, 30:38] = 255.0
            images.append(make_image(pixels, scene_id=f"s{i}"))
        fp = estimate_camera_fingerprint(images)
        assert fp.mask[20:28, 30:38].all()
        assert fp.mask.sum() == 64


class TestFingerprintPersistence:
    def test_round_trip(self, tmp_path, rng):
        values = nua_suppress(rng.standard_normal((48, 64)) * 0.02)
        mask = rng.uniform(size=values.shape) < 0.1
        from prnuid.core import CameraFingerprint

        fp = CameraFingerprint(values=values, n_images=12, mask=mask)
        path = tmp_path / "cam.fp"
        save_fingerprint(fp, path, meta={"camera_id": "cam07"})
        loaded, meta = load_fingerprint(path)
        assert np.array_equal(loaded.values, fp.values)
        assert np.array_equal(loaded.mask, fp.mask)
        assert loaded.n_images == 12
        assert meta == {"camera_id": "cam07"}

    def test_rejects_garbage_file(self, tmp_path):
        path = tmp_path / "junk.fp"
        path.write_bytes(b"not a fingerprint")
        with pytest.raises(DomainError):
            load_fingerprint(path)
