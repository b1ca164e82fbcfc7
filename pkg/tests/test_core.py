import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from prnuid.core import (
    PceResult,
    classify_exposure_offset,
    exposure_value_rel,
)
from prnuid.errors import DomainError, UnclassifiableExposure

from conftest import make_image, make_meta


class TestImageMeta:
    def test_rejects_unknown_exposure_type(self):
        with pytest.raises(DomainError):
            make_meta(exposure_type="Bright")

    @pytest.mark.parametrize("field", ["iso", "exposure_time_s", "f_number"])
    @pytest.mark.parametrize("bad", [0.0, -1.0, float("nan")])
    def test_rejects_nonpositive_settings(self, field, bad):
        with pytest.raises(DomainError):
            make_meta(**{field: bad})


class TestImage:
    def test_accepts_valid_plane(self):
        image = make_image(np.full((64, 64), 100.0))
        assert image.shape == (64, 64)
        assert image.width == 64 and image.height == 64

    def test_rejects_small_plane(self):
        with pytest.raises(DomainError):
            make_image(np.full((63, 64), 100.0))

    def test_rejects_out_of_range_values(self):
        with pytest.raises(DomainError):
            make_image(np.full((64, 64), 256.0))
        with pytest.raises(DomainError):
            make_image(np.full((64, 64), -1.0))


class TestExposureValue:
    def test_auto_example_is_log2_ten(self):
        meta = make_meta(iso=1000.0, exposure_time_s=1 / 50)
        ev = exposure_value_rel(meta, t_ref_s=1 / 50)
        assert ev.ev_rel_100 == pytest.approx(math.log2(10), abs=1e-12)
        assert ev.ev_rel_100 == pytest.approx(3.321928094887362, abs=1e-12)

    def test_iso_100_reference_is_zero(self):
        meta = make_meta(iso=100.0, exposure_time_s=1.0)
        assert exposure_value_rel(meta, t_ref_s=1.0).ev_rel_100 == 0.0

    def test_over_exposed_example_counts_light_quantity(self):
        # ISO x3 and time x2 relative to (1000, 1/50): log2(30) + log2(2).
        meta = make_meta(iso=3000.0, exposure_time_s=1 / 25)
        ev = exposure_value_rel(meta, t_ref_s=1 / 50)
        assert ev.ev_rel_100 == pytest.approx(math.log2(60), abs=1e-12)
        assert ev.ev_rel_100 == pytest.approx(5.906890595608519, abs=1e-12)

    def test_rejects_nonpositive_reference(self):
        with pytest.raises(DomainError):
            exposure_value_rel(make_meta(), t_ref_s=0.0)

    @given(
        iso=st.floats(1.0, 1e5),
        t=st.floats(1e-5, 10.0),
        iso_boost=st.floats(1.01, 8.0),
        t_boost=st.floats(1.01, 8.0),
    )
    def test_strictly_increasing_in_iso_and_time(self, iso, t, iso_boost, t_boost):
        base = exposure_value_rel(make_meta(iso=iso, exposure_time_s=t)).ev_rel_100
        more_iso = exposure_value_rel(make_meta(iso=iso * iso_boost, exposure_time_s=t))
        more_time = exposure_value_rel(make_meta(iso=iso, exposure_time_s=t * t_boost))
        assert more_iso.ev_rel_100 > base
        assert more_time.ev_rel_100 > base


class TestClassifyExposureOffset:
    def test_over_pattern(self):
        auto = make_meta(iso=1000.0, exposure_time_s=1 / 50)
        cand = make_meta(iso=3000.0, exposure_time_s=1 / 25)
        assert classify_exposure_offset(auto, cand) == "Over"

    def test_identity_is_auto(self):
        auto = make_meta(iso=1000.0, exposure_time_s=1 / 50)
        assert classify_exposure_offset(auto, auto) == "Auto"

    def test_under_pattern(self):
        auto = make_meta(iso=800.0, exposure_time_s=1 / 60)
        cand = make_meta(iso=400.0, exposure_time_s=1 / 120)
        assert classify_exposure_offset(auto, cand) == "Under"

    def test_recorded_values_within_tolerance_still_classify(self):
        auto = make_meta(iso=1000.0, exposure_time_s=1 / 50)
        cand = make_meta(iso=3000.0 * 1.05, exposure_time_s=(1 / 25) * 0.95)
        assert classify_exposure_offset(auto, cand) == "Over"

    def test_unmatched_ratios_raise(self):
        auto = make_meta(iso=1000.0, exposure_time_s=1 / 50)
        cand = make_meta(iso=2000.0, exposure_time_s=1 / 50)
        with pytest.raises(UnclassifiableExposure):
            classify_exposure_offset(auto, cand)

    @given(iso=st.floats(1.0, 1e5), t=st.floats(1e-5, 10.0))
    def test_same_settings_always_auto(self, iso, t):
        meta = make_meta(iso=iso, exposure_time_s=t)
        assert classify_exposure_offset(meta, meta) == "Auto"


class TestPceResult:
    def test_decision_flips_exactly_at_threshold(self):
        at = PceResult(pce=60.0, peak_location=(0, 0), correlation_peak=0.5, decision=False, threshold=60.0)
        above = PceResult(
            pce=60.0 + 1e-9, peak_location=(0, 0), correlation_peak=0.5, decision=True, threshold=60.0
        )
        assert at.decision is False
        assert above.decision is True

    def test_inconsistent_decision_rejected(self):
        with pytest.raises(DomainError):
            PceResult(pce=100.0, peak_location=(0, 0), correlation_peak=0.5, decision=False, threshold=60.0)

    def test_sign_mismatch_rejected(self):
        with pytest.raises(DomainError):
            PceResult(pce=10.0, peak_location=(0, 0), correlation_peak=-0.5, decision=False, threshold=60.0)
