import csv
import hashlib
import json

import numpy as np
import pytest
from PIL import Image as PILImage

from prnuid.cli import main
from prnuid.fingerprint import load_fingerprint


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    code = main(
        [
            "simulate",
            "--out",
            str(out),
            "--cameras",
            "3",
            "--scenes",
            "8",
            "--size",
            "64x64",
            "--seed",
            "5",
        ]
    )
    assert code == 0
    return out


def auto_images(corpus_dir, camera="cam00", count=4):
    with open(corpus_dir / "manifest.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    picked = [
        str(corpus_dir / r["path"])
        for r in rows
        if r["camera_id"] == camera and r["exposure_type"] == "Auto"
    ]
    return picked[:count]


class TestSimulate:
    def test_outputs_and_counts(self, corpus_dir, capsys):
        assert (corpus_dir / "manifest.csv").is_file()
        assert (corpus_dir / "config.json").is_file()
        with open(corpus_dir / "manifest.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 3 * 8 * 3

    def test_rerun_is_byte_identical(self, corpus_dir, tmp_path):
        code = main(
            [
                "simulate",
                "--out",
                str(tmp_path),
                "--cameras",
                "3",
                "--scenes",
                "8",
                "--size",
                "64x64",
                "--seed",
                "5",
            ]
        )
        assert code == 0
        first = hashlib.sha256((corpus_dir / "manifest.csv").read_bytes()).hexdigest()
        second = hashlib.sha256((tmp_path / "manifest.csv").read_bytes()).hexdigest()
        assert first == second

    def test_missing_out_is_usage_error(self):
        with pytest.raises(SystemExit) as err:
            main(["simulate", "--cameras", "2", "--scenes", "2"])
        assert err.value.code == 2


class TestFingerprint:
    def test_estimates_and_round_trips(self, corpus_dir, tmp_path, capsys):
        fp_path = tmp_path / "cam00.fp"
        code = main(["fingerprint", *auto_images(corpus_dir), "--out", str(fp_path)])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["n_images"] == 4
        fp, meta = load_fingerprint(fp_path)
        assert fp.shape == (64, 64)
        assert len(meta["sources"]) == 4

    def test_single_image_is_domain_error(self, corpus_dir, tmp_path, capsys):
        code = main(
            ["fingerprint", auto_images(corpus_dir, count=1)[0], "--out", str(tmp_path / "x.fp")]
        )
        assert code == 1
        err = capsys.readouterr().err
        assert err.startswith("error:") and "at least 2" in err

    def test_shape_mixed_list_names_the_file(self, corpus_dir, tmp_path, capsys):
        odd = tmp_path / "odd.png"
        PILImage.fromarray(np.zeros((96, 96), dtype=np.uint8), mode="L").save(odd)
        code = main(
            ["fingerprint", *auto_images(corpus_dir, count=2), str(odd), "--out", str(tmp_path / "x.fp")]
        )
        assert code == 1
        assert "odd.png" in capsys.readouterr().err


@pytest.fixture(scope="module")
def fingerprint_file(corpus_dir, tmp_path_factory):
    fp_path = tmp_path_factory.mktemp("fp") / "cam00.fp"
    assert main(["fingerprint", *auto_images(corpus_dir), "--out", str(fp_path)]) == 0
    return fp_path


class TestMatch:
    def questioned(self, corpus_dir, camera):
        return auto_images(corpus_dir, camera=camera, count=8)[-1]

    def test_matching_pair_decides_true(self, corpus_dir, fingerprint_file, capsys):
        code = main(
            ["match", "--fingerprint", str(fingerprint_file), "--image", self.questioned(corpus_dir, "cam00")]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["decision"] is True
        assert payload["pce"] > 60

    def test_non_matching_pair_decides_false(self, corpus_dir, fingerprint_file, capsys):
        code = main(
            ["match", "--fingerprint", str(fingerprint_file), "--image", self.questioned(corpus_dir, "cam01")]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["decision"] is False

    def test_threshold_override_recorded(self, corpus_dir, fingerprint_file, tmp_path, capsys):
        out_dir = tmp_path / "run"
        code = main(
            [
                "match",
                "--fingerprint",
                str(fingerprint_file),
                "--image",
                self.questioned(corpus_dir, "cam00"),
                "--threshold",
                "442",
                "--out",
                str(out_dir),
            ]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["threshold"] == 442.0
        snapshot = json.loads((out_dir / "config.json").read_text())
        assert snapshot["match"]["threshold"] == 442.0

    def test_missing_fingerprint_is_domain_error(self, corpus_dir, tmp_path, capsys):
        code = main(
            ["match", "--fingerprint", str(tmp_path / "nope.fp"), "--image", self.questioned(corpus_dir, "cam00")]
        )
        assert code == 1
        err_lines = capsys.readouterr().err.strip().splitlines()
        assert len(err_lines) == 1 and err_lines[0].startswith("error: MissingAsset:")


@pytest.fixture(scope="module")
def run_dir(corpus_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("eval")
    code = main(
        [
            "evaluate",
            "--manifest",
            str(corpus_dir / "manifest.csv"),
            "--out",
            str(out),
            "--experiment",
            "auto_auto",
            "--experiment",
            "auto_over",
            "--seeds",
            "1,2",
            "--n-fingerprint",
            "3",
            "--n-questioned",
            "3",
            "--n-resamples",
            "5",
            "--sweep",
            "0:80",
            "--zero-fpr",
            "--mixing",
            "over",
            "--write-scores",
        ]
    )
    assert code == 0
    return out


class TestEvaluate:
    def test_reports_written(self, run_dir):
        report = json.loads((run_dir / "report_auto_auto.json").read_text())
        assert len(report["trials"]) == 2
        assert (run_dir / "report.csv").is_file()
        with open(run_dir / "report.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        assert {r["experiment"] for r in rows} == {"auto_auto", "auto_over"}
        assert sum(r["trial"] == "aggregate" for r in rows) == 2

    def test_sweep_curves_are_monotone(self, run_dir):
        with open(run_dir / "sweep_auto_auto.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        tprs = [float(r["tpr"]) for r in rows]
        tnrs = [float(r["tnr"]) for r in rows]
        assert all(a >= b for a, b in zip(tprs, tprs[1:]))
        assert all(a <= b for a, b in zip(tnrs, tnrs[1:]))

    def test_mixing_curve_has_exact_endpoints(self, run_dir):
        with open(run_dir / "mixing_over.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 101
        report = json.loads((run_dir / "report_auto_auto.json").read_text())
        trial_one = next(t for t in report["trials"] if t["seed"] == 1)
        assert float(rows[0]["tpr"]) == trial_one["rates"]["tpr"]

    def test_raw_scores_written(self, run_dir):
        from prnuid.evaluation import load_score_matrix

        matrix = load_score_matrix(run_dir / "scores_auto_auto_trial1.csv")
        assert matrix.positive_scores().size == 9
        assert matrix.negative_scores().size == 18

    def test_zero_fpr_file(self, run_dir):
        with open(run_dir / "zero_fpr_thresholds.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        assert {r["experiment"] for r in rows} == {"auto_auto", "auto_over"}
        assert all(float(r["tnr"]) == 1.0 for r in rows)

    def test_snapshot_records_replay_inputs(self, run_dir, corpus_dir):
        snapshot = json.loads((run_dir / "config.json").read_text())
        assert snapshot["seeds"] == [1, 2]
        assert snapshot["manifest_hash"]
        assert snapshot["denoise"]["sigma0"] == 3.0

    def test_unknown_experiment_is_domain_error(self, corpus_dir, tmp_path, capsys):
        code = main(
            [
                "evaluate",
                "--manifest",
                str(corpus_dir / "manifest.csv"),
                "--out",
                str(tmp_path),
                "--experiment",
                "auto_sideways",
            ]
        )
        assert code == 1
        assert "auto_sideways" in capsys.readouterr().err


class TestKappa:
    def test_ratings_csv(self, tmp_path, capsys):
        path = tmp_path / "ratings.csv"
        path.write_text("over,over,over\nunder,under,under\nauto,auto,auto\n", encoding="utf-8")
        assert main(["kappa", "--ratings", str(path)]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["kappa"] == 1.0
        assert payload["degenerate"] is False

    def test_missing_file_is_domain_error(self, tmp_path, capsys):
        assert main(["kappa", "--ratings", str(tmp_path / "none.csv")]) == 1


class TestConfigOverrides:
    def test_config_file_overrides_denoise(self, corpus_dir, tmp_path, capsys):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({"denoise": {"sigma0": 2.0}}), encoding="utf-8")
        fp_path = tmp_path / "cam.fp"
        code = main(
            ["fingerprint", *auto_images(corpus_dir), "--out", str(fp_path), "--config", str(config)]
        )
        assert code == 0

    def test_unknown_config_field_rejected(self, corpus_dir, tmp_path, capsys):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({"denoise": {"sigma_nought": 2.0}}), encoding="utf-8")
        code = main(
            ["fingerprint", *auto_images(corpus_dir), "--out", str(tmp_path / "x.fp"), "--config", str(config)]
        )
        assert code == 1
        assert "sigma_nought" in capsys.readouterr().err
