"""Batch command-line front end.

Subcommands: simulate | fingerprint | match | evaluate | kappa.  Exit code 0
on success, 1 on a domain error (single machine-parsable line on stderr),
2 on usage errors.  Every run that writes an output directory also writes a
``config.json`` snapshot there with the resolved configuration, seeds, and
input manifest hash, which is enough to replay the run bit-identically.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import Image, ImageMeta
from .dataset import DiskCorpus, decode_image, load_manifest, partition_trial
from .denoise import DenoiseConfig
from .errors import DomainError, PrnuError
from .evaluation import (
    EXPERIMENTS,
    ScoreMatrix,
    build_report,
    estimate_fingerprints,
    fleiss_kappa,
    mixing_sensitivity,
    run_trial,
    save_score_matrix,
    threshold_sweep,
    zero_fpr_threshold,
)
from .fingerprint import (
    NuaConfig,
    estimate_camera_fingerprint,
    load_fingerprint,
    save_fingerprint,
)
from .matching import MatchConfig, match
from .sim import SyntheticCorpus, write_corpus


def _placeholder_meta(path: Path) -> ImageMeta:
    return ImageMeta(
        camera_id="unknown",
        camera_model="unknown",
        scene_id=path.stem,
        exposure_type="Auto",
        iso=100.0,
        exposure_time_s=0.01,
        f_number=1.8,
    )


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    config_path = Path(path)
    if not config_path.is_file():
        raise DomainError(f"config file not found: {config_path}")
    try:
        overrides = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DomainError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(overrides, dict):
        raise DomainError("config file must hold a JSON object")
    return overrides


def _build_configs(args) -> tuple[DenoiseConfig, NuaConfig, MatchConfig]:
    overrides = _load_config_file(getattr(args, "config", None))
    for section in overrides:
        if section not in ("denoise", "nua", "match"):
            raise DomainError(f"unknown config section {section!r}")

    def apply(cls, section):
        fields = {f.name for f in dataclasses.fields(cls)}
        given = overrides.get(section, {})
        unknown = set(given) - fields
        if unknown:
            raise DomainError(f"unknown {section} config fields: {sorted(unknown)}")
        coerced = {
            key: tuple(value) if isinstance(value, list) else value for key, value in given.items()
        }
        return cls(**coerced)

    denoise_cfg = apply(DenoiseConfig, "denoise")
    nua_cfg = apply(NuaConfig, "nua")
    match_cfg = apply(MatchConfig, "match")
    threshold = getattr(args, "threshold", None)
    if threshold is not None:
        match_cfg = dataclasses.replace(match_cfg, threshold=threshold)
    return denoise_cfg, nua_cfg, match_cfg


def _config_snapshot(args, configs, extra: dict) -> dict:
    denoise_cfg, nua_cfg, match_cfg = configs
    return {
        "tool": f"prnuid {__version__}",
        "command": args.command,
        "denoise": dataclasses.asdict(denoise_cfg),
        "nua": dataclasses.asdict(nua_cfg),
        "match": dataclasses.asdict(match_cfg),
        **extra,
    }


def _write_snapshot(out_dir: Path, snapshot: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(
        json.dumps(snapshot, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _write_csv(path: Path, header: tuple, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


# --- subcommands ---------------------------------------------------------------


def cmd_simulate(args) -> int:
    size = args.size.split("x")
    if len(size) != 2:
        raise DomainError(f"--size must look like 256x256, got {args.size!r}")
    corpus = SyntheticCorpus(
        n_cameras=args.cameras,
        scenes_per_camera=args.scenes,
        modes=tuple(args.modes.split(",")),
        seed=args.seed,
        shape=(int(size[0]), int(size[1])),
        protocol=args.protocol,
        generator=args.generator,
        k_strength=args.k_strength,
        gain_cap=args.gain_cap,
    )
    out_dir = Path(args.out)
    manifest_path = write_corpus(corpus, out_dir)
    _write_snapshot(
        out_dir,
        {
            "tool": f"prnuid {__version__}",
            "command": "simulate",
            "seed": args.seed,
            "cameras": args.cameras,
            "scenes": args.scenes,
            "modes": args.modes,
            "protocol": args.protocol,
            "generator": args.generator,
            "size": args.size,
            "k_strength": args.k_strength,
            "gain_cap": args.gain_cap,
            "manifest_hash": corpus.manifest.content_hash(),
        },
    )
    print(json.dumps({"manifest": str(manifest_path), "images": len(corpus.manifest.rows)}))
    return 0


def cmd_fingerprint(args) -> int:
    configs = _build_configs(args)
    denoise_cfg, nua_cfg, _ = configs
    images: list[Image] = []
    for raw in args.images:
        path = Path(raw)
        image = decode_image(path, _placeholder_meta(path))
        if images and image.shape != images[0].shape:
            raise DomainError(
                f"image {path} has shape {image.shape}, expected {images[0].shape} "
                f"(first image {args.images[0]})"
            )
        images.append(image)
    fp = estimate_camera_fingerprint(images, denoise_cfg, nua_cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    # The meta block carries everything needed to replay this estimate.
    save_fingerprint(
        fp,
        out,
        meta={
            "n_images": fp.n_images,
            "sources": list(args.images),
            "denoise": dataclasses.asdict(denoise_cfg),
            "nua": dataclasses.asdict(nua_cfg),
        },
    )
    print(json.dumps({"fingerprint": str(out), "n_images": fp.n_images, "shape": list(fp.shape)}))
    return 0


def cmd_match(args) -> int:
    configs = _build_configs(args)
    denoise_cfg, nua_cfg, match_cfg = configs
    fp, fp_meta = load_fingerprint(args.fingerprint)
    image_path = Path(args.image)
    image = decode_image(image_path, _placeholder_meta(image_path))
    result = match(image, fp, denoise_cfg, nua_cfg, match_cfg)
    payload = {
        "image": str(image_path),
        "fingerprint": str(args.fingerprint),
        "pce": result.pce,
        "correlation_peak": result.correlation_peak,
        "peak_location": list(result.peak_location),
        "decision": result.decision,
        "threshold": result.threshold,
    }
    print(json.dumps(payload, sort_keys=True))
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "match.json").write_text(
            json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        _write_snapshot(out_dir, _config_snapshot(args, configs, {"fingerprint_meta": fp_meta}))
    return 0


def _parse_seeds(raw: str) -> list[int]:
    try:
        return [int(part) for part in raw.split(",") if part != ""]
    except ValueError as exc:
        raise DomainError(f"--seeds must be comma-separated integers, got {raw!r}") from exc


def _parse_sweep(raw: str) -> range:
    try:
        lo, hi = raw.split(":")
        return range(int(lo), int(hi) + 1)
    except ValueError as exc:
        raise DomainError(f"--sweep must look like LO:HI, got {raw!r}") from exc


def cmd_evaluate(args) -> int:
    configs = _build_configs(args)
    denoise_cfg, nua_cfg, match_cfg = configs
    seeds = _parse_seeds(args.seeds)
    if not seeds:
        raise DomainError("--seeds must name at least one trial seed")
    experiments = args.experiment or list(EXPERIMENTS)
    for name in experiments:
        if name not in EXPERIMENTS:
            raise DomainError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    mixing_modes = args.mixing or []
    for mode in mixing_modes:
        needed = f"auto_{mode}"
        if needed not in experiments:
            experiments.append(needed)
        if "auto_auto" not in experiments:
            experiments.append("auto_auto")

    corpus = DiskCorpus(load_manifest(args.manifest))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    # Fingerprints keyed by the exact rows that built them, so experiments
    # sharing a fingerprint side of the same trial reuse the expensive part.
    fingerprint_cache: dict[tuple, dict] = {}
    matrices: dict[tuple[str, int], ScoreMatrix] = {}
    reports = []
    for name in experiments:
        fp_exposure, q_exposure = EXPERIMENTS[name]
        trials = []
        for trial_seed in seeds:
            partition = partition_trial(
                corpus.manifest,
                fp_exposure,
                q_exposure,
                trial_seed,
                args.n_fingerprint,
                args.n_questioned,
            )
            cache_key = tuple(
                (cam,) + tuple(row.key for row in rows)
                for cam, rows in sorted(partition.fingerprint_rows.items())
            )
            if cache_key not in fingerprint_cache:
                fingerprint_cache[cache_key] = estimate_fingerprints(
                    partition, corpus, denoise_cfg, nua_cfg, jobs=args.jobs
                )
            matrix, trial = run_trial(
                corpus,
                fp_exposure,
                q_exposure,
                trial_seed,
                denoise_cfg,
                nua_cfg,
                match_cfg,
                n_fingerprint=args.n_fingerprint,
                n_questioned=args.n_questioned,
                n_resamples=args.n_resamples,
                jobs=args.jobs,
                fingerprints=fingerprint_cache[cache_key],
            )
            matrices[(name, trial_seed)] = matrix
            trials.append(trial)
            if args.write_scores:
                save_score_matrix(matrix, out_dir / f"scores_{name}_trial{trial_seed}.csv")
        report = build_report(
            name,
            trials,
            corpus,
            match_cfg,
            n_fingerprint=args.n_fingerprint,
            n_questioned=args.n_questioned,
            n_resamples=args.n_resamples,
            denoise_cfg=denoise_cfg,
            nua_cfg=nua_cfg,
        )
        reports.append(report)
        (out_dir / f"report_{name}.json").write_text(report.to_json() + "\n", encoding="utf-8")

    _write_csv(
        out_dir / "report.csv",
        ("experiment", "trial", "tpr", "tpr_std", "tnr", "tnr_std", "accuracy", "accuracy_std"),
        [row for report in reports for row in report.csv_rows()],
    )

    if args.sweep:
        taus = _parse_sweep(args.sweep)
        for name in experiments:
            pooled = _pool_matrices([matrices[(name, s)] for s in seeds])
            curve = threshold_sweep(pooled, taus)
            _write_csv(out_dir / f"sweep_{name}.csv", ("threshold", "tpr", "tnr"), curve)

    if args.zero_fpr:
        rows = []
        for name in experiments:
            pooled = _pool_matrices([matrices[(name, s)] for s in seeds])
            tau, rates = zero_fpr_threshold(pooled)
            rows.append((name, tau, rates.tpr, rates.tnr, rates.accuracy))
        _write_csv(
            out_dir / "zero_fpr_thresholds.csv",
            ("experiment", "threshold", "tpr", "tnr", "accuracy"),
            rows,
        )

    for mode in mixing_modes:
        nominal = matrices[("auto_auto", seeds[0])]
        offnominal = matrices[(f"auto_{mode}", seeds[0])]
        curve = mixing_sensitivity(
            nominal,
            offnominal,
            threshold=match_cfg.threshold,
            steps=args.mixing_steps,
            n_resamples=args.n_resamples,
            seed=seeds[0],
        )
        _write_csv(out_dir / f"mixing_{mode}.csv", ("proportion", "tpr"), curve)

    _write_snapshot(
        out_dir,
        _config_snapshot(
            args,
            configs,
            {
                "manifest": str(args.manifest),
                "manifest_hash": corpus.manifest.content_hash(),
                "seeds": seeds,
                "experiments": experiments,
                "n_fingerprint": args.n_fingerprint,
                "n_questioned": args.n_questioned,
                "n_resamples": args.n_resamples,
                "jobs": args.jobs,
            },
        ),
    )
    summary = {report.name: report.aggregate for report in reports}
    print(json.dumps({"out": str(out_dir), "aggregates": summary}, sort_keys=True))
    return 0


def _pool_matrices(matrices):
    scores: dict[tuple[str, str], list[np.ndarray]] = {}
    keys: dict[str, list[str]] = {}
    for matrix in matrices:
        for pair, values in matrix.scores.items():
            scores.setdefault(pair, []).append(values)
        for cam, scene_ids in matrix.question_keys.items():
            keys.setdefault(cam, []).extend(scene_ids)
    return ScoreMatrix(
        fingerprint_cameras=matrices[0].fingerprint_cameras,
        question_keys={cam: tuple(ids) for cam, ids in keys.items()},
        scores={pair: np.concatenate(chunks) for pair, chunks in scores.items()},
        provenance={"pooled_trials": len(matrices)},
        incomparable=sum(m.incomparable for m in matrices),
        degenerate=sum(m.degenerate for m in matrices),
    )


def cmd_kappa(args) -> int:
    path = Path(args.ratings)
    if not path.is_file():
        raise DomainError(f"ratings file not found: {path}")
    with open(path, newline="", encoding="utf-8") as f:
        rows = [row for row in csv.reader(f) if row]
    result = fleiss_kappa(np.asarray(rows, dtype=object))
    print(json.dumps({"kappa": result.value, "degenerate": result.degenerate}))
    return 0


# --- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prnuid",
        description="Sensor-pattern-noise source camera identification toolkit",
    )
    parser.add_argument("--version", action="version", version=f"prnuid {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a synthetic corpus to disk")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--cameras", type=int, default=8)
    p.add_argument("--scenes", type=int, default=100)
    p.add_argument("--modes", default="Auto,Over,Under")
    p.add_argument("--protocol", choices=("A", "B"), default="A")
    p.add_argument("--generator", default="natural_mix")
    p.add_argument("--size", default="256x256")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k-strength", type=float, default=0.02)
    p.add_argument("--gain-cap", type=float, default=4.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fingerprint", help="estimate a camera fingerprint from images")
    p.add_argument("images", nargs="+", help="image files from one camera, same size")
    p.add_argument("--out", required=True, help="fingerprint file to write")
    p.add_argument("--config", help="JSON config overrides")
    p.set_defaults(func=cmd_fingerprint)

    p = sub.add_parser("match", help="score one questioned image against a fingerprint")
    p.add_argument("--fingerprint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--config", help="JSON config overrides")
    p.add_argument("--out", help="optional output directory for match.json + config snapshot")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("evaluate", help="run error-rate experiments over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument(
        "--experiment",
        action="append",
        help=f"experiment name, repeatable; default: all of {sorted(EXPERIMENTS)}",
    )
    p.add_argument("--seeds", default="1,2,3,4,5", help="comma-separated trial seeds")
    p.add_argument("--n-fingerprint", type=int, default=30)
    p.add_argument("--n-questioned", type=int, default=70)
    p.add_argument("--n-resamples", type=int, default=100)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--sweep", help="integer threshold sweep LO:HI, written per experiment")
    p.add_argument("--zero-fpr", action="store_true", help="report lowest zero-FPR thresholds")
    p.add_argument(
        "--mixing",
        action="append",
        choices=("over", "under"),
        help="emit the off-nominal mixing curve for this exposure, repeatable",
    )
    p.add_argument("--mixing-steps", type=int, default=101)
    p.add_argument("--write-scores", action="store_true", help="also write raw score matrices")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--config", help="JSON config overrides")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("kappa", help="Fleiss kappa over a subjects-by-raters ratings CSV")
    p.add_argument("--ratings", required=True)
    p.set_defaults(func=cmd_kappa)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PrnuError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
