"""Experiment harness: error rates with balanced resampling, sensitivity curves.

A score matrix holds one signed PCE per (fingerprint camera, source camera,
questioned image).  Positive-class cells pair a fingerprint with its own
camera's questioned images; every other pairing is negative.  The negative
class is far larger, so accuracy is balanced by repeatedly drawing negative
subsets the size of the positive class and averaging.

All randomness flows from named seeds recorded in the report, and score
computation is an ordered map over questioned images, so reports replay
bit-identically at any worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import multiprocessing
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .core import CameraFingerprint, DEFAULT_PCE_THRESHOLD
from .dataset import ManifestRow, TrialPartition, partition_trial
from .denoise import DenoiseConfig
from .errors import DegenerateInput, DomainError
from .fingerprint import (
    NuaConfig,
    SaturationRule,
    estimate_camera_fingerprint,
    image_residual,
    nua_suppress,
)
from .matching import MatchConfig, ResidualCorrelator, signed_pce

#: Experiment name -> (fingerprint exposure, questioned exposure).
EXPERIMENTS = {
    "auto_auto": ("Auto", "Auto"),
    "auto_over": ("Auto", "Over"),
    "auto_under": ("Auto", "Under"),
    "over_over": ("Over", "Over"),
    "under_under": ("Under", "Under"),
}


@dataclass(frozen=True)
class ScoreMatrix:
    """Signed PCE scores for every comparable (fingerprint, questioned) pair."""

    fingerprint_cameras: tuple[str, ...]
    question_keys: dict[str, tuple[str, ...]]
    scores: dict[tuple[str, str], np.ndarray]
    provenance: dict = field(default_factory=dict)
    incomparable: int = 0
    degenerate: int = 0

    def positive_scores(self) -> np.ndarray:
        cells = [self.scores[(c, c)] for c in self.fingerprint_cameras if (c, c) in self.scores]
        return np.concatenate(cells) if cells else np.empty(0)

    def negative_scores(self) -> np.ndarray:
        cells = [
            values for (fp, src), values in sorted(self.scores.items()) if fp != src
        ]
        return np.concatenate(cells) if cells else np.empty(0)

def save_score_matrix(matrix: ScoreMatrix, path) -> None:
    """Write one row per scored pair: fingerprint camera, source, scene, pce."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(("fingerprint_camera", "source_camera", "scene_id", "pce"))
        for (fp_cam, src_cam), values in sorted(matrix.scores.items()):
            for scene_id, pce in zip(matrix.question_keys[src_cam], values):
                writer.writerow((fp_cam, src_cam, scene_id, repr(float(pce))))


def load_score_matrix(path) -> ScoreMatrix:
    """Rebuild a matrix written by :func:`save_score_matrix`."""
    cells: dict[tuple[str, str], list[float]] = {}
    keys: dict[str, tuple[str, ...]] = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != ["fingerprint_camera", "source_camera", "scene_id", "pce"]:
            raise DomainError(f"not a score matrix file: {path}")
        for record in reader:
            pair = (record["fingerprint_camera"], record["source_camera"])
            cells.setdefault(pair, []).append(float(record["pce"]))
            scenes = keys.setdefault(record["source_camera"], ())
            if len(cells[pair]) > len(scenes):
                keys[record["source_camera"]] = scenes + (record["scene_id"],)
    return ScoreMatrix(
        fingerprint_cameras=tuple(sorted({fp for fp, _ in cells})),
        question_keys=keys,
        scores={pair: np.asarray(values) for pair, values in cells.items()},
    )


@dataclass(frozen=True)
class ErrorRates:
    """Balanced TPR/TNR/accuracy with dispersion over negative resamples."""

    tpr: float
    tnr: float
    accuracy: float
    tpr_std: float
    tnr_std: float
    accuracy_std: float
    n_resamples: int
    n_positive: int
    n_negative: int

    def as_dict(self) -> dict:
        return {
            "tpr": self.tpr,
            "tnr": self.tnr,
            "accuracy": self.accuracy,
            "tpr_std": self.tpr_std,
            "tnr_std": self.tnr_std,
            "accuracy_std": self.accuracy_std,
            "n_resamples": self.n_resamples,
            "n_positive": self.n_positive,
            "n_negative": self.n_negative,
        }


# --- score computation -------------------------------------------------------

_WORKER_STATE: dict = {}


def _score_one_row(
    row: ManifestRow,
    corpus,
    fp_items: list[tuple[str, CameraFingerprint]],
    denoise_cfg: DenoiseConfig,
    nua_cfg: NuaConfig,
    match_cfg: MatchConfig,
) -> list[tuple[str, float, str]]:
    image = corpus.load(row)
    try:
        questioned = nua_suppress(image_residual(image, denoise_cfg).values, nua_cfg)
        correlator = ResidualCorrelator(questioned)
    except DegenerateInput:
        correlator = None
    out = []
    for fp_cam, fp in fp_items:
        if fp.shape != image.shape:
            out.append((fp_cam, float("nan"), "incomparable"))
            continue
        if correlator is None:
            out.append((fp_cam, 0.0, "degenerate"))
            continue
        try:
            plane = correlator.plane(fp.values * image.pixels)
            result = signed_pce(plane, match_cfg)
            out.append((fp_cam, result.pce, "ok"))
        except DegenerateInput:
            out.append((fp_cam, 0.0, "degenerate"))
    return out


def _init_score_worker(corpus, fp_items, denoise_cfg, nua_cfg, match_cfg):
    _WORKER_STATE["score"] = (corpus, fp_items, denoise_cfg, nua_cfg, match_cfg)


def _score_row_task(row: ManifestRow):
    corpus, fp_items, denoise_cfg, nua_cfg, match_cfg = _WORKER_STATE["score"]
    return _score_one_row(row, corpus, fp_items, denoise_cfg, nua_cfg, match_cfg)


def compute_scores(
    partition: TrialPartition,
    fingerprints: Mapping[str, CameraFingerprint],
    corpus,
    denoise_cfg: DenoiseConfig = DenoiseConfig(),
    nua_cfg: NuaConfig = NuaConfig(),
    match_cfg: MatchConfig = MatchConfig(),
    jobs: int = 1,
) -> ScoreMatrix:
    """Score every questioned image against every fingerprint.

    Cross-camera pairs whose shapes disagree are counted as incomparable
    rather than silently resampled; blank questioned images (a fully clipped
    render, say) score 0 and are counted as degenerate.
    """
    fp_items = sorted(fingerprints.items())
    fp_cameras = tuple(cam for cam, _ in fp_items)
    rows = [
        row
        for src_cam in sorted(partition.questioned_rows)
        for row in partition.questioned_rows[src_cam]
    ]
    if jobs > 1:
        with multiprocessing.Pool(
            jobs,
            initializer=_init_score_worker,
            initargs=(corpus, fp_items, denoise_cfg, nua_cfg, match_cfg),
        ) as pool:
            per_row = pool.map(_score_row_task, rows)
    else:
        per_row = [
            _score_one_row(row, corpus, fp_items, denoise_cfg, nua_cfg, match_cfg)
            for row in rows
        ]
    keys: dict[str, list[str]] = {}
    cells: dict[tuple[str, str], list[float]] = {}
    incomparable = degenerate = 0
    for row, row_scores in zip(rows, per_row):
        src = row.meta.camera_id
        keys.setdefault(src, []).append(row.meta.scene_id)
        for fp_cam, pce, status in row_scores:
            if status == "incomparable":
                incomparable += 1
                continue
            if status == "degenerate":
                degenerate += 1
            cells.setdefault((fp_cam, src), []).append(pce)
    return ScoreMatrix(
        fingerprint_cameras=fp_cameras,
        question_keys={cam: tuple(scene_ids) for cam, scene_ids in keys.items()},
        scores={pair: np.asarray(values) for pair, values in cells.items()},
        provenance={
            "trial_seed": partition.trial_seed,
            "fingerprint_exposure": partition.fingerprint_exposure,
            "questioned_exposure": partition.questioned_exposure,
        },
        incomparable=incomparable,
        degenerate=degenerate,
    )


def _init_fp_worker(corpus, partition, denoise_cfg, nua_cfg, rule):
    _WORKER_STATE["fp"] = (corpus, partition, denoise_cfg, nua_cfg, rule)


def _estimate_fp_task(camera_id: str):
    corpus, partition, denoise_cfg, nua_cfg, rule = _WORKER_STATE["fp"]
    images = [corpus.load(row) for row in partition.fingerprint_rows[camera_id]]
    return camera_id, estimate_camera_fingerprint(images, denoise_cfg, nua_cfg, rule)


def estimate_fingerprints(
    partition: TrialPartition,
    corpus,
    denoise_cfg: DenoiseConfig = DenoiseConfig(),
    nua_cfg: NuaConfig = NuaConfig(),
    rule: SaturationRule | None = SaturationRule(),
    jobs: int = 1,
) -> dict[str, CameraFingerprint]:
    """One fingerprint per camera from the partition's fingerprint rows."""
    cameras = sorted(partition.fingerprint_rows)
    if jobs > 1:
        with multiprocessing.Pool(
            jobs,
            initializer=_init_fp_worker,
            initargs=(corpus, partition, denoise_cfg, nua_cfg, rule),
        ) as pool:
            pairs = pool.map(_estimate_fp_task, cameras)
    else:
        _init_fp_worker(corpus, partition, denoise_cfg, nua_cfg, rule)
        pairs = [_estimate_fp_task(camera_id) for camera_id in cameras]
    return dict(pairs)


# --- error rates and sensitivity analyses ------------------------------------


def balanced_error_rates(
    matrix: ScoreMatrix,
    threshold: float = DEFAULT_PCE_THRESHOLD,
    n_resamples: int = 100,
    seed: int = 0,
) -> ErrorRates:
    """TPR over all positives; TNR/accuracy balanced over negative resamples.

    Each resample draws, without replacement, as many negative scores as there
    are positives, so accuracy responds equally to both classes.
    """
    positives = matrix.positive_scores()
    negatives = matrix.negative_scores()
    if positives.size == 0 or negatives.size == 0:
        raise DomainError("both score classes must be nonempty")
    if n_resamples < 1:
        raise DomainError(f"n_resamples must be >= 1, got {n_resamples}")
    if negatives.size < positives.size:
        raise DomainError(
            f"cannot draw {positives.size} negatives without replacement from {negatives.size}"
        )
    tpr = float(np.mean(positives > threshold))
    streams = np.random.SeedSequence([seed]).spawn(n_resamples)
    tnrs = np.empty(n_resamples)
    for i, stream in enumerate(streams):
        rng = np.random.default_rng(stream)
        drawn = negatives[rng.choice(negatives.size, size=positives.size, replace=False)]
        tnrs[i] = np.mean(drawn <= threshold)
    tnr = float(tnrs.mean())
    tnr_std = float(tnrs.std(ddof=1)) if n_resamples > 1 else 0.0
    return ErrorRates(
        tpr=tpr,
        tnr=tnr,
        accuracy=(tpr + tnr) / 2.0,
        tpr_std=0.0,
        tnr_std=tnr_std,
        accuracy_std=tnr_std / 2.0,
        n_resamples=n_resamples,
        n_positive=int(positives.size),
        n_negative=int(negatives.size),
    )


def _paired_positives(nominal: ScoreMatrix, offnominal: ScoreMatrix):
    if nominal.fingerprint_cameras != offnominal.fingerprint_cameras:
        raise DomainError("matrices cover different fingerprint cameras")
    if nominal.question_keys != offnominal.question_keys:
        raise DomainError("matrices cover different questioned image sets")
    nom = nominal.positive_scores()
    off = offnominal.positive_scores()
    if nom.size != off.size or nom.size == 0:
        raise DomainError("positive classes must be nonempty and equally sized")
    return nom, off


def mixing_sensitivity(
    matrix_nominal: ScoreMatrix,
    matrix_offnominal: ScoreMatrix,
    threshold: float = DEFAULT_PCE_THRESHOLD,
    steps: int = 101,
    n_resamples: int = 100,
    seed: int = 0,
) -> list[tuple[float, float]]:
    """TPR as off-nominal questioned images gradually replace nominal ones.

    Positives are paired by (camera, scene), so replacing a slot swaps the
    nominal score for the off-nominal score of the same capture position.
    Endpoints are exact; interior points average ``n_resamples`` seeded
    replacement draws.
    """
    if steps < 2:
        raise DomainError(f"steps must be >= 2, got {steps}")
    nom, off = _paired_positives(matrix_nominal, matrix_offnominal)
    nom_hits = nom > threshold
    off_hits = off > threshold
    n = nom.size
    total_nom = int(nom_hits.sum())
    curve = []
    for j in range(steps):
        proportion = j / (steps - 1)
        k = int(np.floor(proportion * n))
        if k == 0:
            tpr = total_nom / n
        elif k == n:
            tpr = float(off_hits.mean())
        else:
            draws = np.empty(n_resamples)
            for r, stream in enumerate(np.random.SeedSequence([seed, j]).spawn(n_resamples)):
                rng = np.random.default_rng(stream)
                replaced = rng.choice(n, size=k, replace=False)
                draws[r] = (
                    total_nom - int(nom_hits[replaced].sum()) + int(off_hits[replaced].sum())
                ) / n
            tpr = float(draws.mean())
        curve.append((proportion, tpr))
    return curve


def threshold_sweep(
    matrix: ScoreMatrix, thresholds: Iterable[int]
) -> list[tuple[int, float, float]]:
    """Full-matrix TPR and TNR at each threshold; monotone by construction."""
    positives = np.sort(matrix.positive_scores())
    negatives = np.sort(matrix.negative_scores())
    if positives.size == 0 or negatives.size == 0:
        raise DomainError("both score classes must be nonempty")
    out = []
    for tau in thresholds:
        n_missed = int(np.searchsorted(positives, tau, side="right"))
        n_rejected = int(np.searchsorted(negatives, tau, side="right"))
        tpr = (positives.size - n_missed) / positives.size
        tnr = n_rejected / negatives.size
        out.append((int(tau), float(tpr), float(tnr)))
    return out


def zero_fpr_threshold(matrix: ScoreMatrix) -> tuple[int, ErrorRates]:
    """Smallest integer threshold with no false positives, and the rates there."""
    positives = matrix.positive_scores()
    negatives = matrix.negative_scores()
    if negatives.size == 0 or positives.size == 0:
        raise DomainError("both score classes must be nonempty")
    tau = int(np.floor(negatives.max())) + 1
    tpr = float(np.mean(positives > tau))
    rates = ErrorRates(
        tpr=tpr,
        tnr=1.0,
        accuracy=(tpr + 1.0) / 2.0,
        tpr_std=0.0,
        tnr_std=0.0,
        accuracy_std=0.0,
        n_resamples=0,
        n_positive=int(positives.size),
        n_negative=int(negatives.size),
    )
    return tau, rates


# --- inter-rater agreement ----------------------------------------------------


@dataclass(frozen=True)
class KappaResult:
    value: float
    degenerate: bool = False


def fleiss_kappa(ratings) -> KappaResult:
    """Fleiss's kappa over a subjects x raters matrix of categorical labels.

    If every rater used one single category for every subject, chance
    agreement is 1 and the statistic is undefined; that case is reported as
    perfect agreement with the ``degenerate`` flag set.
    """
    ratings = np.asarray(ratings)
    if ratings.ndim != 2:
        raise DomainError(f"ratings must be 2-D (subjects x raters), got shape {ratings.shape}")
    n_subjects, n_raters = ratings.shape
    if n_subjects < 2 or n_raters < 2:
        raise DomainError("need at least 2 subjects and 2 raters")
    categories, encoded = np.unique(ratings, return_inverse=True)
    encoded = encoded.reshape(ratings.shape)
    if categories.size == 1:
        return KappaResult(value=1.0, degenerate=True)
    counts = np.zeros((n_subjects, categories.size))
    for j in range(categories.size):
        counts[:, j] = (encoded == j).sum(axis=1)
    per_subject = (np.sum(counts * counts, axis=1) - n_raters) / (n_raters * (n_raters - 1))
    p_observed = float(per_subject.mean())
    proportions = counts.sum(axis=0) / (n_subjects * n_raters)
    p_expected = float(np.sum(proportions * proportions))
    return KappaResult(value=(p_observed - p_expected) / (1.0 - p_expected))


# --- full experiments ---------------------------------------------------------


@dataclass(frozen=True)
class TrialResult:
    seed: int
    rates: ErrorRates
    per_model: dict[str, dict[str, float]]
    incomparable: int
    degenerate: int

    def as_dict(self) -> dict:
        return {
            "seed": self.seed,
            "rates": self.rates.as_dict(),
            "per_model": self.per_model,
            "incomparable": self.incomparable,
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True)
class ExperimentReport:
    name: str
    trials: tuple[TrialResult, ...]
    aggregate: dict[str, float]
    provenance: dict

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "trials": [t.as_dict() for t in self.trials],
            "aggregate": self.aggregate,
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2)

    def csv_rows(self) -> list[tuple]:
        rows = [
            (
                self.name,
                str(t.seed),
                t.rates.tpr,
                t.rates.tpr_std,
                t.rates.tnr,
                t.rates.tnr_std,
                t.rates.accuracy,
                t.rates.accuracy_std,
            )
            for t in self.trials
        ]
        agg = self.aggregate
        rows.append(
            (
                self.name,
                "aggregate",
                agg["tpr"],
                agg["tpr_std_trials"],
                agg["tnr"],
                agg["tnr_std_trials"],
                agg["accuracy"],
                agg["accuracy_std_trials"],
            )
        )
        return rows


def _per_model_rates(
    matrix: ScoreMatrix, models: Mapping[str, str], threshold: float
) -> dict[str, dict[str, float]]:
    out: dict[str, dict[str, float]] = {}
    for model in sorted(set(models.values())):
        cameras = [c for c in matrix.fingerprint_cameras if models.get(c) == model]
        pos = [matrix.scores[(c, c)] for c in cameras if (c, c) in matrix.scores]
        neg = [
            values
            for (fp, src), values in sorted(matrix.scores.items())
            if fp in cameras and fp != src
        ]
        entry: dict[str, float] = {}
        if pos:
            entry["tpr"] = float(np.mean(np.concatenate(pos) > threshold))
        if neg:
            entry["tnr"] = float(np.mean(np.concatenate(neg) <= threshold))
        out[model] = entry
    return out


def _aggregate(trials: list[TrialResult]) -> dict[str, float]:
    def level(stat: str) -> tuple[float, float]:
        values = np.asarray([getattr(t.rates, stat) for t in trials])
        return float(values.mean()), (float(values.std(ddof=1)) if len(values) > 1 else 0.0)

    tpr, tpr_std = level("tpr")
    tnr, tnr_std = level("tnr")
    acc, acc_std = level("accuracy")
    return {
        "tpr": tpr,
        "tpr_std_trials": tpr_std,
        "tnr": tnr,
        "tnr_std_trials": tnr_std,
        "accuracy": acc,
        "accuracy_std_trials": acc_std,
        # Resample-level dispersion, averaged over trials; reported separately
        # because it answers a different question than trial-to-trial spread.
        "tnr_std_resamples": float(np.mean([t.rates.tnr_std for t in trials])),
        "accuracy_std_resamples": float(np.mean([t.rates.accuracy_std for t in trials])),
    }


def run_trial(
    corpus,
    fp_exposure: str,
    q_exposure: str,
    trial_seed: int,
    denoise_cfg: DenoiseConfig = DenoiseConfig(),
    nua_cfg: NuaConfig = NuaConfig(),
    match_cfg: MatchConfig = MatchConfig(),
    n_fingerprint: int = 30,
    n_questioned: int = 70,
    n_resamples: int = 100,
    jobs: int = 1,
    fingerprints: Mapping[str, CameraFingerprint] | None = None,
) -> tuple[ScoreMatrix, TrialResult]:
    """One partition -> fingerprints -> score matrix -> balanced rates.

    Precomputed ``fingerprints`` may be supplied when several experiments
    share the same fingerprint side of the same trial seed.
    """
    partition = partition_trial(
        corpus.manifest, fp_exposure, q_exposure, trial_seed, n_fingerprint, n_questioned
    )
    if fingerprints is None:
        fingerprints = estimate_fingerprints(partition, corpus, denoise_cfg, nua_cfg, jobs=jobs)
    matrix = compute_scores(
        partition, fingerprints, corpus, denoise_cfg, nua_cfg, match_cfg, jobs=jobs
    )
    rates = balanced_error_rates(matrix, match_cfg.threshold, n_resamples, seed=trial_seed)
    models = corpus.manifest.camera_models()
    trial = TrialResult(
        seed=trial_seed,
        rates=rates,
        per_model=_per_model_rates(matrix, models, match_cfg.threshold),
        incomparable=matrix.incomparable,
        degenerate=matrix.degenerate,
    )
    return matrix, trial


def config_digest(
    denoise_cfg: DenoiseConfig, nua_cfg: NuaConfig, match_cfg: MatchConfig
) -> str:
    """Stable hash of the resolved pipeline configuration, for report provenance."""
    blob = json.dumps(
        {
            "denoise": dataclasses.asdict(denoise_cfg),
            "nua": dataclasses.asdict(nua_cfg),
            "match": dataclasses.asdict(match_cfg),
        },
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def build_report(
    name: str,
    trials: list[TrialResult],
    corpus,
    match_cfg: MatchConfig,
    n_fingerprint: int,
    n_questioned: int,
    n_resamples: int,
    denoise_cfg: DenoiseConfig = DenoiseConfig(),
    nua_cfg: NuaConfig = NuaConfig(),
) -> ExperimentReport:
    """Assemble the report for trials that were run elsewhere."""
    fp_exposure, q_exposure = EXPERIMENTS[name]
    provenance = {
        "experiment": name,
        "fingerprint_exposure": fp_exposure,
        "questioned_exposure": q_exposure,
        "seeds": [t.seed for t in trials],
        "manifest_hash": corpus.manifest.content_hash(),
        "config_digest": config_digest(denoise_cfg, nua_cfg, match_cfg),
        "threshold": match_cfg.threshold,
        "n_fingerprint": n_fingerprint,
        "n_questioned": n_questioned,
        "n_resamples": n_resamples,
    }
    return ExperimentReport(
        name=name, trials=tuple(trials), aggregate=_aggregate(trials), provenance=provenance
    )


def run_experiment(
    name: str,
    corpus,
    seeds: Iterable[int],
    denoise_cfg: DenoiseConfig = DenoiseConfig(),
    nua_cfg: NuaConfig = NuaConfig(),
    match_cfg: MatchConfig = MatchConfig(),
    n_fingerprint: int = 30,
    n_questioned: int = 70,
    n_resamples: int = 100,
    jobs: int = 1,
) -> ExperimentReport:
    """Run one named experiment over several trial seeds and aggregate."""
    if name not in EXPERIMENTS:
        raise DomainError(f"experiment must be one of {sorted(EXPERIMENTS)}, got {name!r}")
    fp_exposure, q_exposure = EXPERIMENTS[name]
    seeds = list(seeds)
    if not seeds:
        raise DomainError("at least one trial seed is required")
    trials = []
    for trial_seed in seeds:
        _, trial = run_trial(
            corpus,
            fp_exposure,
            q_exposure,
            trial_seed,
            denoise_cfg,
            nua_cfg,
            match_cfg,
            n_fingerprint,
            n_questioned,
            n_resamples,
            jobs,
        )
        trials.append(trial)
    return build_report(
        name,
        trials,
        corpus,
        match_cfg,
        n_fingerprint,
        n_questioned,
        n_resamples,
        denoise_cfg=denoise_cfg,
        nua_cfg=nua_cfg,
    )
