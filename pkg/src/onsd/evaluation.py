"""Grouped k-fold evaluation: video accuracy, frame accuracy, width MAE.

Folds are built over patients, never videos, so no patient contributes to
both sides of a split. Videos with no usable frame produce indeterminate
verdicts, which are counted as incorrect rather than dropped.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .detection import detect_classical
from .errors import EvalError
from .phantom import LABEL_POSITIVE, DatasetManifest, load_video_frames
from .pipeline import (
    DECISION_INDETERMINATE,
    DEFAULT_STRIDE,
    PROBABILITY_CUTOFF,
    SYSTEM_SPARSE,
    SYSTEM_WIDTH,
    WIDTH_CUTOFF_MM,
    measure_video,
    nerve_region,
    sample_stride,
    width_verdict,
)


@dataclass(frozen=True)
class FoldSplit:
    fold_index: int
    train_video_ids: list[str]
    test_video_ids: list[str]


@dataclass
class EvalConfig:
    stride: int = DEFAULT_STRIDE
    exclude_partial: bool = False
    # sparse-system settings
    lam: float = 0.5
    step: float = 0.1
    n_steps: int = 100
    kernel_count: int = 32
    kernel_size: int = 8
    dict_epochs: int = 2
    dict_learning_rate: float = 0.1
    clf_epochs: int = 500
    clf_learning_rate: float = 0.1
    train_frames_per_video: int = 2
    dict_on_full_frames: bool = False
    backend: str | None = None


@dataclass
class EvalReport:
    system: str
    k: int
    seeds: list[int]
    video_accuracy_mean: float
    video_accuracy_sd: float
    frame_accuracy_mean: float
    frame_accuracy_sd: float
    width_mae_mm: float | None
    per_fold: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "system": self.system,
            "k": self.k,
            "seeds": self.seeds,
            "video_accuracy_mean": self.video_accuracy_mean,
            "video_accuracy_sd": self.video_accuracy_sd,
            "frame_accuracy_mean": self.frame_accuracy_mean,
            "frame_accuracy_sd": self.frame_accuracy_sd,
            "width_mae_mm": self.width_mae_mm,
            "per_fold": self.per_fold,
        }


def grouped_kfold(manifest: DatasetManifest, k: int, seed: int) -> list[FoldSplit]:
    """Deal shuffled patients round-robin into k groups; fold i tests the
    videos of group i and trains on the rest."""
    if k < 2:
        raise EvalError("k must be >= 2")
    patients = sorted({v.patient_id for v in manifest.videos})
    if len(patients) < k:
        raise EvalError(f"fewer patients than folds ({len(patients)} < {k})")
    rng = np.random.default_rng(seed)
    order = [patients[i] for i in rng.permutation(len(patients))]
    groups = [set(order[i::k]) for i in range(k)]
    folds = []
    for i, group in enumerate(groups):
        test = [v.video_id for v in manifest.videos if v.patient_id in group]
        train = [v.video_id for v in manifest.videos if v.patient_id not in group]
        folds.append(FoldSplit(i, train, test))
    return folds


def frame_accuracy(per_frame_decisions: list[int], video_label: int) -> float:
    """Percentage of frame decisions matching the video label."""
    if not per_frame_decisions:
        raise EvalError("no frame decisions to score")
    hits = sum(1 for d in per_frame_decisions if d == video_label)
    return 100.0 * hits / len(per_frame_decisions)


def width_mae(predicted: list[float], truth: list[float]) -> float:
    if len(predicted) != len(truth):
        raise EvalError(f"length mismatch: {len(predicted)} predictions vs {len(truth)} truths")
    if not predicted:
        raise EvalError("empty width lists")
    return float(np.mean(np.abs(np.asarray(predicted) - np.asarray(truth))))


def _label_bit(label: str) -> int:
    return 1 if label == LABEL_POSITIVE else 0


def _eval_width_video(manifest, record, config):
    frames = load_video_frames(manifest, record)
    measurements = measure_video(frames, detect_classical, stride=config.stride)
    verdict = width_verdict(record.video_id, measurements, config.exclude_partial)
    frame_bits = []
    for m in measurements:
        if m.width is None:
            frame_bits.append(None)
        else:
            frame_bits.append(1 if m.width.width_mm > WIDTH_CUTOFF_MM else 0)
    return verdict, frame_bits


def _fit_regions(manifest, record, config, limit):
    """Nerve regions of stride-sampled fit frames, at most `limit`."""
    frames = load_video_frames(manifest, record)
    regions = []
    for idx in sample_stride(len(frames), config.stride):
        det = detect_classical(frames[idx])
        if det.globe is None or det.nerve is None:
            continue
        region = nerve_region(frames[idx], det)
        if region is None or min(region.shape) < config.kernel_size:
            continue
        regions.append(region)
        if limit is not None and len(regions) >= limit:
            break
    return regions, frames


def _train_sparse_fold(manifest, train_records, config, fold_seed):
    from .lca import pool_code, lca_encode, train_classifier, train_dictionary

    corpus = []
    labels = []
    for record in train_records:
        if config.dict_on_full_frames:
            frames = load_video_frames(manifest, record)
            regions = [frames[i].pixels for i in sample_stride(len(frames), config.stride)]
            regions = regions[: config.train_frames_per_video]
        else:
            regions, _ = _fit_regions(manifest, record, config, config.train_frames_per_video)
        for region in regions:
            corpus.append(region)
            labels.append(_label_bit(record.label))
    if not corpus:
        raise EvalError("no fit frames found in the training fold")
    if len(set(labels)) < 2:
        raise EvalError("training fold contains a single class")
    dictionary = train_dictionary(
        corpus,
        config.kernel_count,
        config.kernel_size,
        lam=config.lam,
        epochs=config.dict_epochs,
        learning_rate=config.dict_learning_rate,
        seed=fold_seed,
        step=config.step,
        n_steps=config.n_steps,
        backend=config.backend,
    )
    features = [
        pool_code(
            lca_encode(
                region,
                dictionary,
                lam=config.lam,
                step=config.step,
                n_steps=config.n_steps,
                backend=config.backend,
            )
        )
        for region in corpus
    ]
    classifier = train_classifier(
        features,
        labels,
        epochs=config.clf_epochs,
        learning_rate=config.clf_learning_rate,
        seed=fold_seed,
    )
    return dictionary, classifier


def _eval_sparse_video(manifest, record, config, dictionary, classifier):
    from .lca import classify_frame
    from .pipeline import sparse_verdict

    frames = load_video_frames(manifest, record)
    frame_bits = []
    probabilities = []
    for idx in sample_stride(len(frames), config.stride):
        det = detect_classical(frames[idx])
        region = nerve_region(frames[idx], det) if det.globe and det.nerve else None
        if region is None or min(region.shape) < config.kernel_size:
            frame_bits.append(None)
            continue
        p = classify_frame(
            region, dictionary, classifier, config.lam, config.step, config.n_steps,
            backend=config.backend,
        )
        probabilities.append(p)
        frame_bits.append(1 if p >= PROBABILITY_CUTOFF else 0)
    return sparse_verdict(record.video_id, probabilities), frame_bits


def evaluate(
    manifest: DatasetManifest,
    system: str,
    k: int,
    seeds: list[int],
    config: EvalConfig | None = None,
) -> EvalReport:
    """Run the grouped k-fold protocol once per seed and aggregate.

    Indeterminate verdicts and undecided frames count as incorrect. Width
    MAE is reported for the width system over videos with ground truth,
    comparing each video's mean predicted width to its true width.
    """
    if system not in (SYSTEM_WIDTH, SYSTEM_SPARSE):
        raise EvalError(f"unknown system {system!r}")
    if not seeds:
        raise EvalError("need at least one seed")
    config = config or EvalConfig()
    manifest.validate()
    by_id = {v.video_id: v for v in manifest.videos}

    seed_video_acc = []
    seed_frame_acc = []
    seed_mae = []
    per_fold = []
    for seed in seeds:
        folds = grouped_kfold(manifest, k, seed)
        video_hits = video_total = 0
        frame_hits = frame_total = 0
        mae_pred: list[float] = []
        mae_true: list[float] = []
        for fold in folds:
            artifacts = None
            if system == SYSTEM_SPARSE:
                fold_seed = seed * 10007 + fold.fold_index
                train_records = [by_id[vid] for vid in fold.train_video_ids]
                artifacts = _train_sparse_fold(manifest, train_records, config, fold_seed)
            fold_hits = fold_total = 0
            for vid in fold.test_video_ids:
                record = by_id[vid]
                label = _label_bit(record.label)
                if system == SYSTEM_WIDTH:
                    verdict, frame_bits = _eval_width_video(manifest, record, config)
                else:
                    verdict, frame_bits = _eval_sparse_video(manifest, record, config, *artifacts)
                correct = (
                    verdict.decision != DECISION_INDETERMINATE
                    and _label_bit(verdict.decision) == label
                )
                video_hits += int(correct)
                video_total += 1
                fold_hits += int(correct)
                fold_total += 1
                frame_hits += sum(1 for b in frame_bits if b is not None and b == label)
                frame_total += len(frame_bits)
                if (
                    system == SYSTEM_WIDTH
                    and record.ground_truth is not None
                    and verdict.decision != DECISION_INDETERMINATE
                ):
                    mae_pred.append(verdict.mean_value)
                    mae_true.append(record.ground_truth.sheath_width_mm)
            per_fold.append(
                {
                    "seed": seed,
                    "fold": fold.fold_index,
                    "test_videos": len(fold.test_video_ids),
                    "video_accuracy": 100.0 * fold_hits / fold_total if fold_total else 0.0,
                }
            )
        seed_video_acc.append(100.0 * video_hits / video_total if video_total else 0.0)
        seed_frame_acc.append(100.0 * frame_hits / frame_total if frame_total else 0.0)
        if mae_pred:
            seed_mae.append(width_mae(mae_pred, mae_true))

    def _mean_sd(values: list[float]) -> tuple[float, float]:
        mean = float(np.mean(values))
        sd = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        return mean, sd

    v_mean, v_sd = _mean_sd(seed_video_acc)
    f_mean, f_sd = _mean_sd(seed_frame_acc)
    mae = float(np.mean(seed_mae)) if seed_mae else None
    return EvalReport(system, k, list(seeds), v_mean, v_sd, f_mean, f_sd, mae, per_fold)


def write_report_json(path: str, report: EvalReport) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.to_json(), f, indent=2, sort_keys=True)
        f.write("\n")


def write_report_csv(path: str, report: EvalReport) -> None:
    """Tabular summary: model, video accuracy, frame accuracy."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("model,video_accuracy,frame_accuracy\n")
        f.write(
            f"{report.system},"
            f"{report.video_accuracy_mean:.2f} ± {report.video_accuracy_sd:.2f},"
            f"{report.frame_accuracy_mean:.2f} ± {report.frame_accuracy_sd:.2f}\n"
        )
