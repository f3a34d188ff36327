"""Command-line interface.

Subcommands cover the whole workflow: `phantom` builds a synthetic
dataset, `detect`/`measure` expose the per-frame stages, `train` fits the
sparse-coding artifacts, `predict` runs either system on one video,
`eval` runs the grouped k-fold protocol, and `render` writes overlay
images. Every command is deterministic given its flags and seeds.

Exit codes: 0 on success, 2 on usage or data errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import detection, evaluation, imgio, phantom, pipeline
from .errors import OnsdError, SpecError
from .geometry import Frame


def _add_common_video_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", required=True, help="path to manifest.json")
    p.add_argument("--video", required=True, help="video id from the manifest")


def _load(manifest_path: str) -> phantom.DatasetManifest:
    return phantom.load_manifest(manifest_path)


def _detector_from_args(args, manifest, record):
    """Classical detector, or a lookup into a parsed detection file."""
    if getattr(args, "detections", None):
        frames0 = phantom.load_video_frames(manifest, record)
        size = (frames0[0].width, frames0[0].height)
        parsed = {d.frame_index: d for d in detection.parse_detection_file(args.detections, size)}

        def lookup(frame: Frame) -> detection.FrameDetections:
            return parsed.get(frame.frame_index, detection.FrameDetections(frame.frame_index))

        return lookup
    return detection.detect_classical


def _sample_specs(args) -> list[tuple[phantom.PhantomSpec, str, int]]:
    rng = np.random.default_rng(args.seed)
    lo, hi = args.width_min, args.width_max
    band = tuple(args.exclude_band) if args.exclude_band else None
    if not lo < hi:
        raise SpecError("width range is empty")
    if band and not band[0] < band[1]:
        raise SpecError("exclusion band is empty")
    if band and band[0] <= lo and band[1] >= hi:
        raise SpecError("exclusion band covers the whole width range")
    specs = []
    for i in range(args.count):
        width = float(rng.uniform(lo, hi))
        while band and band[0] < width < band[1]:
            width = float(rng.uniform(lo, hi))
        angle = float(rng.uniform(-args.angle_max, args.angle_max))
        spec = phantom.PhantomSpec(
            nerve_angle=angle,
            sheath_width_mm=width,
            speckle_sigma=args.speckle,
            jitter_px=args.jitter,
            seed=int(rng.integers(0, 2**63 - 1)),
        )
        specs.append((spec, f"p{i % args.patients:03d}", args.frames))
    return specs


def _specs_from_file(path: str) -> list[tuple[phantom.PhantomSpec, str, int]]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except OSError as exc:
        raise SpecError(f"cannot read spec file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise SpecError(f"spec file is not valid JSON: {exc}") from None
    if not isinstance(payload, list):
        raise SpecError("spec file must be a JSON array of video entries")
    specs = []
    for i, entry in enumerate(payload):
        if not isinstance(entry, dict):
            raise SpecError(f"entry {i}: expected an object")
        patient = str(entry.get("patient_id", f"p{i:03d}"))
        n_frames = int(entry.get("n_frames", 10))
        spec_fields = entry.get("spec")
        if not isinstance(spec_fields, dict):
            raise SpecError(f"entry {i}: missing 'spec' object")
        specs.append((phantom.spec_from_dict(spec_fields), patient, n_frames))
    return specs


def cmd_phantom(args) -> int:
    if args.spec_file:
        specs = _specs_from_file(args.spec_file)
    else:
        specs = _sample_specs(args)
    manifest = phantom.build_dataset(specs, args.out)
    path = os.path.join(args.out, "manifest.json")
    print(f"wrote {len(manifest.videos)} videos to {path}")
    return 0


def cmd_detect(args) -> int:
    manifest = _load(args.manifest)
    record = manifest.video(args.video)
    frames = phantom.load_video_frames(manifest, record)
    dets = [detection.detect_classical(f) for f in frames]
    detection.write_detection_file(args.out, dets, (frames[0].width, frames[0].height))
    fit = len(detection.filter_fit_frames(dets))
    print(f"{args.video}: {fit}/{len(frames)} frames fit for measurement -> {args.out}")
    return 0


def _render_measurements(frames, measurements, out_dir: str, fmt: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    by_index = {f.frame_index: f for f in frames}
    for m in measurements:
        image = pipeline.render_overlay(by_index[m.frame_index], m)
        imgio.write_rgb(os.path.join(out_dir, f"frame_{m.frame_index:04d}.{fmt}"), image)


def cmd_measure(args) -> int:
    manifest = _load(args.manifest)
    record = manifest.video(args.video)
    frames = phantom.load_video_frames(manifest, record)
    detector = _detector_from_args(args, manifest, record)
    measurements = pipeline.measure_video(frames, detector, stride=args.stride)
    payload = {
        "video_id": record.video_id,
        "frames": [pipeline.measurement_json(m) for m in measurements],
    }
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    if args.render:
        _render_measurements(frames, measurements, args.render, args.format)
    measured = sum(1 for m in measurements if m.width is not None)
    print(f"{args.video}: widths on {measured}/{len(measurements)} sampled frames -> {args.out}")
    return 0


def _gather_regions(manifest, config: evaluation.EvalConfig, video_ids=None):
    corpus, labels = [], []
    for record in manifest.videos:
        if video_ids is not None and record.video_id not in video_ids:
            continue
        if config.dict_on_full_frames:
            frames = phantom.load_video_frames(manifest, record)
            regions = [
                frames[i].pixels for i in pipeline.sample_stride(len(frames), config.stride)
            ][: config.train_frames_per_video]
        else:
            regions, _ = evaluation._fit_regions(manifest, record, config, config.train_frames_per_video)
        for region in regions:
            corpus.append(region)
            labels.append(1 if record.label == phantom.LABEL_POSITIVE else 0)
    return corpus, labels


def cmd_train(args) -> int:
    from . import lca

    manifest = _load(args.manifest)
    config = _eval_config(args)
    corpus, labels = _gather_regions(manifest, config)
    if not corpus:
        raise OnsdError("no fit frames found for training")
    if len(set(labels)) < 2:
        raise OnsdError("training data contains a single class; need both")

    init = lca.init_dictionary(args.kernels, args.kernel_size, args.seed)
    err0 = float(
        np.mean(
            [
                lca.reconstruction_error(
                    lca.normalize_image(x),
                    init,
                    lca.lca_encode(x, init, lam=args.lam, step=args.step,
                                   n_steps=args.n_steps, backend=args.backend).code,
                )
                for x in corpus
            ]
        )
    )
    dictionary = lca.train_dictionary(
        corpus,
        args.kernels,
        args.kernel_size,
        lam=args.lam,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        seed=args.seed,
        step=args.step,
        n_steps=args.n_steps,
        backend=args.backend,
    )
    encodings = [
        lca.lca_encode(x, dictionary, lam=args.lam, step=args.step,
                       n_steps=args.n_steps, backend=args.backend)
        for x in corpus
    ]
    err1 = float(
        np.mean(
            [
                lca.reconstruction_error(lca.normalize_image(x), dictionary, acts.code)
                for x, acts in zip(corpus, encodings)
            ]
        )
    )
    features = [lca.pool_code(acts) for acts in encodings]
    classifier = lca.train_classifier(
        features, labels, epochs=args.clf_epochs, learning_rate=args.clf_learning_rate,
        seed=args.seed,
    )
    train_acc = float(
        np.mean(
            [
                (classifier.predict_proba(f) >= pipeline.PROBABILITY_CUTOFF) == bool(y)
                for f, y in zip(features, labels)
            ]
        )
    )

    os.makedirs(args.out_dir, exist_ok=True)
    params = {
        "lambda": args.lam,
        "step": args.step,
        "n_steps": args.n_steps,
        "kernel_count": args.kernels,
        "kernel_size": args.kernel_size,
        "epochs": args.epochs,
        "learning_rate": args.learning_rate,
        "clf_epochs": args.clf_epochs,
        "clf_learning_rate": args.clf_learning_rate,
        "seed": args.seed,
        "stride": args.stride,
        "train_frames_per_video": args.frames_per_video,
        "dict_on_full_frames": bool(args.dict_full_frames),
    }
    dict_path = os.path.join(args.out_dir, "dictionary.bin")
    clf_path = os.path.join(args.out_dir, "classifier.bin")
    lca.save_dictionary(dict_path, dictionary, params)
    lca.save_classifier(clf_path, classifier, params)
    print(f"trained on {len(corpus)} nerve regions")
    print(f"reconstruction error: {err0:.4f} (epoch 0) -> {err1:.4f} (final)")
    print(f"training accuracy: {100.0 * train_acc:.1f}%")
    print(f"artifacts: {dict_path}, {clf_path}")
    return 0


def cmd_predict(args) -> int:
    from . import lca

    manifest = _load(args.manifest)
    record = manifest.video(args.video)
    frames = phantom.load_video_frames(manifest, record)
    detector = _detector_from_args(args, manifest, record)

    if args.system == pipeline.SYSTEM_WIDTH:
        measurements = pipeline.measure_video(frames, detector, stride=args.stride)
        verdict = pipeline.width_verdict(record.video_id, measurements, args.exclude_partial)
    else:
        if not args.dictionary or not os.path.exists(args.dictionary):
            raise OnsdError("sparse system needs --dictionary pointing at a trained file")
        if not args.classifier or not os.path.exists(args.classifier):
            raise OnsdError("sparse system needs --classifier pointing at a trained file")
        dictionary = lca.load_dictionary(args.dictionary)
        classifier = lca.load_classifier(args.classifier)
        side = lca.read_sidecar(args.dictionary)
        lam = args.lam if args.lam is not None else float(side.get("lambda", lca.DEFAULT_LAMBDA))
        measurements = []
        probabilities = []
        for idx in pipeline.sample_stride(len(frames), args.stride):
            det = detector(frames[idx])
            m = pipeline.FrameMeasurement(idx, det)
            region = pipeline.nerve_region(frames[idx], det) if det.globe and det.nerve else None
            if region is not None and min(region.shape) >= dictionary.kernel_size:
                m.probability = lca.classify_frame(
                    region, dictionary, classifier, lam, args.step, args.n_steps,
                    backend=args.backend,
                )
                probabilities.append(m.probability)
            measurements.append(m)
        verdict = pipeline.sparse_verdict(record.video_id, probabilities)

    report = pipeline.verdict_report(verdict, measurements)
    if args.out:
        pipeline.write_verdict_report(args.out, report)
    if args.render:
        _render_measurements(frames, measurements, args.render, args.format)
    print(
        f"{record.video_id}: {verdict.decision} "
        f"(system={verdict.system}, frames_used={verdict.frames_used}, mean={verdict.mean_value:.4f})"
    )
    return 0


def _eval_config(args) -> evaluation.EvalConfig:
    return evaluation.EvalConfig(
        stride=args.stride,
        exclude_partial=getattr(args, "exclude_partial", False),
        lam=args.lam if getattr(args, "lam", None) is not None else 0.5,
        step=getattr(args, "step", 0.1),
        n_steps=getattr(args, "n_steps", 100),
        kernel_count=getattr(args, "kernels", 32),
        kernel_size=getattr(args, "kernel_size", 8),
        dict_epochs=getattr(args, "epochs", 2),
        dict_learning_rate=getattr(args, "learning_rate", 0.1),
        clf_epochs=getattr(args, "clf_epochs", 500),
        clf_learning_rate=getattr(args, "clf_learning_rate", 0.1),
        train_frames_per_video=getattr(args, "frames_per_video", 2),
        dict_on_full_frames=bool(getattr(args, "dict_full_frames", False)),
        backend=getattr(args, "backend", None),
    )


def cmd_eval(args) -> int:
    manifest = _load(args.manifest)
    report = evaluation.evaluate(manifest, args.system, args.k, args.seeds, _eval_config(args))
    if args.out:
        evaluation.write_report_json(args.out, report)
    if args.csv:
        evaluation.write_report_csv(args.csv, report)
    print(
        f"{args.system}: video accuracy {report.video_accuracy_mean:.2f}% ± {report.video_accuracy_sd:.2f}, "
        f"frame accuracy {report.frame_accuracy_mean:.2f}% ± {report.frame_accuracy_sd:.2f}"
        + (f", width MAE {report.width_mae_mm:.3f} mm" if report.width_mae_mm is not None else "")
    )
    return 0


def cmd_render(args) -> int:
    manifest = _load(args.manifest)
    record = manifest.video(args.video)
    frames = phantom.load_video_frames(manifest, record)
    detector = _detector_from_args(args, manifest, record)
    measurements = pipeline.measure_video(frames, detector, stride=args.stride)
    _render_measurements(frames, measurements, args.out, args.format)
    print(f"wrote {len(measurements)} overlays to {args.out}")
    return 0


def _add_lca_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lam", "--lambda", dest="lam", type=float, default=None,
                   help="sparsity threshold (default 0.5 or artifact sidecar)")
    p.add_argument("--step", type=float, default=0.1)
    p.add_argument("--n-steps", type=int, default=100)
    p.add_argument("--backend", choices=("compiled", "numpy"), default=None,
                   help="sparse-coding backend (default: compiled when built)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="onsd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic dataset with known widths")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=10)
    p.add_argument("--patients", type=int, default=10)
    p.add_argument("--width-min", type=float, default=3.0)
    p.add_argument("--width-max", type=float, default=7.0)
    p.add_argument("--exclude-band", type=float, nargs=2, default=None,
                   metavar=("LO", "HI"), help="widths to avoid around the cutoff")
    p.add_argument("--angle-max", type=float, default=20.0)
    p.add_argument("--speckle", type=float, default=0.1)
    p.add_argument("--jitter", type=int, default=2)
    p.add_argument("--spec-file", default=None, help="JSON array of explicit phantom specs")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("detect", help="run the classical detector over a video")
    _add_common_video_args(p)
    p.add_argument("--out", required=True, help="detection text file to write")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("measure", help="per-frame width measurements for a video")
    _add_common_video_args(p)
    p.add_argument("--out", required=True, help="measurements JSON to write")
    p.add_argument("--detections", default=None, help="use boxes from this text file")
    p.add_argument("--stride", type=int, default=pipeline.DEFAULT_STRIDE)
    p.add_argument("--render", default=None, help="directory for overlay images")
    p.add_argument("--format", choices=("ppm", "png"), default="ppm")
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("train", help="train the sparse-coding dictionary and classifier")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--kernels", type=int, default=32)
    p.add_argument("--kernel-size", type=int, default=8)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--clf-epochs", type=int, default=500)
    p.add_argument("--clf-learning-rate", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stride", type=int, default=pipeline.DEFAULT_STRIDE)
    p.add_argument("--frames-per-video", type=int, default=2)
    p.add_argument("--dict-full-frames", action="store_true",
                   help="train the dictionary on full frames instead of nerve regions")
    _add_lca_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="run one system end-to-end on one video")
    _add_common_video_args(p)
    p.add_argument("--system", choices=(pipeline.SYSTEM_WIDTH, pipeline.SYSTEM_SPARSE), required=True)
    p.add_argument("--dictionary", default=None)
    p.add_argument("--classifier", default=None)
    p.add_argument("--detections", default=None)
    p.add_argument("--stride", type=int, default=pipeline.DEFAULT_STRIDE)
    p.add_argument("--exclude-partial", action="store_true")
    p.add_argument("--out", default=None, help="verdict JSON to write")
    p.add_argument("--render", default=None, help="directory for overlay images")
    p.add_argument("--format", choices=("ppm", "png"), default="ppm")
    _add_lca_args(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="grouped k-fold evaluation over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--system", choices=(pipeline.SYSTEM_WIDTH, pipeline.SYSTEM_SPARSE), required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--stride", type=int, default=pipeline.DEFAULT_STRIDE)
    p.add_argument("--exclude-partial", action="store_true")
    p.add_argument("--out", default=None)
    p.add_argument("--csv", default=None)
    p.add_argument("--kernels", type=int, default=32)
    p.add_argument("--kernel-size", type=int, default=8)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--clf-epochs", type=int, default=500)
    p.add_argument("--clf-learning-rate", type=float, default=0.1)
    p.add_argument("--frames-per-video", type=int, default=2)
    p.add_argument("--dict-full-frames", action="store_true")
    _add_lca_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="overlay images for a video")
    _add_common_video_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--detections", default=None)
    p.add_argument("--stride", type=int, default=pipeline.DEFAULT_STRIDE)
    p.add_argument("--format", choices=("ppm", "png"), default="ppm")
    p.set_defaults(func=cmd_render)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OnsdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
