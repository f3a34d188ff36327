"""End-to-end video pipelines and overlay rendering.

The width system measures the sheath geometrically on stride-sampled
frames and averages the widths; the sparse system classifies the nerve
region of each fit frame and averages the probabilities. Both reduce to a
video verdict with strict threshold semantics: a mean width of exactly
5 mm is negative, a mean probability of exactly 0.5 is positive, and a
video with no usable frame is indeterminate rather than guessed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .detection import FrameDetections, detect_classical
from .errors import GeometryError, OnsdError
from .geometry import (
    Frame,
    MeasurementConstruction,
    OrientedCrop,
    axis_unit,
    build_construction,
    extract_oriented_crop,
)
from .phantom import WIDTH_CUTOFF_MM, LABEL_NEGATIVE, LABEL_POSITIVE
from .segmentation import WidthMeasurement, segment_classical, width_from_mask

DECISION_POSITIVE = LABEL_POSITIVE
DECISION_NEGATIVE = LABEL_NEGATIVE
DECISION_INDETERMINATE = "indeterminate"

SYSTEM_WIDTH = "width"
SYSTEM_SPARSE = "sparse"

DEFAULT_STRIDE = 5

PROBABILITY_CUTOFF = 0.5

Detector = Callable[[Frame], FrameDetections]
Segmenter = Callable[[OrientedCrop], np.ndarray]

BLUE = (0, 0, 255)
RED = (255, 0, 0)
ORANGE = (255, 165, 0)
_DOT_RADIUS = 3.0


@dataclass
class FrameMeasurement:
    frame_index: int
    detections: FrameDetections
    construction: MeasurementConstruction | None = None
    crop: OrientedCrop | None = None
    mask: np.ndarray | None = None
    width: WidthMeasurement | None = None
    probability: float | None = None
    error: str | None = None


@dataclass(frozen=True)
class VideoVerdict:
    video_id: str
    system: str
    frames_used: int
    mean_value: float
    decision: str


def sample_stride(n_frames: int, stride: int) -> list[int]:
    """Frame indices 0, stride, 2*stride, ... below n_frames."""
    if stride < 1:
        raise OnsdError("stride must be >= 1")
    if n_frames < 0:
        raise OnsdError("n_frames must be >= 0")
    return list(range(0, n_frames, stride))


def measure_frame(frame: Frame, detections: FrameDetections, segmenter: Segmenter = segment_classical) -> FrameMeasurement:
    """Run the geometric measurement on one frame's detections.

    Missing boxes yield a measurement-free record; construction failures
    are recorded on the record instead of raised. A width that fails the
    row quorum is left absent.
    """
    record = FrameMeasurement(frame.frame_index, detections)
    if detections.globe is None or detections.nerve is None:
        return record
    try:
        record.construction = build_construction(
            detections.globe, detections.nerve, frame.pixels_per_mm
        )
    except GeometryError as exc:
        record.error = str(exc)
        return record
    record.crop = extract_oriented_crop(frame, record.construction)
    record.mask = segmenter(record.crop)
    measurement = width_from_mask(record.mask, frame.pixels_per_mm)
    if measurement.valid:
        record.width = measurement
    return record


def measure_video(
    frames: Sequence[Frame],
    detector: Detector = detect_classical,
    segmenter: Segmenter = segment_classical,
    stride: int = DEFAULT_STRIDE,
) -> list[FrameMeasurement]:
    """Measure the stride-sampled frames of a video."""
    records = []
    for idx in sample_stride(len(frames), stride):
        records.append(measure_frame(frames[idx], detector(frames[idx]), segmenter))
    return records


def width_verdict(video_id: str, measurements: Sequence[FrameMeasurement], exclude_partial: bool = False) -> VideoVerdict:
    """Aggregate per-frame widths into the video decision (strict > 5 mm)."""
    widths = []
    for m in measurements:
        if m.width is None:
            continue
        if exclude_partial and m.crop is not None and m.crop.partial:
            continue
        widths.append(m.width.width_mm)
    if not widths:
        return VideoVerdict(video_id, SYSTEM_WIDTH, 0, 0.0, DECISION_INDETERMINATE)
    mean = float(np.mean(widths))
    decision = DECISION_POSITIVE if mean > WIDTH_CUTOFF_MM else DECISION_NEGATIVE
    return VideoVerdict(video_id, SYSTEM_WIDTH, len(widths), mean, decision)


def predict_video_width(
    frames: Sequence[Frame],
    detector: Detector = detect_classical,
    segmenter: Segmenter = segment_classical,
    stride: int = DEFAULT_STRIDE,
    video_id: str = "",
    exclude_partial: bool = False,
) -> VideoVerdict:
    return width_verdict(video_id, measure_video(frames, detector, segmenter, stride), exclude_partial)


def nerve_region(frame: Frame, detections: FrameDetections) -> np.ndarray | None:
    """Pixel crop of the nerve box, or None when absent or degenerate."""
    box = detections.nerve
    if box is None:
        return None
    x0 = max(0, int(math.floor(box.x_min)))
    y0 = max(0, int(math.floor(box.y_min)))
    x1 = min(frame.width, int(math.ceil(box.x_max)))
    y1 = min(frame.height, int(math.ceil(box.y_max)))
    if x1 - x0 < 2 or y1 - y0 < 2:
        return None
    return frame.pixels[y0:y1, x0:x1]


def sparse_verdict(video_id: str, probabilities: Sequence[float]) -> VideoVerdict:
    """Mean probability with round-half-up at 0.5."""
    if not probabilities:
        return VideoVerdict(video_id, SYSTEM_SPARSE, 0, 0.0, DECISION_INDETERMINATE)
    mean = float(np.mean(probabilities))
    decision = DECISION_POSITIVE if mean >= PROBABILITY_CUTOFF else DECISION_NEGATIVE
    return VideoVerdict(video_id, SYSTEM_SPARSE, len(probabilities), mean, decision)


def predict_video_sparse(
    frames: Sequence[Frame],
    detector: Detector,
    dictionary,
    classifier,
    stride: int = DEFAULT_STRIDE,
    lam: float | None = None,
    step: float | None = None,
    n_steps: int | None = None,
    video_id: str = "",
    backend: str | None = None,
) -> VideoVerdict:
    """Classify the nerve region of every sampled fit frame and average."""
    from .lca import DEFAULT_LAMBDA, DEFAULT_N_STEPS, DEFAULT_STEP, classify_frame

    lam = DEFAULT_LAMBDA if lam is None else lam
    step = DEFAULT_STEP if step is None else step
    n_steps = DEFAULT_N_STEPS if n_steps is None else n_steps
    probabilities = []
    size = dictionary.kernel_size
    for idx in sample_stride(len(frames), stride):
        frame = frames[idx]
        det = detector(frame)
        if det.globe is None or det.nerve is None:
            continue
        region = nerve_region(frame, det)
        if region is None or region.shape[0] < size or region.shape[1] < size:
            continue
        probabilities.append(
            classify_frame(region, dictionary, classifier, lam, step, n_steps, backend=backend)
        )
    return sparse_verdict(video_id, probabilities)


def _draw_line(image: np.ndarray, p0: tuple[float, float], p1: tuple[float, float], color: tuple[int, int, int]) -> None:
    h, w = image.shape[:2]
    length = math.hypot(p1[0] - p0[0], p1[1] - p0[1])
    n = max(2, int(math.ceil(length * 2)) + 1)
    ts = np.linspace(0.0, 1.0, n)
    xs = np.rint(p0[0] + ts * (p1[0] - p0[0])).astype(int)
    ys = np.rint(p0[1] + ts * (p1[1] - p0[1])).astype(int)
    keep = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    image[ys[keep], xs[keep]] = color


def _draw_disc(image: np.ndarray, center: tuple[float, float], radius: float, color: tuple[int, int, int]) -> None:
    h, w = image.shape[:2]
    x0 = max(0, int(math.floor(center[0] - radius)))
    x1 = min(w - 1, int(math.ceil(center[0] + radius)))
    y0 = max(0, int(math.floor(center[1] - radius)))
    y1 = min(h - 1, int(math.ceil(center[1] + radius)))
    for y in range(y0, y1 + 1):
        for x in range(x0, x1 + 1):
            if (x - center[0]) ** 2 + (y - center[1]) ** 2 <= radius * radius:
                image[y, x] = color


def render_overlay(frame: Frame, measurement: FrameMeasurement) -> np.ndarray:
    """RGB copy of the frame with the measurement construction drawn in.

    Blue segment from the retinal point to the measurement point, a red
    disc at the measurement point, and an orange width segment across the
    nerve axis. Stages that were not reached are not drawn.
    """
    gray = np.clip(np.rint(frame.pixels * 255.0), 0, 255).astype(np.uint8)
    image = np.repeat(gray[:, :, None], 3, axis=2)
    c = measurement.construction
    if c is None:
        return image
    _draw_line(image, c.retinal_point, c.measurement_point, BLUE)
    if measurement.width is not None:
        ux, uy = axis_unit(c.axis_angle)
        vx, vy = uy, -ux
        half = measurement.width.width_mm * frame.pixels_per_mm / 2.0
        mx, my = c.measurement_point
        _draw_line(image, (mx - half * vx, my - half * vy), (mx + half * vx, my + half * vy), ORANGE)
    _draw_disc(image, c.measurement_point, _DOT_RADIUS, RED)
    return image


def _construction_json(c: MeasurementConstruction) -> dict:
    return {
        "globe_center": list(c.globe_center),
        "nerve_center": list(c.nerve_center),
        "axis_angle": c.axis_angle,
        "retinal_point": list(c.retinal_point),
        "measurement_point": list(c.measurement_point),
        "edge_fallback": c.edge_fallback,
    }


def _bbox_json(box) -> list[float] | None:
    return None if box is None else [box.x_min, box.y_min, box.x_max, box.y_max]


def measurement_json(m: FrameMeasurement) -> dict:
    out = {
        "frame_index": m.frame_index,
        "globe_bbox": _bbox_json(m.detections.globe),
        "nerve_bbox": _bbox_json(m.detections.nerve),
        "construction": _construction_json(m.construction) if m.construction else None,
        "partial_crop": m.crop.partial if m.crop is not None else None,
        "width_mm": m.width.width_mm if m.width is not None else None,
        "probability": m.probability,
        "error": m.error,
    }
    return out


def verdict_report(verdict: VideoVerdict, measurements: Sequence[FrameMeasurement] | None = None) -> dict:
    report = {
        "video_id": verdict.video_id,
        "system": verdict.system,
        "frames_used": verdict.frames_used,
        "mean_value": verdict.mean_value,
        "decision": verdict.decision,
    }
    if measurements is not None:
        report["frames"] = [measurement_json(m) for m in measurements]
    return report


def write_verdict_report(path: str, report: dict) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
