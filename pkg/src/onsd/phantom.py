"""Synthetic ocular ultrasound phantoms with exactly known geometry.

Each phantom frame holds a bright globe ellipse and, emanating from its
posterior pole, a nerve rendered as two bright wall bands around a dark
interior whose perpendicular gap is the sheath width. Widths, angles and
boxes are therefore known to the pixel, which makes the phantoms the
ground truth for every measurement test in the package.

Rendering is deterministic: the per-frame RNG is seeded from (seed,
frame_index), so the same spec always produces the same bytes. Speckle is
multiplicative log-normal and jitter an integer translation of the whole
scene; neither changes the recorded ground truth, which always describes
the nominal (unjittered) geometry.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import imgio
from .detection import BBox, GLOBE, NERVE
from .errors import DataError, SpecError
from .geometry import Frame, axis_unit

LABEL_POSITIVE = "positive"
LABEL_NEGATIVE = "negative"

WIDTH_CUTOFF_MM = 5.0


def label_for_width(width_mm: float) -> str:
    """Video label under the strict 5 mm rule: positive only above 5.0."""
    return LABEL_POSITIVE if width_mm > WIDTH_CUTOFF_MM else LABEL_NEGATIVE


@dataclass(frozen=True)
class PhantomSpec:
    image_width: int = 256
    image_height: int = 320
    pixels_per_mm: float = 10.0
    globe_center: tuple[float, float] = (128.0, 90.0)
    globe_radii: tuple[float, float] = (60.0, 55.0)
    nerve_angle: float = 0.0  # degrees from +y; 0 points straight down
    sheath_width_mm: float = 5.5
    sheath_wall_thickness_mm: float = 1.0
    nerve_length_mm: float = 8.0
    interior_intensity: float = 0.05
    wall_intensity: float = 0.9
    background_intensity: float = 0.35
    speckle_sigma: float = 0.0
    jitter_px: int = 0
    seed: int = 0

    def validate(self) -> None:
        if self.sheath_width_mm <= 0:
            raise SpecError("sheath_width_mm must be positive")
        if self.sheath_wall_thickness_mm <= 0:
            raise SpecError("sheath_wall_thickness_mm must be positive")
        if self.pixels_per_mm <= 0:
            raise SpecError("pixels_per_mm must be positive")
        if self.nerve_length_mm <= 0:
            raise SpecError("nerve_length_mm must be positive")
        if not (self.wall_intensity > self.background_intensity > self.interior_intensity):
            raise SpecError(
                "intensities must satisfy wall > background > interior "
                f"(got {self.wall_intensity}, {self.background_intensity}, {self.interior_intensity})"
            )
        for v in (self.interior_intensity, self.wall_intensity, self.background_intensity):
            if not 0.0 <= v <= 1.0:
                raise SpecError(f"intensity {v} outside [0, 1]")
        if self.speckle_sigma < 0:
            raise SpecError("speckle_sigma must be >= 0")
        if self.jitter_px < 0:
            raise SpecError("jitter_px must be >= 0")
        cx, cy = self.globe_center
        rx, ry = self.globe_radii
        if rx <= 0 or ry <= 0:
            raise SpecError("globe radii must be positive")
        if cx - rx < 0 or cx + rx > self.image_width - 1 or cy - ry < 0 or cy + ry > self.image_height - 1:
            raise SpecError("globe ellipse must lie fully inside the image")

    def posterior_pole(self) -> tuple[float, float]:
        """Exit point of the nerve axis ray on the globe ellipse."""
        ux, uy = axis_unit(self.nerve_angle)
        rx, ry = self.globe_radii
        t = 1.0 / math.sqrt((ux / rx) ** 2 + (uy / ry) ** 2)
        cx, cy = self.globe_center
        return (cx + t * ux, cy + t * uy)


@dataclass(frozen=True)
class GroundTruth:
    globe_bbox: BBox
    nerve_bbox: BBox
    nerve_angle: float
    sheath_width_mm: float
    label: str


def ground_truth_for(spec: PhantomSpec) -> GroundTruth:
    """Nominal (jitter-free) boxes and label implied by a spec."""
    cx, cy = spec.globe_center
    rx, ry = spec.globe_radii
    globe = BBox(cx - rx, cy - ry, cx + rx, cy + ry, GLOBE)

    px, py = spec.posterior_pole()
    ux, uy = axis_unit(spec.nerve_angle)
    vx, vy = uy, -ux
    ppmm = spec.pixels_per_mm
    half = (spec.sheath_width_mm / 2.0 + spec.sheath_wall_thickness_mm) * ppmm
    length = spec.nerve_length_mm * ppmm
    corners_x = [px + t * ux + s * vx for t in (0.0, length) for s in (-half, half)]
    corners_y = [py + t * uy + s * vy for t in (0.0, length) for s in (-half, half)]
    nerve = BBox(min(corners_x), min(corners_y), max(corners_x), max(corners_y), NERVE)
    return GroundTruth(globe, nerve, spec.nerve_angle, spec.sheath_width_mm, label_for_width(spec.sheath_width_mm))


def _frame_rng(spec: PhantomSpec, frame_index: int) -> np.random.Generator:
    return np.random.default_rng([spec.seed & 0xFFFFFFFFFFFFFFFF, frame_index])


def render_phantom_frame(spec: PhantomSpec, frame_index: int) -> tuple[Frame, GroundTruth]:
    """Render one frame deterministically for (spec, frame_index)."""
    spec.validate()
    rng = _frame_rng(spec, frame_index)
    if spec.jitter_px > 0:
        dx, dy = (int(v) for v in rng.integers(-spec.jitter_px, spec.jitter_px + 1, size=2))
    else:
        dx = dy = 0

    h, w = spec.image_height, spec.image_width
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.full((h, w), spec.background_intensity, dtype=np.float64)

    cx, cy = spec.globe_center[0] + dx, spec.globe_center[1] + dy
    rx, ry = spec.globe_radii
    img[((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0] = spec.wall_intensity

    px, py = spec.posterior_pole()
    px, py = px + dx, py + dy
    ux, uy = axis_unit(spec.nerve_angle)
    vx, vy = uy, -ux
    t = (xx - px) * ux + (yy - py) * uy
    s = (xx - px) * vx + (yy - py) * vy
    ppmm = spec.pixels_per_mm
    length = spec.nerve_length_mm * ppmm
    half_gap = spec.sheath_width_mm * ppmm / 2.0
    half_out = half_gap + spec.sheath_wall_thickness_mm * ppmm
    along = (t >= 0.0) & (t <= length)
    img[along & (np.abs(s) <= half_out)] = spec.wall_intensity
    img[along & (np.abs(s) <= half_gap)] = spec.interior_intensity

    if spec.speckle_sigma > 0:
        img = img * np.exp(spec.speckle_sigma * rng.standard_normal((h, w)))
        np.clip(img, 0.0, 1.0, out=img)

    return Frame(img, ppmm, frame_index), ground_truth_for(spec)


def generate_video(spec: PhantomSpec, n_frames: int) -> tuple[list[Frame], GroundTruth]:
    """Render n_frames sharing one ground truth; jitter varies per frame."""
    if n_frames < 1:
        raise SpecError("n_frames must be >= 1")
    frames = [render_phantom_frame(spec, i)[0] for i in range(n_frames)]
    return frames, ground_truth_for(spec)


@dataclass
class VideoRecord:
    video_id: str
    patient_id: str
    frame_paths: list[str]
    pixels_per_mm: float
    label: str
    ground_truth: GroundTruth | None = None


@dataclass
class DatasetManifest:
    videos: list[VideoRecord] = field(default_factory=list)
    base_dir: str = "."

    def validate(self) -> None:
        seen = set()
        for v in self.videos:
            if v.video_id in seen:
                raise DataError(f"duplicate video_id {v.video_id!r}")
            seen.add(v.video_id)
            if not v.frame_paths:
                raise DataError(f"video {v.video_id!r} has no frames")
            if v.pixels_per_mm <= 0:
                raise DataError(f"video {v.video_id!r}: pixels_per_mm must be positive")
            if v.label not in (LABEL_POSITIVE, LABEL_NEGATIVE):
                raise DataError(f"video {v.video_id!r}: bad label {v.label!r}")

    def video(self, video_id: str) -> VideoRecord:
        for v in self.videos:
            if v.video_id == video_id:
                return v
        raise DataError(f"video {video_id!r} not in manifest")


def _bbox_to_json(box: BBox) -> list[float]:
    return [box.x_min, box.y_min, box.x_max, box.y_max]


def _ground_truth_to_json(gt: GroundTruth) -> dict:
    return {
        "globe_bbox": _bbox_to_json(gt.globe_bbox),
        "nerve_bbox": _bbox_to_json(gt.nerve_bbox),
        "nerve_angle": gt.nerve_angle,
        "sheath_width_mm": gt.sheath_width_mm,
        "label": gt.label,
    }


def _ground_truth_from_json(data: dict) -> GroundTruth:
    return GroundTruth(
        BBox(*data["globe_bbox"], cls=GLOBE),
        BBox(*data["nerve_bbox"], cls=NERVE),
        float(data["nerve_angle"]),
        float(data["sheath_width_mm"]),
        str(data["label"]),
    )


def save_manifest(manifest: DatasetManifest, path: str) -> None:
    payload = {
        "videos": [
            {
                "video_id": v.video_id,
                "patient_id": v.patient_id,
                "frame_paths": v.frame_paths,
                "pixels_per_mm": v.pixels_per_mm,
                "label": v.label,
                "ground_truth": _ground_truth_to_json(v.ground_truth) if v.ground_truth else None,
            }
            for v in manifest.videos
        ]
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def load_manifest(path: str) -> DatasetManifest:
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"manifest {path} is not valid JSON: {exc}") from None
    videos = []
    for entry in payload.get("videos", []):
        try:
            videos.append(
                VideoRecord(
                    video_id=str(entry["video_id"]),
                    patient_id=str(entry["patient_id"]),
                    frame_paths=[str(p) for p in entry["frame_paths"]],
                    pixels_per_mm=float(entry["pixels_per_mm"]),
                    label=str(entry["label"]),
                    ground_truth=_ground_truth_from_json(entry["ground_truth"])
                    if entry.get("ground_truth")
                    else None,
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"manifest {path}: malformed video entry: {exc}") from None
    manifest = DatasetManifest(videos, base_dir=os.path.dirname(os.path.abspath(path)))
    manifest.validate()
    return manifest


def load_video_frames(manifest: DatasetManifest, record: VideoRecord) -> list[Frame]:
    """Read a video's frames from disk into Frame objects."""
    frames = []
    for i, rel in enumerate(record.frame_paths):
        img = imgio.read_pgm(os.path.join(manifest.base_dir, rel))
        frames.append(Frame(img, record.pixels_per_mm, i))
    return frames


def build_dataset(specs: list[tuple[PhantomSpec, str, int]], out_dir: str) -> DatasetManifest:
    """Render (spec, patient_id, n_frames) videos to out_dir as PGM files
    plus a manifest.json; labels follow the 5 mm rule."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = DatasetManifest(base_dir=os.path.abspath(out_dir))
    for i, (spec, patient_id, n_frames) in enumerate(specs):
        video_id = f"v{i:04d}"
        frames, gt = generate_video(spec, n_frames)
        video_dir = os.path.join(out_dir, video_id)
        os.makedirs(video_dir, exist_ok=True)
        rel_paths = []
        for frame in frames:
            rel = os.path.join(video_id, f"frame_{frame.frame_index:04d}.pgm")
            try:
                imgio.write_pgm(os.path.join(out_dir, rel), frame.pixels)
            except OSError as exc:
                raise DataError(f"cannot write frame {rel}: {exc}") from None
            rel_paths.append(rel)
        manifest.videos.append(
            VideoRecord(video_id, patient_id, rel_paths, spec.pixels_per_mm, gt.label, gt)
        )
    manifest.validate()
    save_manifest(manifest, os.path.join(out_dir, "manifest.json"))
    return manifest


def spec_from_dict(data: dict) -> PhantomSpec:
    """Build a spec from JSON-ish fields, naming any offending field."""
    clean = {}
    for key, value in data.items():
        if key not in PhantomSpec.__dataclass_fields__:
            raise SpecError(f"unknown phantom spec field {key!r}")
        try:
            if key in ("globe_center", "globe_radii"):
                a, b = value
                clean[key] = (float(a), float(b))
            elif key in ("image_width", "image_height", "jitter_px", "seed"):
                clean[key] = int(value)
            else:
                clean[key] = float(value)
        except (TypeError, ValueError):
            raise SpecError(f"phantom spec field {key!r} has invalid value {value!r}") from None
    spec = PhantomSpec(**clean)
    spec.validate()
    return spec


def spec_to_dict(spec: PhantomSpec) -> dict:
    return asdict(spec)
