"""Per-frame localisation of the ocular globe and the optic nerve sheath.

Two sources of boxes are supported: a classical image-processing detector
that works on high-contrast frames (phantoms in particular), and a text
file of externally produced annotations. Both yield at most one box per
class per frame; a frame missing either class is considered unfit for
measurement.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable

import numpy as np
from scipy import ndimage

from .errors import DetectionParseError

if TYPE_CHECKING:
    from .geometry import Frame

GLOBE = "globe"
NERVE = "nerve"

# Physical priors used by the classical detector, in millimetres. The
# morphological opening must swallow the sheath walls but not the globe;
# the dilation reach must recover walls adjacent to the dark interior.
_OPENING_RADIUS_MM = 1.2
_WALL_REACH_MM = 1.5
_MIN_BAND_AREA_MM2 = 1.0


@dataclass(frozen=True)
class BBox:
    """Axis-aligned half-open box in pixel coordinates."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float
    cls: str
    confidence: float = 1.0

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min


@dataclass(frozen=True)
class FrameDetections:
    frame_index: int
    globe: BBox | None = None
    nerve: BBox | None = None


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes."""
    ix = max(0.0, min(a.x_max, b.x_max) - max(a.x_min, b.x_min))
    iy = max(0.0, min(a.y_max, b.y_max) - max(a.y_min, b.y_min))
    inter = ix * iy
    union = a.width * a.height + b.width * b.height - inter
    return inter / union if union > 0 else 0.0


def _otsu(values: np.ndarray) -> float:
    """Otsu threshold over a 256-bin histogram of values in [0, 1].

    Splitting at the returned value t puts the low class at `<= t` and the
    high class at `> t` (t is the upper edge of the last low bin).
    """
    hist, edges = np.histogram(values, bins=256, range=(0.0, 1.0))
    hist = hist.astype(np.float64)
    total = hist.sum()
    if total == 0:
        return 0.5
    centers = (edges[:-1] + edges[1:]) / 2.0
    w0 = np.cumsum(hist)
    w1 = total - w0
    m0 = np.cumsum(hist * centers)
    mt = m0[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = m0 / w0
        mu1 = (mt - m0) / w1
        between = w0 * w1 * (mu0 - mu1) ** 2
    between[~np.isfinite(between)] = -1.0
    return float(edges[int(np.argmax(between)) + 1])


def _disc(radius: int) -> np.ndarray:
    r = max(1, int(radius))
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return (xx * xx + yy * yy) <= r * r


def _component_bbox(mask: np.ndarray, cls: str) -> BBox | None:
    """Bounding box of the largest connected true component, if any."""
    labels, n = ndimage.label(mask)
    if n == 0:
        return None
    sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=range(1, n + 1))
    best = int(np.argmax(sizes)) + 1
    sl_y, sl_x = ndimage.find_objects(labels == best)[0]
    box = BBox(float(sl_x.start), float(sl_y.start), float(sl_x.stop), float(sl_y.stop), cls)
    if box.width < 2 or box.height < 2:
        return None
    return box


def detect_classical(frame: "Frame") -> FrameDetections:
    """Locate globe and nerve boxes on a high-contrast frame.

    The globe is the largest bright blob surviving a morphological opening
    that removes thin bright structures (the sheath walls). The nerve is
    the largest dark band posterior of the globe centre, extended sideways
    into the bright wall pixels that flank it. Either may be absent, which
    marks the frame unfit for measurement.
    """
    img = frame.pixels
    idx = frame.frame_index if hasattr(frame, "frame_index") else 0
    if img.size == 0 or float(img.max() - img.min()) < 1e-3:
        return FrameDetections(idx)

    t_bright = _otsu(img)
    bright = img > t_bright
    if not bright.any():
        return FrameDetections(idx)

    ppmm = frame.pixels_per_mm
    # Speckle punches pinholes through the bright blob; fill them before the
    # opening or the erosion collapses around every hole.
    solid = ndimage.binary_fill_holes(bright)
    opened = ndimage.binary_opening(solid, structure=_disc(round(_OPENING_RADIUS_MM * ppmm)))
    globe = _component_bbox(opened, GLOBE)
    if globe is None:
        return FrameDetections(idx)

    # Dark threshold from a second Otsu pass over the non-bright pixels,
    # separating the hypoechoic interior from the mid-grey background.
    low = img[~bright]
    t_dark = _otsu(low)
    dark = img < t_dark
    if not dark.any():
        return FrameDetections(idx, globe=globe)

    globe_cy = (globe.y_min + globe.y_max) / 2.0
    labels, n = ndimage.label(dark)
    min_area = _MIN_BAND_AREA_MM2 * ppmm * ppmm
    band = None
    band_size = 0.0
    for i, sl in enumerate(ndimage.find_objects(labels), start=1):
        comp = labels[sl] == i
        size = float(comp.sum())
        if size < min_area or size <= band_size:
            continue
        cy = sl[0].start + float(np.nonzero(comp)[0].mean())
        if cy <= globe_cy:
            continue
        band = np.zeros_like(dark)
        band[sl][comp] = True
        band_size = size
    if band is None:
        return FrameDetections(idx, globe=globe)

    reach = ndimage.binary_dilation(band, structure=_disc(round(_WALL_REACH_MM * ppmm)))
    nerve = _component_bbox(band | (bright & reach), NERVE)
    return FrameDetections(idx, globe=globe, nerve=nerve)


def filter_fit_frames(detections: Iterable[FrameDetections]) -> list[int]:
    """Indices of frames where both classes were found, in input order."""
    return [d.frame_index for d in detections if d.globe is not None and d.nerve is not None]


def parse_detection_file(path: str, frame_size: tuple[int, int]) -> list[FrameDetections]:
    """Parse normalized center-size box records into per-frame detections.

    Each record line is `frame_index class cx cy w h [confidence]` with
    coordinates normalized to [0, 1]; `#` starts a comment. The highest
    confidence box wins per (frame, class). Boxes are converted to pixel
    coordinates and clamped to the frame.
    """
    fw, fh = frame_size
    best: dict[tuple[int, str], BBox] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (6, 7):
                raise DetectionParseError(f"{path}: line {lineno}: expected 6 or 7 fields, got {len(parts)}")
            try:
                fidx = int(parts[0])
                cls = parts[1]
                cx, cy, w, h = (float(v) for v in parts[2:6])
                conf = float(parts[6]) if len(parts) == 7 else 1.0
            except ValueError as exc:
                raise DetectionParseError(f"{path}: line {lineno}: {exc}") from None
            if cls not in (GLOBE, NERVE):
                raise DetectionParseError(f"{path}: line {lineno}: unknown class {cls!r}")
            if not all(0.0 <= v <= 1.0 for v in (cx, cy, w, h)):
                raise DetectionParseError(f"{path}: line {lineno}: coordinate out of range")
            if not 0.0 <= conf <= 1.0:
                raise DetectionParseError(f"{path}: line {lineno}: confidence out of range")
            box = BBox(
                max(0.0, (cx - w / 2) * fw),
                max(0.0, (cy - h / 2) * fh),
                min(float(fw), (cx + w / 2) * fw),
                min(float(fh), (cy + h / 2) * fh),
                cls,
                conf,
            )
            if box.width < 2 or box.height < 2:
                raise DetectionParseError(f"{path}: line {lineno}: box degenerate after clamping")
            key = (fidx, cls)
            if key not in best or conf > best[key].confidence:
                best[key] = box
    by_frame: dict[int, dict[str, BBox]] = {}
    for (fidx, cls), box in best.items():
        by_frame.setdefault(fidx, {})[cls] = box
    return [
        FrameDetections(fidx, globe=boxes.get(GLOBE), nerve=boxes.get(NERVE))
        for fidx, boxes in sorted(by_frame.items())
    ]


def write_detection_file(path: str, detections: Iterable[FrameDetections], frame_size: tuple[int, int]) -> None:
    """Serialize detections in the normalized text format read back by
    parse_detection_file."""
    fw, fh = frame_size
    with open(path, "w", encoding="utf-8") as f:
        f.write("# frame_index class cx cy w h confidence\n")
        for det in detections:
            for box in (det.globe, det.nerve):
                if box is None:
                    continue
                cx = (box.x_min + box.x_max) / 2 / fw
                cy = (box.y_min + box.y_max) / 2 / fh
                w = box.width / fw
                h = box.height / fh
                f.write(
                    f"{det.frame_index} {box.cls} {cx:.9f} {cy:.9f} {w:.9f} {h:.9f} {box.confidence:.9f}\n"
                )
