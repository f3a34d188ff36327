"""Nerve masks over the oriented crop and their reduction to a width.

The classical segmenter looks, per crop row, for the dark band bounded by
the strongest falling and rising intensity edges around the crop centre,
which is where the hyperechoic walls meet the hypoechoic interior.
Externally produced masks can be loaded from 16x128 PGM/PBM files
instead. Either way the width is the median of per-row run lengths,
converted to millimetres by the frame calibration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import imgio
from .errors import MaskError
from .geometry import CROP_COLS, CROP_ROWS, OrientedCrop

# Edge search stays within this many columns of the crop centre, which
# caps the measurable width at roughly 9.6 mm at the default calibration.
_SEARCH_HALF_WIDTH = 48
# An edge pair must clear this fraction of the crop's dynamic range.
_CONTRAST_FRACTION = 0.2

_MIN_VALID_ROWS = 8


@dataclass(frozen=True)
class WidthMeasurement:
    width_mm: float
    per_row_px: list[int | None]
    valid: bool


def _subpixel_edge(grad: np.ndarray, idx: int, sign: float) -> float:
    """Centre of gravity of the gradient step around idx, in grad indices."""
    lo = max(0, idx - 1)
    hi = min(len(grad), idx + 2)
    window = grad[lo:hi] * sign
    window = np.where(window > 0, window, 0.0)
    total = window.sum()
    if total <= 0:
        return float(idx)
    return float((np.arange(lo, hi) * window).sum() / total)


def segment_classical(crop: OrientedCrop) -> np.ndarray:
    """Mask the dark band between the two strongest opposing edges per row.

    Rows whose edge pair does not clear the contrast threshold stay empty;
    an all-empty mask is a valid result for structureless crops.
    """
    pixels = crop.pixels
    mask = np.zeros((CROP_ROWS, CROP_COLS), dtype=bool)
    spread = float(pixels.max() - pixels.min())
    if spread < 1e-6:
        return mask
    threshold = _CONTRAST_FRACTION * spread

    center = CROP_COLS // 2
    lo = center - _SEARCH_HALF_WIDTH
    hi = center + _SEARCH_HALF_WIDTH
    for i in range(CROP_ROWS):
        grad = np.diff(pixels[i])
        left_region = grad[lo:center]
        right_region = grad[center:hi]
        li = int(np.argmin(left_region)) + lo
        ri = int(np.argmax(right_region)) + center
        if grad[li] > -threshold or grad[ri] < threshold:
            continue
        # Sub-pixel edge positions; the boundary sits half a pixel past the
        # gradient index. Columns are kept on the half-open span
        # [left, right) so the run length matches the band width instead of
        # picking up a column at each exactly-integer boundary.
        left = _subpixel_edge(grad, li, -1.0) + 0.5
        right = _subpixel_edge(grad, ri, +1.0) + 0.5
        first = int(np.ceil(left))
        last = int(np.ceil(right)) - 1
        if last >= first:
            mask[i, first : last + 1] = True
    return mask


def _longest_run(row: np.ndarray) -> int | None:
    """Length of the longest contiguous True run, or None if all False."""
    if not row.any():
        return None
    padded = np.concatenate(([0], row.astype(np.int8), [0]))
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return int((ends - starts).max())


def width_from_mask(mask: np.ndarray, pixels_per_mm: float) -> WidthMeasurement:
    """Median of per-row longest runs, in millimetres.

    Rows without any true cell contribute nothing; fewer than 8
    contributing rows make the measurement invalid (width 0).
    """
    if pixels_per_mm <= 0:
        raise MaskError("pixels_per_mm must be positive")
    _check_shape(mask)
    per_row = [_longest_run(mask[i]) for i in range(CROP_ROWS)]
    runs = [r for r in per_row if r is not None]
    if len(runs) < _MIN_VALID_ROWS:
        return WidthMeasurement(0.0, per_row, False)
    return WidthMeasurement(float(np.median(runs)) / pixels_per_mm, per_row, True)


def _check_shape(mask: np.ndarray) -> None:
    if mask.shape != (CROP_ROWS, CROP_COLS):
        raise MaskError(f"expected {CROP_ROWS}x{CROP_COLS} mask, got {mask.shape[0]}x{mask.shape[1]}")


def load_mask(path: str) -> np.ndarray:
    """Read a 16x128 binary mask file (P5 with nonzero = true, or P4)."""
    mask = imgio.read_mask_file(path)
    _check_shape(mask)
    return mask


def save_mask(path: str, mask: np.ndarray) -> None:
    _check_shape(mask)
    imgio.write_mask_file(path, mask)
