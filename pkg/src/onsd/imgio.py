"""Plain-file image I/O: binary PGM (P5), PBM (P4) and PPM (P6).

These writers emit exactly the same bytes for the same array, which the
determinism guarantees elsewhere in the package rely on. PNG output is
delegated to Pillow and only used where the caller asks for it by file
extension.
"""

from __future__ import annotations

import io

import numpy as np

from .errors import DataError, MaskError


def _read_header(stream: io.BufferedReader, path: str) -> tuple[bytes, int, int, int]:
    """Parse a netpbm header, returning (magic, width, height, maxval).

    maxval is reported as 1 for P4 bitmaps.
    """
    magic = stream.read(2)
    if magic not in (b"P4", b"P5", b"P6"):
        raise DataError(f"{path}: not a binary PGM/PBM/PPM file (magic {magic!r})")
    fields = []
    want = 2 if magic == b"P4" else 3
    while len(fields) < want:
        tok = b""
        ch = stream.read(1)
        # skip whitespace and comment lines between tokens
        while ch.isspace() or ch == b"#":
            if ch == b"#":
                while ch not in (b"\n", b""):
                    ch = stream.read(1)
            ch = stream.read(1)
        while ch and not ch.isspace():
            tok += ch
            ch = stream.read(1)
        if not tok:
            raise DataError(f"{path}: truncated header")
        try:
            fields.append(int(tok))
        except ValueError:
            raise DataError(f"{path}: bad header token {tok!r}") from None
    w, h = fields[0], fields[1]
    maxval = fields[2] if want == 3 else 1
    return magic, w, h, maxval


def read_pgm(path: str) -> np.ndarray:
    """Read an 8-bit P5 PGM into a float array in [0, 1]."""
    with open(path, "rb") as f:
        magic, w, h, maxval = _read_header(f, path)
        if magic != b"P5":
            raise DataError(f"{path}: expected P5 grayscale, got {magic.decode()}")
        if maxval != 255:
            raise DataError(f"{path}: unsupported maxval {maxval}")
        raw = f.read(w * h)
    if len(raw) != w * h:
        raise DataError(f"{path}: expected {w * h} pixel bytes, got {len(raw)}")
    img = np.frombuffer(raw, dtype=np.uint8).reshape(h, w)
    return img.astype(np.float64) / 255.0


def write_pgm(path: str, image: np.ndarray) -> None:
    """Write a float [0, 1] or uint8 grayscale array as binary PGM."""
    if image.ndim != 2:
        raise DataError(f"{path}: PGM needs a 2D array, got shape {image.shape}")
    if image.dtype != np.uint8:
        image = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    h, w = image.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(image.tobytes())


def read_mask_file(path: str) -> np.ndarray:
    """Read a binary mask from P5 (nonzero = true) or P4 (set bit = true)."""
    with open(path, "rb") as f:
        magic, w, h, _ = _read_header(f, path)
        if magic == b"P5":
            raw = f.read(w * h)
            if len(raw) != w * h:
                raise MaskError(f"{path}: expected {w * h} bytes, got {len(raw)}")
            return np.frombuffer(raw, dtype=np.uint8).reshape(h, w) != 0
        if magic == b"P4":
            row_bytes = (w + 7) // 8
            raw = f.read(row_bytes * h)
            if len(raw) != row_bytes * h:
                raise MaskError(f"{path}: truncated bitmap data")
            bits = np.unpackbits(
                np.frombuffer(raw, dtype=np.uint8).reshape(h, row_bytes), axis=1
            )
            return bits[:, :w] != 0
        raise MaskError(f"{path}: expected P5 or P4, got {magic.decode()}")


def write_mask_file(path: str, mask: np.ndarray) -> None:
    """Write a boolean mask as a P5 PGM with values {0, 255}."""
    write_pgm(path, np.where(mask, 255, 0).astype(np.uint8))


def write_rgb(path: str, image: np.ndarray) -> None:
    """Write an (H, W, 3) uint8 image as PPM, or PNG if the path asks for it."""
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise DataError(f"{path}: expected (H, W, 3) uint8 image")
    if path.lower().endswith(".png"):
        from PIL import Image

        Image.fromarray(image, mode="RGB").save(path)
        return
    h, w = image.shape[:2]
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(image.tobytes())
