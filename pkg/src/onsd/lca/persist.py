"""Binary persistence for dictionaries and classifiers.

Layout: a 16-byte header (8-byte magic, uint32 version, uint32 reserved),
little-endian uint32 dimensions, then float32 payload. A JSON sidecar at
<path>.json records the hyperparameters the artifact was produced with.
Writes are byte-deterministic.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import LcaError
from .classifier import FrameClassifier
from .coding import Dictionary

DICT_MAGIC = b"ONSDLCAD"
CLF_MAGIC = b"ONSDLCLF"
FORMAT_VERSION = 1


def _write_header(f, magic: bytes) -> None:
    f.write(magic)
    f.write(struct.pack("<II", FORMAT_VERSION, 0))


def _read_header(f, magic: bytes, path: str) -> None:
    got = f.read(8)
    if got != magic:
        raise LcaError(f"{path}: bad magic {got!r}, expected {magic!r}")
    version, _ = struct.unpack("<II", f.read(8))
    if version != FORMAT_VERSION:
        raise LcaError(f"{path}: unsupported format version {version}")


def _write_sidecar(path: str, params: dict) -> None:
    with open(path + ".json", "w", encoding="utf-8") as f:
        json.dump(params, f, indent=2, sort_keys=True)
        f.write("\n")


def read_sidecar(path: str) -> dict:
    try:
        with open(path + ".json", "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError:
        return {}


def save_dictionary(path: str, dictionary: Dictionary, params: dict | None = None) -> None:
    with open(path, "wb") as f:
        _write_header(f, DICT_MAGIC)
        f.write(struct.pack("<II", dictionary.kernel_count, dictionary.kernel_size))
        f.write(dictionary.kernels.astype("<f4").tobytes())
    _write_sidecar(path, dict(params or {}))


def load_dictionary(path: str) -> Dictionary:
    try:
        f = open(path, "rb")
    except OSError as exc:
        raise LcaError(f"cannot read dictionary {path}: {exc}") from None
    with f:
        _read_header(f, DICT_MAGIC, path)
        k, s = struct.unpack("<II", f.read(8))
        raw = f.read(4 * k * s * s)
    if len(raw) != 4 * k * s * s:
        raise LcaError(f"{path}: truncated kernel data")
    kernels = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(k, s, s)
    # float32 storage nudges norms off unit length; restore exactly.
    norms = np.sqrt((kernels * kernels).sum(axis=(1, 2), keepdims=True))
    norms[norms < 1e-12] = 1.0
    return Dictionary(kernels / norms)


def save_classifier(path: str, classifier: FrameClassifier, params: dict | None = None) -> None:
    with open(path, "wb") as f:
        _write_header(f, CLF_MAGIC)
        f.write(struct.pack("<I", classifier.weights.shape[0]))
        f.write(classifier.weights.astype("<f4").tobytes())
        f.write(struct.pack("<f", classifier.bias))
    _write_sidecar(path, dict(params or {}))


def load_classifier(path: str) -> FrameClassifier:
    try:
        f = open(path, "rb")
    except OSError as exc:
        raise LcaError(f"cannot read classifier {path}: {exc}") from None
    with f:
        _read_header(f, CLF_MAGIC, path)
        (k,) = struct.unpack("<I", f.read(4))
        raw = f.read(4 * k)
        if len(raw) != 4 * k:
            raise LcaError(f"{path}: truncated weight data")
        (bias,) = struct.unpack("<f", f.read(4))
    weights = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    return FrameClassifier(weights, float(bias))
