"""Convolutional sparse coding via thresholded competition dynamics.

A dictionary of unit-norm kernels encodes an image as a sparse tensor of
coefficients. Potentials integrate the correlation drive minus leak and
lateral inhibition; coefficients are the soft-thresholded potentials. The
objective the fixed points satisfy is the usual reconstruction-plus-L1
energy, which is also what the diagnostic trace records.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import LcaError
from . import _core_py
from ._backend import get_core

DEFAULT_LAMBDA = 0.5
DEFAULT_STEP = 0.1
DEFAULT_N_STEPS = 100
DEFAULT_KERNEL_COUNT = 32
DEFAULT_KERNEL_SIZE = 8

UNIT_NORM_TOL = 1e-6


@dataclass(frozen=True)
class Dictionary:
    """K unit-norm square kernels, shape (K, s, s)."""

    kernels: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.kernels, dtype=np.float64)
        if k.ndim != 3 or k.shape[1] != k.shape[2]:
            raise LcaError(f"kernels must be (K, s, s), got {k.shape}")
        norms = np.sqrt((k * k).sum(axis=(1, 2)))
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            raise LcaError("every kernel must have unit L2 norm")
        object.__setattr__(self, "kernels", k)

    @property
    def kernel_count(self) -> int:
        return self.kernels.shape[0]

    @property
    def kernel_size(self) -> int:
        return self.kernels.shape[1]


@dataclass(frozen=True)
class Activations:
    """Sparse code for one image: (K, Ho, Wo) coefficients plus the final
    potentials, and the energy trace when one was recorded."""

    code: np.ndarray
    lam: float
    potentials: np.ndarray
    energies: np.ndarray | None = None


def normalize_image(image: np.ndarray) -> np.ndarray:
    """Zero-mean, unit-variance copy; flat images come back all zero."""
    x = np.asarray(image, dtype=np.float64)
    x = x - x.mean()
    std = x.std()
    if std > 1e-12:
        x = x / std
    return x


def reconstruct(dictionary: Dictionary, code: np.ndarray) -> np.ndarray:
    """Superpose kernels at their coefficients (adjoint of the drive)."""
    return _core_py.superpose(np.asarray(code, dtype=np.float64), dictionary.kernels)


def lca_encode(
    image: np.ndarray,
    dictionary: Dictionary,
    lam: float = DEFAULT_LAMBDA,
    step: float = DEFAULT_STEP,
    n_steps: int = DEFAULT_N_STEPS,
    normalize: bool = True,
    record_energy: bool = False,
    backend: str | None = None,
) -> Activations:
    """Sparse code an image against a dictionary.

    The image is normalized to zero mean and unit variance first unless
    the caller has already done so. Returns the coefficients after
    n_steps updates of the competition dynamics.
    """
    if lam <= 0:
        raise LcaError("lambda must be positive")
    if not 0.0 < step <= 1.0:
        raise LcaError("step must lie in (0, 1]")
    if n_steps < 1:
        raise LcaError("n_steps must be >= 1")
    x = np.asarray(image, dtype=np.float64)
    if x.ndim != 2:
        raise LcaError(f"image must be 2D, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise LcaError("image contains non-finite values")
    s = dictionary.kernel_size
    if x.shape[0] < s or x.shape[1] < s:
        raise LcaError(f"image {x.shape} smaller than kernel size {s}")
    if normalize:
        x = normalize_image(x)

    core = get_core(backend)
    kernels = dictionary.kernels
    drive = _core_py.correlate_all(x, kernels)
    gram = _core_py.kernel_gram(kernels)
    sqnorm = float(np.dot(x.ravel(), x.ravel()))
    code, potentials, energies = core.lca_iterate(
        x, kernels, drive, gram, float(lam), float(step), int(n_steps), sqnorm, bool(record_energy)
    )
    return Activations(code, float(lam), potentials, energies)


def lca_energy(image: np.ndarray, dictionary: Dictionary, code: np.ndarray, lam: float) -> float:
    """Reconstruction-plus-L1 objective for a given code.

    The image must be whatever the code was fit to, normalized the same
    way.
    """
    x = np.asarray(image, dtype=np.float64)
    code = np.asarray(code, dtype=np.float64)
    s = dictionary.kernel_size
    expected = (
        dictionary.kernel_count,
        x.shape[0] - s + 1,
        x.shape[1] - s + 1,
    )
    if code.shape != expected:
        raise LcaError(f"code shape {code.shape} does not match image/dictionary ({expected})")
    resid = x - reconstruct(dictionary, code)
    return 0.5 * float(np.dot(resid.ravel(), resid.ravel())) + lam * float(np.abs(code).sum())
