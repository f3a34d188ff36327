"""Dictionary learning: alternate sparse coding with gradient steps on the
reconstruction error, renormalizing kernels to unit length after every
update."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import LcaError
from . import _core_py
from .coding import (
    DEFAULT_LAMBDA,
    DEFAULT_N_STEPS,
    DEFAULT_STEP,
    Dictionary,
    lca_encode,
    normalize_image,
)


def init_dictionary(kernel_count: int, kernel_size: int, seed: int) -> Dictionary:
    """Seeded unit-norm Gaussian kernels."""
    if kernel_count < 1 or kernel_size < 1:
        raise LcaError("kernel_count and kernel_size must be >= 1")
    rng = np.random.default_rng(seed)
    kernels = rng.standard_normal((kernel_count, kernel_size, kernel_size))
    return Dictionary(_renormalize(kernels))


def _renormalize(kernels: np.ndarray) -> np.ndarray:
    norms = np.sqrt((kernels * kernels).sum(axis=(1, 2), keepdims=True))
    norms[norms < 1e-12] = 1.0
    return kernels / norms


def reconstruction_grad(image: np.ndarray, kernels: np.ndarray, code: np.ndarray) -> np.ndarray:
    """Gradient of 0.5*||image - superpose(code)||^2 w.r.t. the kernels,
    holding the code fixed. Shape (K, s, s)."""
    recon = _core_py.superpose(code, kernels)
    resid = recon - np.asarray(image, dtype=np.float64)
    ho, wo = code.shape[1], code.shape[2]
    windows = sliding_window_view(resid, (ho, wo))
    return np.einsum("uvxy,kxy->kuv", windows, code, optimize=True)


def reconstruction_error(image: np.ndarray, dictionary: Dictionary, code: np.ndarray) -> float:
    resid = np.asarray(image, dtype=np.float64) - _core_py.superpose(code, dictionary.kernels)
    return 0.5 * float(np.dot(resid.ravel(), resid.ravel()))


def train_dictionary(
    images: list[np.ndarray],
    kernel_count: int,
    kernel_size: int,
    lam: float = DEFAULT_LAMBDA,
    epochs: int = 10,
    learning_rate: float = 0.1,
    seed: int = 0,
    step: float = DEFAULT_STEP,
    n_steps: int = DEFAULT_N_STEPS,
    backend: str | None = None,
) -> Dictionary:
    """Learn a dictionary from a corpus of grayscale images.

    Images are normalized individually. One epoch sweeps the corpus in
    order: encode, take a gradient step on the reconstruction error,
    renormalize. Deterministic for a fixed seed.
    """
    if not images:
        raise LcaError("training corpus is empty")
    dictionary = init_dictionary(kernel_count, kernel_size, seed)
    kernels = dictionary.kernels.copy()
    for _ in range(epochs):
        for image in images:
            x = normalize_image(image)
            d = Dictionary(kernels)
            acts = lca_encode(
                x, d, lam=lam, step=step, n_steps=n_steps, normalize=False, backend=backend
            )
            grad = reconstruction_grad(x, kernels, acts.code)
            # The raw gradient scales with the active-set size, so descend
            # along the per-kernel direction with learning_rate as the step;
            # kernels go back to unit length either way.
            gnorm = np.sqrt((grad * grad).sum(axis=(1, 2), keepdims=True))
            gnorm[gnorm < 1e-12] = 1.0
            kernels = _renormalize(kernels - learning_rate * grad / gnorm)
    return Dictionary(kernels)
