"""Pure NumPy implementation of the sparse-coding inner loops.

This is the reference backend: the dynamics are written exactly as
stated, with the lateral inhibition computed by reconstructing the image
from the current code and correlating the reconstruction with every
kernel. The compiled backend reaches the same values through the kernel
cross-correlation tensor; the two agree to floating-point noise.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import fftconvolve

NAME = "numpy"


def correlate_all(image: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    """Valid cross-correlation of the image with every kernel: (K, Ho, Wo)."""
    s = kernels.shape[-1]
    windows = sliding_window_view(image, (s, s))
    return np.einsum("xyuv,kuv->kxy", windows, kernels, optimize=True)


def superpose(code: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    """Adjoint of correlate_all: overlap-add of every kernel placed at its
    coefficients. Output is (Ho + s - 1, Wo + s - 1)."""
    full = fftconvolve(code, kernels, mode="full", axes=(1, 2))
    return full.sum(axis=0)


def kernel_gram(kernels: np.ndarray) -> np.ndarray:
    """Cross-correlation tensor gram[j, k, a, b] = sum_q k_k(q) k_j(q + d)
    with displacement d = (a, b) - (s - 1)."""
    K, s, _ = kernels.shape
    padded = np.zeros((K, 3 * s - 2, 3 * s - 2), dtype=np.float64)
    padded[:, s - 1 : 2 * s - 1, s - 1 : 2 * s - 1] = kernels
    windows = sliding_window_view(padded, (s, s), axis=(1, 2))
    return np.einsum("jabuv,kuv->jkab", windows, kernels, optimize=True)


def soft_threshold(u: np.ndarray, lam: float) -> np.ndarray:
    return np.sign(u) * np.maximum(np.abs(u) - lam, 0.0)


def lca_iterate(
    image: np.ndarray,
    kernels: np.ndarray,
    drive: np.ndarray,
    gram: np.ndarray,
    lam: float,
    step: float,
    n_steps: int,
    image_sqnorm: float,
    record_energy: bool,
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Run the thresholded competition dynamics and return (code,
    potentials, energies or None). Energies are evaluated before each
    update, so entry t is the objective at the code of step t."""
    u = np.zeros_like(drive)
    a = np.zeros_like(drive)
    energies = np.empty(n_steps, dtype=np.float64) if record_energy else None
    for t in range(n_steps):
        a = soft_threshold(u, lam)
        recon = superpose(a, kernels)
        inhibition = correlate_all(recon, kernels)
        if record_energy:
            resid = image - recon
            energies[t] = 0.5 * float(np.dot(resid.ravel(), resid.ravel())) + lam * float(
                np.abs(a).sum()
            )
        u += step * (drive - u - (inhibition - a))
    a = soft_threshold(u, lam)
    return a, u, energies
