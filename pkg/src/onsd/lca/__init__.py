"""Convolutional sparse coding (dictionary, encoder, classifier head).

The inner loop runs on a compiled core when the extension built, with a
NumPy fallback selected automatically at import; see onsd.lca.backends.
"""

from ._backend import available_backends, default_backend
from .classifier import FrameClassifier, classify_frame, pool_code, train_classifier
from .coding import (
    DEFAULT_KERNEL_COUNT,
    DEFAULT_KERNEL_SIZE,
    DEFAULT_LAMBDA,
    DEFAULT_N_STEPS,
    DEFAULT_STEP,
    Activations,
    Dictionary,
    lca_encode,
    lca_energy,
    normalize_image,
    reconstruct,
)
from .learning import (
    init_dictionary,
    reconstruction_error,
    reconstruction_grad,
    train_dictionary,
)
from .persist import (
    load_classifier,
    load_dictionary,
    read_sidecar,
    save_classifier,
    save_dictionary,
)

__all__ = [
    "Activations",
    "Dictionary",
    "FrameClassifier",
    "available_backends",
    "classify_frame",
    "default_backend",
    "init_dictionary",
    "lca_encode",
    "lca_energy",
    "load_classifier",
    "load_dictionary",
    "normalize_image",
    "pool_code",
    "read_sidecar",
    "reconstruct",
    "reconstruction_error",
    "reconstruction_grad",
    "save_classifier",
    "save_dictionary",
    "train_classifier",
    "train_dictionary",
    "DEFAULT_KERNEL_COUNT",
    "DEFAULT_KERNEL_SIZE",
    "DEFAULT_LAMBDA",
    "DEFAULT_N_STEPS",
    "DEFAULT_STEP",
]
