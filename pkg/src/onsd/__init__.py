"""Optic nerve sheath diameter measurement and elevated-ICP screening
from ultrasound video, with a synthetic phantom generator for validation.

Two systems are provided: a geometric width-measurement pipeline
(detect, construct the measurement axis, crop, segment, measure) and a
sparse-coding classifier pipeline (detect, encode the nerve region,
classify, average). Both aggregate per-frame evidence into a per-video
verdict against the 5 mm cutoff.
"""

__version__ = "0.1.0"
