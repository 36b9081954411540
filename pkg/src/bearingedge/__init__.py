"""Desk-scale real-time bearing fault diagnosis.

Signal pipeline, a small from-scratch CNN with training, device-style
resource accounting, and a line protocol connecting a host streamer to a
device simulator.
"""

from .errors import BearingEdgeError
from .model import canonical_architecture, load_model, save_model
from .signal import (
    FAULT_CLASSES,
    Frame,
    Recording,
    frame_direct,
    generate_synthetic,
    normalize,
    sample_windows,
)

__all__ = [
    "BearingEdgeError",
    "FAULT_CLASSES",
    "Frame",
    "Recording",
    "canonical_architecture",
    "frame_direct",
    "generate_synthetic",
    "load_model",
    "normalize",
    "sample_windows",
    "save_model",
]

__version__ = "0.1.0"
