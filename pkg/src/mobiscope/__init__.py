"""mobiscope: session fusion engine for multimodal pedestrian walking data.

Converts raw walking-session streams (GPS, SLAM poses, gaze, physiology,
foot IMUs, vision-model outputs) into a geo-referenced, segment-level
representation of how a pedestrian experienced the built environment.
"""

__version__ = "0.1.0"

from .core import SampleSeries, SessionManifest, StreamDecl, duration, slice_by_time
from .errors import MobiscopeError

__all__ = [
    "MobiscopeError",
    "SampleSeries",
    "SessionManifest",
    "StreamDecl",
    "duration",
    "slice_by_time",
    "__version__",
]
