"""sceneforge: factored indoor-scene generation.

A layout DSL and deterministic interpreter, wake-sleep library learning
with mIoU-verified reconstruction, a program-conditioned two-stage object
pose classifier, object retrieval and facing assembly, and evaluation +
SVG rendering. See the README for the pipeline and CLI.
"""

__version__ = "0.1.0"

from .errors import (
    DegenerateGeometryError,
    ExecError,
    ParseError,
    ProposalUnavailableError,
    RetrievalError,
    SceneForgeError,
    TrainingDivergedError,
)
from .geometry import Aabb, OrientedBox, Wall, bin_to_theta, iou, min_area_orientation, theta_to_bin
from .interp import Layout, PlacedObject, Room, execute
from .library import Library, description_length, funcs_per_program, rewrite_corpus
from .wakesleep import recognize_heuristic, run_wake_sleep, verify

__all__ = [
    "Aabb",
    "DegenerateGeometryError",
    "ExecError",
    "Layout",
    "Library",
    "OrientedBox",
    "ParseError",
    "PlacedObject",
    "ProposalUnavailableError",
    "RetrievalError",
    "Room",
    "SceneForgeError",
    "TrainingDivergedError",
    "Wall",
    "bin_to_theta",
    "description_length",
    "execute",
    "funcs_per_program",
    "iou",
    "min_area_orientation",
    "recognize_heuristic",
    "rewrite_corpus",
    "run_wake_sleep",
    "theta_to_bin",
    "verify",
]
