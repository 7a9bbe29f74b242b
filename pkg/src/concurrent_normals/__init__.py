"""Concurrent normals, focal sets and Morse data of squared-distance functions."""

from .errors import (
    BadParams,
    DegenerateMetric,
    FrameFailure,
    GeometryError,
    NonMorsePoint,
    OutOfChart,
    PairingFailure,
    RadiusTooLarge,
    RegularityRequired,
    UnknownExample,
    UnresolvedEvent,
    WitnessNotFound,
)
from .focal import NormalLine, focal_cloud, focal_points, regularity
from .geometry import ImmersionSpec, jet2, metric_and_form, normal_direction, normal_frame
from .morse import (
    SolverConfig,
    brute_force_census,
    find_critical_points,
    find_critical_points_many,
    linear_census,
)
from .normal_walk import WalkConfig, verify_lemma, verify_theorem, walk
from .shapes import BUILTIN_NAMES, builtin
from .tube import tube_spec, verify_doubling

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_NAMES",
    "BadParams",
    "DegenerateMetric",
    "FrameFailure",
    "GeometryError",
    "ImmersionSpec",
    "NonMorsePoint",
    "NormalLine",
    "OutOfChart",
    "PairingFailure",
    "RadiusTooLarge",
    "RegularityRequired",
    "SolverConfig",
    "UnknownExample",
    "UnresolvedEvent",
    "WalkConfig",
    "WitnessNotFound",
    "brute_force_census",
    "builtin",
    "find_critical_points",
    "find_critical_points_many",
    "focal_cloud",
    "focal_points",
    "jet2",
    "linear_census",
    "metric_and_form",
    "normal_direction",
    "normal_frame",
    "regularity",
    "tube_spec",
    "verify_doubling",
    "verify_lemma",
    "verify_theorem",
    "walk",
]
