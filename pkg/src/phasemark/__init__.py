"""Pseudo-periodic fiducial markers: rendering and sub-pixel pose estimation.

A lattice of dots gives a sharp spectral peak per axis whose phase fixes the
sub-period position; missing dots carry an absolute code (Megarena) or a
marker frame (HP codes with corner finders, stamps with a border) fixes the
integer period.
"""

from .decoder import AbsolutePose2D, MegarenaDecoder, decode_megarena
from .estimators import LatticePhaseEstimator, MegarenaPoseEstimator, SmallMarkerPoseEstimator
from .exceptions import (
    AmbiguousCodingPhase,
    AmbiguousDecode,
    ConfigError,
    DecodeError,
    DecodeFailed,
    DegenerateClustering,
    DetectionError,
    FewerThanMinimumCells,
    FitDegenerate,
    GlyphAmbiguous,
    ImageIOError,
    NoLatticeFound,
    NonOrthogonalLattice,
    PhasemarkError,
    SequenceError,
)
from .imagecore import SensorSpec, degrade, load_image, save_image
from .markerdetect import detect_markers, estimate_small_marker
from .patterngen import (
    HpCodeSpec,
    MegarenaSpec,
    RenderPose,
    StampSpec,
    export_svg,
    layout_hpcode,
    layout_megarena,
    layout_stamp,
    render,
    view_pose,
)
from .phaseengine import AnalysisSettings, PhaseResult, analyze
from .pose import Pose2D, Transform, compose, inverse, periods_to_physical, relative_pose, to_transform

__version__ = "0.1.0"

__all__ = [
    "AbsolutePose2D",
    "AmbiguousCodingPhase",
    "AmbiguousDecode",
    "AnalysisSettings",
    "ConfigError",
    "DecodeError",
    "DecodeFailed",
    "DegenerateClustering",
    "DetectionError",
    "FewerThanMinimumCells",
    "FitDegenerate",
    "GlyphAmbiguous",
    "HpCodeSpec",
    "ImageIOError",
    "LatticePhaseEstimator",
    "MegarenaDecoder",
    "MegarenaPoseEstimator",
    "MegarenaSpec",
    "NoLatticeFound",
    "NonOrthogonalLattice",
    "PhaseResult",
    "PhasemarkError",
    "Pose2D",
    "RenderPose",
    "SensorSpec",
    "SequenceError",
    "SmallMarkerPoseEstimator",
    "StampSpec",
    "Transform",
    "analyze",
    "compose",
    "decode_megarena",
    "degrade",
    "detect_markers",
    "estimate_small_marker",
    "export_svg",
    "inverse",
    "layout_hpcode",
    "layout_megarena",
    "layout_stamp",
    "load_image",
    "periods_to_physical",
    "relative_pose",
    "render",
    "save_image",
    "to_transform",
    "view_pose",
]
