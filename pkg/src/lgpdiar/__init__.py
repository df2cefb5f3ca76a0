"""Two-pass leave-one-out Gaussian PLDA speaker diarization."""

from ._accel import BACKEND
from .cluster import ClusterConfig, Responsibilities, SpeakerModel, cluster
from .duration import DurationConfig, neff_continuous, neff_discrete, neff_limit
from .plda import PldaParams, length_normalize, project, simultaneous_diagonalize
from .scoring import DerOptions, score_der
from .two_pass import DiarizeConfig, diarize, run_two_pass

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ClusterConfig",
    "Responsibilities",
    "SpeakerModel",
    "cluster",
    "DurationConfig",
    "neff_continuous",
    "neff_discrete",
    "neff_limit",
    "PldaParams",
    "length_normalize",
    "project",
    "simultaneous_diagonalize",
    "DerOptions",
    "score_der",
    "DiarizeConfig",
    "diarize",
    "run_two_pass",
]
