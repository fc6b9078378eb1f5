"""Detection and explanation of abnormal images from a model of typical ones."""

from .calibration import PlattCalibrator, PlattParams, apply_platt, fit_platt
from .evidence import CategoryVocab, ImageEvidence, NormalTrainingRecord, ObjectEvidence
from .reasoning import ReasoningModel
from .surprise import REASONS, AblationConfig, SurpriseScorer, SurpriseTriple
from .taxonomy import AnnotationMatrix, WardClustering, cut_k, group_reasons, ward_linkage
from .typicality import TypicalityModel

__version__ = "0.1.0"

__all__ = [
    "AblationConfig",
    "AnnotationMatrix",
    "CategoryVocab",
    "ImageEvidence",
    "NormalTrainingRecord",
    "ObjectEvidence",
    "PlattCalibrator",
    "PlattParams",
    "REASONS",
    "ReasoningModel",
    "SurpriseScorer",
    "SurpriseTriple",
    "TypicalityModel",
    "WardClustering",
    "apply_platt",
    "cut_k",
    "fit_platt",
    "group_reasons",
    "ward_linkage",
]
