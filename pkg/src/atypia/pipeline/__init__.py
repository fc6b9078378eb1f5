"""Ingestion, persistence, synthetic data and the command line."""

from .config import EngineConfig
from .engine import Engine
from .io import parse_evidence, read_evidence
from .persistence import load_model, save_model
from .synthetic import SyntheticSpec, synth_generate, synth_normals

__all__ = [
    "Engine",
    "EngineConfig",
    "SyntheticSpec",
    "load_model",
    "parse_evidence",
    "read_evidence",
    "save_model",
    "synth_generate",
    "synth_normals",
]
