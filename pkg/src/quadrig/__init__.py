"""Inverse rig fitting for quadratic blendshape models by majorization-minimization."""

from .baselines import BaselineConfig, solve_closed_form, solve_sequential
from .model import (BlendshapeModel, evaluate_linear, evaluate_quadratic,
                    validate_model)
from .solver import FitReport, SolverConfig, cardinality, objective, solve
from .spectral import SpectralCache, assemble, compute_spectra
from .synth import SynthSpec, generate_model, generate_target

__version__ = "0.1.0"

__all__ = [
    "BaselineConfig",
    "BlendshapeModel",
    "FitReport",
    "SolverConfig",
    "SpectralCache",
    "SynthSpec",
    "assemble",
    "cardinality",
    "compute_spectra",
    "evaluate_linear",
    "evaluate_quadratic",
    "generate_model",
    "generate_target",
    "objective",
    "solve",
    "solve_closed_form",
    "solve_sequential",
    "validate_model",
]
