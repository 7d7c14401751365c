"""Inverse medium scattering with a learned complex Gaussian mixture model of discretization error."""

__version__ = "0.1.0"

from .grid import (GeometryError, GridSpec, PmlProfile, ReceiverSet, ScattererField, ComplexField,
                   build_receivers)
from .helmholtz import DataRecord, HelmholtzSolver, SolverError, forward_map, synthesize_data
from .cgmm import ErrorSampleSet, MixtureModel, fit_em
from .regularizer import RegularizerConfig
from .inversion import ContinuationSchedule, StepControl, run_inversion, update_step

__all__ = [
    "GeometryError", "GridSpec", "PmlProfile", "ReceiverSet", "ScattererField", "ComplexField",
    "build_receivers", "DataRecord", "HelmholtzSolver", "SolverError", "forward_map",
    "synthesize_data", "ErrorSampleSet", "MixtureModel", "fit_em", "RegularizerConfig",
    "ContinuationSchedule", "StepControl", "run_inversion", "update_step",
]
