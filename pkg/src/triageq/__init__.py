"""Queueing models of radiologist reading delays with and without an AI triage device.

The analytic side solves quasi-birth-death chains (:mod:`triageq.qbd`),
reduces multi-class systems with busy-period fits (:mod:`triageq.rdr`) and
assembles the four workflow models (:mod:`triageq.models`).  The
simulator (:mod:`triageq.simulator`) replays the same workflows image by
image, and :mod:`triageq.metrics` turns class waits into time savings.
"""

from .errors import (
    AbsorbingStructureError,
    ConvergenceError,
    DegenerateBoundaryError,
    ModelNotCoveredError,
    MomentInfeasibleError,
    NumericalError,
    TriageQueueError,
    UnstableSystemError,
    ValidationError,
)
from .metrics import EffectivenessReport, delta_w, evaluate_scenario, roc_sweep, stroke_outcomes
from .models import ClassWaits, Model, evaluate, select_model
from .scenario import ClinicalScenario, DerivedRates, derive_rates

__version__ = "0.1.0"

__all__ = [
    "AbsorbingStructureError",
    "ClassWaits",
    "ClinicalScenario",
    "ConvergenceError",
    "DegenerateBoundaryError",
    "DerivedRates",
    "EffectivenessReport",
    "Model",
    "ModelNotCoveredError",
    "MomentInfeasibleError",
    "NumericalError",
    "TriageQueueError",
    "UnstableSystemError",
    "ValidationError",
    "delta_w",
    "derive_rates",
    "evaluate",
    "evaluate_scenario",
    "roc_sweep",
    "select_model",
    "stroke_outcomes",
]
