"""Time-saving effectiveness of a triage device and sweeps over its operating point."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np
from scipy.stats import norm

from . import models
from .errors import TriageQueueError
from .scenario import ClinicalScenario

POSITIVE_DELTA = "no-time-saved"


def diseased_wait(W_plus: float, W_minus: float, se: float) -> float:
    """Mean with-device wait of a diseased image: TP images wait W_plus, FN images W_minus."""
    return W_plus * se + W_minus * (1.0 - se)


def nondiseased_wait(W_plus: float, W_minus: float, sp: float) -> float:
    """Mean with-device wait of a non-diseased image: FP images wait W_plus, TN images W_minus."""
    return W_plus * (1.0 - sp) + W_minus * sp


@dataclass(frozen=True)
class StrokeOutcomes:
    percent_less_disability: float
    nntb: float
    mnt: float
    flags: frozenset = frozenset()


@dataclass(frozen=True)
class EffectivenessReport:
    """Per-subgroup mean waits (minutes) and the with-minus-without differences.

    Negative ``delta_W_D`` means diseased images are read sooner with the device.
    """

    W_D_without: float
    W_D_with: float
    W_ND_without: float
    W_ND_with: float
    delta_W_D: float
    delta_W_ND: float
    stroke: StrokeOutcomes | None = None
    flags: frozenset = field(default_factory=frozenset)


def delta_w(W_nonEm: float, W_plus: float, W_minus: float, se: float, sp: float,
            with_stroke: bool = False, flags=()) -> EffectivenessReport:
    """Build an :class:`EffectivenessReport` from the three class waits.

    Without the device every non-emergent image waits ``W_nonEm``, so that
    is the baseline for both subgroups.
    """
    wd = diseased_wait(W_plus, W_minus, se)
    wnd = nondiseased_wait(W_plus, W_minus, sp)
    d_d = wd - W_nonEm
    stroke = stroke_outcomes(d_d) if with_stroke else None
    return EffectivenessReport(W_nonEm, wd, W_nonEm, wnd, d_d, wnd - W_nonEm, stroke, frozenset(flags))


def evaluate_scenario(s: ClinicalScenario, with_stroke: bool = False):
    """Analytic class waits and effectiveness report of one scenario."""
    waits = models.evaluate(s)
    report = delta_w(waits.W_nonEm, waits.W_plus, waits.W_minus, s.sensitivity, s.specificity,
                     with_stroke, waits.flags)
    return waits, report


@lru_cache(maxsize=1)
def stroke_constants() -> dict:
    """Constants of the minutes-to-outcome conversion (see ``data/stroke_outcomes.json``)."""
    text = resources.files("triageq").joinpath("data/stroke_outcomes.json").read_text(encoding="utf-8")
    return json.loads(text)


def stroke_outcomes(delta_W_D: float) -> StrokeOutcomes:
    """Translate minutes saved per diseased image into stroke-outcome terms.

    Returns the percentage of patients with less disability, the number
    needed to benefit and the MNT figure, all growing linearly with the
    minutes saved.  A non-negative ``delta_W_D`` saves nothing and gives a
    zero triple (NNTB infinite), flagged when strictly positive.
    """
    c = stroke_constants()
    saved = -delta_W_D
    if saved <= 0.0:
        flags = frozenset({POSITIVE_DELTA}) if saved < 0.0 else frozenset()
        return StrokeOutcomes(0.0, math.inf, 0.0, flags)
    percent = c["percent_less_disability_per_reference"] * saved / c["reference_minutes"]
    return StrokeOutcomes(percent, 100.0 / percent, saved * c["mnt_per_minute"])


# --------------------------------------------------------------------------
# ROC sweeps
# --------------------------------------------------------------------------


def binormal_roc(fpr, a: float, b: float = 1.0):
    """TPR of the binormal ROC curve ``TPR = Phi(a + b Phi^{-1}(FPR))``."""
    fpr = np.asarray(fpr, dtype=float)
    with np.errstate(divide="ignore"):
        return norm.cdf(a + b * norm.ppf(fpr))


def binormal_through(fpr: float, tpr: float, b: float = 1.0) -> float:
    """Intercept ``a`` of the binormal curve with slope ``b`` passing through (fpr, tpr)."""
    return float(norm.ppf(tpr) - b * norm.ppf(fpr))


@dataclass(frozen=True)
class RocPoint:
    fpr: float
    tpr: float
    delta_W_D: float
    delta_W_ND: float
    flags: frozenset = frozenset()


def _is_corner(fpr, tpr):
    return (fpr == 0.0 and tpr == 0.0) or (fpr == 1.0 and tpr == 1.0)


def roc_sweep(s: ClinicalScenario, points) -> list:
    """Evaluate the device at each ``(FPR, TPR)`` with Se = TPR and Sp = 1 - FPR.

    At the corners (0, 0) and (1, 1) every image lands in one class, so
    both worlds are identical and the differences are exactly zero.  A
    point whose evaluation fails is returned with NaN values and an error
    flag; the sweep carries on.
    """
    rows = []
    for fpr, tpr in points:
        fpr, tpr = float(fpr), float(tpr)
        if not (0.0 <= fpr <= 1.0 and 0.0 <= tpr <= 1.0):
            raise ValueError(f"ROC point ({fpr}, {tpr}) lies outside the unit square")
        if _is_corner(fpr, tpr):
            rows.append(RocPoint(fpr, tpr, 0.0, 0.0, frozenset({"roc-corner"})))
            continue
        try:
            _, rep = evaluate_scenario(s.with_changes(sensitivity=tpr, specificity=1.0 - fpr))
        except TriageQueueError as exc:
            rows.append(RocPoint(fpr, tpr, math.nan, math.nan, frozenset({f"error:{type(exc).__name__}"})))
            continue
        rows.append(RocPoint(fpr, tpr, rep.delta_W_D, rep.delta_W_ND, rep.flags))
    return rows
