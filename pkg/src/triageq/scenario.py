"""Clinical workflow parameters and the arrival/service rates derived from them.

All times are in minutes and all rates in events per minute.  A scenario is
described by the emergent fraction, disease prevalence, traffic intensity,
mean reading times, number of radiologists and the operating point
(sensitivity, specificity) of the triage device.  Everything the queueing
models need is computed once by :func:`derive_rates`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .errors import ValidationError

#: Flag set on :class:`DerivedRates` when no image can be AI-positive.
NO_POSITIVE_CLASS = "no-positive-class"
#: Flag set on :class:`DerivedRates` when no image can be AI-negative.
NO_NEGATIVE_CLASS = "no-negative-class"


def _check_interval(name, value, lo, hi, lo_open=False, hi_open=False):
    if not isinstance(value, (int, float)) or math.isnan(value):
        raise ValidationError(f"{name} must be a number, got {value!r}")
    bad_lo = value <= lo if lo_open else value < lo
    bad_hi = value >= hi if hi_open else value > hi
    if bad_lo or bad_hi:
        left = "(" if lo_open else "["
        right = ")" if hi_open else "]"
        raise ValidationError(f"{name} must be in {left}{lo:g},{hi:g}{right}, got {value!r}")


@dataclass(frozen=True)
class ClinicalScenario:
    """User-facing description of a reading workflow.

    Parameters
    ----------
    fraction_emergent : float
        Fraction of images flagged emergent by the hospital, in [0, 1].
    prevalence : float
        Fraction of non-emergent images carrying the target disease, in (0, 1).
    traffic : float
        Traffic intensity, arrival rate over total service capacity, in (0, 1).
    read_time_emergent, read_time_diseased, read_time_nondiseased : float
        Mean reading times in minutes.
    num_radiologists : int
        1 or 2.
    sensitivity, specificity : float
        Operating point of the triage device, each in [0, 1].
    """

    fraction_emergent: float = 0.0
    prevalence: float = 0.1
    traffic: float = 0.8
    read_time_emergent: float = 5.0
    read_time_diseased: float = 10.0
    read_time_nondiseased: float = 10.0
    num_radiologists: int = 1
    sensitivity: float = 0.95
    specificity: float = 0.89

    def __post_init__(self):
        _check_interval("fraction_emergent", self.fraction_emergent, 0.0, 1.0)
        _check_interval("prevalence", self.prevalence, 0.0, 1.0, lo_open=True, hi_open=True)
        _check_interval("traffic", self.traffic, 0.0, 1.0, lo_open=True, hi_open=True)
        for name in ("read_time_emergent", "read_time_diseased", "read_time_nondiseased"):
            value = getattr(self, name)
            _check_interval(name, value, 0.0, math.inf, lo_open=True, hi_open=True)
        if self.num_radiologists not in (1, 2) or isinstance(self.num_radiologists, bool):
            raise ValidationError(
                f"num_radiologists must be 1 or 2, got {self.num_radiologists!r}"
            )
        _check_interval("sensitivity", self.sensitivity, 0.0, 1.0)
        _check_interval("specificity", self.specificity, 0.0, 1.0)

    def with_changes(self, **changes) -> "ClinicalScenario":
        """Return a validated copy with some fields replaced."""
        return replace(self, **changes)


@dataclass(frozen=True)
class DerivedRates:
    """Arrival rates, reading rates and predictive values of one scenario.

    ``lam_plus``/``lam_minus`` are the AI-positive/AI-negative arrival
    streams and ``mu_plus``/``mu_minus`` their effective (hyperexponential
    mean) reading rates.  When a class is empty its rate is 0, the matching
    predictive value is NaN and ``mu_plus``/``mu_minus`` falls back to
    ``mu_nonem``; consumers must check ``flags`` before using them.
    """

    lam: float
    lam_em: float
    lam_nonem: float
    lam_plus: float
    lam_minus: float
    mu_em: float
    mu_d: float
    mu_nd: float
    mu_nonem: float
    mu_plus: float
    mu_minus: float
    ppv: float
    npv: float
    prevalence: float
    sensitivity: float
    specificity: float
    num_radiologists: int
    flags: frozenset = field(default_factory=frozenset)

    @property
    def same_reading_rates(self) -> bool:
        """True when diseased and non-diseased images are read at the same rate."""
        return math.isclose(self.mu_d, self.mu_nd, rel_tol=1e-12, abs_tol=0.0)


def _harmonic(weight_d, mu_d, mu_nd):
    """Rate of a two-branch hyperexponential with mean weight_d/mu_d + (1-weight_d)/mu_nd."""
    if mu_d == mu_nd:
        return mu_d
    return 1.0 / (weight_d / mu_d + (1.0 - weight_d) / mu_nd)


def effective_service_rate(s: ClinicalScenario) -> float:
    """Total reading capacity in images per minute.

    This is the number of radiologists divided by the mean reading time of
    an arbitrary image, i.e. a harmonic mix over the emergent, diseased and
    non-diseased subgroups.
    """
    f = s.fraction_emergent
    mean_nonem = s.prevalence * s.read_time_diseased + (1.0 - s.prevalence) * s.read_time_nondiseased
    if s.read_time_diseased == s.read_time_nondiseased:
        mean_nonem = s.read_time_diseased
    return s.num_radiologists / (f * s.read_time_emergent + (1.0 - f) * mean_nonem)


def derive_rates(s: ClinicalScenario) -> DerivedRates:
    """Compute every arrival and service rate used by the models and simulator."""
    pi, se, sp = s.prevalence, s.sensitivity, s.specificity
    mu_em = 1.0 / s.read_time_emergent
    mu_d = 1.0 / s.read_time_diseased
    mu_nd = 1.0 / s.read_time_nondiseased
    mu_nonem = _harmonic(pi, mu_d, mu_nd)

    lam = s.traffic * effective_service_rate(s)
    lam_em = s.fraction_emergent * lam
    lam_nonem = (1.0 - s.fraction_emergent) * lam

    flags = set()
    tp, fp = pi * se, (1.0 - pi) * (1.0 - sp)
    fn, tn = pi * (1.0 - se), (1.0 - pi) * sp
    positive_fraction = tp + fp
    negative_fraction = fn + tn

    if positive_fraction > 0.0:
        ppv = tp / positive_fraction
        mu_plus = _harmonic(ppv, mu_d, mu_nd)
        lam_plus = positive_fraction * lam_nonem
    else:
        flags.add(NO_POSITIVE_CLASS)
        ppv, mu_plus, lam_plus = math.nan, mu_nonem, 0.0

    if negative_fraction > 0.0:
        npv = tn / negative_fraction
        mu_minus = _harmonic(1.0 - npv, mu_d, mu_nd)
        lam_minus = negative_fraction * lam_nonem
    else:
        flags.add(NO_NEGATIVE_CLASS)
        npv, mu_minus, lam_minus = math.nan, mu_nonem, 0.0

    return DerivedRates(
        lam=lam,
        lam_em=lam_em,
        lam_nonem=lam_nonem,
        lam_plus=lam_plus,
        lam_minus=lam_minus,
        mu_em=mu_em,
        mu_d=mu_d,
        mu_nd=mu_nd,
        mu_nonem=mu_nonem,
        mu_plus=mu_plus,
        mu_minus=mu_minus,
        ppv=ppv,
        npv=npv,
        prevalence=pi,
        sensitivity=se,
        specificity=sp,
        num_radiologists=s.num_radiologists,
        flags=frozenset(flags),
    )
