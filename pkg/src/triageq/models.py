"""Per-class mean waiting times for the four reading-workflow models.

========  ==============  ====================  ==========================
Model     radiologists    emergent images       reading rates
========  ==============  ====================  ==========================
A         1               none                  mu_D == mu_ND
B         1               yes                   mu_D == mu_ND
C         2               yes (or none)         mu_D == mu_ND
D         1               optional              mu_D != mu_ND
========  ==============  ====================  ==========================

Without the triage device non-emergent images share one FIFO queue behind
emergent images.  With it, non-emergent images split into an AI-positive
class, which is served ahead of an AI-negative class, and all priorities
are preemptive-resume.

The lowest class of every subsystem is analysed with a QBD whose levels
count its jobs; the higher-priority classes are collapsed into busy
periods fitted with Erlang-Coxian phases (:mod:`triageq.rdr`).  Each chain
template below lists its per-level state order in the docstring.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import qbd, rdr
from .errors import ModelNotCoveredError, UnstableSystemError
from .rdr import PhaseRepresentation
from .scenario import NO_NEGATIVE_CLASS, NO_POSITIVE_CLASS, ClinicalScenario, DerivedRates, derive_rates

#: Scenarios at or above this traffic intensity are rejected before solving.
MAX_TRAFFIC = 0.99
#: Reading-rate and emergent-fraction ties closer than this are dispatched exactly.
DISPATCH_TOL = 1e-12
#: Busy-period branches less likely than this are dropped from truncated chains.
BRANCH_MIN_PROB = 1e-12

EMPTY_PLUS = "empty-class:plus"
EMPTY_MINUS = "empty-class:minus"


class Model(str, enum.Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"


@dataclass
class ClassWaits:
    """Mean waits (minutes) of the non-emergent classes.

    ``W_nonEm`` is the without-device wait; ``W_plus``/``W_minus`` are the
    with-device waits of the AI-positive/AI-negative classes.  Entries a
    model function does not compute stay ``None``.
    """

    model: Model
    W_nonEm: float | None = None
    W_plus: float | None = None
    W_minus: float | None = None
    rates: dict = field(default_factory=dict)
    flags: set = field(default_factory=set)
    fits: dict = field(default_factory=dict)

    def merge(self, other: "ClassWaits") -> "ClassWaits":
        out = ClassWaits(self.model, self.W_nonEm, self.W_plus, self.W_minus)
        for attr in ("W_nonEm", "W_plus", "W_minus"):
            if getattr(other, attr) is not None:
                setattr(out, attr, getattr(other, attr))
        out.rates = {**self.rates, **other.rates}
        out.flags = self.flags | other.flags
        out.fits = {**self.fits, **other.fits}
        return out


# --------------------------------------------------------------------------
# Dispatch
# --------------------------------------------------------------------------


def _close(a, b):
    return math.isclose(a, b, rel_tol=DISPATCH_TOL, abs_tol=0.0)


def select_model(s: ClinicalScenario) -> Model:
    """Pick the workflow model that covers a scenario.

    Two radiologists always map to Model C (which also handles the case
    without emergent images); one radiologist maps to A, B or D.
    """
    same_rates = _close(s.read_time_diseased, s.read_time_nondiseased)
    no_emergent = s.fraction_emergent <= DISPATCH_TOL
    if s.num_radiologists == 2:
        if not same_rates:
            raise ModelNotCoveredError(
                "model-not-covered: two radiologists with different diseased/non-diseased "
                "reading times; nearest supported models are C (equal reading times) and "
                "D (one radiologist)"
            )
        return Model.C
    if not same_rates:
        return Model.D
    return Model.A if no_emergent else Model.B


# --------------------------------------------------------------------------
# Small helpers
# --------------------------------------------------------------------------


def mm1_wait(lam: float, mu: float) -> float:
    """M/M/1 FIFO mean time in queue."""
    if lam == 0.0:
        return 0.0
    if lam >= mu:
        raise UnstableSystemError(f"unstable system: lam={lam:.6g} >= mu={mu:.6g}")
    return lam / (mu * (mu - lam))


def mm2_wait(lam: float, mu: float) -> float:
    """M/M/2 FIFO mean time in queue (Erlang-C)."""
    if lam == 0.0:
        return 0.0
    rho = lam / (2.0 * mu)
    if rho >= 1.0:
        raise UnstableSystemError(f"unstable system: lam={lam:.6g} >= 2 mu={2 * mu:.6g}")
    prob_wait = 2.0 * rho * rho / (1.0 + rho)
    return prob_wait / (2.0 * mu - lam)


def _exponential(rate: float) -> PhaseRepresentation:
    return rdr.fit_ec(1.0 / rate, 2.0 / rate**2, 6.0 / rate**3).phase_representation()


def _mm1_busy_ph(lam, mu, fits=None, name=None) -> PhaseRepresentation:
    fit = rdr.fit_ec(*rdr.mm1_busy_moments(lam, mu))
    if fits is not None and name is not None:
        fits[name] = fit
    return fit.phase_representation()


def _solve_wait(chain: qbd.QbdChain, lam: float, inv_mu: float) -> float:
    sol = qbd.solve(chain)
    L = qbd.mean_level(sol)
    return qbd.waiting_time(L, lam, 1.0 / inv_mu)


class _Block:
    """Accumulates off-diagonal rates of one level's local block."""

    def __init__(self, size):
        self.Q = np.zeros((size, size))

    def add(self, i, j, rate):
        if i != j and rate != 0.0:
            self.Q[i, j] += rate

    def busy(self, source, offset, rate, ph: PhaseRepresentation, end):
        """Start a busy period from ``source`` with phases at ``offset``, finishing in ``end``."""
        self.enter(source, offset, rate, ph, end)
        self.phases(offset, ph, end)

    def enter(self, source, offset, rate, ph: PhaseRepresentation, end):
        """Entry transitions only, for a busy period shared by several sources."""
        for j in range(ph.size):
            self.add(source, offset + j, rate * ph.alpha[j])
        self.add(source, end, rate * ph.zero_mass)

    def phases(self, offset, ph: PhaseRepresentation, end):
        """Internal and exit transitions of a busy period; add once per phase block."""
        k = ph.size
        for j in range(k):
            self.add(offset + j, end, ph.exit[j])
            for jj in range(k):
                if jj != j:
                    self.add(offset + j, offset + jj, ph.T[j, jj])


# --------------------------------------------------------------------------
# Chain templates
# --------------------------------------------------------------------------


def priority_chain(lam_lo, mu_lo, entries) -> qbd.QbdChain:
    """Single-server chain for the lowest class behind collapsed higher classes.

    ``entries`` is a list of ``(rate, phase_rep)``: while no higher-priority
    job is present, a busy period of that type starts at ``rate``.  Level
    ``n`` (jobs of the low class) has states
    ``[idle-of-higher, busy 1 phases, busy 2 phases, ...]``; the low class
    is served only in the first state.
    """
    sizes = [ph.size for _, ph in entries]
    m = 1 + sum(sizes)
    local = _Block(m)
    offset = 1
    for rate, ph in entries:
        local.busy(0, offset, rate, ph, 0)
        offset += ph.size
    A0 = np.zeros((m, m))
    A0[0, 0] = mu_lo
    A2 = lam_lo * np.eye(m)
    return qbd.QbdChain.build(local.Q, A2, A0, A0, local.Q, A2, np.zeros(m), 1)


def two_server_chain(lam_hi, mu_hi, lam_lo, mu_lo, hi_busy: PhaseRepresentation) -> qbd.QbdChain:
    """Two-server chain for a low class behind one higher class.

    Level ``n`` has states ``[(0, n), (1, n), (2+, n) phases]`` where the
    first coordinate is the number of higher-priority jobs; with two or
    more present both servers are taken and the excess is collapsed into
    the busy period ``hi_busy`` (from two higher jobs down to one).  The
    boundary covers queue lengths 0 and 1 because one low job leaves at
    rate ``mu_lo`` whatever the number of free servers.
    """
    m = 2 + hi_busy.size
    local = _Block(m)
    local.add(0, 1, lam_hi)
    local.add(1, 0, mu_hi)
    local.busy(1, 2, lam_hi, hi_busy, 1)
    full = np.zeros(m)
    full[:2] = (2.0 * mu_lo, mu_lo)
    single = np.zeros(m)
    single[:2] = (mu_lo, mu_lo)
    return _two_level_boundary(local.Q, full, single, lam_lo)


def _two_level_boundary(local, full_down, single_down, lam) -> qbd.QbdChain:
    """QBD whose boundary holds levels 0 and 1 of a two-server template."""
    m = local.shape[0]
    eye = np.eye(m)
    zero = np.zeros((m, m))
    B00 = np.block([[local, lam * eye], [np.diag(single_down), local]])
    B01 = np.vstack([zero, lam * eye])
    B10 = np.hstack([zero, np.diag(full_down)])
    counts = np.concatenate([np.zeros(m), np.ones(m)])
    return qbd.QbdChain.build(B00, B01, B10, np.diag(full_down), local, lam * eye, counts, 2)


def two_server_three_class_chain(r: DerivedRates, busy: dict) -> qbd.QbdChain:
    """Two-server chain for the AI-negative class behind emergent and AI-positive images.

    Level ``n`` holds ``[(0,0), (0,1), (1,0), B1..B6 phases]`` where
    ``(e, p)`` counts emergent and AI-positive jobs.  ``busy`` maps
    ``1..6`` to ``(probability, phase_rep)``; busy periods 1/2 start from
    ``(0,2)``, 3/4 from ``(1,1)`` and 5/6 from ``(2,0)``, and odd ones end
    in ``(0,1)`` while even ones end in ``(1,0)``.
    """
    lam_em, lam_p = r.lam_em, r.lam_plus
    order = [i for i in range(1, 7) if i in busy]
    offsets, offset = {}, 3
    for i in order:
        offsets[i] = offset
        offset += busy[i][1].size
    m = offset
    local = _Block(m)
    local.add(0, 1, lam_p)
    local.add(0, 2, lam_em)
    local.add(1, 0, r.mu_plus)
    local.add(2, 0, r.mu_em)
    # (source state, arrival rate, busy periods entered from the shared start state)
    starts = [(1, lam_p, (1, 2)), (1, lam_em, (3, 4)), (2, lam_p, (3, 4)), (2, lam_em, (5, 6))]
    for source, rate, pair in starts:
        for i in pair:
            if i in busy:
                prob, ph = busy[i]
                local.enter(source, offsets[i], rate * prob, ph, 1 if i % 2 else 2)
    for i in order:
        local.phases(offsets[i], busy[i][1], 1 if i % 2 else 2)
    full = np.zeros(m)
    full[:3] = (2.0 * r.mu_minus, r.mu_minus, r.mu_minus)
    single = np.zeros(m)
    single[:3] = r.mu_minus
    return _two_level_boundary(local.Q, full, single, r.lam_minus)


def disease_chain(lam_lo, p_diseased, mu_d, mu_nd, entries) -> qbd.QbdChain:
    """Single-server chain tracking the disease status of the low-class job in service.

    ``p_diseased`` is the probability that a low-class image is diseased
    (prevalence, PPV or 1 - NPV).  Levels ``n >= 1`` hold
    ``[D, ND, busy 1 -> D phases, busy 1 -> ND phases, busy 2 -> D, ...]``:
    the label is the status of the low job that resumes when the busy
    period ends.  The boundary level 0 holds ``[idle, busy 1 phases, ...]``.
    """
    sizes = [ph.size for _, ph in entries]
    m = 2 + 2 * sum(sizes)
    b = 1 + sum(sizes)
    local = _Block(m)
    boundary = _Block(b)
    B01 = np.zeros((b, m))
    off_m, off_b = 2, 1
    for rate, ph in entries:
        k = ph.size
        local.busy(0, off_m, rate, ph, 0)
        local.busy(1, off_m + k, rate, ph, 1)
        boundary.busy(0, off_b, rate, ph, 0)
        for j in range(k):
            B01[off_b + j, off_m + j] = p_diseased * lam_lo
            B01[off_b + j, off_m + k + j] = (1.0 - p_diseased) * lam_lo
        off_m += 2 * k
        off_b += k
    B01[0, 0] = p_diseased * lam_lo
    B01[0, 1] = (1.0 - p_diseased) * lam_lo
    A0 = np.zeros((m, m))
    A0[0, :2] = (p_diseased * mu_d, (1.0 - p_diseased) * mu_d)
    A0[1, :2] = (p_diseased * mu_nd, (1.0 - p_diseased) * mu_nd)
    B10 = np.zeros((m, b))
    B10[0, 0] = mu_d
    B10[1, 0] = mu_nd
    return qbd.QbdChain.build(boundary.Q, B01, B10, A0, local.Q, lam_lo * np.eye(m), np.zeros(b), 1)


# --------------------------------------------------------------------------
# Level processes of the higher-priority subsystems
# --------------------------------------------------------------------------


def _phase_labels(tag, ph):
    return [f"{tag}ph{j + 1}" for j in range(ph.size)]


def level_process_b(lam_em, em_busy: PhaseRepresentation, lam_p, mu_p) -> rdr.LevelProcess:
    """Emergent + AI-positive single-server subsystem.

    Level 1 is ``(0,0)``; level ``l >= 2`` holds ``[(0, l-1), (1+, l-2) phases]``
    where ``(1+, j)`` means an emergent busy period in progress with ``j``
    AI-positive jobs waiting.
    """
    k = em_busy.size
    m = 1 + k

    def level(n, prev, first):
        down = np.zeros((m, 1 if first else m))
        down[0, 0] = mu_p
        down[1:, 0] = em_busy.exit
        local = np.zeros((m, m))
        local[1:, 1:] = em_busy.T - np.diag(np.diag(em_busy.T))
        up = np.zeros((m, m))
        up[0, 0] = lam_p
        up[0, 1:] = lam_em * em_busy.alpha
        up[1:, 1:] = lam_p * np.eye(k)
        labels = [f"(0,{n})"] + _phase_labels(f"(1+,{prev})", em_busy)
        return dict(labels=labels, down=down, local=local, up=up)

    first_up = np.zeros((1, m))
    first_up[0, 0] = lam_p
    first_up[0, 1:] = lam_em * em_busy.alpha
    levels = [dict(labels=["(0,0)"], down=None, local=np.zeros((1, 1)), up=first_up), level(1, 0, True), level("n", "n-1", False)]
    return rdr.LevelProcess.from_rates(levels)


def level_process_c(lam_em, mu_em, em_busy2: PhaseRepresentation, lam_p, mu_p) -> rdr.LevelProcess:
    """Emergent + AI-positive two-server subsystem.

    Levels count ``n_p + min(n_em, 2)``: level 1 ``(0,0)``, level 2
    ``[(0,1), (1,0)]``, level ``l >= 3``
    ``[(0, l-1), (1, l-2), (2+, l-3) phases]``.
    """
    k = em_busy2.size
    m = 2 + k
    l1 = dict(labels=["(0,0)"], down=None, local=np.zeros((1, 1)), up=np.array([[lam_p, lam_em]]))
    up2 = np.zeros((2, m))
    up2[0, 0] = lam_p
    up2[0, 1] = lam_em
    up2[1, 1] = lam_p
    up2[1, 2:] = lam_em * em_busy2.alpha
    l2 = dict(labels=["(0,1)", "(1,0)"], down=np.array([[mu_p], [mu_em]]), local=np.zeros((2, 2)), up=up2)

    def level(tag, first):
        down = np.zeros((m, 2 if first else m))
        down[0, 0] = 2.0 * mu_p
        down[1, 0] = mu_em
        down[1, 1] = mu_p
        down[2:, 1] = em_busy2.exit
        local = np.zeros((m, m))
        local[2:, 2:] = em_busy2.T - np.diag(np.diag(em_busy2.T))
        up = np.zeros((m, m))
        up[0, 0] = lam_p
        up[0, 1] = lam_em
        up[1, 1] = lam_p
        up[1, 2:] = lam_em * em_busy2.alpha
        up[2:, 2:] = lam_p * np.eye(k)
        labels = [f"(0,{tag[0]})", f"(1,{tag[1]})"] + _phase_labels(f"(2+,{tag[2]})", em_busy2)
        return dict(labels=labels, down=down, local=local, up=up)

    return rdr.LevelProcess.from_rates([l1, l2, level((2, 1, 0), True), level(("n", "n-1", "n-2"), False)])


def level_process_d(lam_em, em_busy: PhaseRepresentation, lam_p, ppv, mu_d, mu_nd) -> rdr.LevelProcess:
    """Emergent + AI-positive single-server subsystem with disease tracking.

    Level 1 is ``(0,0)``; level 2 holds ``[(0,1,D), (0,1,ND), (1+,0) phases]``;
    level ``l >= 3`` holds ``[(0,l-1,D), (0,l-1,ND), (1+,l-2)->D phases,
    (1+,l-2)->ND phases]`` where D/ND is the status of the AI-positive job
    that resumes after the emergent busy period.
    """
    k = em_busy.size
    T_off = em_busy.T - np.diag(np.diag(em_busy.T))
    a = ppv
    first_up = np.zeros((1, 2 + k))
    first_up[0, 0] = a * lam_p
    first_up[0, 1] = (1.0 - a) * lam_p
    first_up[0, 2:] = lam_em * em_busy.alpha
    l1 = dict(labels=["(0,0)"], down=None, local=np.zeros((1, 1)), up=first_up)

    m = 2 + 2 * k
    down2 = np.zeros((2 + k, 1))
    down2[0, 0] = mu_d
    down2[1, 0] = mu_nd
    down2[2:, 0] = em_busy.exit
    local2 = np.zeros((2 + k, 2 + k))
    local2[2:, 2:] = T_off
    up2 = np.zeros((2 + k, m))
    up2[0, 0] = lam_p
    up2[1, 1] = lam_p
    up2[0, 2 : 2 + k] = lam_em * em_busy.alpha
    up2[1, 2 + k :] = lam_em * em_busy.alpha
    up2[2:, 2 : 2 + k] = a * lam_p * np.eye(k)
    up2[2:, 2 + k :] = (1.0 - a) * lam_p * np.eye(k)
    l2 = dict(
        labels=["(0,1,D)", "(0,1,ND)"] + _phase_labels("(1+,0)", em_busy), down=down2, local=local2, up=up2
    )

    def level(n, first):
        down = np.zeros((m, 2 + k if first else m))
        down[0, :2] = (a * mu_d, (1.0 - a) * mu_d)
        down[1, :2] = (a * mu_nd, (1.0 - a) * mu_nd)
        down[2 : 2 + k, 0] = em_busy.exit
        down[2 + k :, 1] = em_busy.exit
        local = np.zeros((m, m))
        local[2 : 2 + k, 2 : 2 + k] = T_off
        local[2 + k :, 2 + k :] = T_off
        up = np.zeros((m, m))
        up[0, 0] = lam_p
        up[1, 1] = lam_p
        up[0, 2 : 2 + k] = lam_em * em_busy.alpha
        up[1, 2 + k :] = lam_em * em_busy.alpha
        up[2:, 2:] = lam_p * np.eye(2 * k)
        labels = [f"(0,{n},D)", f"(0,{n},ND)"]
        labels += _phase_labels(f"(1+,{n}-1)->D", em_busy) + _phase_labels(f"(1+,{n}-1)->ND", em_busy)
        return dict(labels=labels, down=down, local=local, up=up)

    return rdr.LevelProcess.from_rates([l1, l2, level(2, True), level("n", False)])


# --------------------------------------------------------------------------
# Busy periods
# --------------------------------------------------------------------------


def _branches(bp: rdr.BusyPeriod, fits: dict, name: str):
    """Fitted phase representation of every sufficiently likely end state of ``bp``."""
    out = {}
    for end, prob in bp.end_probs.items():
        if prob < BRANCH_MIN_PROB:
            continue
        fit = rdr.fit_ec(*bp.conditional_moments[end])
        fits[f"{name}->{end}"] = fit
        out[end] = (prob, fit.phase_representation())
    return out


def busy_periods_b(r: DerivedRates, fits=None):
    """Busy periods B1 (starting with an AI-positive job) and B2 (emergent)."""
    fits = {} if fits is None else fits
    em = _mm1_busy_ph(r.lam_em, r.mu_em, fits, "emergent")
    lp = level_process_b(r.lam_em, em, r.lam_plus, r.mu_plus)
    b1, b2 = rdr.passage_analysis(lp, ["(0,1)", "(1+,0)ph1"], min_prob=0.0)
    return b1, b2


def busy_periods_c(r: DerivedRates, fits=None):
    """Six busy periods of the two-server emergent + AI-positive subsystem.

    Returns ``{i: BusyPeriod-branch}`` as ``(probability, conditional moments)``
    keyed ``1..6``; odd periods end in ``(0,1)`` and even ones in ``(1,0)``.
    """
    fits = {} if fits is None else fits
    em2 = _mm1_busy_ph(r.lam_em, 2.0 * r.mu_em, fits, "emergent-two-server")
    lp = level_process_c(r.lam_em, r.mu_em, em2, r.lam_plus, r.mu_plus)
    starts = ["(0,2)", "(1,1)", "(2+,0)ph1"]
    bps = rdr.passage_analysis(lp, starts, min_prob=0.0)
    out = {}
    for k, bp in enumerate(bps):
        for parity, end in ((1, "(0,1)"), (0, "(1,0)")):
            i = 2 * k + 2 - parity
            out[i] = (bp.end_probs[end], bp.conditional_moments.get(end))
    return out


def busy_periods_d(r: DerivedRates, fits=None):
    """Busy periods B1 (emergent start), B2 (diseased AI-positive) and B3 (non-diseased AI-positive)."""
    fits = {} if fits is None else fits
    em = _exponential(r.mu_em) if _no_emergent(r) else _mm1_busy_ph(r.lam_em, r.mu_em, fits, "emergent")
    lp = level_process_d(r.lam_em, em, r.lam_plus, r.ppv, r.mu_d, r.mu_nd)
    return rdr.passage_analysis(lp, ["(1+,0)ph1", "(0,1,D)", "(0,1,ND)"], min_prob=0.0)


# --------------------------------------------------------------------------
# Model evaluations
# --------------------------------------------------------------------------


def _no_emergent(r: DerivedRates) -> bool:
    return r.lam_em <= DISPATCH_TOL * r.lam


def _rates(r: DerivedRates, *names):
    return {n: getattr(r, n) for n in names}


def _empty_class_waits(model, r: DerivedRates, W_nonEm_without: float):
    """With-device waits when every non-emergent image lands in a single AI class."""
    out = ClassWaits(model, rates=_rates(r, "lam_plus", "lam_minus", "mu_plus", "mu_minus"))
    if NO_POSITIVE_CLASS in r.flags:
        out.W_plus, out.W_minus = 0.0, W_nonEm_without
        out.flags.add(EMPTY_PLUS)
    else:
        out.W_plus, out.W_minus = W_nonEm_without, 0.0
        out.flags.add(EMPTY_MINUS)
    return out


def _has_empty_class(r: DerivedRates):
    return NO_POSITIVE_CLASS in r.flags or NO_NEGATIVE_CLASS in r.flags


def model_a_without(r: DerivedRates) -> ClassWaits:
    """Single FIFO queue of non-emergent images (M/M/1)."""
    w = mm1_wait(r.lam_nonem, r.mu_nonem)
    return ClassWaits(Model.A, W_nonEm=w, rates=_rates(r, "lam_nonem", "mu_nonem"))


def model_a_with(r: DerivedRates) -> ClassWaits:
    """AI-positive images preempt AI-negative ones on a single radiologist."""
    if _has_empty_class(r):
        return _empty_class_waits(Model.A, r, model_a_without(r).W_nonEm)
    out = ClassWaits(Model.A, rates=_rates(r, "lam_plus", "lam_minus", "mu_plus", "mu_minus"))
    out.W_plus = mm1_wait(r.lam_plus, r.mu_plus)
    busy = _mm1_busy_ph(r.lam_plus, r.mu_plus, out.fits, "plus")
    chain = priority_chain(r.lam_minus, r.mu_minus, [(r.lam_plus, busy)])
    out.W_minus = _solve_wait(chain, r.lam_minus, 1.0 / r.mu_minus)
    return out


def model_b_without(r: DerivedRates) -> ClassWaits:
    """Non-emergent images behind preemptive emergent images, one radiologist."""
    out = ClassWaits(Model.B, rates=_rates(r, "lam_em", "mu_em", "lam_nonem", "mu_nonem"))
    em = _mm1_busy_ph(r.lam_em, r.mu_em, out.fits, "emergent")
    chain = priority_chain(r.lam_nonem, r.mu_nonem, [(r.lam_em, em)])
    out.W_nonEm = _solve_wait(chain, r.lam_nonem, 1.0 / r.mu_nonem)
    return out


def model_b_with(r: DerivedRates) -> ClassWaits:
    """Three preemptive classes (emergent, AI-positive, AI-negative), one radiologist."""
    if _has_empty_class(r):
        return _empty_class_waits(Model.B, r, model_b_without(r).W_nonEm)
    out = ClassWaits(Model.B, rates=_rates(r, "lam_em", "mu_em", "lam_plus", "lam_minus", "mu_plus", "mu_minus"))
    em = _mm1_busy_ph(r.lam_em, r.mu_em, out.fits, "emergent")
    plus_chain = priority_chain(r.lam_plus, r.mu_plus, [(r.lam_em, em)])
    out.W_plus = _solve_wait(plus_chain, r.lam_plus, 1.0 / r.mu_plus)
    b1, b2 = busy_periods_b(r, out.fits)
    entries = []
    for rate, bp, name in ((r.lam_plus, b1, "B1"), (r.lam_em, b2, "B2")):
        fit = rdr.fit_ec(*bp.moments)
        out.fits[name] = fit
        entries.append((rate, fit.phase_representation()))
    chain = priority_chain(r.lam_minus, r.mu_minus, entries)
    out.W_minus = _solve_wait(chain, r.lam_minus, 1.0 / r.mu_minus)
    return out


def model_c_without(r: DerivedRates) -> ClassWaits:
    """Non-emergent images behind emergent images, two radiologists."""
    out = ClassWaits(Model.C, rates=_rates(r, "lam_em", "mu_em", "lam_nonem", "mu_nonem"))
    if _no_emergent(r):
        out.W_nonEm = mm2_wait(r.lam_nonem, r.mu_nonem)
        return out
    em2 = _mm1_busy_ph(r.lam_em, 2.0 * r.mu_em, out.fits, "emergent-two-server")
    chain = two_server_chain(r.lam_em, r.mu_em, r.lam_nonem, r.mu_nonem, em2)
    out.W_nonEm = _solve_wait(chain, r.lam_nonem, 1.0 / r.mu_nonem)
    return out


def model_c_with(r: DerivedRates) -> ClassWaits:
    """Emergent, AI-positive and AI-negative classes on two radiologists."""
    if _has_empty_class(r):
        return _empty_class_waits(Model.C, r, model_c_without(r).W_nonEm)
    out = ClassWaits(Model.C, rates=_rates(r, "lam_em", "mu_em", "lam_plus", "lam_minus", "mu_plus", "mu_minus"))
    if _no_emergent(r):
        # Two classes only: AI-positive plays the role of the higher class.
        out.W_plus = mm2_wait(r.lam_plus, r.mu_plus)
        busy = _mm1_busy_ph(r.lam_plus, 2.0 * r.mu_plus, out.fits, "plus-two-server")
        chain = two_server_chain(r.lam_plus, r.mu_plus, r.lam_minus, r.mu_minus, busy)
        out.W_minus = _solve_wait(chain, r.lam_minus, 1.0 / r.mu_minus)
        return out
    em2 = _mm1_busy_ph(r.lam_em, 2.0 * r.mu_em, out.fits, "emergent-two-server")
    plus_chain = two_server_chain(r.lam_em, r.mu_em, r.lam_plus, r.mu_plus, em2)
    out.W_plus = _solve_wait(plus_chain, r.lam_plus, 1.0 / r.mu_plus)
    busy = {}
    for i, (prob, moments) in busy_periods_c(r, out.fits).items():
        if prob < BRANCH_MIN_PROB:
            continue
        fit = rdr.fit_ec(*moments)
        out.fits[f"B{i}"] = fit
        busy[i] = (prob, fit.phase_representation())
    chain = two_server_three_class_chain(r, busy)
    out.W_minus = _solve_wait(chain, r.lam_minus, 1.0 / r.mu_minus)
    return out


def model_d_without(r: DerivedRates) -> ClassWaits:
    """Non-emergent images with disease-dependent reading rates, one radiologist."""
    out = ClassWaits(Model.D, rates=_rates(r, "lam_em", "mu_em", "lam_nonem", "mu_d", "mu_nd", "mu_nonem"))
    entries = []
    if not _no_emergent(r):
        entries.append((r.lam_em, _mm1_busy_ph(r.lam_em, r.mu_em, out.fits, "emergent")))
    chain = _disease_or_plain(r.lam_nonem, r.prevalence, r.mu_d, r.mu_nd, entries)
    out.W_nonEm = _solve_wait(chain, r.lam_nonem, 1.0 / r.mu_nonem)
    return out


def _disease_or_plain(lam_lo, p_d, mu_d, mu_nd, entries):
    if not entries:
        # Keep the block layout uniform: a busy period that is never started.
        entries = [(0.0, _exponential(1.0))]
    return disease_chain(lam_lo, p_d, mu_d, mu_nd, entries)


def model_d_with(r: DerivedRates) -> ClassWaits:
    """Three preemptive classes with disease-dependent reading rates, one radiologist."""
    if _has_empty_class(r):
        return _empty_class_waits(Model.D, r, model_d_without(r).W_nonEm)
    out = ClassWaits(
        Model.D, rates=_rates(r, "lam_em", "mu_em", "lam_plus", "lam_minus", "mu_d", "mu_nd", "mu_plus", "mu_minus")
    )
    entries = []
    if not _no_emergent(r):
        entries.append((r.lam_em, _mm1_busy_ph(r.lam_em, r.mu_em, out.fits, "emergent")))
    plus_chain = _disease_or_plain(r.lam_plus, r.ppv, r.mu_d, r.mu_nd, entries)
    out.W_plus = _solve_wait(plus_chain, r.lam_plus, 1.0 / r.mu_plus)

    b1, b2, b3 = busy_periods_d(r, out.fits)
    entries = []
    for rate, bp, name in (
        (r.lam_em, b1, "B1"),
        (r.ppv * r.lam_plus, b2, "B2"),
        ((1.0 - r.ppv) * r.lam_plus, b3, "B3"),
    ):
        if rate <= 0.0:
            continue
        fit = rdr.fit_ec(*bp.moments)
        out.fits[name] = fit
        entries.append((rate, fit.phase_representation()))
    chain = disease_chain(r.lam_minus, 1.0 - r.npv, r.mu_d, r.mu_nd, entries)
    out.W_minus = _solve_wait(chain, r.lam_minus, 1.0 / r.mu_minus)
    return out


_DISPATCH = {
    Model.A: (model_a_without, model_a_with),
    Model.B: (model_b_without, model_b_with),
    Model.C: (model_c_without, model_c_with),
    Model.D: (model_d_without, model_d_with),
}


def evaluate(s: ClinicalScenario, model: Model | None = None) -> ClassWaits:
    """Without- and with-device waits of a scenario, dispatched to its model."""
    if s.traffic >= MAX_TRAFFIC:
        raise UnstableSystemError(f"unstable system: traffic {s.traffic} is at or above {MAX_TRAFFIC}")
    model = select_model(s) if model is None else Model(model)
    r = derive_rates(s)
    if model in (Model.A, Model.B) and not r.same_reading_rates:
        raise ModelNotCoveredError("model-not-covered: Models A and B need equal reading times; use D")
    if model is Model.A and r.lam_em > 0.0:
        raise ModelNotCoveredError("model-not-covered: Model A has no emergent images; use B")
    without, with_ = _DISPATCH[model]
    if model is Model.B and _no_emergent(r):
        without, with_ = _DISPATCH[Model.A]
    result = without(r).merge(with_(r))
    result.model = model
    return result
