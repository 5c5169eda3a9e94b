"""Busy-period passage analysis and Erlang-Coxian moment matching.

Recursive dimensionality reduction replaces the unbounded occupancy of the
higher-priority classes by a handful of "busy period" phases.  This module
provides the two ingredients:

* :func:`passage_analysis` computes, for a level-structured jump chain of
  the higher-priority system, the probability of each end state of a
  one-level-down passage and the first three passage-time moments.
* :func:`fit_ec` maps three moments onto an Erlang-Coxian (EC) phase-type
  distribution using the closed-form quasi-minimal mapping of Osogami and
  Harchol-Balter (2006).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import AbsorbingStructureError, ConvergenceError, MomentInfeasibleError, UnstableSystemError

G_TOL = 1e-13
G_MAX_ITER = 1_000_000
#: End states whose probability falls below this are treated as unreachable.
MIN_END_PROB = 1e-14


# --------------------------------------------------------------------------
# Moment matching
# --------------------------------------------------------------------------


def mm1_busy_moments(lam: float, mu: float):
    """First three moments of the M/M/1 busy period.

    Returns ``(E[B], E[B^2], E[B^3])`` for arrival rate ``lam`` and service
    rate ``mu``; with ``lam == 0`` this is simply an exponential service.
    """
    if mu <= 0 or lam < 0 or lam >= mu:
        raise UnstableSystemError(f"unstable system: busy period needs lam < mu (lam={lam}, mu={mu})")
    rho = lam / mu
    m1 = 1.0 / (mu - lam)
    m2 = 2.0 / (mu**2 * (1.0 - rho) ** 3)
    m3 = 6.0 * (1.0 + rho) / (mu**3 * (1.0 - rho) ** 5)
    return m1, m2, m3


def normalized_moments(m1, m2, m3):
    """Normalized moments ``(m2 / m1^2, m3 / (m1 m2))`` used by the EC mapping."""
    return m2 / m1**2, m3 / (m1 * m2)


def check_feasible(m1, m2, m3):
    """Raise :class:`MomentInfeasibleError` unless the triple is a valid moment sequence.

    A nonnegative, non-degenerate random variable has ``m2 > m1^2`` and
    ``m3 > m2^2 / m1``, i.e. normalized moments ``n2 > 1`` and ``n3 > n2``.
    """
    values = (m1, m2, m3)
    if not all(math.isfinite(v) for v in values) or m1 <= 0:
        raise MomentInfeasibleError(f"moment-infeasible: {values}")
    n2, n3 = normalized_moments(m1, m2, m3)
    if not (n2 > 1.0 and n3 > n2):
        raise MomentInfeasibleError(
            f"moment-infeasible: normalized moments ({n2:.6g}, {n3:.6g}) need n2 > 1 and n3 > n2"
        )


@dataclass(frozen=True)
class PhaseRepresentation:
    """Phase-type distribution ``(alpha, T)`` with exit-rate vector ``exit``.

    ``alpha`` may sum to less than one; the remaining mass is an atom at
    zero.
    """

    alpha: np.ndarray
    T: np.ndarray
    exit: np.ndarray

    @property
    def size(self) -> int:
        return len(self.alpha)

    @property
    def zero_mass(self) -> float:
        return max(0.0, 1.0 - float(self.alpha.sum()))

    def moments(self, k: int = 3):
        """Raw moments ``E[X^r] = r! alpha (-T)^{-r} 1`` for r = 1..k."""
        U = np.linalg.inv(-self.T)
        v = np.ones(self.size)
        out = []
        for r in range(1, k + 1):
            v = U @ v
            out.append(math.factorial(r) * float(self.alpha @ v))
        return tuple(out)


@dataclass(frozen=True)
class EcFit:
    """Erlang-Coxian distribution matching three moments.

    With probability ``p_ec`` the variable is an Erlang with ``n_ec - 2``
    phases of rate ``lam_y`` followed by a two-phase Coxian (rates
    ``lam_x1``, ``lam_x2``, continuation probability ``p_x``); otherwise it
    is zero.  ``n_ec == 2`` means a pure two-phase Coxian.
    """

    p_ec: float
    n_ec: int
    lam_y: float
    p_x: float
    lam_x1: float
    lam_x2: float
    target: tuple = field(default=(), compare=False)

    @property
    def t_params(self) -> dict:
        """Transition rates of the fitted phases as used inside truncated chains.

        ``t1``: leave phase X1 and finish; ``t12``: move X1 -> X2; ``t2``:
        finish from X2.  When an Erlang phase is present, ``t01`` moves it
        into X1 and ``t0 = (1 - p_ec) lam_y``.
        """
        t = {
            "t1": (1.0 - self.p_x) * self.lam_x1,
            "t12": self.p_x * self.lam_x1,
            "t2": self.lam_x2,
        }
        if self.n_ec >= 3:
            t["t0"] = (1.0 - self.p_ec) * self.lam_y
            t["t01"] = self.p_ec * self.lam_y
        return t

    def phase_representation(self) -> PhaseRepresentation:
        """Phase-type form; Erlang phases first, then X1 and X2."""
        n_y = self.n_ec - 2
        size = n_y + 2
        T = np.zeros((size, size))
        for k in range(n_y):
            T[k, k] = -self.lam_y
            T[k, k + 1] = self.lam_y
        x1, x2 = n_y, n_y + 1
        T[x1, x1] = -self.lam_x1
        T[x1, x2] = self.p_x * self.lam_x1
        T[x2, x2] = -self.lam_x2
        exit_rates = -T.sum(axis=1)
        exit_rates[np.abs(exit_rates) < 1e-300] = 0.0
        alpha = np.zeros(size)
        alpha[0] = self.p_ec
        return PhaseRepresentation(alpha, T, np.maximum(exit_rates, 0.0))


def _coxian2(m1, n2, n3):
    """Two-phase Coxian rates matching mean ``m1`` and normalized moments ``n2``, ``n3``.

    The rates are ``r_+ / m1`` and ``r_- / m1`` where ``r_±`` are the roots of
    ``r^2 - u r + v = 0``.  Near an exponential (``n2 -> 2``) both ``v`` and
    ``r_+ - 1`` vanish, so they are evaluated from ``d = n2 - 2`` directly
    to avoid cancellation.
    """
    d = n2 - 2.0
    denom = 3.0 * n2 - 2.0 * n3
    u = (6.0 - 2.0 * n3) / denom
    v = -6.0 * d / (n2 * denom)
    disc = u * u - 4.0 * v
    if disc < 0.0:
        if disc < -1e-10 * u * u:
            raise MomentInfeasibleError(
                f"moment-infeasible: no two-phase Coxian for normalized moments ({n2:.6g}, {n3:.6g})"
            )
        disc = 0.0
    root = math.sqrt(disc)
    r_plus = 0.5 * (u + root)
    r_minus = v / r_plus
    if r_minus < 0.5:
        # r_± - 1 are the roots of y^2 + (2 - u) y + 3 d^2 / (n2 denom) = 0,
        # so r_+ - 1 follows from the product of roots without cancellation.
        r_plus_minus_1 = 3.0 * d * d / (n2 * denom * (r_minus - 1.0))
    else:
        u_minus_1 = -3.0 * d / denom
        root_minus_1 = (u_minus_1 * (u + 1.0) - 4.0 * v) / (root + 1.0)
        r_plus_minus_1 = 0.5 * (u_minus_1 + root_minus_1)
    lam_x1 = r_plus / m1
    lam_x2 = r_minus / m1
    p_x = r_minus * r_plus_minus_1 / r_plus
    return lam_x1, lam_x2, p_x


def _is_exponential(n2, n3, tol=1e-12):
    return abs(n2 - 2.0) <= tol * 2.0 and abs(n3 - 3.0) <= tol * 3.0


def fit_ec(m1: float, m2: float, m3: float) -> EcFit:
    """Fit an Erlang-Coxian distribution to the raw moments ``m1, m2, m3``.

    A pure two-phase Coxian is used when the normalized moments lie in the
    region ``n2 > 2, n3 > 2 n2 - 1``; otherwise Erlang phases (and, below
    the line ``n3 = 2 n2 - 1``, an atom at zero) are prepended following
    the quasi-minimal closed form.  An exact exponential is returned as a
    Coxian whose second phase is never entered.
    """
    check_feasible(m1, m2, m3)
    target = (m1, m2, m3)
    n2, n3 = normalized_moments(m1, m2, m3)

    if _is_exponential(n2, n3):
        rate = 1.0 / m1
        # The unused second phase gets the same rate so it stays transient.
        return EcFit(1.0, 2, 0.0, 0.0, rate, rate, target)

    if n2 > 2.0 and n3 > 2.0 * n2 - 1.0:
        lam_x1, lam_x2, p_x = _coxian2(m1, n2, n3)
        return _checked(EcFit(1.0, 2, 0.0, p_x, lam_x1, lam_x2, target))

    p = 1.0 if n3 >= 2.0 * n2 - 1.0 else 1.0 / (2.0 * n2 - n3)
    w1, w2, w3 = m1 / p, p * n2, p * n3
    k = w2 / (w2 - 1.0)
    n = math.floor(k + 1.0)
    if abs(k - round(k)) <= 1e-9 * k:
        # Erlang-like variability: one choice of phase count leaves the Coxian
        # tail with zero mean, the other puts it exactly at n2 = 2.
        raise MomentInfeasibleError(
            f"moment-infeasible: normalized moments ({n2:.6g}, {n3:.6g}) sit on a phase-count "
            "boundary of the closed-form mapping"
        )
    x2 = ((n - 3) * w2 - (n - 2)) / ((n - 2) * w2 - (n - 1))
    x1_mean = w1 / ((n - 2) * x2 - (n - 3))
    alpha = (n - 2) * (x2 - 1) * (n * (n - 1) * x2**2 - n * (2 * n - 5) * x2 + (n - 1) * (n - 3))
    beta = ((n - 1) * x2 - (n - 2)) * ((n - 2) * x2 - (n - 3)) ** 2
    x3 = (beta * w3 - alpha) / x2
    if _is_exponential(x2, x3):
        lam_x1 = lam_x2 = 1.0 / x1_mean
        p_x = 0.0
    else:
        lam_x1, lam_x2, p_x = _coxian2(x1_mean, x2, x3)
    lam_y = 1.0 / (x1_mean * (x2 - 1.0))
    return _checked(EcFit(p, int(n), lam_y, p_x, lam_x1, lam_x2, target))


def _checked(fit: EcFit) -> EcFit:
    rates = [fit.lam_x1, fit.lam_x2] + ([fit.lam_y] if fit.n_ec > 2 else [])
    probs = [fit.p_ec, fit.p_x]
    if not all(math.isfinite(r) and r > 0 for r in rates) or not all(-1e-12 <= q <= 1 + 1e-12 for q in probs):
        raise MomentInfeasibleError(f"moment-infeasible: fit produced invalid parameters {fit}")
    return EcFit(
        min(max(fit.p_ec, 0.0), 1.0), fit.n_ec, fit.lam_y, min(max(fit.p_x, 0.0), 1.0),
        fit.lam_x1, fit.lam_x2, fit.target,
    )


def coxian_moments(fit: EcFit):
    """First three raw moments of the distribution encoded by ``fit``.

    The Erlang prefix and the Coxian tail are independent, so the raw
    moments of their sum follow from the binomial expansion; the atom at
    zero scales everything by ``p_ec``.
    """
    k, ly = fit.n_ec - 2, fit.lam_y
    erlang = [1.0, 0.0, 0.0, 0.0]
    if k > 0:
        erlang = [1.0, k / ly, k * (k + 1) / ly**2, k * (k + 1) * (k + 2) / ly**3]
    a, b, px = 1.0 / fit.lam_x1, 1.0 / fit.lam_x2, fit.p_x
    cox = [
        1.0,
        a + px * b,
        2.0 * a * a + px * 2.0 * (a * b + b * b),
        6.0 * a**3 + px * 6.0 * (a * a * b + a * b * b + b**3),
    ]
    out = []
    for r in (1, 2, 3):
        total = sum(math.comb(r, j) * erlang[j] * cox[r - j] for j in range(r + 1))
        out.append(fit.p_ec * total)
    return tuple(out)


def busy_period_representation(m1, m2, m3) -> PhaseRepresentation:
    """Fit a busy period and return it directly in phase-type form."""
    return fit_ec(m1, m2, m3).phase_representation()


# --------------------------------------------------------------------------
# Passage-time analysis on level-structured jump chains
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Level:
    """Embedded-chain blocks of one level: probabilities to move down, stay or move up."""

    labels: tuple
    down: np.ndarray | None
    local: np.ndarray
    up: np.ndarray
    rates: np.ndarray


@dataclass(frozen=True)
class LevelProcess:
    """Level-structured continuous-time chain of a higher-priority subsystem.

    ``levels[k]`` describes level ``k + 1``.  The last entry is the
    repeating level: its blocks are used for every level at or above
    ``repeat_level``.
    """

    levels: tuple

    @property
    def repeat_level(self) -> int:
        return len(self.levels)

    def level(self, ell: int) -> Level:
        return self.levels[min(ell, self.repeat_level) - 1]

    @classmethod
    def from_rates(cls, levels: Sequence[dict]) -> "LevelProcess":
        """Build from rate matrices.

        Each entry is a dict with ``labels`` and rate matrices ``down``
        (``None`` for level 1), ``local`` and ``up``.  Rates are turned into
        jump probabilities by dividing by each state's total outflow.
        """
        built = []
        for k, spec in enumerate(levels):
            labels = tuple(spec["labels"])
            local = np.array(spec["local"], dtype=float)
            np.fill_diagonal(local, 0.0)
            up = np.array(spec["up"], dtype=float)
            down = None if spec.get("down") is None else np.array(spec["down"], dtype=float)
            total = local.sum(axis=1) + up.sum(axis=1)
            if down is not None:
                total = total + down.sum(axis=1)
            if np.any(total <= 0):
                bad = [labels[i] for i in np.flatnonzero(total <= 0)]
                raise AbsorbingStructureError(f"absorbing-structure: states {bad} have no outgoing rate")
            scale = 1.0 / total[:, None]
            built.append(
                Level(labels, None if down is None else down * scale, local * scale, up * scale, total)
            )
        lp = cls(tuple(built))
        lp.validate()
        return lp

    def validate(self, tol=1e-12):
        for k, lev in enumerate(self.levels):
            n = len(lev.labels)
            nxt = self.levels[min(k + 1, len(self.levels) - 1)]
            if lev.local.shape != (n, n) or lev.up.shape != (n, len(nxt.labels)):
                raise ValueError(f"level {k + 1} blocks have inconsistent shapes")
            rows = lev.local.sum(axis=1) + lev.up.sum(axis=1)
            if lev.down is not None:
                if lev.down.shape != (n, len(self.levels[k - 1].labels)):
                    raise ValueError(f"level {k + 1} down block has inconsistent shape")
                rows = rows + lev.down.sum(axis=1)
            if np.max(np.abs(rows - 1.0)) > tol:
                raise ValueError(f"level {k + 1} jump probabilities do not sum to one")
        rep = self.levels[-1]
        if rep.down is None or rep.down.shape[0] != rep.down.shape[1]:
            raise ValueError("repeating level must map onto a level of the same size")


@dataclass(frozen=True)
class BusyPeriod:
    """Outcome of a one-level-down passage from ``start``.

    ``end_probs`` maps each end-state label to its probability;
    ``conditional_moments`` maps it to the first three moments of the
    passage time given that end state.  ``moments`` are the unconditional
    moments.
    """

    start: object
    end_probs: dict
    conditional_moments: dict
    moments: tuple

    def fit(self, end) -> EcFit:
        return fit_ec(*self.conditional_moments[end])


def _polish_g(B, L, F, G, steps=2):
    """Newton refinement of ``G = B + L G + F G^2``."""
    m = G.shape[0]
    eye = np.eye(m)

    def res(X):
        return B + L @ X + F @ X @ X - X

    best = np.max(np.abs(res(G)))
    for _ in range(steps):
        J = np.kron(eye, L - eye + F @ G) + np.kron(G.T, F)
        try:
            d = np.linalg.solve(J, -res(G).reshape(-1, order="F")).reshape((m, m), order="F")
        except np.linalg.LinAlgError:
            break
        cand = G + d
        r = np.max(np.abs(res(cand)))
        if not r < best:
            break
        G, best = cand, r
    return G, best


def _repeating_g(lev: Level) -> np.ndarray:
    B, L, F = lev.down, lev.local, lev.up
    m = B.shape[0]
    eye = np.eye(m)
    G = np.zeros((m, m))
    for _ in range(G_MAX_ITER):
        G_next = np.linalg.solve(eye - L - F @ G, B)
        step = np.max(np.abs(G_next - G))
        G = G_next
        if step < G_TOL:
            break
    else:
        res = np.max(np.abs(B + L @ G + F @ G @ G - G))
        raise ConvergenceError("repeating-level G iteration did not converge", res)
    G, res = _polish_g(B, L, F, G)
    if res > 1e-11:
        raise ConvergenceError("repeating-level G residual too large", res)
    if np.max(np.abs(G.sum(axis=1) - 1.0)) > 1e-8:
        raise UnstableSystemError("unstable system: higher-priority passage is not certain to end")
    return G


def _repeating_moments(lev: Level, G: np.ndarray, count: int = 3):
    B, L, F = lev.down, lev.local, lev.up
    m = B.shape[0]
    eye = np.eye(m)
    Ninv = np.diag(1.0 / lev.rates)
    M = eye - L - F @ G
    K = np.kron(eye, M) - np.kron(G.T, F)
    Z = [G]
    for r in range(1, count + 1):
        rhs = r * Ninv @ Z[r - 1]
        for k in range(1, r):
            rhs = rhs + math.comb(r, k) * F @ Z[k] @ Z[r - k]
        vec = np.linalg.solve(K, rhs.reshape(-1, order="F"))
        Z.append(vec.reshape((m, m), order="F"))
    return Z


def passage_matrices(lp: LevelProcess, start_level: int, count: int = 3):
    """G and moment matrices ``[Z_0 = G, Z_1, ..., Z_count]`` for passage from ``start_level``.

    ``Z_r[i, j] = E[T^r ; end = j]`` for the first passage from state ``i``
    of ``start_level`` to state ``j`` of the level below.
    """
    if start_level < 2:
        raise ValueError("passage must start at level 2 or above")
    K = lp.repeat_level
    G_rep = _repeating_g(lp.level(K))
    Z_rep = _repeating_moments(lp.level(K), G_rep, count)
    Z_above = Z_rep
    Z = Z_rep
    for ell in range(K - 1, start_level - 1, -1):
        lev = lp.level(ell)
        n = len(lev.labels)
        Ninv = np.diag(1.0 / lev.rates)
        M = np.eye(n) - lev.local - lev.up @ Z_above[0]
        Z = [np.linalg.solve(M, lev.down)]
        for r in range(1, count + 1):
            rhs = r * Ninv @ Z[r - 1]
            for k in range(1, r + 1):
                rhs = rhs + math.comb(r, k) * lev.up @ Z_above[k] @ Z[r - k]
            Z.append(np.linalg.solve(M, rhs))
        Z_above = Z
    return Z


def passage_analysis(
    lp: LevelProcess, starts: Sequence, ends: Sequence | None = None, min_prob: float = MIN_END_PROB
) -> list:
    """Busy periods starting from ``starts`` and ending one level lower.

    All start labels must belong to the same level.  ``ends`` lists the end
    states of interest (default: every state of the level below); each must
    be reachable from each start.  When ``ends`` is omitted, end states
    less likely than ``min_prob`` are reported with their probability but
    without conditional moments instead of raising.
    """
    explicit = ends is not None
    where = {}
    for ell, lev in enumerate(lp.levels, start=1):
        for i, lab in enumerate(lev.labels):
            where.setdefault(lab, (ell, i))
    try:
        located = [where[s] for s in starts]
    except KeyError as exc:
        raise KeyError(f"unknown start state {exc.args[0]!r}") from None
    start_level = located[0][0]
    if any(ell != start_level for ell, _ in located):
        raise ValueError("all start states must lie on the same level")
    lower = lp.level(start_level - 1)
    if ends is None:
        ends = lower.labels
    end_index = []
    for e in ends:
        if e not in lower.labels:
            raise KeyError(f"end state {e!r} is not on level {start_level - 1}")
        end_index.append(lower.labels.index(e))

    Z = passage_matrices(lp, start_level)
    out = []
    for label, (_, i) in zip(starts, located):
        probs, cond = {}, {}
        for e, j in zip(ends, end_index):
            g = Z[0][i, j]
            if g <= 0.0 or g < min_prob:
                if explicit:
                    raise AbsorbingStructureError(
                        f"absorbing-structure: end state {e!r} unreachable from {label!r} (probability {g:.3e})"
                    )
                probs[e] = max(float(g), 0.0)
                continue
            probs[e] = float(g)
            cond[e] = tuple(float(Z[r][i, j] / g) for r in (1, 2, 3))
        total = Z[0][i].sum()
        moments = tuple(float(Z[r][i].sum() / total) for r in (1, 2, 3))
        out.append(BusyPeriod(label, probs, cond, moments))
    return out
