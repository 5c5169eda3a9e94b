"""Level-independent quasi-birth-death chains and their matrix-geometric solution.

A chain is stored as generator blocks::

        [ B00  B01                ]
        [ B10  A1   A2            ]
    Q = [      A0   A1   A2       ]
        [           A0   A1   A2  ]
        [                ...  ... ]

The boundary may cover several queue lengths (Model C needs two), so each
boundary state carries the queue length it represents in
``boundary_counts`` and the first repeating level represents
``first_level`` jobs.  Diagonal entries of ``B00`` and ``A1`` are filled in
by :meth:`QbdChain.build` as negated row sums, so templates only need to
specify off-diagonal rates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DegenerateBoundaryError, NumericalError, UnstableSystemError

#: Maximum number of fixed-point iterations for R.
R_MAX_ITER = 1_000_000
#: Stop once the largest entrywise change of R falls below this value.
R_TOL = 1e-13
#: Required residual of the matrix-quadratic equation after convergence.
R_RESIDUAL_TOL = 1e-12
#: Waits within this many minutes below zero are treated as exactly zero.
WAIT_CLAMP_TOL = 1e-9


@dataclass(frozen=True)
class QbdChain:
    """Generator blocks of a level-independent QBD.

    ``A0`` moves one level down, ``A1`` stays and ``A2`` moves one level up.
    ``B01`` leads from the boundary into the first repeating level and
    ``B10`` back.
    """

    B00: np.ndarray
    B01: np.ndarray
    B10: np.ndarray
    A0: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    boundary_counts: np.ndarray
    first_level: int = 1

    @property
    def level_size(self) -> int:
        return self.A1.shape[0]

    @property
    def boundary_size(self) -> int:
        return self.B00.shape[0]

    @classmethod
    def build(cls, B00, B01, B10, A0, A1, A2, boundary_counts=None, first_level=1):
        """Assemble a chain from off-diagonal templates.

        The diagonals of ``B00`` and ``A1`` are overwritten with the negated
        sums of every other rate leaving the state, and the result is
        checked against the generator invariants.
        """
        B00, B01, B10, A0, A1, A2 = (np.array(m, dtype=float) for m in (B00, B01, B10, A0, A1, A2))
        np.fill_diagonal(B00, 0.0)
        np.fill_diagonal(A1, 0.0)
        np.fill_diagonal(B00, -(B00.sum(axis=1) + B01.sum(axis=1)))
        np.fill_diagonal(A1, -(A0.sum(axis=1) + A1.sum(axis=1) + A2.sum(axis=1)))
        if boundary_counts is None:
            boundary_counts = np.zeros(B00.shape[0])
        chain = cls(B00, B01, B10, A0, A1, A2, np.asarray(boundary_counts, dtype=float), int(first_level))
        chain.validate()
        return chain

    def validate(self, tol=1e-10):
        """Check block shapes, sign pattern and zero row sums."""
        m, b = self.level_size, self.boundary_size
        shapes = {
            "B00": (self.B00, (b, b)),
            "B01": (self.B01, (b, m)),
            "B10": (self.B10, (m, b)),
            "A0": (self.A0, (m, m)),
            "A1": (self.A1, (m, m)),
            "A2": (self.A2, (m, m)),
        }
        for name, (block, shape) in shapes.items():
            if block.shape != shape:
                raise ValueError(f"{name} has shape {block.shape}, expected {shape}")
        if self.boundary_counts.shape != (b,):
            raise ValueError("boundary_counts must have one entry per boundary state")
        offdiag = [self.B01, self.B10, self.A0, self.A2]
        offdiag += [self.B00 - np.diag(np.diag(self.B00)), self.A1 - np.diag(np.diag(self.A1))]
        if min(block.min() for block in offdiag) < 0.0:
            raise ValueError("negative off-diagonal rate in generator")
        rows = {
            "boundary": self.B00.sum(axis=1) + self.B01.sum(axis=1),
            "first level": self.B10.sum(axis=1) + self.A1.sum(axis=1) + self.A2.sum(axis=1),
            "repeating": self.A0.sum(axis=1) + self.A1.sum(axis=1) + self.A2.sum(axis=1),
        }
        for where, sums in rows.items():
            if np.max(np.abs(sums)) > tol:
                raise ValueError(f"{where} rows do not sum to zero (max {np.max(np.abs(sums)):.2e})")

    def generator(self, levels: int) -> np.ndarray:
        """Dense generator truncated after ``levels`` repeating levels (for tests)."""
        b, m = self.boundary_size, self.level_size
        n = b + levels * m
        Q = np.zeros((n, n))
        Q[:b, :b] = self.B00
        Q[:b, b : b + m] = self.B01
        for k in range(levels):
            lo = b + k * m
            Q[lo : lo + m, lo : lo + m] = self.A1
            if k == 0:
                Q[lo : lo + m, :b] = self.B10
            else:
                Q[lo : lo + m, lo - m : lo] = self.A0
            if k + 1 < levels:
                Q[lo : lo + m, lo + m : lo + 2 * m] = self.A2
        return Q


@dataclass(frozen=True)
class StationarySolution:
    """Stationary distribution of a QBD in matrix-geometric form.

    The probability vector of repeating level ``k`` (k = 0, 1, ...) is
    ``level1_probs @ R**k``.
    """

    chain: QbdChain
    boundary_probs: np.ndarray
    level1_probs: np.ndarray
    rate_matrix: np.ndarray
    spectral_radius: float

    @property
    def R(self):
        return self.rate_matrix

    def total_probability(self) -> float:
        m = self.chain.level_size
        tail = np.linalg.solve(np.eye(m) - self.R, np.ones(m))
        return float(self.boundary_probs.sum() + self.level1_probs @ tail)

    def level_probabilities(self, max_count: int) -> np.ndarray:
        """P(queue length = n) for n = 0..max_count."""
        out = np.zeros(max_count + 1)
        counts = self.chain.boundary_counts.astype(int)
        for c, p in zip(counts, self.boundary_probs):
            if c <= max_count:
                out[c] += p
        v = self.level1_probs.copy()
        for n in range(self.chain.first_level, max_count + 1):
            out[n] += v.sum()
            v = v @ self.R
        return out


def _drift(chain: QbdChain):
    """Mean upward and downward rates of the repeating phase process."""
    A = chain.A0 + chain.A1 + chain.A2
    m = A.shape[0]
    M = np.vstack([A.T, np.ones(m)])
    rhs = np.zeros(m + 1)
    rhs[-1] = 1.0
    theta = np.linalg.lstsq(M, rhs, rcond=None)[0]
    return float(theta @ chain.A2.sum(axis=1)), float(theta @ chain.A0.sum(axis=1))


def solve_R(chain: QbdChain) -> np.ndarray:
    """Minimal nonnegative solution of ``A2 + R A1 + R^2 A0 = 0``.

    Uses the fixed-point iteration ``R <- -(A2 + R^2 A0) A1^{-1}`` started
    from zero, which increases monotonically to the minimal solution.
    """
    up, down = _drift(chain)
    if up >= down:
        raise UnstableSystemError(
            f"unstable system: mean upward drift {up:.6g} is not below downward drift {down:.6g}"
        )
    m = chain.level_size
    if not chain.A2.any():
        return np.zeros((m, m))
    A1_inv = np.linalg.inv(chain.A1)
    A0, A2 = chain.A0, chain.A2
    neg_A2_A1inv = -A2 @ A1_inv
    A0_A1inv = A0 @ A1_inv
    R = np.zeros((m, m))
    for _ in range(R_MAX_ITER):
        R_next = neg_A2_A1inv - R @ R @ A0_A1inv
        step = np.max(np.abs(R_next - R))
        R = R_next
        if step < R_TOL:
            break
    else:
        raise ConvergenceError("R iteration did not converge", _residual(chain, R))
    R = _newton_polish(chain, R)
    residual = _residual(chain, R)
    if residual >= R_RESIDUAL_TOL:
        raise ConvergenceError("R residual too large", residual)
    R = np.maximum(R, 0.0)
    if _spectral_radius(R) >= 1.0:
        raise UnstableSystemError("unstable system: spectral radius of R is not below 1")
    return R


def _newton_polish(chain, R, steps=2):
    """Refine a converged fixed point with Newton steps on the quadratic equation.

    The linear fixed-point iteration stops with an error of roughly
    ``tol / (1 - rate)``; a couple of Newton corrections bring the residual
    down to rounding level.  A step is only kept if it lowers the residual.
    """
    m = R.shape[0]
    eye = np.eye(m)
    best = _residual(chain, R)
    for _ in range(steps):
        F = chain.A2 + R @ chain.A1 + R @ R @ chain.A0
        J = np.kron((chain.A1 + R @ chain.A0).T, eye) + np.kron(chain.A0.T, R)
        try:
            dR = np.linalg.solve(J, -F.reshape(-1, order="F")).reshape((m, m), order="F")
        except np.linalg.LinAlgError:
            break
        candidate = R + dR
        res = _residual(chain, candidate)
        if not res < best:
            break
        R, best = candidate, res
    return R


def _residual(chain, R):
    return float(np.max(np.abs(chain.A2 + R @ chain.A1 + R @ R @ chain.A0)))


def _spectral_radius(R):
    return float(np.max(np.abs(np.linalg.eigvals(R)))) if R.size else 0.0


def solve_boundary(chain: QbdChain, R: np.ndarray) -> StationarySolution:
    """Solve the boundary balance equations and normalise with the geometric tail.

    Unknowns are the boundary vector ``x0`` and the first repeating level
    ``x1``::

        x0 B00 + x1 B10 = 0
        x0 B01 + x1 (A1 + R A0) = 0
        x0 1 + x1 (I - R)^{-1} 1 = 1
    """
    b, m = chain.boundary_size, chain.level_size
    M = np.block([[chain.B00, chain.B01], [chain.B10, chain.A1 + R @ chain.A0]])
    tail = np.linalg.solve(np.eye(m) - R, np.ones(m))
    norm = np.concatenate([np.ones(b), tail])
    system = np.vstack([M.T, norm])
    rhs = np.zeros(b + m + 1)
    rhs[-1] = 1.0
    x, _, rank, _ = np.linalg.lstsq(system, rhs, rcond=None)
    if rank < b + m:
        raise DegenerateBoundaryError("degenerate-boundary: boundary system is singular")
    if np.max(np.abs(system @ x - rhs)) > 1e-9:
        raise DegenerateBoundaryError("degenerate-boundary: boundary system has no consistent solution")
    x = np.where(np.abs(x) < 1e-15, 0.0, x)
    if x.min() < -1e-10:
        raise DegenerateBoundaryError("degenerate-boundary: negative stationary probability")
    x = np.maximum(x, 0.0)
    return StationarySolution(chain, x[:b], x[b:], R, _spectral_radius(R))


def solve(chain: QbdChain) -> StationarySolution:
    """Convenience wrapper: :func:`solve_R` followed by :func:`solve_boundary`."""
    return solve_boundary(chain, solve_R(chain))


def mean_level(sol: StationarySolution) -> float:
    """Expected queue length, in closed form through ``(I-R)^{-1}`` and ``(I-R)^{-2}``."""
    chain = sol.chain
    m = chain.level_size
    inv = np.linalg.inv(np.eye(m) - sol.R)
    ones = np.ones(m)
    boundary = sol.boundary_probs @ chain.boundary_counts
    offset = chain.first_level * (sol.level1_probs @ inv @ ones)
    geometric = sol.level1_probs @ sol.R @ inv @ inv @ ones
    return float(boundary + offset + geometric)


def waiting_time(L: float, lam: float, mu: float) -> float:
    """Mean time in queue by Little's law, ``L / lam - 1 / mu``.

    An empty class (``lam == 0``) waits 0 minutes by convention; callers
    that need to know this record their own flag.
    """
    if lam == 0.0:
        return 0.0
    if lam < 0.0 or mu <= 0.0:
        raise ValueError("arrival rate must be >= 0 and service rate > 0")
    w = L / lam - 1.0 / mu
    if w < 0.0:
        if w < -WAIT_CLAMP_TOL:
            raise NumericalError(f"negative waiting time {w:.3e} min from Little's law")
        w = 0.0
    return w
