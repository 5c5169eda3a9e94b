"""Paired-world Monte Carlo simulation of the reading queue.

Every generated image goes through two worlds with the same arrival time
and the same reading time: one without the triage device (emergent images
ahead of one FIFO class of non-emergent images) and one with it (emergent,
then AI-positive, then AI-negative).  Per-image waits are therefore paired,
and the difference of the two worlds is estimated with little noise.

The event loop lives in a compiled extension when it is available; set
``TRIAGEQ_PURE_PYTHON=1`` to force the pure-Python implementation.  Both
give bit-identical results.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import norm

from ..scenario import ClinicalScenario, derive_rates
from . import _pykernel

if os.environ.get("TRIAGEQ_PURE_PYTHON", "") not in ("", "0"):
    simulate_world = _pykernel.simulate_world
    BACKEND = "python"
else:
    try:
        from ._ckernel import simulate_world  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        simulate_world = _pykernel.simulate_world
        BACKEND = "python"

__all__ = [
    "BACKEND",
    "Estimate",
    "ReplicationResult",
    "SimConfig",
    "SimReport",
    "replication_rng",
    "run_replication",
    "run_study",
    "simulate_world",
]

#: Priority of each class in the without-device world.
WITHOUT_CLASSES = ("emergent", "nonemergent")
#: Priority of each class in the with-device world.
WITH_CLASSES = ("emergent", "plus", "minus")


@dataclass(frozen=True)
class SimConfig:
    """Size and seed of a simulation study."""

    n_replications: int = 200
    patients_per_replication: int = 2000
    seed: int = 20221
    warmup_fraction: float = 0.0

    def __post_init__(self):
        if self.n_replications < 1 or self.patients_per_replication < 1:
            raise ValueError("n_replications and patients_per_replication must be at least 1")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must be in [0,1)")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


def replication_rng(seed: int, replication: int) -> np.random.Generator:
    """PCG64 generator of one replication, spawned from ``seed`` by replication index."""
    seq = np.random.SeedSequence(entropy=seed, spawn_key=(replication,))
    return np.random.Generator(np.random.PCG64(seq))


@dataclass
class ReplicationResult:
    """Per-image records of one replication (arrays indexed by arrival order)."""

    arrival: np.ndarray
    emergent: np.ndarray
    diseased: np.ndarray
    ai_positive: np.ndarray
    reading_time: np.ndarray
    wait_without: np.ndarray
    wait_with: np.ndarray
    counts_without: np.ndarray
    counts_with: np.ndarray
    busy_without: float
    busy_with: float

    @property
    def priority_without(self):
        return np.where(self.emergent, 0, 1)

    @property
    def priority_with(self):
        return np.where(self.emergent, 0, np.where(self.ai_positive, 1, 2))


def generate_images(s: ClinicalScenario, n: int, rng: np.random.Generator):
    """Draw arrival times, labels and reading times for ``n`` images."""
    r = derive_rates(s)
    arrival = np.cumsum(rng.exponential(1.0 / r.lam, n))
    emergent = rng.random(n) < s.fraction_emergent
    diseased = ~emergent & (rng.random(n) < s.prevalence)
    u = rng.random(n)
    ai_positive = ~emergent & np.where(diseased, u < s.sensitivity, u >= s.specificity)
    mean_time = np.where(
        emergent, s.read_time_emergent, np.where(diseased, s.read_time_diseased, s.read_time_nondiseased)
    )
    reading_time = rng.standard_exponential(n) * mean_time
    return arrival, emergent, diseased, ai_positive, reading_time


def run_replication(s: ClinicalScenario, seed: int, n_patients: int = 2000, replication: int = 0) -> ReplicationResult:
    """Simulate one replication of ``n_patients`` images through both worlds.

    The run continues until every image has been read, so each image has a
    wait in both worlds.
    """
    rng = replication_rng(seed, replication)
    arrival, emergent, diseased, ai_positive, reading = generate_images(s, n_patients, rng)
    n_servers = s.num_radiologists
    prio_without = np.where(emergent, 0, 1).astype(np.int64)
    prio_with = np.where(emergent, 0, np.where(ai_positive, 1, 2)).astype(np.int64)
    dep0, busy0, counts0 = simulate_world(arrival, prio_without, reading, n_servers, 2)
    dep1, busy1, counts1 = simulate_world(arrival, prio_with, reading, n_servers, 3)
    return ReplicationResult(
        arrival, emergent, diseased, ai_positive, reading,
        dep0 - arrival - reading, dep1 - arrival - reading,
        counts0, counts1, busy0, busy1,
    )


@dataclass(frozen=True)
class Estimate:
    """Across-replication mean with a normal-approximation 95% interval."""

    mean: float
    lo: float
    hi: float
    sd: float
    n: int

    @classmethod
    def from_samples(cls, values) -> "Estimate":
        v = np.asarray(values, dtype=float)
        v = v[~np.isnan(v)]
        if v.size == 0:
            return cls(math.nan, math.nan, math.nan, math.nan, 0)
        mean = float(v.mean())
        sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
        half = float(norm.ppf(0.975)) * sd / math.sqrt(v.size)
        return cls(mean, mean - half, mean + half, sd, int(v.size))

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi


def _mean(x, mask):
    return float(x[mask].mean()) if mask.any() else math.nan


#: Names of the per-replication statistics collected by :func:`run_study`.
STATISTICS = (
    "W_em_without", "W_em_with", "W_nonEm_without", "W_plus_with", "W_minus_with",
    "W_D_without", "W_D_with", "W_ND_without", "W_ND_with", "delta_W_D", "delta_W_ND",
)


def replication_statistics(rep: ReplicationResult, warmup: int = 0) -> dict:
    """Mean waits per class and subgroup of one replication, skipping the first ``warmup`` images."""
    keep = np.zeros(len(rep.arrival), dtype=bool)
    keep[warmup:] = True
    em = keep & rep.emergent
    nonem = keep & ~rep.emergent
    dis = keep & rep.diseased
    nd = nonem & ~rep.diseased
    diff = rep.wait_with - rep.wait_without
    return {
        "W_em_without": _mean(rep.wait_without, em),
        "W_em_with": _mean(rep.wait_with, em),
        "W_nonEm_without": _mean(rep.wait_without, nonem),
        "W_plus_with": _mean(rep.wait_with, nonem & rep.ai_positive),
        "W_minus_with": _mean(rep.wait_with, nonem & ~rep.ai_positive),
        "W_D_without": _mean(rep.wait_without, dis),
        "W_D_with": _mean(rep.wait_with, dis),
        "W_ND_without": _mean(rep.wait_without, nd),
        "W_ND_with": _mean(rep.wait_with, nd),
        "delta_W_D": _mean(diff, dis),
        "delta_W_ND": _mean(diff, nd),
    }


@dataclass
class SimReport:
    """Aggregated results of a study.

    ``estimates`` maps each name in :data:`STATISTICS` to an
    :class:`Estimate`.  ``occupancy`` maps ``"<world>:<class>"`` to the
    across-replication mean fraction of arrivals that found ``k`` jobs of
    that class in the system (index ``k``), with its interval bounds.
    """

    config: SimConfig
    scenario: ClinicalScenario
    estimates: dict
    occupancy: dict = field(default_factory=dict)

    def __getitem__(self, name) -> Estimate:
        return self.estimates[name]

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "scenario": asdict(self.scenario),
            "estimates": {k: asdict(v) for k, v in self.estimates.items()},
            "occupancy": {k: {kk: list(map(float, vv)) for kk, vv in v.items()} for k, v in self.occupancy.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _histograms(counts: np.ndarray, keep: np.ndarray, size: int) -> np.ndarray:
    sel = counts[keep]
    out = np.zeros((counts.shape[1], size))
    for c in range(counts.shape[1]):
        h = np.bincount(np.minimum(sel[:, c], size - 1), minlength=size)
        out[c] = h / max(1, sel.shape[0])
    return out


def run_study(s: ClinicalScenario, cfg: SimConfig = SimConfig(), occupancy_size: int = 60) -> SimReport:
    """Run ``cfg.n_replications`` independent replications and aggregate them.

    Intervals are mean +/- z_0.975 * sd / sqrt(R) over the replication means.
    Occupancy histograms lump counts of ``occupancy_size - 1`` or more into
    the last bin.
    """
    warmup = int(math.floor(cfg.warmup_fraction * cfg.patients_per_replication))
    per_rep = {name: [] for name in STATISTICS}
    hist = {f"without:{c}": [] for c in WITHOUT_CLASSES}
    hist.update({f"with:{c}": [] for c in WITH_CLASSES})
    for rep_index in range(cfg.n_replications):
        rep = run_replication(s, cfg.seed, cfg.patients_per_replication, rep_index)
        for name, value in replication_statistics(rep, warmup).items():
            per_rep[name].append(value)
        keep = np.arange(len(rep.arrival)) >= warmup
        h0 = _histograms(rep.counts_without, keep, occupancy_size)
        h1 = _histograms(rep.counts_with, keep, occupancy_size)
        for c, name in enumerate(WITHOUT_CLASSES):
            hist[f"without:{name}"].append(h0[c])
        for c, name in enumerate(WITH_CLASSES):
            hist[f"with:{name}"].append(h1[c])
    estimates = {name: Estimate.from_samples(v) for name, v in per_rep.items()}
    z = float(norm.ppf(0.975))
    occupancy = {}
    for key, rows in hist.items():
        a = np.asarray(rows)
        mean = a.mean(axis=0)
        half = z * (a.std(axis=0, ddof=1) if len(rows) > 1 else np.zeros_like(mean)) / math.sqrt(len(rows))
        occupancy[key] = {"mean": mean, "lo": mean - half, "hi": mean + half}
    return SimReport(cfg, s, estimates, occupancy)
