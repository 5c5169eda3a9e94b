import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from triageq import models, qbd, simulator
from triageq.metrics import evaluate_scenario
from triageq.scenario import ClinicalScenario, derive_rates
from triageq.simulator import (
    Estimate,
    SimConfig,
    _pykernel,
    replication_statistics,
    run_replication,
    run_study,
)

try:
    from triageq.simulator import _ckernel
except ImportError:  # pragma: no cover
    _ckernel = None

needs_cython = pytest.mark.skipif(_ckernel is None, reason="compiled kernel not built")


# --------------------------------------------------------------------------
# Event loop
# --------------------------------------------------------------------------


def test_preemption_by_hand():
    arrivals = np.array([0.0, 1.0, 1.5])
    priority = np.array([1, 0, 1])
    service = np.array([3.0, 1.0, 2.0])
    dep, busy, counts = _pykernel.simulate_world(arrivals, priority, service, 1, 2)
    # job 0 is interrupted at t=1, resumes at t=2 and finishes at 4; job 2 follows
    assert dep.tolist() == [4.0, 2.0, 6.0]
    assert busy == 6.0
    assert counts.tolist() == [[0, 0], [0, 1], [1, 1]]


def test_two_servers_by_hand():
    arrivals = np.array([0.0, 0.5, 1.0])
    priority = np.array([1, 1, 0])
    service = np.array([2.0, 2.0, 1.0])
    dep, busy, _ = _pykernel.simulate_world(arrivals, priority, service, 2, 2)
    # the urgent arrival takes the server of the later non-urgent job
    assert dep.tolist() == [2.0, 3.5, 2.0]
    assert busy == 5.0


@st.composite
def traces(draw):
    n = draw(st.integers(1, 60))
    n_classes = draw(st.integers(1, 3))
    # integer-valued times create plenty of simultaneous events
    gaps = draw(st.lists(st.integers(0, 3), min_size=n, max_size=n))
    arrivals = np.cumsum(np.asarray(gaps, dtype=float))
    priority = np.asarray(draw(st.lists(st.integers(0, n_classes - 1), min_size=n, max_size=n)), dtype=np.int64)
    service = np.asarray(draw(st.lists(st.integers(1, 6), min_size=n, max_size=n)), dtype=float)
    return arrivals, priority, service, draw(st.sampled_from([1, 2])), n_classes


@needs_cython
@settings(max_examples=200, deadline=None)
@given(traces())
def test_kernels_agree_bit_for_bit(trace):
    py = _pykernel.simulate_world(*trace)
    cy = _ckernel.simulate_world(*trace)
    assert np.array_equal(py[0], cy[0])
    assert py[1] == cy[1]
    assert np.array_equal(py[2], cy[2])


@needs_cython
def test_kernels_agree_on_a_full_replication():
    s = ClinicalScenario(traffic=0.8, fraction_emergent=0.3, num_radiologists=2)
    rng = simulator.replication_rng(7, 0)
    arrival, emergent, _, ai_pos, reading = simulator.generate_images(s, 3000, rng)
    prio = np.where(emergent, 0, np.where(ai_pos, 1, 2)).astype(np.int64)
    py = _pykernel.simulate_world(arrival, prio, reading, 2, 3)
    cy = _ckernel.simulate_world(arrival, prio, reading, 2, 3)
    assert np.array_equal(py[0], cy[0]) and py[1] == cy[1]


@settings(max_examples=50, deadline=None)
@given(traces())
def test_every_job_is_served_in_full(trace):
    arrivals, priority, service, servers, n_classes = trace
    dep, busy, _ = simulator.simulate_world(arrivals, priority, service, servers, n_classes)
    assert np.all(dep >= arrivals + service - 1e-9)
    assert busy == pytest.approx(service.sum(), rel=1e-12)


def test_backend_can_be_forced():
    env = dict(os.environ, TRIAGEQ_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "import triageq.simulator as m; print(m.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"


# --------------------------------------------------------------------------
# Paired worlds
# --------------------------------------------------------------------------


@pytest.mark.parametrize("n_rad", [1, 2])
def test_worlds_share_images_and_total_work(n_rad):
    rep = run_replication(ClinicalScenario(traffic=0.7, fraction_emergent=0.2, num_radiologists=n_rad), 3, 1500)
    assert rep.busy_with == pytest.approx(rep.busy_without, rel=1e-12)
    # both worlds are work conserving, so the last image leaves at the same time
    end_without = (rep.arrival + rep.reading_time + rep.wait_without).max()
    end_with = (rep.arrival + rep.reading_time + rep.wait_with).max()
    assert end_with == pytest.approx(end_without, rel=1e-12)
    assert np.all(rep.wait_without >= -1e-9) and np.all(rep.wait_with >= -1e-9)
    # emergent images outrank everything in both worlds
    assert np.allclose(rep.wait_with[rep.emergent], rep.wait_without[rep.emergent])


def test_device_that_flags_nothing_changes_nothing():
    s = ClinicalScenario(traffic=0.8, fraction_emergent=0.3, sensitivity=0.0, specificity=1.0)
    rep = run_replication(s, 11, 2000)
    assert not rep.ai_positive.any()
    stats = replication_statistics(rep)
    assert stats["delta_W_D"] == 0.0 and stats["delta_W_ND"] == 0.0


def test_labels_follow_the_scenario():
    s = ClinicalScenario(fraction_emergent=0.3, prevalence=0.2, sensitivity=0.9, specificity=0.8)
    rep = run_replication(s, 5, 200_000)
    nonem = ~rep.emergent
    assert rep.emergent.mean() == pytest.approx(0.3, abs=0.005)
    assert rep.diseased[nonem].mean() == pytest.approx(0.2, abs=0.005)
    assert not (rep.diseased & rep.emergent).any()
    assert rep.ai_positive[rep.diseased].mean() == pytest.approx(0.9, abs=0.01)
    assert 1 - rep.ai_positive[nonem & ~rep.diseased].mean() == pytest.approx(0.8, abs=0.01)
    assert np.diff(rep.arrival).mean() == pytest.approx(1 / derive_rates(s).lam, rel=0.01)


# --------------------------------------------------------------------------
# Statistics
# --------------------------------------------------------------------------


def test_estimate_interval():
    e = Estimate.from_samples([1.0, 2.0, 3.0, np.nan])
    assert e.n == 3 and e.mean == 2.0 and e.sd == 1.0
    assert e.hi - e.mean == pytest.approx(1.959964 / np.sqrt(3), rel=1e-6)
    assert e.contains(2.5) and not e.contains(4.0)
    assert np.isnan(Estimate.from_samples([np.nan]).mean)


@pytest.mark.parametrize(
    "kw",
    [dict(n_replications=0), dict(patients_per_replication=0), dict(warmup_fraction=1.0), dict(seed=-1)],
)
def test_sim_config_validation(kw):
    with pytest.raises(ValueError):
        SimConfig(**kw)


@pytest.mark.parametrize("rho", [0.3, 0.6])
def test_mm1_wait_inside_interval(rho):
    s = ClinicalScenario(traffic=rho)
    rep = run_study(s, SimConfig(n_replications=60, patients_per_replication=4000, warmup_fraction=0.1, seed=4))
    exact = models.evaluate(s).W_nonEm
    assert rep["W_nonEm_without"].contains(exact)


def test_arrivals_see_time_averages():
    """Counts seen by arrivals match the stationary queue-length distribution."""
    s = ClinicalScenario(traffic=0.6, sensitivity=0.8, specificity=0.7)
    r = derive_rates(s)
    busy = models._mm1_busy_ph(r.lam_plus, r.mu_plus)
    sol = qbd.solve(models.priority_chain(r.lam_minus, r.mu_minus, [(r.lam_plus, busy)]))
    exact = sol.level_probabilities(10)
    rep = run_study(s, SimConfig(n_replications=80, patients_per_replication=4000, warmup_fraction=0.1, seed=8), 12)
    occ = rep.occupancy["with:minus"]
    half = occ["hi"][:11] - occ["mean"][:11]
    # interval half-widths are a few thousandths; allow a little over one plus slack
    assert np.all(np.abs(occ["mean"][:11] - exact) <= 1.5 * half + 2e-3)
    # the AI-positive class on its own is an M/M/1 queue
    rho_plus = r.lam_plus / r.mu_plus
    geo = (1 - rho_plus) * rho_plus ** np.arange(6)
    assert np.allclose(rep.occupancy["with:plus"]["mean"][:6], geo, atol=5e-3)


def test_short_runs_converge_with_warmup():
    s = ClinicalScenario(traffic=0.8, fraction_emergent=0.5)
    _, exact = evaluate_scenario(s)
    rep = run_study(s, SimConfig(warmup_fraction=0.25))
    assert rep["delta_W_D"].contains(exact.delta_W_D)
    # the small non-diseased shift needs longer runs to shake off the start-up bias
    long = run_study(s, SimConfig(patients_per_replication=20000, warmup_fraction=0.1))
    assert long["delta_W_D"].contains(exact.delta_W_D)
    assert long["delta_W_ND"].contains(exact.delta_W_ND)


def test_same_seed_same_report():
    s = ClinicalScenario(traffic=0.5, fraction_emergent=0.2)
    cfg = SimConfig(n_replications=5, patients_per_replication=300, seed=99)
    a, b = run_study(s, cfg, 8), run_study(s, cfg, 8)
    assert a.to_json() == b.to_json()
    other = run_study(s, SimConfig(n_replications=5, patients_per_replication=300, seed=100), 8)
    assert other.to_json() != a.to_json()
    data = json.loads(a.to_json())
    assert set(data["estimates"]) == set(simulator.STATISTICS)
    assert set(data["occupancy"]) == {"without:emergent", "without:nonemergent", "with:emergent", "with:plus", "with:minus"}


def test_replications_are_independent_streams():
    x = simulator.replication_rng(1, 0).random(4)
    y = simulator.replication_rng(1, 1).random(4)
    assert not np.allclose(x, y)
    assert np.array_equal(x, simulator.replication_rng(1, 0).random(4))
