"""Acceptance checks, one test per criterion.

Each test prints a single ``PASS criterion N: ...`` or ``FAIL criterion N: ...``
line to the terminal (outside pytest's capture) and then asserts the same
condition, so ``pytest -v tests/test_acceptance.py`` doubles as a report.
"""

import io
import time
import timeit

import numpy as np
import pytest

from oracles import brute_force_waits, caps_for, preemptive_priority_wait
from triageq import cli, models, rdr
from triageq.errors import MomentInfeasibleError
from triageq.metrics import binormal_roc, binormal_through, evaluate_scenario, roc_sweep
from triageq.scenario import ClinicalScenario, derive_rates
from triageq.simulator import SimConfig, run_study

#: Reference clinical operating point (prevalence, AI accuracy, emergent reads).
REFERENCE = dict(prevalence=0.1, sensitivity=0.95, specificity=0.89, read_time_emergent=5.0)


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        return ok

    return emit


def delta_d(**kw):
    return evaluate_scenario(ClinicalScenario(**{**REFERENCE, **kw}))[1].delta_W_D


# --------------------------------------------------------------------------


def test_criterion_1_mm1_exactness(report):
    s = ClinicalScenario(traffic=0.8)
    r = derive_rates(s)
    w = models.model_a_without(r).W_nonEm
    exact = 0.8 / (r.mu_nonem - r.lam)
    seconds = min(timeit.repeat(lambda: models.model_a_without(derive_rates(s)), number=1, repeat=20))
    ok = abs(w - exact) < 1e-9 and abs(w - 40.0) < 1e-9 and seconds < 1e-3
    report(1, ok, f"W_q = {w:.12f} min (closed form {exact:.12f}), {seconds * 1e3:.3f} ms")
    assert ok


def test_criterion_2_preemptive_priority_oracle(report):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(10):
        s = ClinicalScenario(
            traffic=rng.uniform(0.1, 0.95),
            fraction_emergent=rng.uniform(0.05, 0.9),
            read_time_emergent=rng.uniform(1.0, 20.0),
            read_time_diseased=10.0,
            read_time_nondiseased=10.0,
        )
        r = derive_rates(s)
        got = models.evaluate(s, models.Model.B).W_nonEm
        exact = preemptive_priority_wait(
            [r.lam_em, r.lam_nonem],
            [1 / r.mu_em, 1 / r.mu_nonem],
            [2 / r.mu_em**2, 2 / r.mu_nonem**2],
            1,
        )
        worst = max(worst, abs(got - exact))
    ok = worst < 1e-6
    report(2, ok, f"max |W_nonEm - textbook| over 10 random points = {worst:.2e} min")
    assert ok


BRUTE_FORCE_POINTS = {
    "A": [dict(traffic=rho) for rho in (0.3, 0.5, 0.6, 0.7, 0.8)],
    "B": [
        dict(fraction_emergent=f, traffic=rho)
        for f, rho in ((0.5, 0.3), (0.5, 0.45), (0.2, 0.5), (0.3, 0.4), (0.7, 0.35))
    ],
    "D": [dict(read_time_nondiseased=15.0, traffic=rho) for rho in (0.3, 0.6, 0.8)]
    + [dict(read_time_nondiseased=15.0, fraction_emergent=0.5, traffic=rho) for rho in (0.2, 0.3)],
}


def _compare(s):
    """Largest |analytic - brute force| over the lowest class of each world, and the tail mass."""
    r = derive_rates(s)
    w = models.evaluate(s)
    err, tail = 0.0, 0.0
    for with_device, attr in ((False, "W_nonEm"), (True, "W_minus")):
        bf = brute_force_waits(r, with_device, caps_for(r, with_device))
        err = max(err, abs(getattr(w, attr) - bf.waits[-1]))
        tail = max(tail, bf.tail_mass)
    return err, tail, w


def test_criterion_3_brute_force_equivalence(report):
    start = time.perf_counter()
    worst, tail = 0.0, 0.0
    for model, points in BRUTE_FORCE_POINTS.items():
        for kw in points:
            s = ClinicalScenario(**{**REFERENCE, **kw})
            err, t, w = _compare(s)
            assert w.model.value == model
            worst, tail = max(worst, err), max(tail, t)
    elapsed = time.perf_counter() - start
    rel_c = 0.0
    for rho in (0.3, 0.5):
        s = ClinicalScenario(**REFERENCE, fraction_emergent=0.5, traffic=rho, num_radiologists=2)
        r = derive_rates(s)
        w = models.evaluate(s)
        bf = brute_force_waits(r, True, caps_for(r, True))
        rel_c = max(rel_c, abs(w.W_minus / bf.waits[-1] - 1.0))
        tail = max(tail, bf.tail_mass)
    ok = worst < 1e-5 and tail < 1e-12 and elapsed < 10.0 and rel_c < 0.02
    report(
        3, ok,
        f"A/B/D max error {worst:.2e} min over 15 points in {elapsed:.2f} s (tail {tail:.1e}); "
        f"Model C W_minus within {100 * rel_c:.4f}%",
    )
    assert ok


def test_criterion_4_moment_round_trips(report):
    rng = np.random.default_rng(4)
    u = rng.uniform([-2.0, -2.0, -2.0], [1.7, 1.7, 3.0], size=(10_000, 3))
    m1 = 10 ** u[:, 2]
    n2 = 1 + 10 ** u[:, 0]
    n3 = n2 * (1 + 10 ** u[:, 1])
    worst, failures = 0.0, 0
    for a, b, c in zip(m1, n2, n3):
        triple = (a, b * a**2, c * b * a**3)
        try:
            got = rdr.coxian_moments(rdr.fit_ec(*triple))
        except MomentInfeasibleError:
            failures += 1
            continue
        worst = max(worst, max(abs(g / t - 1.0) for g, t in zip(got, triple)))
    w = models.evaluate(ClinicalScenario(**REFERENCE, fraction_emergent=0.5, traffic=0.8, num_radiologists=2))
    n_ec = (w.fits["B2"].n_ec, w.fits["B5"].n_ec)
    ok = worst < 1e-9 and failures == 0 and n_ec == (3, 3)
    report(4, ok, f"max relative error {worst:.2e} on 10^4 triples ({failures} unfitted); B2/B5 N_EC = {n_ec}")
    assert ok


#: Model settings for the simulation comparison.  Models B to D use an
#: emergent fraction of 0.5; Model D also uses 15-minute non-diseased reads
#: so that it differs from Model B.
SIM_SETTINGS = {
    "A": dict(),
    "B": dict(fraction_emergent=0.5),
    "C": dict(fraction_emergent=0.5, num_radiologists=2),
    "D": dict(fraction_emergent=0.5, read_time_nondiseased=15.0),
}


def test_criterion_5_theory_vs_simulation(report):
    inside, misses, slowest = 0, [], 0.0
    for model, kw in SIM_SETTINGS.items():
        for rho in (0.3, 0.5, 0.8):
            s = ClinicalScenario(**REFERENCE, **kw, traffic=rho)
            analytic = evaluate_scenario(s)[1].delta_W_D
            start = time.perf_counter()
            est = run_study(s, SimConfig())["delta_W_D"]
            slowest = max(slowest, time.perf_counter() - start)
            if est.contains(analytic):
                inside += 1
            else:
                misses.append(f"{model} rho={rho}: {analytic:.2f} vs [{est.lo:.2f}, {est.hi:.2f}]")
    ok = not misses and slowest < 300.0
    detail = f"{inside}/12 analytic dW_D inside the 200x2000 95% CI, slowest {slowest:.1f} s"
    if misses:
        detail += "; outside: " + "; ".join(misses)
    report(5, ok, detail)
    assert ok


def test_criterion_6_expected_magnitudes(report):
    low = delta_d(traffic=0.3)
    high = delta_d(traffic=0.8)
    sp88 = delta_d(traffic=0.8, specificity=0.88)
    s = ClinicalScenario(**{**REFERENCE, "traffic": 0.8, "specificity": 0.88})
    a = binormal_through(0.12, 0.95)
    fpr = np.linspace(0.0, 1.0, 401)
    best = min(p.delta_W_D for p in roc_sweep(s, zip(fpr, binormal_roc(fpr, a))))
    checks = {
        "rho=0.3": (low, -4.0 <= low <= -1.0),
        "rho=0.8": (high, -75.0 <= high <= -45.0),
        "Sp=0.88": (sp88, abs(sp88 + 36.0) <= 4.0),
        "ROC optimum": (best, abs(best + 40.0) <= 5.0),
    }
    ok = all(v[1] for v in checks.values())
    detail = ", ".join(f"{k} {v:.2f} min {'ok' if good else 'OUT OF RANGE'}" for k, (v, good) in checks.items())
    report(6, ok, detail)
    assert ok


def test_criterion_7_structural_orderings(report):
    rhos = (0.3, 0.5, 0.8)
    fewer = all(abs(delta_d(traffic=r)) > abs(delta_d(traffic=r, num_radiologists=2)) for r in rhos)
    slower = all(abs(delta_d(traffic=r, read_time_nondiseased=15.0)) > abs(delta_d(traffic=r)) for r in rhos)
    # emergent fractions are compared in the busy clinic, rho = 0.8
    d0, d5 = delta_d(traffic=0.8), delta_d(traffic=0.8, fraction_emergent=0.5)
    gap = abs(d5 - d0) / abs(d0)
    ok = fewer and slower and gap < 0.2
    report(
        7, ok,
        f"1 rad > 2 rad: {fewer}; mu_ND=15 > mu_ND=10: {slower}; "
        f"f_em 0 vs 0.5 at rho=0.8: {d0:.2f} vs {d5:.2f} ({100 * gap:.1f}% apart)",
    )
    assert ok


def test_criterion_8_corner_exactness(report):
    worst = 0.0
    for kw in (dict(), dict(fraction_emergent=0.5), dict(num_radiologists=2), dict(read_time_nondiseased=15.0)):
        s = ClinicalScenario(**REFERENCE, **kw, traffic=0.8)
        for p in roc_sweep(s, [(0.0, 0.0), (1.0, 1.0)]):
            worst = max(worst, abs(p.delta_W_D))
    ok = worst <= 1e-9
    report(8, ok, f"max |dW_D| at (0,0) and (1,1) = {worst:.1e} min")
    assert ok


def test_criterion_9_conservation(report):
    rng = np.random.default_rng(9)
    worst = 0.0
    for k in range(10):
        s = ClinicalScenario(
            traffic=rng.uniform(0.1, 0.9),
            fraction_emergent=rng.uniform(0.0, 0.8),
            prevalence=rng.uniform(0.02, 0.5),
            sensitivity=rng.uniform(0.5, 0.99),
            specificity=rng.uniform(0.5, 0.99),
            num_radiologists=1 + k % 2,
        )
        r = derive_rates(s)
        w = models.evaluate(s)
        lhs = r.lam_plus * w.W_plus + r.lam_minus * w.W_minus
        worst = max(worst, abs(lhs / (r.lam_nonem * w.W_nonEm) - 1.0))
    ok = worst < 0.005
    report(9, ok, f"max relative imbalance over 10 random points (1 and 2 radiologists) = {100 * worst:.4f}%")
    assert ok


def test_criterion_10_determinism(report):
    s = ClinicalScenario(**REFERENCE, fraction_emergent=0.3, traffic=0.7)
    cfg = SimConfig(n_replications=50, patients_per_replication=1000, seed=20221)
    same_report = run_study(s, cfg).to_json() == run_study(s, cfg).to_json()
    spec = cli.parse_config(
        "mode = both\nsweep.variable = traffic\nsweep.min = 0.3\nsweep.max = 0.8\nsweep.steps = 3\n"
        "sim.replications = 50\nsim.patients = 1000\n"
    )
    outputs = []
    for _ in range(2):
        buf = io.StringIO()
        cli.run(spec, stdout=buf)
        outputs.append(buf.getvalue().encode())
    ok = same_report and outputs[0] == outputs[1]
    report(10, ok, f"SimReport JSON identical: {same_report}; CSV identical: {outputs[0] == outputs[1]}")
    assert ok
