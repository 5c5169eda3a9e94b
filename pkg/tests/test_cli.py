import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from triageq import cli
from triageq.cli import ConfigParseError, RunSpec, SweepSpec, format_config, parse_config
from triageq.errors import ValidationError
from triageq.scenario import ClinicalScenario
from triageq.simulator import SimConfig


def run_to_text(spec):
    buf = io.StringIO()
    code = cli.run(spec, stdout=buf)
    return code, buf.getvalue()


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------


def test_minimal_config_uses_defaults():
    spec = parse_config("# nothing but a comment\n\n")
    assert spec == RunSpec()
    assert spec.sim.n_replications == 200
    assert spec.sim.patients_per_replication == 2000
    assert spec.scenario == ClinicalScenario()


def test_full_config():
    text = """
    traffic = 0.7          # busy clinic
    fraction_emergent = 0.25
    read_time_nondiseased_min = 15
    mode = both
    sweep.variable = traffic
    sweep.min = 0.3
    sweep.max = 0.9
    sweep.steps = 13
    sim.seed = 7
    sim.replications = 50
    sim.patients = 800
    output.format = json
    """
    spec = parse_config(text)
    assert spec.scenario.traffic == 0.7
    assert spec.scenario.read_time_nondiseased == 15.0
    assert spec.mode == "both"
    assert spec.sim == SimConfig(n_replications=50, patients_per_replication=800, seed=7)
    assert spec.output_format == "json"
    assert len(spec.points) == 13
    assert spec.points[0] == 0.3 and spec.points[-1] == 0.9
    assert np.allclose(np.diff(spec.points), 0.05)


@pytest.mark.parametrize(
    "text, message",
    [
        ("traffic = 1.2", "traffic must be in (0,1), got 1.2"),
        ("num_radiologists = 3", "num_radiologists"),
        ("colour = blue", "line 1: unknown key 'colour'"),
        ("traffic = 0.5\ntraffic = 0.6", "line 2: traffic given twice"),
        ("traffic 0.5", "line 1: expected 'key = value'"),
        ("traffic = fast", "line 1: traffic"),
        ("mode = fast", "mode must be one of"),
        ("sweep.variable = traffic\nsweep.min = 0.1", "incomplete sweep"),
        ("sweep.variable = traffic\nsweep.min = 0.3\nsweep.max = 1.0\nsweep.steps = 4", "sweep.max for traffic must be in (0,1)"),
        ("sweep.variable = roc\nsweep.min = 0\nsweep.max = 1\nsweep.steps = 1", "sweep.steps must be at least 2"),
        ("sweep.variable = age\nsweep.min = 0\nsweep.max = 1\nsweep.steps = 3", "sweep.variable must be one of"),
        ("output.format = xml", "output.format must be csv or json"),
        ("sim.replications = 0", "n_replications"),
    ],
)
def test_bad_configs_are_rejected(text, message):
    with pytest.raises(ValidationError) as info:
        parse_config(text)
    assert message in str(info.value)


def test_syntax_errors_are_parse_errors():
    with pytest.raises(ConfigParseError):
        parse_config("= 3")


def test_overrides_replace_config_lines():
    text = "traffic = 0.5  # base\nprevalence = 0.2\n"
    spec = parse_config(cli.apply_overrides(text, ["traffic=0.8", "mode = simulate"]))
    assert spec.scenario.traffic == 0.8
    assert spec.scenario.prevalence == 0.2
    assert spec.mode == "simulate"


specs = st.builds(
    RunSpec,
    scenario=st.builds(
        ClinicalScenario,
        traffic=st.floats(0.01, 0.98),
        fraction_emergent=st.floats(0.0, 1.0),
        sensitivity=st.floats(0.0, 1.0),
        num_radiologists=st.sampled_from([1, 2]),
    ),
    mode=st.sampled_from(cli.MODES),
    sweep=st.one_of(
        st.none(),
        st.builds(SweepSpec, st.just("emergency_fraction"), st.floats(0.0, 0.4), st.floats(0.5, 1.0), st.integers(2, 30)),
    ),
    sim=st.builds(SimConfig, st.integers(1, 500), st.integers(1, 5000), st.integers(0, 2**64 - 1)),
    output_path=st.one_of(st.none(), st.just("out/result.csv")),
    output_format=st.sampled_from(cli.FORMATS),
    roc_a=st.one_of(st.none(), st.floats(-3.0, 3.0)),
    roc_b=st.floats(0.1, 3.0),
)


@settings(max_examples=100, deadline=None)
@given(specs)
def test_canonical_config_round_trip(spec):
    assert parse_config(format_config(spec)) == spec


# --------------------------------------------------------------------------
# Running
# --------------------------------------------------------------------------


def test_traffic_sweep_csv():
    spec = parse_config("sweep.variable = traffic\nsweep.min = 0.3\nsweep.max = 0.9\nsweep.steps = 13\n")
    code, text = run_to_text(spec)
    assert code == 0
    lines = text.splitlines()
    assert lines[0] == ",".join(cli.columns_for("analytic"))
    rows = rows_of(text)
    assert len(rows) == 13
    assert float(rows[0]["sweep_value"]) == 0.3
    d = [float(r["delta_W_D"]) for r in rows]
    assert all(b < a for a, b in zip(d, d[1:]))
    assert float(rows[-1]["W_nonEm_without"]) == pytest.approx(90.0, rel=1e-5)


def test_values_use_six_significant_digits():
    code, text = run_to_text(parse_config("traffic = 0.8\n"))
    row = rows_of(text)[0]
    assert row["sweep_value"] == ""
    assert row["W_nonEm_without"] == "40"
    assert row["delta_W_D"] == "-35.7955"


def test_roc_sweep_json_reports_the_curve():
    spec = parse_config(
        "traffic = 0.8\nspecificity = 0.88\nsweep.variable = roc\nsweep.min = 0\nsweep.max = 1\nsweep.steps = 5\noutput.format = json\n"
    )
    code, text = run_to_text(spec)
    assert code == 0
    doc = json.loads(text)
    rows = doc["rows"]
    assert [r["fpr"] for r in rows] == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert rows[0]["delta_W_D"] == 0.0 and rows[-1]["delta_W_D"] == 0.0
    assert "roc-corner" in rows[0]["flags"] and "roc-corner" in rows[-1]["flags"]
    assert all(r["tpr"] >= r["fpr"] for r in rows)


def test_unstable_points_are_flagged_with_exit_two():
    spec = parse_config("sweep.variable = traffic\nsweep.min = 0.9\nsweep.max = 0.995\nsweep.steps = 3\n")
    code, text = run_to_text(spec)
    assert code == 2
    rows = rows_of(text)
    assert rows[0]["flags"] == ""
    assert rows[-1]["flags"] == "error:UnstableSystemError"
    assert rows[-1]["delta_W_D"] == "nan"


def test_uncovered_points_exit_one():
    spec = parse_config("num_radiologists = 2\nread_time_nondiseased_min = 15\n")
    code, text = run_to_text(spec)
    assert code == 1
    assert rows_of(text)[0]["flags"] == "error:ModelNotCoveredError"


def test_both_mode_columns_and_intervals():
    spec = parse_config(
        "mode = both\ntraffic = 0.5\nsweep.variable = emergency_fraction\nsweep.min = 0\nsweep.max = 0.5\n"
        "sweep.steps = 2\nsim.replications = 100\nsim.patients = 2000\n"
    )
    code, text = run_to_text(spec)
    assert code == 0
    assert text.splitlines()[0] == ",".join(cli.ANALYTIC_COLUMNS + cli.SIM_COLUMNS + ["flags"])
    for row in rows_of(text):
        assert float(row["ci_lo"]) <= float(row["delta_W_D"]) <= float(row["ci_hi"])


def test_simulate_mode_has_fixed_columns():
    spec = parse_config("mode = simulate\nsim.replications = 3\nsim.patients = 100\n")
    code, text = run_to_text(spec)
    assert text.splitlines()[0] == "sweep_value,sim_mean_delta_W_D,ci_lo,ci_hi,flags"


def test_main_writes_identical_files(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("mode = both\ntraffic = 0.6\nsim.replications = 20\nsim.patients = 500\n", encoding="utf-8")
    outs = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for out in outs:
        assert cli.main(["--config", str(cfg), "--out", str(out), "--seed", "123"]) == 0
    assert outs[0].read_bytes() == outs[1].read_bytes()
    assert cli.main(["--config", str(cfg), "--out", str(tmp_path / "c.csv"), "--seed", "124"]) == 0
    assert (tmp_path / "c.csv").read_bytes() != outs[0].read_bytes()


def test_main_exit_codes(tmp_path, capsys):
    assert cli.main(["--config", str(tmp_path / "missing.cfg")]) == 3
    assert "cannot read config" in capsys.readouterr().err
    assert cli.main(["--override", "traffic=1.2"]) == 1
    assert "traffic must be in (0,1), got 1.2" in capsys.readouterr().err
    assert cli.main(["--out", str(tmp_path / "no" / "such" / "dir.csv")]) == 3
    assert cli.main(["--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["rows"][0]["model"] == "A"
