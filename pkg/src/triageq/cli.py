"""Batch front end: read a flat ``key = value`` config, run it, write CSV or JSON.

Config keys (all optional; ``#`` starts a comment)::

    fraction_emergent, prevalence, traffic, num_radiologists,
    read_time_emergent_min, read_time_diseased_min, read_time_nondiseased_min,
    sensitivity, specificity,
    mode                 analytic | simulate | both
    sweep.variable       traffic | prevalence | emergency_fraction | roc
    sweep.min, sweep.max, sweep.steps
    roc.a, roc.b         binormal curve for the roc sweep (FPR is swept)
    sim.seed, sim.replications, sim.patients
    output.path, output.format (csv | json)

Exit codes: 0 success, 1 invalid input, 2 numerical failure at some point,
3 input/output error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import metrics
from .errors import ModelNotCoveredError, NumericalError, TriageQueueError, ValidationError
from .scenario import ClinicalScenario
from .simulator import SimConfig, run_study

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3

MODES = ("analytic", "simulate", "both")
FORMATS = ("csv", "json")

#: Config key -> ClinicalScenario field.
SCENARIO_KEYS = {
    "fraction_emergent": "fraction_emergent",
    "prevalence": "prevalence",
    "traffic": "traffic",
    "read_time_emergent_min": "read_time_emergent",
    "read_time_diseased_min": "read_time_diseased",
    "read_time_nondiseased_min": "read_time_nondiseased",
    "num_radiologists": "num_radiologists",
    "sensitivity": "sensitivity",
    "specificity": "specificity",
}

#: Sweep variable -> (scenario field, closed lower bound?, closed upper bound?).
SWEEP_DOMAINS = {
    "traffic": ("traffic", False, False),
    "prevalence": ("prevalence", False, False),
    "emergency_fraction": ("fraction_emergent", True, True),
    "roc": (None, True, True),
}

ANALYTIC_COLUMNS = ["sweep_value", "W_nonEm_without", "W_plus", "W_minus", "W_D_with", "delta_W_D", "delta_W_ND"]
SIM_COLUMNS = ["sim_mean_delta_W_D", "ci_lo", "ci_hi"]


class ConfigParseError(ValidationError):
    """Malformed config text."""


@dataclass(frozen=True)
class SweepSpec:
    variable: str
    min: float
    max: float
    steps: int

    def __post_init__(self):
        if self.variable not in SWEEP_DOMAINS:
            raise ValidationError(f"sweep.variable must be one of {', '.join(SWEEP_DOMAINS)}, got {self.variable!r}")
        if self.steps < 2:
            raise ValidationError(f"sweep.steps must be at least 2, got {self.steps}")
        _, lo_closed, hi_closed = SWEEP_DOMAINS[self.variable]
        for name, v in (("sweep.min", self.min), ("sweep.max", self.max)):
            bad = (v < 0.0 if lo_closed else v <= 0.0) or (v > 1.0 if hi_closed else v >= 1.0)
            if bad or math.isnan(v):
                bounds = ("[" if lo_closed else "(") + "0,1" + ("]" if hi_closed else ")")
                raise ValidationError(f"{name} for {self.variable} must be in {bounds}, got {v!r}")
        if self.min > self.max:
            raise ValidationError("sweep.min must not exceed sweep.max")

    def values(self) -> np.ndarray:
        return np.linspace(self.min, self.max, self.steps)


@dataclass(frozen=True)
class RunSpec:
    """A validated run: scenario, mode, optional sweep, simulation size and output."""

    scenario: ClinicalScenario = field(default_factory=ClinicalScenario)
    mode: str = "analytic"
    sweep: SweepSpec | None = None
    sim: SimConfig = field(default_factory=SimConfig)
    output_path: str | None = None
    output_format: str = "csv"
    roc_a: float | None = None
    roc_b: float = 1.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {', '.join(MODES)}, got {self.mode!r}")
        if self.output_format not in FORMATS:
            raise ValidationError(f"output.format must be csv or json, got {self.output_format!r}")
        if not self.roc_b > 0.0:
            raise ValidationError(f"roc.b must be positive, got {self.roc_b!r}")

    @property
    def points(self) -> list:
        return [None] if self.sweep is None else [float(v) for v in self.sweep.values()]

    def roc_intercept(self) -> float:
        """Binormal intercept: ``roc.a`` if given, else the curve through the scenario's own operating point."""
        if self.roc_a is not None:
            return self.roc_a
        s = self.scenario
        return metrics.binormal_through(1.0 - s.specificity, s.sensitivity, self.roc_b)


def _number(key, text, lineno, kind=float):
    try:
        value = kind(text)
    except ValueError:
        raise ConfigParseError(f"line {lineno}: {key} expects {'an integer' if kind is int else 'a number'}, got {text!r}")
    return value


def _wrap(exc: Exception) -> ValidationError:
    if isinstance(exc, ValidationError):
        return exc
    return ValidationError(str(exc))


def parse_config(text: str) -> RunSpec:
    """Parse and validate config text; unknown or repeated keys are errors."""
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigParseError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if key in seen:
            raise ConfigParseError(f"line {lineno}: {key} given twice (first on line {seen[key][0]})")
        seen[key] = (lineno, value)
    return _build_spec(seen)


_INT_KEYS = {"num_radiologists", "sweep.steps", "sim.seed", "sim.replications", "sim.patients"}
_OTHER_KEYS = {
    "mode", "sweep.variable", "sweep.min", "sweep.max", "sweep.steps", "roc.a", "roc.b",
    "sim.seed", "sim.replications", "sim.patients", "output.path", "output.format",
}


def _build_spec(entries: dict) -> RunSpec:
    unknown = sorted(set(entries) - set(SCENARIO_KEYS) - _OTHER_KEYS)
    if unknown:
        lineno = entries[unknown[0]][0]
        raise ConfigParseError(f"line {lineno}: unknown key {unknown[0]!r}")
    values = {}
    for key, (lineno, text) in entries.items():
        if key in _INT_KEYS:
            values[key] = _number(key, text, lineno, int)
        elif key in SCENARIO_KEYS or key in ("sweep.min", "sweep.max", "roc.a", "roc.b"):
            values[key] = _number(key, text, lineno)
        else:
            values[key] = text
    try:
        scenario = ClinicalScenario(**{SCENARIO_KEYS[k]: v for k, v in values.items() if k in SCENARIO_KEYS})
        sweep_keys = [k for k in ("sweep.variable", "sweep.min", "sweep.max", "sweep.steps") if k in values]
        sweep = None
        if sweep_keys:
            missing = [k for k in ("sweep.variable", "sweep.min", "sweep.max", "sweep.steps") if k not in values]
            if missing:
                raise ValidationError(f"incomplete sweep: missing {', '.join(missing)}")
            sweep = SweepSpec(values["sweep.variable"], values["sweep.min"], values["sweep.max"], values["sweep.steps"])
        defaults = SimConfig()
        sim = SimConfig(
            n_replications=values.get("sim.replications", defaults.n_replications),
            patients_per_replication=values.get("sim.patients", defaults.patients_per_replication),
            seed=values.get("sim.seed", defaults.seed),
        )
        return RunSpec(
            scenario=scenario,
            mode=values.get("mode", "analytic"),
            sweep=sweep,
            sim=sim,
            output_path=values.get("output.path"),
            output_format=values.get("output.format", "csv"),
            roc_a=values.get("roc.a"),
            roc_b=values.get("roc.b", 1.0),
        )
    except (ValidationError, ValueError) as exc:
        raise _wrap(exc) from None


def format_config(spec: RunSpec) -> str:
    """Canonical config text; ``parse_config(format_config(spec)) == spec``."""
    lines = [f"{key} = {getattr(spec.scenario, attr)!r}" for key, attr in SCENARIO_KEYS.items()]
    lines.append(f"mode = {spec.mode}")
    if spec.sweep is not None:
        lines += [
            f"sweep.variable = {spec.sweep.variable}",
            f"sweep.min = {spec.sweep.min!r}",
            f"sweep.max = {spec.sweep.max!r}",
            f"sweep.steps = {spec.sweep.steps}",
        ]
    if spec.roc_a is not None:
        lines.append(f"roc.a = {spec.roc_a!r}")
    lines.append(f"roc.b = {spec.roc_b!r}")
    lines += [
        f"sim.seed = {spec.sim.seed}",
        f"sim.replications = {spec.sim.n_replications}",
        f"sim.patients = {spec.sim.patients_per_replication}",
    ]
    if spec.output_path is not None:
        lines.append(f"output.path = {spec.output_path}")
    lines.append(f"output.format = {spec.output_format}")
    return "\n".join(lines) + "\n"


def apply_overrides(text: str, overrides) -> str:
    """Append ``key=value`` overrides, replacing earlier lines for the same key."""
    if not overrides:
        return text
    keys = set()
    for item in overrides:
        if "=" not in item:
            raise ConfigParseError(f"--override expects key=value, got {item!r}")
        keys.add(item.split("=", 1)[0].strip())
    kept = []
    for raw in text.splitlines():
        body = raw.split("#", 1)[0]
        if "=" in body and body.split("=", 1)[0].strip() in keys:
            continue
        kept.append(raw)
    return "\n".join(kept + list(overrides)) + "\n"


# --------------------------------------------------------------------------
# Running
# --------------------------------------------------------------------------


def _point_scenario(spec: RunSpec, value):
    """Scenario at one sweep value, with the extra record fields for that point."""
    s = spec.scenario
    if value is None:
        return s, {}
    field_name = SWEEP_DOMAINS[spec.sweep.variable][0]
    if field_name is not None:
        return s.with_changes(**{field_name: value}), {}
    tpr = float(metrics.binormal_roc(value, spec.roc_intercept(), spec.roc_b))
    return s.with_changes(sensitivity=tpr, specificity=1.0 - value), {"fpr": value, "tpr": tpr}


def evaluate_point(spec: RunSpec, value) -> dict:
    """One output record; failures become NaN values with an ``error:...`` flag."""
    record = {"sweep_value": value}
    flags = set()
    try:
        s, extra = _point_scenario(spec, value)
    except ValidationError as exc:
        flags.add(f"error:{type(exc).__name__}")
        record.update({c: math.nan for c in ANALYTIC_COLUMNS[1:] + SIM_COLUMNS})
        record["flags"] = sorted(flags)
        record["error"] = str(exc)
        return record
    record.update(extra)
    if extra and (extra["fpr"], extra["tpr"]) in ((0.0, 0.0), (1.0, 1.0)):
        flags.add("roc-corner")
    if spec.mode in ("analytic", "both"):
        try:
            waits, rep = metrics.evaluate_scenario(s)
            record.update(
                W_nonEm_without=waits.W_nonEm, W_plus=waits.W_plus, W_minus=waits.W_minus,
                W_D_with=rep.W_D_with, delta_W_D=rep.delta_W_D, delta_W_ND=rep.delta_W_ND,
                model=waits.model.value,
            )
            flags.update(waits.flags)
        except TriageQueueError as exc:
            record.update({c: math.nan for c in ANALYTIC_COLUMNS[1:]})
            flags.add(f"error:{type(exc).__name__}")
            record["error"] = str(exc)
    if spec.mode in ("simulate", "both"):
        est = run_study(s, spec.sim)["delta_W_D"]
        record.update(sim_mean_delta_W_D=est.mean, ci_lo=est.lo, ci_hi=est.hi)
    record["flags"] = sorted(flags)
    return record


def columns_for(mode: str) -> list:
    """Fixed CSV column order of a mode."""
    if mode == "analytic":
        return ANALYTIC_COLUMNS + ["flags"]
    if mode == "both":
        return ANALYTIC_COLUMNS + SIM_COLUMNS + ["flags"]
    return ["sweep_value"] + SIM_COLUMNS + ["flags"]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (list, tuple)):
        return ";".join(v)
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def to_csv(records, mode: str) -> str:
    cols = columns_for(mode)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for rec in records:
        writer.writerow([_fmt(rec.get(c)) for c in cols])
    return buf.getvalue()


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return v


def to_json(records, spec: RunSpec) -> str:
    doc = {
        "scenario": asdict(spec.scenario),
        "mode": spec.mode,
        "sweep": None if spec.sweep is None else asdict(spec.sweep),
        "sim": asdict(spec.sim) if spec.mode != "analytic" else None,
        "rows": records,
    }
    return json.dumps(_json_safe(doc), sort_keys=True, indent=1) + "\n"


def run(spec: RunSpec, stdout=None) -> int:
    """Evaluate every point of ``spec`` and write the output; returns the exit code."""
    records = [evaluate_point(spec, v) for v in spec.points]
    text = to_json(records, spec) if spec.output_format == "json" else to_csv(records, spec.mode)
    if spec.output_path is None:
        (stdout or sys.stdout).write(text)
    else:
        with open(spec.output_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    errors = [f for rec in records for f in rec["flags"] if f.startswith("error:")]
    if not errors:
        return EXIT_OK
    numeric = {cls.__name__ for cls in _subclasses(NumericalError)}
    if any(f.split(":", 1)[1] in numeric for f in errors):
        return EXIT_NUMERIC
    return EXIT_VALIDATION


def _subclasses(cls):
    out = {cls}
    for sub in cls.__subclasses__():
        out |= _subclasses(sub)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="triageq", description="Wait-time effect of an AI triage device on a radiology reading queue.")
    p.add_argument("--config", help="path of a key = value config file (defaults apply when omitted)")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE", help="set a config key; repeatable")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", choices=FORMATS, help="output format")
    p.add_argument("--seed", type=int, help="simulation seed (unsigned 64-bit)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = ""
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        spec = parse_config(apply_overrides(text, args.override))
        if args.out is not None:
            spec = replace(spec, output_path=args.out)
        if args.format is not None:
            spec = replace(spec, output_format=args.format)
        if args.seed is not None:
            spec = replace(spec, sim=replace(spec.sim, seed=args.seed))
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return run(spec)
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    except ModelNotCoveredError as exc:  # pragma: no cover - per-point errors are caught in run
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
