"""Command-line front end.

Examples::

    rtxd --preset fig3 --seed 42 --format csv --out fig3.csv
    rtxd --config point.yaml --trials 20000
    rtxd --preset fig2

A config file is a flat YAML mapping. Either it names a ``preset`` or it lists
``Scenario`` fields (snake case) for a custom run, optionally with ``sweep`` and
``values`` to vary one parameter. The short names in ``harness.PARAM_ALIASES``
(``K``, ``p_a``, ``L``, ``R``, ``Lambda``, ``T``, ``U``, ...) are accepted too.
Command-line flags override file values.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass
from typing import Optional

import yaml

from . import __version__, harness, pdma
from .engine import RUN, TRUNCATE

PRESET = "preset"
CUSTOM = "custom"
ANALYTIC = "analytic"

CSV_COLUMNS = (
    "param", "value", "scheme", "mean_frame_len", "stderr_frame_len", "mean_tx_power",
    "stderr_tx_power", "collision_rate", "overflow_rate", "silent_rate", "spectral_eff",
    "truncation_rate",
)
FIG2_COLUMNS = ("L", "psi_L_U", "psi_1_LU", "ratio")

# run-level keys a config file may carry next to the scenario fields
RUN_KEYS = {
    "preset": str,
    "seed": int,
    "trials": int,
    "workers": int,
    "format": str,
    "out": str,
    "termination": str,
    "sweep": str,
    "values": list,
}
SCENARIO_TYPES = {
    "scheme": str,
    "design": str,
    "population": int,
    "access_prob": float,
    "mean_gain": float,
    "levels": int,
    "rate": float,
    "budget": float,
    "drop_prob": float,
    "mean_rx_power": float,
    "margin": float,
    "cap": int,
    "include_empty": bool,
}


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"config key {key!r}: {message}")
        self.key = key


@dataclass
class RunConfig:
    command: str
    preset_name: Optional[str] = None
    scenario: Optional[dict] = None  # Scenario fields for a custom run
    sweep_param: Optional[str] = None
    sweep_values: Optional[list] = None
    output_path: Optional[str] = None
    output_format: str = "csv"
    seed: int = 0
    trials: int = 100_000
    workers: int = 1
    termination: str = RUN

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["version"] = __version__
        return d


def _check_type(key, value, kind):
    if value is None and key == "margin":
        return None
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected true/false, got {value!r}")
        return value
    if isinstance(value, bool):
        raise ConfigError(key, f"expected {kind.__name__}, got {value!r}")
    if kind is int:
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return value
    if kind is float:
        if not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        return float(value)
    if not isinstance(value, kind):
        raise ConfigError(key, f"expected {kind.__name__}, got {value!r}")
    return value


def load_config_file(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("<document>", "expected a key-value mapping")
    return data


def parse_config(doc: dict, flags: Optional[dict] = None) -> RunConfig:
    """Validate a key-value document plus flag overrides into a RunConfig."""
    merged = dict(doc)
    for k, v in (flags or {}).items():
        if v is not None:
            merged[k] = v

    run, scen, written = {}, {}, {}
    for key, value in merged.items():
        if key in RUN_KEYS:
            run[key] = _check_type(key, value, RUN_KEYS[key])
            continue
        name = harness.PARAM_ALIASES.get(key, key)
        if name not in SCENARIO_TYPES:
            raise ConfigError(key, "unknown key")
        if name in scen:
            raise ConfigError(key, f"duplicates {name!r}")
        scen[name] = _check_type(key, value, SCENARIO_TYPES[name])
        written[name] = key

    fmt = run.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError("format", f"expected csv or json, got {fmt!r}")
    workers = run.get("workers", 1)
    if workers < 1:
        raise ConfigError("workers", "must be >= 1")
    trials = run.get("trials", 100_000)
    if trials < 1:
        raise ConfigError("trials", "must be >= 1")
    seed = run.get("seed", 0)
    if not 0 <= seed < 2**64:
        raise ConfigError("seed", "must fit in 64 bits")
    termination = run.get("termination", RUN)
    if termination not in (RUN, TRUNCATE):
        raise ConfigError("termination", f"expected run or truncate, got {termination!r}")

    common = dict(output_path=run.get("out"), output_format=fmt, seed=seed, trials=trials,
                  workers=workers, termination=termination)
    preset = run.get("preset")
    if preset is not None:
        if scen or "sweep" in run or "values" in run:
            key = next(iter(scen), None) or ("sweep" if "sweep" in run else "values")
            raise ConfigError(key, "a preset run takes no scenario fields")
        if preset not in harness.PRESETS:
            raise ConfigError("preset", f"unknown preset {preset!r}")
        command = ANALYTIC if harness.figure_preset(preset).analytic else PRESET
        return RunConfig(command, preset_name=preset, **common)

    if not scen:
        raise ConfigError("preset", "give a preset or at least one scenario field")
    if ("sweep" in run) != ("values" in run):
        raise ConfigError("values" if "sweep" in run else "sweep", "sweep and values go together")
    sweep_param = run.get("sweep")
    if sweep_param is not None:
        field_name = harness.PARAM_ALIASES.get(sweep_param, sweep_param)
        if field_name not in SCENARIO_TYPES:
            raise ConfigError("sweep", f"unknown parameter {sweep_param!r}")
        kind = SCENARIO_TYPES[field_name]
        run["values"] = [_check_type("values", v, kind) for v in run["values"]]
    cfg = RunConfig(CUSTOM, scenario=scen, sweep_param=sweep_param, sweep_values=run.get("values"), **common)
    try:
        sc = build_scenario(cfg)  # surfaces range errors now
    except ConfigError as exc:
        raise ConfigError(written.get(exc.key, exc.key), str(exc.__cause__ or exc)) from exc
    # echo every field, defaults included
    cfg.scenario = {k: getattr(sc, k) for k in SCENARIO_TYPES}
    return cfg


def build_scenario(cfg: RunConfig) -> harness.Scenario:
    kw = dict(cfg.scenario or {})
    kw.update(seed=cfg.seed, trials=cfg.trials, termination=cfg.termination)
    try:
        return harness.Scenario(**kw)
    except ValueError as exc:
        msg = str(exc)
        key = next((k for k in kw if msg.startswith(k) or f" {k}" in msg), None)
        if key is None and "scheme" in msg:
            key = "scheme"
        raise ConfigError(key or "scenario", msg) from exc


# --- output --------------------------------------------------------------------

def fmt_number(x) -> str:
    """Shortest round-trip decimal text for floats, plain digits for ints."""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def stats_row(row: harness.SweepRow) -> dict:
    s = row.stats
    return {
        "param": row.param,
        "value": row.value,
        "scheme": row.scheme,
        "mean_frame_len": s.mean_frame_length,
        "stderr_frame_len": s.stderr_frame_length,
        "mean_tx_power": s.mean_tx_power,
        "stderr_tx_power": s.stderr_tx_power,
        "collision_rate": s.collision_rate,
        "overflow_rate": s.overflow_rate,
        "silent_rate": s.silent_rate,
        "spectral_eff": s.normalized_spectral_efficiency,
        "truncation_rate": s.truncation_rate,
    }


def render_csv(rows: list, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([v if isinstance(v, str) else fmt_number(v) for v in (r[c] for c in columns)])
    return buf.getvalue()


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return fmt_number(v)
    return v


def render_json(cfg: RunConfig, rows: list) -> str:
    doc = {"config": cfg.to_dict(), "rows": [{k: _json_safe(v) for k, v in r.items()} for r in rows]}
    return json.dumps(doc, indent=2) + "\n"


def write_atomic(path: str, text: str) -> None:
    """Write to a temp file in the target directory, then rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".rtxd-", suffix=".tmp", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --- execution -------------------------------------------------------------------

def analytic_bound(scenario: harness.Scenario) -> float:
    """Design frame length: Lambda for the power ladder, T for the rate ladder."""
    if scenario.design == harness.RATE:
        return float(scenario.budget)
    ladder, _ = scenario.power_design()
    return pdma.frame_bound(scenario.rate, ladder.target_sinr)


def _check_design(scenario: harness.Scenario) -> None:
    try:
        if scenario.design == harness.RATE:
            scenario.rate_design()
        else:
            scenario.power_design()
    except (pdma.InvalidDesign, pdma.NumericDomainError) as exc:
        msg = str(exc)
        tag = "rdma" if scenario.design == harness.RATE else "pdma"
        raise pdma.InvalidDesign(msg if msg.startswith(tag) else f"{tag}: {msg}") from exc


def summary_lines(cfg: RunConfig, rows: list, scenarios: dict) -> list:
    if cfg.command == ANALYTIC:
        lo = min(r["ratio"] for r in rows)
        return [f"fig2: psi_L(U)/psi_1(LU) over L = 1..{len(rows)}, minimum ratio {lo:.4f}"]
    head = cfg.preset_name or "custom"
    out = [f"{head}: seed {cfg.seed}, {cfg.trials} trials per point, termination {cfg.termination}"]
    for r in rows:
        sc = scenarios[(r["scheme"], r["param"], r["value"])]
        where = f"{r['param']}={r['value']:.6g}" if r["param"] else f"K={sc.population} p_a={sc.access_prob:g} L={sc.levels}"
        out.append(
            f"  {r['scheme']:<20s} {where:<14s} frame {r['mean_frame_len']:.4g} ± {r['stderr_frame_len']:.2g}"
            f" (bound {analytic_bound(sc):.6g})  power {r['mean_tx_power']:.4g} ± {r['stderr_tx_power']:.2g}"
            f"  collision {r['collision_rate']:.3f}  SE {r['spectral_eff']:.4g}"
        )
    return out


def execute(cfg: RunConfig, stream=None) -> int:
    stream = stream or sys.stdout
    scenarios = {}
    if cfg.command == ANALYTIC:
        rows = harness.fig2_table()
        columns = FIG2_COLUMNS
    else:
        if cfg.command == PRESET:
            sweeps = harness.figure_preset(cfg.preset_name, cfg.trials, cfg.seed, cfg.termination).sweeps
        else:
            base = build_scenario(cfg)
            if cfg.sweep_param:
                sweeps = (harness.Sweep(base, cfg.sweep_param, tuple(cfg.sweep_values)),)
            else:
                sweeps = (harness.Sweep(base, "", (None,)),)
        plan = []
        for sw in sweeps:
            for v in sw.values:
                sc = sw.scenario if v is None else sw.scenario.with_param(sw.param, v)
                _check_design(sc)
                plan.append((sw.param, v, sc))
        rows = []
        for param, v, sc in plan:
            row = stats_row(harness.SweepRow(param, v if v is not None else "", sc.scheme,
                                             harness.run_scenario(sc, cfg.workers)))
            rows.append(row)
            scenarios[(sc.scheme, param, row["value"])] = sc
        columns = CSV_COLUMNS

    text = render_csv(rows, columns) if cfg.output_format == "csv" else render_json(cfg, rows)
    summary = "\n".join(summary_lines(cfg, rows, scenarios)) + "\n"
    if cfg.output_path:
        write_atomic(cfg.output_path, text)
        stream.write(summary)
        stream.write(f"wrote {cfg.output_path}\n")
    else:
        stream.write(text)
        sys.stderr.write(summary)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="rtxd",
        description="Monte Carlo and analytic tables for PDMA/RDMA with HARQ-IR and SIC.",
    )
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=harness.PRESETS, help="named figure preset")
    src.add_argument("--config", metavar="PATH", help="YAML key-value run configuration")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--trials", type=int, help="trials per sweep point (default 100000)")
    p.add_argument("--workers", type=int, help="worker processes (default 1)")
    p.add_argument("--format", choices=("csv", "json"), help="output format (default csv)")
    p.add_argument("--out", metavar="PATH", help="output file; stdout when omitted")
    p.add_argument("--termination", choices=(RUN, TRUNCATE), help="run to completion or truncate at the budget")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    args = parser.parse_args(argv)
    flags = {k: getattr(args, k) for k in ("preset", "seed", "trials", "workers", "format", "out", "termination")}
    try:
        doc = load_config_file(args.config) if args.config else {}
        cfg = parse_config(doc, flags)
    except ConfigError as exc:
        print(f"rtxd: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, yaml.YAMLError) as exc:
        print(f"rtxd: error: cannot read config: {exc}", file=sys.stderr)
        return 1
    try:
        return execute(cfg)
    except ConfigError as exc:
        print(f"rtxd: error: {exc}", file=sys.stderr)
        return 2
    except pdma.InvalidDesign as exc:
        print(f"rtxd: invalid design: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"rtxd: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
