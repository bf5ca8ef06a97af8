"""Scenario runner and report emitter.

Exit codes: 0 pass, 1 statistical fail, 2 usage or configuration error,
3 numerical degeneracy.  Configuration comes from flags, an optional config
file (key=value lines or JSON; flags override), and the FILTRALAB_SEED
environment variable as a seed fallback.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields

from .errors import ConfigurationError, FiltralabError, NumericalDegeneracyError
from .scenarios import ScenarioConfig, ScenarioResult, run_scenario

__all__ = ["main", "run", "emit_report", "build_config"]

_CSV_HEADER = "scenario,s,t,functional,mean,stderr,z,n_paths,verdict"


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


def _report_rows(result: ScenarioResult) -> list:
    rows = []
    for e in result.report.entries + tuple(result.extra_entries):
        rows.append(
            {
                "scenario": result.name,
                "s": float(e.s),
                "t": float(e.t),
                "functional": e.functional,
                "mean": float(e.mean),
                "stderr": float(e.stderr),
                "z": float(e.z),
                "n_paths": int(e.n_paths),
                "verdict": "pass" if e.passed else "fail",
            }
        )
    return rows


def emit_report(result: ScenarioResult, fmt: str, path: str) -> None:
    """Write the per-entry report; numbers carry 9 significant digits."""
    rows = _report_rows(result)
    if fmt == "csv":
        lines = [_CSV_HEADER]
        for r in rows:
            lines.append(
                ",".join(
                    [
                        r["scenario"],
                        _fmt(r["s"]),
                        _fmt(r["t"]),
                        r["functional"],
                        _fmt(r["mean"]),
                        _fmt(r["stderr"]),
                        _fmt(r["z"]),
                        str(r["n_paths"]),
                        r["verdict"],
                    ]
                )
            )
        text = "\n".join(lines) + "\n"
    else:
        clean = []
        for r in rows:
            r = dict(r)
            for key in ("s", "t", "mean", "stderr", "z"):
                r[key] = float(_fmt(r[key]))
            clean.append(r)
        text = json.dumps(
            {
                "scenario": result.name,
                "verdict": "pass" if result.passed else "fail",
                "vacuous": result.report.vacuous,
                "entries": clean,
            },
            indent=2,
            sort_keys=True,
        ) + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _coerce(name: str, raw):
    kinds = {f.name: f.type for f in fields(ScenarioConfig)}
    if name not in kinds:
        raise ConfigurationError(f"unknown config key {name!r}")
    if name in ("n_paths", "seed", "block_size"):
        return int(raw)
    if name in ("horizon", "dt", "delta", "threshold"):
        return float(raw)
    if name == "no_correction":
        if isinstance(raw, bool):
            return raw
        return str(raw).lower() in ("1", "true", "yes", "on")
    return raw


def _load_config_file(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    stripped = text.lstrip()
    out: dict = {}
    if stripped.startswith("{"):
        for k, v in json.loads(text).items():
            out[k.replace("-", "_")] = v
    else:
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigurationError(f"malformed config line: {line!r}")
            k, v = line.split("=", 1)
            out[k.strip().replace("-", "_")] = v.strip()
    return out


def build_config(argv) -> ScenarioConfig:
    parser = argparse.ArgumentParser(
        prog="filtralab",
        description="Run one enlargement-of-filtration experiment and emit a report.",
    )
    parser.add_argument("--scenario", help="one of: " + ", ".join(sorted(_scenario_names())))
    parser.add_argument("--horizon", type=float)
    parser.add_argument("--dt", type=float)
    parser.add_argument("--n-paths", type=int, dest="n_paths")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--delta", type=float)
    parser.add_argument("--threshold", type=float)
    parser.add_argument("--out", dest="out_path")
    parser.add_argument("--format", choices=("csv", "json"))
    parser.add_argument("--no-correction", action="store_true", default=None)
    parser.add_argument("--config", dest="config_file")
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors already
        raise ConfigurationError("invalid command line") from exc

    settings: dict = {}
    if ns.config_file:
        for k, v in _load_config_file(ns.config_file).items():
            settings[k] = _coerce(k, v)
    for key in (
        "scenario",
        "horizon",
        "dt",
        "n_paths",
        "seed",
        "delta",
        "threshold",
        "out_path",
        "format",
    ):
        val = getattr(ns, key)
        if val is not None:
            settings[key] = val
    if ns.no_correction is not None:
        settings["no_correction"] = True
    if "seed" not in settings and os.environ.get("FILTRALAB_SEED"):
        settings["seed"] = int(os.environ["FILTRALAB_SEED"])
    if "scenario" not in settings:
        raise ConfigurationError("--scenario (or a config file naming one) is required")
    return ScenarioConfig(**settings).validated()


def _scenario_names():
    from .scenarios import SCENARIOS

    return SCENARIOS.keys()


def run(config: ScenarioConfig) -> int:
    """Execute one scenario end to end; returns the process exit code."""
    try:
        config = config.validated()
        result = run_scenario(config)
    except NumericalDegeneracyError as exc:
        print(f"filtralab: numerical degeneracy: {exc}", file=sys.stderr)
        return 3
    except FiltralabError as exc:
        print(f"filtralab: config error: {exc}", file=sys.stderr)
        return 2
    if config.out_path:
        try:
            emit_report(result, config.format, config.out_path)
        except OSError as exc:
            print(f"filtralab: cannot write report: {exc}", file=sys.stderr)
            return 2
    verdict = "PASS" if result.passed else "FAIL"
    n_entries = len(result.report.entries) + len(result.extra_entries)
    tag = " (vacuous)" if result.report.vacuous and not result.extra_entries else ""
    print(
        f"{result.name}: {verdict}{tag} "
        f"[{n_entries} entries, max |z| = {result.report.max_abs_z():.3g}, "
        f"threshold {result.report.per_entry_threshold:.3g}]"
    )
    return 0 if result.passed else 1


def main(argv=None) -> int:
    try:
        config = build_config(sys.argv[1:] if argv is None else argv)
    except (ConfigurationError, FiltralabError, OSError, ValueError) as exc:
        print(f"filtralab: {exc}", file=sys.stderr)
        return 2
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
