"""Dispatch a resolved configuration to its experiment and persist the results.

Files written to ``output.dir`` (no timestamps, so reruns are byte-identical):

* ``<experiment>_report.csv``: experiment, name, observed, target, tolerance, pass
* ``<experiment>_statistics.csv``: experiment, name, value
* ``<experiment>_<table>.csv``: scans (n, b, one_minus_b, value, scaled_value),
  limit-process dumps (sample_index, u, value) and schedule tables
* ``<experiment>_summary.txt``: verdicts, statistics and the resolved config
* ``resolved_config.toml``
"""

from __future__ import annotations

import warnings
from pathlib import Path

import tomli_w

from ..schedules import OverflowGuard, make_schedule, schedule_csv
from ..stats.experiments import (
    clt_experiment,
    limit_process_check,
    slln_experiment,
    truncated_clt_experiment,
    vervaat_check,
)
from ..stats.lil import lil_experiment
from ..stats.report import ExperimentReport, Verdict
from .config import ExperimentConfig, serialize_config
from .parallel import PoolMapper, resolve_workers


def _schedule_report(cfg: ExperimentConfig, digest: str) -> ExperimentReport:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", OverflowGuard)
        sched = make_schedule(cfg.schedule["kind"], cfg.schedule["n_max"])
    stats = {"kind": sched.kind, "class_tag": sched.class_tag, "n_valid": sched.n_valid, "length": len(sched),
             "truncated_at": sched.truncated_at if sched.truncated_at is not None else 0,
             "overflow_warnings": len(caught)}
    verdicts = []
    for name, rep in sorted(sched.checks.items()):
        stats[f"condition_{name}_final"] = rep.final_value
        stats[f"condition_{name}_n0"] = rep.n0 if rep.n0 is not None else -1
        verdicts.append(Verdict.check(f"condition_{name}", float(rep.passed), 1.0, 0.0, "min"))
    text = schedule_csv(sched)
    lines = text.splitlines()
    rows = [tuple(line.split(",")) for line in lines[1:]]
    return ExperimentReport("schedule", digest, stats, verdicts, cfg.to_dict(),
                            {"values": (tuple(lines[0].split(",")), rows)})


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    digest = cfg.digest()
    p = cfg.params
    if cfg.experiment == "schedule":
        return _schedule_report(cfg, digest)
    with PoolMapper(workers) as mapper:
        if cfg.experiment == "limit-process-check":
            return limit_process_check(p["u_grid"], cfg.n_paths, cfg.seed, Y=p["Y"], delta=p["delta"],
                                       jitter=p["jitter"], rel_tol=p["rel_tol"], dump=p["dump"], mapper=mapper,
                                       digest=digest)
        model, ctrl = cfg.pair_model(), cfg.control()
        if cfg.experiment == "slln":
            return slln_experiment(model, p["b"], cfg.n_paths, cfg.seed, ctrl, rel_tol=p["rel_tol"], mapper=mapper,
                                   digest=digest)
        if cfg.experiment in ("clt-1d", "clt-fidi"):
            return clt_experiment(model, p["b"], p["u"], cfg.n_paths, cfg.seed, ctrl, var_tol=p["var_tol"],
                                  cov_tol=p["cov_tol"], ks_alpha=p["ks_alpha"], mapper=mapper, digest=digest)
        if cfg.experiment == "clt-truncated":
            return truncated_clt_experiment(model, p["b"], cfg.n_paths, cfg.seed, p["M"], var_tol=p["var_tol"],
                                            ks_alpha=p["ks_alpha"], mapper=mapper, digest=digest)
        if cfg.experiment == "vervaat":
            return vervaat_check(model, p["alpha"], cfg.n_paths, cfg.seed, ctrl, rel_tol=p["rel_tol"],
                                 mapper=mapper, digest=digest)
        if cfg.experiment == "lil-scan":
            sched = make_schedule(cfg.schedule["kind"], cfg.schedule["n_max"])
            return lil_experiment(model, sched, cfg.n_paths, cfg.seed, ctrl, rel_tol=p["rel_tol"],
                                  envelope_fraction=p["envelope_fraction"], coverage_min=p["coverage_min"],
                                  mapper=mapper, digest=digest)
    raise ValueError(f"unknown experiment {cfg.experiment!r}")


def write_outputs(cfg: ExperimentConfig, report: ExperimentReport) -> list[Path]:
    out = Path(cfg.output["dir"])
    out.mkdir(parents=True, exist_ok=True)
    name = report.experiment
    files = {f"{name}_report.csv": report.to_csv(), f"{name}_statistics.csv": report.statistics_csv()}
    for table in sorted(report.tables):
        files[f"{name}_{table}.csv"] = report.table_csv(table)
    echo = cfg.to_dict()
    echo.pop("workers")
    echo.pop("output")
    files[f"{name}_summary.txt"] = report.summary() + "\nresolved configuration\n" + tomli_w.dumps(echo)
    files["resolved_config.toml"] = serialize_config(cfg)
    written = []
    for fname, text in files.items():
        path = out / fname
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        written.append(path)
    return written


def run(cfg: ExperimentConfig, workers: int | None = None) -> tuple[ExperimentReport, list[Path]]:
    """Run the experiment and write its files; ``workers`` overrides the environment and config."""
    report = run_experiment(cfg, resolve_workers(workers, cfg.workers))
    return report, write_outputs(cfg, report)
