"""Command-line experiment runner.

``gpal run`` executes replicated active-learning runs for one study and
writes ``runs.csv``, ``summary.csv`` and one JSON record per run.
``gpal verify`` recomputes the summary from ``runs.csv`` and compares.

Config files use INI sections::

    [study]
    name = ODE_LINEAR
    sigma2 = 0.04, 0.25, 0.64
    criteria = ACDS, MAXIMIN_ONLY
    replications = 50
    seed = 2024

    [run]
    tol = 0.01
    n_max = 512

Keys under ``[run]`` map onto :class:`gpal.activelearn.RunConfig`; anything
left out falls back to the study's defaults.

Per-run seeds are ``mix(master, study, sigma2 index, criterion, replication)``
where ``mix`` starts from ``splitmix64(master)`` and folds each component in
as ``state = splitmix64(state ^ part)``.  Exit status is 0 on success, 1 on a configuration error and 2
when more than a tenth of the runs aborted.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from gpal.activelearn import Criterion, RunConfig, run_case_study
from gpal.simulators.studies import Study, build_case_study

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
OUT_ENV = "GPAL_OUT"
RUN_COLUMNS = ["study", "sigma2", "criterion", "replication", "seed", "gamma", "l2_beta",
               "n_total", "converged", "iterations", "status"]
SUMMARY_COLUMNS = ["study", "sigma2", "criterion", "runs", "gamma_mean", "gamma_std",
                   "l2_beta_mean", "l2_beta_std", "n_total_mean", "n_total_std"]
ABORT_FRACTION = 0.1
_MASK = (1 << 64) - 1
_RUN_FIELDS = {f.name: f.type for f in fields(RunConfig)}
_STUDY_CODES = {s: i for i, s in enumerate(Study)}
_CRITERION_CODES = {c: i for i, c in enumerate(Criterion)}


class ConfigError(ValueError):
    pass


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def derive_seed(master: int, study: Study, sigma_index: int, criterion: Criterion, replication: int) -> int:
    state = splitmix64(master & _MASK)
    for part in (_STUDY_CODES[study], sigma_index, _CRITERION_CODES[criterion], replication):
        state = splitmix64(state ^ (part & _MASK))
    return state


@dataclass
class StudyConfig:
    study: Study
    sigma2: list[float]
    criteria: list[Criterion]
    replications: int = 1
    seed: int = 0
    run: dict = field(default_factory=dict)
    out: Path = Path("results")

    def __post_init__(self):
        try:
            self.study = Study(str(self.study).upper())
            self.criteria = [Criterion(str(c).upper()) for c in self.criteria]
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if not self.sigma2 or any(not (s >= 0 and math.isfinite(s)) for s in self.sigma2):
            raise ConfigError("every sigma2 must be finite and nonnegative")
        if not self.criteria:
            raise ConfigError("at least one criterion is required")
        unknown = set(self.run) - set(_RUN_FIELDS)
        if unknown:
            raise ConfigError(f"unknown run options: {sorted(unknown)}")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _words(text: str) -> list[str]:
    return text.replace(",", " ").split()


def _coerce(name: str, value: str):
    if name in ("tol",):
        return float(value)
    if name in ("n_max", "batch_size", "n_init", "seed", "gp_starts"):
        return int(value)
    if name == "fixed_n":
        return None if value.strip().lower() in ("", "none") else int(value)
    if name == "normalized_weights":
        return value.strip().lower() in ("1", "true", "yes", "on")
    return value.strip()


def load_config(path: str | os.PathLike | None, args: argparse.Namespace) -> StudyConfig:
    """Read the INI file (if any) and apply command-line overrides."""
    parser = configparser.ConfigParser()
    if path is not None:
        if not parser.read(path):
            raise ConfigError(f"cannot read config file {path}")
    sec = parser["study"] if parser.has_section("study") else {}
    run_opts = dict(parser["run"]) if parser.has_section("run") else {}
    try:
        study = args.study or sec.get("name")
        if study is None:
            raise ConfigError("no study given")
        sigma2 = args.sigma2 if args.sigma2 is not None else _floats(sec.get("sigma2", "0.04"))
        criteria = args.criterion or _words(sec.get("criteria", "ACDS"))
        reps = args.reps if args.reps is not None else int(sec.get("replications", "1"))
        seed = args.seed if args.seed is not None else int(sec.get("seed", "0"))
        run = {k: _coerce(k, v) for k, v in run_opts.items() if k in _RUN_FIELDS}
        bad = set(run_opts) - set(_RUN_FIELDS)
        if bad:
            raise ConfigError(f"unknown run options: {sorted(bad)}")
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.tol is not None:
        run["tol"] = args.tol
    if args.fixed_n is not None:
        run["fixed_n"] = args.fixed_n
    out = args.out or os.environ.get(OUT_ENV) or sec.get("out", "results")
    return StudyConfig(study, sigma2, criteria, reps, seed, run, Path(out))


@dataclass(frozen=True)
class _Job:
    study: Study
    sigma2: float
    sigma_index: int
    criterion: Criterion
    replication: int
    seed: int
    run: dict


def _execute(job: _Job) -> tuple[dict, dict]:
    # Random-coefficient studies draw their system from the run seed too.
    case = build_case_study(job.study, np.random.default_rng(splitmix64(job.seed)))
    opts = {**case.defaults, **job.run, "criterion": job.criterion, "seed": job.seed}
    row = {"study": job.study.value, "sigma2": repr(job.sigma2), "criterion": job.criterion.value,
           "replication": job.replication, "seed": job.seed}
    try:
        rec = run_case_study(case, RunConfig(**opts), job.sigma2)
    except Exception as exc:  # keep the study going
        log.error("run %s failed: %s", row, exc)
        payload = {"schema_version": SCHEMA_VERSION, **row, "status": "aborted", "error": str(exc)}
        row.update(gamma="", l2_beta="", n_total="", converged=False, iterations=0, status="aborted")
        return row, payload
    m = rec.metrics
    row.update(
        gamma=m.gamma if m else "", l2_beta=repr(float(m.l2_beta)) if m else "", n_total=rec.n_total,
        converged=rec.converged, iterations=len(rec.iterations), status=rec.status,
    )
    payload = {"schema_version": SCHEMA_VERSION, **row, "case_info": case.info, "record": rec.to_dict()}
    return row, payload


def summarize(rows: list[dict]) -> list[dict]:
    """Mean and sample standard deviation of gamma, l2 and N per cell,
    over runs that finished."""
    cells: dict[tuple, list[dict]] = {}
    for r in rows:
        cells.setdefault((r["study"], r["sigma2"], r["criterion"]), []).append(r)
    out = []
    for (study, s2, crit), rs in cells.items():
        ok = [r for r in rs if r["status"] == "ok" and r["gamma"] != ""]
        entry = {"study": study, "sigma2": s2, "criterion": crit, "runs": len(ok)}
        for col in ("gamma", "l2_beta", "n_total"):
            vals = np.array([float(r[col]) for r in ok])
            entry[f"{col}_mean"] = repr(float(vals.mean())) if vals.size else ""
            entry[f"{col}_std"] = repr(float(vals.std(ddof=1))) if vals.size > 1 else ""
        out.append(entry)
    return out


def _write_csv(path: Path, columns: list[str], rows: list[dict]):
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({c: r[c] for c in columns})


def run_study(cfg: StudyConfig, parallel: int = 1) -> int:
    """Execute every (sigma2, criterion, replication) cell; returns the exit status."""
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / "runs").mkdir(exist_ok=True)
    jobs = [
        _Job(cfg.study, s2, i, crit, r, derive_seed(cfg.seed, cfg.study, i, crit, r), cfg.run)
        for i, s2 in enumerate(cfg.sigma2) for crit in cfg.criteria for r in range(cfg.replications)
    ]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_execute, jobs))
    else:
        results = [_execute(j) for j in jobs]
    rows = []
    for job, (row, payload) in zip(jobs, results):
        rows.append(row)
        name = f"{job.study.value}_s{job.sigma_index}_{job.criterion.value}_r{job.replication}.json"
        (cfg.out / "runs" / name).write_text(json.dumps(payload, indent=1, sort_keys=True))
    _write_csv(cfg.out / "runs.csv", RUN_COLUMNS, rows)
    _write_csv(cfg.out / "summary.csv", SUMMARY_COLUMNS, summarize(rows))
    aborted = sum(r["status"] != "ok" for r in rows)
    log.info("%d runs, %d aborted; results in %s", len(rows), aborted, cfg.out)
    return 2 if aborted > ABORT_FRACTION * len(rows) else 0


def verify(out: Path, rtol: float = 1e-12) -> bool:
    """Check that summary.csv agrees with statistics recomputed from runs.csv."""
    with open(out / "runs.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    with open(out / "summary.csv", newline="") as fh:
        stored = {(r["study"], r["sigma2"], r["criterion"]): r for r in csv.DictReader(fh)}
    fresh = summarize(rows)
    if len(fresh) != len(stored):
        return False
    for entry in fresh:
        s = stored.get((entry["study"], entry["sigma2"], entry["criterion"]))
        if s is None or int(s["runs"]) != entry["runs"]:
            return False
        for col in SUMMARY_COLUMNS[4:]:
            a, b = s[col], entry[col]
            if (a == "") != (b == ""):
                return False
            if a and not math.isclose(float(a), float(b), rel_tol=rtol, abs_tol=1e-300):
                return False
    return True


class _Parser(argparse.ArgumentParser):
    # Usage mistakes are configuration errors (status 1), not 2.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="gpal", description="GP-assisted active learning of governing equations")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run a replicated study")
    r.add_argument("config", nargs="?", help="INI config file")
    r.add_argument("--study", choices=[s.value for s in Study], type=str.upper)
    r.add_argument("--sigma2", type=float, nargs="+")
    r.add_argument("--criterion", nargs="+", choices=[c.value for c in Criterion], type=str.upper)
    r.add_argument("--reps", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--out", help=f"output directory (else ${OUT_ENV}, else the config, else ./results)")
    r.add_argument("--fixed-n", type=int, dest="fixed_n")
    r.add_argument("--tol", type=float)
    r.add_argument("--parallel", type=int, default=1, metavar="K")
    v = sub.add_parser("verify", help="cross-check summary.csv against runs.csv")
    v.add_argument("out", help="output directory of a previous run")
    return ap


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "verify":
        try:
            ok = verify(Path(args.out))
        except (OSError, KeyError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        print("summary consistent" if ok else "summary MISMATCH")
        return 0 if ok else 2
    try:
        cfg = load_config(args.config, args)
        if args.parallel < 1:
            raise ConfigError("--parallel must be at least 1")
        RunConfig(**{**build_case_study(cfg.study).defaults, **cfg.run})
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return run_study(cfg, args.parallel)


if __name__ == "__main__":
    sys.exit(main())
