"""Experiment runner: seeded parallel sweeps emitting CSV tables.

Every sweep is a list of independent trials. Each trial draws from its own
``RngStream`` keyed by the master seed, the experiment name and the trial
key, and results are reduced in trial order, so output does not depend on
the worker count.

Configuration files hold ``key=value`` lines; repeating a key builds a list.
"""

from __future__ import annotations

import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np

from . import __version__
from .designs import DesignSpec, LdbParams, optimize_m, required_depth
from .equilibration import FuzzyClock, multitime_bound, multitime_lhs, random_setup
from .haar import RngStream
from .nonmarkov import BoundParams, bound_Bk, n1_maxmixed
from .process import ProcessConfig, sample_process
from .weingarten import UnsupportedRegimeError, weingarten_table

WORKERS_ENV = "ARTIFACT_WORKERS"

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2


class ConfigError(click.UsageError):
    """Invalid configuration; exits with status 2."""


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict = field(default_factory=dict)
    master_seed: int = 0
    workers: int = 1
    samples: int | None = None
    output_path: str | None = None

    def get(self, key, default=None, kind=float):
        """Scalar parameter; a repeated key is an error."""
        v = self.params.get(key)
        if v is None:
            return default
        if len(v) != 1:
            raise ConfigError(f"{key} expects a single value")
        return _convert(key, v[0], kind)

    def grid(self, key, default, kind=float) -> list:
        v = self.params.get(key)
        if v is None:
            return list(default)
        out = [_convert(key, x, kind) for x in v]
        if not out:
            raise ConfigError(f"grid {key} is empty")
        return out


def _convert(key, value, kind):
    try:
        return kind(value) if kind is not int else int(float(value))
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc


def parse_config(text: str) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment, repeated keys accumulate."""
    params: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        for item in value.split(","):
            if item.strip():
                params.setdefault(key, []).append(item.strip())
    return params


def format_value(v) -> str:
    """Plain decimal, or scientific for ``|v| < 1e-4`` and ``|v| >= 1e6``."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if not np.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    if v == 0:
        return "0"
    if abs(v) < 1e-4 or abs(v) >= 1e6:
        return f"{v:.12e}"
    return f"{v:.12g}"


def to_csv(columns: list, rows: list) -> str:
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for r in rows:
        buf.write(",".join(format_value(r.get(c)) for c in columns) + "\n")
    return buf.getvalue()


def run_trials(fn, tasks: list, workers: int) -> list:
    """Evaluate ``fn`` on every task, results in task order."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


# ---- nonmarkov-sweep --------------------------------------------------------

def _nonmarkov_trial(task):
    seed, dS, dE, k, i = task
    rng = RngStream.for_trial(seed, "nonmarkov-sweep", (dS, dE, k, i))
    try:
        p = sample_process(ProcessConfig(dS, dE, k, "random", rng=rng))
    except UnsupportedRegimeError as exc:
        return ("refused", str(exc))
    return ("ok", n1_maxmixed(p))


def run_nonmarkov_sweep(cfg: ExperimentConfig) -> tuple:
    """Mean trace distance to the maximally noisy process against its bound.

    Returns ``(columns, rows, violations)``.
    """
    dS = cfg.get("dS", 2, int)
    ks = cfg.grid("k", [1, 2, 3], int)
    dEs = cfg.grid("dE", [2**e for e in range(2, 8)], int)
    points = [(k, dE) for k in ks for dE in dEs]
    counts = {}
    tasks = []
    for k, dE in points:
        n = cfg.samples if cfg.samples is not None else max(40 // k, 1)
        if n < 1:
            raise ConfigError("sample counts must be >= 1")
        counts[(k, dE)] = n
        tasks += [(cfg.master_seed, dS, dE, k, i) for i in range(n)]
    results = iter(run_trials(_nonmarkov_trial, tasks, cfg.workers))
    rows, violations = [], 0
    for k, dE in points:
        n = counts[(k, dE)]
        res = [next(results) for _ in range(n)]
        bound = bound_Bk(BoundParams(dS, dE, k))
        row = dict(experiment="nonmarkov-sweep", dS=dS, k=k, dE=dE, samples=n,
                   bound=bound.value, branch=bound.branch)
        refused = [r[1] for r in res if r[0] == "refused"]
        if refused:
            row.update(status="refused", reason=refused[0].replace(",", ";"))
        else:
            vals = np.array([r[1] for r in res])
            ok = vals.mean() <= bound.value
            violations += not ok
            row.update(mean=vals.mean(), std=vals.std(ddof=1) if n > 1 else 0.0,
                       status="ok" if ok else "violation")
        rows.append(row)
    cols = ["experiment", "dS", "k", "dE", "samples", "mean", "std", "bound", "branch", "status", "reason"]
    return cols, rows, violations


# ---- design-bound and depth-sweep -------------------------------------------

def _design_trial(task):
    dS, k, delta, eps, t, log2_dE = task
    res = optimize_m(LdbParams(dS, 2.0**log2_dE, k, delta), DesignSpec(t, eps))
    return res.m, res.log_bound / np.log(10)


def _design_common(cfg):
    return (cfg.get("dS", 2, int), cfg.get("k", 2, int), cfg.get("delta", 0.1),
            cfg.get("eps", 1e-12), cfg.grid("t", [2, 4, 6, 8, 10], int))


def run_design_bound_sweep(cfg: ExperimentConfig) -> tuple:
    dS, k, delta, eps, ts = _design_common(cfg)
    log2s = cfg.grid("log2_dE", range(35, 61), float)
    tasks = [(dS, k, delta, eps, t, e) for t in ts for e in log2s]
    res = run_trials(_design_trial, tasks, cfg.workers)
    rows = [dict(experiment="design-bound", dS=dS, k=k, delta=delta, eps=eps, t=t, log2_dE=e,
                 m_star=m, log10_bound=lb)
            for (_, _, _, _, t, e), (m, lb) in zip(tasks, res)]
    cols = ["experiment", "dS", "k", "delta", "eps", "t", "log2_dE", "m_star", "log10_bound"]
    return cols, rows, 0


def run_depth_sweep(cfg: ExperimentConfig) -> tuple:
    """Smallest scanned environment meeting the target and the circuit depth.

    ``n_E`` is the environment qubit count and the depth uses ``n_E + 1``
    qubits in total.
    """
    dS, k, delta, eps, ts = _design_common(cfg)
    target = cfg.get("target", 0.01)
    log2s = cfg.grid("log2_dE", range(1, 61), float)
    n_envs = cfg.grid("n_E", range(35, 61), int)
    tasks = [(dS, k, delta, eps, t, e) for t in ts for e in log2s]
    res = iter(run_trials(_design_trial, tasks, cfg.workers))
    rows = []
    for t in ts:
        lbs = [next(res)[1] for _ in log2s]
        hit = [e for e, lb in zip(log2s, lbs) if lb <= np.log10(target)]
        for n_e in n_envs:
            rows.append(dict(experiment="depth-sweep", t=t, eps=eps, target=target, n_E=n_e,
                             min_log2_dE=hit[0] if hit else None,
                             depth=required_depth(t, eps, n_e + 1)))
    cols = ["experiment", "t", "eps", "target", "n_E", "min_log2_dE", "depth"]
    return cols, rows, 0


# ---- equilibration-demo -----------------------------------------------------

def _equilibration_trial(task):
    seed, idx, dS, dE, dG, k, multipliers = task
    rng = RngStream.for_trial(seed, "equilibration-demo", idx)
    setup, gap = random_setup(rng, dS, dE, dG, k)
    out = []
    for mult in multipliers:
        clock = FuzzyClock("uniform", mult / gap, tau=1.0)
        try:
            b = multitime_bound(setup, clock)
            lhs = multitime_lhs(setup, clock)
        except UnsupportedRegimeError as exc:
            out.append(dict(status="refused", reason=str(exc).replace(",", ";"), T_gap=mult))
            continue
        out.append(dict(T_gap=mult, lhs=lhs, A=b.A, sum_B=sum(x[0] for x in b.terms),
                        sum_C=sum(x[1] for x in b.terms), total=b.total,
                        status="ok" if lhs <= b.total else "violation"))
    return out


def run_equilibration_demo(cfg: ExperimentConfig) -> tuple:
    dS = cfg.get("dS", 2, int)
    n_setups = cfg.samples if cfg.samples is not None else cfg.get("setups", 20, int)
    dEs = cfg.grid("dE", [4, 8], int)
    dGs = cfg.grid("dG", [1, 2], int)
    ks = cfg.grid("k", [0, 1, 2], int)
    mults = tuple(cfg.grid("T_gap", [1.0, 10.0, 100.0, 1000.0, 10000.0], float))
    tasks = []
    for i in range(n_setups):
        tasks.append((cfg.master_seed, i, dS, dEs[i % len(dEs)], dGs[(i // len(dEs)) % len(dGs)],
                      ks[i % len(ks)], mults))
    res = run_trials(_equilibration_trial, tasks, cfg.workers)
    rows, violations = [], 0
    for (_, i, _, dE, dG, k, _), trial_rows in zip(tasks, res):
        for r in trial_rows:
            violations += r["status"] == "violation"
            rows.append(dict(experiment="equilibration-demo", setup=i, dS=dS, dE=dE, dG=dG, k=k, **r))
    cols = ["experiment", "setup", "dS", "dE", "dG", "k", "T_gap", "lhs", "A", "sum_B", "sum_C",
            "total", "status", "reason"]
    return cols, rows, violations


# ---- weingarten-dump --------------------------------------------------------

def run_weingarten_dump(cfg: ExperimentConfig) -> tuple:
    ns = cfg.grid("n", [1, 2, 3, 4], int)
    ds = cfg.grid("d", [2, 3, 4, 8], int)
    rows = []
    for n in ns:
        for d in ds:
            base = dict(experiment="weingarten-dump", n=n, d=d)
            if n > 6:
                rows.append(dict(base, status="refused", reason="n > 6 unsupported"))
                continue
            try:
                tab = weingarten_table(n, d)
            except UnsupportedRegimeError as exc:
                rows.append(dict(base, status="refused", reason=str(exc).replace(",", ";")))
                continue
            for ct, val in sorted(tab.by_cycle_type().items(), reverse=True):
                rows.append(dict(base, cycle_type="-".join(map(str, ct)), wg=val,
                                 residual=tab.residual, status="ok"))
    cols = ["experiment", "n", "d", "cycle_type", "wg", "residual", "status", "reason"]
    return cols, rows, 0


RUNNERS = {
    "nonmarkov-sweep": run_nonmarkov_sweep,
    "design-bound": run_design_bound_sweep,
    "depth-sweep": run_depth_sweep,
    "equilibration-demo": run_equilibration_demo,
    "weingarten-dump": run_weingarten_dump,
}


def execute(cfg: ExperimentConfig, config_echo: dict | None = None, workers_env: str | None = None) -> int:
    """Run one experiment, write CSV and sidecar, return the exit status."""
    start = time.perf_counter()
    cols, rows, violations = RUNNERS[cfg.experiment](cfg)
    text = to_csv(cols, rows)
    wall = time.perf_counter() - start
    if cfg.output_path:
        out = Path(cfg.output_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_bytes(text.encode("utf-8"))
        sidecar = dict(experiment=cfg.experiment, config=config_echo or {}, master_seed=cfg.master_seed,
                       workers=cfg.workers, workers_env=workers_env, samples=cfg.samples,
                       version=__version__, wall_time_s=wall, rows=len(rows), violations=violations)
        out.with_name(out.name + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(text)
    return EXIT_VIOLATION if violations else EXIT_OK


def _options(f):
    f = click.option("--out", "out", type=click.Path(dir_okay=False), default=None,
                     help="CSV output path; a .json sidecar is written next to it.")(f)
    f = click.option("--samples", type=int, default=None, help="Override per-point sample counts.")(f)
    f = click.option("--workers", type=int, default=1, show_default=True,
                     help=f"Worker processes; {WORKERS_ENV} overrides.")(f)
    f = click.option("--seed", type=int, default=0, show_default=True, help="Master seed (u64).")(f)
    f = click.option("--config", "config", type=click.Path(exists=True, dir_okay=False), default=None,
                     help="key=value configuration file.")(f)
    return f


def _make_command(name: str):
    @click.command(name=name, help=(RUNNERS[name].__doc__ or name).strip().splitlines()[0])
    @_options
    def cmd(config, seed, workers, samples, out):
        params = parse_config(Path(config).read_text(encoding="utf-8")) if config else {}
        env = os.environ.get(WORKERS_ENV)
        if env is not None:
            try:
                workers = int(env)
            except ValueError as exc:
                raise ConfigError(f"{WORKERS_ENV} must be an integer") from exc
        if workers < 1:
            raise ConfigError("workers must be >= 1")
        if samples is not None and samples < 1:
            raise ConfigError("samples must be >= 1")
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        cfg = ExperimentConfig(name, params, seed, workers, samples, out)
        try:
            status = execute(cfg, params, env)
        except (ValueError, TypeError) as exc:
            if isinstance(exc, click.ClickException):
                raise
            raise ConfigError(str(exc)) from exc
        sys.exit(status)

    return cmd


@click.group()
@click.version_option(__version__)
def main():
    """Seeded experiment sweeps for random processes, designs and equilibration."""


for _name in RUNNERS:
    main.add_command(_make_command(_name))


if __name__ == "__main__":
    main()
