"""Batch experiments: sweep solver x block size x seed and persist traces.

Configs are INI files::

    [experiment]
    schema_version = 1
    name = ls_small            ; prefix of every output file
    solvers = ibcn, bcd1, bcd2
    block_sizes = 1, 10, 50
    seeds = 0, 1, 2
    max_iters = 2000
    out_dir = runs             ; relative to the config file

    [problem]
    type = sparse_ls           ; or logreg
    m = 100
    n = 1000
    density = 0.05
    noise_sd = 1e-3
    lam = 1e-3
    omega = 1e-2
    p = 0.5

For ``type = logreg`` the data come from ``dataset = <libsvm path>`` or
``synthetic = madelon_like`` (with optional ``data_seed``, ``m``, ``n``);
``scale = -1, 1`` rescales every feature and ``lam`` is the l2 weight.

An optional ``[solver]`` section overrides IBCN parameters (``sigma0``,
``sigma_min``, ``eta1``, ``eta2``, ``gamma1``, ``gamma2``, ``gamma3``,
``tau``, ``beta``, ``grad_tol``, ``refresh_every``).

Every run starts from ``x = 0``. Synthetic least-squares instances are drawn
per seed; a dataset instance is shared by all seeds, which then only drive
the random part of the block selection.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import functools
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import run_baseline
from .data_io import (
    DataError,
    Trace,
    TraceError,
    TRACE_COLUMNS,
    load_libsvm,
    make_madelon_like,
    read_trace,
    scale_features,
    write_trace,
)
from .problems import LogRegInstance, generate_sparse_ls
from .selection import SelectionRule
from .solver import SolverConfig, config_hash, run

SCHEMA_VERSION = 1
SOLVERS = ("ibcn", "bcd1", "bcd2")
SOLVER_OVERRIDES = {
    "sigma0": float, "sigma_min": float, "eta1": float, "eta2": float,
    "gamma1": float, "gamma2": float, "gamma3": float, "tau": float,
    "beta": float, "grad_tol": float, "refresh_every": int,
}
SPARSE_LS_KEYS = {"m": int, "n": int, "density": float, "noise_sd": float,
                  "lam": float, "omega": float, "p": float}
SUMMARY_COLUMNS = ("problem", "solver", "q", "seed", "iters", "final_f", "f_star",
                   "final_gap", "final_gnorm", "time_s", "trace")


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    problem: dict
    solvers: tuple
    block_sizes: tuple
    seeds: tuple
    max_iters: int
    overrides: dict = field(default_factory=dict)
    out_dir: str = "runs"
    base_dir: str = "."

    def solver_config(self, q: int, seed: int) -> SolverConfig:
        return SolverConfig(max_iters=self.max_iters, selection=SelectionRule("max_abs_fill", q=q),
                            seed=seed, **self.overrides)

    def runs(self):
        for seed in self.seeds:
            for q in self.block_sizes:
                for solver in self.solvers:
                    yield solver, q, seed

    def instance_key(self, seed: int):
        """Runs with equal keys share a problem instance, hence one ``f*``."""
        return seed if self.problem["type"] == "sparse_ls" else None

    def trace_name(self, solver: str, q: int, seed: int) -> str:
        return f"{self.name}_{solver}_q{q}_s{seed}.csv"


def _list(raw: str, conv, key: str) -> tuple:
    items = [t for t in raw.replace(",", " ").split() if t]
    try:
        return tuple(conv(t) for t in items)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None


def _get(section, key: str, conv, default=None, where=""):
    if key not in section:
        if default is None:
            raise ConfigError(f"{where}{key}: required field is missing")
        return default
    try:
        return conv(section[key])
    except ValueError:
        raise ConfigError(f"{where}{key}: cannot parse {section[key]!r}") from None


def parse_config(text: str, base_dir: str = ".") -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"syntax: {exc}") from None
    for sec in ("experiment", "problem"):
        if not cp.has_section(sec):
            raise ConfigError(f"[{sec}]: section is missing")
    unknown = set(cp.sections()) - {"experiment", "problem", "solver"}
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")

    ex = cp["experiment"]
    version = _get(ex, "schema_version", int, where="experiment.")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"experiment.schema_version: expected {SCHEMA_VERSION}, got {version}")
    solvers = _list(ex.get("solvers", ""), str, "experiment.solvers")
    block_sizes = _list(ex.get("block_sizes", ""), int, "experiment.block_sizes")
    seeds = _list(ex.get("seeds", ""), int, "experiment.seeds")
    for key, vals in (("solvers", solvers), ("block_sizes", block_sizes), ("seeds", seeds)):
        if not vals:
            raise ConfigError(f"experiment.{key}: must be a non-empty list")
    bad = [s for s in solvers if s not in SOLVERS]
    if bad:
        raise ConfigError(f"experiment.solvers: unknown solver(s) {bad}; choose from {list(SOLVERS)}")
    if any(q < 1 for q in block_sizes):
        raise ConfigError("experiment.block_sizes: block sizes must be >= 1")
    if any(s < 0 for s in seeds):
        raise ConfigError("experiment.seeds: seeds must be >= 0")
    max_iters = _get(ex, "max_iters", int, where="experiment.")
    if max_iters < 0:
        raise ConfigError("experiment.max_iters: must be >= 0")

    pr = cp["problem"]
    ptype = pr.get("type", "")
    problem = {"type": ptype}
    if ptype == "sparse_ls":
        defaults = {"density": 0.05, "noise_sd": 1e-3, "lam": 1e-3, "omega": 1e-2, "p": 0.5}
        for key, conv in SPARSE_LS_KEYS.items():
            problem[key] = _get(pr, key, conv, defaults.get(key), where="problem.")
        if problem["m"] < 1 or problem["n"] < 1:
            raise ConfigError("problem.m, problem.n: must be positive")
        if not 0 < problem["density"] <= 1:
            raise ConfigError("problem.density: must lie in (0, 1]")
        if problem["omega"] <= 0 or not 0 < problem["p"] < 1 or problem["lam"] < 0:
            raise ConfigError("problem.omega/p/lam: need omega > 0, 0 < p < 1, lam >= 0")
        n = problem["n"]
    elif ptype == "logreg":
        problem["lam"] = _get(pr, "lam", float, 1e-3, where="problem.")
        if problem["lam"] < 0:
            raise ConfigError("problem.lam: must be >= 0")
        if ("dataset" in pr) == ("synthetic" in pr):
            raise ConfigError("problem.dataset: give exactly one of 'dataset' or 'synthetic'")
        if "dataset" in pr:
            path = pr["dataset"]
            problem["dataset"] = path if os.path.isabs(path) else os.path.join(base_dir, path)
            n = None
        else:
            if pr["synthetic"] != "madelon_like":
                raise ConfigError(f"problem.synthetic: unknown generator {pr['synthetic']!r}")
            problem["synthetic"] = "madelon_like"
            problem["data_seed"] = _get(pr, "data_seed", int, 0, where="problem.")
            problem["m"] = _get(pr, "m", int, 2000, where="problem.")
            problem["n"] = _get(pr, "n", int, 500, where="problem.")
            n = problem["n"] + 1
        if "scale" in pr:
            lo_hi = _list(pr["scale"], float, "problem.scale")
            if len(lo_hi) != 2 or not lo_hi[0] < lo_hi[1]:
                raise ConfigError("problem.scale: expected 'lo, hi' with lo < hi")
            problem["scale"] = lo_hi
    else:
        raise ConfigError(f"problem.type: expected 'sparse_ls' or 'logreg', got {ptype!r}")
    if n is not None and max(block_sizes) > n:
        raise ConfigError(f"experiment.block_sizes: {max(block_sizes)} exceeds the problem dimension {n}")

    overrides = {}
    if cp.has_section("solver"):
        for key, raw in cp["solver"].items():
            if key not in SOLVER_OVERRIDES:
                raise ConfigError(f"solver.{key}: unknown parameter")
            overrides[key] = _get(cp["solver"], key, SOLVER_OVERRIDES[key], where="solver.")
    cfg = ExperimentConfig(
        name=ex.get("name", ptype), problem=problem, solvers=solvers, block_sizes=block_sizes,
        seeds=seeds, max_iters=max_iters, overrides=overrides,
        out_dir=ex.get("out_dir", "runs"), base_dir=base_dir,
    )
    try:
        cfg.solver_config(block_sizes[0], seeds[0])
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from None
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)))


def _freeze(problem: dict) -> tuple:
    return tuple(sorted(problem.items()))


@functools.lru_cache(maxsize=8)
def _build_problem(frozen: tuple, seed):
    spec = dict(frozen)
    if spec["type"] == "sparse_ls":
        inst, _ = generate_sparse_ls(spec["m"], spec["n"], spec["density"], spec["noise_sd"],
                                     seed=[seed, 0], lam=spec["lam"], omega=spec["omega"], p=spec["p"])
        return inst
    if "dataset" in spec:
        ds = load_libsvm(spec["dataset"])
    else:
        ds = make_madelon_like(spec["data_seed"], spec["m"], spec["n"])
    if "scale" in spec:
        ds = scale_features(ds, *spec["scale"])
    if len(set(ds.labels.tolist())) != 2 or not np.all(np.isin(ds.labels, (-1.0, 1.0))):
        raise DataError(f"{spec.get('dataset', 'dataset')}: logistic regression needs two classes")
    return LogRegInstance.from_dataset(ds, spec["lam"])


def build_problem(cfg: ExperimentConfig, seed: int):
    return _build_problem(_freeze(cfg.problem), cfg.instance_key(seed))


def _run_one(cfg: ExperimentConfig, solver: str, q: int, seed: int, out_dir: str) -> tuple:
    problem = build_problem(cfg, seed)
    if q > problem.n:
        raise ConfigError(f"experiment.block_sizes: {q} exceeds the problem dimension {problem.n}")
    scfg = cfg.solver_config(q, seed)
    x0 = np.zeros(problem.n)
    if solver == "ibcn":
        trace = run(problem, x0, scfg, problem_id=cfg.name)
    else:
        trace = run_baseline(problem, x0, scfg, solver, problem_id=cfg.name)
    trace.meta["config_sha"] = config_hash(scfg, solver=solver, problem=_freeze(cfg.problem))
    path = os.path.join(out_dir, cfg.trace_name(solver, q, seed))
    write_trace(trace, path)
    time_s = trace.records[-1].time_s if trace.records else 0.0
    return solver, q, seed, path, len(trace), trace.final_f, trace.final_gnorm, time_s


def resolve_out_dir(cfg: ExperimentConfig, out_dir=None) -> str:
    out = out_dir or cfg.out_dir
    return out if os.path.isabs(out) else os.path.join(cfg.base_dir, out)


def run_experiment(cfg: ExperimentConfig, out_dir=None, workers: int = 1) -> list:
    """Run every (solver, q, seed) triple and return the trace paths.

    ``f*`` of each instance is the lowest final objective among its runs; it
    is written to every trace's metadata and to ``summary.csv``.
    """
    out = resolve_out_dir(cfg, out_dir)
    os.makedirs(out, exist_ok=True)
    jobs = list(cfg.runs())
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_one, cfg, s, q, seed, out) for s, q, seed in jobs]
            results = [f.result() for f in futures]
    else:
        results = [_run_one(cfg, s, q, seed, out) for s, q, seed in jobs]

    f_star = {}
    for solver, q, seed, path, iters, f, g, t in results:
        key = cfg.instance_key(seed)
        f_star[key] = min(f, f_star.get(key, np.inf))

    rows = []
    for solver, q, seed, path, iters, f, g, t in results:
        fs = f_star[cfg.instance_key(seed)]
        with open(path + ".meta", "a") as fh:
            fh.write(f"f_star={fs!r}\n")
        rows.append((cfg.name, solver, q, seed, iters, repr(f), repr(fs), repr(f - fs), repr(g),
                     f"{t:.6f}", os.path.basename(path)))
    with open(os.path.join(out, "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        w.writerows(rows)
    return [r[3] for r in results]


def read_summary(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def average_traces(paths, output=None) -> Trace:
    """Row-wise mean over runs of ``f - f*``, ``||grad f||`` and time.

    Each trace's ``f*`` is read from its metadata; when absent, the lowest
    final objective among ``paths`` is used. In the result the ``f`` column
    holds the mean gap, ``success`` is 1 only if every run succeeded in that
    row, and ``sigma`` is the mean of the inputs.
    """
    paths = list(paths)
    if not paths:
        raise TraceError("no traces to average")
    traces = [read_trace(p) for p in paths]
    lengths = {p: len(t) for p, t in zip(paths, traces)}
    if len(set(lengths.values())) != 1:
        listing = ", ".join(f"{p} ({n} rows)" for p, n in lengths.items())
        raise TraceError(f"traces differ in length: {listing}")
    fallback = min(t.final_f for t in traces)
    stars = np.array([float(t.meta.get("f_star", fallback)) for t in traces])

    cols = {c: np.array([t.column(c) for t in traces], dtype=float) for c in TRACE_COLUMNS}
    n_runs = len(traces)
    gap = (cols["f"] - stars[:, None]).sum(axis=0) / n_runs
    avg = Trace(meta={"averaged_runs": n_runs, "sources": ";".join(os.path.basename(p) for p in paths)})
    if all("f0" in t.meta for t in traces):
        f0 = np.array([float(t.meta["f0"]) for t in traces])
        avg.meta["f0"] = float((f0 - stars).sum() / n_runs)
    for i in range(lengths[paths[0]]):
        avg.append(int(cols["iter"][0, i]), float(gap[i]),
                   float(cols["gnorm"][:, i].mean()), float(cols["block_gnorm"][:, i].mean()),
                   float(cols["sigma"][:, i].mean()), bool(cols["success"][:, i].all()),
                   float(cols["time_s"][:, i].mean()))
    if output is not None:
        write_trace(avg, output)
    return avg


def summarize(cfg: ExperimentConfig) -> dict:
    """Parameters of a config as a flat dict, for ``check`` output."""
    d = dataclasses.asdict(cfg)
    d["n_runs"] = len(cfg.solvers) * len(cfg.block_sizes) * len(cfg.seeds)
    return d
