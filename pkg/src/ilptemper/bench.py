"""Evaluation: gap metric, exhaustive oracle, hyperparameter grid search and
batch experiments.
"""

import csv
import json
import math
import os
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import instances as _instances
from .core import FEAS_EPS, EnergyParams, FeasTolerance
from .errors import AllInfeasible, ConfigInvalid, IoFailure, ParseError, TooLarge, ZeroBaseline
from .io import load_instance, write_trace
from .samplers import ProposalKind
from .tempering import (
    AnnealSchedule,
    EnsembleConfig,
    gamma_from_halving,
    make_ladder,
    run_ensemble,
)

BRUTE_FORCE_MAX_N = 25

#: tuned (tau, lambda) settings per problem class and schedule
PRESET_PARAMS = {
    "mvc-sa": {"mode": "sa", "tau": 0.2, "lam": 1.0},
    "mis-sa": {"mode": "sa", "tau": 0.2, "lam": 2.0},
    "sc-sa": {"mode": "sa", "tau": 1.0, "lam": 5.0},
    "ca-sa": {"mode": "sa", "tau": 50.0, "lam": 300.0},
    "mvc-tau-pt": {"mode": "tau-pt", "tau_min": 0.1, "tau_max": 0.2, "lam": 1.0},
    "mis-tau-pt": {"mode": "tau-pt", "tau_min": 0.2, "tau_max": 0.4, "lam": 2.0},
    "sc-tau-pt": {"mode": "tau-pt", "tau_min": 1.0, "tau_max": 2.0, "lam": 5.0},
    "ca-tau-pt": {"mode": "tau-pt", "tau_min": 50.0, "tau_max": 100.0, "lam": 300.0},
    "mvc-lambda-pt": {"mode": "lambda-pt", "tau": 0.2, "lambda_min": 0.5, "lambda_max": 1.0},
    "mis-lambda-pt": {"mode": "lambda-pt", "tau": 0.2, "lambda_min": 1.0, "lambda_max": 2.0},
    "sc-lambda-pt": {"mode": "lambda-pt", "tau": 1.0, "lambda_min": 2.5, "lambda_max": 5.0},
    "ca-lambda-pt": {"mode": "lambda-pt", "tau": 50.0, "lambda_min": 200.0, "lambda_max": 400.0},
}

#: validation grids the tuned settings were picked from; a starting point, not exhaustive
GRID_PRESETS = {
    "mvc": {"tau_candidates": [0.1, 0.2, 0.5, 1.0], "lambda_candidates": [1.0, 2.0, 5.0]},
    "mis": {"tau_candidates": [0.1, 0.2, 0.5, 1.0], "lambda_candidates": [1.0, 2.0, 5.0]},
    "sc": {"tau_candidates": [0.1, 0.2, 0.5, 1.0], "lambda_candidates": [1.0, 2.0, 5.0]},
    "ca": {"tau_candidates": [10.0, 20.0, 50.0, 100.0], "lambda_candidates": [300.0, 400.0, 500.0]},
}


# ---- metrics -----------------------------------------------------------------

@dataclass(frozen=True)
class GapReport:
    obj: float
    bks: float
    gap_percent: float


def relative_gap(obj, bks):
    """Signed gap ``(obj - bks) / |bks| * 100``; negative beats the baseline."""
    if bks == 0:
        raise ZeroBaseline("relative gap is undefined for a zero baseline")
    return (obj - bks) / abs(bks) * 100.0


def gap_report(obj, bks):
    return GapReport(obj, bks, relative_gap(obj, bks))


# ---- exhaustive oracle ---------------------------------------------------------

@dataclass
class BruteForceResult:
    x: np.ndarray | None
    obj: float | None
    energy_x: np.ndarray | None = None
    energy: float | None = None

    def __iter__(self):
        # unpacks as (x, obj)
        return iter((self.x, self.obj))


def _enumerate(n, lo, hi):
    k = np.arange(lo, hi, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    # integer order equals lexicographic order of x with x[0] most significant
    return ((k[:, None] >> shifts) & 1).astype(np.float64)


def brute_force(inst, params=None, tol=None, chunk=1 << 16):
    """Enumerate all 2^n assignments.

    Returns the feasible minimizer of the objective (lexicographically
    smallest among ties) or ``x=None`` when nothing is feasible.  With
    ``params`` the unconstrained energy minimizer is returned as well.
    """
    n = inst.n
    if n > BRUTE_FORCE_MAX_N:
        raise TooLarge(f"brute force is capped at n={BRUTE_FORCE_MAX_N}, got {n}")
    eps = FEAS_EPS if tol is None else (tol.eps if isinstance(tol, FeasTolerance) else float(tol))
    A = inst.dense()
    best_obj = best_x = None
    best_e = best_ex = None
    for lo in range(0, 1 << n, chunk):
        X = _enumerate(n, lo, min(1 << n, lo + chunk))
        obj = X @ inst.c
        act = X @ A.T if inst.m else np.zeros((X.shape[0], 0))
        feas = np.all(act <= inst.b + eps, axis=1)
        if feas.any():
            idx = np.flatnonzero(feas)
            k = idx[np.argmin(obj[idx])]
            if best_obj is None or obj[k] < best_obj:
                best_obj, best_x = float(obj[k]), X[k].astype(np.int8)
        if params is not None:
            r = np.maximum(act - inst.b, 0.0)
            pen = (r if params.exponent == 1 else r * r).sum(axis=1)
            e = obj + params.lam * pen
            k = int(np.argmin(e))
            if best_e is None or e[k] < best_e:
                best_e, best_ex = float(e[k]), X[k].astype(np.int8)
    return BruteForceResult(best_x, best_obj, best_ex, best_e)


# ---- configuration -------------------------------------------------------------

def make_config(mode="sa", proposal="mlbp", L=3, joint_energy=False, tau=1.0, lam=1.0,
                tau_min=None, tau_max=None, lambda_min=None, lambda_max=None,
                chains=15, swap_interval=200, gamma_halving_steps=100_000,
                reheat_period=None, penalty_exponent=1, seed=0, max_steps=None,
                budget_seconds=None, trace_every=100, eps=FEAS_EPS, workers=1):
    """Build an :class:`EnsembleConfig` from flat keyword settings.

    Missing ladder endpoints follow the tuning rule: ``(tau, 2 tau)`` for
    tau-PT and ``(lam / 2, lam)`` for lambda-PT.  ``gamma_halving_steps`` of
    0 or None disables annealing.
    """
    if mode not in ("sa", "sa-reheat", "tau-pt", "lambda-pt"):
        raise ConfigInvalid(f"unknown mode {mode!r}")
    gamma = gamma_from_halving(gamma_halving_steps) if gamma_halving_steps else 1.0
    prop = ProposalKind(proposal, 1 if proposal == "rwm" else int(L), bool(joint_energy))
    ladder = None
    if mode == "tau-pt":
        lo = tau if tau_min is None else tau_min
        hi = 2 * lo if tau_max is None else tau_max
        ladder = make_ladder(lo, hi, chains, "temperature")
        tau = lo
    elif mode == "lambda-pt":
        hi = lam if lambda_max is None else lambda_max
        lo = hi / 2 if lambda_min is None else lambda_min
        ladder = make_ladder(lo, hi, chains, "penalty")
        lam = hi
    return EnsembleConfig(
        mode=mode, chains=int(chains), swap_interval=int(swap_interval), proposal=prop,
        schedule=AnnealSchedule(float(tau), gamma, reheat_period), ladder=ladder,
        params=EnergyParams(float(lam), int(penalty_exponent)), seed=int(seed),
        max_steps=max_steps, budget_seconds=budget_seconds, trace_every=int(trace_every),
        eps=float(eps), workers=int(workers),
    ).validate()


def ladder_rule(tau_best, lambda_best):
    """PT settings derived from tuned SA values.

    tau-PT keeps lambda and spans ``(tau, 2 tau)``; lambda-PT keeps tau and
    spans ``(lambda / 2, lambda)``.
    """
    return {
        "tau-pt": {"tau_min": tau_best, "tau_max": 2 * tau_best, "lam": lambda_best},
        "lambda-pt": {"tau": tau_best, "lambda_min": lambda_best / 2, "lambda_max": lambda_best},
    }


# ---- grid search ---------------------------------------------------------------

@dataclass
class GridSpec:
    tau_candidates: list
    lambda_candidates: list
    max_steps: int | None = 10_000
    budget_seconds: float | None = None
    seeds: list = field(default_factory=lambda: [0])
    settings: dict = field(default_factory=dict)  # extra make_config keywords

    def __post_init__(self):
        if not self.tau_candidates or not self.lambda_candidates:
            raise ConfigInvalid("grid needs at least one tau and one lambda candidate")
        if not self.seeds:
            raise ConfigInvalid("grid needs at least one seed")

    @classmethod
    def preset(cls, name, **kw):
        if name not in GRID_PRESETS:
            raise ConfigInvalid(f"unknown grid preset {name!r}; choose from {sorted(GRID_PRESETS)}")
        return cls(**{**GRID_PRESETS[name], **kw})


@dataclass
class GridResult:
    tau_best: float
    lambda_best: float
    table: dict  # (tau, lambda) -> mean objective, or None when infeasible
    tau_pt: dict
    lambda_pt: dict


def grid_search(instances, grid, mode="sa", workers=1):
    """Tune (tau, lambda) by running ``mode`` on every cell.

    A cell's score is the mean incumbent objective over instances and seeds;
    a cell with any infeasible run is marked infeasible and never chosen.
    Ties prefer the smaller lambda, then the smaller tau.
    """
    instances = list(instances)
    if not instances:
        raise ConfigInvalid("grid search needs at least one instance")
    if mode not in ("sa", "sa-reheat"):
        raise ConfigInvalid("grid search tunes SA schedules only")
    jobs = [(tau, lam, inst, seed)
            for tau in grid.tau_candidates for lam in grid.lambda_candidates
            for inst in instances for seed in grid.seeds]

    def run(job):
        tau, lam, inst, seed = job
        kw = dict(grid.settings)
        kw.update(mode=mode, tau=tau, lam=lam, seed=seed,
                  max_steps=grid.max_steps, budget_seconds=grid.budget_seconds)
        return run_ensemble(inst, make_config(**kw)).incumbent_obj

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            objs = list(pool.map(run, jobs))
    else:
        objs = [run(j) for j in jobs]

    cells = {}
    for (tau, lam, _, _), v in zip(jobs, objs):
        cells.setdefault((tau, lam), []).append(v)
    table = {}
    for key, vals in cells.items():
        table[key] = None if any(v is None for v in vals) else math.fsum(vals) / len(vals)
    finite = [(v, lam, tau) for (tau, lam), v in table.items() if v is not None]
    if not finite:
        raise AllInfeasible("every grid cell produced an infeasible run")
    _, lam_b, tau_b = min(finite)
    rule = ladder_rule(tau_b, lam_b)
    return GridResult(tau_b, lam_b, table, rule["tau-pt"], rule["lambda-pt"])


# ---- baselines -------------------------------------------------------------------

def greedy_vertex_cover(graph):
    """Classical greedy cover: repeatedly take a vertex of maximum remaining
    degree (lowest index among ties) until every edge is covered."""
    n = graph.n_nodes
    edges = graph.edges
    deg = np.bincount(edges.ravel(), minlength=n).astype(np.int64)
    adj = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    covered = np.zeros(n, dtype=bool)
    cover = []
    while deg.max(initial=0) > 0:
        v = int(np.argmax(deg))
        cover.append(v)
        covered[v] = True
        deg[v] = 0
        for u in adj[v]:
            if not covered[u]:
                deg[u] -= 1
    x = np.zeros(n, dtype=np.int8)
    x[cover] = 1
    return x


# ---- experiments -------------------------------------------------------------------

SUMMARY_HEADER = ("instance", "seed", "mode", "incumbent_obj", "feasible", "steps", "wall_seconds")
AGGREGATE_HEADER = ("instance", "runs", "feasible_runs", "obj_mean", "obj_std",
                    "bks", "gap_mean", "gap_std")


@dataclass
class ExperimentSpec:
    """What to run.

    ``instances`` entries are dicts with one of ``preset`` (plus optional
    ``seed``), ``problem`` (keywords of :func:`ilptemper.instances.generate`)
    or ``path``; any entry may carry a ``name`` and a best-known ``bks``.
    Without ``bks`` the best incumbent of the experiment is the baseline.
    """

    name: str
    instances: list
    config: dict
    seeds: list | None = None
    master_seed: int | None = None
    n_seeds: int | None = None
    out_dir: str = "out"
    workers: int = 1

    def __post_init__(self):
        if self.seeds is None:
            if self.master_seed is None or not self.n_seeds:
                raise ConfigInvalid("give seeds, or master_seed with n_seeds")
            self.seeds = derive_seeds(self.master_seed, self.n_seeds)
        if len(self.seeds) < 1:
            raise ConfigInvalid("experiment needs at least one seed")
        if not self.instances:
            raise ConfigInvalid("experiment needs at least one instance")

    @classmethod
    def from_dict(cls, d):
        known = {"name", "instances", "config", "seeds", "master_seed", "n_seeds",
                 "out_dir", "workers"}
        extra = set(d) - known
        if extra:
            raise ConfigInvalid(f"unknown experiment keys: {sorted(extra)}")
        return cls(**d)


def derive_seeds(master, k):
    """``k`` run seeds split off a master seed."""
    ss = np.random.SeedSequence(int(master))
    return [int(c.generate_state(1, np.uint64)[0] >> np.uint64(1)) for c in ss.spawn(k)]


def resolve_instance(entry):
    entry = dict(entry)
    name = entry.pop("name", None)
    entry.pop("bks", None)
    if "preset" in entry:
        return _instances.generate_preset(entry["preset"], seed=entry.get("seed", 0), name=name)
    if "path" in entry:
        inst = load_instance(entry["path"])
        if name:
            inst.name = name
        return inst
    if "problem" in entry:
        return _instances.generate(name=name, **entry)
    raise ConfigInvalid(f"instance entry needs preset, problem or path: {entry}")


@dataclass
class ExperimentReport:
    directory: str
    summary_path: str
    aggregate_path: str
    trace_paths: list
    rows: list


def _safe(name):
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name) or "instance"


def run_experiment(spec):
    """Run every (instance, seed) pair and write traces, summary and aggregate."""
    if isinstance(spec, dict):
        spec = ExperimentSpec.from_dict(spec)
    base = os.path.join(spec.out_dir, _safe(spec.name))
    insts = [resolve_instance(e) for e in spec.instances]
    names = [_safe(i.name or f"instance{k}") for k, i in enumerate(insts)]
    if len(set(names)) != len(names):
        raise ConfigInvalid("instance names must be distinct within an experiment")
    jobs = [(k, seed) for k in range(len(insts)) for seed in spec.seeds]

    def run(job):
        k, seed = job
        cfg = make_config(**{**spec.config, "seed": seed})
        return run_ensemble(insts[k], cfg)

    try:
        os.makedirs(base, exist_ok=True)
    except OSError as e:
        raise IoFailure(f"cannot create {base}: {e.strerror or e}") from e
    if spec.workers > 1:
        with ThreadPoolExecutor(spec.workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    mode = spec.config.get("mode", "sa")
    rows, traces = [], []
    for (k, seed), res in zip(jobs, results):
        d = os.path.join(base, names[k], str(seed))
        try:
            os.makedirs(d, exist_ok=True)
        except OSError as e:
            raise IoFailure(f"cannot create {d}: {e.strerror or e}") from e
        p = os.path.join(d, "trace.csv")
        write_trace(res.trace, p)
        traces.append(p)
        rows.append((names[k], seed, mode, res.incumbent_obj, res.feasible,
                     res.steps_completed, res.wall_seconds))

    summary = os.path.join(base, "summary.csv")
    _write_csv(summary, SUMMARY_HEADER, [
        (r[0], r[1], r[2], "" if r[3] is None else format(r[3], ".17g"),
         "true" if r[4] else "false", r[5], format(r[6], ".6f")) for r in rows])

    agg = []
    for k, name in enumerate(names):
        objs = [r[3] for r in rows if r[0] == name and r[3] is not None]
        runs = sum(1 for r in rows if r[0] == name)
        bks = spec.instances[k].get("bks")
        if bks is None and objs:
            bks = min(objs)
        gaps = [relative_gap(o, bks) for o in objs] if objs and bks not in (None, 0) else []
        agg.append((name, runs, len(objs), _mean(objs), _std(objs), _num(bks),
                    _mean(gaps), _std(gaps)))
    aggregate = os.path.join(base, "aggregate.csv")
    _write_csv(aggregate, AGGREGATE_HEADER, agg)
    return ExperimentReport(base, summary, aggregate, traces, rows)


def _mean(v):
    return format(math.fsum(v) / len(v), ".17g") if v else ""


def _std(v):
    if not v:
        return ""
    return format(statistics.stdev(v) if len(v) > 1 else 0.0, ".17g")


def _num(v):
    return "" if v is None else format(float(v), ".17g")


def _write_csv(path, header, rows):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e.strerror or e}") from e


def load_spec(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e.strerror or e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, e.lineno, e.colno) from e
