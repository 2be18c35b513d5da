"""Annealing schedules, tempering ladders, swap kernels and the ensemble driver.

``run_ensemble`` advances B chains in lock-step.  Between swap rounds every
chain runs inside the compiled kernel for a whole segment; the driver then
merges the chains' improvement events into the global incumbent and the
anytime trace, and performs a deterministic even/odd (DEO) swap round on
adjacent ladder positions.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .core import FEAS_EPS, REFRESH_EVERY, EnergyParams, init_state, is_feasible
from .errors import ConfigInvalid, InvalidRange, NonPositivePenalty, NonPositiveTemperature, ZeroChains
from .samplers import ProposalKind

log = logging.getLogger(__name__)

MODES = ("sa", "sa-reheat", "tau-pt", "lambda-pt")

# SA segments are not bounded by swap rounds; this keeps per-segment buffers small
_SA_SEGMENT = 2048


def gamma_from_halving(steps):
    """Decay rate with ``gamma ** steps == 0.5``."""
    if steps <= 0:
        raise ConfigInvalid(f"halving horizon must be positive, got {steps}")
    return 0.5 ** (1.0 / steps)


@dataclass(frozen=True)
class AnnealSchedule:
    tau0: float
    gamma: float = 1.0
    reheat_period: int | None = None

    def __post_init__(self):
        if not (self.tau0 > 0 and math.isfinite(self.tau0)):
            raise NonPositiveTemperature(f"tau0 must be > 0, got {self.tau0}")
        if not 0 < self.gamma <= 1:
            raise ConfigInvalid(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.reheat_period is not None and self.reheat_period < 1:
            raise ConfigInvalid("reheat_period must be >= 1")

    def tau(self, t):
        return anneal(self, t)


def anneal(schedule, t):
    """``tau0 * gamma ** t``, with t taken modulo the reheat period if set."""
    if t < 0:
        raise ConfigInvalid(f"step must be >= 0, got {t}")
    if schedule.reheat_period:
        t = t % schedule.reheat_period
    return math.exp(math.log(schedule.tau0) + t * math.log(schedule.gamma))


@dataclass(frozen=True)
class Ladder:
    values: tuple
    kind: str = "temperature"

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if not vals:
            raise ZeroChains("ladder is empty")
        if self.kind not in ("temperature", "penalty"):
            raise ConfigInvalid(f"unknown ladder kind {self.kind!r}")
        if any(not (v > 0 and math.isfinite(v)) for v in vals):
            raise InvalidRange("ladder values must be positive and finite")
        d = np.diff(vals)
        # constant ladders are allowed (degenerate ensembles)
        if not (np.all(d >= 0) or np.all(d <= 0)):
            raise InvalidRange("ladder values must be monotone")

    def __len__(self):
        return len(self.values)


def make_ladder(lo, hi, B, kind="temperature"):
    """Geometric ladder ``lo * (hi/lo) ** (i/(B-1))``, i = 0..B-1."""
    if B < 1:
        raise ZeroChains("need at least one chain")
    if not (0 < lo <= hi) or not math.isfinite(hi):
        raise InvalidRange(f"need 0 < lo <= hi, got lo={lo}, hi={hi}")
    if B == 1:
        return Ladder((float(lo),), kind)
    ratio = hi / lo
    vals = [lo * ratio ** (i / (B - 1)) for i in range(B)]
    vals[-1] = float(hi)
    return Ladder(tuple(vals), kind)


def swap_prob_tau(E_i, E_j, tau_i, tau_j):
    """Acceptance of exchanging states between temperatures tau_i and tau_j."""
    if not (tau_i > 0 and tau_j > 0):
        raise NonPositiveTemperature("temperatures must be > 0")
    log_a = (1.0 / tau_i - 1.0 / tau_j) * (E_i - E_j)
    return math.exp(min(0.0, log_a))


def swap_prob_lambda(P_i, P_j, lam_i, lam_j, tau):
    """Acceptance of exchanging states between penalties lam_i and lam_j.

    ``P`` are total violations with the same exponent as the energy.
    """
    if not tau > 0:
        raise NonPositiveTemperature("temperature must be > 0")
    if not (lam_i > 0 and lam_j > 0):
        raise NonPositivePenalty("penalties must be > 0")
    log_a = (lam_j - lam_i) * (P_j - P_i) / tau
    return math.exp(min(0.0, log_a))


def deo_pairs(s, B):
    """Adjacent pairs (1-based) attempted in swap round ``s``."""
    if B < 2:
        raise ZeroChains("swaps need at least two chains")
    start = 1 if s % 2 == 0 else 2
    return [(i, i + 1) for i in range(start, B, 2)]


@dataclass
class SwapStats:
    attempts: np.ndarray
    accepts: np.ndarray
    round_trips: np.ndarray

    @classmethod
    def empty(cls, B):
        k = max(B - 1, 0)
        return cls(np.zeros(k, dtype=np.int64), np.zeros(k, dtype=np.int64),
                   np.zeros(B, dtype=np.int64))

    @property
    def acceptance_rate(self):
        """Overall fraction of accepted swaps (nan when none attempted)."""
        total = int(self.attempts.sum())
        return float(self.accepts.sum()) / total if total else float("nan")

    def pair_rates(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.accepts / self.attempts


@dataclass
class TraceRecord:
    wall_seconds: float
    step: int
    incumbent_obj: float | None
    best_energy: float
    feasible_found: bool


@dataclass
class RunResult:
    incumbent: np.ndarray | None
    incumbent_obj: float | None
    trace: list
    swap_stats: SwapStats
    steps_completed: int
    wall_seconds: float = 0.0
    acceptance: np.ndarray = None
    backend: str = ""

    @property
    def feasible(self):
        return self.incumbent is not None


@dataclass
class EnsembleConfig:
    """Everything a run needs.

    ``schedule.tau0`` is the shared initial temperature in SA and lambda-PT
    modes; in tau-PT the ladder holds the initial temperatures and only
    ``schedule.gamma`` is used.  ``params.lam`` is the fixed penalty except in
    lambda-PT, where the ladder holds the penalties.
    """

    mode: str = "sa"
    chains: int = 15
    swap_interval: int = 200
    proposal: ProposalKind = field(default_factory=ProposalKind)
    schedule: AnnealSchedule = field(default_factory=lambda: AnnealSchedule(1.0))
    ladder: Ladder | None = None
    params: EnergyParams = field(default_factory=lambda: EnergyParams(1.0))
    seed: int = 0
    max_steps: int | None = None
    budget_seconds: float | None = None
    trace_every: int = 100
    eps: float = FEAS_EPS
    workers: int = 1

    def validate(self, n=None):
        if self.mode not in MODES:
            raise ConfigInvalid(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.chains < 1:
            raise ConfigInvalid("need at least one chain")
        if self.swap_interval < 1:
            raise ConfigInvalid("swap interval must be >= 1")
        if self.trace_every < 1:
            raise ConfigInvalid("trace cadence must be >= 1")
        if self.max_steps is None and self.budget_seconds is None:
            raise ConfigInvalid("set max_steps and/or budget_seconds")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigInvalid("max_steps must be positive")
        if self.budget_seconds is not None and not self.budget_seconds > 0:
            raise ConfigInvalid("budget_seconds must be positive")
        if self.eps < 0:
            raise ConfigInvalid("eps must be >= 0")
        if self.mode in ("tau-pt", "lambda-pt"):
            if self.chains < 2:
                raise ConfigInvalid(f"{self.mode} needs at least two chains")
            if self.ladder is None or len(self.ladder) != self.chains:
                raise ConfigInvalid(f"{self.mode} needs a ladder with {self.chains} values")
            want = "temperature" if self.mode == "tau-pt" else "penalty"
            if self.ladder.kind != want:
                raise ConfigInvalid(f"{self.mode} needs a {want} ladder")
        if n is not None:
            self.proposal.validate(n)
        return self

    def reheat_period(self):
        if self.mode != "sa-reheat":
            return 0
        if self.schedule.reheat_period:
            return int(self.schedule.reheat_period)
        if self.max_steps:
            return max(1, self.max_steps // 4)
        if self.schedule.gamma < 1:
            return max(1, round(math.log(0.5) / math.log(self.schedule.gamma)))
        raise ConfigInvalid("sa-reheat needs a reheat period, a step budget or gamma < 1")

    def slot_parameters(self):
        """Initial temperature and penalty for every ladder position."""
        B = self.chains
        if self.mode == "tau-pt":
            return list(self.ladder.values), [self.params.lam] * B
        if self.mode == "lambda-pt":
            return [self.schedule.tau0] * B, list(self.ladder.values)
        return [self.schedule.tau0] * B, [self.params.lam] * B


def chain_rng(seed, index):
    """Counter-based stream for chain ``index``; independent of scheduling."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(0, index))))


def swap_rng(seed):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(1,))))


class _RoundTrips:
    """Counts bottom -> top -> bottom traversals of each replica."""

    def __init__(self, B):
        self.replica = np.arange(B)
        # 0: last extreme visited was the bottom, 1: the top, -1: neither yet
        self.last = np.full(B, -1)
        self.last[0] = 0
        self.count = np.zeros(B, dtype=np.int64)

    def swap(self, i, j):
        self.replica[[i, j]] = self.replica[[j, i]]

    def update(self):
        top = self.replica[-1]
        if self.last[top] == 0:
            self.last[top] = 1
        bottom = self.replica[0]
        if self.last[bottom] == 1:
            self.count[bottom] += 1
            self.last[bottom] = 0


def run_ensemble(inst, config, backend=None):
    """Run the sampler ensemble until the step or wall-clock budget runs out."""
    cfg = config.validate(inst.n)
    kern = _backend.get(backend)
    arrs = _backend.arrays(inst, backend)
    backend_name = backend or _backend.NAME
    B = cfg.chains
    kind = 0 if cfg.proposal.variant == "mlbp" else 1
    L = cfg.proposal.L
    width = cfg.proposal.width
    joint = bool(cfg.proposal.joint_energy)
    reheat = cfg.reheat_period()
    log_gamma = math.log(cfg.schedule.gamma)
    pt = cfg.mode in ("tau-pt", "lambda-pt")
    I = cfg.swap_interval
    T = cfg.max_steps if cfg.max_steps is not None else np.iinfo(np.int64).max

    taus0, lams = cfg.slot_parameters()
    log_taus0 = [math.log(t) for t in taus0]
    rngs = [chain_rng(cfg.seed, i) for i in range(B)]
    srng = swap_rng(cfg.seed)
    states = []
    for i in range(B):
        x0 = (rngs[i].random(inst.n) < 0.5).astype(np.int8)
        states.append(init_state(inst, x0, EnergyParams(lams[i], cfg.params.exponent), cfg.eps))

    best_x = [np.zeros(inst.n, dtype=np.int8) for _ in range(B)]
    best = [np.zeros(2) for _ in range(B)]
    accepted = np.zeros(B, dtype=np.int64)
    stats = SwapStats.empty(B)
    trips = _RoundTrips(B)
    inc_obj = None
    inc_x = None
    trace = []
    swap_round = 0
    t = 0

    start = time.monotonic()
    deadline = start + cfg.budget_seconds if cfg.budget_seconds is not None else None
    rate = None  # measured outer steps per second
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None

    def advance(i, t0, K, u):
        energies = np.empty(K)
        ev_step = np.empty(K, dtype=np.int64)
        ev_obj = np.empty(K)
        acc, nev = kern.run_chain(arrs, states[i], u, t0, K, log_taus0[i], log_gamma, reheat,
                                  kind, L, joint, REFRESH_EVERY, energies, ev_step, ev_obj,
                                  best_x[i], best[i])
        return acc, energies, ev_step[:nev], ev_obj[:nev]

    try:
        while t < T:
            now = time.monotonic()
            if deadline is not None and now >= deadline:
                break
            if pt:
                next_swap = t if t % I == 0 else (t // I + 1) * I
                end = next_swap + 1
            else:
                end = t + _SA_SEGMENT
            end = min(end, T)
            if deadline is not None:
                if rate is None:
                    end = t + 1
                else:
                    end = min(end, t + max(1, int((deadline - now) * rate)))
            K = end - t

            uniforms = [rngs[i].random(K * width) for i in range(B)]
            if pool is not None:
                outs = list(pool.map(lambda i: advance(i, t, K, uniforms[i]), range(B)))
            else:
                outs = [advance(i, t, K, uniforms[i]) for i in range(B)]
            seg_end_time = time.monotonic()
            elapsed = seg_end_time - now
            if elapsed > 0:
                r = K / elapsed
                rate = r if rate is None else 0.5 * rate + 0.5 * r

            energies = np.vstack([o[1] for o in outs])
            min_energy = energies.min(axis=0)
            events = sorted(
                (int(s), float(v), i)
                for i, o in enumerate(outs) for s, v in zip(o[2], o[3])
            )
            for i, o in enumerate(outs):
                accepted[i] += o[0]

            improved = {}
            winner = None
            for s_, v, i in events:
                if inc_obj is None or v < inc_obj:
                    inc_obj = v
                    winner = i
                    improved[s_] = v
            if winner is not None:
                inc_x = best_x[winner].copy()

            # trace rows for this segment, wall time interpolated by step
            marks = set(improved)
            first = t + (-(t + 1)) % cfg.trace_every
            marks.update(range(first, end, cfg.trace_every))
            if end == T:
                marks.add(end - 1)
            running = trace[-1].incumbent_obj if trace else None
            imp = sorted(improved.items())
            q = 0
            for s_ in sorted(marks):
                while q < len(imp) and imp[q][0] <= s_:
                    running = imp[q][1]
                    q += 1
                trace.append(TraceRecord(
                    wall_seconds=(now - start) + (s_ - t + 1) / K * elapsed,
                    step=s_ + 1,
                    incumbent_obj=running,
                    best_energy=float(min_energy[s_ - t]),
                    feasible_found=running is not None,
                ))
            t = end

            if pt and (t - 1) % I == 0:
                _swap_round(cfg, states, taus0, lams, t - 1, swap_round, srng, stats, trips)
                swap_round += 1
    finally:
        if pool is not None:
            pool.shutdown()

    wall = time.monotonic() - start
    if trace and trace[-1].step != t and t > 0:
        trace.append(TraceRecord(wall, t, inc_obj, float(min(s.energy for s in states)),
                                 inc_obj is not None))
    if inc_x is not None and not is_feasible(inst, inc_x, cfg.eps):
        raise AssertionError("incumbent failed the feasibility re-check")
    stats.round_trips[:] = trips.count
    return RunResult(
        incumbent=inc_x,
        incumbent_obj=inc_obj,
        trace=trace,
        swap_stats=stats,
        steps_completed=t,
        wall_seconds=wall,
        acceptance=accepted / max(t, 1),
        backend=backend_name,
    )


def _swap_round(cfg, states, taus0, lams, t, s_round, srng, stats, trips):
    B = cfg.chains
    g = cfg.schedule.gamma
    for a, b in deo_pairs(s_round, B):
        i, j = a - 1, b - 1
        if cfg.mode == "tau-pt":
            ti = math.exp(math.log(taus0[i]) + t * math.log(g))
            tj = math.exp(math.log(taus0[j]) + t * math.log(g))
            p = swap_prob_tau(states[i].energy, states[j].energy, ti, tj)
        else:
            tau = math.exp(math.log(cfg.schedule.tau0) + t * math.log(g))
            p = swap_prob_lambda(states[i].viol, states[j].viol, lams[i], lams[j], tau)
        stats.attempts[i] += 1
        if srng.random() < p:
            stats.accepts[i] += 1
            states[i], states[j] = states[j], states[i]
            states[i].lam = lams[i]
            states[j].lam = lams[j]
            trips.swap(i, j)
    trips.update()
