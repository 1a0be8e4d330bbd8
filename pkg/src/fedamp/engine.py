"""Generalized federated averaging with amplified updates.

Each round, participating clients run I local SGD steps from the current
global parameter; the weighted updates are applied and accumulated, and
every P rounds the accumulated update is amplified by a factor eta.
Wait-for-all baselines freeze the parameter for P rounds and take a
single averaged step instead.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .objectives import NoiseModel, QuadraticPopulation
from .participation import WeightSchedule, rho_bound
from .streams import substream

MODES = ("generalized", "wait_minibatch", "wait_full")


@dataclass(frozen=True)
class RunConfig:
    gamma: float                 # local learning rate
    eta: float                   # amplification factor
    local_steps: int             # I
    amplify_every: int           # P
    rounds: int                  # T
    x0: np.ndarray
    eval_every: int | None = None   # defaults to amplify_every
    mode: str = "generalized"
    minibatch: int | None = None    # logistic populations only

    def validate(self):
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be positive and finite: {self.gamma}")
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise ValueError(f"eta must be positive and finite: {self.eta}")
        if self.local_steps < 1:
            raise ValueError(f"need I >= 1, got {self.local_steps}")
        if not 1 <= self.amplify_every <= self.rounds:
            raise ValueError(f"need 1 <= P <= T, got P={self.amplify_every}, "
                             f"T={self.rounds}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode: {self.mode!r}")
        if not np.all(np.isfinite(self.x0)):
            raise ValueError("x0 must be finite")

    @property
    def checkpoint_step(self) -> int:
        return self.eval_every if self.eval_every else self.amplify_every


@dataclass
class RunState:
    """Engine state; exposed so the amplification contract is testable."""

    x: np.ndarray    # parameter after the update of round t
    u: np.ndarray    # accumulated update since t0
    t0: int
    t: int           # round just completed
    P: int


def amplify(state: RunState, eta: float) -> RunState:
    """Apply x <- x + (eta - 1) u at an interval boundary; reset u and t0."""
    if state.t + 1 - state.t0 != state.P:
        raise ValueError(f"amplify called off-boundary: t={state.t}, "
                         f"t0={state.t0}, P={state.P}")
    x = state.x if eta == 1.0 else state.x + (eta - 1.0) * state.u
    return RunState(x=x, u=np.zeros_like(state.u), t0=state.t + 1,
                    t=state.t, P=state.P)


@dataclass(frozen=True)
class Trace:
    t: np.ndarray
    f: np.ndarray
    grad_norm_sq: np.ndarray
    min_grad_norm_sq: np.ndarray
    is_boundary: np.ndarray
    x_final: np.ndarray
    meta: dict = field(default_factory=dict)
    diverged: bool = False
    diverged_round: int | None = None
    max_boundary_residual: float = 0.0

    @property
    def final_min_grad_norm_sq(self) -> float:
        return float(self.min_grad_norm_sq[-1])

    def to_csv(self, path):
        import csv
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "f", "grad_norm_sq", "min_grad_norm_sq", "is_boundary"])
            for i in range(len(self.t)):
                w.writerow([int(self.t[i]), f"{self.f[i]:.17g}",
                            f"{self.grad_norm_sq[i]:.17g}",
                            f"{self.min_grad_norm_sq[i]:.17g}",
                            int(self.is_boundary[i])])


def checkpoint_eval(pop, x: np.ndarray) -> tuple[float, float]:
    """Exact full-batch (f(x), ||grad f(x)||^2)."""
    g = pop.global_grad(x)
    return pop.global_value(x), float(g @ g)


def _client_delta(pop, noise, n, x, gamma, steps, rng, minibatch):
    y = x.copy()
    for _ in range(steps):
        y -= gamma * pop.stochastic_grad(noise, n, y, rng, **(
            {"batch": minibatch} if minibatch is not None else {}))
    return y - x


def _deltas_scalar(pop, noise, clients, x, cfg, seed, t, workers):
    def one(n):
        rng = substream(seed, "local", t, n)
        return _client_delta(pop, noise, n, x, cfg.gamma, cfg.local_steps,
                             rng, cfg.minibatch)
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, clients))
    return [one(n) for n in clients]


def _deltas_diag(pop, noise, clients, x, cfg, seed, t):
    """Batched local updates for diagonal shared curvature + additive noise.

    All operations are elementwise per client row, so results are
    bit-identical to the per-client path regardless of batch membership.
    """
    lam = pop.diag
    C = pop.centers[clients]
    steps, m = cfg.local_steps, pop.m
    if noise.kind == "none" or noise.sigma == 0.0:
        xi = None
    else:
        xi = np.stack([noise.sample_block(substream(seed, "local", t, n), steps, m)
                       for n in clients])
    Y = np.broadcast_to(x, C.shape).copy()
    for i in range(steps):
        g = lam * (Y - C)
        if xi is not None:
            g = g + xi[:, i]
        Y = Y - cfg.gamma * g
    return Y - x


def _checkpoint_set(cfg: RunConfig) -> set:
    pts = set(range(0, cfg.rounds + 1, cfg.checkpoint_step))
    pts.add(cfg.rounds)
    return pts


class _Recorder:
    def __init__(self, pop, cfg):
        self.pop = pop
        self.boundaries = set(range(0, cfg.rounds + 1, cfg.amplify_every))
        self.t, self.f, self.g2, self.mg2, self.bnd = [], [], [], [], []
        self.running_min = np.inf

    def record(self, t, x) -> bool:
        """Evaluate and store a checkpoint; False if values overflowed."""
        with np.errstate(over="ignore", invalid="ignore"):
            fval, g2 = checkpoint_eval(self.pop, x)
        self.t.append(t)
        self.f.append(fval)
        self.g2.append(g2)
        if np.isfinite(g2):
            self.running_min = min(self.running_min, g2)
        self.mg2.append(self.running_min)
        self.bnd.append(t in self.boundaries)
        return bool(np.isfinite(fval) and np.isfinite(g2))

    def finish(self, x, meta, diverged=False, diverged_round=None, boundary_residual=0.0):
        return Trace(t=np.array(self.t), f=np.array(self.f),
                     grad_norm_sq=np.array(self.g2),
                     min_grad_norm_sq=np.array(self.mg2),
                     is_boundary=np.array(self.bnd, dtype=bool),
                     x_final=x.copy(), meta=meta, diverged=diverged,
                     diverged_round=diverged_round,
                     max_boundary_residual=boundary_residual)


def run(pop, noise: NoiseModel, schedule: WeightSchedule, cfg: RunConfig,
        seed: int, simulate_all: bool = False, workers: int | None = None) -> Trace:
    """Execute the generalized algorithm and return a checkpointed trace."""
    cfg.validate()
    if schedule.T < cfg.rounds:
        raise ValueError(f"schedule covers {schedule.T} rounds, need {cfg.rounds}")
    if len(cfg.x0) != pop.m:
        raise ValueError(f"x0 dimension {len(cfg.x0)} != population dimension {pop.m}")
    if cfg.mode != "generalized":
        return run_wait_baseline(pop, noise, schedule, cfg, seed)

    P, T = cfg.amplify_every, cfg.rounds
    x = np.array(cfg.x0, dtype=float)
    u = np.zeros(pop.m)
    t0 = 0
    x_at_t0 = x.copy()
    max_residual = 0.0
    checkpoints = _checkpoint_set(cfg)
    rec = _Recorder(pop, cfg)
    meta = {"seed": int(seed), "pattern": schedule.pattern, "mode": cfg.mode,
            "gamma": cfg.gamma, "eta": cfg.eta, "I": cfg.local_steps,
            "P": P, "T": T, "rho": rho_bound(schedule)}

    diag_fast = (isinstance(pop, QuadraticPopulation) and pop.diag is not None
                 and cfg.minibatch is None and not workers)

    for t in range(T):
        if t in checkpoints:
            if not rec.record(t, x):
                return rec.finish(x, meta, diverged=True, diverged_round=t,
                                  boundary_residual=max_residual)
        q = schedule.weights[t]
        clients = np.arange(pop.N) if simulate_all else np.nonzero(q)[0]
        if diag_fast:
            deltas = _deltas_diag(pop, noise, clients, x, cfg, seed, t)
        else:
            deltas = _deltas_scalar(pop, noise, clients, x, cfg, seed, t, workers)
        step = np.zeros(pop.m)
        for j, n in enumerate(clients):  # ascending client index
            step += q[n] * deltas[j]
        x = x + step
        u = u + step
        if t + 1 - t0 == P:
            with np.errstate(over="ignore", invalid="ignore"):
                residual = np.linalg.norm((x - x_at_t0) - u)
                rel = residual / max(np.linalg.norm(x), 1e-30)
            if np.isfinite(rel):
                max_residual = max(max_residual, rel)
            if cfg.eta != 1.0:
                x = x + (cfg.eta - 1.0) * u
            t0 = t + 1
            u = np.zeros(pop.m)
            x_at_t0 = x.copy()
        if not np.all(np.isfinite(x)):
            return rec.finish(np.nan_to_num(x), meta, diverged=True,
                              diverged_round=t, boundary_residual=max_residual)
    ok = rec.record(T, x)
    return rec.finish(x, meta, diverged=not ok,
                      diverged_round=None if ok else T,
                      boundary_residual=max_residual)


def run_wait_baseline(pop, noise: NoiseModel, schedule: WeightSchedule,
                      cfg: RunConfig, seed: int) -> Trace:
    """Wait-for-all baseline over the same participation process.

    Within each window of P rounds the parameter is frozen; every client
    that appears contributes one update equal to I steps along its
    (appearance-averaged) gradient at the frozen point.  wait_full uses
    the exact gradient, wait_minibatch averages stochastic draws.
    """
    cfg.validate()
    if cfg.mode not in ("wait_minibatch", "wait_full"):
        raise ValueError(f"run_wait_baseline needs a wait mode, got {cfg.mode!r}")
    P, T = cfg.amplify_every, cfg.rounds
    x = np.array(cfg.x0, dtype=float)
    checkpoints = _checkpoint_set(cfg)
    rec = _Recorder(pop, cfg)
    meta = {"seed": int(seed), "pattern": schedule.pattern, "mode": cfg.mode,
            "gamma": cfg.gamma, "eta": cfg.eta, "I": cfg.local_steps,
            "P": P, "T": T, "rho": rho_bound(schedule)}

    for t in range(T):
        if t in checkpoints:
            if not rec.record(t, x):
                return rec.finish(x, meta, diverged=True, diverged_round=t)
        if (t + 1) % P != 0:
            continue
        t_start = t + 1 - P
        window = schedule.weights[t_start:t + 1]
        appearing = np.nonzero(window.sum(axis=0) > 0)[0]
        if appearing.size == 0:
            continue
        step = np.zeros(pop.m)
        for n in appearing:  # ascending client index
            rounds_n = t_start + np.nonzero(window[:, n])[0]
            if cfg.mode == "wait_full":
                gbar = pop.grad(n, x)
            else:
                acc = np.zeros(pop.m)
                for tr in rounds_n:
                    rng = substream(seed, "local", int(tr), int(n))
                    acc += pop.stochastic_grad(noise, n, x, rng, **(
                        {"batch": cfg.minibatch} if cfg.minibatch is not None else {}))
                gbar = acc / len(rounds_n)
            step += -cfg.gamma * cfg.local_steps * gbar
        x = x + step / appearing.size
        if not np.all(np.isfinite(x)):
            return rec.finish(np.nan_to_num(x), meta, diverged=True, diverged_round=t)
    ok = rec.record(T, x)
    return rec.finish(x, meta, diverged=not ok, diverged_round=None if ok else T)
