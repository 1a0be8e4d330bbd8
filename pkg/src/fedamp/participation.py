"""Participation-weight schedules and their window statistics.

A schedule assigns every round a point on the probability simplex over
clients.  Generators cover full participation, independent uniform
subsets, permutation-regularized selection, periodic group availability,
and Markov on/off availability chains.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .streams import substream

SIMPLEX_TOL = 1e-12


@dataclass(frozen=True)
class PatternSpec:
    """Tagged participation pattern.

    kind: 'full' | 'independent' | 'permutation' | 'periodic' | 'markov'
    S: participants per round (ignored for 'full')
    G, B: group count and block length for 'periodic'
    offset: 'random' or a fixed int in [0, G*B) for 'periodic'
    p_aa, p_uu: stay-available / stay-unavailable probabilities for 'markov'
    """

    kind: str
    S: int = 0
    G: int = 0
    B: int = 0
    offset: int | str = "random"
    p_aa: float = 0.0
    p_uu: float = 0.0

    def validate(self, N: int):
        if self.kind not in ("full", "independent", "permutation", "periodic", "markov"):
            raise ValueError(f"unknown pattern kind: {self.kind!r}")
        if self.kind != "full":
            if not 1 <= self.S <= N:
                raise ValueError(f"need 1 <= S <= N, got S={self.S}, N={N}")
        if self.kind == "permutation" and N % self.S != 0:
            raise ValueError(f"permutation pattern needs S | N, got S={self.S}, N={N}")
        if self.kind == "periodic":
            if self.G < 1 or self.B < 1 or N % self.G != 0:
                raise ValueError(f"periodic pattern needs G >= 1, B >= 1, G | N")
            if self.S > N // self.G:
                raise ValueError(f"S={self.S} exceeds group size {N // self.G}")
            if isinstance(self.offset, int) and not 0 <= self.offset < self.G * self.B:
                raise ValueError(f"fixed offset must lie in [0, {self.G * self.B})")
        if self.kind == "markov":
            if not (0 < self.p_aa < 1 and 0 < self.p_uu < 1):
                raise ValueError("markov stay probabilities must lie in (0, 1)")

    def describe(self) -> str:
        if self.kind == "full":
            return "full"
        if self.kind == "independent":
            return f"independent(S={self.S})"
        if self.kind == "permutation":
            return f"permutation(S={self.S})"
        if self.kind == "periodic":
            return f"periodic(G={self.G},B={self.B},S={self.S},offset={self.offset})"
        return f"markov(p_aa={self.p_aa},p_uu={self.p_uu},S={self.S})"


@dataclass(frozen=True)
class WeightSchedule:
    weights: np.ndarray          # (T, N) dense, rows on the simplex
    pattern: str
    seed: int
    fallback_rounds: int = 0     # markov rounds with no available client

    @property
    def T(self) -> int:
        return self.weights.shape[0]

    @property
    def N(self) -> int:
        return self.weights.shape[1]

    def rows(self):
        """Sparse view: per round, list of (client, weight) pairs."""
        for t in range(self.T):
            nz = np.nonzero(self.weights[t])[0]
            yield [(int(n), float(self.weights[t, n])) for n in nz]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "n", "q"])
            for t in range(self.T):
                for n in np.nonzero(self.weights[t])[0]:
                    w.writerow([t, int(n), f"{self.weights[t, n]:.17g}"])


def load_schedule_csv(path, N: int | None = None) -> WeightSchedule:
    """Read a raw `t,n,q` schedule file.  Rows may carry unequal weights."""
    ts, ns, qs = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["t", "n", "q"]:
            raise ValueError(f"bad schedule header: {header}")
        for row in reader:
            ts.append(int(row[0]))
            ns.append(int(row[1]))
            qs.append(float(row[2]))
    if not ts:
        raise ValueError("empty schedule file")
    T = max(ts) + 1
    if N is None:
        N = max(ns) + 1
    weights = np.zeros((T, N))
    weights[ts, ns] = qs
    sched = WeightSchedule(weights=weights, pattern=f"file({path})", seed=0)
    verify_simplex(sched, strict=True)
    return sched


def _markov_availability(rng, T, N, p_aa, p_uu):
    pi_avail = (1.0 - p_uu) / (2.0 - p_aa - p_uu)
    avail = np.empty((T, N), dtype=bool)
    avail[0] = rng.random(N) < pi_avail
    u = rng.random((T - 1, N)) if T > 1 else np.empty((0, N))
    for t in range(1, T):
        prev = avail[t - 1]
        avail[t] = np.where(prev, u[t - 1] < p_aa, u[t - 1] >= p_uu)
    return avail


def generate_schedule(spec: PatternSpec, N: int, T: int, seed: int) -> WeightSchedule:
    """Seeded, bit-reproducible schedule for the given pattern."""
    spec.validate(N)
    if T < 1:
        raise ValueError(f"need T >= 1, got {T}")
    rng = substream(seed, "schedule")
    weights = np.zeros((T, N))
    fallback = 0

    if spec.kind == "full":
        weights[:] = 1.0 / N

    elif spec.kind == "independent":
        scores = rng.random((T, N))
        sel = np.argpartition(scores, spec.S - 1, axis=1)[:, :spec.S]
        np.put_along_axis(weights, sel, 1.0 / spec.S, axis=1)

    elif spec.kind == "permutation":
        rounds_per_perm = N // spec.S
        n_perms = -(-T // rounds_per_perm)
        perms = rng.permuted(np.tile(np.arange(N), (n_perms, 1)), axis=1)
        flat = perms.reshape(-1, spec.S)[:T]
        np.put_along_axis(weights, flat, 1.0 / spec.S, axis=1)

    elif spec.kind == "periodic":
        cycle = spec.G * spec.B
        group_size = N // spec.G
        offset = spec.offset if isinstance(spec.offset, int) else int(rng.integers(cycle))
        group = ((np.arange(T) + offset) // spec.B) % spec.G
        # within each availability block, consume a fresh permutation of the
        # group S clients at a time (regularized selection among available)
        rounds_per_perm = max(group_size // spec.S, 1)
        pos_in_block = (np.arange(T) + offset) % spec.B
        for t in range(T):
            if t == 0 or pos_in_block[t] % rounds_per_perm == 0:
                perm = rng.permutation(group_size)
                cursor = 0
            if cursor + spec.S > group_size:
                perm = rng.permutation(group_size)
                cursor = 0
            chosen = group[t] * group_size + perm[cursor:cursor + spec.S]
            cursor += spec.S
            weights[t, chosen] = 1.0 / spec.S

    else:  # markov
        avail = _markov_availability(rng, T, N, spec.p_aa, spec.p_uu)
        scores = rng.random((T, N))
        for t in range(T):
            idx = np.nonzero(avail[t])[0]
            if idx.size == 0:
                # no client available: fall back to uniform over all clients
                fallback += 1
                idx = np.arange(N)
            k = min(spec.S, idx.size)
            chosen = idx[np.argsort(scores[t, idx], kind="stable")[:k]]
            weights[t, chosen] = 1.0 / k

    return WeightSchedule(weights=weights, pattern=spec.describe(), seed=int(seed),
                          fallback_rounds=fallback)


def rho_bound(schedule: WeightSchedule) -> float:
    """rho = sqrt(max_t sum_n (q_t^n)^2)."""
    return float(np.sqrt(np.max(np.sum(schedule.weights**2, axis=1))))


@dataclass(frozen=True)
class SimplexReport:
    ok: bool
    max_row_error: float
    min_weight: float
    rho2: float
    bad_rounds: list = field(default_factory=list)


def verify_simplex(schedule: WeightSchedule, strict: bool = False) -> SimplexReport:
    w = schedule.weights
    row_err = np.abs(w.sum(axis=1) - 1.0)
    neg = w.min()
    bad = np.nonzero((row_err > SIMPLEX_TOL) | (w.min(axis=1) < 0))[0]
    report = SimplexReport(ok=bad.size == 0,
                           max_row_error=float(row_err.max()),
                           min_weight=float(neg),
                           rho2=float(np.max(np.sum(w**2, axis=1))),
                           bad_rounds=bad[:20].tolist())
    if strict and not report.ok:
        raise ValueError(f"simplex violation in rounds {report.bad_rounds} "
                         f"(max row error {report.max_row_error:.3g}, "
                         f"min weight {report.min_weight:.3g})")
    return report


@dataclass(frozen=True)
class WindowStats:
    P: int
    qbar: np.ndarray            # (n_windows, N) per-window averaged weights
    mu: float                   # 1/N, fixed by the simplex constraint
    deviations_sq: np.ndarray   # (n_windows, N) squared (qbar - mu)
    var_qbar: float             # empirical Var(qbar), pooled over windows/clients
    lag_cov: np.ndarray         # autocovariance of q_t^n at lags 0..max_lag, pooled
    dropped_rounds: int         # trailing partial window excluded


def window_averages(schedule: WeightSchedule, P: int, max_lag: int = 0) -> WindowStats:
    if not 1 <= P <= schedule.T:
        raise ValueError(f"need 1 <= P <= T, got P={P}, T={schedule.T}")
    T, N = schedule.T, schedule.N
    n_windows = T // P
    used = schedule.weights[:n_windows * P]
    qbar = used.reshape(n_windows, P, N).mean(axis=1)
    mu = 1.0 / N
    dev2 = (qbar - mu) ** 2
    var_qbar = float(dev2.mean())
    lags = np.empty(max_lag + 1)
    centered = schedule.weights - mu
    for p in range(max_lag + 1):
        if p >= T:
            lags[p] = np.nan
            continue
        lags[p] = float(np.mean(centered[:T - p] * centered[p:] if p else centered**2))
    return WindowStats(P=P, qbar=qbar, mu=mu, deviations_sq=dev2,
                       var_qbar=var_qbar, lag_cov=lags,
                       dropped_rounds=T - n_windows * P)
