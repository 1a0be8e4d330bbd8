"""Divergence diagnostics, concentration checks, learning-rate planning.

Covers the participation-weighted divergence constants (single-round
weighted bias, within-round spread, and the P-round time-averaged bias),
window-concentration checks for independent and Markov participation,
learning-rate configurators with their validity constraints, and
log-log slope fitting for convergence-rate verification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .objectives import QuadraticPopulation
from .participation import (PatternSpec, WeightSchedule, generate_schedule,
                            window_averages)
from .streams import derive_seed, substream


# ---------------------------------------------------------------------------
# divergence constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DivergenceReport:
    d2: float
    beta2: float                 # max_t || sum_n q_t^n (grad F_n - grad f) ||^2
    nu2: float                   # max_t sum_n q_t^n || grad F_n - weighted mean ||^2
    delta2: float                # max over aligned windows of the P-averaged bias
    P: int
    decomposition_residual: float  # max_t |(beta2(t)+nu2(t)) - sum q ||offs||^2|
    max_round_sum: float           # max_t (beta2(t) + nu2(t))
    exact: bool
    n_windows: int = 0

    def validate(self):
        tol = 1e-10
        assert self.beta2 >= 0 and self.nu2 >= 0 and self.delta2 >= 0
        assert self.max_round_sum <= self.d2 + tol
        assert self.delta2 <= self.beta2 + tol


def _round_quantities(offsets: np.ndarray, weights: np.ndarray, chunk: int = 1024):
    """Per-round beta2(t), nu2(t) for constant per-client offsets (N, m)."""
    T = weights.shape[0]
    beta_t = np.empty(T)
    nu_t = np.empty(T)
    for lo in range(0, T, chunk):
        w = weights[lo:lo + chunk]
        b = w @ offsets                       # (chunk, m) weighted offsets
        beta_t[lo:lo + chunk] = np.sum(b**2, axis=1)
        diff = offsets[None, :, :] - b[:, None, :]
        nu_t[lo:lo + chunk] = np.einsum("tn,tnm->t", w, diff**2)
    return beta_t, nu_t


def divergence_exact(pop: QuadraticPopulation, schedule: WeightSchedule,
                     P: int) -> DivergenceReport:
    """Exact constants, valid because shared-curvature quadratics have
    gradient differences that do not depend on the evaluation point."""
    if not isinstance(pop, QuadraticPopulation):
        raise TypeError("exact mode needs a shared-curvature QuadraticPopulation; "
                        "use divergence_sampled for other populations")
    offsets = pop.gradient_offsets()
    w = schedule.weights
    beta_t, nu_t = _round_quantities(offsets, w)
    weighted_d2 = w @ np.sum(offsets**2, axis=1)
    residual = float(np.max(np.abs(beta_t + nu_t - weighted_d2)))
    n_windows = schedule.T // P
    b = w[:n_windows * P] @ offsets
    win = b.reshape(n_windows, P, -1).mean(axis=1)
    delta2 = float(np.max(np.sum(win**2, axis=1))) if n_windows else 0.0
    return DivergenceReport(d2=pop.d2, beta2=float(beta_t.max()),
                            nu2=float(nu_t.max()), delta2=delta2, P=P,
                            decomposition_residual=residual,
                            max_round_sum=float((beta_t + nu_t).max()),
                            exact=True, n_windows=n_windows)


def divergence_sampled(pop, schedule: WeightSchedule, P: int,
                       points: np.ndarray) -> DivergenceReport:
    """Sampled mode: maxima over the supplied evaluation points.

    The reported values are lower bounds of the true suprema over x.
    """
    points = np.atleast_2d(points)
    if points.size == 0:
        raise ValueError("empty sample set")
    w = schedule.weights
    n_windows = schedule.T // P
    d2 = beta2 = nu2 = delta2 = max_sum = residual = 0.0
    for x in points:
        grads = np.stack([pop.grad(n, x) for n in range(pop.N)])
        offsets = grads - grads.mean(axis=0, keepdims=True)
        d2 = max(d2, float(np.max(np.sum(offsets**2, axis=1))))
        beta_t, nu_t = _round_quantities(offsets, w)
        beta2 = max(beta2, float(beta_t.max()))
        nu2 = max(nu2, float(nu_t.max()))
        max_sum = max(max_sum, float((beta_t + nu_t).max()))
        weighted_d2 = w @ np.sum(offsets**2, axis=1)
        residual = max(residual, float(np.max(np.abs(beta_t + nu_t - weighted_d2))))
        if n_windows:
            b = w[:n_windows * P] @ offsets
            win = b.reshape(n_windows, P, -1).mean(axis=1)
            delta2 = max(delta2, float(np.max(np.sum(win**2, axis=1))))
    return DivergenceReport(d2=d2, beta2=beta2, nu2=nu2, delta2=delta2, P=P,
                            decomposition_residual=residual,
                            max_round_sum=max_sum, exact=False,
                            n_windows=n_windows)


@dataclass(frozen=True)
class DecompositionReport:
    max_relative_residual: float
    beta2: float
    nu2: float
    max_round_sum: float
    d2: float
    ok: bool


def decomposition_check(pop, schedule: WeightSchedule,
                        points: np.ndarray) -> DecompositionReport:
    """Verify, per (round, point), that the participation-weighted divergence
    splits exactly into within-round spread plus weighted-bias terms."""
    points = np.atleast_2d(points)
    w = schedule.weights
    worst = 0.0
    beta2 = nu2 = max_sum = d2 = 0.0
    for x in points:
        grads = np.stack([pop.grad(n, x) for n in range(pop.N)])
        gbar = grads.mean(axis=0)
        offs = grads - gbar
        d2 = max(d2, float(np.max(np.sum(offs**2, axis=1))))
        lhs = w @ np.sum(offs**2, axis=1)
        b = w @ offs
        beta_t = np.sum(b**2, axis=1)
        wmean = w @ grads
        diff = grads[None, :, :] - wmean[:, None, :]
        nu_t = np.einsum("tn,tnm->t", w, diff**2)
        rhs = beta_t + nu_t
        scale = np.maximum(np.abs(lhs), 1e-30)
        worst = max(worst, float(np.max(np.abs(lhs - rhs) / scale)))
        beta2 = max(beta2, float(beta_t.max()))
        nu2 = max(nu2, float(nu_t.max()))
        max_sum = max(max_sum, float(rhs.max()))
    return DecompositionReport(max_relative_residual=worst, beta2=beta2, nu2=nu2,
                               max_round_sum=max_sum, d2=d2,
                               ok=worst <= 1e-10 and max_sum <= d2 + 1e-10)


# ---------------------------------------------------------------------------
# concentration checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundCheck:
    bound: str
    P: int
    c: float
    threshold: float
    trials: int
    violation_rate: float
    passed: bool


def hoeffding_threshold(P: int, c: float) -> float:
    return math.log(2.0 / c) / (2.0 * P)


def hoeffding_check(spec: PatternSpec, N: int, P: int, c: float, trials: int,
                    seed: int) -> BoundCheck:
    """Empirical check of the window-concentration bound for participation
    that is independent across rounds (weights lie in [0, 1])."""
    if spec.kind not in ("independent", "full"):
        raise ValueError("hoeffding_check needs a pattern independent across rounds")
    threshold = hoeffding_threshold(P, c)
    violations = 0
    total = 0
    chunk = max(1, min(trials, 131072 // P))
    done = 0
    part = 0
    while done < trials:
        k = min(chunk, trials - done)
        sched = generate_schedule(spec, N, k * P, derive_seed(seed, f"hoeffding-{part}"))
        stats = window_averages(sched, P)
        violations += int(np.sum(stats.deviations_sq > threshold))
        total += stats.deviations_sq.size
        done += k
        part += 1
    rate = violations / total
    slack = 3.0 * math.sqrt(c * (1.0 - c) / trials)
    return BoundCheck(bound="hoeffding", P=P, c=c, threshold=threshold,
                      trials=trials, violation_rate=rate,
                      passed=rate <= c + slack)


@dataclass(frozen=True)
class MixingReport:
    P_list: list
    var_qbar: list               # empirical Var(qbar) per P
    slope: float                 # fitted d log Var / d log P
    upsilon_hat2: float          # Var(q) + 2 sum_p Cov(q_t, q_{t+p})
    cov_lags: np.ndarray         # autocovariance at lags 0..max_lag
    cov_ratio: float             # fitted per-lag geometric decay of Cov
    truncation_lag: int
    converged: bool              # covariance cutoff reached within max_lag
    chebyshev: list              # BoundCheck per P


def chebyshev_mixing_check(spec: PatternSpec, N: int, P_list, trials: int,
                           seed: int, c: float = 0.1,
                           max_lag: int = 40) -> MixingReport:
    """Variance-scaling and Chebyshev checks for Markov availability.

    Estimates Var(qbar) on aligned windows for each P, fits the log-log
    slope, estimates the long-run variance from the truncated covariance
    series, and measures per-P violation rates of the Chebyshev window
    bound at level c.
    """
    if spec.kind != "markov":
        raise ValueError("chebyshev_mixing_check needs a markov pattern")
    P_list = sorted(int(p) for p in P_list)
    T = max(P_list) * trials
    sched = generate_schedule(spec, N, T, seed)
    base = window_averages(sched, P_list[0], max_lag=max_lag)

    var0 = float(base.lag_cov[0])
    cov = base.lag_cov[1:]
    cut = max_lag
    converged = False
    for p in range(1, max_lag + 1):
        if abs(base.lag_cov[p]) < 1e-4 * var0:
            cut = p
            converged = True
            break
    upsilon_hat2 = var0 + 2.0 * float(np.sum(base.lag_cov[1:cut + 1]))

    n_fit = 0
    while n_fit < min(cut, 5) and cov[n_fit] > 0:
        n_fit += 1
    if n_fit >= 2:
        slope_cov = np.polyfit(np.arange(1, n_fit + 1),
                               np.log(cov[:n_fit]), 1)[0]
        cov_ratio = float(np.exp(slope_cov))
    else:
        cov_ratio = float("nan")

    variances = []
    checks = []
    for P in P_list:
        stats = window_averages(sched, P)
        variances.append(float(stats.var_qbar))
        thr = upsilon_hat2 / (c * P)
        rate = float(np.mean(stats.deviations_sq > thr))
        slack = 3.0 * math.sqrt(c * (1.0 - c) / max(stats.deviations_sq.size, 1))
        checks.append(BoundCheck(bound="chebyshev", P=P, c=c, threshold=thr,
                                 trials=stats.deviations_sq.shape[0],
                                 violation_rate=rate, passed=rate <= c + slack))
    slope = float(np.polyfit(np.log(P_list), np.log(variances), 1)[0])
    return MixingReport(P_list=P_list, var_qbar=variances, slope=slope,
                        upsilon_hat2=upsilon_hat2, cov_lags=base.lag_cov,
                        cov_ratio=cov_ratio, truncation_lag=cut,
                        converged=converged, chebyshev=checks)


# ---------------------------------------------------------------------------
# learning-rate planning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LRPlan:
    gamma: float
    eta: float
    source: str
    valid: bool
    notes: list = field(default_factory=list)


def _plan_notes(gamma, eta, L, I, P, T):
    notes = []
    ok = True
    if gamma > 1.0 / (12.0 * L * I * P) + 1e-15:
        notes.append(f"gamma {gamma:.3g} exceeds 1/(12 L I P)")
        ok = False
    if gamma * eta > 1.0 / (L * I * P) * (1 + 1e-12):
        notes.append(f"gamma*eta {gamma * eta:.3g} exceeds 1/(L I P)")
        ok = False
    if P > T / 2:
        notes.append(f"P={P} exceeds T/2={T / 2:g}")
        ok = False
    return ok, notes


def plan_rates_adaptive(L, F0, sigma, rho, I, P, T) -> LRPlan:
    """gamma = 1/(12 L I P sqrt(T)); eta = min(12 P sqrt(L I F0)/(sigma rho), 12 sqrt(T))."""
    for name, v in [("L", L), ("F0", F0), ("rho", rho), ("I", I), ("P", P), ("T", T)]:
        if v <= 0 or not np.isfinite(v):
            raise ValueError(f"{name} must be positive and finite, got {v}")
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    gamma = 1.0 / (12.0 * L * I * P * math.sqrt(T))
    cap = 12.0 * math.sqrt(T)
    if sigma > 0:
        eta = min(12.0 * P * math.sqrt(L * I * F0) / (sigma * rho), cap)
    else:
        eta = cap
    ok, notes = _plan_notes(gamma, eta, L, I, P, T)
    return LRPlan(gamma=gamma, eta=eta, source="cor3.2", valid=ok, notes=notes)


def plan_rates_fixed_amp(L, F0, sigma, rho, I, P, T) -> LRPlan:
    """Requires sqrt(F0)/(rho sqrt(L I T)) <= 1/(L I P); fixed eta branch."""
    for name, v in [("L", L), ("F0", F0), ("rho", rho), ("I", I), ("P", P), ("T", T)]:
        if v <= 0 or not np.isfinite(v):
            raise ValueError(f"{name} must be positive and finite, got {v}")
    gamma = 1.0 / (12.0 * L * I * P * math.sqrt(T))
    eta = 12.0 * P * math.sqrt(L * I * F0) / rho
    lhs = math.sqrt(F0) / (rho * math.sqrt(L * I * T))
    rhs = 1.0 / (L * I * P)
    ok, notes = _plan_notes(gamma, eta, L, I, P, T)
    if lhs > rhs * (1 + 1e-12):
        notes = notes + [f"precondition fails: sqrt(F0)/(rho sqrt(LIT)) = {lhs:.3g} "
                         f"> 1/(LIP) = {rhs:.3g}"]
        ok = False
    return LRPlan(gamma=gamma, eta=eta, source="cor3.3", valid=ok, notes=notes)


def choose_amplification_interval(upsilon2: float, N: int, I: int, T: int) -> tuple[int, bool]:
    """P = round(upsilon2 N^(5/2) sqrt(I T)) clamped to [1, T // 2].

    Returns (P, clamped).
    """
    if upsilon2 < 0 or N < 1 or I < 1 or T < 2:
        raise ValueError("need upsilon2 >= 0, N >= 1, I >= 1, T >= 2")
    raw = round(upsilon2 * N**2.5 * math.sqrt(I * T))
    P = int(min(max(raw, 1), T // 2))
    return P, P != raw


# ---------------------------------------------------------------------------
# slope fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    stderr: float
    n_points: int
    excluded: list = field(default_factory=list)


def fit_convergence_slope(T_values, min_grad_norms, diverged=None) -> SlopeFit:
    """OLS of log(min ||grad f||^2) against log T."""
    T_values = np.asarray(T_values, dtype=float)
    y = np.asarray(min_grad_norms, dtype=float)
    mask = np.isfinite(y) & (y > 0)
    if diverged is not None:
        mask &= ~np.asarray(diverged, dtype=bool)
    excluded = T_values[~mask].tolist()
    if mask.sum() < 3:
        raise ValueError("need at least 3 usable (T, value) points")
    lx, ly = np.log(T_values[mask]), np.log(y[mask])
    (slope, intercept), cov = np.polyfit(lx, ly, 1, cov=True)
    return SlopeFit(slope=float(slope), intercept=float(intercept),
                    stderr=float(np.sqrt(cov[0, 0])), n_points=int(mask.sum()),
                    excluded=excluded)


def ball_samples(center: np.ndarray, radius: float, count: int, seed: int) -> np.ndarray:
    """Evaluation points drawn uniformly from a ball around a center."""
    rng = substream(seed, "samples")
    v = rng.normal(size=(count, len(center)))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = radius * rng.random(count) ** (1.0 / len(center))
    return center[None, :] + v * r[:, None]
