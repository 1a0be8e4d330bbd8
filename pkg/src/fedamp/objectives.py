"""Client objective populations with analytically known constants.

The default population is a family of quadratics sharing one curvature
matrix, so the smoothness constant, the optimum, and the gradient
divergence are all exact.  A synthetic logistic-regression population is
provided for stress testing; its constants are estimated, not exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit


@dataclass(frozen=True)
class NoiseModel:
    """Additive gradient noise: 'none', 'gaussian', or 'sphere'.

    Gaussian noise is isotropic with per-coordinate variance sigma^2/m so
    that E||xi||^2 = sigma^2 exactly.  Sphere noise is uniform on the
    sphere of radius sigma, so ||xi|| = sigma almost surely.
    """

    kind: str = "none"
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian", "sphere"):
            raise ValueError(f"unknown noise kind: {self.kind!r}")
        if self.sigma < 0 or not np.isfinite(self.sigma):
            raise ValueError(f"invalid noise scale: {self.sigma}")

    @property
    def variance(self) -> float:
        return 0.0 if self.kind == "none" else self.sigma**2

    def sample(self, rng: np.random.Generator, m: int) -> np.ndarray:
        if self.kind == "none" or self.sigma == 0.0:
            return np.zeros(m)
        if self.kind == "gaussian":
            return rng.normal(0.0, self.sigma / np.sqrt(m), size=m)
        # sphere: uniform direction scaled to radius sigma
        v = rng.normal(size=m)
        return v * (self.sigma / np.linalg.norm(v))

    def sample_block(self, rng: np.random.Generator, steps: int, m: int) -> np.ndarray:
        """Noise for `steps` consecutive draws from one stream, shape (steps, m)."""
        if self.kind == "none" or self.sigma == 0.0:
            return np.zeros((steps, m))
        if self.kind == "gaussian":
            return rng.normal(0.0, self.sigma / np.sqrt(m), size=(steps, m))
        v = rng.normal(size=(steps, m))
        return v * (self.sigma / np.linalg.norm(v, axis=1, keepdims=True))


@dataclass(frozen=True)
class QuadraticPopulation:
    """N quadratic clients F_n(x) = 0.5 (x - c_n)' A (x - c_n) with shared A.

    Because the curvature is shared, per-client gradients differ from the
    global gradient by the constant vector A(c_bar - c_n), which makes all
    divergence constants exact.
    """

    A: np.ndarray                 # (m, m) symmetric PSD
    centers: np.ndarray           # (N, m)
    diag: np.ndarray | None = None  # eigenvalues when A is diagonal (fast path)
    # derived, filled by the builder
    center_mean: np.ndarray = field(default=None)
    x_star: np.ndarray = field(default=None)
    f_star: float = 0.0
    lipschitz: float = 0.0
    d2: float = 0.0

    @property
    def N(self) -> int:
        return self.centers.shape[0]

    @property
    def m(self) -> int:
        return self.centers.shape[1]

    def _check_index(self, n: int):
        if not 0 <= n < self.N:
            raise IndexError(f"client index {n} out of range [0, {self.N})")

    def _apply_A(self, v: np.ndarray) -> np.ndarray:
        if self.diag is not None:
            return self.diag * v
        return self.A @ v

    def grad(self, n: int, x: np.ndarray) -> np.ndarray:
        self._check_index(n)
        return self._apply_A(x - self.centers[n])

    def value(self, n: int, x: np.ndarray) -> float:
        self._check_index(n)
        d = x - self.centers[n]
        return 0.5 * float(d @ self._apply_A(d))

    def global_grad(self, x: np.ndarray) -> np.ndarray:
        # mean of A(x - c_n) collapses to A(x - c_bar)
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite evaluation point")
        return self._apply_A(x - self.center_mean)

    def global_value(self, x: np.ndarray) -> float:
        # bias-variance split: mean client value = value at c_bar plus f*
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite evaluation point")
        d = x - self.center_mean
        return 0.5 * float(d @ self._apply_A(d)) + self.f_star

    def gradient_offsets(self) -> np.ndarray:
        """Constant per-client offsets grad F_n(x) - grad f(x), shape (N, m)."""
        diff = self.center_mean[None, :] - self.centers
        if self.diag is not None:
            return diff * self.diag[None, :]
        return diff @ self.A.T

    def stochastic_grad(self, noise: NoiseModel, n: int, x: np.ndarray,
                        rng: np.random.Generator) -> np.ndarray:
        return self.grad(n, x) + noise.sample(rng, self.m)


def _derived_constants(A, centers, diag):
    cbar = centers.mean(axis=0)
    if diag is not None:
        offsets = (cbar[None, :] - centers) * diag[None, :]
        lip = float(np.max(diag))
    else:
        offsets = (cbar[None, :] - centers) @ A.T
        lip = float(np.linalg.eigvalsh(A)[-1])
    d2 = float(np.max(np.sum(offsets**2, axis=1))) if centers.shape[0] else 0.0
    dev = centers - cbar[None, :]
    if diag is not None:
        fstar = 0.5 * float(np.sum(dev**2 * diag[None, :])) / centers.shape[0]
    else:
        fstar = 0.5 * float(np.einsum("nm,mk,nk->", dev, A, dev)) / centers.shape[0]
    return cbar, lip, d2, fstar


def build_quadratic(N: int, m: int, L: float, spread: float, seed: int,
                    eigenvalues: np.ndarray | None = None,
                    rotate: bool = True) -> QuadraticPopulation:
    """Seeded quadratic population with exact constants.

    A = Q diag(lam) Q' with lam_max pinned to L; centers drawn isotropically
    with scale `spread` and re-centered so the optimum is the center mean.
    Pass `eigenvalues` to control the spectrum (scaled so max = L), and
    rotate=False to keep A diagonal (enables the elementwise fast path).
    """
    if N < 1 or m < 1:
        raise ValueError(f"need N >= 1 and m >= 1, got N={N}, m={m}")
    if not (np.isfinite(L) and L > 0):
        raise ValueError(f"curvature scale must be positive and finite: {L}")
    if not (np.isfinite(spread) and spread >= 0):
        raise ValueError(f"spread must be nonnegative and finite: {spread}")

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    if eigenvalues is None:
        lam = rng.uniform(0.1, 1.0, size=m)
        lam[rng.integers(m)] = 1.0
        lam *= L
    else:
        lam = np.asarray(eigenvalues, dtype=float)
        if lam.shape != (m,) or np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ValueError("eigenvalues must be m nonnegative finite values")
        lam = lam * (L / np.max(lam))

    diag = None
    if rotate and m > 1:
        Q, _ = np.linalg.qr(rng.normal(size=(m, m)))
        A = (Q * lam[None, :]) @ Q.T
        A = 0.5 * (A + A.T)
    else:
        A = np.diag(lam)
        diag = lam.copy()

    centers = spread * rng.normal(size=(N, m))
    centers = centers - centers.mean(axis=0, keepdims=True)

    cbar, lip, d2, fstar = _derived_constants(A, centers, diag)
    return QuadraticPopulation(A=A, centers=centers, diag=diag,
                               center_mean=cbar, x_star=cbar.copy(),
                               f_star=fstar, lipschitz=lip, d2=d2)


@dataclass(frozen=True)
class LogisticPopulation:
    """Synthetic l2-regularized logistic clients with label-skewed clusters."""

    features: np.ndarray   # (N, k, m)
    labels: np.ndarray     # (N, k) in {-1, +1}
    lam: float

    @property
    def N(self) -> int:
        return self.features.shape[0]

    @property
    def m(self) -> int:
        return self.features.shape[2]

    @property
    def samples_per_client(self) -> int:
        return self.features.shape[1]

    @property
    def lipschitz(self) -> float:
        """Valid upper bound: lam + max_n lam_max(X' X) / (4 k)."""
        k = self.samples_per_client
        worst = 0.0
        for n in range(self.N):
            X = self.features[n]
            s = np.linalg.norm(X, 2)  # largest singular value
            worst = max(worst, s * s / (4.0 * k))
        return self.lam + worst

    def _check_index(self, n: int):
        if not 0 <= n < self.N:
            raise IndexError(f"client index {n} out of range [0, {self.N})")

    def value(self, n: int, x: np.ndarray) -> float:
        self._check_index(n)
        margins = self.labels[n] * (self.features[n] @ x)
        return float(np.mean(np.logaddexp(0.0, -margins))) + 0.5 * self.lam * float(x @ x)

    def grad(self, n: int, x: np.ndarray) -> np.ndarray:
        self._check_index(n)
        X, y = self.features[n], self.labels[n]
        coeff = -y * expit(-y * (X @ x))
        return coeff @ X / len(y) + self.lam * x

    def minibatch_grad(self, n: int, x: np.ndarray, batch: int,
                       rng: np.random.Generator) -> np.ndarray:
        """Unbiased minibatch gradient, sampled without replacement."""
        self._check_index(n)
        k = self.samples_per_client
        idx = rng.choice(k, size=min(batch, k), replace=False)
        X, y = self.features[n][idx], self.labels[n][idx]
        coeff = -y * expit(-y * (X @ x))
        return coeff @ X / len(y) + self.lam * x

    def global_grad(self, x: np.ndarray) -> np.ndarray:
        acc = np.zeros(self.m)
        for n in range(self.N):
            acc += self.grad(n, x)
        return acc / self.N

    def global_value(self, x: np.ndarray) -> float:
        acc = 0.0
        for n in range(self.N):
            acc += self.value(n, x)
        return acc / self.N

    def stochastic_grad(self, noise: NoiseModel, n: int, x: np.ndarray,
                        rng: np.random.Generator, batch: int | None = None) -> np.ndarray:
        if batch is not None:
            return self.minibatch_grad(n, x, batch, rng)
        return self.grad(n, x) + noise.sample(rng, self.m)


def build_logistic(N: int, m: int, samples_per_client: int, seed: int,
                   lam: float = 1e-3, cluster_scale: float = 2.0) -> LogisticPopulation:
    """Non-IID logistic population: each client's positives sit in its own cluster."""
    if N < 1 or m < 1 or samples_per_client < 2:
        raise ValueError("need N >= 1, m >= 1, samples_per_client >= 2")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    feats = np.empty((N, samples_per_client, m))
    labs = np.empty((N, samples_per_client))
    for n in range(N):
        mu = cluster_scale * rng.normal(size=m)
        y = np.where(np.arange(samples_per_client) % 4 == 0, -1.0, 1.0)  # label skew
        rng.shuffle(y)
        feats[n] = rng.normal(size=(samples_per_client, m)) + np.outer(y, mu)
        labs[n] = y
    return LogisticPopulation(features=feats, labels=labs, lam=lam)
