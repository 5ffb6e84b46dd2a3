"""Denoising diffusion core: noise schedule, forward noising, reverse sampling.

The denoiser is any callable ``denoiser(x_t, t, cond) -> eps_hat`` with output
shaped like its input. All randomness flows through explicit numpy
Generators, so sampling is deterministic given a seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step noise tables; index t runs 1..T (alpha_bar(0) == 1)."""

    T: int
    beta: np.ndarray  # (T,)
    alpha: np.ndarray  # (T,)
    alpha_bar: np.ndarray  # (T,)
    kind: str = "linear"
    beta_start: float = 0.0
    beta_end: float = 0.0

    def beta_t(self, t: int) -> float:
        self._check(t)
        return float(self.beta[t - 1])

    def alpha_t(self, t: int) -> float:
        self._check(t)
        return float(self.alpha[t - 1])

    def alpha_bar_t(self, t: int) -> float:
        if t == 0:
            return 1.0
        self._check(t)
        return float(self.alpha_bar[t - 1])

    def sigma2_t(self, t: int) -> float:
        """Posterior variance (1 - abar_{t-1}) / (1 - abar_t) * (1 - alpha_t)."""
        self._check(t)
        return ((1.0 - self.alpha_bar_t(t - 1)) / (1.0 - self.alpha_bar_t(t))
                * (1.0 - self.alpha_t(t)))

    def _check(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ValueError(f"timestep {t} outside 1..{self.T}")


@dataclass(frozen=True)
class GuidanceConfig:
    scale: float = 0.0  # w; 0 disables guidance
    uncond_prob: float = 0.1  # condition-dropout probability during training

    def __post_init__(self):
        if self.scale < 0:
            raise ValueError("guidance scale must be >= 0")
        if not 0.0 <= self.uncond_prob <= 1.0:
            raise ValueError("uncond_prob must lie in [0, 1]")


DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


def make_schedule(T: int, beta_start: float = DEFAULT_BETA_START,
                  beta_end: float = DEFAULT_BETA_END, kind: str = "linear") -> NoiseSchedule:
    """Linear beta schedule with running-product alpha_bar."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError("need 0 < beta_start <= beta_end < 1")
    if kind != "linear":
        raise ValueError(f"unknown schedule kind {kind!r}")
    beta = np.linspace(beta_start, beta_end, T)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    return NoiseSchedule(T, beta, alpha, alpha_bar, kind, beta_start, beta_end)


def _assert_finite(x: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values in {where}")


def q_sample(x0: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Closed-form forward marginal sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    x0 = np.asarray(x0, np.float64)
    eps = np.asarray(eps, np.float64)
    if x0.shape != eps.shape:
        raise ValueError(f"shape mismatch {x0.shape} vs {eps.shape}")
    abar = sched.alpha_bar_t(t)
    out = np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * eps
    _assert_finite(out, "q_sample")
    return out


def training_loss(denoiser, x0: np.ndarray, cond, t: int, eps: np.ndarray,
                  sched: NoiseSchedule) -> float:
    """Elementwise-mean squared error between eps and the denoiser prediction."""
    x_t = q_sample(x0, t, eps, sched)
    eps_hat = denoiser(x_t, t, cond)
    if eps_hat.shape != eps.shape:
        raise ValueError(f"denoiser output {eps_hat.shape} != noise {eps.shape}")
    return float(np.mean((eps - eps_hat) ** 2))


def reconstruct_x0(x_t: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Algebraic inversion of q_sample given the exact noise."""
    abar = sched.alpha_bar_t(t)
    return (x_t - np.sqrt(1.0 - abar) * eps) / np.sqrt(abar)


def p_sample_step(denoiser, x_t: np.ndarray, t: int, cond, sched: NoiseSchedule,
                  rng: np.random.Generator) -> np.ndarray:
    """One reverse step; the final step (t == 1) adds no noise."""
    sched._check(t)
    eps_hat = denoiser(x_t, t, cond)
    alpha = sched.alpha_t(t)
    abar = sched.alpha_bar_t(t)
    mu = (x_t - (1.0 - alpha) / np.sqrt(1.0 - abar) * eps_hat) / np.sqrt(alpha)
    if t > 1:
        sigma = np.sqrt(sched.sigma2_t(t))
        mu = mu + sigma * rng.standard_normal(x_t.shape)
    _assert_finite(mu, f"p_sample_step t={t}")
    return mu


def sample(denoiser, cond, sched: NoiseSchedule, shape: tuple, seed: int,
           guidance: GuidanceConfig | None = None) -> np.ndarray:
    """Full reverse trajectory from seeded Gaussian noise; output unclamped.

    With guidance enabled, the epsilon prediction at each step is the
    classifier-free combination from ``guided_epsilon``.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape)
    if guidance is not None and guidance.scale > 0:
        base = denoiser
        denoiser = lambda x_t, t, c: guided_epsilon(base, x_t, t, c, guidance)
    for t in range(sched.T, 0, -1):
        x = p_sample_step(denoiser, x, t, cond, sched, rng)
    return x


def guided_epsilon(denoiser, x_t: np.ndarray, t: int, cond, g: GuidanceConfig):
    """Classifier-free combination (1+w) eps(cond) - w eps(uncond)."""
    eps_cond = denoiser(x_t, t, cond)
    if g.scale == 0.0:
        return eps_cond
    eps_uncond = denoiser(x_t, t, None)
    return (1.0 + g.scale) * eps_cond - g.scale * eps_uncond


def write_schedule(sched: NoiseSchedule, path) -> None:
    """Plain-text key-value serialization for experiment reproducibility."""
    with open(path, "w") as f:
        f.write(f"T {sched.T}\n")
        f.write(f"beta_start {sched.beta_start!r}\n")
        f.write(f"beta_end {sched.beta_end!r}\n")
        f.write(f"kind {sched.kind}\n")


def read_schedule(path) -> NoiseSchedule:
    fields = {}
    with open(path) as f:
        for line in f:
            parts = line.split()
            if len(parts) == 2:
                fields[parts[0]] = parts[1]
    return make_schedule(int(fields["T"]), float(fields["beta_start"]),
                         float(fields["beta_end"]), fields["kind"])
