"""Forward noising and discrete DDIM reverse stepping.

The reverse update from step t to t-1 is

    x_{t-1} = sqrt(ab_{t-1}) * (x_t - sqrt(1 - ab_t) * eps) / sqrt(ab_t)
            + sqrt(1 - ab_{t-1} - sigma_t^2) * eps
            + sigma_t * noise

with ab the cumulative alpha_bar table and eps the model prediction at
step t.  With sigma_t = 0 the update is a deterministic function of
(x_t, t); the ancestral family is parameterized by the usual eta
convention.  Random draws come from counter-based streams keyed by
(seed, sample_index, t), so batch execution order cannot change results.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .denoiser import EpsilonModel
from .rng import step_rng
from .schedule import NoiseSchedule


class SigmaMode(Enum):
    DETERMINISTIC = "deterministic"  # sigma_t = 0 everywhere
    ANCESTRAL = "ancestral"          # eta-scaled DDPM-style sigma_t


@dataclass(frozen=True)
class SamplerConfig:
    schedule: NoiseSchedule
    sigma_mode: SigmaMode = SigmaMode.DETERMINISTIC
    eta: float = 1.0
    seed: int = 0

    def sigma(self, t: int) -> float:
        if self.sigma_mode == SigmaMode.DETERMINISTIC:
            return 0.0
        return ddim_sigma(self.schedule, t, self.eta)


def ddim_sigma(schedule: NoiseSchedule, t: int, eta: float) -> float:
    """Per-step noise scale sigma_t under the eta convention."""
    ab_t = schedule.alpha_bar(t)
    ab_prev = schedule.alpha_bar(t - 1)
    return float(
        eta
        * np.sqrt((1.0 - ab_prev) / (1.0 - ab_t))
        * np.sqrt(1.0 - ab_t / ab_prev)
    )


def forward_noise(
    x0: np.ndarray, t: int, schedule: NoiseSchedule, rng: np.random.Generator
) -> np.ndarray:
    """One draw of x_t given x_0; at t = 0 returns x0 unchanged."""
    x0 = np.asarray(x0, dtype=np.float64)
    if not 0 <= t <= schedule.steps_T:
        raise ValueError(f"step {t} outside [0, {schedule.steps_T}]")
    ab = schedule.alpha_bar(t)
    if ab >= 1.0:
        return x0.copy()
    eps = rng.standard_normal(x0.shape)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def ddim_step(
    x_t: np.ndarray,
    t: int,
    model: EpsilonModel,
    schedule: NoiseSchedule,
    sigma_t: float = 0.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """One reverse step t -> t-1; deterministic when sigma_t = 0."""
    x_t = np.asarray(x_t, dtype=np.float64)
    if not 1 <= t <= schedule.steps_T:
        raise ValueError(f"step {t} outside [1, {schedule.steps_T}]")
    ab_t = schedule.alpha_bar(t)
    ab_prev = schedule.alpha_bar(t - 1)
    radicand = 1.0 - ab_prev - sigma_t**2
    if radicand < 0.0:
        raise ValueError(
            f"sigma_t^2 = {sigma_t**2} exceeds 1 - alpha_bar_{t - 1} = {1.0 - ab_prev}"
        )
    eps = model.predict_epsilon(x_t, t)
    x0_hat = (x_t - np.sqrt(1.0 - ab_t) * eps) / np.sqrt(ab_t)
    out = np.sqrt(ab_prev) * x0_hat + np.sqrt(radicand) * eps
    if sigma_t > 0.0:
        if rng is None:
            raise ValueError("stochastic step needs an rng")
        out = out + sigma_t * rng.standard_normal(x_t.shape)
    return out


def ddim_sample(
    x_T: np.ndarray,
    model: EpsilonModel,
    cfg: SamplerConfig,
    sample_index: int = 0,
) -> np.ndarray:
    """Iterate the reverse update from t = T down to 1.

    In deterministic mode the result is a pure function of x_T, and a
    model that broadcasts over leading axes may be fed a whole batch at
    once (bit-identical to per-sample runs).  In ancestral mode each
    step's noise comes from the stream keyed by (cfg.seed, sample_index,
    t), so x_T must be a single sample's state, one call per sample.
    """
    x = np.asarray(x_T, dtype=np.float64)
    for t in range(cfg.schedule.steps_T, 0, -1):
        sigma_t = cfg.sigma(t)
        rng = step_rng(cfg.seed, sample_index, t) if sigma_t > 0.0 else None
        x = ddim_step(x, t, model, cfg.schedule, sigma_t, rng)
    return x
