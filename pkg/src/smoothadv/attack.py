"""L-infinity projected gradient ascent on the inputs, plain and masked."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import NetworkSpec, NumericalError, forward, loss_and_grad_inputs


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float = 0.3
    step_size: float = 0.02
    steps: int = 40
    random_init: bool = True
    restarts: int = 1
    clip_min: float = 0.0
    clip_max: float = 1.0
    # Algorithm-as-written variant: ascend along the raw gradient.
    use_sign: bool = True

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be non-negative")
        if not (np.isfinite(self.step_size) and self.step_size > 0):
            raise ValueError("step_size must be positive and finite")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.clip_max < self.clip_min:
            raise ValueError("clip_max must not be below clip_min")
        if self.epsilon > self.clip_max - self.clip_min:
            raise ValueError("epsilon exceeds the width of the input range")


@dataclass
class AdvBatch:
    x_adv: np.ndarray
    x_clean: np.ndarray
    labels: np.ndarray
    steps_applied: np.ndarray
    delta_norms: np.ndarray
    losses: np.ndarray


def project(x, x_clean, cfg: AttackConfig) -> np.ndarray:
    """Clamp into the epsilon box around ``x_clean`` and the valid input range."""
    lo = np.maximum(x_clean - cfg.epsilon, cfg.clip_min)
    hi = np.minimum(x_clean + cfg.epsilon, cfg.clip_max)
    return np.minimum(np.maximum(x, lo), hi)


def _attack(params, spec, x, y, cfg, rng, metric=None, lam=None):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    n = x.shape[0]
    every = max(1, int(getattr(metric, "recompute_every", 1)))
    best_x = best_loss = best_steps = None
    for _ in range(cfg.restarts):
        cur = x.copy()
        if cfg.random_init:
            cur = project(x + rng.uniform(-cfg.epsilon, cfg.epsilon, size=x.shape), x, cfg)
        applied = np.zeros(n, dtype=np.int64)
        mask = np.ones(n, dtype=bool)
        for k in range(cfg.steps):
            if metric is not None and k % every == 0:
                mask = np.asarray(metric.mask(params, spec, cur, y, lam), dtype=bool)
            if not mask.any():
                continue
            _, g = loss_and_grad_inputs(params, spec, cur, y)
            direction = np.sign(g) if cfg.use_sign else g
            stepped = project(cur + cfg.step_size * direction, x, cfg)
            cur = np.where(mask[:, None], stepped, cur)
            applied += mask
        losses = forward(params, spec, cur, y).losses
        if not np.all(np.isfinite(losses)):
            raise NumericalError("non-finite adversarial loss")
        if best_x is None:
            best_x, best_loss, best_steps = cur, losses, applied
        else:
            better = losses > best_loss
            best_x = np.where(better[:, None], cur, best_x)
            best_loss = np.where(better, losses, best_loss)
            best_steps = np.where(better, applied, best_steps)
    norms = np.max(np.abs(best_x - x), axis=1) if x.shape[1] else np.zeros(n)
    return AdvBatch(best_x, x, y, best_steps, norms, best_loss)


def pgd(params, spec: NetworkSpec, inputs, labels, cfg: AttackConfig, rng) -> AdvBatch:
    """Standard PGD; among restarts the highest final loss wins per sample."""
    return _attack(params, spec, inputs, labels, cfg, rng)


def masked_pgd(params, spec: NetworkSpec, inputs, labels, cfg: AttackConfig, metric,
               lam: float, rng) -> AdvBatch:
    """PGD where a sample only moves while ``metric.mask`` allows it.

    The mask is evaluated at the current iterate before every step (or every
    ``metric.recompute_every`` steps), so a sample can end up one step past
    its constraint. Random initialization ignores the mask.
    """
    if not np.isfinite(lam) and not np.isposinf(lam):
        raise ValueError("lambda must be finite or +inf")
    return _attack(params, spec, inputs, labels, cfg, rng, metric=metric, lam=lam)
