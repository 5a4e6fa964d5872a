"""Difficulty metrics, lambda schedules and the curriculum-constrained loss."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .attack import AttackConfig, masked_pgd, pgd
from .hessian import ProbeConfig, hessian_score_batch
from .network import NetworkSpec, forward

METRICS = ("none", "prob_gap", "hessian_score")


def prob_gap(probs, label: int) -> float:
    """Largest wrong-class probability minus the true-class probability."""
    p = np.asarray(probs, dtype=np.float64)
    if not 0 <= label < p.size:
        raise ValueError(f"label {label} out of range for {p.size} classes")
    return float(np.max(np.delete(p, label)) - p[label])


def prob_gap_batch(probs, labels) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels)
    rows = np.arange(p.shape[0])
    true = p[rows, y]
    others = p.copy()
    others[rows, y] = -np.inf
    return others.max(axis=1) - true


def gamma(probs, label: int, lam: float) -> float:
    """Loss threshold equivalent to ``prob_gap <= lam``; ``inf`` when always satisfied."""
    p = np.asarray(probs, dtype=np.float64)
    if not 0 <= label < p.size:
        raise ValueError(f"label {label} out of range for {p.size} classes")
    rival = float(np.max(np.delete(p, label)))
    if rival <= lam:
        return math.inf
    return -math.log(rival - lam)


def gamma_binary(lam: float) -> float:
    """Two-class threshold ``-log((1 - lam) / 2)``."""
    if lam >= 1.0:
        return math.inf
    return -math.log((1.0 - lam) / 2.0)


@dataclass(frozen=True)
class Schedule:
    """Epoch to lambda map.

    ``kind="step"`` holds the value of the last knot reached (``initial``
    before the first one); ``kind="linear"`` interpolates between
    ``(start_epoch, start_value)`` and ``(end_epoch, end_value)``.
    """

    kind: str = "constant"
    value: float = 1.0
    knots: tuple[tuple[int, float], ...] = ()
    initial: float = 0.0
    start_epoch: int = 0
    start_value: float = 0.0
    end_epoch: int = 1
    end_value: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "step", "linear"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        knots = tuple((int(e), float(v)) for e, v in self.knots)
        object.__setattr__(self, "knots", knots)
        if self.kind == "step":
            if not knots:
                raise ValueError("step schedule needs at least one knot")
            epochs = [e for e, _ in knots]
            values = [self.initial] + [v for _, v in knots]
            if epochs != sorted(epochs) or len(set(epochs)) != len(epochs):
                raise ValueError("step knots must have strictly increasing epochs")
            if any(b < a for a, b in zip(values, values[1:])):
                raise ValueError("step schedule must be non-decreasing")
        if self.kind == "linear":
            if self.end_epoch <= self.start_epoch:
                raise ValueError("linear schedule needs end_epoch > start_epoch")
            if self.end_value < self.start_value:
                raise ValueError("linear schedule must be non-decreasing")
        for v in self.values():
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"schedule values must lie in [0, 1], got {v}")

    def values(self) -> list[float]:
        if self.kind == "constant":
            return [self.value]
        if self.kind == "step":
            return [self.initial] + [v for _, v in self.knots]
        return [self.start_value, self.end_value]

    def __call__(self, epoch: int) -> float:
        return schedule_value(self, epoch)

    @property
    def saturation_epoch(self) -> int:
        """First epoch at which the schedule sits at its maximum."""
        if self.kind == "constant":
            return 0
        if self.kind == "step":
            top = max(self.values())
            if self.initial == top:
                return 0
            return next(e for e, v in self.knots if v == top)
        return self.end_epoch if self.end_value > self.start_value else 0

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        if self.kind == "step":
            return {"kind": "step", "initial": self.initial,
                    "knots": [[e, v] for e, v in self.knots]}
        return {"kind": "linear", "start_epoch": self.start_epoch,
                "start_value": self.start_value, "end_epoch": self.end_epoch,
                "end_value": self.end_value}

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        d = dict(d)
        allowed = {"constant": {"kind", "value"},
                   "step": {"kind", "initial", "knots"},
                   "linear": {"kind", "start_epoch", "start_value", "end_epoch", "end_value"}}
        kind = d.get("kind", "constant")
        if kind not in allowed:
            raise ValueError(f"unknown schedule kind {kind!r}")
        extra = set(d) - allowed[kind]
        if extra:
            raise ValueError(f"unknown schedule keys: {sorted(extra)}")
        if "knots" in d:
            d["knots"] = tuple(tuple(k) for k in d["knots"])
        return cls(**d)


def schedule_value(schedule: Schedule, epoch: int) -> float:
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    if schedule.kind == "constant":
        return schedule.value
    if schedule.kind == "step":
        value = schedule.initial
        for e, v in schedule.knots:
            if epoch >= e:
                value = v
        return value
    if epoch <= schedule.start_epoch:
        return schedule.start_value
    if epoch >= schedule.end_epoch:
        return schedule.end_value
    frac = (epoch - schedule.start_epoch) / (schedule.end_epoch - schedule.start_epoch)
    return schedule.start_value + frac * (schedule.end_value - schedule.start_value)


def step_schedule(epochs, increment: float, initial: float = 0.0) -> Schedule:
    """Equal increments at the given epochs; the last knot is pinned to exactly 1."""
    knots = [(e, min(1.0, initial + increment * (i + 1))) for i, e in enumerate(epochs)]
    knots[-1] = (knots[-1][0], 1.0)
    return Schedule(kind="step", knots=tuple(knots), initial=initial)


def linear_schedule(start_epoch: int, start_value: float, end_epoch: int,
                    end_value: float = 1.0) -> Schedule:
    return Schedule(kind="linear", start_epoch=start_epoch, start_value=start_value,
                    end_epoch=end_epoch, end_value=end_value)


# Full-length reference presets (70-epoch MNIST step, 0->1 over 30..70, 0.8->1 by 30).
MNIST_STEP = step_schedule((30, 45, 60), 0.3333)
PSAT_LINEAR = linear_schedule(30, 0.0, 70, 1.0)
HSAT_LINEAR = linear_schedule(0, 0.8, 30, 1.0)


def select_fraction(scores, lam: float) -> np.ndarray:
    """Mark the ``ceil(lam * B)`` lowest scores; ties go to the lower index."""
    s = np.asarray(scores, dtype=np.float64)
    if not 0.0 <= lam <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    n = s.size
    # Guard against 0.3 * 10 == 3.0000000000000004 style round-up.
    k = min(n, math.ceil(lam * n - 1e-9))
    mask = np.zeros(n, dtype=bool)
    if k > 0:
        mask[np.argsort(s, kind="stable")[:k]] = True
    return mask


class ProbGapMetric:
    """Sample may move while ``prob_gap(x) <= lam``."""

    name = "prob_gap"

    def mask(self, params, spec, x, y, lam):
        probs = forward(params, spec, x, y).probs
        return prob_gap_batch(probs, y) <= lam


@dataclass
class HessianScoreMetric:
    """Only the ``lam`` fraction of the batch with the smallest curvature moves."""

    probe: ProbeConfig = field(default_factory=ProbeConfig)
    recompute_every: int = 1
    name = "hessian_score"

    def mask(self, params, spec, x, y, lam):
        if lam >= 1.0:
            return np.ones(len(y), dtype=bool)
        if lam <= 0.0:
            return np.zeros(len(y), dtype=bool)
        return select_fraction(hessian_score_batch(params, spec, x, y, self.probe), lam)


@dataclass(frozen=True)
class CurriculumConfig:
    metric: str = "none"
    schedule: Schedule = field(default_factory=Schedule)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    recompute_every: int = 1

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.recompute_every < 1:
            raise ValueError("recompute_every must be at least 1")

    def build_metric(self):
        if self.metric == "prob_gap":
            return ProbGapMetric()
        if self.metric == "hessian_score":
            return HessianScoreMetric(self.probe, self.recompute_every)
        return None


def curriculum_attack(params, spec, x, y, attack: AttackConfig, curriculum: CurriculumConfig,
                      lam: float, rng):
    metric = curriculum.build_metric()
    if metric is None:
        return pgd(params, spec, x, y, attack, rng)
    return masked_pgd(params, spec, x, y, attack, metric, lam, rng)


def _single(x, y):
    return np.asarray(x, dtype=np.float64).reshape(1, -1), np.asarray([int(y)])


def curriculum_loss_binary(params, spec: NetworkSpec, x, y, lam: float,
                           cfg: AttackConfig, rng=None) -> float:
    """Early-terminated PGD value of ``max min{loss(x + delta), gamma(lam)}``."""
    if spec.n_classes != 2:
        raise ValueError("the closed-form curriculum loss needs a binary classifier")
    rng = np.random.default_rng(0) if rng is None else rng
    xb, yb = _single(x, y)
    adv = masked_pgd(params, spec, xb, yb, cfg, ProbGapMetric(), lam, rng)
    return min(float(adv.losses[0]), gamma_binary(lam))


def ball_grid(x, cfg: AttackConfig, pitch: float = 1e-3) -> np.ndarray:
    """All points of a regular grid over the feasible box around ``x``."""
    x = np.asarray(x, dtype=np.float64).ravel()
    lo = np.maximum(x - cfg.epsilon, cfg.clip_min)
    hi = np.minimum(x + cfg.epsilon, cfg.clip_max)
    axes = [np.linspace(a, b, max(2, int(round((b - a) / pitch)) + 1)) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def grid_losses(params, spec: NetworkSpec, x, y, cfg: AttackConfig, pitch: float = 1e-3):
    pts = ball_grid(x, cfg, pitch)
    return forward(params, spec, pts, np.full(len(pts), int(y))).losses


def curriculum_loss_grid(params, spec: NetworkSpec, x, y, lam: float, cfg: AttackConfig,
                         pitch: float = 1e-3, losses=None) -> float:
    """Brute-force ``max`` over a grid of the ball of ``min{loss, gamma(lam)}``."""
    if spec.n_classes != 2:
        raise ValueError("the closed-form curriculum loss needs a binary classifier")
    if losses is None:
        losses = grid_losses(params, spec, x, y, cfg, pitch)
    return float(np.max(np.minimum(losses, gamma_binary(lam))))
