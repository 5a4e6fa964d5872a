"""Adversarial training loops (plain, probability-gap and Hessian curricula)."""
from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .attack import AttackConfig, pgd
from .curriculum import CurriculumConfig, curriculum_attack, schedule_value
from .data import Dataset, batches
from .network import NetworkSpec, NumericalError, forward, grad_params, init_network

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "lambda", "train_loss", "train_adv_acc", "test_clean_acc",
                   "test_adv_acc", "mean_delta_norm", "max_eig", "trace", "grad_norm")


def derive_seed(seed: int, *tags) -> int:
    """Sub-seed from the root seed and stable tags (CRC32 of each tag's text)."""
    words = [int(seed) & 0xFFFFFFFF, (int(seed) >> 32) & 0xFFFFFFFF]
    words += [zlib.crc32(str(t).encode()) for t in tags]
    return int(np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class TrainConfig:
    spec: NetworkSpec
    attack: AttackConfig = field(default_factory=AttackConfig)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    epochs: int = 10
    batch_size: int = 128
    lr: float = 0.01
    lr_decay: tuple[tuple[int, float], ...] = ()
    momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 0
    eval_attack: AttackConfig | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        decay = tuple((int(e), float(f)) for e, f in self.lr_decay)
        if [e for e, _ in decay] != sorted(e for e, _ in decay):
            raise ValueError("lr_decay knots must be sorted by epoch")
        object.__setattr__(self, "lr_decay", decay)
        if self.curriculum.metric != "none" and self.epochs > 1:
            if self.curriculum.schedule.saturation_epoch >= self.epochs - 1:
                raise ValueError("the lambda schedule must reach its maximum before the final epoch")

    @property
    def evaluation_attack(self) -> AttackConfig:
        return self.attack if self.eval_attack is None else self.eval_attack

    def lr_at(self, epoch: int) -> float:
        lr = self.lr
        for e, factor in self.lr_decay:
            if epoch >= e:
                lr *= factor
        return lr


@dataclass
class TrainHistory:
    rows: list[dict] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([r.get(name, math.nan) for r in self.rows], dtype=np.float64)


@dataclass
class TrainResult:
    best_params: np.ndarray
    final_params: np.ndarray
    history: TrainHistory
    best_epoch: int


def sgd_step(params, grads, velocity, lr: float, momentum: float, weight_decay: float):
    g = grads + weight_decay * params
    velocity = momentum * velocity + g
    return params - lr * velocity, velocity


def evaluate(params, spec: NetworkSpec, dataset: Dataset, attack_cfg: AttackConfig, rng=None,
             batch_size: int = 512) -> dict:
    """Clean and PGD accuracy over the whole dataset; ``sum`` is their total."""
    rng = np.random.default_rng(0) if rng is None else rng
    clean = adv = 0
    for b in batches(dataset, batch_size, shuffle=False):
        clean += int(np.sum(forward(params, spec, b.inputs, b.labels).probs.argmax(1) == b.labels))
        x_adv = pgd(params, spec, b.inputs, b.labels, attack_cfg, rng).x_adv
        adv += int(np.sum(forward(params, spec, x_adv, b.labels).probs.argmax(1) == b.labels))
    n = len(dataset)
    return {"clean_acc": clean / n, "adv_acc": adv / n, "sum": (clean + adv) / n}


def train(config: TrainConfig, dataset_train: Dataset, dataset_test: Dataset,
          smoothness: Callable | None = None) -> TrainResult:
    """Run the configured training; deterministic for a fixed ``config.seed``.

    ``smoothness``, if given, is called as ``smoothness(params, epoch)`` at the
    end of each epoch and must return an object with ``max_eig``, ``trace``
    and ``grad_norm`` attributes.
    """
    spec = config.spec
    if len(dataset_train) == 0 or len(dataset_test) == 0:
        raise ValueError("datasets must be non-empty")
    params = init_network(spec)
    velocity = np.zeros_like(params)
    attack_rng = np.random.default_rng(derive_seed(config.seed, "attack"))
    history = TrainHistory()
    best_params, best_epoch, best_acc = params.copy(), 0, -1.0

    for epoch in range(config.epochs):
        lam = schedule_value(config.curriculum.schedule, epoch)
        lr = config.lr_at(epoch)
        loss_sum = correct = count = 0
        norm_sum = 0.0
        for b_idx, batch in enumerate(batches(dataset_train, config.batch_size,
                                              seed=derive_seed(config.seed, "shuffle", epoch))):
            try:
                adv = curriculum_attack(params, spec, batch.inputs, batch.labels, config.attack,
                                        config.curriculum, lam, attack_rng)
                out = forward(params, spec, adv.x_adv, batch.labels)
                grads = grad_params(params, spec, adv.x_adv, batch.labels)
            except NumericalError as exc:
                raise NumericalError(f"epoch {epoch}, batch {b_idx}: {exc}") from exc
            params, velocity = sgd_step(params, grads, velocity, lr, config.momentum,
                                        config.weight_decay)
            if not np.all(np.isfinite(params)):
                raise NumericalError(f"epoch {epoch}, batch {b_idx}: parameters diverged")
            loss_sum += float(out.losses.sum())
            correct += int(np.sum(out.probs.argmax(1) == batch.labels))
            norm_sum += float(adv.delta_norms.sum())
            count += len(batch.labels)

        ev = evaluate(params, spec, dataset_test, config.evaluation_attack,
                      np.random.default_rng(derive_seed(config.seed, "eval", epoch)))
        row = {"epoch": epoch, "lambda": lam, "train_loss": loss_sum / count,
               "train_adv_acc": correct / count, "test_clean_acc": ev["clean_acc"],
               "test_adv_acc": ev["adv_acc"], "mean_delta_norm": norm_sum / count}
        if smoothness is not None:
            rep = smoothness(params, epoch)
            row.update(max_eig=rep.max_eig, trace=rep.trace, grad_norm=rep.grad_norm)
        history.rows.append(row)
        log.info("epoch %d lambda=%.4f loss=%.4f clean=%.4f adv=%.4f", epoch, lam,
                 row["train_loss"], row["test_clean_acc"], row["test_adv_acc"])
        if ev["adv_acc"] > best_acc:
            best_acc, best_epoch, best_params = ev["adv_acc"], epoch, params.copy()

    return TrainResult(best_params, params, history, best_epoch)


def generalization_gap(history: TrainHistory, window: int = 20) -> dict:
    """Mean and normal 95% interval of the train-minus-test adversarial accuracy (in %)."""
    if len(history) < window:
        raise ValueError(f"need at least {window} epochs of history, got {len(history)}")
    if window < 2:
        raise ValueError("window must be at least 2")
    gap = (history.column("train_adv_acc") - history.column("test_adv_acc"))[-window:] * 100.0
    return {"mean": float(gap.mean()),
            "ci95": float(1.96 * gap.std(ddof=1) / math.sqrt(window))}


def with_curriculum(config: TrainConfig, curriculum: CurriculumConfig) -> TrainConfig:
    return replace(config, curriculum=curriculum)
