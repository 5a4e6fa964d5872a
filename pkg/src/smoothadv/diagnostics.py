"""Smoothness measurements, rank correlation and loss-landscape slices."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .attack import AdvBatch, AttackConfig, pgd
from .hessian import MAX_EXACT_PARAMS, ProbeConfig, top_eigenvalue, trace
from .network import NetworkSpec, NumericalError, forward, grad_params, layer_shapes


@dataclass
class SmoothnessReport:
    max_eig: float
    trace: float
    grad_norm: float
    n_samples: int
    epoch: int = 0


def smoothness_report(params, spec: NetworkSpec, inputs, labels, eval_attack: AttackConfig,
                      probe_cfg: ProbeConfig = ProbeConfig(), rng=None, epoch: int = 0,
                      hutchinson_probes: int = 100) -> SmoothnessReport:
    """Top eigenvalue, trace and gradient norm of the mean loss at PGD points.

    The trace is exact up to the exact-Hessian parameter guard and a
    Hutchinson estimate above it.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    y = np.asarray(labels)
    x_adv = pgd(params, spec, inputs, y, eval_attack, rng).x_adv
    max_eig = top_eigenvalue(params, spec, x_adv, y, probe_cfg, rng).power_value
    mode = "exact" if np.size(params) <= MAX_EXACT_PARAMS else "hutchinson"
    tr = trace(params, spec, x_adv, y, mode=mode, probes=hutchinson_probes, cfg=probe_cfg, rng=rng)
    gn = float(np.linalg.norm(grad_params(params, spec, x_adv, y)))
    return SmoothnessReport(max_eig, tr, gn, len(y), epoch)


@dataclass
class SmoothnessProbe:
    """Per-epoch smoothness on a fixed sample subset with a fixed seed."""

    spec: NetworkSpec
    inputs: np.ndarray
    labels: np.ndarray
    attack: AttackConfig
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    seed: int = 0
    hutchinson_probes: int = 100
    reports: list = field(default_factory=list)

    def __call__(self, params, epoch: int) -> SmoothnessReport:
        rep = smoothness_report(params, self.spec, self.inputs, self.labels, self.attack,
                                self.probe, np.random.default_rng(self.seed), epoch,
                                self.hutchinson_probes)
        self.reports.append(rep)
        return rep


def spearman(a, b) -> float:
    """Rank correlation with average ranks for ties; 0 (with a warning) for constant input."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("spearman needs two 1-d sequences of equal length")
    if a.size < 2:
        raise ValueError("spearman needs at least two points")
    ra = rankdata(a) - (a.size + 1) / 2.0
    rb = rankdata(b) - (b.size + 1) / 2.0
    denom = math.sqrt(float(ra @ ra) * float(rb @ rb))
    if denom == 0.0:
        warnings.warn("constant input; rank correlation defined as 0", RuntimeWarning,
                      stacklevel=2)
        return 0.0
    return float(np.clip((ra @ rb) / denom, -1.0, 1.0))


@dataclass
class LandscapeGrid:
    alphas: np.ndarray
    betas: np.ndarray
    losses: np.ndarray
    seed: int

    def rows(self):
        """``(a, b, loss)`` triples, row-major over ``alphas`` then ``betas``."""
        for i, a in enumerate(self.alphas):
            for j, b in enumerate(self.betas):
                yield float(a), float(b), float(self.losses[i, j])


def _row_blocks(spec: NetworkSpec):
    """Index slices for each weight row and each bias vector, in layout order."""
    blocks = []
    offset = 0
    for n_out, n_in in layer_shapes(spec):
        for r in range(n_out):
            blocks.append(slice(offset + r * n_in, offset + (r + 1) * n_in))
        offset += n_out * n_in
        blocks.append(slice(offset, offset + n_out))
        offset += n_out
    return blocks


def filter_normalized_directions(params, spec: NetworkSpec, rng):
    """Two random directions, block-wise orthogonal and scaled to the parameters' row norms.

    The second direction is made orthogonal to the first within every block
    before scaling, so the full vectors stay orthogonal after normalization.
    """
    params = np.asarray(params, dtype=np.float64)
    d1 = rng.standard_normal(params.size)
    d2 = rng.standard_normal(params.size)
    for sl in _row_blocks(spec):
        target = float(np.linalg.norm(params[sl]))
        u = d1[sl]
        un = float(np.linalg.norm(u))
        u = u / un if un > 0 else u
        w = d2[sl] - (d2[sl] @ u) * u
        wn = float(np.linalg.norm(w))
        # A one-element block has no orthogonal complement.
        w = w / wn if wn > 1e-12 * max(1.0, float(np.linalg.norm(d2[sl]))) else np.zeros_like(w)
        d1[sl] = u * target
        d2[sl] = w * target
    return d1, d2


def landscape_slice(params, spec: NetworkSpec, inputs, labels, attack_cfg: AttackConfig,
                    alphas=None, betas=None, seed: int = 0, attack_seed: int | None = None,
                    parallel: int = 1) -> LandscapeGrid:
    """Mean adversarial loss on the plane ``theta + a d1 + b d2``.

    PGD at every cell restarts from the same seed, so the surface is a
    deterministic function of ``(a, b)``. Cells whose attack fails hold NaN.
    """
    alphas = np.linspace(-1.0, 1.0, 21) if alphas is None else np.asarray(alphas, dtype=float)
    betas = np.linspace(-1.0, 1.0, 21) if betas is None else np.asarray(betas, dtype=float)
    params = np.asarray(params, dtype=np.float64)
    d1, d2 = filter_normalized_directions(params, spec, np.random.default_rng(seed))
    attack_seed = seed if attack_seed is None else attack_seed
    y = np.asarray(labels)

    def adv_loss(theta):
        adv = pgd(theta, spec, inputs, y, attack_cfg, np.random.default_rng(attack_seed))
        return float(np.mean(forward(theta, spec, adv.x_adv, y).losses))

    losses = plane_losses(adv_loss, params, d1, d2, alphas, betas, parallel)
    return LandscapeGrid(alphas, betas, losses, seed)


def plane_losses(loss_fn, params, d1, d2, alphas, betas, parallel: int = 1) -> np.ndarray:
    """Evaluate ``loss_fn(params + a d1 + b d2)`` over the grid; failures become NaN."""
    def cell(ab):
        a, b = ab
        try:
            loss = loss_fn(params + a * d1 + b * d2)
        except NumericalError:
            return math.nan
        return loss if math.isfinite(loss) else math.nan

    cells = [(a, b) for a in alphas for b in betas]
    if parallel > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(parallel) as pool:
            values = list(pool.map(cell, cells))
    else:
        values = [cell(ab) for ab in cells]
    return np.array(values, dtype=np.float64).reshape(len(alphas), len(betas))


def mean_perturbation_norm(adv: AdvBatch) -> float:
    if adv.x_adv.shape[0] == 0:
        raise ValueError("empty batch")
    return float(np.mean(np.max(np.abs(adv.x_adv - adv.x_clean), axis=1)))
