"""Curvature probes of the loss with respect to the parameters.

Everything here is built on first-order gradients: Hessian-vector products
are central differences of two gradient calls. The ``model`` argument is
anything exposing ``sample_losses(params, x, y)`` and
``mean_grad(params, x, y)``; a :class:`~smoothadv.network.NetworkSpec` does.
Sub-batch scoring with ``slope="per_sample"`` additionally needs
``sample_slopes(params, x, y, direction)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .network import NumericalError

MAX_EXACT_PARAMS = 500


@dataclass(frozen=True)
class ProbeConfig:
    alpha_fraction: float = 0.01
    power_iters: int = 100
    power_tol: float = 1e-8
    fd_step: float = 1e-5
    hessian_subbatch: int = 32
    alpha_floor: float = 1e-8
    # First-order term of the sub-batch score: each sample's own slope along
    # the shared direction ("per_sample") or the shared gradient norm ("shared").
    slope: str = "per_sample"

    def __post_init__(self):
        if not self.alpha_fraction > 0:
            raise ValueError("alpha_fraction must be positive")
        if self.power_iters < 1:
            raise ValueError("power_iters must be at least 1")
        if not self.fd_step > 0:
            raise ValueError("fd_step must be positive")
        if self.hessian_subbatch < 1:
            raise ValueError("hessian_subbatch must be at least 1")
        if self.slope not in ("per_sample", "shared"):
            raise ValueError(f"unknown slope mode {self.slope!r}")


@dataclass
class HessianEstimate:
    power_value: float = math.nan
    lower: float = math.nan
    upper: float = math.nan
    rayleigh: float = math.nan
    grad_norm: float = math.nan
    alpha: float = math.nan
    converged: bool = True
    zero_gradient: bool = False
    iterations: int = 0
    flags: list[str] = field(default_factory=list)


def _fd_scale(params, cfg: ProbeConfig) -> float:
    return cfg.fd_step * (1.0 + float(np.linalg.norm(params)))


def hvp(params, model, inputs, labels, v, cfg: ProbeConfig = ProbeConfig()) -> np.ndarray:
    """Hessian-vector product by a central difference of gradients along ``v``."""
    params = np.asarray(params, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ValueError("hvp direction must be nonzero")
    unit = v / norm
    s = _fd_scale(params, cfg)
    g_plus = model.mean_grad(params + s * unit, inputs, labels)
    g_minus = model.mean_grad(params - s * unit, inputs, labels)
    out = (g_plus - g_minus) / (2.0 * s) * norm
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite Hessian-vector product")
    return out


def power_iteration(matvec, dim: int, rng, iters: int = 100, tol: float = 1e-8):
    """Dominant eigenvalue magnitude of a symmetric operator.

    Returns ``(value, vector, converged, iterations)``. ``value`` is the
    largest Rayleigh quotient magnitude seen; for a simple dominant
    eigenvalue this is the magnitude at the final vector.
    """
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    best = 0.0
    prev = None
    converged = False
    k = 0
    for k in range(1, iters + 1):
        w = matvec(v)
        lam = float(v @ w)
        best = max(best, abs(lam))
        wn = float(np.linalg.norm(w))
        if wn == 0.0:
            converged = True
            break
        v = w / wn
        if prev is not None and abs(lam - prev) <= tol * abs(lam):
            converged = True
            break
        prev = lam
    # Final quotient at the returned vector; keeps the value tied to ``v``.
    final = abs(float(v @ matvec(v)))
    value = final if converged else max(final, best)
    return value, v, converged, k


def top_eigenvalue(params, model, inputs, labels, cfg: ProbeConfig = ProbeConfig(),
                   rng=None) -> HessianEstimate:
    rng = np.random.default_rng(0) if rng is None else rng
    params = np.asarray(params, dtype=np.float64)
    value, _, converged, k = power_iteration(
        lambda v: hvp(params, model, inputs, labels, v, cfg),
        params.size, rng, cfg.power_iters, cfg.power_tol)
    est = HessianEstimate(power_value=value, converged=converged, iterations=k)
    if not converged:
        est.flags.append("power method hit the iteration cap")
    return est


def _alpha(grad_norm: float, cfg: ProbeConfig) -> float:
    return max(cfg.alpha_fraction * grad_norm, cfg.alpha_floor)


def _taylor_terms(loss0, loss_plus, loss_minus, grad_norm, alpha):
    """Paper-form lower/upper bounds and the second-order curvature score."""
    a = alpha * grad_norm
    lower = max(loss_plus - a, loss_minus + a) / alpha - loss0
    upper = (loss_plus + a) / alpha - loss0
    rayleigh = 2.0 / alpha ** 2 * np.maximum(loss_plus - loss0 - a, loss_minus - loss0 + a)
    return lower, upper, rayleigh


def taylor_estimates(params, model, inputs, labels,
                     cfg: ProbeConfig = ProbeConfig()) -> HessianEstimate:
    """Curvature along the normalized gradient from losses at ``theta +- alpha g``."""
    params = np.asarray(params, dtype=np.float64)
    grad = model.mean_grad(params, inputs, labels)
    grad_norm = float(np.linalg.norm(grad))
    if grad_norm == 0.0:
        return HessianEstimate(lower=0.0, upper=0.0, rayleigh=0.0, grad_norm=0.0,
                               alpha=0.0, zero_gradient=True, flags=["zero gradient"])
    g = grad / grad_norm
    alpha = _alpha(grad_norm, cfg)
    loss0 = float(np.mean(model.sample_losses(params, inputs, labels)))
    loss_plus = float(np.mean(model.sample_losses(params + alpha * g, inputs, labels)))
    loss_minus = float(np.mean(model.sample_losses(params - alpha * g, inputs, labels)))
    lower, upper, rayleigh = _taylor_terms(loss0, loss_plus, loss_minus, grad_norm, alpha)
    if not all(math.isfinite(t) for t in (lower, upper, float(rayleigh))):
        raise NumericalError("non-finite Taylor estimate")
    return HessianEstimate(lower=float(lower), upper=float(upper), rayleigh=float(rayleigh),
                           grad_norm=grad_norm, alpha=alpha)


def exact_hessian(params, model, inputs, labels, cfg: ProbeConfig = ProbeConfig(),
                  max_params: int = MAX_EXACT_PARAMS):
    """Dense Hessian from coordinate-wise gradient differences.

    Returns ``(H, asymmetry)`` where ``H`` is symmetrized and ``asymmetry``
    is the max-abs entry of the raw estimate minus its transpose.
    """
    params = np.asarray(params, dtype=np.float64)
    n = params.size
    if n > max_params:
        raise ValueError(f"exact Hessian limited to {max_params} parameters, got {n}")
    s = _fd_scale(params, cfg)
    raw = np.empty((n, n))
    for j in range(n):
        step = np.zeros(n)
        step[j] = s
        raw[:, j] = (model.mean_grad(params + step, inputs, labels)
                     - model.mean_grad(params - step, inputs, labels)) / (2.0 * s)
    asym = float(np.max(np.abs(raw - raw.T)))
    return (raw + raw.T) / 2.0, asym


def trace(params, model, inputs, labels, mode: str = "exact", probes: int = 100,
          cfg: ProbeConfig = ProbeConfig(), rng=None, max_params: int = MAX_EXACT_PARAMS) -> float:
    params = np.asarray(params, dtype=np.float64)
    n = params.size
    if mode == "exact":
        if n > max_params:
            raise ValueError(f"exact trace limited to {max_params} parameters, got {n}")
        total = 0.0
        for j in range(n):
            e = np.zeros(n)
            e[j] = 1.0
            total += float(hvp(params, model, inputs, labels, e, cfg)[j])
        return total
    if mode == "hutchinson":
        if probes < 1:
            raise ValueError("hutchinson needs at least one probe")
        rng = np.random.default_rng(0) if rng is None else rng
        acc = 0.0
        for _ in range(probes):
            z = rng.choice([-1.0, 1.0], size=n)
            acc += float(z @ hvp(params, model, inputs, labels, z, cfg))
        return acc / probes
    raise ValueError(f"unknown trace mode {mode!r}")


def hessian_score_batch(params, model, inputs, labels,
                        cfg: ProbeConfig = ProbeConfig()) -> np.ndarray:
    """Per-sample curvature scores using one shared direction per sub-batch.

    Inside a sub-batch the direction ``g`` is the normalized sub-batch mean
    gradient, so only two extra forward passes are needed. The first-order
    term subtracted from each sample's loss change is either the sample's
    slope along ``g`` or the shared gradient norm (``cfg.slope``). A
    one-sample sub-batch has slope equal to its gradient norm, and the
    score then equals :func:`taylor_estimates` exactly.
    """
    params = np.asarray(params, dtype=np.float64)
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(labels)
    n = x.shape[0]
    scores = np.empty(n)
    for start in range(0, n, cfg.hessian_subbatch):
        sl = slice(start, min(start + cfg.hessian_subbatch, n))
        xs, ys = x[sl], y[sl]
        grad = model.mean_grad(params, xs, ys)
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm == 0.0:
            scores[sl] = 0.0
            continue
        g = grad / grad_norm
        alpha = _alpha(grad_norm, cfg)
        if cfg.slope == "shared" or xs.shape[0] == 1:
            slopes = grad_norm
        else:
            slopes = np.asarray(model.sample_slopes(params, xs, ys, g), dtype=np.float64)
        loss0 = np.asarray(model.sample_losses(params, xs, ys), dtype=np.float64)
        loss_plus = np.asarray(model.sample_losses(params + alpha * g, xs, ys), dtype=np.float64)
        loss_minus = np.asarray(model.sample_losses(params - alpha * g, xs, ys), dtype=np.float64)
        a = alpha * slopes
        scores[sl] = 2.0 / alpha ** 2 * np.maximum(loss_plus - loss0 - a, loss_minus - loss0 + a)
    if not np.all(np.isfinite(scores)):
        raise NumericalError("non-finite Hessian score")
    return scores


def per_sample_power(params, model, inputs, labels, cfg: ProbeConfig = ProbeConfig(),
                     rng=None) -> np.ndarray:
    """Power-method dominant eigenvalue of each sample's own loss Hessian."""
    rng = np.random.default_rng(0) if rng is None else rng
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(labels)
    return np.array([top_eigenvalue(params, model, x[i:i + 1], y[i:i + 1], cfg, rng).power_value
                     for i in range(x.shape[0])])
