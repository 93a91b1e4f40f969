"""Bivariate Gaussian head: parameter split, negative log-likelihood, sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as te
from .tensor import Tensor

LOG_SIGMA_BOUND = 10.0
RHO_SCALE = 1.0 - 1e-6
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class GaussianField:
    """Per-step, per-agent Gaussian over displacements.

    mu, sigma: ``[T_pred, M, 2]``; rho: ``[T_pred, M]``.
    """

    mu: Tensor
    sigma: Tensor
    rho: Tensor

    def numpy(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.mu.numpy(), self.sigma.numpy(), self.rho.numpy()


def split_raw(raw: Tensor) -> GaussianField:
    """Channels 0-1 are the mean, 2-3 the log-scales (clamped to +-10), 4 the raw correlation."""
    if raw.data.ndim != 3 or raw.shape[-1] != 5:
        raise te.ShapeError(f"split_raw expects [T, M, 5], got {raw.shape}")
    bad = np.argwhere(~np.isfinite(raw.data))
    if bad.size:
        raise FloatingPointError(f"non-finite raw output at index {tuple(int(i) for i in bad[0])}")
    mu = te.take(raw, -1, 0, 2)
    sigma = te.exp(te.clamp(te.take(raw, -1, 2, 4), -LOG_SIGMA_BOUND, LOG_SIGMA_BOUND))
    rho = te.tanh(te.take(raw, -1, 4, 5)) * RHO_SCALE
    return GaussianField(mu, sigma, rho.reshape(rho.shape[:-1]))


def nll(field: GaussianField, target) -> Tensor:
    """Summed negative log-density of ``target`` displacements under ``field``."""
    target = target if isinstance(target, Tensor) else Tensor(target)
    if target.shape != field.mu.shape:
        raise te.ShapeError(f"nll: target {target.shape} vs mu {field.mu.shape}")
    z = (target - field.mu) / field.sigma
    zx = te.take(z, -1, 0, 1).reshape(field.rho.shape)
    zy = te.take(z, -1, 1, 2).reshape(field.rho.shape)
    one_minus_r2 = 1.0 - te.square(field.rho)
    quad = (te.square(zx) + te.square(zy) - 2.0 * (field.rho * zx * zy)) / one_minus_r2
    log_norm = te.log(field.sigma).sum(axis=-1) + 0.5 * te.log(one_minus_r2)
    per_point = 0.5 * quad + log_norm + LOG_2PI
    return per_point.sum()


def sample(field: GaussianField, count: int, seed=None, rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw ``count`` displacement sets, shape ``[K, T_pred, M, 2]``.

    Uses the lower Cholesky factor of each 2 x 2 covariance.
    """
    if count < 1:
        raise ValueError("sample count must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(seed)
    mu, sigma, rho = field.numpy() if isinstance(field.mu, Tensor) else (field.mu, field.sigma, field.rho)
    z = rng.standard_normal((count,) + mu.shape)
    sx, sy = sigma[..., 0], sigma[..., 1]
    out = np.empty_like(z)
    out[..., 0] = mu[..., 0] + sx * z[..., 0]
    out[..., 1] = mu[..., 1] + sy * (rho * z[..., 0] + np.sqrt(1.0 - rho * rho) * z[..., 1])
    return out


def to_absolute(displacements: np.ndarray, last_obs: np.ndarray) -> np.ndarray:
    """Cumulative sum over the time axis (third from last) offset by each agent's last position."""
    displacements = np.asarray(displacements, dtype=np.float64)
    return np.cumsum(displacements, axis=-3) + np.asarray(last_obs, dtype=np.float64)
