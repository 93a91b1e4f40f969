"""Position, velocity and semantic graph construction plus symmetric normalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as te
from .data import SceneWindow, encode_one_hot
from .tensor import Tensor


@dataclass
class MixedGraphInputs:
    Ap: np.ndarray  # [T_obs, M, M]
    Av: np.ndarray  # [T_obs, M, M]
    C: np.ndarray  # [M, M, 2L]


def inverse_distance_adjacency(points: np.ndarray) -> np.ndarray:
    """Pairwise ``1 / ||p_i - p_j||``; exactly coincident points get weight 0."""
    points = np.asarray(points, dtype=np.float64)
    diff = points[:, None, :] - points[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    out = np.zeros_like(dist)
    # coincidence is exact equality of coordinates, not a small-distance test
    distinct = np.any(diff != 0.0, axis=-1)
    out[distinct] = 1.0 / dist[distinct]
    return out


def position_adjacency(positions_t: np.ndarray) -> np.ndarray:
    return inverse_distance_adjacency(positions_t)


def velocity_adjacency(velocities_t: np.ndarray) -> np.ndarray:
    return inverse_distance_adjacency(velocities_t)


def semantic_pair_tensor(one_hot: np.ndarray) -> np.ndarray:
    """``C[i, j] = concat(onehot_i, onehot_j)`` for an L x M one-hot matrix."""
    one_hot = np.asarray(one_hot, dtype=np.float64)
    n_classes, m = one_hot.shape
    codes = one_hot.T  # [M, L]
    left = np.broadcast_to(codes[:, None, :], (m, m, n_classes))
    right = np.broadcast_to(codes[None, :, :], (m, m, n_classes))
    return np.concatenate([left, right], axis=-1)


def normalize_adjacency(A: np.ndarray) -> np.ndarray:
    """``D^-1/2 (A + I) D^-1/2`` with D the row sums of ``A + I``.

    Computed as ``(A + I) / sqrt(d_i d_j)`` so symmetric input gives an
    exactly symmetric result.
    """
    A = np.asarray(A, dtype=np.float64)
    if np.any(A < 0):
        raise ValueError("normalize_adjacency: adjacency has negative entries")
    if not np.all(np.isfinite(A)):
        raise ValueError("normalize_adjacency: adjacency has non-finite entries")
    a_hat = A + np.eye(A.shape[-1])
    deg = a_hat.sum(axis=-1)
    return a_hat / np.sqrt(deg[..., :, None] * deg[..., None, :])


def normalize_adjacency_tensor(A: Tensor) -> Tensor:
    """Differentiable per-step normalization of a ``[T, M, M]`` stack."""
    t_len, m, _ = A.shape
    eye = np.broadcast_to(np.eye(m), (t_len, m, m)).copy()
    a_hat = A + Tensor(eye)
    deg = a_hat.sum(axis=-1)
    scale = te.power(te.einsum("ti,tj->tij", deg, deg), -0.5)
    return a_hat * scale


def build_graph_inputs(window: SceneWindow, num_classes: int) -> MixedGraphInputs:
    Ap = np.stack([position_adjacency(p) for p in window.obs_positions])
    Av = np.stack([velocity_adjacency(v) for v in window.obs_velocities])
    C = semantic_pair_tensor(encode_one_hot(window.class_indices, num_classes))
    return MixedGraphInputs(Ap=Ap, Av=Av, C=C)
