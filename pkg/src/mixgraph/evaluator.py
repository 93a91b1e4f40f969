"""Displacement-error metrics, dataset evaluation and the graph ablation harness."""

from __future__ import annotations

import dataclasses
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data import SceneWindow
from .gaussian import GaussianField, sample, split_raw, to_absolute
from .network import ConfigError, ModelConfig, ModelParams, model_forward

VARIANTS = {
    "full": {},
    "w/o SG": {"use_sg": False},
    "w/o PG": {"use_pg": False},
    "w/o VG": {"use_vg": False},
}
METRIC_COLUMNS = ("made", "mfde", "aade", "afde")


@dataclass
class MetricsReport:
    made: float
    mfde: float
    aade: float
    afde: float
    K: int
    S: int
    n_windows: int
    n_agents: int
    seed: int | None = None
    checkpoint_id: str | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _per_sample_errors(samples: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """ADE and FDE of each sample; ``samples [K, T, ...,2]``, ``gt [T, ..., 2]``."""
    dist = np.sqrt(((samples - gt) ** 2).sum(axis=-1))
    return dist.mean(axis=1), dist[:, -1]


def min_errors(samples: np.ndarray, gt: np.ndarray) -> tuple[float, float]:
    """Best ADE and best FDE over samples, each minimised on its own."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[0] < 1:
        raise ValueError("need at least one sample")
    ade, fde = _per_sample_errors(samples, np.asarray(gt, dtype=np.float64))
    return float(ade.min()), float(fde.min())


def avg_errors(samples: np.ndarray, gt: np.ndarray) -> tuple[float, float]:
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[0] < 1:
        raise ValueError("need at least one sample")
    ade, fde = _per_sample_errors(samples, np.asarray(gt, dtype=np.float64))
    return float(ade.mean()), float(fde.mean())


def window_contributions(samples_abs: np.ndarray, gt_abs: np.ndarray, K: int, S: int) -> np.ndarray:
    """Per-agent ``[min ADE, min FDE, mean ADE, mean FDE]`` rows, shape ``[M, 4]``.

    ``samples_abs`` is ``[max(K, S), T, M, 2]``; the first K samples feed the
    minimum metrics and the first S the averages.
    """
    ade, fde = _per_sample_errors(samples_abs, gt_abs)  # [n, M]
    return np.stack(
        [ade[:K].min(axis=0), fde[:K].min(axis=0), ade[:S].mean(axis=0), fde[:S].mean(axis=0)],
        axis=1,
    )


def pool_metrics(contribs: Sequence[np.ndarray], K: int, S: int, seed=None, checkpoint_id=None) -> MetricsReport:
    """Average per-agent contributions across all windows, in window order."""
    rows = np.concatenate(list(contribs), axis=0)
    made, mfde, aade, afde = (float(v) for v in rows.mean(axis=0))
    report = MetricsReport(made, mfde, aade, afde, K, S, len(contribs), rows.shape[0], seed, checkpoint_id)
    if K == S:
        # min over a sample set never exceeds its mean
        assert report.made <= report.aade + 1e-12 and report.mfde <= report.afde + 1e-12
    return report


def window_seed(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def _num_workers() -> int:
    env = os.environ.get("MIXGRAPH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def predict_window(window: SceneWindow, params: ModelParams, config: ModelConfig) -> GaussianField:
    return split_raw(model_forward(window, params, config))


def evaluate_fields(
    windows: Sequence[SceneWindow],
    fields: Sequence[GaussianField],
    K: int = 20,
    S: int = 20,
    seed: int = 0,
    checkpoint_id: str | None = None,
) -> MetricsReport:
    """Metrics for precomputed per-window Gaussian fields."""
    if not windows:
        raise ValueError("evaluation dataset is empty")
    n = max(K, S)
    contribs = []
    for idx, (w, f) in enumerate(zip(windows, fields)):
        disp = sample(f, n, rng=window_seed(seed, idx))
        absolute = to_absolute(disp, w.obs_positions[-1])
        contribs.append(window_contributions(absolute, w.pred_positions, K, S))
    return pool_metrics(contribs, K, S, seed, checkpoint_id)


def evaluate(
    params: ModelParams,
    model_config: ModelConfig,
    dataset: Sequence[SceneWindow],
    K: int = 20,
    S: int = 20,
    seed: int = 0,
    checkpoint_id: str | None = None,
) -> MetricsReport:
    """Sample ``max(K, S)`` futures per window and pool mADE/mFDE/aADE/aFDE over agents.

    Each window draws from its own generator seeded by ``(seed, window index)``,
    so results do not depend on the worker count.
    """
    if not dataset:
        raise ValueError("evaluation dataset is empty")
    if K < 1 or S < 1:
        raise ValueError("K and S must be >= 1")
    workers = min(_num_workers(), len(dataset))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            fields = list(pool.map(lambda w: predict_window(w, params, model_config), dataset))
    else:
        fields = [predict_window(w, params, model_config) for w in dataset]
    return evaluate_fields(dataset, fields, K, S, seed, checkpoint_id)


def variant_config(base: ModelConfig, variant: str) -> ModelConfig:
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; choose from {list(VARIANTS)}")
    return dataclasses.replace(base, **VARIANTS[variant])


def ablation_run(
    params_per_variant: Mapping[str, tuple[ModelParams, ModelConfig]],
    dataset: Sequence[SceneWindow],
    variants: Sequence[str] = tuple(VARIANTS),
    K: int = 20,
    S: int = 20,
    seed: int = 0,
) -> dict[str, MetricsReport]:
    """One report per variant, in the order given."""
    table = {}
    for name in variants:
        params, config = params_per_variant[name]
        if not (config.use_sg or config.use_pg or config.use_vg):
            raise ConfigError(f"variant {name!r} disables every graph")
        table[name] = evaluate(params, config, dataset, K, S, seed)
    return table


def ablation_table(table: Mapping[str, MetricsReport]) -> dict:
    """Machine-readable rows x metric columns."""
    return {
        "columns": list(METRIC_COLUMNS),
        "rows": [{"variant": name, **{c: getattr(r, c) for c in METRIC_COLUMNS}} for name, r in table.items()],
    }


def layer_sweep_configs(base: ModelConfig, max_layers: int = 5) -> dict[tuple[int, int], ModelConfig]:
    """Configs for every (ST-GCNN layers, TXP-CNN layers) pair up to ``max_layers``."""
    return {
        (s, t): dataclasses.replace(base, n_stgcnn=s, n_txpcnn=t)
        for s in range(1, max_layers + 1)
        for t in range(1, max_layers + 1)
    }
