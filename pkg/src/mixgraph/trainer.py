"""SGD training loop, learning-rate schedule and JSON checkpoints."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import SceneWindow
from .gaussian import nll, split_raw
from .network import ModelConfig, ModelParams, init_params, model_forward, param_shapes
from .tensor import Tape, Tensor

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "mixgraph-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


class NumericalError(FloatingPointError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 250
    batch_windows: int = 128
    lr_initial: float = 0.01
    lr_late: float = 0.002
    lr_switch_epoch: int = 150
    # "replace": lr becomes lr_late at the switch epoch
    # "per-epoch": lr shrinks by a factor (1 - lr_late) every epoch from the switch on
    lr_decay_mode: str = "replace"
    seed: int = 0
    grad_clip_norm: float | None = 1.0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 0 or self.batch_windows < 1:
            raise ValueError("epochs must be >= 0 and batch_windows >= 1")
        if self.lr_initial < 0 or self.lr_late < 0:
            raise ValueError("learning rates must be nonnegative")
        if self.lr_decay_mode == "per-epoch" and self.lr_late >= 1:
            raise ValueError("per-epoch decay needs lr_late < 1")
        if self.lr_switch_epoch < 0:
            raise ValueError("lr_switch_epoch must be >= 0")
        if self.lr_decay_mode not in ("replace", "per-epoch"):
            raise ValueError(f"unknown lr_decay_mode {self.lr_decay_mode!r}")
        if self.grad_clip_norm is not None and self.grad_clip_norm <= 0:
            raise ValueError("grad_clip_norm must be positive or None")


@dataclass
class TrainHistory:
    loss: list[float] = field(default_factory=list)  # mean NLL per point
    lr: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.loss)

    def to_dict(self) -> dict:
        return {"loss": self.loss, "lr": self.lr, "seconds": self.seconds}


def learning_rate(epoch: int, config: TrainConfig) -> float:
    if epoch < config.lr_switch_epoch:
        return config.lr_initial
    if config.lr_decay_mode == "per-epoch":
        return config.lr_initial * (1.0 - config.lr_late) ** (epoch - config.lr_switch_epoch + 1)
    return config.lr_late


def window_loss(window: SceneWindow, params: ModelParams, config: ModelConfig) -> Tensor:
    """Mean NLL per (step, agent) point of one window."""
    field_ = split_raw(model_forward(window, params, config))
    total = nll(field_, window.future_displacements())
    return total / float(window.pred_len * window.num_agents)


def dataset_nll(windows: Sequence[SceneWindow], params: ModelParams, config: ModelConfig) -> float:
    """Mean NLL per point over all windows, without recording a tape."""
    total = 0.0
    points = 0
    for w in windows:
        n = w.pred_len * w.num_agents
        total += window_loss(w, params, config).item() * n
        points += n
    return total / points


def zero_grad(params: ModelParams) -> None:
    for p in params.values():
        p.zero_grad()


def sgd_step(params: ModelParams, lr: float) -> None:
    """In-place ``p <- p - lr * grad`` for every parameter; grads are zeroed afterwards."""
    for name, p in params.items():
        if p.grad is None:
            raise ValueError(f"parameter {name!r} has no gradient")
    for p in params.values():
        p.data = p.data - lr * p.grad
        p.zero_grad()


def clip_grad_norm(params: ModelParams, max_norm: float) -> float:
    total = float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params.values())))
    if total > max_norm:
        scale = max_norm / total
        for p in params.values():
            p.grad = p.grad * scale
    return total


def train(
    dataset: Sequence[SceneWindow],
    config: TrainConfig,
    model_config: ModelConfig,
    params: ModelParams | None = None,
) -> tuple[ModelParams, TrainHistory]:
    """Train with plain SGD; each step averages the per-window losses of one batch."""
    if not dataset:
        raise ValueError("training dataset is empty")
    params = params if params is not None else init_params(model_config, config.seed)
    rng = np.random.default_rng(config.seed)
    history = TrainHistory()
    zero_grad(params)
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        lr = learning_rate(epoch, config)
        order = rng.permutation(len(dataset)) if config.shuffle else np.arange(len(dataset))
        epoch_total = 0.0
        epoch_points = 0
        for start in range(0, len(order), config.batch_windows):
            batch = [dataset[i] for i in order[start : start + config.batch_windows]]
            with Tape() as tape:
                losses = [window_loss(w, params, model_config) for w in batch]
                loss = losses[0]
                for extra in losses[1:]:
                    loss = loss + extra
                loss = loss / float(len(batch))
            if not np.isfinite(loss.item()):
                raise NumericalError(f"non-finite loss at epoch {epoch}")
            tape.backward(loss)
            if config.grad_clip_norm is not None:
                clip_grad_norm(params, config.grad_clip_norm)
            sgd_step(params, lr)
            for w, l in zip(batch, losses):
                n = w.pred_len * w.num_agents
                epoch_total += l.item() * n
                epoch_points += n
        history.loss.append(epoch_total / epoch_points)
        history.lr.append(lr)
        history.seconds.append(time.perf_counter() - t0)
        log.debug("epoch %d lr %g loss %.6f", epoch, lr, history.loss[-1])
    return params, history


# ------------------------------------------------------------- checkpoints


def checkpoint_document(params: ModelParams, model_config: ModelConfig, extra: dict | None = None) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model_config": model_config.to_dict(),
        "metadata": extra or {},
        "tensors": [
            {"name": name, "shape": list(p.shape), "values": p.values.tolist()} for name, p in params.items()
        ],
    }


def save_checkpoint(params: ModelParams, model_config: ModelConfig, path, extra: dict | None = None) -> None:
    # json writes floats with repr, which round-trips float64 exactly
    text = json.dumps(checkpoint_document(params, model_config, extra), indent=1)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_checkpoint(path, expected: ModelConfig | None = None, with_metadata: bool = False):
    """Return ``(params, config)``; with ``with_metadata`` also the metadata dict."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version {doc.get('version')!r}, expected {CHECKPOINT_VERSION}")
    try:
        config = ModelConfig.from_dict(doc["model_config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"invalid model_config in checkpoint: {exc}") from None
    if expected is not None:
        for f in expected.to_dict():
            if getattr(expected, f) != getattr(config, f):
                raise CheckpointError(
                    f"checkpoint model_config field {f!r} is {getattr(config, f)!r}, expected {getattr(expected, f)!r}"
                )
    want = [(name, shape) for name, shape, _ in param_shapes(config)]
    tensors = doc.get("tensors")
    if not isinstance(tensors, list) or [(t.get("name"), tuple(t.get("shape", ()))) for t in tensors] != want:
        raise CheckpointError("checkpoint tensors do not match the layout implied by its model_config")
    params: ModelParams = {}
    for t in tensors:
        values = np.asarray(t["values"], dtype=np.float64)
        shape = tuple(t["shape"])
        if values.size != int(np.prod(shape)) or not np.all(np.isfinite(values)):
            raise CheckpointError(f"tensor {t['name']!r} has wrong size or non-finite values")
        params[t["name"]] = Tensor(values.reshape(shape), requires_grad=True, name=t["name"])
    if with_metadata:
        return params, config, doc.get("metadata", {})
    return params, config
