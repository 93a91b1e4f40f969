"""Spatio-temporal graph network producing raw bivariate Gaussian parameters.

Pipeline for one window::

    graphs -> semantic embedding -> fusion (+softplus) -> normalization per step
           -> stacked ST-GCNN layers on velocities -> TXP-CNN extrapolation

Parameter names and their enumeration order (fixed, used by checkpoints)::

    semantic_fc.weight [2L, 1], semantic_fc.bias [1]        (if use_sg)
    fusion_fc.weight [k, 1], fusion_fc.bias [1]             (k = enabled graphs)
    stgcnn.{l}.mix [C_in, C_out]
    stgcnn.{l}.conv.weight [C_out, C_out, kt, 1], stgcnn.{l}.conv.bias [C_out]
    stgcnn.{l}.prelu [1]
    stgcnn.{l}.residual [C_in, C_out]                       (if C_in != C_out)
    txpcnn.{l}.conv.weight [T_out, T_in, 3, 1], txpcnn.{l}.conv.bias [T_out]
    txpcnn.{l}.prelu [1]
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import tensor as te
from .data import SceneWindow
from .graphs import MixedGraphInputs, build_graph_inputs, normalize_adjacency_tensor
from .tensor import Tensor

OUT_CHANNELS = 5
IN_CHANNELS = 2
TXP_KERNEL = 3

ModelParams = dict  # ordered name -> Tensor


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    n_stgcnn: int = 4
    n_txpcnn: int = 2
    hidden_channels: int = 5
    temporal_kernel: int = 3
    obs_len: int = 8
    pred_len: int = 12
    num_classes: int = 6
    prelu_init_slope: float = 0.25
    use_sg: bool = True
    use_pg: bool = True
    use_vg: bool = True
    out_channels: int = OUT_CHANNELS

    def __post_init__(self):
        if self.n_stgcnn < 1 or self.n_txpcnn < 1:
            raise ConfigError("n_stgcnn and n_txpcnn must be at least 1")
        if self.temporal_kernel < 1 or self.temporal_kernel % 2 == 0:
            raise ConfigError(f"temporal_kernel must be odd, got {self.temporal_kernel}")
        if self.hidden_channels < 1 or self.num_classes < 1:
            raise ConfigError("hidden_channels and num_classes must be positive")
        if self.obs_len < 2 or self.pred_len < 1:
            raise ConfigError("obs_len must be >= 2 and pred_len >= 1")
        if self.out_channels != OUT_CHANNELS:
            raise ConfigError(f"out_channels is fixed at {OUT_CHANNELS}")
        if not (self.use_sg or self.use_pg or self.use_vg):
            raise ConfigError("at least one of use_sg/use_pg/use_vg must be enabled")

    @property
    def enabled_graphs(self) -> tuple[str, ...]:
        flags = (("pg", self.use_pg), ("vg", self.use_vg), ("sg", self.use_sg))
        return tuple(name for name, on in flags if on)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def stgcnn_channels(config: ModelConfig) -> list[tuple[int, int]]:
    chans = [IN_CHANNELS] + [config.hidden_channels] * (config.n_stgcnn - 1) + [OUT_CHANNELS]
    return list(zip(chans[:-1], chans[1:]))


def param_shapes(config: ModelConfig) -> list[tuple[str, tuple[int, ...], int | None]]:
    """(name, shape, fan_in) in enumeration order; fan_in None marks non-weight tensors."""
    L = config.num_classes
    kt = config.temporal_kernel
    shapes: list[tuple[str, tuple[int, ...], int | None]] = []
    if config.use_sg:
        shapes += [("semantic_fc.weight", (2 * L, 1), 2 * L), ("semantic_fc.bias", (1,), None)]
    k = len(config.enabled_graphs)
    shapes += [("fusion_fc.weight", (k, 1), k), ("fusion_fc.bias", (1,), None)]
    for l, (c_in, c_out) in enumerate(stgcnn_channels(config)):
        p = f"stgcnn.{l}"
        shapes += [
            (f"{p}.mix", (c_in, c_out), c_in),
            (f"{p}.conv.weight", (c_out, c_out, kt, 1), c_out * kt),
            (f"{p}.conv.bias", (c_out,), None),
            (f"{p}.prelu", (1,), None),
        ]
        if c_in != c_out:
            shapes.append((f"{p}.residual", (c_in, c_out), c_in))
    for l in range(config.n_txpcnn):
        t_in = config.obs_len if l == 0 else config.pred_len
        p = f"txpcnn.{l}"
        shapes += [
            (f"{p}.conv.weight", (config.pred_len, t_in, TXP_KERNEL, 1), t_in * TXP_KERNEL),
            (f"{p}.conv.bias", (config.pred_len,), None),
            (f"{p}.prelu", (1,), None),
        ]
    return shapes


def init_params(config: ModelConfig, seed: int = 0) -> ModelParams:
    """Uniform(+-1/sqrt(fan_in)) weights from ``numpy.random.default_rng(seed)`` (PCG64).

    Biases start at zero and PReLU slopes at ``config.prelu_init_slope``.
    Draws happen in enumeration order, so the result depends only on
    (config, seed).
    """
    rng = np.random.default_rng(seed)
    params: ModelParams = {}
    for name, shape, fan_in in param_shapes(config):
        if name.endswith("prelu"):
            data = np.full(shape, config.prelu_init_slope)
        elif fan_in is None:
            data = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(fan_in)
            data = rng.uniform(-bound, bound, size=shape)
        params[name] = Tensor(data, requires_grad=True, name=name)
    return params


def count_params(params: ModelParams) -> int:
    return sum(p.size for p in params.values())


def semantic_embed(C, params: ModelParams) -> Tensor:
    """Raw semantic adjacency ``A_s[i, j] = fc(C[i, j])``; no activation."""
    C = C if isinstance(C, Tensor) else Tensor(C)
    m = C.shape[0]
    out = te.linear(C, params["semantic_fc.weight"], params["semantic_fc.bias"])
    return out.reshape(m, m)


def fuse_graphs(Ap, Av, A_s, params: ModelParams, config: ModelConfig) -> Tensor:
    """Fused nonnegative adjacency ``softplus(fc([Ap, Av, As]))`` per step.

    ``Ap`` and ``Av`` are ``[T, M, M]``; ``A_s`` is ``[M, M]`` and shared by
    all steps. Disabled graphs may be passed as None.
    """
    parts = []
    t_len = None
    for flag, g in ((config.use_pg, Ap), (config.use_vg, Av)):
        if flag:
            if g is None:
                raise ConfigError("an enabled graph was not supplied")
            g = g if isinstance(g, Tensor) else Tensor(g)
            t_len = g.shape[0]
            parts.append(g)
    if config.use_sg:
        if A_s is None:
            raise ConfigError("semantic graph enabled but A_s not supplied")
        if t_len is None:
            t_len = config.obs_len
        parts.append(te.broadcast_leading(A_s, t_len))
    stacked = te.stack(parts, axis=-1)
    fused = te.linear(stacked, params["fusion_fc.weight"], params["fusion_fc.bias"])
    return te.softplus(fused.reshape(stacked.shape[:-1]))


def stgcnn_layer(V: Tensor, A_hat: Tensor, params: ModelParams, layer: int) -> Tensor:
    """One graph-convolution layer on ``V [C_in, T, M]`` with ``A_hat [T, M, M]``."""
    p = f"stgcnn.{layer}"
    if V.shape[1:] != A_hat.shape[:2] or A_hat.shape[1] != A_hat.shape[2]:
        raise te.ShapeError(f"stgcnn: features {V.shape} vs adjacency {A_hat.shape}")
    mixed = te.einsum("ctm,cd->dtm", V, params[f"{p}.mix"])
    spread = te.einsum("dtm,tmn->dtn", mixed, A_hat)
    conv = te.conv_temporal(spread, params[f"{p}.conv.weight"], params[f"{p}.conv.bias"])
    out = te.prelu(conv, params[f"{p}.prelu"])
    res_key = f"{p}.residual"
    residual = te.einsum("ctm,cd->dtm", V, params[res_key]) if res_key in params else V
    return out + residual


def stgcnn_forward(V: Tensor, A_hat: Tensor, params: ModelParams, config: ModelConfig) -> Tensor:
    for layer in range(config.n_stgcnn):
        V = stgcnn_layer(V, A_hat, params, layer)
    return V


def txpcnn_forward(F: Tensor, params: ModelParams, config: ModelConfig) -> Tensor:
    """Map ``[C, T_obs, M]`` features to raw output ``[T_pred, M, C]``.

    Time becomes the channel axis and each layer convolves over the feature
    axis with a 3 x 1 kernel, so agents are never mixed.
    """
    x = F.transpose(1, 0, 2)  # [T_obs, C, M]
    for layer in range(config.n_txpcnn):
        p = f"txpcnn.{layer}"
        y = te.prelu(te.conv_temporal(x, params[f"{p}.conv.weight"], params[f"{p}.conv.bias"]), params[f"{p}.prelu"])
        x = y if layer == 0 else y + x
    return x.transpose(0, 2, 1)


def forward_graphs(velocities, graphs: MixedGraphInputs, params: ModelParams, config: ModelConfig) -> Tensor:
    """Forward pass from prepared inputs. ``graphs`` fields may be Tensors."""
    vel = velocities if isinstance(velocities, Tensor) else Tensor(velocities)
    V = vel.transpose(2, 0, 1)  # [2, T, M]
    A_s = semantic_embed(graphs.C, params) if config.use_sg else None
    fused = fuse_graphs(
        graphs.Ap if config.use_pg else None,
        graphs.Av if config.use_vg else None,
        A_s,
        params,
        config,
    )
    A_hat = normalize_adjacency_tensor(fused)
    return txpcnn_forward(stgcnn_forward(V, A_hat, params, config), params, config)


def model_forward(window: SceneWindow, params: ModelParams, config: ModelConfig) -> Tensor:
    if window.num_agents < 1:
        raise te.ShapeError("window has no agents")
    if window.obs_len != config.obs_len:
        raise te.ShapeError(f"window obs_len {window.obs_len} != config obs_len {config.obs_len}")
    graphs = build_graph_inputs(window, config.num_classes)
    return forward_graphs(window.obs_velocities, graphs, params, config)
