"""Minimal reverse-mode differentiation over float64 numpy arrays.

Operations only record themselves while a :class:`Tape` is active::

    with Tape() as tape:
        loss = (x * x).sum()
    tape.backward(loss)

Outside a tape every op is a plain forward computation, which is what
evaluation and finite-difference checks use.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "GradCheckError",
    "tensor",
    "matmul",
    "einsum",
    "linear",
    "conv_temporal",
    "prelu",
    "softplus",
    "stack",
    "broadcast_leading",
    "backward",
    "grad_check",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible for an operation."""


class GradCheckError(ArithmeticError):
    """The checked function produced a non-finite value."""


_state = threading.local()


def _active_tape() -> "Tape | None":
    stack = getattr(_state, "tapes", None)
    return stack[-1] if stack else None


class Tensor:
    """Shape-carrying float64 array with an optional accumulated gradient."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def values(self) -> np.ndarray:
        """Row-major flat view of the data."""
        return self.data.reshape(-1)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # arithmetic sugar; python scalars are folded into the op as constants
    def __add__(self, other):
        return _shift(self, other) if _is_scalar(other) else add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return _shift(self, -other) if _is_scalar(other) else sub(self, other)

    def __rsub__(self, other):
        return _shift(neg(self), other)

    def __mul__(self, other):
        return _scale(self, other) if _is_scalar(other) else mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _scale(self, 1.0 / other) if _is_scalar(other) else div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis: int | None = None):
        return tsum(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def tanh(self):
        return tanh(self)


def _is_scalar(x) -> bool:
    return isinstance(x, (int, float, np.floating, np.integer))


def tensor(data, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def _const(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class _Record:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Ordered log of differentiable operations.

    Records are appended in execution order, so the log is topologically
    sorted by construction.
    """

    def __init__(self):
        self.records: list[_Record] = []

    def __enter__(self) -> "Tape":
        stack = getattr(_state, "tapes", None)
        if stack is None:
            stack = _state.tapes = []
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _state.tapes.pop()

    def __len__(self) -> int:
        return len(self.records)

    def backward(self, loss: Tensor) -> None:
        backward(loss, self)


def _emit(op: str, data: np.ndarray, inputs: tuple[Tensor, ...], vjp) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.requires_grad = any(t.requires_grad for t in inputs)
    tape = _active_tape()
    if tape is not None and out.requires_grad:
        tape.records.append(_Record(op, inputs, out, vjp))
    return out


def backward(loss: Tensor, tape: Tape) -> None:
    """Accumulate d(loss)/d(leaf) into ``grad`` of every requires_grad leaf."""
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    produced = {id(r.output) for r in tape.records}
    leaves: dict[int, Tensor] = {}
    for rec in reversed(tape.records):
        g = grads.pop(id(rec.output), None)
        if g is None:
            continue
        for inp, gi in zip(rec.inputs, rec.vjp(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
            if key not in produced:
                leaves[key] = inp
    if not loss.requires_grad:
        return
    if id(loss) not in produced:
        leaves[id(loss)] = loss
    for key, leaf in leaves.items():
        g = grads.get(key)
        if g is None:
            continue
        if leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.data)
        leaf.grad = leaf.grad + g


# ---------------------------------------------------------------- elementwise


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _const(a), _const(b)
    _same_shape("add", a, b)
    return _emit("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _const(a), _const(b)
    _same_shape("sub", a, b)
    return _emit("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _const(a), _const(b)
    _same_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _emit("mul", ad * bd, (a, b), lambda g: (g * bd, g * ad))


def div(a: Tensor, b: Tensor) -> Tensor:
    a, b = _const(a), _const(b)
    _same_shape("div", a, b)
    ad, bd = a.data, b.data
    out = ad / bd
    return _emit("div", out, (a, b), lambda g: (g / bd, -g * out / bd))


def neg(a: Tensor) -> Tensor:
    return _emit("neg", -a.data, (a,), lambda g: (-g,))


def _shift(a: Tensor, c: float) -> Tensor:
    return _emit("shift", a.data + float(c), (a,), lambda g: (g,))


def _scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _emit("scale", a.data * c, (a,), lambda g: (g * c,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _emit("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    return _emit("log", np.log(ad), (a,), lambda g: (g / ad,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _emit("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def square(a: Tensor) -> Tensor:
    ad = a.data
    return _emit("square", ad * ad, (a,), lambda g: (2.0 * g * ad,))


def power(a: Tensor, p: float) -> Tensor:
    ad = a.data
    p = float(p)
    return _emit("power", ad**p, (a,), lambda g: (g * p * ad ** (p - 1.0),))


def softplus(a: Tensor) -> Tensor:
    ad = a.data
    out = np.logaddexp(0.0, ad)
    sig = 0.5 * (1.0 + np.tanh(0.5 * ad))
    return _emit("softplus", out, (a,), lambda g: (g * sig,))


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    ad = a.data
    inside = (ad >= lo) & (ad <= hi)
    return _emit("clamp", np.clip(ad, lo, hi), (a,), lambda g: (g * inside,))


def prelu(x: Tensor, slope: Tensor) -> Tensor:
    """Leaky rectifier with a learnable slope, scalar or one per channel (axis 0).

    The derivative at exactly zero takes the positive branch.
    """
    xd, sd = x.data, slope.data
    if sd.size == 1:
        s = sd.reshape(())
    elif sd.ndim == 1 and xd.ndim >= 1 and sd.shape[0] == xd.shape[0]:
        s = sd.reshape((-1,) + (1,) * (xd.ndim - 1))
    else:
        raise ShapeError(f"prelu: slope {slope.shape} does not broadcast to {x.shape}")
    pos = xd >= 0
    out = np.where(pos, xd, s * xd)

    def vjp(g):
        gx = np.where(pos, g, s * g)
        neg_part = np.where(pos, 0.0, g * xd)
        if sd.size == 1:
            gs = np.array([neg_part.sum()])
        else:
            gs = neg_part.reshape(xd.shape[0], -1).sum(axis=1)
        return gx, gs.reshape(sd.shape)

    return _emit("prelu", out, (x, slope), vjp)


# --------------------------------------------------------------- reductions


def tsum(a: Tensor, axis: int | None = None) -> Tensor:
    ad = a.data
    if axis is None:
        return _emit("sum", np.array([ad.sum()]), (a,), lambda g: (np.full(ad.shape, g.reshape(-1)[0]),))
    ax = axis % ad.ndim
    return _emit("sum", ad.sum(axis=ax), (a,), lambda g: (np.broadcast_to(np.expand_dims(g, ax), ad.shape).copy(),))


# ------------------------------------------------------------------- layout


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    src = a.shape
    return _emit("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(src),))


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    inv = tuple(np.argsort(axes))
    return _emit("transpose", np.ascontiguousarray(a.data.transpose(axes)), (a,), lambda g: (g.transpose(inv),))


def take(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice ``start:stop`` along ``axis``."""
    ad = a.data
    ax = axis % ad.ndim
    idx = [slice(None)] * ad.ndim
    idx[ax] = slice(start, stop)
    idx = tuple(idx)

    def vjp(g):
        full = np.zeros_like(ad)
        full[idx] = g
        return (full,)

    return _emit("take", ad[idx].copy(), (a,), vjp)


def stack(items: Sequence[Tensor], axis: int = -1) -> Tensor:
    items = tuple(_const(t) for t in items)
    for t in items[1:]:
        _same_shape("stack", items[0], t)
    out = np.stack([t.data for t in items], axis=axis)
    ax = axis % out.ndim

    def vjp(g):
        return tuple(np.take(g, i, axis=ax) for i in range(len(items)))

    return _emit("stack", out, items, vjp)


def broadcast_leading(a: Tensor, n: int) -> Tensor:
    """Repeat ``a`` along a new leading axis of length ``n``."""
    out = np.broadcast_to(a.data, (n,) + a.shape).copy()
    return _emit("broadcast_leading", out, (a,), lambda g: (g.sum(axis=0),))


# ------------------------------------------------------------------ linear


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _const(a), _const(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data
    return _emit("matmul", ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def einsum(spec: str, a: Tensor, b: Tensor) -> Tensor:
    """Two-operand einsum; every operand index must appear in the output or the other operand."""
    a, b = _const(a), _const(b)
    lhs, out_sub = spec.replace(" ", "").split("->")
    sa, sb = lhs.split(",")
    for s, other in ((sa, sb), (sb, sa)):
        missing = set(s) - set(out_sub) - set(other)
        if missing or len(set(s)) != len(s):
            raise ShapeError(f"einsum: unsupported subscripts {spec!r}")
    try:
        out = np.einsum(spec, a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"einsum {spec!r}: {a.shape} and {b.shape}: {exc}") from None
    ad, bd = a.data, b.data

    def vjp(g):
        return (
            np.einsum(f"{out_sub},{sb}->{sa}", g, bd),
            np.einsum(f"{out_sub},{sa}->{sb}", g, ad),
        )

    return _emit("einsum", out, (a, b), vjp)


def linear(x: Tensor, w: Tensor, bias: Tensor) -> Tensor:
    """Affine map over the last axis of ``x``; leading axes are batch."""
    xd, wd, bd = x.data, w.data, bias.data
    if wd.ndim != 2 or xd.shape[-1] != wd.shape[0] or bd.shape != (wd.shape[1],):
        raise ShapeError(f"linear: x {x.shape}, w {w.shape}, bias {bias.shape}")
    out = xd @ wd + bd

    def vjp(g):
        flat_x = xd.reshape(-1, wd.shape[0])
        flat_g = g.reshape(-1, wd.shape[1])
        return g @ wd.T, flat_x.T @ flat_g, flat_g.sum(axis=0)

    return _emit("linear", out, (x, w, bias), vjp)


def conv_temporal(x: Tensor, w: Tensor, bias: Tensor, pad: int | None = None) -> Tensor:
    """Zero-padded cross-correlation along axis 1 of a ``[C_in, T, M]`` input.

    The kernel ``w`` is ``[C_out, C_in, k, 1]``; the node axis is never mixed.
    """
    xd, wd, bd = x.data, w.data, bias.data
    if xd.ndim != 3 or wd.ndim != 4 or wd.shape[3] != 1 or wd.shape[1] != xd.shape[0]:
        raise ShapeError(f"conv_temporal: x {x.shape}, w {w.shape}")
    c_out, c_in, k, _ = wd.shape
    if k % 2 == 0:
        raise ShapeError(f"conv_temporal: kernel extent {k} must be odd")
    if pad is None:
        pad = (k - 1) // 2
    if pad != (k - 1) // 2:
        raise ShapeError(f"conv_temporal: pad {pad} must equal (k-1)/2 = {(k - 1) // 2}")
    if bd.shape != (c_out,):
        raise ShapeError(f"conv_temporal: bias {bias.shape}, expected ({c_out},)")
    t_len = xd.shape[1]
    xp = np.pad(xd, ((0, 0), (pad, pad), (0, 0)))
    # windows[c, t, m, j] = xp[c, t + j, m]
    windows = np.stack([xp[:, j : j + t_len, :] for j in range(k)], axis=-1)
    w3 = wd[..., 0]
    out = np.einsum("ctmj,ocj->otm", windows, w3) + bd[:, None, None]

    def vjp(g):
        gw = np.einsum("otm,ctmj->ocj", g, windows)[..., None]
        gwin = np.einsum("otm,ocj->ctmj", g, w3)
        gxp = np.zeros_like(xp)
        for j in range(k):
            gxp[:, j : j + t_len, :] += gwin[..., j]
        return gxp[:, pad : pad + t_len, :], gw, g.sum(axis=(1, 2))

    return _emit("conv_temporal", out, (x, w, bias), vjp)


# ------------------------------------------------------------- grad check


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` must rebuild its computation from the current ``params`` on each call.
    """
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = f()
    tape.backward(loss)
    worst = 0.0
    for p in params:
        analytic = p.grad.reshape(-1).copy()
        flat = p.data.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            up = f().item()
            flat[idx] = orig - h
            down = f().item()
            flat[idx] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise GradCheckError(f"non-finite value perturbing {p.name or p!r}[{idx}]")
            numeric = (up - down) / (2.0 * h)
            err = abs(analytic[idx] - numeric) / max(1e-8, abs(analytic[idx]) + abs(numeric))
            worst = max(worst, err)
    return worst
