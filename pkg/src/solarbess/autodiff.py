"""Dense float64 tensors with taped reverse-mode differentiation.

Deliberately small: exactly the operation set the bidding networks need
(affine maps, ReLU/sigmoid, row softmax, stride-1 convolutions, pooling,
concatenation, MSE), recorded on an explicit tape and replayed in reverse.
Everything is double precision so gradient checks against central finite
differences are meaningful.

Ops executed outside an active ``Tape`` compute values only and record
nothing, which keeps greedy policy rollouts cheap.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

_TAPE_STACK: list["Tape"] = []


class ShapeMismatch(ValueError):
    """Raised when operands cannot be combined; always carries both shapes."""


class Tensor:
    """A float64 array plus a lazily allocated gradient buffer."""

    __slots__ = ("data", "grad", "_backward")

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._backward = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return self.data.item()

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Tensor(shape={self.data.shape})"


class Tape:
    """Ordered record of primitive ops; reversal yields a topological order."""

    def __init__(self):
        self._nodes: list[Tensor] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> bool:
        _TAPE_STACK.pop()
        return False

    def __len__(self) -> int:
        return len(self._nodes)

    def backward(self, loss: Tensor) -> None:
        """Accumulate gradients of a scalar ``loss`` into every input."""
        if loss.data.shape != ():
            raise ShapeMismatch(f"backward needs a scalar loss, got shape {loss.data.shape}")
        loss.grad = np.ones(())
        for node in reversed(self._nodes):
            if node.grad is not None and node._backward is not None:
                node._backward()


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _accum(t: Tensor, g: np.ndarray) -> None:
    # First contribution copies (g may alias another node's buffer); later ones add.
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
        if t.grad.shape != t.data.shape:
            t.grad = np.broadcast_to(t.grad, t.data.shape).copy()
    else:
        t.grad += g


def _record(out: Tensor, backward: Callable[[], None]) -> None:
    tape = _active_tape()
    if tape is not None:
        out._backward = backward
        tape._nodes.append(out)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to the shape it was broadcast from."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# elementwise and structural primitives
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data)

    def backward():
        g = out.grad
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    _record(out, backward)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data - b.data)

    def backward():
        g = out.grad
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    _record(out, backward)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data * b.data)

    def backward():
        g = out.grad
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    _record(out, backward)
    return out


def scale(a: Tensor, s: float) -> Tensor:
    out = Tensor(a.data * s)

    def backward():
        _accum(a, out.grad * s)

    _record(out, backward)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatch(f"matmul needs >=2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)

    def backward():
        g = out.grad
        _accum(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape))
        _accum(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape))

    _record(out, backward)
    return out


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map ``x @ w + b`` with bias broadcast over leading axes."""
    return add(matmul(x, w), b)


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    out = Tensor(np.transpose(a.data, axes))
    inverse = tuple(np.argsort(axes))

    def backward():
        _accum(a, np.transpose(out.grad, inverse))

    _record(out, backward)
    return out


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    out = Tensor(a.data.reshape(shape))

    def backward():
        _accum(a, out.grad.reshape(a.data.shape))

    _record(out, backward)
    return out


def concat(xs: Sequence[Tensor], axis: int) -> Tensor:
    xs = [_as_tensor(x) for x in xs]
    out = Tensor(np.concatenate([x.data for x in xs], axis=axis))
    sizes = [x.data.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]

    def backward():
        pieces = np.split(out.grad, splits, axis=axis)
        for x, g in zip(xs, pieces):
            _accum(x, g)

    _record(out, backward)
    return out


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    out = Tensor(a.data[index].copy())

    def backward():
        g = np.zeros(a.data.shape)
        g[index] = out.grad
        _accum(a, g)

    _record(out, backward)
    return out


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0.0
    out = Tensor(np.where(mask, a.data, 0.0))

    def backward():
        _accum(a, out.grad * mask)

    _record(out, backward)
    return out


def sigmoid(a: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-a.data))
    out = Tensor(y)

    def backward():
        _accum(a, out.grad * y * (1.0 - y))

    _record(out, backward)
    return out


def softmax_rows(a: Tensor) -> Tensor:
    """Softmax over the last axis; rows sum to one and stay strictly positive."""
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y)

    def backward():
        g = out.grad
        _accum(a, y * (g - (g * y).sum(axis=-1, keepdims=True)))

    _record(out, backward)
    return out


def abs_smooth(a: Tensor, eps: float = 1e-6) -> Tensor:
    """Smoothed absolute value sqrt(x^2 + eps^2), differentiable at zero."""
    y = np.sqrt(a.data * a.data + eps * eps)
    out = Tensor(y)

    def backward():
        _accum(a, out.grad * a.data / y)

    _record(out, backward)
    return out


# ---------------------------------------------------------------------------
# convolutions and pooling
# ---------------------------------------------------------------------------


def conv2d(x: Tensor, kernel: Tensor, padding: str = "same") -> Tensor:
    """Stride-1 cross-correlation over the trailing two axes, zero-filled.

    ``kernel`` of shape (kh, kw) applies one filter to every (H, W) slice.
    A (G, kh, kw) kernel applies filter g to slice ``x[..., g, :, :]``
    (one independent kernel per attention head).  Only 'same' padding is
    supported; kernel sides must be odd.
    """
    if padding != "same":
        raise ValueError(f"only 'same' padding is supported, got {padding!r}")
    kd = kernel.data
    grouped = kd.ndim == 3
    kh, kw = kd.shape[-2], kd.shape[-1]
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeMismatch(f"'same' conv needs odd kernel sides, got {kd.shape}")
    if x.ndim < 2 or (grouped and (x.ndim < 3 or x.shape[-3] != kd.shape[0])):
        raise ShapeMismatch(f"conv2d operands misaligned: x {x.shape}, kernel {kd.shape}")

    h, w = x.shape[-2], x.shape[-1]
    ph, pw = kh // 2, kw // 2
    pad = [(0, 0)] * (x.ndim - 2) + [(ph, ph), (pw, pw)]
    xp = np.pad(x.data, pad)
    out_data = np.zeros(x.data.shape)
    for i in range(kh):
        for j in range(kw):
            piece = xp[..., i : i + h, j : j + w]
            if grouped:
                out_data += piece * kd[:, i, j][:, None, None]
            else:
                out_data += piece * kd[i, j]
    out = Tensor(out_data)

    def backward():
        g = out.grad
        gxp = np.zeros(xp.shape)
        gk = np.zeros(kd.shape)
        lead = tuple(range(g.ndim - 3)) if grouped else None
        for i in range(kh):
            for j in range(kw):
                piece = xp[..., i : i + h, j : j + w]
                if grouped:
                    gk[:, i, j] += (g * piece).sum(axis=lead + (-2, -1))
                    gxp[..., i : i + h, j : j + w] += g * kd[:, i, j][:, None, None]
                else:
                    gk[i, j] += (g * piece).sum()
                    gxp[..., i : i + h, j : j + w] += g * kd[i, j]
        _accum(x, gxp[..., ph : ph + h, pw : pw + w])
        _accum(kernel, gk)

    _record(out, backward)
    return out


def conv_rows_valid(x: Tensor, bank: Tensor) -> Tensor:
    """Valid convolution of a (C, k, W) filter bank down the row axis.

    Input (B, H, W) yields (B, H - k + 1, C): each filter spans the full
    width and slides over rows only.
    """
    if x.ndim != 3 or bank.ndim != 3 or x.shape[-1] != bank.shape[-1]:
        raise ShapeMismatch(f"conv_rows_valid operands misaligned: x {x.shape}, bank {bank.shape}")
    b, h, w = x.shape
    c, k, _ = bank.shape
    p = h - k + 1
    if p < 1:
        raise ShapeMismatch(f"filter height {k} exceeds {h} rows")
    out_data = np.zeros((b, p, c))
    for i in range(k):
        window = np.ascontiguousarray(x.data[:, i : i + p, :]).reshape(b * p, w)
        out_data += (window @ bank.data[:, i, :].T).reshape(b, p, c)
    out = Tensor(out_data)

    def backward():
        g = out.grad.reshape(b * p, c)
        gx = np.zeros(x.data.shape)
        gbank = np.zeros(bank.data.shape)
        for i in range(k):
            window = np.ascontiguousarray(x.data[:, i : i + p, :]).reshape(b * p, w)
            gbank[:, i, :] += g.T @ window
            gx[:, i : i + p, :] += (g @ bank.data[:, i, :]).reshape(b, p, w)
        _accum(x, gx)
        _accum(bank, gbank)

    _record(out, backward)
    return out


def maxpool_over_axis(x: Tensor, axis: int) -> Tensor:
    """Max over one axis; the gradient routes to the first maximal entry."""
    idx = np.argmax(x.data, axis=axis)
    expanded = np.expand_dims(idx, axis)
    out = Tensor(np.take_along_axis(x.data, expanded, axis).squeeze(axis))

    def backward():
        gx = np.zeros(x.data.shape)
        np.put_along_axis(gx, expanded, np.expand_dims(out.grad, axis), axis)
        _accum(x, gx)

    _record(out, backward)
    return out


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def mean_all(a: Tensor) -> Tensor:
    out = Tensor(a.data.mean())
    n = a.data.size

    def backward():
        _accum(a, np.full(a.data.shape, out.grad / n))

    _record(out, backward)
    return out


def mse(pred: Tensor, target: Tensor) -> Tensor:
    pred, target = _as_tensor(pred), _as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"mse shapes differ: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    out = Tensor((diff * diff).mean())
    n = diff.size

    def backward():
        g = out.grad * 2.0 / n
        _accum(pred, g * diff)
        _accum(target, -g * diff)

    _record(out, backward)
    return out


# ---------------------------------------------------------------------------
# verification harness
# ---------------------------------------------------------------------------


def grad_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    eps: float = 1e-5,
    max_components: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error of the taped gradient of ``f`` against central differences.

    ``f`` must return a scalar Tensor and be deterministic.  ``x`` is perturbed
    in place component by component; with ``max_components`` set, a seeded
    random subset of that size is checked instead of every entry.
    """
    x.zero_grad()
    with Tape() as tape:
        y = f(x)
        tape.backward(y)
    analytic = np.zeros(x.data.shape) if x.grad is None else x.grad.copy()
    x.zero_grad()

    flat = x.data.reshape(-1)
    aflat = analytic.reshape(-1)
    indices = np.arange(flat.size)
    if max_components is not None and max_components < flat.size:
        rng = rng or np.random.default_rng(0)
        indices = rng.choice(flat.size, size=max_components, replace=False)

    worst = 0.0
    for i in indices:
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(x).data)
        flat[i] = orig - eps
        fm = float(f(x).data)
        flat[i] = orig
        numeric = (fp - fm) / (2.0 * eps)
        err = abs(aflat[i] - numeric) / max(abs(aflat[i]), abs(numeric), 1e-4)
        if err > worst:
            worst = err
    return worst


# ---------------------------------------------------------------------------
# optimization
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """Per-parameter first/second moment buffers plus a shared step counter."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def clip_global_norm(grads: Mapping[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so their joint L2 norm is at most ``max_norm``."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm > 0.0:
        factor = max_norm / total
        for g in grads.values():
            g *= factor
    return total


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> Mapping[str, Tensor]:
    """Bias-corrected Adam update in place; skips entirely on non-finite input."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            logger.warning("skipping Adam step: non-finite gradient in %s", name)
            return params
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for name, g in grads.items():
        p = params[name]
        if name not in state.m:
            state.m[name] = np.zeros(p.data.shape)
            state.v[name] = np.zeros(p.data.shape)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        mhat = m / (1.0 - b1**t)
        vhat = v / (1.0 - b2**t)
        p.data -= lr * mhat / (np.sqrt(vhat) + state.eps)
    return params
