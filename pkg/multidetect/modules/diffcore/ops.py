"""
Differentiable op library and the gradient tape it records onto.

Every op takes Tensors, computes its result with numpy and, when any input
requires a gradient, appends an ``OpRecord`` holding the vector-Jacobian
product closure. Reductions accumulate in float64 and cast back to the input
dtype.
"""
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from multidetect.core.errors import GraphStateError, ShapeError, shape_report
from multidetect.modules.diffcore.tensor import Tensor

Vjp = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_grad_enabled = True


@contextmanager
def no_grad() -> Iterator[None]:
    """Run ops without recording, whatever ``requires_grad`` says."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


@dataclass
class OpRecord:
    kind: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    vjp: Vjp


class Tape:
    """Ordered op records; creation order is a topological order."""

    def __init__(self):
        self.records: List[OpRecord] = []

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: OpRecord) -> None:
        self.records.append(record)

    def backward(self, loss: Tensor) -> Dict[int, np.ndarray]:
        """
        Reverse sweep from a scalar ``loss``. Each record is visited once.

        Sets ``grad`` on every reached leaf that requires it and returns
        ``{tensor id: grad}`` for those leaves.
        """
        if loss.tape is not self:
            raise GraphStateError("Loss was not produced on this tape")
        if loss.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")

        grads: Dict[int, np.ndarray] = {loss.id: np.ones_like(loss.data)}
        leaves: Dict[int, Tensor] = {}
        for record in reversed(self.records):
            upstream = grads.pop(record.output.id, None)
            if upstream is None:
                continue
            for tensor, grad in zip(record.inputs, record.vjp(upstream)):
                if grad is None or not tensor.requires_grad:
                    continue
                grad = grad.astype(tensor.dtype, copy=False)
                if tensor.tape is None:
                    leaves[tensor.id] = tensor
                if tensor.id in grads:
                    grads[tensor.id] = grads[tensor.id] + grad
                else:
                    grads[tensor.id] = grad

        result: Dict[int, np.ndarray] = {}
        for tensor_id, tensor in leaves.items():
            tensor.set_grad(grads[tensor_id])
            result[tensor_id] = tensor.grad
        return result


def _emit(kind: str, inputs: Tuple[Tensor, ...], data: np.ndarray, vjp: Vjp) -> Tensor:
    out = Tensor(data, dtype=data.dtype)
    if not _grad_enabled or not any(t.requires_grad for t in inputs):
        return out
    tapes = {id(t.tape): t.tape for t in inputs if t.tape is not None}
    if len(tapes) > 1:
        raise GraphStateError(f"{kind}: inputs were recorded on different tapes")
    tape = next(iter(tapes.values())) if tapes else Tape()
    out.requires_grad = True
    out.tape = tape
    tape.append(OpRecord(kind, inputs, out, vjp))
    return out


def _same_dtype(kind: str, *tensors: Tensor) -> np.dtype:
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) != 1:
        raise ShapeError(f"{kind}: mixed dtypes {sorted(str(d) for d in dtypes)}")
    return dtypes.pop()


def _require_ndim(kind: str, t: Tensor, ndim: int, layout: str) -> None:
    if t.data.ndim != ndim:
        raise ShapeError(f"{kind}: expected {ndim}-d input ({layout}), got shape {t.shape}")


# ========== LINEAR ==========

def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x (B, D) @ weight (D, O) + bias (O,)."""
    _require_ndim("dense", x, 2, "B, D")
    dtype = _same_dtype("dense", x, weight, bias)
    if weight.data.ndim != 2 or weight.shape[0] != x.shape[1]:
        raise ShapeError(shape_report("dense weight", (x.shape[1], "O"), weight.shape))
    if bias.shape != (weight.shape[1],):
        raise ShapeError(shape_report("dense bias", (weight.shape[1],), bias.shape))
    xd, wd = x.data, weight.data
    out = (xd @ wd + bias.data).astype(dtype, copy=False)

    def vjp(g):
        return g @ wd.T, xd.T @ g, g.sum(axis=0, dtype=np.float64)

    return _emit("dense", (x, weight, bias), out, vjp)


def _windows(padded: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    win = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """
    Cross-correlation of x (B, C, H, W) with weight (O, C, kh, kw), zero padding.
    """
    _require_ndim("conv2d", x, 4, "B, C, H, W")
    dtype = _same_dtype("conv2d", x, weight, bias)
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv2d: stride must be >= 1 and padding >= 0, got {stride}, {padding}")
    if weight.data.ndim != 4 or weight.shape[1] != x.shape[1]:
        raise ShapeError(shape_report("conv2d weight", ("O", x.shape[1], "kh", "kw"), weight.shape))
    if bias.shape != (weight.shape[0],):
        raise ShapeError(shape_report("conv2d bias", (weight.shape[0],), bias.shape))
    batch, channels, height, width = x.shape
    _, _, kh, kw = weight.shape
    if height + 2 * padding < kh or width + 2 * padding < kw:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {height}x{width}+{padding}")

    padded = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = _windows(padded, kh, kw, stride)
    out_h, out_w = win.shape[2], win.shape[3]
    wd = weight.data
    out = np.tensordot(win, wd, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out + bias.data[None, :, None, None], dtype=dtype)

    def vjp(g):
        grad_bias = g.sum(axis=(0, 2, 3), dtype=np.float64)
        grad_weight = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
        grad_win = np.tensordot(g, wd, axes=([1], [0]))  # B, Ho, Wo, C, kh, kw
        grad_padded = np.zeros(padded.shape, dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                grad_padded[
                    :, :,
                    i:i + stride * (out_h - 1) + 1:stride,
                    j:j + stride * (out_w - 1) + 1:stride,
                ] += grad_win[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        grad_x = grad_padded[:, :, padding:padding + height, padding:padding + width]
        return grad_x, grad_weight, grad_bias

    return _emit("conv2d", (x, weight, bias), out, vjp)


# ========== ELEMENTWISE ==========

def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = np.where(mask, x.data, 0).astype(x.dtype, copy=False)
    return _emit("relu", (x,), out, lambda g: (g * mask,))


def add(a: Tensor, b: Tensor) -> Tensor:
    """Residual add; both branches receive the upstream gradient unchanged."""
    _same_dtype("add", a, b)
    if a.shape != b.shape:
        raise ShapeError(shape_report("add", a.shape, b.shape))
    return _emit("add", (a, b), a.data + b.data, lambda g: (g, g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_dtype("mul", a, b)
    if a.shape != b.shape:
        raise ShapeError(shape_report("mul", a.shape, b.shape))
    ad, bd = a.data, b.data
    return _emit("mul", (a, b), ad * bd, lambda g: (g * bd, g * ad))


def scale(x: Tensor, factor: float) -> Tensor:
    out = (x.data * factor).astype(x.dtype, copy=False)
    return _emit("scale", (x,), out, lambda g: (g * factor,))


# ========== SHAPE / REDUCTIONS ==========

def flatten(x: Tensor) -> Tensor:
    shape = x.shape
    out = x.data.reshape(shape[0], -1)
    return _emit("flatten", (x,), out, lambda g: (g.reshape(shape),))


def global_avg_pool(x: Tensor) -> Tensor:
    """(B, C, H, W) -> (B, C)."""
    _require_ndim("global_avg_pool", x, 4, "B, C, H, W")
    shape = x.shape
    area = shape[2] * shape[3]
    out = x.data.mean(axis=(2, 3), dtype=np.float64).astype(x.dtype)

    def vjp(g):
        return (np.broadcast_to(g[:, :, None, None] / area, shape).astype(g.dtype),)

    return _emit("global_avg_pool", (x,), out, vjp)


def sum_all(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum(dtype=np.float64), dtype=x.dtype)
    shape = x.shape
    return _emit("sum", (x,), out, lambda g: (np.full(shape, g, dtype=x.dtype),))


def weighted_sum(x: Tensor, weights: np.ndarray) -> Tensor:
    """sum(x * weights) with constant weights; pulls an arbitrary upstream through x."""
    weights = np.asarray(weights, dtype=x.dtype)
    if weights.shape != x.shape:
        raise ShapeError(shape_report("weighted_sum weights", x.shape, weights.shape))
    out = np.asarray((x.data.astype(np.float64) * weights).sum(), dtype=x.dtype)
    return _emit("weighted_sum", (x,), out, lambda g: (g * weights,))


# ========== LOSS ==========

def check_labels(labels, batch: int, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (batch,):
        raise ShapeError(shape_report("labels", (batch,), labels.shape))
    if labels.dtype.kind not in "iu":
        raise ShapeError(f"labels must be integers, got dtype {labels.dtype}")
    if batch and (labels.min() < 0 or labels.max() >= num_classes):
        raise ShapeError(f"label index out of range [0, {num_classes}): {labels.min()}..{labels.max()}")
    return labels.astype(np.int64)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Max-subtracted log-softmax in float64."""
    z = logits.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax_cross_entropy(logits: Tensor, labels, reduction: str = "mean") -> Tensor:
    """
    Cross-entropy of softmax(logits (B, C)) against integer labels, as a scalar.

    ``reduction`` is "mean" over the batch or "sum".
    """
    _require_ndim("softmax_cross_entropy", logits, 2, "B, C")
    batch, num_classes = logits.shape
    if batch == 0:
        raise ShapeError("softmax_cross_entropy: empty batch")
    if reduction not in ("mean", "sum"):
        raise ShapeError(f"Unknown reduction: {reduction}")
    labels = check_labels(labels, batch, num_classes)
    logp = log_softmax(logits.data)
    rows = np.arange(batch)
    total = -logp[rows, labels].sum()
    divisor = batch if reduction == "mean" else 1
    out = np.asarray(total / divisor, dtype=logits.dtype)

    def vjp(g):
        probs = np.exp(logp)
        probs[rows, labels] -= 1.0
        return ((probs * (float(g) / divisor)).astype(logits.dtype),)

    return _emit("softmax_cross_entropy", (logits,), out, vjp)
