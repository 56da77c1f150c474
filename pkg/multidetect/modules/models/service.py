"""
Inference on trained classifiers: logits, labels, penultimate representations
and gradients with respect to the input pixels.
"""
from contextlib import contextmanager
from typing import Callable, Iterator, Optional, Tuple

import numpy as np

from multidetect.core.errors import ShapeError
from multidetect.modules.diffcore import Tensor, backward, no_grad, run
from multidetect.modules.diffcore import ops
from multidetect.modules.models.architecture import PENULTIMATE, Classifier

INFERENCE_BATCH = 256


def _as_batch(classifier: Classifier, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=classifier.graph.dtype)
    expected = classifier.graph.input_shape
    if batch.shape == expected:
        batch = batch[None]
    if batch.shape[1:] != expected:
        raise ShapeError(f"batch: expected (B, {', '.join(map(str, expected))}), got {batch.shape}")
    return batch


def _fetch(classifier: Classifier, batch: np.ndarray, name: Optional[str]) -> np.ndarray:
    graph = classifier.graph
    batch = _as_batch(classifier, batch)
    key = name or graph.output
    chunks = []
    with no_grad():
        for start in range(0, max(batch.shape[0], 1), INFERENCE_BATCH):
            values = run(graph, Tensor(batch[start:start + INFERENCE_BATCH], dtype=graph.dtype), fetch=[key])
            chunks.append(values[key].data)
    return np.concatenate(chunks, axis=0)


def logits(classifier: Classifier, batch: np.ndarray) -> np.ndarray:
    return _fetch(classifier, batch, None)


def predict(classifier: Classifier, batch: np.ndarray) -> np.ndarray:
    """argmax of the logits; ties go to the lowest class index."""
    return np.argmax(logits(classifier, batch), axis=1).astype(np.int64)


def accuracy(classifier: Classifier, images: np.ndarray, labels: np.ndarray) -> float:
    labels = np.asarray(labels)
    if labels.shape[0] == 0:
        return 0.0
    return float(np.mean(predict(classifier, images) == labels))


def penultimate(classifier: Classifier, batch: np.ndarray) -> np.ndarray:
    """Activations feeding the final dense layer, one row (width R) per instance."""
    return _fetch(classifier, batch, PENULTIMATE)


@contextmanager
def frozen(classifier: Classifier) -> Iterator[None]:
    """Parameters stop requiring gradients for the duration (input gradients only)."""
    graph = classifier.graph
    previous = {name: p.requires_grad for name, p in graph.params.items()}
    graph.set_requires_grad(False)
    try:
        yield
    finally:
        for name, flag in previous.items():
            graph.params[name].requires_grad = flag


def logit_vjp(
    classifier: Classifier,
    x: np.ndarray,
    weights_fn: Callable[[np.ndarray], np.ndarray],
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Logits at ``x`` and the gradient of ``sum(logits * weights_fn(logits))`` w.r.t. ``x``.
    """
    graph = classifier.graph
    batch = _as_batch(classifier, x)
    with frozen(classifier):
        inp = Tensor(batch, requires_grad=True, dtype=graph.dtype)
        out = run(graph, inp)[graph.output]
        weights = weights_fn(out.data)
        grads = backward(graph, ops.weighted_sum(out, weights))
    return out.data, grads.input.reshape(np.shape(x))


def input_gradient(
    classifier: Classifier,
    x: np.ndarray,
    y: np.ndarray,
    loss_scale: float = 1.0,
) -> np.ndarray:
    """
    d J / d x for softmax cross-entropy J, summed over the batch so every
    instance gets its own gradient. Same shape as ``x``.
    """
    graph = classifier.graph
    batch = _as_batch(classifier, x)
    labels = np.atleast_1d(np.asarray(y))
    labels = ops.check_labels(labels, batch.shape[0], classifier.num_classes)
    with frozen(classifier):
        inp = Tensor(batch, requires_grad=True, dtype=graph.dtype)
        out = run(graph, inp)[graph.output]
        loss = ops.softmax_cross_entropy(out, labels, reduction="sum")
        if loss_scale != 1.0:
            loss = ops.scale(loss, loss_scale)
        grads = backward(graph, loss)
    return grads.input.reshape(np.shape(x))
