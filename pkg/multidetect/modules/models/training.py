"""
Classifier training: Adam on softmax cross-entropy with flip/crop augmentation.
"""
from typing import Optional

import numpy as np
from tqdm import tqdm

from multidetect.core.config import settings
from multidetect.core.errors import DataError, ShapeError
from multidetect.core.logging import get_logger
from multidetect.core.seeding import derive_rng
from multidetect.modules.data.schemas import Dataset
from multidetect.modules.diffcore import AdamConfig, AdamState, Tensor, adam_step, backward, no_grad, run
from multidetect.modules.diffcore import ops
from multidetect.modules.models.architecture import Classifier
from multidetect.modules.models.schemas import TrainConfig
from multidetect.modules.models.service import accuracy

logger = get_logger(__name__)


# ========== AUGMENTATION ==========

def augment(image: np.ndarray, flip_p: float, pad: int, rng: np.random.Generator) -> np.ndarray:
    """
    Random horizontal flip with probability ``flip_p``, then a random crop of the
    original size from the image zero-padded by ``pad`` on every edge.
    """
    if pad < 0:
        raise ShapeError(f"crop padding must be >= 0, got {pad}")
    if rng.random() < flip_p:
        image = image[..., ::-1]
    if pad == 0:
        return np.ascontiguousarray(image)
    height, width = image.shape[-2:]
    top, left = rng.integers(0, 2 * pad + 1, size=2)
    padded = np.pad(image, [(0, 0)] * (image.ndim - 2) + [(pad, pad), (pad, pad)])
    return np.ascontiguousarray(padded[..., top:top + height, left:left + width])


def augment_batch(batch: np.ndarray, cfg: TrainConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.flip_probability == 0.0 and cfg.crop_padding == 0:
        return batch
    return np.stack([augment(image, cfg.flip_probability, cfg.crop_padding, rng) for image in batch])


# ========== TRAINING ==========

def dataset_loss(classifier: Classifier, dataset: Dataset, batch_size: int = 256) -> float:
    """Mean cross-entropy over a dataset, without augmentation."""
    graph = classifier.graph
    total = 0.0
    with no_grad():
        for start in range(0, len(dataset), batch_size):
            x = Tensor(dataset.images[start:start + batch_size], dtype=graph.dtype)
            out = run(graph, x)[graph.output]
            loss = ops.softmax_cross_entropy(out, dataset.labels[start:start + batch_size], reduction="sum")
            total += float(loss.data)
    return total / len(dataset)


def train(
    classifier: Classifier,
    dataset: Dataset,
    cfg: TrainConfig,
    test: Optional[Dataset] = None,
) -> Classifier:
    """
    Train in place and return the classifier. Shuffling and augmentation draw from
    ``derive_rng(cfg.seed, "train", classifier.seed)``; runs are bit-reproducible.
    """
    if len(dataset) == 0:
        raise DataError("Cannot train on an empty dataset")
    graph = classifier.graph
    if dataset.image_shape != graph.input_shape:
        raise ShapeError(f"dataset images {dataset.image_shape} do not match model input {graph.input_shape}")

    rng = derive_rng(cfg.seed, "train", classifier.seed)
    hyper = AdamConfig(lr=cfg.learning_rate, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)
    state = AdamState()
    meta = classifier.metadata
    meta.train_size = len(dataset)
    meta.initial_loss = dataset_loss(classifier, dataset)

    graph.set_requires_grad(True)
    epochs = tqdm(
        range(cfg.epochs),
        desc=f"model seed={classifier.seed}",
        disable=not settings.PROGRESS,
        leave=False,
    )
    for epoch in epochs:
        order = rng.permutation(len(dataset))
        running, seen = 0.0, 0
        for start in range(0, len(dataset), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            x = augment_batch(dataset.images[idx], cfg, rng)
            out = run(graph, Tensor(x, dtype=graph.dtype))[graph.output]
            loss = ops.softmax_cross_entropy(out, dataset.labels[idx])
            grads = backward(graph, loss)
            adam_step(graph.params, grads.params, state, hyper)
            running += float(loss.data) * len(idx)
            seen += len(idx)
        meta.epoch_losses.append(running / seen)
        meta.epochs = epoch + 1
        logger.debug("seed=%d epoch %d loss %.4f", classifier.seed, epoch + 1, running / seen)
    graph.set_requires_grad(False)
    graph.tape = None

    meta.final_loss = dataset_loss(classifier, dataset)
    if test is not None and len(test):
        meta.final_test_accuracy = accuracy(classifier, test.images, test.labels)
    logger.info(
        "Trained model seed=%d: loss %.4f -> %.4f, test accuracy %s",
        classifier.seed,
        meta.initial_loss,
        meta.final_loss,
        "n/a" if meta.final_test_accuracy is None else f"{meta.final_test_accuracy:.4f}",
    )
    return classifier
