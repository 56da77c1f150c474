"""
Desk classifier architecture.

    conv(stem) -> ReLU
    for each block: conv(f, stride) -> ReLU -> conv(f) -> add(shortcut) -> ReLU
    global average pool -> dense(R) -> ReLU   (penultimate representation)
    dense(C)                                  (logits)

The shortcut is the identity when shape is preserved and a 1x1 strided
projection otherwise.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from multidetect.core.seeding import derive_rng
from multidetect.modules.diffcore import Graph
from multidetect.modules.diffcore.graph import INPUT
from multidetect.modules.models.schemas import ArchConfig, TrainingMetadata

PENULTIMATE = "penultimate"
LOGITS = "logits"


@dataclass
class Classifier:
    """
    A graph plus where it came from. ``arch`` is None for hand-built graphs
    (e.g. linear probes) that do not follow ArchConfig.
    """

    graph: Graph
    arch: Optional[ArchConfig]
    seed: int
    metadata: TrainingMetadata = field(default_factory=TrainingMetadata)

    @property
    def num_classes(self) -> int:
        if self.arch is not None:
            return self.arch.num_classes
        # hand-built graphs end in a dense layer
        last = self.graph.layers[-1]
        return int(self.graph.params[last.params[1]].shape[0])


def _he(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def _conv(graph: Graph, rng, name: str, source: str, c_in: int, c_out: int, kernel: int, stride: int) -> str:
    graph.add_param(f"{name}.weight", _he(rng, (c_out, c_in, kernel, kernel), c_in * kernel * kernel))
    graph.add_param(f"{name}.bias", np.zeros(c_out))
    return graph.add_layer(
        "conv2d", name, [source], [f"{name}.weight", f"{name}.bias"],
        stride=stride, padding=kernel // 2,
    )


def _dense(graph: Graph, rng, name: str, source: str, d_in: int, d_out: int) -> str:
    graph.add_param(f"{name}.weight", _he(rng, (d_in, d_out), d_in))
    graph.add_param(f"{name}.bias", np.zeros(d_out))
    return graph.add_layer("dense", name, [source], [f"{name}.weight", f"{name}.bias"])


def build_graph(arch: ArchConfig, rng: np.random.Generator) -> Graph:
    graph = Graph(arch.input_shape)
    k = arch.kernel_size
    x = _conv(graph, rng, "stem.conv", INPUT, arch.input_shape[0], arch.stem_filters, k, 1)
    x = graph.add_layer("relu", "stem.relu", [x])
    channels = arch.stem_filters
    for index, block in enumerate(arch.blocks, start=1):
        prefix = f"block{index}"
        h = _conv(graph, rng, f"{prefix}.conv_a", x, channels, block.filters, k, block.stride)
        h = graph.add_layer("relu", f"{prefix}.relu_a", [h])
        h = _conv(graph, rng, f"{prefix}.conv_b", h, block.filters, block.filters, k, 1)
        if block.residual:
            shortcut = x
            if block.stride != 1 or block.filters != channels:
                shortcut = _conv(graph, rng, f"{prefix}.shortcut", x, channels, block.filters, 1, block.stride)
            h = graph.add_layer("add", f"{prefix}.add", [h, shortcut])
        x = graph.add_layer("relu", f"{prefix}.relu", [h])
        channels = block.filters
    x = graph.add_layer("global_avg_pool", "pool", [x])
    x = _dense(graph, rng, "hidden", x, channels, arch.penultimate_width)
    x = graph.add_layer("relu", PENULTIMATE, [x])
    _dense(graph, rng, LOGITS, x, arch.penultimate_width, arch.num_classes)
    return graph


def build_classifier(arch: ArchConfig, seed: int) -> Classifier:
    """He fan-in initialisation drawn from ``seed``; equal seeds give identical models."""
    graph = build_graph(arch, derive_rng(seed, "init"))
    return Classifier(graph=graph, arch=arch, seed=seed)
