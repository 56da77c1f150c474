"""
Graph - a named layer stack over a parameter registry, plus forward/backward.

Layers are evaluated in insertion order; each layer reads named values (the
graph input is called ``"input"``) and writes its own name. Residual blocks
are expressed with an ``add`` layer reading two earlier names.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from multidetect.core.errors import GraphStateError, ShapeError, shape_report
from multidetect.modules.diffcore import ops
from multidetect.modules.diffcore.tensor import Tensor

INPUT = "input"

# kind -> (number of value inputs, parameter slots)
LAYER_KINDS: Dict[str, Tuple[int, Tuple[str, ...]]] = {
    "dense": (1, ("weight", "bias")),
    "conv2d": (1, ("weight", "bias")),
    "relu": (1, ()),
    "global_avg_pool": (1, ()),
    "flatten": (1, ()),
    "add": (2, ()),
}


@dataclass(frozen=True)
class Layer:
    kind: str
    name: str
    inputs: Tuple[str, ...]
    params: Tuple[str, ...] = ()
    attrs: Mapping[str, Any] = field(default_factory=dict)


@dataclass
class GradientMap:
    """Gradients from one backward pass: parameter name -> array, plus the input."""

    params: Dict[str, np.ndarray]
    input: Optional[np.ndarray] = None


class Graph:
    """Per-instance ``input_shape``; batches carry a leading batch axis."""

    def __init__(self, input_shape: Sequence[int], dtype=np.float32):
        self.input_shape: Tuple[int, ...] = tuple(int(d) for d in input_shape)
        self.dtype = np.dtype(dtype)
        self.layers: List[Layer] = []
        self.params: Dict[str, Tensor] = {}
        self.output: str = INPUT
        self.tape: Optional[ops.Tape] = None
        self._input: Optional[Tensor] = None

    # ========== CONSTRUCTION ==========

    def add_param(self, name: str, value: np.ndarray, requires_grad: bool = True) -> Tensor:
        if name in self.params:
            raise GraphStateError(f"Parameter '{name}' already registered")
        tensor = Tensor(value, requires_grad=requires_grad, dtype=self.dtype, name=name)
        self.params[name] = tensor
        return tensor

    def add_layer(
        self,
        kind: str,
        name: str,
        inputs: Sequence[str],
        params: Sequence[str] = (),
        **attrs,
    ) -> str:
        if kind not in LAYER_KINDS:
            raise ShapeError(f"Unsupported layer kind: {kind}")
        arity, slots = LAYER_KINDS[kind]
        inputs, params = tuple(inputs), tuple(params)
        if len(inputs) != arity or len(params) != len(slots):
            raise ShapeError(f"{kind} '{name}' takes {arity} input(s) and {len(slots)} parameter(s)")
        known = {INPUT, *(layer.name for layer in self.layers)}
        if name in known:
            raise GraphStateError(f"Layer name '{name}' already used")
        for source in inputs:
            if source not in known:
                raise GraphStateError(f"Layer '{name}' reads unknown value '{source}'")
        for param in params:
            if param not in self.params:
                raise GraphStateError(f"Layer '{name}' uses unregistered parameter '{param}'")
        self.layers.append(Layer(kind, name, inputs, params, dict(attrs)))
        self.output = name
        return name

    # ========== REGISTRY ==========

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def state(self) -> Dict[str, np.ndarray]:
        return {name: p.data for name, p in self.params.items()}

    def load_state(self, state: Mapping[str, np.ndarray]) -> None:
        if list(state) != list(self.params):
            raise ShapeError(f"Parameter names differ: {list(state)} vs {list(self.params)}")
        for name, value in state.items():
            param = self.params[name]
            if tuple(value.shape) != param.shape:
                raise ShapeError(shape_report(f"parameter '{name}'", param.shape, value.shape))
            param.data = np.ascontiguousarray(value, dtype=self.dtype)

    def copy(self, dtype=None) -> "Graph":
        """Independent copy (optionally cast), sharing no arrays or tape."""
        clone = Graph(self.input_shape, dtype=dtype or self.dtype)
        for name, param in self.params.items():
            clone.add_param(name, param.data.copy(), requires_grad=param.requires_grad)
        clone.layers = list(self.layers)
        clone.output = self.output
        return clone

    def set_requires_grad(self, flag: bool) -> None:
        for param in self.params.values():
            param.requires_grad = flag

    def check_input(self, x: Tensor) -> None:
        if x.data.ndim != len(self.input_shape) + 1 or x.shape[1:] != self.input_shape:
            raise ShapeError(shape_report("graph input", ("B", *self.input_shape), x.shape))


def _apply(layer: Layer, args: List[Tensor], params: List[Tensor]) -> Tensor:
    if layer.kind == "dense":
        return ops.dense(args[0], *params)
    if layer.kind == "conv2d":
        return ops.conv2d(args[0], *params, **layer.attrs)
    if layer.kind == "relu":
        return ops.relu(args[0])
    if layer.kind == "global_avg_pool":
        return ops.global_avg_pool(args[0])
    if layer.kind == "flatten":
        return ops.flatten(args[0])
    return ops.add(args[0], args[1])


def run(graph: Graph, x: Tensor, fetch: Iterable[str] = ()) -> Dict[str, Tensor]:
    """
    Evaluate the layer stack and return the output plus any fetched named values.

    The tape of the pass (if anything required a gradient) is kept on the graph
    for ``backward``.
    """
    if not isinstance(x, Tensor):
        x = Tensor(x, dtype=graph.dtype)
    graph.check_input(x)
    if x.dtype != graph.dtype:
        raise ShapeError(f"graph input dtype {x.dtype} does not match graph dtype {graph.dtype}")
    wanted = set(fetch) | {graph.output}
    values: Dict[str, Tensor] = {INPUT: x}
    for layer in graph.layers:
        args = [values[name] for name in layer.inputs]
        params = [graph.params[name] for name in layer.params]
        values[layer.name] = _apply(layer, args, params)
    missing = wanted - set(values)
    if missing:
        raise GraphStateError(f"Unknown values requested: {sorted(missing)}")
    result = {name: values[name] for name in wanted}
    graph.tape = values[graph.output].tape
    graph._input = x
    return result


def forward(graph: Graph, x: Tensor) -> Tensor:
    """Output of the composed layer stack; an empty graph is the identity."""
    return run(graph, x)[graph.output]


def backward(graph: Graph, loss: Tensor) -> GradientMap:
    """
    Gradients of a scalar ``loss`` computed from the last forward pass of ``graph``.

    Parameters that the loss does not reach get zero gradients.
    """
    if graph._input is None:
        raise GraphStateError("backward called before forward")
    if loss.tape is None or (graph.tape is not None and loss.tape is not graph.tape):
        raise GraphStateError("loss was not produced by the last forward pass of this graph")
    for tensor in (*graph.params.values(), graph._input):
        tensor.grad = None
    loss.tape.backward(loss)
    grads: Dict[str, np.ndarray] = {}
    for name, param in graph.params.items():
        if param.requires_grad:
            grads[name] = param.grad if param.grad is not None else np.zeros_like(param.data)
    input_grad = None
    if graph._input.requires_grad:
        input_grad = graph._input.grad if graph._input.grad is not None else np.zeros_like(graph._input.data)
    return GradientMap(params=grads, input=input_grad)
