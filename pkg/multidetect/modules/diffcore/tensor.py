"""
Tensor - a numpy array that can take part in a gradient tape.
"""
import itertools
from typing import TYPE_CHECKING, Optional, Tuple

import numpy as np

from multidetect.core.errors import ShapeError

if TYPE_CHECKING:
    from multidetect.modules.diffcore.ops import Tape

SUPPORTED_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

_ids = itertools.count()


class Tensor:
    """
    n-dimensional real array, row-major, float32 unless asked otherwise.

    ``tape`` is set on tensors produced by a recorded op; leaves have no tape.
    ``grad`` is filled by a backward pass for leaves with ``requires_grad``.
    """

    __slots__ = ("data", "requires_grad", "grad", "id", "name", "tape")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        dtype=None,
        name: Optional[str] = None,
    ):
        dtype = np.dtype(np.float32 if dtype is None else dtype)
        if dtype not in SUPPORTED_DTYPES:
            raise ShapeError(f"Unsupported dtype {dtype}; use float32 or float64")
        self.data: np.ndarray = np.asarray(data, dtype=dtype, order="C")
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.id = next(_ids)
        self.name = name
        self.tape: Optional["Tape"] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single value, tensor has shape {self.shape}")
        return float(self.data.reshape(()))

    def set_grad(self, grad: np.ndarray) -> None:
        if grad.shape != self.data.shape:
            raise ShapeError(f"grad shape {grad.shape} does not match data shape {self.data.shape}")
        self.grad = grad.astype(self.data.dtype, copy=False)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"
