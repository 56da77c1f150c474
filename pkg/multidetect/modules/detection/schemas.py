from dataclasses import dataclass
from enum import Enum
from typing import Dict, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from multidetect.core.errors import ShapeError, shape_report


class PipelineKind(str, Enum):
    MODELWISE = "model-wise"
    UNITWISE = "unit-wise"


class Arm(str, Enum):
    TREATMENT = "treatment"
    CONTROL = "control"


class DetectorConfig(BaseModel):
    """Binary MLP recipe: one 100-unit ReLU hidden layer, Adam, L2 penalty, log-loss."""

    model_config = ConfigDict(extra="forbid")

    hidden_units: Literal[100] = 100
    learning_rate: float = Field(default=1e-3, gt=0)
    l2_penalty: float = Field(default=1e-4, ge=0)
    batch_size: int = Field(default=200, ge=1)
    max_epochs: int = Field(default=200, ge=1)
    threshold: float = Field(default=0.5, gt=0, lt=1)


class PipelineConfig(BaseModel):
    """One detector pipeline of one trial."""

    model_config = ConfigDict(extra="forbid")

    kind: PipelineKind
    arm: Arm
    n: int = Field(ge=1)
    pool: Tuple[str, ...]
    trial_seed: int = Field(ge=0)
    width: Optional[int] = Field(default=None, ge=1)  # R, when known

    @model_validator(mode="after")
    def _check(self):
        if not self.pool:
            raise ValueError("representation-model pool is empty")
        if len(set(self.pool)) != len(self.pool):
            raise ValueError("representation-model pool has duplicate ids")
        if self.arm == Arm.TREATMENT and self.n > len(self.pool):
            raise ValueError(f"{self.kind.value} treatment needs N={self.n} models, pool has {len(self.pool)}")
        unit_control = self.kind == PipelineKind.UNITWISE and self.arm == Arm.CONTROL
        if unit_control and self.width is not None and self.n > self.width:
            raise ValueError(
                f"unit-wise control draws N={self.n} distinct units from one model of width R={self.width}; "
                f"use N <= {self.width} or widen the penultimate layer"
            )
        return self

    @property
    def detector_count(self) -> int:
        return self.n if self.kind == PipelineKind.MODELWISE else 1


@dataclass(frozen=True)
class RepMatrix:
    """
    Penultimate representations of the same instances under several models.
    ``blocks[model_id]`` is (instances, R); rows line up across blocks.
    """

    blocks: Dict[str, np.ndarray]
    labels: np.ndarray
    pair_ids: np.ndarray

    def __post_init__(self):
        n = self.labels.shape[0]
        if self.pair_ids.shape != (n,):
            raise ShapeError(shape_report("pair_ids", (n,), self.pair_ids.shape))
        widths = set()
        for model_id, block in self.blocks.items():
            if block.ndim != 2 or block.shape[0] != n:
                raise ShapeError(shape_report(f"representation block '{model_id}'", (n, "R"), block.shape))
            widths.add(block.shape[1])
        if len(widths) > 1:
            raise ShapeError(f"representation blocks differ in width: {sorted(widths)}")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def width(self) -> int:
        return next(iter(self.blocks.values())).shape[1] if self.blocks else 0

    @property
    def model_ids(self) -> Tuple[str, ...]:
        return tuple(self.blocks)

    def block(self, model_id: str) -> np.ndarray:
        try:
            return self.blocks[model_id]
        except KeyError:
            raise ShapeError(f"No representations extracted for model '{model_id}'")

    def rows(self, mask_or_indices: np.ndarray) -> "RepMatrix":
        """The same instances in every block, selected by index or boolean mask."""
        index = np.asarray(mask_or_indices)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        return RepMatrix(
            {m: block[index] for m, block in self.blocks.items()},
            self.labels[index],
            self.pair_ids[index],
        )
