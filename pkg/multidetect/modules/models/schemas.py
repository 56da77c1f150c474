from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator


class BlockSpec(BaseModel):
    """One conv block: conv(filters, stride) -> ReLU -> conv(filters) [+ shortcut] -> ReLU."""

    model_config = ConfigDict(extra="forbid")

    filters: int = Field(ge=1)
    stride: int = Field(default=1, ge=1)
    residual: bool = True


class ArchConfig(BaseModel):
    """Desk-scale ResNet-style classifier shared by every model of a run."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    input_shape: Tuple[int, int, int] = (3, 32, 32)
    stem_filters: int = Field(default=16, ge=1)
    blocks: Tuple[BlockSpec, ...] = (
        BlockSpec(filters=16, stride=1),
        BlockSpec(filters=32, stride=2),
    )
    kernel_size: int = Field(default=3, ge=1)
    penultimate_width: int = Field(default=64, ge=1)  # R
    num_classes: int = Field(default=10, ge=2)  # C

    @field_validator("kernel_size")
    @classmethod
    def _odd_kernel(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError("kernel_size must be odd so 'same' padding keeps the size")
        return value


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(default=15, ge=1)
    batch_size: int = Field(default=128, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0)
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    flip_probability: float = Field(default=0.5, ge=0.0, le=1.0)
    crop_padding: int = Field(default=4, ge=0)
    seed: int = Field(default=0, ge=0)


class TrainingMetadata(BaseModel):
    """What a training run leaves behind on the classifier."""

    epochs: int = 0
    train_size: int = 0
    initial_loss: Optional[float] = None
    final_loss: Optional[float] = None
    epoch_losses: List[float] = []
    final_test_accuracy: Optional[float] = None
