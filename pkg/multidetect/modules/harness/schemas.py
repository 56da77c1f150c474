from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from multidetect.modules.attacks.schemas import ATTACK_ORDER, AttackKind, AttackSuiteConfig
from multidetect.modules.data.schemas import SyntheticSpec
from multidetect.modules.detection.schemas import Arm, DetectorConfig, PipelineKind
from multidetect.modules.models.schemas import ArchConfig, TrainConfig


class DatasetConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    source: Literal["synthetic", "cifar10"] = "synthetic"
    path: Optional[str] = None
    # stratified desk subsets; None keeps the whole split
    train_subset: Optional[int] = Field(default=None, ge=1)
    test_subset: Optional[int] = Field(default=None, ge=1)
    # attack only the first N test images
    attack_limit: Optional[int] = Field(default=1000, ge=1)
    synthetic: SyntheticSpec = SyntheticSpec()

    @model_validator(mode="after")
    def _path_for_cifar(self):
        if self.source == "cifar10" and not self.path:
            raise ValueError("dataset.source 'cifar10' needs dataset.path (directory of the binary batches)")
        return self


class GridConfig(BaseModel):
    """Which pipelines, arms, N values and attack pairings run."""

    model_config = ConfigDict(extra="forbid")

    pipelines: Tuple[PipelineKind, ...] = (PipelineKind.MODELWISE, PipelineKind.UNITWISE)
    arms: Tuple[Arm, ...] = (Arm.CONTROL, Arm.TREATMENT)
    modelwise_n: Tuple[int, ...] = (1, 2, 4, 8, 16)
    unitwise_control_n: Tuple[int, ...] = (8, 16, 32, 64)
    unitwise_treatment_n: Tuple[int, ...] = (8, 16, 32, 64)
    train_attacks: Tuple[AttackKind, ...] = ATTACK_ORDER
    test_attacks: Tuple[AttackKind, ...] = ATTACK_ORDER

    @field_validator("modelwise_n", "unitwise_control_n", "unitwise_treatment_n")
    @classmethod
    def _sorted_positive(cls, values: Tuple[int, ...]) -> Tuple[int, ...]:
        if not values:
            raise ValueError("N grid must not be empty")
        if any(v < 1 for v in values):
            raise ValueError(f"N values must be >= 1, got {list(values)}")
        if list(values) != sorted(set(values)):
            raise ValueError(f"N values must be strictly ascending, got {list(values)}")
        return values

    @field_validator("pipelines", "arms", "train_attacks", "test_attacks")
    @classmethod
    def _non_empty_unique(cls, values):
        if not values or len(set(values)) != len(values):
            raise ValueError("must be a non-empty list without duplicates")
        return values

    def n_values(self, kind: PipelineKind, arm: Arm) -> Tuple[int, ...]:
        if kind == PipelineKind.MODELWISE:
            return self.modelwise_n
        return self.unitwise_treatment_n if arm == Arm.TREATMENT else self.unitwise_control_n

    def all_n(self, kind: PipelineKind) -> Tuple[int, ...]:
        """Union of the N values both arms use for a pipeline kind, ascending."""
        return tuple(sorted({n for arm in self.arms for n in self.n_values(kind, arm)}))


class ExperimentConfig(BaseModel):
    """Everything a run depends on besides the dataset bytes."""

    model_config = ConfigDict(extra="forbid")

    dataset: DatasetConfig = DatasetConfig()
    population_size: int = Field(default=64, ge=2)  # K representation models
    arch: ArchConfig = ArchConfig()
    train: TrainConfig = TrainConfig()
    attacks: AttackSuiteConfig = AttackSuiteConfig()
    grid: GridConfig = GridConfig()
    detector: DetectorConfig = DetectorConfig()
    trials: int = Field(default=20, ge=1)
    test_fraction: float = Field(default=0.1, gt=0.0, lt=1.0)
    master_seed: int = Field(default=0, ge=0)
    output_dir: str = "./runs/default"

    @model_validator(mode="after")
    def _grid_fits_population(self):
        grid = self.grid
        k, r = self.population_size, self.arch.penultimate_width
        if PipelineKind.MODELWISE in grid.pipelines and Arm.TREATMENT in grid.arms and max(grid.modelwise_n) > k:
            raise ValueError(f"population_size K={k} is below the largest model-wise N={max(grid.modelwise_n)}")
        if PipelineKind.UNITWISE in grid.pipelines:
            if Arm.TREATMENT in grid.arms and max(grid.unitwise_treatment_n) > k:
                raise ValueError(
                    f"population_size K={k} is below the largest unit-wise treatment N={max(grid.unitwise_treatment_n)}"
                )
            if Arm.CONTROL in grid.arms and max(grid.unitwise_control_n) > r:
                raise ValueError(
                    f"unit-wise control N={max(grid.unitwise_control_n)} exceeds the penultimate width R={r}"
                )
        return self

    @property
    def model_ids(self) -> List[str]:
        return [rep_model_id(i) for i in range(self.population_size)]


ATTACKED_MODEL = "attacked"


def rep_model_id(index: int) -> str:
    return f"rep_{index:03d}"


class TrialResult(BaseModel):
    model_config = ConfigDict(extra="forbid")

    pipeline: PipelineKind
    arm: Arm
    train_attack: AttackKind
    test_attack: AttackKind
    n: int = Field(ge=1)
    trial: int = Field(ge=0)
    accuracy: float = Field(ge=0.0, le=1.0)

    @property
    def key(self) -> Tuple[str, str, str, str, int, int]:
        return (
            self.pipeline.value, self.arm.value, self.train_attack.value,
            self.test_attack.value, self.n, self.trial,
        )

    @property
    def cell(self) -> Tuple[str, str, str, str, int]:
        return self.key[:5]


class SummaryCell(BaseModel):
    pipeline: PipelineKind
    arm: Arm
    train_attack: AttackKind
    test_attack: AttackKind
    n: int
    mean: float
    std: float = Field(ge=0.0)
    trials: int = Field(ge=1)
    # False when a single trial leaves the sample std undefined (reported as 0)
    std_defined: bool = True
