from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class AttackKind(str, Enum):
    """Supported untargeted attacks."""
    FGSM = "fgsm"
    BIM = "bim"
    CW = "cw"


ATTACK_ORDER = (AttackKind.FGSM, AttackKind.BIM, AttackKind.CW)


class CWParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    learning_rate: float = Field(default=0.005, gt=0)
    binary_search_steps: int = Field(default=5, ge=1)
    max_iterations: int = Field(default=200, ge=1)
    confidence: float = Field(default=100.0, ge=0)  # kappa
    initial_const: float = Field(default=1e-2, gt=0)


class AttackConfig(BaseModel):
    """
    One attack and its hyperparameters. ``epsilon`` and ``alpha`` are intensity
    fractions (3/255 = three grey levels).
    """

    model_config = ConfigDict(extra="forbid")

    kind: AttackKind
    epsilon: float = Field(default=3 / 255, ge=0)
    alpha: float = Field(default=1 / 255, gt=0)
    iterations: int = Field(default=10, ge=1)
    cw: CWParams = CWParams()

    @model_validator(mode="after")
    def _check(self):
        if self.kind in (AttackKind.FGSM, AttackKind.BIM) and self.epsilon <= 0:
            raise ValueError(f"{self.kind.value}: epsilon must be > 0")
        if self.kind == AttackKind.BIM and self.alpha > self.epsilon:
            raise ValueError("bim: alpha must not exceed epsilon")
        return self


class AttackSuiteConfig(BaseModel):
    """The three attacks of an experiment, at their default strengths."""

    model_config = ConfigDict(extra="forbid")

    fgsm: AttackConfig = AttackConfig(kind=AttackKind.FGSM)
    bim: AttackConfig = AttackConfig(kind=AttackKind.BIM)
    cw: AttackConfig = AttackConfig(kind=AttackKind.CW)

    def get(self, kind: AttackKind) -> AttackConfig:
        return getattr(self, AttackKind(kind).value)

    @model_validator(mode="after")
    def _kinds_match(self):
        for kind in ATTACK_ORDER:
            if self.get(kind).kind != kind:
                raise ValueError(f"attack '{kind.value}' configured with kind '{self.get(kind).kind.value}'")
        return self


class AttackStats(BaseModel):
    """Attacked-model and transfer statistics for one adversarial set."""

    kind: AttackKind
    population: int
    attacked_model_accuracy: float
    success_rate: float
    transfer_mean_accuracy: Optional[float] = None
    transfer_std_accuracy: Optional[float] = None
    transfer_models: int = 0
    per_model_accuracy: List[float] = []
