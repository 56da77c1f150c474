"""
Adversarial set generation against one attacked model, plus transfer
statistics over the representation models.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from multidetect.core.config import settings
from multidetect.core.errors import DataError
from multidetect.core.logging import get_logger
from multidetect.core.workers import fan_out
from multidetect.modules.attacks.carlini import cw_l2
from multidetect.modules.attacks.gradient import bim, fgsm
from multidetect.modules.attacks.postprocess import postprocess
from multidetect.modules.attacks.schemas import AttackConfig, AttackKind, AttackStats
from multidetect.modules.data.schemas import Dataset, PairedSet
from multidetect.modules.models.architecture import Classifier
from multidetect.modules.models.service import predict

logger = get_logger(__name__)

SHARD_SIZE = 100


@dataclass
class AdversarialSet:
    """Clean/adversarial pairs produced by one attack against one model."""

    pairs: PairedSet
    config: AttackConfig
    attacked_model: str
    fooled: np.ndarray
    toolkit_version: str = settings.TOOLKIT_VERSION

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def kind(self) -> AttackKind:
        return self.config.kind

    @property
    def success_rate(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(np.mean(self.fooled))

    def subset(self, indices: np.ndarray) -> "AdversarialSet":
        indices = np.asarray(indices, dtype=np.int64)
        return AdversarialSet(
            pairs=self.pairs.subset(indices),
            config=self.config,
            attacked_model=self.attacked_model,
            fooled=self.fooled[indices],
            toolkit_version=self.toolkit_version,
        )


# ========== SINGLE BATCH ==========

def run_attack(model: Classifier, x: np.ndarray, y: np.ndarray, cfg: AttackConfig) -> np.ndarray:
    """Raw (un-quantized) perturbed images for one batch."""
    if cfg.kind == AttackKind.FGSM:
        return fgsm(model, x, y, cfg.epsilon)
    if cfg.kind == AttackKind.BIM:
        return bim(model, x, y, cfg.alpha, cfg.iterations, cfg.epsilon)
    if cfg.kind == AttackKind.CW:
        return cw_l2(model, x, y, cfg.cw).adversarial
    raise ValueError(f"Unknown attack: {cfg.kind}")


# ========== POPULATION ==========

# Worker-local state installed once per process by _install_state.
_state: Dict[str, object] = {}


def _install_state(model: Classifier, images: np.ndarray, labels: np.ndarray, cfg: AttackConfig) -> None:
    _state.update(model=model, images=images, labels=labels, cfg=cfg)


def _attack_shard(shard: Tuple[int, int]) -> np.ndarray:
    start, stop = shard
    return run_attack(
        _state["model"],
        _state["images"][start:stop],
        _state["labels"][start:stop],
        _state["cfg"],
    )


def attack_population(
    model: Classifier,
    test: Dataset,
    cfg: AttackConfig,
    model_id: str = "attacked",
    limit: Optional[int] = None,
    jobs: int = 1,
) -> AdversarialSet:
    """
    Attack every test image (among the first ``limit``) that ``model`` already
    classifies correctly. Output images are clipped and quantized; ``fooled``
    records whether the attacked model misclassifies the quantized result.
    """
    considered = len(test) if limit is None else min(limit, len(test))
    images = test.images[:considered]
    labels = test.labels[:considered]
    correct = np.flatnonzero(predict(model, images) == labels) if considered else np.zeros(0, dtype=np.int64)
    if correct.size == 0:
        raise DataError(f"{cfg.kind.value}: attacked model classifies none of {considered} test images correctly")

    clean = images[correct]
    y = labels[correct]
    shards = [(s, min(s + SHARD_SIZE, correct.size)) for s in range(0, correct.size, SHARD_SIZE)]
    logger.info(
        "%s: attacking %d/%d correctly classified images in %d shard(s)",
        cfg.kind.value, correct.size, considered, len(shards),
    )
    pieces = fan_out(
        _attack_shard,
        shards,
        jobs=jobs,
        initializer=_install_state,
        initargs=(model, clean, y, cfg),
        desc=f"attack {cfg.kind.value}",
    )
    adversarial = postprocess(np.concatenate(pieces, axis=0))
    fooled = predict(model, adversarial) != y

    pairs = PairedSet(
        clean=clean,
        adversarial=adversarial,
        source_index=correct.astype(np.int64),
        labels=y.astype(np.int64),
    )
    result = AdversarialSet(pairs=pairs, config=cfg, attacked_model=model_id, fooled=fooled)
    logger.info("%s: success rate %.3f", cfg.kind.value, result.success_rate)
    return result


# ========== TRANSFER ==========

def transfer_accuracies(models: Sequence[Classifier], adv: AdversarialSet) -> List[float]:
    return [float(np.mean(predict(m, adv.pairs.adversarial) == adv.pairs.labels)) for m in models]


def transfer_eval(models: Sequence[Classifier], adv: AdversarialSet) -> Tuple[float, float]:
    """Mean and sample standard deviation of per-model accuracy on the adversarial images."""
    if len(models) < 2:
        raise DataError(f"transfer evaluation needs at least 2 models, got {len(models)}")
    if len(adv) == 0:
        raise DataError("transfer evaluation on an empty adversarial set")
    accuracies = np.asarray(transfer_accuracies(models, adv))
    return float(accuracies.mean()), float(accuracies.std(ddof=1))


def attack_report(
    adv: AdversarialSet,
    models: Sequence[Classifier] = (),
) -> AttackStats:
    """Attacked-model accuracy and success rate, plus transfer stats when models are given."""
    stats = AttackStats(
        kind=adv.kind,
        population=len(adv),
        attacked_model_accuracy=1.0 - adv.success_rate,
        success_rate=adv.success_rate,
    )
    if len(models) >= 2:
        per_model = transfer_accuracies(models, adv)
        stats.transfer_mean_accuracy = float(np.mean(per_model))
        stats.transfer_std_accuracy = float(np.std(per_model, ddof=1))
        stats.transfer_models = len(per_model)
        stats.per_model_accuracy = per_model
    return stats
