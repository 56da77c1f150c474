"""
Adversarial set persistence. Images are stored as bytes on the 1/255 grid,
so a save/load round trip reproduces the float32 values exactly.
"""
from pathlib import Path

import numpy as np

from multidetect.core.errors import StorageError
from multidetect.core.storage import load_container, save_container
from multidetect.modules.attacks.schemas import AttackConfig
from multidetect.modules.attacks.service import AdversarialSet
from multidetect.modules.data.schemas import PairedSet, scale_bytes, to_bytes

ADVERSARIAL_MAGIC = b"MDADVS01"


def save_adversarial_set(path: Path, adv: AdversarialSet) -> None:
    header = {
        "kind": adv.kind.value,
        "config": adv.config.model_dump(mode="json"),
        "attacked_model": adv.attacked_model,
        "toolkit_version": adv.toolkit_version,
    }
    blobs = {
        "clean": to_bytes(adv.pairs.clean),
        "adversarial": to_bytes(adv.pairs.adversarial),
        "source_index": adv.pairs.source_index.astype(np.int64),
        "labels": adv.pairs.labels.astype(np.int64),
        "fooled": adv.fooled.astype(np.uint8),
    }
    save_container(path, ADVERSARIAL_MAGIC, header, blobs)


def load_adversarial_set(path: Path) -> AdversarialSet:
    header, blobs = load_container(path, ADVERSARIAL_MAGIC)
    try:
        config = AttackConfig.model_validate(header["config"])
        pairs = PairedSet(
            clean=scale_bytes(blobs["clean"]),
            adversarial=scale_bytes(blobs["adversarial"]),
            source_index=blobs["source_index"],
            labels=blobs["labels"],
        )
        fooled = blobs["fooled"].astype(bool)
        attacked_model = str(header["attacked_model"])
        version = str(header["toolkit_version"])
    except (KeyError, ValueError) as e:
        raise StorageError(f"{path}: bad adversarial set: {e}")
    if config.kind.value != header.get("kind"):
        raise StorageError(f"{path}: header kind {header.get('kind')!r} does not match config")
    if fooled.shape != (len(pairs),):
        raise StorageError(f"{path}: fooled flags do not match {len(pairs)} pairs")
    return AdversarialSet(
        pairs=pairs,
        config=config,
        attacked_model=attacked_model,
        fooled=fooled,
        toolkit_version=version,
    )
