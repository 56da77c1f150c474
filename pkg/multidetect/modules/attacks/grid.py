"""
Side-by-side grid of attacked images: one row per class, columns
original / FGSM / BIM / CW, upscaled with nearest-neighbour so single-level
perturbations stay visible.
"""
import io
from pathlib import Path
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np
from PIL import Image, ImageDraw

from multidetect.core.errors import DataError
from multidetect.core.seeding import derive_rng
from multidetect.core.storage import write_atomic
from multidetect.modules.attacks.schemas import ATTACK_ORDER, AttackKind
from multidetect.modules.attacks.service import AdversarialSet
from multidetect.modules.data.cifar10 import CLASS_NAMES
from multidetect.modules.data.schemas import to_bytes

GridRow = Tuple[str, List[np.ndarray]]

LABEL_WIDTH = 84
HEADER_HEIGHT = 16
GAP = 2
BACKGROUND = (255, 255, 255)
TEXT = (0, 0, 0)


def select_examples(
    sets: Mapping[AttackKind, AdversarialSet],
    seed: int,
    class_names: Optional[Sequence[str]] = None,
) -> List[GridRow]:
    """
    For each class pick one source image attacked by every set (seeded), and
    return its original followed by the adversarial versions in attack order.
    Classes without a common source image are skipped.
    """
    kinds = [k for k in ATTACK_ORDER if k in sets]
    if not kinds:
        raise DataError("No adversarial sets to draw")
    common = sets[kinds[0]].pairs.source_index
    for kind in kinds[1:]:
        common = np.intersect1d(common, sets[kind].pairs.source_index)

    first = sets[kinds[0]].pairs
    label_of = dict(zip(first.source_index.tolist(), first.labels.tolist()))
    num_classes = int(first.labels.max()) + 1 if len(first) else 0
    names = list(class_names) if class_names is not None else list(CLASS_NAMES)

    rng = derive_rng(seed, "grid")
    rows: List[GridRow] = []
    for cls in range(num_classes):
        candidates = np.sort(np.asarray([s for s in common if label_of[int(s)] == cls], dtype=np.int64))
        if candidates.size == 0:
            continue
        source = int(candidates[rng.integers(0, candidates.size)])
        position = {k: int(np.flatnonzero(sets[k].pairs.source_index == source)[0]) for k in kinds}
        images = [first.clean[position[kinds[0]]]]
        images.extend(sets[k].pairs.adversarial[position[k]] for k in kinds)
        name = names[cls] if cls < len(names) else str(cls)
        rows.append((name, images))
    return rows


def _to_pil(image: np.ndarray, scale: int) -> Image.Image:
    """(C, H, W) float in [0, 1] -> RGB PIL image, upscaled ``scale`` times."""
    pixels = to_bytes(image)
    if pixels.shape[0] == 1:
        pixels = np.repeat(pixels, 3, axis=0)
    img = Image.fromarray(np.ascontiguousarray(pixels.transpose(1, 2, 0)))
    width, height = img.size
    return img.resize((width * scale, height * scale), Image.Resampling.NEAREST)


def render_grid(rows: Sequence[GridRow], headers: Sequence[str], scale: int = 4) -> Image.Image:
    if not rows:
        raise DataError("Empty image grid")
    tile_h, tile_w = rows[0][1][0].shape[-2] * scale, rows[0][1][0].shape[-1] * scale
    columns = len(headers)
    width = LABEL_WIDTH + columns * (tile_w + GAP)
    height = HEADER_HEIGHT + len(rows) * (tile_h + GAP)

    canvas = Image.new("RGB", (width, height), BACKGROUND)
    draw = ImageDraw.Draw(canvas)
    for col, header in enumerate(headers):
        draw.text((LABEL_WIDTH + col * (tile_w + GAP) + 2, 2), header, fill=TEXT)
    for r, (name, images) in enumerate(rows):
        top = HEADER_HEIGHT + r * (tile_h + GAP)
        draw.text((4, top + tile_h // 2 - 5), name, fill=TEXT)
        for col, image in enumerate(images):
            canvas.paste(_to_pil(image, scale), (LABEL_WIDTH + col * (tile_w + GAP), top))
    return canvas


def save_grid(
    path: Path,
    sets: Mapping[AttackKind, AdversarialSet],
    seed: int,
    scale: int = 4,
    class_names: Optional[Sequence[str]] = None,
) -> List[str]:
    """Render and write the PNG; returns the class names that got a row."""
    rows = select_examples(sets, seed, class_names)
    headers = ["original"] + [k.value.upper() for k in ATTACK_ORDER if k in sets]
    canvas = render_grid(rows, headers, scale)
    output = io.BytesIO()
    canvas.save(output, format="PNG")
    write_atomic(path, output.getvalue())
    return [name for name, _ in rows]
