"""End-to-end glue: manifests to image batches, training runs, and the mask vs raw ablation."""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from . import model as M
from .colorcode import occupancy_ratio
from .dataset import LabeledSample, SplitSpec, load_manifest, split
from .errors import InputError
from .imaging import RgbImage, read_ppm, resize_nearest
from .metrics import metrics_report
from .trainer import EpochReport, TrainConfig, evaluate, train

log = logging.getLogger(__name__)


def load_images(
    samples: Sequence[LabeledSample], side: int, require_mask: bool = True
) -> List[Tuple[RgbImage, int]]:
    """Read, validate and resize every sample to ``side x side``.

    With ``require_mask`` each image must be a pure red/white mask.
    """
    out = []
    for s in samples:
        try:
            img = read_ppm(s.image_path)
        except OSError as exc:
            raise InputError(f"cannot read image {s.image_path}: {exc}") from exc
        if require_mask:
            try:
                occupancy_ratio(img)
            except InputError as exc:
                raise InputError(f"{s.image_path}: {exc} (pass --ablation-raw for camera images)") from exc
        if (img.width, img.height) != (side, side):
            img = resize_nearest(img, side, side)
        out.append((img, s.label_id))
    return out


@dataclass
class RunResult:
    state: M.ModelState
    reports: List[EpochReport]
    validation: Optional[dict]


def train_from_manifest(
    manifest,
    model_config: M.ModelConfig,
    train_config: TrainConfig,
    train_fraction: float = 0.8,
    raw: bool = False,
    on_epoch=None,
) -> RunResult:
    samples = load_manifest(manifest)
    data = load_images(samples, model_config.input_side, require_mask=not raw)
    return train_on(data, model_config, train_config, train_fraction, on_epoch)


def train_on(data, model_config, train_config, train_fraction=0.8, on_epoch=None) -> RunResult:
    tr, va = split(data, SplitSpec(train_fraction, train_config.seed), label_of=lambda s: s[1])
    state = M.build_model(model_config, train_config.seed, train_config.precision)
    state, reports = train(state, tr, va, train_config, on_epoch=on_epoch)
    validation = metrics_report(evaluate(state, va)) if reports else None
    return RunResult(state, reports, validation)


def run_ablation(
    mask_manifest,
    raw_manifest,
    model_config: M.ModelConfig,
    train_config: TrainConfig,
    train_fraction: float = 0.8,
) -> dict:
    """Train the same architecture on masks and on raw images; compare validation metrics."""
    results = {}
    for mode, path, raw in (("mask", mask_manifest, False), ("raw", raw_manifest, True)):
        log.info("ablation: training on %s images from %s", mode, path)
        run = train_from_manifest(path, model_config, train_config, train_fraction, raw=raw)
        results[mode] = {
            "manifest": str(path),
            "final_loss": run.reports[-1].loss if run.reports else None,
            "validation": run.validation,
        }
    mask_acc = (results["mask"]["validation"] or {}).get("accuracy")
    raw_acc = (results["raw"]["validation"] or {}).get("accuracy")
    return {
        "model": model_config.to_dict(),
        "train": {
            "learning_rate": train_config.learning_rate,
            "momentum": train_config.momentum,
            "batch_size": train_config.batch_size,
            "epochs": train_config.epochs,
            "seed": train_config.seed,
            "augment": train_config.augment,
            "precision": train_config.precision,
            "train_fraction": train_fraction,
        },
        **results,
        "accuracy_gap": None if mask_acc is None or raw_acc is None else mask_acc - raw_acc,
    }
