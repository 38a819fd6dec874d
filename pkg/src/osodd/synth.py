"""Desk-scale synthetic benchmark: Gaussian class blobs behind a simulated
open-set detector."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .core import BoundingBox, ClassTag, EmbeddingRecord, ObjectRecord, TaskSplit, load_task_split
from .errors import ConfigError
from .fileio import write_detections, write_embeddings, write_ground_truth

IMAGE_W, IMAGE_H = 640.0, 480.0


@dataclass(frozen=True)
class SynthConfig:
    n_known_classes: int = 3
    n_novel_classes: int = 4
    samples_per_class: int = 200
    dim: int = 16
    informative_dims: int = 16
    cluster_separation: float = 6.0
    detector_miss_rate: float = 0.0
    detector_confusion_rate: float = 0.0
    seed: int = 0
    task_id: int = 1
    objects_per_image: int = 4

    def validate(self, split: TaskSplit) -> None:
        if self.n_known_classes < 1 or self.n_novel_classes < 1 or self.samples_per_class < 1:
            raise ConfigError("class counts and samples_per_class must be positive")
        if not 1 <= self.informative_dims <= self.dim:
            raise ConfigError("informative_dims must lie in [1, dim]")
        if self.cluster_separation < 0:
            raise ConfigError("cluster_separation must be non-negative")
        for name in ("detector_miss_rate", "detector_confusion_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.n_known_classes > len(split.known_classes):
            raise ConfigError(f"task {split.task_id} has only {len(split.known_classes)} known classes")
        if self.n_novel_classes > len(split.unknown_classes):
            raise ConfigError(f"task {split.task_id} has only {len(split.unknown_classes)} unknown classes")
        if not 1 <= self.objects_per_image <= 4:
            raise ConfigError("objects_per_image must lie in [1, 4]")


@dataclass(frozen=True, eq=False)
class SynthData:
    split: TaskSplit
    gt: list[ObjectRecord]
    detections: list[ObjectRecord]
    embeddings: list[EmbeddingRecord]
    features: np.ndarray  # per GT object, aligned with ``gt``
    class_means: np.ndarray  # (n_known + n_novel, dim)


def class_means(n_classes: int, dim: int, informative: int, separation: float, rng) -> np.ndarray:
    """Centred class means whose minimum pairwise distance equals ``separation``."""
    means = np.zeros((n_classes, dim))
    if n_classes == 1:
        return means
    raw = rng.standard_normal((n_classes, informative))
    raw -= raw.mean(axis=0)
    diff = raw[:, None, :] - raw[None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    min_d = dist[np.triu_indices(n_classes, 1)].min()
    means[:, :informative] = raw * (separation / min_d)
    return means


def _place_box(cell: int, rng) -> BoundingBox:
    cw, ch = IMAGE_W / 2, IMAGE_H / 2
    cx, cy = (cell % 2) * cw, (cell // 2) * ch
    w = rng.uniform(0.3, 0.9) * cw
    h = rng.uniform(0.3, 0.9) * ch
    x = cx + rng.uniform(0, cw - w)
    y = cy + rng.uniform(0, ch - h)
    return BoundingBox(round(x, 2), round(y, 2), round(w, 2), round(h, 2))


def _jitter_box(b: BoundingBox, rng) -> BoundingBox:
    # shifts and rescales stay within 5%, keeping IoU with the source well above 0.5
    dx, dy = rng.uniform(-0.05, 0.05, 2) * (b.w, b.h)
    sw, sh = rng.uniform(0.95, 1.05, 2)
    return BoundingBox(round(b.x + dx, 2), round(b.y + dy, 2), round(b.w * sw, 2), round(b.h * sh, 2))


def synth_dataset(cfg: SynthConfig) -> SynthData:
    split = load_task_split(cfg.task_id)
    cfg.validate(split)
    rng = np.random.default_rng(cfg.seed)

    known_ids = [split.class_id(c) for c in split.known_classes[: cfg.n_known_classes]]
    novel_ids = [split.class_id(c) for c in split.unknown_classes[: cfg.n_novel_classes]]
    class_ids = known_ids + novel_ids
    means = class_means(len(class_ids), cfg.dim, cfg.informative_dims, cfg.cluster_separation, rng)

    n = len(class_ids) * cfg.samples_per_class
    which = np.repeat(np.arange(len(class_ids)), cfg.samples_per_class)
    which = which[rng.permutation(n)]
    feats = means[which] + rng.standard_normal((n, cfg.dim))

    gt, dets, embs = [], [], []
    for i in range(n):
        img = f"img{i // cfg.objects_per_image:05d}"
        slot = i % cfg.objects_per_image
        cid = class_ids[which[i]]
        box = _place_box(slot, rng)
        known = cid in known_ids
        gt.append(ObjectRecord(img, f"{img}#{slot}", box,
                               ClassTag.known(cid) if known else ClassTag.unknown(), 1.0, gt_class=cid))

        # detector simulation: always consume the same draws so rates do not reshuffle the rest
        miss = rng.random() < cfg.detector_miss_rate
        confuse = rng.random() < cfg.detector_confusion_rate
        wrong_class = known_ids[int(rng.integers(len(known_ids)))]
        det_box = _jitter_box(box, rng)
        score = round(float(rng.uniform(0.5, 1.0)), 6)
        if miss:
            continue
        if known:
            tag = ClassTag.known(cid)
        elif confuse:
            tag = ClassTag.known(wrong_class)
        else:
            tag = ClassTag.unknown()
        det_id = f"{img}#d{slot}"
        dets.append(ObjectRecord(img, det_id, det_box, tag, score))
        embs.append(EmbeddingRecord(det_id, feats[i]))

    return SynthData(split, gt, dets, embs, feats, means)


def synth_generate(cfg: SynthConfig, out_dir) -> dict[str, Path]:
    """Write ``gt.jsonl``, ``detections.jsonl`` and ``embeddings.jsonl`` to ``out_dir``."""
    data = synth_dataset(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "gt": out / "gt.jsonl",
        "detections": out / "detections.jsonl",
        "embeddings": out / "embeddings.jsonl",
    }
    write_ground_truth(data.gt, paths["gt"], data.split)
    write_detections(data.detections, paths["detections"], data.split)
    write_embeddings(data.embeddings, paths["embeddings"])
    return paths


def config_dict(cfg: SynthConfig) -> dict:
    return asdict(cfg)
