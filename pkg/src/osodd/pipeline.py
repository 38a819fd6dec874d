"""End-to-end orchestration: detector output to OSODD predictions and metrics."""

from __future__ import annotations

import logging
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .clustmetrics import cluster_scores
from .core import ClassTag, EmbeddingRecord, MemoryBuffer, ObjectRecord, TaskSplit, store_predictions
from .detmetrics import detection_scores, match_detections, unknown_matching
from .discovery import constrained_kmeans, estimate_class_number
from .errors import StageError
from .fileio import write_predictions
from .report import MetricReport
from .trainer import TrainConfig, encode, init_head, train

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    iou: float = 0.5
    dim: int = 256
    tau: float = 1.0
    epochs: int = 50
    lr: float = 0.015
    queue: int = 4096
    batch_size: int = 128
    k: int | None = None
    k_range: tuple[int, int] = (2, 8)
    score_floor: float = 0.05
    eval_all_working: bool = False
    n_init: int = 10

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, learning_rate=self.lr, temperature=self.tau,
                           queue_size=self.queue, batch_size=self.batch_size, seed=self.seed)

    def echo(self) -> dict:
        doc = asdict(self)
        doc["k_range"] = list(self.k_range)
        doc["train"] = asdict(self.train_config())
        return doc


@dataclass(frozen=True, eq=False)
class PipelineResult:
    predictions: list[ObjectRecord]
    report: MetricReport
    buffer: MemoryBuffer
    assignments: dict[str, int]
    novel_centroids: np.ndarray


@contextmanager
def _stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def _cluster_pairs(buffer, predictions_by_id, gt, split, cfg):
    """(predicted novel id, true class id) for the objects clustering is scored on."""
    working = [rec for rec, _ in buffer.working]
    if cfg.eval_all_working:
        pairs = match_detections(working, gt, cfg.iou)
        return [(predictions_by_id[d.object_id].tag.id, g.gt_class if g.gt_class is not None else g.tag.id)
                for d, g in pairs]
    gt_unknown = [g for g in gt if g.tag.is_unknown]
    by_gt = {g.object_id: g for g in gt_unknown}
    matching = unknown_matching(working, gt_unknown, cfg.iou)
    return [(predictions_by_id[d].tag.id, by_gt[g].gt_class) for d, g in matching.pairs]


def run_pipeline(
    gt: Sequence[ObjectRecord],
    detections: Sequence[ObjectRecord],
    embeddings: Sequence[EmbeddingRecord],
    split: TaskSplit,
    cfg: PipelineConfig = PipelineConfig(),
    predictions_path=None,
) -> PipelineResult:
    """Run every stage and return predictions plus the metric report.

    Detections are expected to be filtered by score already. Any failure is
    re-raised as StageError naming the stage.
    """
    t0 = time.perf_counter()
    gt = list(gt)
    detections = list(detections)

    with _stage("store"):
        buffer = store_predictions(MemoryBuffer(), detections, embeddings)
        if not buffer.working:
            raise ValueError("no unknown-tagged detections reach working memory")

    with _stage("train"):
        head = init_head(buffer.dim, cfg.dim, cfg.seed)
        head, stats = train(head, buffer, cfg.train_config())
        log.info("trained %d steps, final loss %s", stats.steps, stats.final_loss)

    with _stage("encode"):
        known_emb = encode(head, buffer.known_matrix()) if buffer.known else np.zeros((0, cfg.dim))
        working_emb = encode(head, buffer.working_matrix())

    k_est = cfg.k
    if k_est is None:
        with _stage("estimate"):
            est = estimate_class_number(known_emb, buffer.known_labels(), working_emb,
                                        cfg.k_range[0], cfg.k_range[1], seed=cfg.seed)
            k_est = est.k_est
            log.info("estimated %d novel categories", k_est)

    with _stage("discover"):
        ids = [rec.object_id for rec, _ in buffer.working]
        result = constrained_kmeans(known_emb, buffer.known_labels(), working_emb, k_est,
                                    seed=cfg.seed, n_init=cfg.n_init, working_ids=ids)
        predictions = [
            d.with_tag(ClassTag.novel(result.assignments[d.object_id])) if d.tag.is_unknown else d
            for d in detections
        ]

    with _stage("evaluate"):
        det = detection_scores(detections, gt, split, cfg.iou)
        by_id = {p.object_id: p for p in predictions}
        pairs = _cluster_pairs(buffer, by_id, gt, split, cfg)
        scores = cluster_scores(*zip(*pairs)) if pairs else {"acc": None, "nmi": None, "purity": None}
        counts = {
            "gt_known": sum(g.tag.is_known for g in gt),
            "gt_unknown": sum(g.tag.is_unknown for g in gt),
            "detections": len(detections),
            "known_memory": len(buffer.known),
            "working_memory": len(buffer.working),
            "clustering_evaluated": len(pairs),
        }
        report = MetricReport(
            task_id=split.task_id,
            map_previous=det.map_previous,
            map_current=det.map_current,
            udr=det.udr,
            udp=det.udp,
            acc=scores["acc"],
            nmi=scores["nmi"],
            purity=scores["purity"],
            k_est=int(k_est),
            counts=counts,
            config=cfg.echo(),
            wall_time_seconds=time.perf_counter() - t0,
        )

    if predictions_path is not None:
        with _stage("write"):
            write_predictions(predictions, predictions_path, split)
    return PipelineResult(predictions, report, buffer, result.assignments, result.novel_centroids)
