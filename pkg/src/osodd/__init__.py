"""Open-set object detection evaluation and novel category discovery."""

from .clustmetrics import cluster_scores, clustering_accuracy, contingency, hungarian_assign, nmi, purity
from .core import (
    BoundingBox,
    ClassTag,
    EmbeddingRecord,
    MemoryBuffer,
    ObjectRecord,
    TaskSplit,
    load_memory,
    load_task_split,
    snapshot_memory,
    store_predictions,
)
from .detmetrics import (
    DetectionScores,
    UnknownMatchCounts,
    average_precision,
    detection_scores,
    iou,
    match_unknown,
    mean_ap,
    udr_udp,
)
from .discovery import (
    DiscoveryResult,
    KEstimate,
    constrained_kmeans,
    estimate_class_number,
    finch,
    kmeans,
    kmeans_pp_init,
    select_partition,
)
from .losses import (
    ContrastiveBatch,
    LossWeights,
    PrototypeSet,
    info_nce,
    mixup_view,
    prototype_loss,
    roi_total_loss,
    update_prototypes,
)
from .pipeline import PipelineConfig, run_pipeline
from .report import MetricReport, emit_report, load_report
from .synth import SynthConfig, synth_dataset, synth_generate
from .trainer import KeyQueue, ProjectionHead, TrainConfig, encode, init_head, train

__version__ = "0.1.0"
