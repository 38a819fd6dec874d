"""Command-line entry point: ``osodd <subcommand> ...``.

Exit codes: 0 success, 2 input or schema error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import fileio
from .core import MemoryBuffer, load_task_split, store_predictions
from .detmetrics import detection_scores
from .discovery import constrained_kmeans, estimate_class_number
from .errors import InputError, OsoddError, StageError
from .pipeline import PipelineConfig, run_pipeline
from .report import MetricReport, emit_report, load_report
from .synth import SynthConfig, synth_generate
from .trainer import TrainConfig, encode, init_head, load_head, save_head, train

log = logging.getLogger("osodd")

EXIT_OK, EXIT_INPUT, EXIT_STAGE = 0, 2, 3


def _k_range(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected MIN:MAX, got {text!r}") from None
    if lo < 1 or hi < lo:
        raise argparse.ArgumentTypeError(f"invalid range {text!r}")
    return lo, hi


def _shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--task", type=int, default=1, choices=(1, 2, 3))
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--dim", type=int, default=256, help="projection head output dimension")
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.015)
    p.add_argument("--queue", type=int, default=4096)
    p.add_argument("--k", type=int, default=None, help="number of novel categories (skips estimation)")
    p.add_argument("--k-range", type=_k_range, default=(2, 8), metavar="MIN:MAX")
    p.add_argument("--score-floor", type=float, default=0.05)
    p.add_argument("--eval-all-working", action="store_true")
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.add_argument("-v", "--verbose", action="store_true")


def _pipeline_config(a) -> PipelineConfig:
    return PipelineConfig(seed=a.seed, iou=a.iou, dim=a.dim, tau=a.tau, epochs=a.epochs, lr=a.lr,
                          queue=a.queue, k=a.k, k_range=a.k_range, score_floor=a.score_floor,
                          eval_all_working=a.eval_all_working)


def _load_buffer(a, split):
    dets = fileio.ingest_detections(a.detections, split, a.score_floor)
    embs = fileio.ingest_embeddings(a.embeddings)
    return dets, embs, store_predictions(MemoryBuffer(), dets, embs)


def _features(a, buffer):
    if a.head is None:
        return buffer.known_matrix(), buffer.working_matrix()
    head = load_head(a.head)
    known = encode(head, buffer.known_matrix()) if buffer.known else buffer.known_matrix()
    return known, encode(head, buffer.working_matrix())


def _print(doc: dict) -> None:
    sys.stdout.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def cmd_synth(a) -> int:
    cfg = SynthConfig(
        n_known_classes=a.n_known, n_novel_classes=a.n_novel, samples_per_class=a.samples,
        dim=a.feature_dim, informative_dims=a.informative, cluster_separation=a.separation,
        detector_miss_rate=a.miss_rate, detector_confusion_rate=a.confusion_rate, seed=a.seed, task_id=a.task,
    )
    paths = synth_generate(cfg, a.out)
    _print({k: str(v) for k, v in paths.items()})
    return EXIT_OK


def cmd_eval_det(a) -> int:
    split = load_task_split(a.task)
    gt = fileio.ingest_ground_truth(a.gt, split)
    dets = fileio.ingest_detections(a.detections, split, a.score_floor)
    s = detection_scores(dets, gt, split, a.iou)
    report = MetricReport(task_id=a.task, map_previous=s.map_previous, map_current=s.map_current,
                          udr=s.udr, udp=s.udp, counts={"gt": len(gt), "detections": len(dets)},
                          config={"iou": a.iou, "score_floor": a.score_floor})
    sys.stdout.write(emit_report(report, a.out, a.format))
    return EXIT_OK


def cmd_train_embed(a) -> int:
    split = load_task_split(a.task)
    _, _, buffer = _load_buffer(a, split)
    cfg = TrainConfig(epochs=a.epochs, learning_rate=a.lr, temperature=a.tau, queue_size=a.queue, seed=a.seed)
    head, stats = train(init_head(buffer.dim, a.dim, a.seed), buffer, cfg)
    save_head(head, a.out)
    _print({"head": str(a.out), "steps": stats.steps, "final_loss": stats.final_loss,
            "queue_length": stats.queue_length})
    return EXIT_OK


def cmd_estimate_k(a) -> int:
    split = load_task_split(a.task)
    _, _, buffer = _load_buffer(a, split)
    known, working = _features(a, buffer)
    est = estimate_class_number(known, buffer.known_labels(), working, a.k_range[0], a.k_range[1], seed=a.seed)
    _print({"k_est": est.k_est, "search_range": list(est.search_range),
            "scores_per_k": {str(k): round(v, 6) for k, v in est.scores_per_k.items()}})
    return EXIT_OK


def cmd_discover(a) -> int:
    split = load_task_split(a.task)
    _, _, buffer = _load_buffer(a, split)
    known, working = _features(a, buffer)
    k = a.k
    if k is None:
        k = estimate_class_number(known, buffer.known_labels(), working, a.k_range[0], a.k_range[1],
                                  seed=a.seed).k_est
    ids = [rec.object_id for rec, _ in buffer.working]
    res = constrained_kmeans(known, buffer.known_labels(), working, k, seed=a.seed, working_ids=ids)
    sidecar = fileio.write_assignments(res.assignments, res.novel_centroids, a.out)
    _print({"assignments": str(a.out), "centroids": str(sidecar), "k_novel": res.k_novel,
            "iterations": res.iterations_run})
    return EXIT_OK


def cmd_pipeline(a) -> int:
    cfg = _pipeline_config(a)
    cfg.train_config()  # reject bad parameters before any stage runs
    split = load_task_split(a.task)
    gt = fileio.ingest_ground_truth(a.gt, split)
    dets = fileio.ingest_detections(a.detections, split, a.score_floor)
    embs = fileio.ingest_embeddings(a.embeddings)
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = run_pipeline(gt, dets, embs, split, cfg, out / "predictions.jsonl")
    emit_report(result.report, out / "report.json", "json")
    log.info("wall time %.3f s", result.report.wall_time_seconds)
    sys.stdout.write(emit_report(result.report, None, a.format))
    return EXIT_OK


def cmd_report(a) -> int:
    report = load_report(a.input)
    sys.stdout.write(emit_report(report, a.out, a.format))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="osodd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic benchmark")
    _shared(p)
    p.add_argument("--out", required=True)
    p.add_argument("--n-known", type=int, default=3)
    p.add_argument("--n-novel", type=int, default=4)
    p.add_argument("--samples", type=int, default=200, help="samples per class")
    p.add_argument("--feature-dim", type=int, default=16)
    p.add_argument("--informative", type=int, default=16)
    p.add_argument("--separation", type=float, default=6.0)
    p.add_argument("--miss-rate", type=float, default=0.0)
    p.add_argument("--confusion-rate", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval-det", help="UDR, UDP and known-class mAP")
    _shared(p)
    p.add_argument("--gt", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval_det)

    for name, func, help_ in (
        ("train-embed", cmd_train_embed, "train the contrastive projection head"),
        ("estimate-k", cmd_estimate_k, "estimate the number of novel categories"),
        ("discover", cmd_discover, "cluster working memory into novel categories"),
    ):
        p = sub.add_parser(name, help=help_)
        _shared(p)
        p.add_argument("--detections", required=True)
        p.add_argument("--embeddings", required=True)
        if name == "train-embed":
            p.add_argument("--out", required=True, help="head checkpoint path")
        else:
            p.add_argument("--head", help="encode features with this trained head first")
        if name == "discover":
            p.add_argument("--out", required=True, help="assignments JSONL path")
        p.set_defaults(func=func)

    p = sub.add_parser("pipeline", help="run the full discovery pipeline")
    _shared(p)
    p.add_argument("--gt", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("report", help="render a saved report")
    p.add_argument("--input", required=True)
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "text"), default="text")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        sys.stderr.write(f"osodd: {exc}\n")
        return EXIT_INPUT if isinstance(exc.cause, InputError) else EXIT_STAGE
    except InputError as exc:
        sys.stderr.write(f"osodd: {exc}\n")
        return EXIT_INPUT
    except OsoddError as exc:
        sys.stderr.write(f"osodd: {args.command} failed: {exc}\n")
        return EXIT_STAGE
    except ValueError as exc:
        # invalid parameter values (negative epochs, bad rates, ...)
        sys.stderr.write(f"osodd: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
