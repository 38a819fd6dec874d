"""JSONL readers and writers for ground truth, detections, embeddings and
OSODD predictions.

Every file starts with a header line carrying ``{"version": 1}``; embedding
files add ``"dim"``. Object ids missing from a line are assigned as
``<image_id>#<running index>`` in file order.
"""

from __future__ import annotations

import json
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .core import BoundingBox, ClassTag, EmbeddingRecord, ObjectRecord, TaskSplit
from .errors import (
    DimensionMismatch,
    DuplicateId,
    IoFailure,
    MissingEmbedding,
    ParseError,
    SchemaMismatch,
    UnknownClassName,
)

FORMAT_VERSION = 1


def _read_lines(path) -> list[tuple[int, str]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return [(i, ln) for i, ln in enumerate(text.splitlines(), start=1) if ln.strip()]


def _records(path) -> tuple[dict, Iterator[tuple[int, dict]]]:
    lines = _read_lines(path)
    if not lines:
        raise SchemaMismatch(f"{path}: empty file, expected a version header")
    lineno, first = lines[0]
    try:
        header = json.loads(first)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", lineno, path) from exc
    if not isinstance(header, dict) or "version" not in header or "object_id" in header:
        raise SchemaMismatch(f"{path}: first line must be a version header")
    if header["version"] != FORMAT_VERSION:
        raise SchemaMismatch(f"{path}: unsupported version {header['version']!r}")

    def body():
        for n, line in lines[1:]:
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", n, path) from exc
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", n, path)
            yield n, obj

    return header, body()


class _IdAssigner:
    def __init__(self):
        self.counters = defaultdict(int)
        self.seen = set()

    def __call__(self, obj: dict, image_id: str, lineno: int, path) -> str:
        oid = obj.get("object_id")
        if oid is None:
            oid = f"{image_id}#{self.counters[image_id]}"
        self.counters[image_id] += 1
        oid = str(oid)
        if oid in self.seen:
            raise DuplicateId(f"{path}:{lineno}: duplicate object id {oid!r}")
        self.seen.add(oid)
        return oid


def _box(obj: dict, lineno: int, path) -> BoundingBox:
    raw = obj.get("bbox")
    if not isinstance(raw, list) or len(raw) != 4:
        raise ParseError("bbox must be a list [x, y, w, h]", lineno, path)
    try:
        return BoundingBox(*(float(v) for v in raw))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"invalid bbox {raw}: {exc}", lineno, path) from exc


def _field(obj: dict, key: str, lineno: int, path):
    if key not in obj:
        raise ParseError(f"missing field {key!r}", lineno, path)
    return obj[key]


def _resolve(split: TaskSplit, name, lineno: int, path) -> int:
    try:
        return split.class_id(str(name))
    except KeyError:
        raise UnknownClassName(f"{path}:{lineno}: class {name!r} is not part of task {split.task_id}") from None


def ingest_ground_truth(path, split: TaskSplit) -> list[ObjectRecord]:
    """Ground-truth objects; unknown-class objects get an Unknown tag."""
    _, body = _records(path)
    assign = _IdAssigner()
    out = []
    for n, obj in body:
        image_id = str(_field(obj, "image_id", n, path))
        cid = _resolve(split, _field(obj, "class", n, path), n, path)
        tag = ClassTag.known(cid) if split.is_known(cid) else ClassTag.unknown()
        box = _box(obj, n, path)
        out.append(ObjectRecord(image_id, assign(obj, image_id, n, path), box, tag, 1.0, gt_class=cid))
    return out


def ingest_detections(path, split: TaskSplit, score_floor: float = 0.0) -> list[ObjectRecord]:
    """Detector output; detections scoring below ``score_floor`` are dropped."""
    _, body = _records(path)
    assign = _IdAssigner()
    out = []
    for n, obj in body:
        image_id = str(_field(obj, "image_id", n, path))
        oid = assign(obj, image_id, n, path)
        try:
            score = float(_field(obj, "score", n, path))
        except (TypeError, ValueError):
            raise ParseError(f"score must be a number, got {obj['score']!r}", n, path) from None
        if not 0.0 <= score <= 1.0:
            raise ParseError(f"score {score} outside [0, 1]", n, path)
        kind = _field(obj, "tag", n, path)
        if kind == "known":
            cid = _resolve(split, _field(obj, "class", n, path), n, path)
            if not split.is_known(cid):
                raise UnknownClassName(
                    f"{path}:{n}: class {obj['class']!r} is not a known class of task {split.task_id}"
                )
            tag = ClassTag.known(cid)
        elif kind == "unknown":
            tag = ClassTag.unknown()
        else:
            raise ParseError(f"tag must be 'known' or 'unknown', got {kind!r}", n, path)
        box = _box(obj, n, path)
        if score < score_floor:
            continue
        out.append(ObjectRecord(image_id, oid, box, tag, score))
    return out


def ingest_embeddings(path, expected_dim: int | None = None) -> list[EmbeddingRecord]:
    header, body = _records(path)
    dim = header.get("dim")
    if expected_dim is not None and dim is not None and dim != expected_dim:
        raise DimensionMismatch(f"{path}: header dim {dim} != expected {expected_dim}")
    want = dim if dim is not None else expected_dim
    out, seen = [], set()
    for n, obj in body:
        oid = str(_field(obj, "object_id", n, path))
        if oid in seen:
            raise DuplicateId(f"{path}:{n}: duplicate object id {oid!r}")
        seen.add(oid)
        try:
            vec = np.array(_field(obj, "vector", n, path), dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"vector is not numeric: {exc}", n, path) from exc
        if vec.ndim != 1:
            raise ParseError("vector must be a flat list", n, path)
        if want is None:
            want = vec.size
        if vec.size != want:
            raise DimensionMismatch(f"{path}:{n}: vector length {vec.size} != {want}")
        try:
            out.append(EmbeddingRecord(oid, vec))
        except ValueError as exc:
            raise ParseError(str(exc), n, path) from exc
    return out


def join_embeddings(detections: Iterable[ObjectRecord], embeddings: Iterable[EmbeddingRecord]) -> list[EmbeddingRecord]:
    """Embeddings aligned with ``detections``; raises if any id is missing."""
    by_id = {e.object_id: e for e in embeddings}
    dets = list(detections)
    missing = [d.object_id for d in dets if d.object_id not in by_id]
    if missing:
        raise MissingEmbedding(missing)
    return [by_id[d.object_id] for d in dets]


# ---------------------------------------------------------------------------
# writers


def _write_jsonl(path, header: dict, rows: Iterable[dict]) -> None:
    lines = [json.dumps(header, sort_keys=True)]
    lines.extend(json.dumps(r, sort_keys=True) for r in rows)
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def write_ground_truth(records: Sequence[ObjectRecord], path, split: TaskSplit) -> None:
    rows = []
    for r in records:
        cid = r.gt_class if r.gt_class is not None else r.tag.id
        if cid is None:
            raise ValueError(f"ground-truth record {r.object_id!r} has no class")
        rows.append({"image_id": r.image_id, "object_id": r.object_id,
                     "class": split.class_name(cid), "bbox": r.box.as_list()})
    _write_jsonl(path, {"version": FORMAT_VERSION}, rows)


def detection_row(r: ObjectRecord, split: TaskSplit) -> dict:
    row = {"image_id": r.image_id, "object_id": r.object_id, "bbox": r.box.as_list(), "score": r.score,
           "tag": r.tag.kind}
    if r.tag.is_known:
        row["class"] = split.class_name(r.tag.id)
    elif r.tag.is_novel:
        row["novel_category"] = r.tag.id
    return row


def write_detections(records: Sequence[ObjectRecord], path, split: TaskSplit) -> None:
    for r in records:
        if r.tag.is_novel:
            raise ValueError("detections files only carry known/unknown tags")
    _write_jsonl(path, {"version": FORMAT_VERSION}, (detection_row(r, split) for r in records))


def write_predictions(records: Sequence[ObjectRecord], path, split: TaskSplit) -> None:
    """OSODD predictions: known detections keep their class, unknowns carry a novel category."""
    for r in records:
        if r.tag.is_unknown:
            raise ValueError(f"prediction {r.object_id!r} still carries an unknown tag")
    _write_jsonl(path, {"version": FORMAT_VERSION}, (detection_row(r, split) for r in records))


def read_predictions(path, split: TaskSplit) -> list[ObjectRecord]:
    _, body = _records(path)
    out = []
    for n, obj in body:
        kind = _field(obj, "tag", n, path)
        if kind == "known":
            tag = ClassTag.known(_resolve(split, obj["class"], n, path))
        elif kind == "novel":
            tag = ClassTag.novel(int(_field(obj, "novel_category", n, path)))
        else:
            raise ParseError(f"unexpected prediction tag {kind!r}", n, path)
        out.append(ObjectRecord(str(obj["image_id"]), str(obj["object_id"]), _box(obj, n, path), tag,
                                float(obj["score"])))
    return out


def write_embeddings(records: Sequence[EmbeddingRecord], path) -> None:
    dims = {r.dim for r in records}
    if len(dims) > 1:
        raise DimensionMismatch(f"mixed embedding dimensions {sorted(dims)}")
    header = {"version": FORMAT_VERSION, "dim": dims.pop() if dims else None}
    _write_jsonl(path, header, ({"object_id": r.object_id, "vector": r.vector.tolist()} for r in records))


def write_assignments(assignments: dict[str, int], centroids: np.ndarray, path) -> Path:
    """Discovery output plus a ``<stem>.centroids.json`` sidecar; returns the sidecar path."""
    path = Path(path)
    rows = ({"object_id": oid, "novel_category": int(c)} for oid, c in assignments.items())
    _write_jsonl(path, {"version": FORMAT_VERSION}, rows)
    sidecar = path.with_name(path.stem + ".centroids.json")
    try:
        sidecar.write_text(json.dumps({"centroids": np.asarray(centroids).tolist()}) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {sidecar}: {exc}") from exc
    return sidecar
