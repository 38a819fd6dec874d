"""Domain types, benchmark task splits and the dual memory buffer."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DuplicateId,
    InvalidTag,
    IoFailure,
    MissingEmbedding,
    SchemaMismatch,
    UnknownTask,
)

SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box as ``[x_left, y_top, w, h]`` in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"box {name} must be finite")
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box width and height must be positive, got w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]


@dataclass(frozen=True)
class ClassTag:
    """Known class, unknown object, or discovered novel category."""

    kind: str
    id: int | None = None

    KINDS = ("known", "unknown", "novel")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidTag(f"unrecognised tag kind {self.kind!r}")
        if self.kind == "unknown":
            if self.id is not None:
                raise InvalidTag("unknown tag carries no id")
        elif not isinstance(self.id, (int, np.integer)) or self.id < 0:
            raise InvalidTag(f"{self.kind} tag needs a non-negative integer id, got {self.id!r}")

    @classmethod
    def known(cls, class_id: int) -> "ClassTag":
        return cls("known", int(class_id))

    @classmethod
    def unknown(cls) -> "ClassTag":
        return cls("unknown")

    @classmethod
    def novel(cls, category: int) -> "ClassTag":
        return cls("novel", int(category))

    @property
    def is_known(self) -> bool:
        return self.kind == "known"

    @property
    def is_unknown(self) -> bool:
        return self.kind == "unknown"

    @property
    def is_novel(self) -> bool:
        return self.kind == "novel"

    def to_json(self) -> dict:
        return {"kind": self.kind, "id": self.id}

    @classmethod
    def from_json(cls, obj: dict) -> "ClassTag":
        return cls(obj["kind"], obj.get("id"))


@dataclass(frozen=True)
class ObjectRecord:
    """One annotated or predicted object.

    ``gt_class`` is only set on ground-truth records and holds the annotated
    class index (into :data:`TaskSplit.all_classes`), so unknown-class
    ground truth keeps its identity for clustering evaluation.
    """

    image_id: str
    object_id: str
    box: BoundingBox
    tag: ClassTag
    score: float = 1.0
    gt_class: int | None = None

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must lie in [0, 1], got {self.score}")

    def with_tag(self, tag: ClassTag) -> "ObjectRecord":
        return ObjectRecord(self.image_id, self.object_id, self.box, tag, self.score, self.gt_class)


@dataclass(frozen=True, eq=False)
class EmbeddingRecord:
    object_id: str
    vector: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.ndim != 1 or vec.size == 0:
            raise ValueError("embedding must be a non-empty 1-D vector")
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"embedding for {self.object_id!r} has non-finite entries")
        vec = vec.copy()
        vec.flags.writeable = False
        object.__setattr__(self, "vector", vec)

    @property
    def dim(self) -> int:
        return int(self.vector.shape[0])

    def __eq__(self, other):
        if not isinstance(other, EmbeddingRecord):
            return NotImplemented
        return self.object_id == other.object_id and np.array_equal(self.vector, other.vector)

    def __hash__(self):
        return hash((self.object_id, self.vector.tobytes()))


# ---------------------------------------------------------------------------
# task splits


@dataclass(frozen=True)
class TaskSplit:
    task_id: int
    known_classes: tuple[str, ...]
    unknown_classes: tuple[str, ...]
    previous_known: tuple[str, ...]
    all_classes: tuple[str, ...] = field(repr=False, default=())

    def __post_init__(self):
        if set(self.known_classes) & set(self.unknown_classes):
            raise ValueError("known and unknown class sets overlap")
        if not set(self.previous_known) <= set(self.known_classes):
            raise ValueError("previous_known must be a subset of known_classes")
        if not self.all_classes:
            object.__setattr__(self, "all_classes", self.known_classes + self.unknown_classes)

    @property
    def current_known(self) -> tuple[str, ...]:
        prev = set(self.previous_known)
        return tuple(c for c in self.known_classes if c not in prev)

    def class_id(self, name: str) -> int:
        """Index of ``name`` in the 80-class list; matching ignores case."""
        lookup = _name_lookup(self.all_classes)
        try:
            return lookup[name.casefold()]
        except KeyError:
            raise KeyError(name) from None

    def class_name(self, class_id: int) -> str:
        return self.all_classes[class_id]

    def is_known(self, class_id: int) -> bool:
        return self.all_classes[class_id] in self._known_set

    @property
    def _known_set(self) -> frozenset[str]:
        return frozenset(self.known_classes)

    def known_ids(self) -> list[int]:
        return [self.class_id(c) for c in self.known_classes]


@lru_cache(maxsize=8)
def _name_lookup(names: tuple[str, ...]) -> dict[str, int]:
    return {n.casefold(): i for i, n in enumerate(names)}


@lru_cache(maxsize=1)
def _split_resource() -> dict:
    text = resources.files("osodd").joinpath("data/task_splits.json").read_text(encoding="utf-8")
    return json.loads(text)


def load_task_split(task_id: int) -> TaskSplit:
    """Return the known/unknown class split of benchmark task 1, 2 or 3."""
    if task_id not in (1, 2, 3) or isinstance(task_id, bool):
        raise UnknownTask(f"task id must be 1, 2 or 3, got {task_id!r}")
    doc = _split_resource()
    entry = doc["tasks"][str(task_id)]
    previous = () if task_id == 1 else tuple(doc["tasks"][str(task_id - 1)]["known"])
    return TaskSplit(
        task_id=task_id,
        known_classes=tuple(entry["known"]),
        unknown_classes=tuple(entry["unknown"]),
        previous_known=previous,
        all_classes=tuple(doc["classes"]),
    )


# ---------------------------------------------------------------------------
# memory buffer

MemoryEntry = tuple[ObjectRecord, EmbeddingRecord]


@dataclass(frozen=True)
class MemoryBuffer:
    """Known memory (labelled detections) plus working memory (unknowns)."""

    known: tuple[MemoryEntry, ...] = ()
    working: tuple[MemoryEntry, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "known", tuple(self.known))
        object.__setattr__(self, "working", tuple(self.working))
        for rec, _ in self.known:
            if not rec.tag.is_known:
                raise InvalidTag(f"known memory entry {rec.object_id!r} has tag {rec.tag.kind}")
        for rec, _ in self.working:
            if not rec.tag.is_unknown:
                raise InvalidTag(f"working memory entry {rec.object_id!r} has tag {rec.tag.kind}")
        seen = set()
        for rec, emb in self.known + self.working:
            if rec.object_id != emb.object_id:
                raise ValueError(f"record/embedding id mismatch: {rec.object_id} vs {emb.object_id}")
            if rec.object_id in seen:
                raise DuplicateId(f"object id {rec.object_id!r} stored twice")
            seen.add(rec.object_id)
        dims = {emb.dim for _, emb in self.known + self.working}
        if len(dims) > 1:
            raise SchemaMismatch(f"mixed embedding dimensions in buffer: {sorted(dims)}")

    def __len__(self):
        return len(self.known) + len(self.working)

    @property
    def dim(self) -> int | None:
        for _, emb in self.known + self.working:
            return emb.dim
        return None

    def known_matrix(self) -> np.ndarray:
        return _stack([e.vector for _, e in self.known], self.dim)

    def working_matrix(self) -> np.ndarray:
        return _stack([e.vector for _, e in self.working], self.dim)

    def known_labels(self) -> np.ndarray:
        return np.array([r.tag.id for r, _ in self.known], dtype=np.int64)

    def all_matrix(self) -> np.ndarray:
        """Known rows followed by working rows, in store order."""
        return _stack([e.vector for _, e in self.known + self.working], self.dim)

    def object_ids(self) -> list[str]:
        return [r.object_id for r, _ in self.known + self.working]


def _stack(rows: Sequence[np.ndarray], dim: int | None) -> np.ndarray:
    if not rows:
        return np.zeros((0, dim or 0))
    return np.vstack(rows)


def store_predictions(
    buffer: MemoryBuffer,
    detections: Iterable[ObjectRecord],
    embeddings: Iterable[EmbeddingRecord],
) -> MemoryBuffer:
    """Route detector outputs into known or working memory.

    Returns a new buffer; the input buffer is left untouched.
    """
    detections = list(detections)
    by_id: dict[str, EmbeddingRecord] = {}
    for emb in embeddings:
        by_id[emb.object_id] = emb

    missing = [d.object_id for d in detections if d.object_id not in by_id]
    if missing:
        raise MissingEmbedding(missing)

    taken = set(buffer.object_ids())
    known = list(buffer.known)
    working = list(buffer.working)
    for det in detections:
        if det.object_id in taken:
            raise DuplicateId(f"object id {det.object_id!r} already stored")
        taken.add(det.object_id)
        if det.tag.is_known:
            known.append((det, by_id[det.object_id]))
        elif det.tag.is_unknown:
            working.append((det, by_id[det.object_id]))
        else:
            raise InvalidTag(f"detection {det.object_id!r}: only known/unknown tags can be stored, got {det.tag.kind}")
    return MemoryBuffer(tuple(known), tuple(working))


# ---------------------------------------------------------------------------
# snapshot


def snapshot_memory(buffer: MemoryBuffer, path) -> None:
    """Write ``buffer`` as versioned JSONL; vectors round-trip bit-exactly."""
    path = Path(path)
    lines = [json.dumps({"version": SNAPSHOT_VERSION, "dim": buffer.dim})]
    for store, entries in (("known", buffer.known), ("working", buffer.working)):
        for rec, emb in entries:
            lines.append(json.dumps({
                "store": store,
                "object_id": rec.object_id,
                "image_id": rec.image_id,
                "bbox": rec.box.as_list(),
                "tag": rec.tag.to_json(),
                "score": rec.score,
                "vector": emb.vector.tolist(),
            }))
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write memory snapshot {path}: {exc}") from exc


def load_memory(path, expected_dim: int | None = None) -> MemoryBuffer:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read memory snapshot {path}: {exc}") from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SchemaMismatch(f"{path}: missing header line")
    header = json.loads(lines[0])
    if header.get("version") != SNAPSHOT_VERSION:
        raise SchemaMismatch(f"{path}: unsupported snapshot version {header.get('version')!r}")
    dim = header.get("dim")
    if expected_dim is not None and dim is not None and dim != expected_dim:
        raise SchemaMismatch(f"{path}: snapshot dim {dim} does not match run dim {expected_dim}")

    known, working = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        obj = json.loads(line)
        vec = np.array(obj["vector"], dtype=np.float64)
        if dim is not None and vec.shape != (dim,):
            raise SchemaMismatch(f"{path}:{lineno}: vector length {vec.size} != header dim {dim}")
        rec = ObjectRecord(
            image_id=obj["image_id"],
            object_id=obj["object_id"],
            box=BoundingBox(*obj["bbox"]),
            tag=ClassTag.from_json(obj["tag"]),
            score=obj["score"],
        )
        entry = (rec, EmbeddingRecord(obj["object_id"], vec))
        if obj["store"] == "known":
            known.append(entry)
        elif obj["store"] == "working":
            working.append(entry)
        else:
            raise SchemaMismatch(f"{path}:{lineno}: unknown store {obj['store']!r}")
    return MemoryBuffer(tuple(known), tuple(working))
