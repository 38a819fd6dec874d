import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import obj
from oracles import CLASS_ROWS
from osodd.core import (
    BoundingBox,
    ClassTag,
    EmbeddingRecord,
    MemoryBuffer,
    load_memory,
    load_task_split,
    snapshot_memory,
    store_predictions,
)
from osodd.errors import DuplicateId, InvalidTag, MissingEmbedding, SchemaMismatch, UnknownTask

ALL = [c for row in CLASS_ROWS for c in row]


def emb(oid, vec):
    return EmbeddingRecord(oid, np.asarray(vec, dtype=float))


# domain types ------------------------------------------------------------------


def test_box_validation():
    assert BoundingBox(1, 2, 3, 4).area == 12
    for bad in [(0, 0, 0, 1), (0, 0, 1, -1), (float("nan"), 0, 1, 1), (0, 0, float("inf"), 1)]:
        with pytest.raises(ValueError):
            BoundingBox(*bad)


def test_class_tag_variants():
    assert ClassTag.known(3).is_known and ClassTag.unknown().is_unknown and ClassTag.novel(0).is_novel
    assert ClassTag.from_json(ClassTag.novel(2).to_json()) == ClassTag.novel(2)
    for bad in [("known", -1), ("known", None), ("unknown", 1), ("other", 0)]:
        with pytest.raises(InvalidTag):
            ClassTag(*bad)


def test_object_record_score_range():
    with pytest.raises(ValueError):
        obj("a", score=1.5)
    rec = obj("a", score=0.3)
    assert rec.with_tag(ClassTag.novel(1)).tag == ClassTag.novel(1)
    assert rec.with_tag(ClassTag.novel(1)).score == 0.3


def test_embedding_record():
    e = emb("a", [1.0, 2.0])
    assert e.dim == 2 and e == emb("a", [1.0, 2.0]) and e != emb("a", [1.0, 3.0])
    with pytest.raises(ValueError):
        emb("a", [np.nan])
    with pytest.raises(ValueError):
        e.vector[0] = 5.0


# task splits ---------------------------------------------------------------------


@pytest.mark.parametrize("task, n_known", [(1, 20), (2, 40), (3, 60)])
def test_split_counts_and_names(task, n_known):
    split = load_task_split(task)
    assert len(split.known_classes) == n_known
    assert len(split.unknown_classes) == 80 - n_known
    assert list(split.known_classes) == ALL[:n_known]
    assert list(split.unknown_classes) == ALL[n_known:]
    assert list(split.previous_known) == ALL[: n_known - 20]
    assert list(split.all_classes) == ALL


def test_split_errors_and_purity():
    for bad in (0, 4, True):
        with pytest.raises(UnknownTask):
            load_task_split(bad)
    assert load_task_split(2) == load_task_split(2)


def test_split_lookup():
    split = load_task_split(1)
    assert split.class_id("dining TABLE") == 10
    assert split.class_name(10) == "Dining table"
    assert split.is_known(0) and not split.is_known(20)
    assert split.known_ids() == list(range(20))
    with pytest.raises(KeyError):
        split.class_id("Unicorn")


# memory buffer -------------------------------------------------------------------


def sample_detections():
    dets = [obj("k1", tag=ClassTag.known(0)), obj("k2", tag=ClassTag.known(1))]
    dets += [obj(f"u{i}") for i in range(3)]
    embs = [emb(d.object_id, [i, i + 0.5]) for i, d in enumerate(dets)]
    return dets, embs


def test_store_predictions_routes():
    dets, embs = sample_detections()
    empty = MemoryBuffer()
    buf = store_predictions(empty, dets, embs)
    assert len(buf.known) == 2 and len(buf.working) == 3
    assert len(empty) == 0
    assert buf.known_labels().tolist() == [0, 1]
    assert buf.all_matrix().shape == (5, 2)
    assert np.array_equal(buf.all_matrix(), np.vstack((buf.known_matrix(), buf.working_matrix())))


def test_store_predictions_errors():
    dets, embs = sample_detections()
    with pytest.raises(InvalidTag):
        store_predictions(MemoryBuffer(), [obj("n", tag=ClassTag.novel(0))], [emb("n", [0, 0])])
    with pytest.raises(MissingEmbedding) as err:
        store_predictions(MemoryBuffer(), dets, embs[1:])
    assert "k1" in str(err.value)
    buf = store_predictions(MemoryBuffer(), dets, embs)
    with pytest.raises(DuplicateId):
        store_predictions(buf, dets[:1], embs[:1])


def test_buffer_rejects_wrong_store_tags():
    dets, embs = sample_detections()
    with pytest.raises(InvalidTag):
        MemoryBuffer(known=((dets[2], embs[2]),))
    with pytest.raises(InvalidTag):
        MemoryBuffer(working=((dets[0], embs[0]),))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.booleans(), min_size=0, max_size=5), min_size=1, max_size=5))
def test_id_disjointness_over_store_sequences(batches):
    buf = MemoryBuffer()
    n = 0
    for batch in batches:
        dets, embs = [], []
        for is_known in batch:
            oid = f"o{n}"
            n += 1
            dets.append(obj(oid, tag=ClassTag.known(0) if is_known else ClassTag.unknown()))
            embs.append(emb(oid, [float(n)]))
        buf = store_predictions(buf, dets, embs)
        known_ids = {r.object_id for r, _ in buf.known}
        working_ids = {r.object_id for r, _ in buf.working}
        assert not known_ids & working_ids
        assert len(known_ids) + len(working_ids) == n


def test_snapshot_round_trip(tmp_path):
    snapshot_memory(MemoryBuffer(), tmp_path / "empty.jsonl")
    assert load_memory(tmp_path / "empty.jsonl") == MemoryBuffer()

    rng = np.random.default_rng(0)
    dets = [obj(f"o{i}", tag=ClassTag.known(i % 3) if i % 2 else ClassTag.unknown(), score=float(rng.random()))
            for i in range(100)]
    embs = [emb(d.object_id, rng.standard_normal(6) * 1e3) for d in dets]
    buf = store_predictions(MemoryBuffer(), dets, embs)
    snapshot_memory(buf, tmp_path / "m.jsonl")
    assert load_memory(tmp_path / "m.jsonl") == buf


def test_snapshot_dim_mismatch(tmp_path):
    dets, embs = sample_detections()
    snapshot_memory(store_predictions(MemoryBuffer(), dets, embs), tmp_path / "m.jsonl")
    with pytest.raises(SchemaMismatch):
        load_memory(tmp_path / "m.jsonl", expected_dim=256)
