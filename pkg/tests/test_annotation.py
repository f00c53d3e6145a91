import hashlib
import json

import numpy as np
import pytest

import domainaudit.annotation as annotation
from domainaudit.annotation import (
    BATCH_SIZE,
    AnnotationSession,
    LabelRecord,
    LabelStore,
    merge_annotations,
)
from domainaudit.errors import UsageError
from domainaudit.labels import DomainLabel, EmbeddingRecord
from domainaudit.store import write_store

NAT, AMB, REND = DomainLabel.NATURAL, DomainLabel.AMBIGUOUS, DomainLabel.RENDITION


def make_corpus(tmp_path, n=60, d=4):
    rng = np.random.default_rng(0)
    vectors = rng.normal(size=(n, d)).astype(np.float32)
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    records = [EmbeddingRecord(i, vectors[i]) for i in range(n)]
    path = tmp_path / "corpus.embs"
    write_store(path, records, dimension=d)
    return path


@pytest.fixture()
def session(tmp_path):
    store_path = make_corpus(tmp_path)
    return AnnotationSession(store_path, LabelStore(tmp_path / "labels"))


def test_batch_at_corpus_tail(session):
    batch = session.get_batch(50)
    assert len(batch.items) == 10
    assert [i.id for i in batch.items] == list(range(50, 60))


def test_batch_is_exactly_25_when_available(session):
    assert len(session.get_batch(0).items) == BATCH_SIZE == 25


def test_batch_never_exceeds_25(session):
    for offset in range(0, 70, 7):
        assert len(session.get_batch(offset).items) <= 25


def test_batch_beyond_end_is_empty_not_error(session):
    assert session.get_batch(10_000).items == []


def test_batch_read_is_stateless(session):
    a = session.get_batch(0)
    b = session.get_batch(0)
    assert [i.to_dict() for i in a.items] == [i.to_dict() for i in b.items]


def test_prelabel_defaults_to_ambiguous_without_classifiers(session):
    assert all(i.prelabel == AMB for i in session.get_batch(0).items)


def test_prelabel_uses_classifier_pair(tmp_path, calibrated_pair, synth_corpus):
    data, _, _ = synth_corpus
    store_path = tmp_path / "synth.embs"
    data.write(store_path)
    natural, rendition = calibrated_pair
    session = AnnotationSession(
        store_path, LabelStore(tmp_path / "labels"),
        natural_clf=natural, rendition_clf=rendition,
    )
    batch = session.get_batch(0)
    truth = {int(i): DomainLabel(int(d)) for i, d in zip(data.ids, data.domains)}
    agree = sum(1 for item in batch.items if item.prelabel == truth[item.id])
    assert agree >= 23  # near-oracle classifiers pre-label almost everything


def test_submit_then_batch_reflects_labels(session):
    session.submit_labels([LabelRecord(3, REND, "default", 100.0)])
    batch = session.get_batch(0)
    assert batch.items[3].label == REND
    assert batch.items[4].label is None


def test_last_write_wins_by_timestamp(session):
    session.submit_labels([LabelRecord(5, NAT, "default", 200.0)])
    session.submit_labels([LabelRecord(5, REND, "default", 150.0)])  # stale
    assert session.get_batch(0).items[5].label == NAT
    session.submit_labels([LabelRecord(5, REND, "default", 300.0)])
    assert session.get_batch(0).items[5].label == REND


def test_unknown_id_rejects_whole_submission(session, tmp_path):
    session.submit_labels([LabelRecord(1, NAT, "default", 1.0)])
    path = session.labels.path_for("default")
    checksum = hashlib.sha256(path.read_bytes()).hexdigest()
    records = [LabelRecord(i, NAT, "default", 2.0) for i in range(24)]
    records.append(LabelRecord(999_999, NAT, "default", 2.0))
    with pytest.raises(UsageError, match="unknown record ids"):
        session.submit_labels(records)
    assert hashlib.sha256(path.read_bytes()).hexdigest() == checksum


def test_persisted_count_counts_applied_records(session):
    n = session.submit_labels(
        [LabelRecord(1, NAT, "default", 5.0), LabelRecord(2, REND, "default", 5.0)]
    )
    assert n == 2
    # a stale update applies nothing
    assert session.submit_labels([LabelRecord(1, REND, "default", 1.0)]) == 0


def test_label_file_format(session):
    session.submit_labels([LabelRecord(7, AMB, "alice", 42.0)])
    raw = json.loads(session.labels.path_for("alice").read_text())
    assert raw == {"7": {"label": "ambiguous", "annotator": "alice", "timestamp": 42.0}}


def test_crash_between_write_and_rename_leaves_valid_json(session, monkeypatch):
    session.submit_labels([LabelRecord(1, NAT, "default", 1.0)])
    path = session.labels.path_for("default")
    before = path.read_text()

    def crashing_replace(src, dst):
        raise OSError("injected crash before rename")

    monkeypatch.setattr(annotation, "_replace", crashing_replace)
    with pytest.raises(OSError, match="injected"):
        session.submit_labels([LabelRecord(2, REND, "default", 2.0)])
    monkeypatch.undo()
    assert path.read_text() == before
    json.loads(path.read_text())  # still valid JSON
    # recovery after the crash works
    session.submit_labels([LabelRecord(2, REND, "default", 3.0)])
    assert session.get_batch(0).items[2].label == REND


def test_label_record_validates_label():
    with pytest.raises(UsageError):
        LabelRecord(1, DomainLabel.UNKNOWN, "a", 1.0)


def test_progress_counts(session):
    session.submit_labels(
        [
            LabelRecord(0, NAT, "default", 1.0),
            LabelRecord(1, NAT, "default", 1.0),
            LabelRecord(2, REND, "default", 1.0),
        ]
    )
    progress = session.progress()
    assert progress["labeled"] == 3
    assert progress["total"] == 60
    assert progress["per_class"] == {"natural": 2, "ambiguous": 0, "rendition": 1}


def _label_sets(assignments):
    """{annotator: {id: entry}} from {annotator: [labels in id order]}."""
    out = {}
    for annotator, labels in assignments.items():
        out[annotator] = {
            i: {"label": lab, "annotator": annotator, "timestamp": 1.0}
            for i, lab in enumerate(labels)
        }
    return out


def test_merge_unanimous():
    sets = _label_sets({
        "a": ["natural", "rendition"],
        "b": ["natural", "rendition"],
        "c": ["natural", "rendition"],
    })
    merged, rate = merge_annotations(sets, reference="a")
    assert merged == {0: NAT, 1: REND}
    assert rate == 1.0


def test_merge_no_consensus_resolves_ambiguous():
    sets = _label_sets({"a": ["natural"], "b": ["rendition"], "c": ["ambiguous"]})
    merged, _ = merge_annotations(sets, reference="a")
    assert merged == {0: AMB}


def test_merge_majority_two_of_three():
    sets = _label_sets({"a": ["natural"], "b": ["natural"], "c": ["rendition"]})
    merged, rate = merge_annotations(sets, reference="c")
    assert merged == {0: NAT}
    assert rate == 0.0


def test_merge_even_split_is_ambiguous():
    sets = _label_sets({
        "a": ["natural"], "b": ["natural"], "c": ["rendition"], "d": ["rendition"],
    })
    merged, _ = merge_annotations(sets, reference="a")
    assert merged == {0: AMB}


def test_merge_permutation_invariant():
    rng = np.random.default_rng(4)
    names = ["a", "b", "c"]
    labels = {
        n: [["natural", "ambiguous", "rendition"][int(v)] for v in rng.integers(0, 3, 40)]
        for n in names
    }
    sets = _label_sets(labels)
    merged1, rate1 = merge_annotations(sets, reference="b")
    shuffled = {n: sets[n] for n in ["c", "a", "b"]}
    merged2, rate2 = merge_annotations(shuffled, reference="b")
    assert merged1 == merged2 and rate1 == rate2


def test_merge_agreement_rate_fixture():
    # reference agrees with the majority on 93 of 100 ids
    ref = ["natural"] * 100
    votes = {"ref": list(ref), "b": list(ref), "c": list(ref)}
    for i in range(7):
        votes["b"][i] = votes["c"][i] = "rendition"
    merged, rate = merge_annotations(_label_sets(votes), reference="ref")
    assert rate == pytest.approx(0.93)


def test_merge_requires_two_annotators_and_same_ids():
    sets = _label_sets({"a": ["natural"]})
    with pytest.raises(UsageError, match="2 annotators"):
        merge_annotations(sets, reference="a")
    uneven = _label_sets({"a": ["natural", "natural"], "b": ["natural"]})
    with pytest.raises(UsageError, match="different id sets"):
        merge_annotations(uneven, reference="a")
    with pytest.raises(UsageError, match="reference"):
        merge_annotations(_label_sets({"a": ["natural"], "b": ["natural"]}), reference="zz")


def test_image_path_lookup(tmp_path):
    store_path = make_corpus(tmp_path, n=3)
    images = tmp_path / "imgs"
    images.mkdir()
    (images / "1.png").write_bytes(b"\x89PNG fake")
    session = AnnotationSession(store_path, LabelStore(tmp_path / "labels"), images_dir=images)
    assert session.image_path(1).name == "1.png"
    assert session.image_path(2) is None
    batch = session.get_batch(0)
    assert batch.items[1].image == "/img/1"
    assert batch.items[0].image is None
