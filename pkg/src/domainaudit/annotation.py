"""Human labeling workflow: 25-image batches with classifier pre-labels,
per-annotator JSON label files with atomic persistence, and majority-vote
merging across annotators."""
from __future__ import annotations

import json
import os
import threading
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calibration import CalibratedClassifier
from .errors import UsageError
from .labels import DomainLabel, label_from_name, label_name
from .partition import assign_domain
from .store import load_store_arrays

BATCH_SIZE = 25

# Routed through a module hook so tests can inject a crash between the
# temp write and the rename.
_replace = os.replace


@dataclass
class LabelRecord:
    id: int
    label: DomainLabel
    annotator: str
    timestamp: float

    def __post_init__(self):
        if self.label not in (
            DomainLabel.NATURAL, DomainLabel.AMBIGUOUS, DomainLabel.RENDITION
        ):
            raise UsageError("label must be natural, ambiguous, or rendition")


@dataclass
class BatchItem:
    id: int
    image: str | None
    prelabel: DomainLabel
    label: DomainLabel | None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "image": self.image,
            "prelabel": label_name(self.prelabel),
            "label": label_name(self.label) if self.label is not None else None,
        }


@dataclass
class Batch:
    offset: int
    items: list[BatchItem]

    def to_dict(self) -> dict:
        return {"offset": self.offset, "items": [i.to_dict() for i in self.items]}


class LabelStore:
    """One JSON file per annotator under ``directory``; every write goes
    through a write-temp-then-rename replace so a crash can never leave a
    half-written file behind."""

    def __init__(self, directory: Path | str):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def path_for(self, annotator: str) -> Path:
        safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in annotator)
        return self.directory / f"labels_{safe}.json"

    def _lock_for(self, annotator: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(annotator, threading.Lock())

    def read(self, annotator: str) -> dict[int, dict]:
        path = self.path_for(annotator)
        if not path.exists():
            return {}
        data = json.loads(path.read_text())
        return {int(k): v for k, v in data.items()}

    def annotators(self) -> list[str]:
        names = []
        for p in sorted(self.directory.glob("labels_*.json")):
            names.append(p.stem[len("labels_"):])
        return names

    def upsert(self, annotator: str, records: list[LabelRecord]) -> int:
        """Apply records for one annotator; the latest timestamp wins per
        id. Returns the number of entries written or refreshed."""
        with self._lock_for(annotator):
            current = self.read(annotator)
            applied = 0
            for rec in records:
                existing = current.get(rec.id)
                if existing is not None and existing["timestamp"] > rec.timestamp:
                    continue
                current[rec.id] = {
                    "label": label_name(rec.label),
                    "annotator": annotator,
                    "timestamp": rec.timestamp,
                }
                applied += 1
            path = self.path_for(annotator)
            tmp = path.with_name(path.name + ".tmp")
            tmp.write_text(
                json.dumps({str(k): v for k, v in sorted(current.items())}, indent=2)
                + "\n"
            )
            _replace(tmp, path)
            return applied


class AnnotationSession:
    """Serves labeling batches over one corpus and persists submissions."""

    def __init__(
        self,
        store_path: Path | str,
        label_store: LabelStore,
        images_dir: Path | str | None = None,
        natural_clf: CalibratedClassifier | None = None,
        rendition_clf: CalibratedClassifier | None = None,
        annotator: str = "default",
    ):
        ids, _, _, vectors = load_store_arrays(store_path)
        self.ids = ids
        self.vectors = vectors
        self.id_set = set(int(i) for i in ids)
        self.labels = label_store
        self.images_dir = Path(images_dir) if images_dir else None
        self.natural_clf = natural_clf
        self.rendition_clf = rendition_clf
        self.annotator = annotator

    @property
    def total(self) -> int:
        return len(self.ids)

    def _prelabels(self, rows: np.ndarray) -> list[DomainLabel]:
        if self.natural_clf is None or self.rendition_clf is None:
            return [DomainLabel.AMBIGUOUS] * len(rows)
        vecs = self.vectors[rows]
        accept_nat = self.natural_clf.decide_batch(vecs)
        accept_rend = self.rendition_clf.decide_batch(vecs)
        return [assign_domain(bool(a), bool(b)) for a, b in zip(accept_nat, accept_rend)]

    def image_path(self, rec_id: int) -> Path | None:
        if self.images_dir is None:
            return None
        matches = sorted(self.images_dir.glob(f"{rec_id}.*"))
        return matches[0] if matches else None

    def get_batch(self, offset: int, annotator: str | None = None) -> Batch:
        """Up to 25 items in corpus order from ``offset``; past-the-end
        offsets yield an empty batch."""
        if offset < 0:
            raise UsageError("offset must be >= 0")
        annotator = annotator or self.annotator
        rows = np.arange(offset, min(offset + BATCH_SIZE, self.total))
        current = self.labels.read(annotator)
        prelabels = self._prelabels(rows)
        items = []
        for row, pre in zip(rows, prelabels):
            rec_id = int(self.ids[row])
            entry = current.get(rec_id)
            items.append(
                BatchItem(
                    id=rec_id,
                    image=f"/img/{rec_id}" if self.image_path(rec_id) else None,
                    prelabel=pre,
                    label=label_from_name(entry["label"]) if entry else None,
                )
            )
        return Batch(offset=offset, items=items)

    def submit_labels(self, records: list[LabelRecord]) -> int:
        """Persist a submission; any unknown id rejects the whole batch
        before a single byte is written."""
        unknown = [r.id for r in records if r.id not in self.id_set]
        if unknown:
            raise UsageError(f"unknown record ids: {unknown[:5]}")
        persisted = 0
        by_annotator: dict[str, list[LabelRecord]] = {}
        for rec in records:
            by_annotator.setdefault(rec.annotator, []).append(rec)
        for annotator, recs in by_annotator.items():
            persisted += self.labels.upsert(annotator, recs)
        return persisted

    def progress(self, annotator: str | None = None) -> dict:
        annotator = annotator or self.annotator
        current = self.labels.read(annotator)
        labeled = {k: v for k, v in current.items() if k in self.id_set}
        per_class = Counter(v["label"] for v in labeled.values())
        return {
            "labeled": len(labeled),
            "total": self.total,
            "per_class": {
                label_name(lab): per_class.get(label_name(lab), 0)
                for lab in (
                    DomainLabel.NATURAL, DomainLabel.AMBIGUOUS, DomainLabel.RENDITION
                )
            },
        }


def merge_annotations(
    label_sets: dict[str, dict[int, dict]], reference: str
) -> tuple[dict[int, DomainLabel], float]:
    """Majority vote across >= 2 annotators over identical id sets; ids
    without a strict majority resolve to Ambiguous. The agreement rate is
    the fraction of ids where the merged label matches ``reference``."""
    if len(label_sets) < 2:
        raise UsageError("merging needs at least 2 annotators")
    if reference not in label_sets:
        raise UsageError(f"reference annotator {reference!r} not among label sets")
    id_sets = [frozenset(labels.keys()) for labels in label_sets.values()]
    if len(set(id_sets)) != 1:
        raise UsageError("annotator label files cover different id sets")

    n_annotators = len(label_sets)
    merged: dict[int, DomainLabel] = {}
    agree = 0
    ref_labels = label_sets[reference]
    for rec_id in sorted(id_sets[0]):
        votes = Counter(
            labels[rec_id]["label"] for labels in label_sets.values()
        )
        label, count = votes.most_common(1)[0]
        resolved = (
            label_from_name(label)
            if count * 2 > n_annotators
            else DomainLabel.AMBIGUOUS
        )
        merged[rec_id] = resolved
        if resolved == label_from_name(ref_labels[rec_id]["label"]):
            agree += 1
    rate = agree / len(merged) if merged else 0.0
    return merged, rate
