"""Streams a corpus through the calibrated natural and rendition
classifiers, applies the agreement rule, and emits composition reports.

Agreement rule: a sample is Natural only when exactly the natural
classifier accepts it, Rendition only when exactly the rendition
classifier accepts it, and Ambiguous whenever they disagree about
exclusivity (both accept) or neither fires.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibration import CalibratedClassifier, calibrate
from .errors import PrecisionUnreachable, UsageError
from .labels import DomainLabel, label_name
from .store import DEFAULT_CHUNK_RECORDS, store_header, stream_chunks

_PARTITION_LABELS = (DomainLabel.NATURAL, DomainLabel.AMBIGUOUS, DomainLabel.RENDITION)


def assign_domain(accept_natural: bool, accept_rendition: bool) -> DomainLabel:
    if accept_natural and not accept_rendition:
        return DomainLabel.NATURAL
    if accept_rendition and not accept_natural:
        return DomainLabel.RENDITION
    return DomainLabel.AMBIGUOUS


@dataclass
class CompositionReport:
    """Counts and fractions per resolved domain plus full provenance
    (classifier ids, thresholds, and training seeds where known)."""

    dataset: str
    corpus_size: int
    counts: dict[str, int]
    fractions: dict[str, float]
    natural_threshold: float
    rendition_threshold: float
    natural_model_id: str
    rendition_model_id: str
    precision_level: float | None = None
    seeds: dict[str, int | None] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "corpus_size": self.corpus_size,
            "counts": self.counts,
            "fractions": self.fractions,
            "natural_threshold": self.natural_threshold,
            "rendition_threshold": self.rendition_threshold,
            "natural_model_id": self.natural_model_id,
            "rendition_model_id": self.rendition_model_id,
            "precision_level": self.precision_level,
            "seeds": self.seeds,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CompositionReport":
        return cls(**d)

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def _model_seed(model) -> int | None:
    config = getattr(model, "config", None)
    if config is None:
        readout = getattr(model, "readout", None)
        config = getattr(readout, "config", None)
    return config.seed if config is not None else None


def _resolve_chunk(accept_nat: np.ndarray, accept_rend: np.ndarray) -> np.ndarray:
    resolved = np.full(len(accept_nat), int(DomainLabel.AMBIGUOUS), dtype=np.int8)
    resolved[accept_nat & ~accept_rend] = int(DomainLabel.NATURAL)
    resolved[accept_rend & ~accept_nat] = int(DomainLabel.RENDITION)
    return resolved


def partition_store(
    store_path: Path | str,
    natural_clf: CalibratedClassifier,
    rendition_clf: CalibratedClassifier,
    dataset: str = "",
    workers: int = 1,
    chunk_records: int = DEFAULT_CHUNK_RECORDS,
) -> tuple[CompositionReport, dict[DomainLabel, np.ndarray]]:
    """Single streaming pass assigning every record to exactly one domain.

    Chunks may be scored in parallel; the ordered merge keeps output
    identical for any worker count.
    """
    dimension, count = store_header(store_path)
    for clf in (natural_clf, rendition_clf):
        if clf.dimension != dimension:
            raise UsageError(
                f"classifier {clf.model_id} dimension {clf.dimension} "
                f"!= store dimension {dimension}"
            )

    def score_chunk(chunk):
        ids, _, _, vecs = chunk
        resolved = _resolve_chunk(
            natural_clf.decide_batch(vecs), rendition_clf.decide_batch(vecs)
        )
        return ids, resolved

    chunks = stream_chunks(store_path, chunk_records)
    if workers <= 1:
        scored = map(score_chunk, chunks)
    else:
        pool = ThreadPoolExecutor(max_workers=workers)
        scored = pool.map(score_chunk, chunks)

    id_parts: dict[DomainLabel, list[np.ndarray]] = {lab: [] for lab in _PARTITION_LABELS}
    for ids, resolved in scored:
        for lab in _PARTITION_LABELS:
            id_parts[lab].append(ids[resolved == int(lab)])
    if workers > 1:
        pool.shutdown()

    id_lists = {
        lab: (np.concatenate(parts) if parts else np.empty(0, np.uint64))
        for lab, parts in id_parts.items()
    }
    counts = {label_name(lab): int(len(id_lists[lab])) for lab in _PARTITION_LABELS}
    fractions = {
        name: (c / count if count else 0.0) for name, c in counts.items()
    }
    report = CompositionReport(
        dataset=dataset or Path(store_path).name,
        corpus_size=count,
        counts=counts,
        fractions=fractions,
        natural_threshold=natural_clf.threshold,
        rendition_threshold=rendition_clf.threshold,
        natural_model_id=natural_clf.model_id,
        rendition_model_id=rendition_clf.model_id,
        seeds={
            "natural": _model_seed(natural_clf.model),
            "rendition": _model_seed(rendition_clf.model),
        },
    )
    return report, id_lists


@dataclass
class SweepEntry:
    level: float
    report: CompositionReport | None = None
    skipped_reason: str | None = None

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "report": self.report.to_dict() if self.report else None,
            "skipped_reason": self.skipped_reason,
        }


@dataclass
class CalibrationFamily:
    """A model plus the validation data its thresholds are derived from."""

    model: object
    model_id: str
    target_class: DomainLabel
    x_val: np.ndarray
    domains_val: np.ndarray


def composition_sweep(
    store_path: Path | str,
    natural_family: CalibrationFamily,
    rendition_family: CalibrationFamily,
    precision_levels: list[float],
    dataset: str = "",
    workers: int = 1,
) -> list[SweepEntry]:
    """One composition report per precision level, with thresholds
    re-derived per level; unreachable levels are skipped with a reason."""
    entries = []
    for level in precision_levels:
        if not 0 < level <= 1:
            raise UsageError(f"precision level {level} outside (0, 1]")
        try:
            nat = calibrate(
                natural_family.model, natural_family.x_val, natural_family.domains_val,
                natural_family.target_class, level, natural_family.model_id,
            )
            rend = calibrate(
                rendition_family.model, rendition_family.x_val, rendition_family.domains_val,
                rendition_family.target_class, level, rendition_family.model_id,
            )
        except PrecisionUnreachable as exc:
            entries.append(SweepEntry(level=level, skipped_reason=str(exc)))
            continue
        report, _ = partition_store(store_path, nat, rend, dataset=dataset, workers=workers)
        report.precision_level = level
        entries.append(SweepEntry(level=level, report=report))
    return entries


def format_report_table(reports: list[CompositionReport]) -> str:
    """Aligned-column text table: dataset, size, thresholds, percentages."""
    header = (
        "dataset", "#samples", "nat-thr", "rend-thr",
        "natural%", "ambiguous%", "rendition%",
    )
    rows = [header]
    for r in reports:
        rows.append((
            r.dataset,
            str(r.corpus_size),
            f"{r.natural_threshold:.4g}",
            f"{r.rendition_threshold:.4g}",
            f"{100 * r.fractions['natural']:.2f}",
            f"{100 * r.fractions['ambiguous']:.2f}",
            f"{100 * r.fractions['rendition']:.2f}",
        ))
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = [
        "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
        for row in rows
    ]
    return "\n".join(lines) + "\n"
