"""Precision-recall curves, threshold selection at a target precision, and
best-classifier selection by recall.

Decision rule everywhere: a sample is accepted when its score is >= the
threshold, so lower thresholds accept more and the smallest threshold that
still meets the precision target maximizes recall. For the kNN variant the
"threshold" is the neighbor count k, searched over [1, k_max] and resolved
to the largest k that meets the target (acceptance grows with k).
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classifiers import (
    CentroidModel,
    DensityRatioModel,
    KnnStyleModel,
    LinearReadout,
    model_from_dict,
    model_to_dict,
)
from .errors import PrecisionUnreachable, UsageError
from .labels import DomainLabel, label_from_name, label_name


@dataclass
class PrPoint:
    threshold: float
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int


def pr_curve(scores, is_positive) -> list[PrPoint]:
    """Exact precision/recall at every distinct score value, sorted by
    descending threshold. Predictions at threshold t are ``score >= t``."""
    scores = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(is_positive, dtype=bool)
    if scores.shape != pos.shape or scores.ndim != 1:
        raise UsageError("scores and is_positive must be equal-length 1-D sequences")
    n_pos = int(pos.sum())
    if n_pos == 0:
        raise UsageError("no positive samples: recall undefined")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_pos = pos[order]
    cum_tp = np.cumsum(sorted_pos)
    cum_fp = np.cumsum(~sorted_pos)

    points = []
    # last index of each distinct score in the descending order
    for i in range(len(sorted_scores)):
        if i + 1 < len(sorted_scores) and sorted_scores[i + 1] == sorted_scores[i]:
            continue
        tp = int(cum_tp[i])
        fp = int(cum_fp[i])
        fn = n_pos - tp
        points.append(
            PrPoint(
                threshold=float(sorted_scores[i]),
                precision=tp / (tp + fp),
                recall=tp / n_pos,
                tp=tp,
                fp=fp,
                fn=fn,
            )
        )
    return points


def threshold_for_precision(curve: list[PrPoint], target: float) -> PrPoint:
    """Smallest threshold whose precision meets the target (max recall
    subject to the precision constraint)."""
    if not 0 < target <= 1:
        raise UsageError("target precision must be in (0, 1]")
    if not curve:
        raise UsageError("empty precision-recall curve")
    best = None
    for pt in curve:  # descending thresholds: the last qualifying one wins
        if pt.precision >= target:
            best = pt
    if best is None:
        raise PrecisionUnreachable(target, max(pt.precision for pt in curve))
    return best


@dataclass
class CalibratedClassifier:
    """A base model frozen together with its accept threshold for one class.

    ``kind`` is "score" (threshold on the model's confidence score) or
    "knn_k" (threshold is the neighbor count of a KnnStyleModel).
    """

    model: object
    model_id: str
    target_class: DomainLabel
    threshold: float
    achieved_val_precision: float
    achieved_val_recall: float
    kind: str = "score"
    support: int = 0  # accepted count on the calibration set

    @property
    def dimension(self) -> int:
        return self.model.dimension

    def score_batch(self, x: np.ndarray) -> np.ndarray:
        return classifier_scores(self.model, x, self.target_class)

    def decide_batch(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "knn_k":
            return self.model.decide(x, k=int(self.threshold))
        return self.score_batch(x) >= self.threshold

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "class": label_name(self.target_class),
            "threshold": self.threshold,
            "precision": self.achieved_val_precision,
            "recall": self.achieved_val_recall,
            "support": self.support,
            "kind": self.kind,
            "model": model_to_dict(self.model),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibratedClassifier":
        return cls(
            model=model_from_dict(d["model"]),
            model_id=d["model_id"],
            target_class=label_from_name(d["class"]),
            threshold=d["threshold"],
            achieved_val_precision=d["precision"],
            achieved_val_recall=d["recall"],
            kind=d.get("kind", "score"),
            support=d.get("support", 0),
        )

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path: Path | str) -> "CalibratedClassifier":
        return cls.from_dict(json.loads(Path(path).read_text()))


def classifier_scores(model, x: np.ndarray, target_class: DomainLabel) -> np.ndarray:
    """Confidence score used for thresholding, per model family."""
    x = np.atleast_2d(np.asarray(x))
    if isinstance(model, (LinearReadout, CentroidModel)):
        if int(target_class) not in model.class_order:
            raise UsageError(
                f"class {label_name(target_class)} not in model classes {model.class_order}"
            )
        col = model.class_order.index(int(target_class))
        return model.scores(x)[:, col]
    if isinstance(model, DensityRatioModel):
        if model.reference_class != target_class:
            raise UsageError(
                f"density-ratio model detects {label_name(model.reference_class)}, "
                f"not {label_name(target_class)}"
            )
        return model.ratios(x)
    raise UsageError(f"no thresholdable score for {type(model).__name__}")


def calibrate(
    model,
    x_val: np.ndarray,
    domains_val: np.ndarray,
    target_class: DomainLabel,
    target_precision: float,
    model_id: str,
    k_max: int | None = None,
) -> CalibratedClassifier:
    """Choose the accept threshold reaching ``target_precision`` on the
    validation set while maximizing recall."""
    domains_val = np.asarray(domains_val)
    known = domains_val != int(DomainLabel.UNKNOWN)
    x_val = np.atleast_2d(np.asarray(x_val))[known]
    is_pos = (domains_val[known] == int(target_class))
    if not is_pos.any():
        raise UsageError("validation set has no positives for the target class")

    if isinstance(model, KnnStyleModel):
        return _calibrate_knn(model, x_val, is_pos, target_class,
                              target_precision, model_id, k_max)

    scores = classifier_scores(model, x_val, target_class)
    pt = threshold_for_precision(pr_curve(scores, is_pos), target_precision)
    return CalibratedClassifier(
        model=model,
        model_id=model_id,
        target_class=target_class,
        threshold=pt.threshold,
        achieved_val_precision=pt.precision,
        achieved_val_recall=pt.recall,
        support=pt.tp + pt.fp,
    )


def _calibrate_knn(model, x_val, is_pos, target_class, target_precision,
                   model_id, k_max) -> CalibratedClassifier:
    if model.target_style != target_class:
        raise UsageError("knn model target style differs from calibration class")
    k_max = min(k_max or model.k, len(model.database_ids))
    order = model.neighbor_order(x_val)
    hits = model.database_labels[order] == int(target_class)
    # accepted(k) = any hit within the first k neighbors; grows with k
    any_hit = np.cumsum(hits[:, :k_max], axis=1) > 0
    n_pos = int(is_pos.sum())
    best = None
    achieved = []
    for k in range(1, k_max + 1):
        accepted = any_hit[:, k - 1]
        tp = int((accepted & is_pos).sum())
        fp = int((accepted & ~is_pos).sum())
        precision = tp / (tp + fp) if tp + fp else 0.0
        achieved.append(precision)
        if tp + fp and precision >= target_precision:
            best = (k, precision, tp / n_pos, tp + fp)
    if best is None:
        raise PrecisionUnreachable(target_precision, max(achieved, default=0.0))
    k, precision, recall, support = best
    return CalibratedClassifier(
        model=model,
        model_id=model_id,
        target_class=target_class,
        threshold=float(k),
        achieved_val_precision=precision,
        achieved_val_recall=recall,
        kind="knn_k",
        support=support,
    )


@dataclass
class EvalResult:
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int
    accepted: int
    zero_support: bool

    def to_dict(self) -> dict:
        return self.__dict__.copy()


def evaluate(clf: CalibratedClassifier, x: np.ndarray, domains: np.ndarray) -> EvalResult:
    """Precision/recall of the frozen classifier on a labeled set.

    Unknown-labeled records are excluded. Precision with zero accepted
    samples is reported as 1.0 with ``zero_support`` set.
    """
    domains = np.asarray(domains)
    known = domains != int(DomainLabel.UNKNOWN)
    if not known.any():
        raise UsageError("labeled set is empty after excluding unknown labels")
    x = np.atleast_2d(np.asarray(x))[known]
    is_pos = domains[known] == int(clf.target_class)
    accepted = clf.decide_batch(x)
    tp = int((accepted & is_pos).sum())
    fp = int((accepted & ~is_pos).sum())
    fn = int((~accepted & is_pos).sum())
    n_accepted = tp + fp
    zero_support = n_accepted == 0
    precision = 1.0 if zero_support else tp / n_accepted
    recall = tp / (tp + fn) if (tp + fn) else 0.0
    return EvalResult(precision, recall, tp, fp, fn, n_accepted, zero_support)


def select_best(candidates: list[CalibratedClassifier],
                target_class: DomainLabel) -> CalibratedClassifier:
    """Highest validation recall wins; ties go to registration order."""
    if not candidates:
        raise UsageError("no candidate classifiers")
    for c in candidates:
        if c.target_class != target_class:
            raise UsageError(
                f"candidate {c.model_id} calibrated for {label_name(c.target_class)}, "
                f"expected {label_name(target_class)}"
            )
    best = candidates[0]
    for c in candidates[1:]:
        if c.achieved_val_recall > best.achieved_val_recall:
            best = c
    return best


def report_rows(classifiers: list[CalibratedClassifier]) -> list[dict]:
    return [
        {
            "model_id": c.model_id,
            "class": label_name(c.target_class),
            "threshold": c.threshold,
            "precision": c.achieved_val_precision,
            "recall": c.achieved_val_recall,
            "support": c.support,
        }
        for c in classifiers
    ]


def report_json(classifiers: list[CalibratedClassifier]) -> str:
    return json.dumps(report_rows(classifiers), indent=2) + "\n"


def report_csv(classifiers: list[CalibratedClassifier]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(
        buf, fieldnames=["model_id", "class", "threshold", "precision", "recall", "support"]
    )
    writer.writeheader()
    for row in report_rows(classifiers):
        writer.writerow(row)
    return buf.getvalue()
