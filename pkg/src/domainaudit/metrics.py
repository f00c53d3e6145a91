"""Distribution-shift metrics over model x test-set accuracy tables:
relative corrected OOD accuracy, domain-group averages, and effective
robustness against a least-squares baseline fit in logit space."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateFit, UsageError

NATURAL_GROUP = "natural"
RENDITION_GROUP = "rendition"
ANCHOR = "anchor"

# Default group membership for the standard benchmark columns.
DEFAULT_GROUPS: dict[str, str] = {
    "IN-A": NATURAL_GROUP,
    "ObjectNet": NATURAL_GROUP,
    "IN-V2": NATURAL_GROUP,
    "IN-Val": NATURAL_GROUP,
    "DN-Real": NATURAL_GROUP,
    "DN-Painting": RENDITION_GROUP,
    "DN-Clipart": RENDITION_GROUP,
    "DN-Infograph": RENDITION_GROUP,
    "DN-Sketch": RENDITION_GROUP,
    "DN-Quickdraw": RENDITION_GROUP,
    "IN-R": RENDITION_GROUP,
    "IN-Sketch": RENDITION_GROUP,
}
DEFAULT_ANCHOR = "IN-Val"

CLAMP_EPS = 1e-6


def _parse_entry(text: str) -> float:
    text = text.strip()
    if text.endswith("%"):
        value = float(text[:-1]) / 100.0
    else:
        value = float(text)
    if not 0.0 <= value <= 1.0:
        raise UsageError(f"accuracy {text!r} outside [0, 1]")
    return value


@dataclass
class AccuracyTable:
    """Rows keyed by model id, columns by test-set id, entries in [0, 1]."""

    models: list[str]
    testsets: list[str]
    values: dict[str, dict[str, float]]
    groups: dict[str, str] = field(default_factory=dict)
    anchor: str | None = None

    def __post_init__(self):
        for model, row in self.values.items():
            for testset, value in row.items():
                if not 0.0 <= value <= 1.0:
                    raise UsageError(
                        f"accuracy {value} for ({model}, {testset}) outside [0, 1]"
                    )
        if not self.groups:
            self.groups = {
                t: DEFAULT_GROUPS[t] for t in self.testsets if t in DEFAULT_GROUPS
            }
        if self.anchor is None and DEFAULT_ANCHOR in self.testsets:
            self.anchor = DEFAULT_ANCHOR

    def get(self, model: str, testset: str) -> float:
        try:
            row = self.values[model]
        except KeyError:
            raise UsageError(f"unknown model {model!r}") from None
        try:
            return row[testset]
        except KeyError:
            raise UsageError(f"model {model!r} has no entry for {testset!r}") from None

    def group_columns(self, group: str) -> list[str]:
        return [t for t in self.testsets if self.groups.get(t) == group]

    @classmethod
    def from_csv(cls, text: str, groups: dict[str, str] | None = None,
                 anchor: str | None = None) -> "AccuracyTable":
        rows = list(csv.reader(io.StringIO(text)))
        rows = [r for r in rows if any(cell.strip() for cell in r)]
        if not rows:
            raise UsageError("empty accuracy table")
        testsets = [c.strip() for c in rows[0][1:]]
        models, values = [], {}
        for r in rows[1:]:
            model = r[0].strip()
            if len(r) - 1 != len(testsets):
                raise UsageError(f"row {model!r} has {len(r) - 1} entries, "
                                 f"expected {len(testsets)}")
            models.append(model)
            values[model] = {t: _parse_entry(v) for t, v in zip(testsets, r[1:])}
        return cls(models, testsets, values, groups=groups or {}, anchor=anchor)

    @classmethod
    def from_json(cls, text: str) -> "AccuracyTable":
        d = json.loads(text)
        return cls(
            models=d["models"],
            testsets=d["testsets"],
            values=d["values"],
            groups=d.get("groups", {}),
            anchor=d.get("anchor"),
        )

    @classmethod
    def load(cls, path: Path | str, groups: dict[str, str] | None = None,
             anchor: str | None = None) -> "AccuracyTable":
        path = Path(path)
        text = path.read_text()
        if path.suffix.lower() == ".json":
            table = cls.from_json(text)
            if groups:
                table.groups = groups
            if anchor:
                table.anchor = anchor
            return table
        return cls.from_csv(text, groups=groups, anchor=anchor)

    def to_json(self) -> str:
        return json.dumps(
            {
                "models": self.models,
                "testsets": self.testsets,
                "values": self.values,
                "groups": self.groups,
                "anchor": self.anchor,
            },
            indent=2,
        ) + "\n"


def relative_corrected_ood_accuracy(acc_treated: float, acc_baseline: float) -> float:
    """Accuracy ratio of the treated model over the baseline model."""
    if acc_baseline <= 0:
        raise UsageError("baseline accuracy must be positive")
    return acc_treated / acc_baseline


def group_average(table: AccuracyTable, model: str, group: str) -> float:
    cols = table.group_columns(group)
    if not cols:
        raise UsageError(f"group {group!r} has no columns in this table")
    return float(np.mean([table.get(model, t) for t in cols]))


def logit(a: float, clamp: bool = False, name: str = "") -> float:
    if clamp:
        a = min(max(a, CLAMP_EPS), 1.0 - CLAMP_EPS)
    if not 0.0 < a < 1.0:
        where = f" for {name}" if name else ""
        raise UsageError(f"accuracy {a}{where} outside (0, 1): logit undefined")
    return math.log(a / (1.0 - a))


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@dataclass
class RobustnessFit:
    """Least-squares line in (logit(anchor), logit(ood)) space."""

    slope: float
    intercept: float
    model_ids: list[str]
    residual_max: float
    space: str = "logit"

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "model_ids": self.model_ids,
            "residual_max": self.residual_max,
            "space": self.space,
        }


def fit_baseline(
    anchor_accs: list[float],
    ood_accs: list[float],
    model_ids: list[str] | None = None,
    clamp: bool = False,
) -> RobustnessFit:
    """Fit the baseline family line by least squares in logit space."""
    if len(anchor_accs) != len(ood_accs):
        raise UsageError("anchor and ood accuracy lists differ in length")
    if len(anchor_accs) < 2:
        raise UsageError("need at least 2 points to fit a baseline")
    ids = model_ids or [f"point-{i}" for i in range(len(anchor_accs))]
    xs = np.array([logit(a, clamp, name) for a, name in zip(anchor_accs, ids)])
    ys = np.array([logit(a, clamp, name) for a, name in zip(ood_accs, ids)])
    if np.ptp(xs) == 0.0:
        raise DegenerateFit("all anchor accuracies identical: line undetermined")
    design = np.stack([xs, np.ones_like(xs)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(design, ys, rcond=None)
    residuals = ys - (slope * xs + intercept)
    return RobustnessFit(
        slope=float(slope),
        intercept=float(intercept),
        model_ids=list(ids),
        residual_max=float(np.max(np.abs(residuals))),
    )


@dataclass
class EffectiveRobustness:
    logit_offset: float
    raw_offset: float

    def to_dict(self) -> dict:
        return {"logit_offset": self.logit_offset, "raw_offset": self.raw_offset}


def effective_robustness(
    fit: RobustnessFit, anchor_acc: float, ood_acc: float, clamp: bool = False
) -> EffectiveRobustness:
    """Vertical offset above the baseline line, in logit space and
    back-transformed to raw accuracy."""
    x = logit(anchor_acc, clamp)
    y = logit(ood_acc, clamp)
    predicted = fit.slope * x + fit.intercept
    return EffectiveRobustness(
        logit_offset=y - predicted,
        raw_offset=ood_acc - sigmoid(predicted),
    )


def plot_csv(points: list[dict]) -> str:
    """Plot-ready CSV with columns x, y, group, model."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["x", "y", "group", "model"])
    writer.writeheader()
    for p in points:
        writer.writerow(p)
    return buf.getvalue()
