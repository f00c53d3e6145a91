"""Pydantic request/response models for the pipeline and annotation APIs.

Pipeline requests reference server-local paths; every artifact-producing
endpoint writes a provenance sidecar next to its output.
"""
from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field

DomainName = Literal["natural", "ambiguous", "rendition", "unknown"]


class TrainConfigModel(BaseModel):
    epochs: int = 50
    batch_size: int = 256
    learning_rate: float = 0.1
    weight_decay: float = 5e-4
    lr_step_epochs: int = 20
    lr_step_factor: float = 0.1
    seed: int


class IngestRequest(BaseModel):
    tsv_path: str
    dimension: int
    out_store: str
    source_note: str = ""


class ManifestResponse(BaseModel):
    store: str
    dimension: int
    count: int
    label_summary: dict[str, int]
    source_note: str = ""


class SplitRequest(BaseModel):
    store: str
    n_train: int
    n_val: int
    n_test: int
    seed: int
    out: str


class SplitResponse(BaseModel):
    out: str
    n_train: int
    n_val: int
    n_test: int
    seed: int


class TrainRequest(BaseModel):
    store: str
    variant: Literal["linear_readout", "centroid", "density_ratio", "knn_style"]
    out: str
    name: str = ""
    config: Optional[TrainConfigModel] = None
    classes: list[DomainName] = Field(
        default=["natural", "ambiguous", "rendition"],
        description="label classes for linear_readout / centroid",
    )
    reference_class: Optional[DomainName] = None  # density_ratio
    ratio_threshold: float = 0.2
    target_style: Optional[DomainName] = None  # knn_style
    k: int = 1
    split: Optional[str] = None
    subset: Literal["train", "val", "test", "all"] = "train"


class TrainResponse(BaseModel):
    out: str
    name: str
    variant: str
    dimension: int
    n_train: int
    final_loss: Optional[float] = None


class CalibrateRequest(BaseModel):
    model: str
    store: str
    target_class: DomainName = Field(alias="class")
    precision: float
    out: str
    split: Optional[str] = None
    subset: Literal["train", "val", "test", "all"] = "val"
    k_max: Optional[int] = None

    model_config = {"populate_by_name": True, "protected_namespaces": ()}


class CalibrationRow(BaseModel):
    model_id: str
    target_class: DomainName
    threshold: float
    precision: float
    recall: float
    support: int
    kind: str = "score"


class SelectRequest(BaseModel):
    candidates: list[str]
    target_class: DomainName = Field(alias="class")
    out: str
    report_json: Optional[str] = None
    report_csv: Optional[str] = None

    model_config = {"populate_by_name": True}


class PartitionRequest(BaseModel):
    store: str
    natural: str
    rendition: str
    out_report: str
    out_ids_dir: Optional[str] = None
    out_table: Optional[str] = None
    dataset: str = ""
    workers: int = 1


class CompositionResponse(BaseModel):
    dataset: str
    corpus_size: int
    counts: dict[str, int]
    fractions: dict[str, float]
    natural_threshold: float
    rendition_threshold: float
    natural_model_id: str
    rendition_model_id: str
    precision_level: Optional[float] = None
    seeds: dict[str, Optional[int]] = {}


class SweepRequest(BaseModel):
    store: str
    natural_model: str
    rendition_model: str
    val_store: str
    levels: list[float]
    out: str
    dataset: str = ""
    natural_class: DomainName = "natural"
    rendition_class: DomainName = "rendition"
    workers: int = 1


class SweepEntryResponse(BaseModel):
    level: float
    report: Optional[CompositionResponse] = None
    skipped_reason: Optional[str] = None


class CleanRequest(BaseModel):
    store: str
    natural: str
    rendition: str
    intended: Literal["natural", "rendition"]
    out: str
    ids_out: Optional[str] = None
    workers: int = 1


class CleanResponse(BaseModel):
    source: str
    intended: DomainName
    kept_count: int
    removed_as_ambiguous: int
    removed_as_opposite: int
    classes_remaining: int
    out: str


class MixRequest(BaseModel):
    natural_pool: str
    rendition_pool: str
    n_total: int
    n_rendition: int
    mode: Literal["replace", "add"] = "replace"
    seed: int
    out_ids: str
    out_spec: Optional[str] = None


class MixResponse(BaseModel):
    out_ids: str
    n_total_output: int
    n_natural: int
    n_rendition: int


class RelAccRequest(BaseModel):
    table: str
    treated: str
    baseline: str
    testset: Optional[str] = None
    group: Optional[str] = None
    out: Optional[str] = None


class RelAccResponse(BaseModel):
    treated: str
    baseline: str
    ratios: dict[str, float]


class RobustnessRequest(BaseModel):
    table: str
    anchor: Optional[str] = None
    ood_group: Optional[str] = None
    ood_testset: Optional[str] = None
    baseline_models: list[str]
    models: Optional[list[str]] = None
    clamp: bool = False
    out: Optional[str] = None
    plot_csv: Optional[str] = None


class RobustnessPoint(BaseModel):
    model: str
    anchor_acc: float
    ood_acc: float
    logit_offset: float
    raw_offset: float


class RobustnessResponse(BaseModel):
    slope: float
    intercept: float
    residual_max: float
    space: str
    baseline_models: list[str]
    points: list[RobustnessPoint]


class SynthConfigModel(BaseModel):
    dimension: int = 64
    num_classes: int = 6
    samples_per_cell: int = 300
    separation: float = 1.0
    offset_magnitude: float = 1.0
    style_distortion: float = 0.99
    natural_noise: float = 0.10
    rendition_noise: float = 0.10
    ambiguous_mix: float = 0.5
    seed: int


class SynthRequest(BaseModel):
    config: SynthConfigModel
    out_store: str


class ExperimentRequest(BaseModel):
    store: str
    kind: Literal["ratio-sweep", "additive", "natural-vs-random"]
    probe: TrainConfigModel
    seed: int
    out: str
    out_csv: Optional[str] = None
    holdout_fraction: float = 0.2
    # ratio-sweep
    n_total: Optional[int] = None
    ratios: Optional[list[tuple[float, float]]] = None
    # additive
    natural_budgets: Optional[list[int]] = None
    added_rendition: Optional[list[int]] = None
    # natural-vs-random
    sizes: Optional[list[int]] = None


class ExperimentResponse(BaseModel):
    kind: str
    out: str
    results: list[dict]


# --- annotation API -------------------------------------------------------

class LabelRecordModel(BaseModel):
    id: int
    label: DomainName
    annotator: str
    timestamp: float


class BatchItemModel(BaseModel):
    id: int
    image: Optional[str] = None
    prelabel: DomainName
    label: Optional[DomainName] = None


class BatchModel(BaseModel):
    offset: int
    items: list[BatchItemModel]


class SubmitResponse(BaseModel):
    persisted: int


class ProgressResponse(BaseModel):
    labeled: int
    total: int
    per_class: dict[str, int]


class ErrorBody(BaseModel):
    kind: Literal["usage", "method"]
    message: str
