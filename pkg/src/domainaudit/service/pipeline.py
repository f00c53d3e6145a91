"""Pipeline endpoints: one POST route per curation/audit operation.

Requests name server-local files; responses summarize the artifacts
written. Artifact outputs get a provenance sidecar recording the request.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from fastapi import APIRouter

from .. import calibration as cal
from .. import classifiers as clf
from .. import curation, metrics, partition, store, synth
from ..errors import UsageError
from ..labels import DomainLabel, label_from_name, label_name
from ..provenance import write_provenance
from . import schemas as s

router = APIRouter(prefix="/api/pipeline", tags=["pipeline"])


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {path}")
    return p


def _subset_ids(req_split: str | None, subset: str, store_path: str) -> np.ndarray | None:
    if req_split is None:
        return None
    split = store.SplitAssignment.load(_require_file(req_split, "split file"))
    if subset == "all":
        return np.concatenate([split.train_ids, split.val_ids, split.test_ids])
    return getattr(split, f"{subset}_ids")


def _labeled_arrays(store_path: str, split: str | None, subset: str):
    ids = _subset_ids(split, subset, store_path)
    if ids is None:
        return store.load_store_arrays(_require_file(store_path, "store"))
    return store.gather_by_ids(_require_file(store_path, "store"), ids)


@router.post("/ingest", response_model=s.ManifestResponse)
def ingest(req: s.IngestRequest) -> s.ManifestResponse:
    manifest = store.import_tsv(
        _require_file(req.tsv_path, "tsv file"), req.dimension, req.out_store,
        source_note=req.source_note,
    )
    write_provenance(req.out_store, "ingest", req.model_dump())
    return s.ManifestResponse(store=req.out_store, **manifest.to_dict())


@router.post("/split", response_model=s.SplitResponse)
def split(req: s.SplitRequest) -> s.SplitResponse:
    assignment = store.split_store(
        _require_file(req.store, "store"), req.n_train, req.n_val, req.n_test, req.seed
    )
    assignment.save(req.out)
    write_provenance(req.out, "split", req.model_dump())
    return s.SplitResponse(
        out=req.out, n_train=len(assignment.train_ids),
        n_val=len(assignment.val_ids), n_test=len(assignment.test_ids), seed=req.seed,
    )


@router.post("/train", response_model=s.TrainResponse)
def train(req: s.TrainRequest) -> s.TrainResponse:
    ids, domains, _, vectors = _labeled_arrays(req.store, req.split, req.subset)
    cfg = clf.TrainConfig(**req.config.model_dump()) if req.config else None
    name = req.name or req.variant

    if req.variant == "linear_readout":
        if cfg is None:
            raise UsageError("linear_readout training requires a config with a seed")
        classes = [label_from_name(c) for c in req.classes]
        model = clf.train_linear_readout(vectors.astype(np.float64), domains, classes, cfg)
        final_loss = model.epoch_losses[-1] if model.epoch_losses else None
    elif req.variant == "centroid":
        classes = [label_from_name(c) for c in req.classes]
        model = clf.fit_centroid_model(vectors, domains, classes)
        final_loss = None
    elif req.variant == "density_ratio":
        if cfg is None or req.reference_class is None:
            raise UsageError("density_ratio training requires a config and reference_class")
        model = clf.fit_density_ratio(
            vectors.astype(np.float64), domains,
            label_from_name(req.reference_class), cfg,
            ratio_threshold=req.ratio_threshold,
        )
        final_loss = model.readout.epoch_losses[-1] if model.readout.epoch_losses else None
    elif req.variant == "knn_style":
        if req.target_style is None:
            raise UsageError("knn_style requires target_style")
        known = domains != int(DomainLabel.UNKNOWN)
        model = clf.KnnStyleModel(
            database_ids=ids[known],
            database_vectors=vectors[known],
            database_labels=domains[known],
            k=req.k,
            target_style=label_from_name(req.target_style),
        )
        final_loss = None
    else:  # pragma: no cover - schema restricts variants
        raise UsageError(f"unknown variant {req.variant}")

    clf.save_model(model, req.out)
    write_provenance(req.out, "train", req.model_dump())
    return s.TrainResponse(
        out=req.out, name=name, variant=req.variant,
        dimension=model.dimension, n_train=int(len(domains)), final_loss=final_loss,
    )


def _calibration_row(c: cal.CalibratedClassifier) -> s.CalibrationRow:
    return s.CalibrationRow(
        model_id=c.model_id,
        target_class=label_name(c.target_class),
        threshold=c.threshold,
        precision=c.achieved_val_precision,
        recall=c.achieved_val_recall,
        support=c.support,
        kind=c.kind,
    )


@router.post("/calibrate", response_model=s.CalibrationRow)
def calibrate(req: s.CalibrateRequest) -> s.CalibrationRow:
    # thresholds are chosen on validation data only, never on a test split
    if req.split is not None and req.subset != "val":
        raise UsageError(
            f"calibration must use the validation split, not {req.subset!r}"
        )
    model = clf.load_model(_require_file(req.model, "model file"))
    _, domains, _, vectors = _labeled_arrays(req.store, req.split, req.subset)
    calibrated = cal.calibrate(
        model, vectors, domains, label_from_name(req.target_class),
        req.precision, model_id=Path(req.model).stem, k_max=req.k_max,
    )
    calibrated.save(req.out)
    write_provenance(req.out, "calibrate", req.model_dump(by_alias=True))
    return _calibration_row(calibrated)


@router.post("/select", response_model=s.CalibrationRow)
def select(req: s.SelectRequest) -> s.CalibrationRow:
    candidates = [
        cal.CalibratedClassifier.load(_require_file(p, "calibrated classifier"))
        for p in req.candidates
    ]
    best = cal.select_best(candidates, label_from_name(req.target_class))
    best.save(req.out)
    if req.report_json:
        Path(req.report_json).write_text(cal.report_json(candidates))
    if req.report_csv:
        Path(req.report_csv).write_text(cal.report_csv(candidates))
    write_provenance(req.out, "select", req.model_dump(by_alias=True))
    return _calibration_row(best)


@router.post("/partition", response_model=s.CompositionResponse)
def partition_endpoint(req: s.PartitionRequest) -> s.CompositionResponse:
    natural = cal.CalibratedClassifier.load(_require_file(req.natural, "classifier"))
    rendition = cal.CalibratedClassifier.load(_require_file(req.rendition, "classifier"))
    report, id_lists = partition.partition_store(
        _require_file(req.store, "store"), natural, rendition,
        dataset=req.dataset, workers=req.workers,
    )
    report.save(req.out_report)
    write_provenance(req.out_report, "partition", req.model_dump())
    if req.out_ids_dir:
        out_dir = Path(req.out_ids_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for lab, ids in id_lists.items():
            store.write_id_list(out_dir / f"{label_name(lab)}.ids", ids)
    if req.out_table:
        Path(req.out_table).write_text(partition.format_report_table([report]))
    return s.CompositionResponse(**report.to_dict())


@router.post("/sweep", response_model=list[s.SweepEntryResponse])
def sweep(req: s.SweepRequest) -> list[s.SweepEntryResponse]:
    natural_model = clf.load_model(_require_file(req.natural_model, "model file"))
    rendition_model = clf.load_model(_require_file(req.rendition_model, "model file"))
    _, val_domains, _, val_vectors = store.load_store_arrays(
        _require_file(req.val_store, "validation store")
    )
    entries = partition.composition_sweep(
        _require_file(req.store, "store"),
        partition.CalibrationFamily(
            natural_model, Path(req.natural_model).stem,
            label_from_name(req.natural_class), val_vectors, val_domains,
        ),
        partition.CalibrationFamily(
            rendition_model, Path(req.rendition_model).stem,
            label_from_name(req.rendition_class), val_vectors, val_domains,
        ),
        req.levels,
        dataset=req.dataset,
        workers=req.workers,
    )
    Path(req.out).write_text(
        json.dumps([e.to_dict() for e in entries], indent=2) + "\n"
    )
    write_provenance(req.out, "sweep", req.model_dump())
    return [
        s.SweepEntryResponse(
            level=e.level,
            report=s.CompositionResponse(**e.report.to_dict()) if e.report else None,
            skipped_reason=e.skipped_reason,
        )
        for e in entries
    ]


@router.post("/clean", response_model=s.CleanResponse)
def clean(req: s.CleanRequest) -> s.CleanResponse:
    natural = cal.CalibratedClassifier.load(_require_file(req.natural, "classifier"))
    rendition = cal.CalibratedClassifier.load(_require_file(req.rendition, "classifier"))
    result = curation.clean_testset(
        _require_file(req.store, "store"), natural, rendition,
        label_from_name(req.intended), workers=req.workers,
    )
    result.save(req.out)
    write_provenance(req.out, "clean", req.model_dump())
    if req.ids_out:
        store.write_id_list(req.ids_out, result.kept_ids)
    return s.CleanResponse(
        source=result.source,
        intended=label_name(result.intended),
        kept_count=result.kept_count,
        removed_as_ambiguous=result.removed_as_ambiguous,
        removed_as_opposite=result.removed_as_opposite,
        classes_remaining=result.classes_remaining,
        out=req.out,
    )


@router.post("/mix", response_model=s.MixResponse)
def mix(req: s.MixRequest) -> s.MixResponse:
    spec = curation.MixSpec(
        natural_pool=store.read_id_list(_require_file(req.natural_pool, "id list")),
        rendition_pool=store.read_id_list(_require_file(req.rendition_pool, "id list")),
        n_total=req.n_total,
        n_rendition=req.n_rendition,
        mode=curation.MixMode(req.mode),
        seed=req.seed,
    )
    ids = curation.build_mix(spec)
    store.write_id_list(req.out_ids, ids)
    write_provenance(req.out_ids, "mix", req.model_dump())
    if req.out_spec:
        Path(req.out_spec).write_text(json.dumps(spec.to_dict()) + "\n")
    return s.MixResponse(
        out_ids=req.out_ids,
        n_total_output=len(ids),
        n_natural=spec.n_natural,
        n_rendition=spec.n_rendition,
    )


@router.post("/rel-acc", response_model=s.RelAccResponse)
def rel_acc(req: s.RelAccRequest) -> s.RelAccResponse:
    table = metrics.AccuracyTable.load(_require_file(req.table, "accuracy table"))
    ratios: dict[str, float] = {}
    if req.testset:
        ratios[req.testset] = metrics.relative_corrected_ood_accuracy(
            table.get(req.treated, req.testset), table.get(req.baseline, req.testset)
        )
    if req.group:
        ratios[f"group:{req.group}"] = metrics.relative_corrected_ood_accuracy(
            metrics.group_average(table, req.treated, req.group),
            metrics.group_average(table, req.baseline, req.group),
        )
    if not ratios:
        for t in table.testsets:
            ratios[t] = metrics.relative_corrected_ood_accuracy(
                table.get(req.treated, t), table.get(req.baseline, t)
            )
    resp = s.RelAccResponse(treated=req.treated, baseline=req.baseline, ratios=ratios)
    if req.out:
        Path(req.out).write_text(resp.model_dump_json(indent=2) + "\n")
        write_provenance(req.out, "rel-acc", req.model_dump())
    return resp


def _ood_accuracy(table: metrics.AccuracyTable, model: str, req: s.RobustnessRequest) -> float:
    if req.ood_testset:
        return table.get(model, req.ood_testset)
    if req.ood_group:
        return metrics.group_average(table, model, req.ood_group)
    raise UsageError("robustness needs ood_group or ood_testset")


@router.post("/robustness", response_model=s.RobustnessResponse)
def robustness(req: s.RobustnessRequest) -> s.RobustnessResponse:
    table = metrics.AccuracyTable.load(_require_file(req.table, "accuracy table"))
    anchor = req.anchor or table.anchor
    if anchor is None:
        raise UsageError("no anchor column configured for robustness fit")
    baseline_anchor = [table.get(m, anchor) for m in req.baseline_models]
    baseline_ood = [_ood_accuracy(table, m, req) for m in req.baseline_models]
    fit = metrics.fit_baseline(
        baseline_anchor, baseline_ood, model_ids=req.baseline_models, clamp=req.clamp
    )
    points = []
    for model in req.models or table.models:
        anchor_acc = table.get(model, anchor)
        ood_acc = _ood_accuracy(table, model, req)
        er = metrics.effective_robustness(fit, anchor_acc, ood_acc, clamp=req.clamp)
        points.append(
            s.RobustnessPoint(
                model=model, anchor_acc=anchor_acc, ood_acc=ood_acc,
                logit_offset=er.logit_offset, raw_offset=er.raw_offset,
            )
        )
    resp = s.RobustnessResponse(
        slope=fit.slope, intercept=fit.intercept, residual_max=fit.residual_max,
        space=fit.space, baseline_models=fit.model_ids, points=points,
    )
    if req.out:
        Path(req.out).write_text(resp.model_dump_json(indent=2) + "\n")
        write_provenance(req.out, "robustness", req.model_dump())
    if req.plot_csv:
        group = req.ood_group or req.ood_testset or "ood"
        Path(req.plot_csv).write_text(
            metrics.plot_csv(
                [
                    {"x": p.anchor_acc, "y": p.ood_acc, "group": group, "model": p.model}
                    for p in points
                ]
            )
        )
    return resp


@router.post("/synth", response_model=s.ManifestResponse)
def synth_endpoint(req: s.SynthRequest) -> s.ManifestResponse:
    cfg = synth.SynthConfig(**req.config.model_dump())
    data = synth.gen_two_domain(cfg)
    manifest = data.write(req.out_store)
    write_provenance(req.out_store, "synth", req.model_dump())
    return s.ManifestResponse(store=req.out_store, **manifest.to_dict())


@router.post("/experiment", response_model=s.ExperimentResponse)
def experiment(req: s.ExperimentRequest) -> s.ExperimentResponse:
    data = synth.SynthData.read(_require_file(req.store, "store"))
    probe_cfg = clf.TrainConfig(**req.probe.model_dump())
    if req.kind == "ratio-sweep":
        if req.n_total is None or not req.ratios:
            raise UsageError("ratio-sweep requires n_total and ratios")
        results = synth.experiment_ratio_sweep(
            data, req.n_total, [tuple(r) for r in req.ratios], probe_cfg,
            req.seed, req.holdout_fraction,
        )
        csv_text = synth.results_csv(results)
    elif req.kind == "additive":
        if not req.natural_budgets or req.added_rendition is None:
            raise UsageError("additive requires natural_budgets and added_rendition")
        results = synth.experiment_additive(
            data, req.natural_budgets, req.added_rendition, probe_cfg,
            req.seed, req.holdout_fraction,
        )
        csv_text = synth.results_csv(results)
    else:
        if not req.sizes:
            raise UsageError("natural-vs-random requires sizes")
        results = synth.experiment_natural_vs_random(
            data, req.sizes, probe_cfg, req.seed, req.holdout_fraction
        )
        csv_text = None
    Path(req.out).write_text(synth.results_json(results))
    write_provenance(req.out, "experiment", req.model_dump())
    if req.out_csv:
        if csv_text is None:
            raise UsageError("natural-vs-random has no plot CSV form")
        Path(req.out_csv).write_text(csv_text)
    return s.ExperimentResponse(
        kind=req.kind, out=req.out, results=[r.to_dict() for r in results]
    )
