"""Command-line client for the domainaudit service.

Every subcommand marshals its flags into a pipeline request and sends it
to the service: a remote one when --server is given, otherwise an
in-process application instance. ``serve`` runs the annotation server.

Exit codes: 0 success, 1 usage/config error, 2 method-level failure.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click


class CliFailure(Exception):
    def __init__(self, kind: str, message: str):
        self.kind = kind
        self.message = message
        super().__init__(message)

    @property
    def exit_code(self) -> int:
        return 1 if self.kind == "usage" else 2


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise CliFailure("usage", f"config file not found: {path}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise CliFailure("usage", f"config file is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise CliFailure("usage", "config file must hold a JSON object")
    return cfg


def _merge(ctx: click.Context, command: str, params: dict,
           required: tuple[str, ...] = (), input_paths: tuple[str, ...] = ()) -> dict:
    """Fill unset flags from the config file (command-scoped keys win over
    global ones), then report every validation violation at once."""
    cfg = ctx.obj["config"]
    merged = {}
    for key, value in params.items():
        if value is None:
            value = cfg.get(f"{command}.{key}", cfg.get(key))
        merged[key] = value
    violations = []
    for key in required:
        if merged.get(key) is None:
            violations.append(f"missing required setting {key!r} (flag or config)")
    for key in input_paths:
        value = merged.get(key)
        if value is not None and not Path(str(value)).exists():
            violations.append(f"path for {key!r} does not exist: {value}")
    if violations:
        raise CliFailure("usage", "; ".join(violations))
    return merged


def _post(ctx: click.Context, path: str, payload: dict) -> dict:
    client = ctx.obj["client"]()
    try:
        response = client.post(path, json=payload)
    finally:
        client.close()
    if response.status_code >= 400:
        try:
            body = response.json()
        except ValueError:
            body = {}
        if isinstance(body, dict) and "kind" in body:
            raise CliFailure(body["kind"], body.get("message", response.text))
        detail = body.get("detail") if isinstance(body, dict) else None
        raise CliFailure("usage", str(detail or response.text))
    return response.json()


def _emit(result) -> None:
    click.echo(json.dumps(result, sort_keys=True))


def _probe_config(epochs, batch_size, learning_rate, weight_decay, seed) -> dict:
    return {
        "epochs": epochs,
        "batch_size": batch_size,
        "learning_rate": learning_rate,
        "weight_decay": weight_decay,
        "seed": seed,
    }


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _ratio_list(text: str) -> list[list[float]]:
    ratios = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        parts = tok.split(":")
        if len(parts) != 2:
            raise CliFailure("usage", f"ratio {tok!r} must look like REND:NAT, e.g. 1:3")
        ratios.append([float(parts[0]), float(parts[1])])
    return ratios


@click.group()
@click.option("--server", default=None, help="Base URL of a running service.")
@click.option("--config", "config_path", default=None, help="JSON config with flag defaults.")
@click.pass_context
def cli(ctx: click.Context, server: str | None, config_path: str | None):
    config = _load_config(config_path)
    server = server or config.get("server")

    def make_client():
        import httpx

        if server:
            return httpx.Client(base_url=server, timeout=600.0)
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            from fastapi.testclient import TestClient

        from .service import create_app

        return TestClient(create_app(), raise_server_exceptions=False)

    ctx.obj = {"config": config, "client": make_client, "server": server}


@cli.command()
@click.option("--tsv", default=None)
@click.option("--dimension", type=int, default=None)
@click.option("--out", default=None)
@click.option("--note", default="")
@click.pass_context
def ingest(ctx, tsv, dimension, out, note):
    """Import a TSV of labeled embeddings into a binary store."""
    p = _merge(ctx, "ingest", {"tsv": tsv, "dimension": dimension, "out": out},
               required=("tsv", "dimension", "out"), input_paths=("tsv",))
    _emit(_post(ctx, "/api/pipeline/ingest", {
        "tsv_path": str(p["tsv"]), "dimension": int(p["dimension"]),
        "out_store": str(p["out"]), "source_note": note,
    }))


@cli.command()
@click.option("--store", default=None)
@click.option("--n-train", type=int, default=None)
@click.option("--n-val", type=int, default=None)
@click.option("--n-test", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", default=None)
@click.pass_context
def split(ctx, store, n_train, n_val, n_test, seed, out):
    """Deterministically split a store into train/val/test id sets."""
    p = _merge(ctx, "split", {
        "store": store, "n_train": n_train, "n_val": n_val,
        "n_test": n_test, "seed": seed, "out": out,
    }, required=("store", "n_train", "n_val", "n_test", "seed", "out"),
        input_paths=("store",))
    _emit(_post(ctx, "/api/pipeline/split", {
        "store": str(p["store"]), "n_train": p["n_train"], "n_val": p["n_val"],
        "n_test": p["n_test"], "seed": p["seed"], "out": str(p["out"]),
    }))


@cli.command()
@click.option("--store", default=None)
@click.option("--variant", type=click.Choice(
    ["linear_readout", "centroid", "density_ratio", "knn_style"]), default=None)
@click.option("--out", default=None)
@click.option("--name", default="")
@click.option("--classes", default="natural,ambiguous,rendition")
@click.option("--reference-class", default=None)
@click.option("--target-style", default=None)
@click.option("--k", type=int, default=1)
@click.option("--ratio-threshold", type=float, default=0.2)
@click.option("--split", "split_file", default=None)
@click.option("--subset", type=click.Choice(["train", "val", "test", "all"]), default="train")
@click.option("--epochs", type=int, default=50)
@click.option("--batch-size", type=int, default=256)
@click.option("--learning-rate", type=float, default=0.1)
@click.option("--weight-decay", type=float, default=5e-4)
@click.option("--seed", type=int, default=None)
@click.pass_context
def train(ctx, store, variant, out, name, classes, reference_class, target_style,
          k, ratio_threshold, split_file, subset, epochs, batch_size,
          learning_rate, weight_decay, seed):
    """Train one of the four domain-classifier variants."""
    p = _merge(ctx, "train", {"store": store, "variant": variant, "out": out, "seed": seed},
               required=("store", "variant", "out"), input_paths=("store",))
    needs_sgd = p["variant"] in ("linear_readout", "density_ratio")
    if needs_sgd and p["seed"] is None:
        raise CliFailure("usage", "missing required setting 'seed' (flag or config)")
    payload = {
        "store": str(p["store"]), "variant": p["variant"], "out": str(p["out"]),
        "name": name, "classes": [c.strip() for c in classes.split(",") if c.strip()],
        "reference_class": reference_class, "target_style": target_style,
        "k": k, "ratio_threshold": ratio_threshold,
        "split": split_file, "subset": subset,
        "config": _probe_config(epochs, batch_size, learning_rate, weight_decay,
                                p["seed"]) if needs_sgd else None,
    }
    _emit(_post(ctx, "/api/pipeline/train", payload))


@cli.command()
@click.option("--model", default=None)
@click.option("--store", "--val", "store", default=None,
              help="Store holding the calibration records.")
@click.option("--class", "target_class", default=None)
@click.option("--precision", type=float, default=None)
@click.option("--out", default=None)
@click.option("--split", "split_file", default=None)
@click.option("--subset", type=click.Choice(["train", "val", "test", "all"]), default="val")
@click.option("--k-max", type=int, default=None)
@click.pass_context
def calibrate(ctx, model, store, target_class, precision, out, split_file, subset, k_max):
    """Choose the accept threshold for a target validation precision."""
    p = _merge(ctx, "calibrate", {
        "model": model, "store": store, "class": target_class,
        "precision": precision, "out": out,
    }, required=("model", "store", "class", "precision", "out"),
        input_paths=("model", "store"))
    _emit(_post(ctx, "/api/pipeline/calibrate", {
        "model": str(p["model"]), "store": str(p["store"]), "class": p["class"],
        "precision": float(p["precision"]), "out": str(p["out"]),
        "split": split_file, "subset": subset, "k_max": k_max,
    }))


@cli.command()
@click.option("--candidates", default=None, help="Comma-separated calibrated classifier files.")
@click.option("--class", "target_class", default=None)
@click.option("--out", default=None)
@click.option("--report-json", default=None)
@click.option("--report-csv", default=None)
@click.pass_context
def select(ctx, candidates, target_class, out, report_json, report_csv):
    """Pick the calibrated classifier with the highest validation recall."""
    p = _merge(ctx, "select", {"candidates": candidates, "class": target_class, "out": out},
               required=("candidates", "class", "out"))
    paths = [c.strip() for c in str(p["candidates"]).split(",") if c.strip()]
    _emit(_post(ctx, "/api/pipeline/select", {
        "candidates": paths, "class": p["class"], "out": str(p["out"]),
        "report_json": report_json, "report_csv": report_csv,
    }))


@cli.command()
@click.option("--store", default=None)
@click.option("--natural", default=None)
@click.option("--rendition", default=None)
@click.option("--out", "out_report", default=None)
@click.option("--out-ids-dir", default=None)
@click.option("--out-table", default=None)
@click.option("--dataset", default="")
@click.option("--workers", type=int, default=1)
@click.pass_context
def partition(ctx, store, natural, rendition, out_report, out_ids_dir, out_table,
              dataset, workers):
    """Partition a corpus into natural/ambiguous/rendition id lists."""
    p = _merge(ctx, "partition", {
        "store": store, "natural": natural, "rendition": rendition, "out": out_report,
    }, required=("store", "natural", "rendition", "out"),
        input_paths=("store", "natural", "rendition"))
    _emit(_post(ctx, "/api/pipeline/partition", {
        "store": str(p["store"]), "natural": str(p["natural"]),
        "rendition": str(p["rendition"]), "out_report": str(p["out"]),
        "out_ids_dir": out_ids_dir, "out_table": out_table,
        "dataset": dataset, "workers": workers,
    }))


@cli.command()
@click.option("--store", default=None)
@click.option("--natural-model", default=None)
@click.option("--rendition-model", default=None)
@click.option("--val-store", default=None)
@click.option("--levels", default=None, help="Comma-separated precision levels.")
@click.option("--out", default=None)
@click.option("--dataset", default="")
@click.pass_context
def sweep(ctx, store, natural_model, rendition_model, val_store, levels, out, dataset):
    """Composition reports at several precision levels."""
    p = _merge(ctx, "sweep", {
        "store": store, "natural_model": natural_model,
        "rendition_model": rendition_model, "val_store": val_store,
        "levels": levels, "out": out,
    }, required=("store", "natural_model", "rendition_model", "val_store", "levels", "out"),
        input_paths=("store", "natural_model", "rendition_model", "val_store"))
    _emit(_post(ctx, "/api/pipeline/sweep", {
        "store": str(p["store"]), "natural_model": str(p["natural_model"]),
        "rendition_model": str(p["rendition_model"]), "val_store": str(p["val_store"]),
        "levels": _float_list(str(p["levels"])), "out": str(p["out"]), "dataset": dataset,
    }))


@cli.command()
@click.option("--store", default=None)
@click.option("--natural", default=None)
@click.option("--rendition", default=None)
@click.option("--intended", type=click.Choice(["natural", "rendition"]), default=None)
@click.option("--out", default=None)
@click.option("--ids-out", default=None)
@click.pass_context
def clean(ctx, store, natural, rendition, intended, out, ids_out):
    """Filter a labeled test store down to its intended domain."""
    p = _merge(ctx, "clean", {
        "store": store, "natural": natural, "rendition": rendition,
        "intended": intended, "out": out,
    }, required=("store", "natural", "rendition", "intended", "out"),
        input_paths=("store", "natural", "rendition"))
    _emit(_post(ctx, "/api/pipeline/clean", {
        "store": str(p["store"]), "natural": str(p["natural"]),
        "rendition": str(p["rendition"]), "intended": p["intended"],
        "out": str(p["out"]), "ids_out": ids_out,
    }))


@cli.command()
@click.option("--natural-pool", default=None)
@click.option("--rendition-pool", default=None)
@click.option("--n-total", type=int, default=None)
@click.option("--n-rendition", type=int, default=None)
@click.option("--mode", type=click.Choice(["replace", "add"]), default="replace")
@click.option("--seed", type=int, default=None)
@click.option("--out-ids", default=None)
@click.option("--out-spec", default=None)
@click.pass_context
def mix(ctx, natural_pool, rendition_pool, n_total, n_rendition, mode, seed,
        out_ids, out_spec):
    """Build a mixed training-id list from natural and rendition pools."""
    p = _merge(ctx, "mix", {
        "natural_pool": natural_pool, "rendition_pool": rendition_pool,
        "n_total": n_total, "n_rendition": n_rendition,
        "seed": seed, "out_ids": out_ids,
    }, required=("natural_pool", "rendition_pool", "n_total", "n_rendition",
                 "seed", "out_ids"),
        input_paths=("natural_pool", "rendition_pool"))
    _emit(_post(ctx, "/api/pipeline/mix", {
        "natural_pool": str(p["natural_pool"]), "rendition_pool": str(p["rendition_pool"]),
        "n_total": p["n_total"], "n_rendition": p["n_rendition"], "mode": mode,
        "seed": p["seed"], "out_ids": str(p["out_ids"]), "out_spec": out_spec,
    }))


@cli.command(name="rel-acc")
@click.option("--table", default=None)
@click.option("--treated", default=None)
@click.option("--baseline", default=None)
@click.option("--testset", default=None)
@click.option("--group", default=None)
@click.option("--out", default=None)
@click.pass_context
def rel_acc(ctx, table, treated, baseline, testset, group, out):
    """Relative corrected OOD accuracy: treated over baseline."""
    p = _merge(ctx, "rel-acc", {"table": table, "treated": treated, "baseline": baseline},
               required=("table", "treated", "baseline"), input_paths=("table",))
    _emit(_post(ctx, "/api/pipeline/rel-acc", {
        "table": str(p["table"]), "treated": p["treated"], "baseline": p["baseline"],
        "testset": testset, "group": group, "out": out,
    }))


@cli.command()
@click.option("--table", default=None)
@click.option("--anchor", default=None)
@click.option("--ood-group", default=None)
@click.option("--ood-testset", default=None)
@click.option("--baseline-models", default=None, help="Comma-separated model ids.")
@click.option("--models", default=None)
@click.option("--clamp", is_flag=True, default=False)
@click.option("--out", default=None)
@click.option("--plot-csv", default=None)
@click.pass_context
def robustness(ctx, table, anchor, ood_group, ood_testset, baseline_models, models,
               clamp, out, plot_csv):
    """Fit the baseline line and report effective robustness offsets."""
    p = _merge(ctx, "robustness", {"table": table, "baseline_models": baseline_models},
               required=("table", "baseline_models"), input_paths=("table",))
    _emit(_post(ctx, "/api/pipeline/robustness", {
        "table": str(p["table"]), "anchor": anchor,
        "ood_group": ood_group, "ood_testset": ood_testset,
        "baseline_models": [m.strip() for m in str(p["baseline_models"]).split(",") if m.strip()],
        "models": [m.strip() for m in models.split(",")] if models else None,
        "clamp": clamp, "out": out, "plot_csv": plot_csv,
    }))


@cli.command()
@click.option("--out", default=None)
@click.option("--seed", type=int, default=None)
@click.option("--config", "gen_config", default=None,
              help="JSON file with generator fields; flags override it.")
@click.option("--dimension", type=int, default=None)
@click.option("--num-classes", type=int, default=None)
@click.option("--samples-per-cell", type=int, default=None)
@click.option("--separation", type=float, default=None)
@click.option("--offset-magnitude", type=float, default=None)
@click.option("--style-distortion", type=float, default=None)
@click.option("--natural-noise", type=float, default=None)
@click.option("--rendition-noise", type=float, default=None)
@click.option("--ambiguous-mix", type=float, default=None)
@click.pass_context
def synth(ctx, out, seed, gen_config, dimension, num_classes, samples_per_cell,
          separation, offset_magnitude, style_distortion, natural_noise,
          rendition_noise, ambiguous_mix):
    """Generate a synthetic two-domain corpus with ground-truth labels."""
    file_cfg = _load_config(gen_config)
    out = out if out is not None else file_cfg.get("out")
    seed = seed if seed is not None else file_cfg.get("seed")
    p = _merge(ctx, "synth", {"out": out, "seed": seed}, required=("out", "seed"))
    config = {"seed": p["seed"]}
    for key, flag in [
        ("dimension", dimension), ("num_classes", num_classes),
        ("samples_per_cell", samples_per_cell), ("separation", separation),
        ("offset_magnitude", offset_magnitude), ("style_distortion", style_distortion),
        ("natural_noise", natural_noise), ("rendition_noise", rendition_noise),
        ("ambiguous_mix", ambiguous_mix),
    ]:
        value = flag if flag is not None else file_cfg.get(key)
        if value is not None:
            config[key] = value
    _emit(_post(ctx, "/api/pipeline/synth", {"out_store": str(p["out"]), "config": config}))


@cli.command()
@click.option("--store", default=None)
@click.option("--kind", type=click.Choice(["ratio-sweep", "additive", "natural-vs-random"]),
              default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", default=None)
@click.option("--out-csv", default=None)
@click.option("--sweep", "sweep_file", default=None,
              help="JSON file with kind/sizes/ratios/budgets; flags override it.")
@click.option("--n-total", type=int, default=None)
@click.option("--ratios", default=None, help='Comma-separated REND:NAT ratios, e.g. "0:1,1:3,1:1,3:1,1:0".')
@click.option("--natural-budgets", default=None)
@click.option("--added", default=None)
@click.option("--sizes", default=None)
@click.option("--holdout-fraction", type=float, default=0.2)
@click.option("--epochs", type=int, default=50)
@click.option("--batch-size", type=int, default=256)
@click.option("--learning-rate", type=float, default=0.1)
@click.option("--weight-decay", type=float, default=5e-4)
@click.option("--probe-seed", type=int, default=None)
@click.pass_context
def experiment(ctx, store, kind, seed, out, out_csv, sweep_file, n_total, ratios,
               natural_budgets, added, sizes, holdout_fraction, epochs,
               batch_size, learning_rate, weight_decay, probe_seed):
    """Run a mixing/scaling experiment on a synthetic corpus."""
    sweep_cfg = _load_config(sweep_file)
    kind = kind or sweep_cfg.get("kind")
    seed = seed if seed is not None else sweep_cfg.get("seed")
    p = _merge(ctx, "experiment", {"store": store, "kind": kind, "seed": seed, "out": out},
               required=("store", "kind", "seed", "out"), input_paths=("store",))
    _emit(_post(ctx, "/api/pipeline/experiment", {
        "store": str(p["store"]), "kind": p["kind"], "seed": p["seed"],
        "out": str(p["out"]), "out_csv": out_csv,
        "holdout_fraction": holdout_fraction,
        "n_total": n_total if n_total is not None else sweep_cfg.get("n_total"),
        "ratios": _ratio_list(ratios) if ratios else sweep_cfg.get("ratios"),
        "natural_budgets": (
            _int_list(natural_budgets) if natural_budgets
            else sweep_cfg.get("natural_budgets")
        ),
        "added_rendition": _int_list(added) if added else sweep_cfg.get("added_rendition"),
        "sizes": _int_list(sizes) if sizes else sweep_cfg.get("sizes"),
        "probe": _probe_config(epochs, batch_size, learning_rate, weight_decay,
                               probe_seed if probe_seed is not None else p["seed"]),
    }))


@cli.command()
@click.option("--store", default=None)
@click.option("--labels-dir", default=None)
@click.option("--images-dir", default=None)
@click.option("--annotator", default="default")
@click.option("--natural", default=None, help="Calibrated natural classifier for pre-labels.")
@click.option("--rendition", default=None, help="Calibrated rendition classifier for pre-labels.")
@click.option("--ui-dir", default=None)
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=None)
@click.pass_context
def serve(ctx, store, labels_dir, images_dir, annotator, natural, rendition,
          ui_dir, host, port):
    """Run the annotation server until interrupted."""
    p = _merge(ctx, "serve", {
        "store": store, "labels_dir": labels_dir, "images_dir": images_dir,
        "ui_dir": ui_dir, "port": port,
    }, required=("store", "labels_dir", "port"), input_paths=("store", "images_dir"))

    import uvicorn

    from .annotation import AnnotationSession, LabelStore
    from .calibration import CalibratedClassifier
    from .service import create_app

    natural_clf = CalibratedClassifier.load(natural) if natural else None
    rendition_clf = CalibratedClassifier.load(rendition) if rendition else None
    session = AnnotationSession(
        store_path=str(p["store"]),
        label_store=LabelStore(str(p["labels_dir"])),
        images_dir=p["images_dir"],
        natural_clf=natural_clf,
        rendition_clf=rendition_clf,
        annotator=annotator,
    )
    app = create_app(annotation=session, ui_dir=p["ui_dir"])
    uvicorn.run(app, host=host, port=int(p["port"]))


def main(argv: list[str] | None = None) -> int:
    """Entry point with explicit exit-code mapping."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except CliFailure as exc:
        sys.stderr.write(f"error kind={exc.kind} message={json.dumps(exc.message)}\n")
        return exc.exit_code
    except click.UsageError as exc:
        sys.stderr.write(f"error kind=usage message={json.dumps(exc.format_message())}\n")
        return 1
    except click.ClickException as exc:
        sys.stderr.write(f"error kind=usage message={json.dumps(exc.format_message())}\n")
        return 1
    except click.exceptions.Abort:
        return 1


if __name__ == "__main__":
    sys.exit(main())
