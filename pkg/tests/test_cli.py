import json

import numpy as np
import pytest

from domainaudit.cli import main
from domainaudit.store import read_id_list


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def last_json(out):
    return json.loads(out.strip().splitlines()[-1])


def test_unknown_subcommand_exits_1(capsys):
    code, _, err = run(capsys, "frobnicate")
    assert code == 1
    assert err.startswith("error kind=usage")


def test_missing_required_setting_exits_1(capsys):
    code, _, err = run(capsys, "split", "--store", "whatever.embs")
    assert code == 1
    assert "missing required setting" in err


def test_nonexistent_input_path_exits_1(capsys, tmp_path):
    code, _, err = run(
        capsys, "split", "--store", str(tmp_path / "missing.embs"),
        "--n-train", "1", "--n-val", "1", "--n-test", "1",
        "--seed", "0", "--out", str(tmp_path / "s.json"),
    )
    assert code == 1
    assert "does not exist" in err


def test_config_file_supplies_defaults_and_lists_violations(capsys, tmp_path):
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({"synth.seed": 9, "samples_per_cell": 30}))
    out_store = tmp_path / "c.embs"
    code, out, _ = run(
        capsys, "--config", str(config), "synth",
        "--out", str(out_store), "--samples-per-cell", "40", "--num-classes", "4",
    )
    assert code == 0
    assert last_json(out)["count"] == 3 * 4 * 40

    # every violation listed in one machine-parsable error line
    code, _, err = run(capsys, "--config", str(config), "mix")
    assert code == 1
    assert len(err.strip().splitlines()) == 1
    assert err.count("missing required setting") >= 3
    for key in ("natural_pool", "rendition_pool", "n_total"):
        assert key in err


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Full pipeline driven through the CLI: synth, split, train x2,
    calibrate x2, select, partition."""
    root = tmp_path_factory.mktemp("cliflow")
    paths = {
        "store": root / "corpus.embs",
        "split": root / "split.json",
        "ft": root / "ft.json",
        "dr": root / "dr.json",
        "nat": root / "nat.clf.json",
        "rend": root / "rend.clf.json",
        "best": root / "best.clf.json",
        "report": root / "report.json",
        "ids": root / "ids",
        "table": root / "report.txt",
    }
    steps = [
        ["synth", "--out", str(paths["store"]), "--seed", "5",
         "--num-classes", "4", "--samples-per-cell", "200"],
        ["split", "--store", str(paths["store"]), "--n-train", "1400",
         "--n-val", "600", "--n-test", "400", "--seed", "1", "--out", str(paths["split"])],
        ["train", "--store", str(paths["store"]), "--variant", "linear_readout",
         "--out", str(paths["ft"]), "--split", str(paths["split"]),
         "--seed", "2", "--epochs", "40"],
        ["train", "--store", str(paths["store"]), "--variant", "density_ratio",
         "--reference-class", "rendition", "--out", str(paths["dr"]),
         "--split", str(paths["split"]), "--seed", "3", "--epochs", "40"],
        ["calibrate", "--model", str(paths["ft"]), "--val", str(paths["store"]),
         "--split", str(paths["split"]), "--class", "natural",
         "--precision", "0.98", "--out", str(paths["nat"])],
        ["calibrate", "--model", str(paths["dr"]), "--val", str(paths["store"]),
         "--split", str(paths["split"]), "--class", "rendition",
         "--precision", "0.98", "--out", str(paths["rend"])],
        ["select", "--candidates", str(paths["rend"]), "--class", "rendition",
         "--out", str(paths["best"])],
        ["partition", "--store", str(paths["store"]), "--natural", str(paths["nat"]),
         "--rendition", str(paths["rend"]), "--out", str(paths["report"]),
         "--out-ids-dir", str(paths["ids"]), "--out-table", str(paths["table"])],
    ]
    for argv in steps:
        code = main(argv)
        assert code == 0, f"step failed: {argv}"
    return paths


def test_pipeline_artifacts_exist_with_provenance(workspace):
    for key in ("store", "split", "ft", "dr", "nat", "rend", "best", "report"):
        path = workspace[key]
        assert path.exists()
        assert path.with_name(path.name + ".provenance.json").exists()


def test_partition_report_and_id_lists(workspace):
    report = json.loads(workspace["report"].read_text())
    assert report["corpus_size"] == 3 * 4 * 200
    sizes = {
        name: len(read_id_list(workspace["ids"] / f"{name}.ids"))
        for name in ("natural", "ambiguous", "rendition")
    }
    assert sum(sizes.values()) == report["corpus_size"]
    assert report["counts"] == sizes
    table = workspace["table"].read_text()
    assert table.splitlines()[0].split()[0] == "dataset"


def test_end_to_end_determinism_byte_identical(workspace, tmp_path, capsys):
    report2 = tmp_path / "report2.json"
    code, _, _ = run(
        capsys, "partition", "--store", str(workspace["store"]),
        "--natural", str(workspace["nat"]), "--rendition", str(workspace["rend"]),
        "--out", str(report2),
    )
    assert code == 0
    assert report2.read_bytes() == workspace["report"].read_bytes()


def test_clean_subcommand(workspace, tmp_path, capsys):
    out = tmp_path / "clean.json"
    code, stdout, _ = run(
        capsys, "clean", "--store", str(workspace["store"]),
        "--natural", str(workspace["nat"]), "--rendition", str(workspace["rend"]),
        "--intended", "rendition", "--out", str(out),
    )
    assert code == 0
    body = last_json(stdout)
    assert body["kept_count"] + body["removed_as_ambiguous"] + body["removed_as_opposite"] \
        == 3 * 4 * 200


def test_mix_subcommand_uses_partition_pools(workspace, tmp_path, capsys):
    out_ids = tmp_path / "mix.ids"
    code, stdout, _ = run(
        capsys, "mix",
        "--natural-pool", str(workspace["ids"] / "natural.ids"),
        "--rendition-pool", str(workspace["ids"] / "rendition.ids"),
        "--n-total", "57", "--n-rendition", "16", "--seed", "4",
        "--out-ids", str(out_ids),
    )
    assert code == 0
    body = last_json(stdout)
    assert body["n_natural"] == 41 and body["n_rendition"] == 16
    assert len(read_id_list(out_ids)) == 57


def test_calibrate_unreachable_precision_exits_2(workspace, tmp_path, capsys):
    tsv = tmp_path / "dup.tsv"
    tsv.write_text(
        "0 nat 0 1.0,0.0\n1 rend 0 1.0,0.0\n2 nat 0 0.9,0.1\n"
        "3 rend 0 -1.0,0.0\n4 rend 0 -0.9,0.1\n"
    )
    store = tmp_path / "dup.embs"
    assert main(["ingest", "--tsv", str(tsv), "--dimension", "2",
                 "--out", str(store)]) == 0
    capsys.readouterr()
    model = tmp_path / "ce.json"
    assert main(["train", "--store", str(store), "--variant", "centroid",
                 "--classes", "natural,rendition", "--out", str(model)]) == 0
    capsys.readouterr()
    code, _, err = run(
        capsys, "calibrate", "--model", str(model), "--val", str(store),
        "--subset", "all", "--class", "natural", "--precision", "0.98",
        "--out", str(tmp_path / "x.json"),
    )
    assert code == 2
    assert err.startswith("error kind=method")
    assert "unreachable" in err


def test_experiment_sweep_file(workspace, tmp_path, capsys):
    sweep = tmp_path / "ratios.json"
    sweep.write_text(json.dumps({
        "kind": "ratio-sweep", "n_total": 400, "ratios": [[0, 1], [1, 1]],
    }))
    out = tmp_path / "exp.json"
    out_csv = tmp_path / "exp.csv"
    code, stdout, _ = run(
        capsys, "experiment", "--store", str(workspace["store"]),
        "--sweep", str(sweep), "--seed", "6", "--epochs", "30",
        "--out", str(out), "--out-csv", str(out_csv),
    )
    assert code == 0
    results = last_json(stdout)["results"]
    assert len(results) == 2
    assert out.exists() and out_csv.exists()
    assert out_csv.read_text().startswith("model,n_natural,n_rendition,domain,accuracy")


def test_sweep_subcommand(workspace, tmp_path, capsys):
    out = tmp_path / "sweep.json"
    code, stdout, _ = run(
        capsys, "sweep", "--store", str(workspace["store"]),
        "--natural-model", str(workspace["ft"]),
        "--rendition-model", str(workspace["dr"]),
        "--val-store", str(workspace["store"]),
        "--levels", "0.9,0.98", "--out", str(out),
    )
    assert code == 0
    entries = last_json(stdout)
    assert [e["level"] for e in entries] == [0.9, 0.98]
    assert all(e["report"] is not None for e in entries)
    assert out.exists()


def test_rel_acc_and_robustness_subcommands(tmp_path, capsys):
    table = tmp_path / "table.csv"
    table.write_text(
        "model,IN-Val,IN-R\n"
        "base-s,0.30,0.20\nbase-m,0.50,0.35\nbase-l,0.70,0.55\ntreated,0.50,0.10\n"
    )
    code, stdout, _ = run(
        capsys, "rel-acc", "--table", str(table),
        "--treated", "treated", "--baseline", "base-m",
    )
    assert code == 0
    ratios = last_json(stdout)["ratios"]
    assert ratios["IN-Val"] == pytest.approx(1.0)
    assert ratios["IN-R"] == pytest.approx(0.10 / 0.35)

    code, stdout, _ = run(
        capsys, "robustness", "--table", str(table),
        "--baseline-models", "base-s,base-m,base-l",
        "--ood-testset", "IN-R", "--models", "treated",
    )
    assert code == 0
    body = last_json(stdout)
    assert body["points"][0]["logit_offset"] < 0


def test_help_exits_0(capsys):
    assert main(["--help"]) == 0
    out = capsys.readouterr().out
    for sub in ("ingest", "split", "train", "calibrate", "select", "partition",
                "sweep", "clean", "mix", "rel-acc", "robustness", "synth",
                "experiment", "serve"):
        assert sub in out
