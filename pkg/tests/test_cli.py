import csv
import io

import numpy as np
import pytest

from kernelnn.cli import (
    EXIT_FAILED,
    EXIT_INVALID,
    EXIT_OK,
    format_p,
    kernel_profiles,
    main,
    read_csv_rows,
    replication_tables,
)
from kernelnn.data import load_bundled, save_csv

import oracles


def run(*argv):
    return main(["-q", *map(str, argv)])


def body_rows(path):
    return read_csv_rows(path)[1]


def test_evaluate_single_config(tmp_path):
    out = tmp_path / "r"
    assert run("evaluate", "--datasets", "iris", "--seed", 1, "--out", out, "--set", "k=5") == EXIT_OK
    folds = body_rows(out / "evaluation.csv")
    agg = body_rows(out / "aggregate.csv")
    assert len(folds) == 5 and len(agg) == 1
    assert agg[0]["k"] == "5" and agg[0]["classifier"] == "nn" and agg[0]["folds_scored"] == "5"
    assert 0.9 < float(agg[0]["mean_auroc"]) <= 1.0
    for name in ("evaluation.csv", "aggregate.csv", "timings.csv", "configs.csv"):
        first = (out / name).read_text().splitlines()[0]
        assert first.startswith("# kernelnn 0.1.0; config ") and first.endswith("; seed 1")
    assert (out / "run.log").exists()


def test_evaluate_grid_from_config_file(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("datasets = iris, wine, glass\nmetric = boscovich, euclidean\nk = 3\nseed = 4\nfolds = 3\n")
    out = tmp_path / "r"
    assert run("evaluate", "--config", cfg, "--out", out) == EXIT_OK
    agg = body_rows(out / "aggregate.csv")
    assert len(agg) == 6
    assert {(r["dataset"], r["metric"]) for r in agg} == {
        (d, m) for d in ("iris", "wine", "glass") for m in ("boscovich", "euclidean")
    }
    assert len(body_rows(out / "evaluation.csv")) == 18


def test_evaluate_deterministic(tmp_path):
    args = ["evaluate", "--datasets", "iris", "wine", "--seed", 3, "--set", "classifier=nn,frnn", "--set", "k_grid=1,4,9"]
    assert run(*args, "--out", tmp_path / "a", "--jobs", 1) == EXIT_OK
    assert run(*args, "--out", tmp_path / "b", "--jobs", 3) == EXIT_OK
    for name in ("evaluation.csv", "aggregate.csv", "configs.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_evaluate_csv_path_dataset(tmp_path):
    path = tmp_path / "mine.csv"
    save_csv(load_bundled("iris"), path)
    out = tmp_path / "r"
    assert run("evaluate", "--datasets", path, "--seed", 0, "--out", out, "--set", "k=1") == EXIT_OK
    assert body_rows(out / "aggregate.csv")[0]["dataset"] == "mine"


@pytest.mark.parametrize(
    "extra",
    [
        [],  # no seed
        ["--seed", 1, "--set", "metric=cosine"],
        ["--seed", 1, "--set", "colour=red"],
        ["--seed", 1, "--set", "classifier=frnn", "--set", "distance_kernel=laplace"],
        ["--seed", 1, "--folds", 1],
        ["--seed", 1, "--set", "k=two"],
    ],
)
def test_evaluate_invalid_config(tmp_path, extra):
    assert run("evaluate", "--datasets", "iris", "--out", tmp_path, *extra) == EXIT_INVALID


def test_evaluate_missing_dataset_is_partial_failure(tmp_path):
    out = tmp_path / "r"
    code = run("evaluate", "--datasets", "iris", tmp_path / "nope.csv", "--seed", 1, "--out", out, "--set", "k=3")
    assert code == EXIT_FAILED
    assert len(body_rows(out / "aggregate.csv")) == 1
    assert "nope.csv" in (out / "run.log").read_text()


@pytest.fixture(scope="module")
def aggregate(tmp_path_factory):
    out = tmp_path_factory.mktemp("agg")
    code = run(
        "evaluate", "--datasets", "iris", "wine", "glass", "--seed", 2, "--out", out, "--folds", 3,
        "--set", "metric=boscovich,euclidean,chebyshev", "--set", "k=5",
    )  # fmt: skip
    assert code == EXIT_OK
    return out / "aggregate.csv"


def test_compare_reference(aggregate, tmp_path, capsys):
    code = run("compare", aggregate, "--vary", "metric", "--reference", "boscovich", "--out", tmp_path)
    assert code == EXIT_OK
    text = capsys.readouterr().out
    assert "metric=boscovich vs" in text and "euclidean" in text and "chebyshev" in text
    rows = body_rows(tmp_path / "comparison.csv")
    assert len(rows) == 2 and all(r["n_datasets"] == "3" for r in rows)
    p = [float(r["p_raw"]) for r in rows]
    assert all(1 / 8 <= v <= 1 for v in p)
    np.testing.assert_allclose([float(r["p_adjusted"]) for r in rows], oracles.holm(p))


def test_compare_single_level_gives_empty_table(aggregate, tmp_path):
    code = run(
        "compare", aggregate, aggregate, "--vary", "metric", "--reference", "euclidean",
        "--where", "metric=euclidean", "--all-pairs", "--out", tmp_path,
    )  # fmt: skip
    # a single level gives no pairs: nothing to compare
    assert code == EXIT_OK
    assert body_rows(tmp_path / "comparison.csv") == []


def test_compare_identical_configs_degenerate(tmp_path):
    path = tmp_path / "agg.csv"
    header = "# kernelnn 0.1.0; config x; seed 1\n"
    cols = "dataset,config,classifier,metric,scaling,rank_kernel,distance_kernel,variant,k,multiclass,seed,folds,folds_scored,mean_auroc\n"
    lines = []
    for ds, v in (("a", 0.8), ("b", 0.9), ("c", 0.7)):
        for metric in ("boscovich", "euclidean"):
            lines.append(f"{ds},h,nn,{metric},r1,constant,constant,-,5,ovr,1,5,5,{v}\n")
    path.write_text(header + cols + "".join(lines))
    out = tmp_path / "o"
    assert run("compare", path, "--vary", "metric", "--reference", "boscovich", "--out", out) == EXIT_OK
    (row,) = body_rows(out / "comparison.csv")
    assert float(row["p_adjusted"]) == 1.0 and row["ties"] == "3"


def test_compare_mismatched_results(tmp_path):
    path = tmp_path / "agg.csv"
    cols = "dataset,config,classifier,metric,scaling,rank_kernel,distance_kernel,variant,k,multiclass,seed,folds,folds_scored,mean_auroc\n"
    path.write_text(
        "# kernelnn 0.1.0; config x; seed 1\n" + cols
        + "a,h,nn,boscovich,r1,constant,constant,-,5,ovr,1,5,5,0.8\n"
        + "a,h,nn,euclidean,r1,constant,constant,-,5,ovr,1,5,5,0.7\n"
        + "b,h,nn,boscovich,r1,constant,constant,-,5,ovr,1,5,5,0.8\n"
    )  # fmt: skip
    assert run("compare", path, "--vary", "metric", "--reference", "boscovich") == EXIT_FAILED


def test_compare_ambiguous_needs_where(aggregate, tmp_path):
    assert run("compare", aggregate, "--vary", "scaling", "--reference", "r1") == EXIT_INVALID
    assert run("compare", aggregate, "--vary", "metric", "--reference", "cosine") == EXIT_INVALID


def test_format_p():
    assert format_p(0.00001) == "< 0.0001"
    assert format_p(0.012345) == "0.012"
    assert format_p(1.0) == "1"


def test_kernel_profiles_examples():
    rows = kernel_profiles(["linear", "constant", "samworth"], [2], samples=11)
    linear = [v for k, _, _, v in rows if k == "linear"]
    constant = [v for k, _, _, v in rows if k == "constant"]
    samworth = [v for k, _, _, v in rows if k == "samworth"]
    np.testing.assert_allclose(linear, 2 * (1 - np.linspace(0, 1, 11)), atol=1e-14)
    np.testing.assert_allclose(constant, 1.0)
    np.testing.assert_allclose(samworth, linear, atol=1e-14)


def test_kernel_profiles_command(tmp_path):
    assert run("kernel-profiles", "--out", tmp_path, "--kernels", "linear,recip,samworth", "--m", "1,5", "--samples", 21) == EXIT_OK
    text = (tmp_path / "kernel_profiles.csv").read_text().splitlines()
    assert text[0].startswith("# kernelnn") and text[1].startswith("# improper kernels sampled on [0.001, 1]")
    rows = list(csv.DictReader(io.StringIO("\n".join(text[2:]))))
    assert {(r["kernel"], r["m"]) for r in rows} == {("linear", ""), ("recip", ""), ("samworth", "1"), ("samworth", "5")}
    recip = [r for r in rows if r["kernel"] == "recip"]
    assert float(recip[0]["a"]) == 0.001 and len(recip) == 21
    assert run("kernel-profiles", "--out", tmp_path, "--kernels", "macleod") == EXIT_INVALID


def test_replication_table_set():
    tables, configs = replication_tables()
    assert len(tables) == 17
    labels = {c.label() for c in configs}
    assert len(labels) == len(configs)
    for table in tables:
        for better, worse in table.cells.values():
            assert better in labels and worse in labels and better != worse


def test_replicate_empty_directory(tmp_path):
    assert run("replicate", tmp_path, "--seed", 1, "--out", tmp_path / "o") == EXIT_INVALID
    assert run("replicate", tmp_path / "missing", "--seed", 1, "--out", tmp_path / "o") == EXIT_INVALID


def test_replicate_small_subset_banner(tmp_path, capsys):
    data_dir = tmp_path / "data"
    data_dir.mkdir()
    for name in ("iris", "wine"):
        save_csv(load_bundled(name), data_dir / f"{name}.csv")
    out = tmp_path / "o"
    code = run("replicate", data_dir, "--seed", 1, "--out", out, "--folds", 2, "--k-grid", "3", "--jobs", -1)
    assert code in (EXIT_OK, EXIT_FAILED)
    banner = capsys.readouterr().out
    assert "reduced power" in banner and "2^-2" in banner
    text = (out / "tables" / "all_tables.txt").read_text()
    assert text.count("reduced power") == len(replication_tables()[0])
    assert (out / "tables" / "nn_metrics.csv").exists()
    assert len(body_rows(out / "aggregate.csv")) == 2 * len(replication_tables()[1])
