"""Command-line runner: ``evaluate``, ``compare``, ``kernel-profiles`` and ``replicate``.

Experiments are described by a flat ``key = value`` file; list values are
comma-separated and every list-valued classifier field spans one axis of
the configuration grid::

    datasets = iris, wine, data/yeast.csv
    classifier = nn, frnn
    rank_kernel = samworth
    distance_kernel = samworth
    scaling = r1, r2
    metric = boscovich
    seed = 0

Every output file starts with a ``#`` provenance line naming the tool
version, a digest of the experiment configuration and the seed. Exit
codes: 0 success, 1 partial or total failure of the run, 2 invalid
configuration or arguments.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import itertools
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .classifiers import ClassifierConfig
from .data import BUNDLED, CSVFormatError, load_bundled, load_csv
from .evaluation import MismatchedResults, compare_configs, evaluate_grid
from .kernels import IMPROPER, kernel_area, kernel_from_name

log = logging.getLogger("kernelnn")

EXIT_OK, EXIT_FAILED, EXIT_INVALID = 0, 1, 2

# classifier fields that may hold a list in the config file, in grid order
GRID_KEYS = (
    "classifier",
    "metric",
    "scaling",
    "rank_kernel",
    "distance_kernel",
    "fnn_mode",
    "fnn_q",
    "frnn_approximation",
    "multiclass",
)
SCALAR_KEYS = ("datasets", "label_column", "folds", "seed", "k", "k_grid", "out", "jobs")
# columns of aggregate.csv that identify a configuration
CONFIG_FIELDS = ("classifier", "metric", "scaling", "rank_kernel", "distance_kernel", "variant", "k", "multiclass")

# dataset names of the full benchmark study
BENCHMARK = (
    "accent", "acoustic-features", "ai4i2020", "alcohol", "androgen-receptor", "avila", "banknote",
    "bioaccumulation", "biodeg", "breasttissue", "ca-cervix", "caesarian", "ceramic", "cmc",
    "codon-usage", "coimbra", "column", "debrecen", "dermatology", "diabetes-risk", "divorce",
    "dry-bean", "ecoli", "electrical-grid", "faults", "fertility", "flowmeters", "forest-types",
    "gender-gap", "glass", "haberman", "hcv", "heart-failure", "house-votes-84", "htru2", "ilpd",
    "ionosphere", "iris", "landsat", "leaf", "letter", "lrs", "magic", "mfeat", "miniboone",
    "new-thyroid", "oral-toxicity", "page-blocks", "phishing-websites", "plrx", "pop-failures",
    "post-operative", "qualitative-bankruptcy", "raisin", "rejafada", "rice", "seeds", "segment",
    "seismic-bumps", "sensorless", "sepsis-survival", "shuttle", "skin", "somerville", "sonar",
    "south-german-credit", "spambase", "spectf", "sportsarticles", "sta-dyn-lab", "tcga-pancan-hiseq",
    "thoraric-surgery", "transfusion", "tuandromd", "urban-land-cover", "vehicle", "warts", "waveform",
    "wdbc", "wifi", "wilt", "wine", "wisconsin", "wpbc", "yeast",
)  # fmt: skip

SCALINGS = ("r1", "r2", "rinf", "rinf*")
PROFILE_KERNELS = ("constant", "linear", "epanechnikov", "quartic", "sugeno", "yager", "laplace", "samworth")


class ConfigError(ValueError):
    """Invalid experiment configuration or command-line arguments."""


# ---------------------------------------------------------------------------
# experiment configuration


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {value!r}") from None


@dataclass
class ExperimentConfig:
    datasets: list = field(default_factory=list)
    label_column: int | str = -1
    grid: dict = field(default_factory=dict)
    folds: int = 5
    seed: int | None = None
    k: int | None = None
    k_grid: tuple | None = None
    out: str = "results"
    jobs: int = 1

    @classmethod
    def from_mapping(cls, raw: dict) -> "ExperimentConfig":
        unknown = sorted(set(raw) - set(GRID_KEYS) - set(SCALAR_KEYS))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        cfg = cls()
        cfg.datasets = _split(raw.get("datasets", ""))
        if "label_column" in raw:
            text = raw["label_column"].strip()
            cfg.label_column = int(text) if text.lstrip("-").isdigit() else text
        cfg.folds = _int("folds", raw.get("folds", "5"))
        if raw.get("seed", "").strip():
            cfg.seed = _int("seed", raw["seed"])
        if raw.get("k", "").strip():
            cfg.k = _int("k", raw["k"])
        if raw.get("k_grid", "").strip():
            cfg.k_grid = tuple(_int("k_grid", v) for v in _split(raw["k_grid"]))
        cfg.out = raw.get("out", cfg.out).strip() or cfg.out
        cfg.jobs = _int("jobs", raw.get("jobs", "1"))
        cfg.grid = {key: _split(raw[key]) for key in GRID_KEYS if key in raw and _split(raw[key])}
        return cfg

    def validate(self) -> None:
        if not self.datasets:
            raise ConfigError("no datasets given")
        if self.seed is None:
            raise ConfigError("a seed is required (config key 'seed' or --seed)")
        if self.folds < 2:
            raise ConfigError("folds must be at least 2")
        if self.jobs == 0:
            raise ConfigError("jobs must be non-zero")
        self.cells()

    def cells(self) -> list[ClassifierConfig]:
        """Every configuration of the grid, in a fixed order."""
        axes = [self.grid.get(key, [None]) for key in GRID_KEYS]
        out, seen = [], set()
        for values in itertools.product(*axes):
            kwargs = {key: v for key, v in zip(GRID_KEYS, values) if v is not None}
            if kwargs.get("distance_kernel", "").lower() == "default":
                del kwargs["distance_kernel"]
            if "fnn_q" in kwargs:
                try:
                    kwargs["fnn_q"] = float(kwargs["fnn_q"])
                except ValueError:
                    raise ConfigError(f"fnn_q must be a number, got {kwargs['fnn_q']!r}") from None
            try:
                config = ClassifierConfig(k=self.k, k_grid=self.k_grid, **kwargs)
            except ValueError as exc:
                raise ConfigError(f"invalid grid cell {kwargs}: {exc}") from None
            if config.digest() not in seen:
                seen.add(config.digest())
                out.append(config)
        return out

    def as_dict(self) -> dict:
        # output location and parallelism do not affect results
        return {
            "datasets": list(self.datasets),
            "label_column": self.label_column,
            "grid": {k: list(v) for k, v in sorted(self.grid.items())},
            "folds": self.folds,
            "seed": self.seed,
            "k": self.k,
            "k_grid": list(self.k_grid) if self.k_grid else None,
        }

    def digest(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def read_config(path) -> dict:
    """Parse a flat ``key = value`` file into a dict of raw strings."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        parser.read_string("[experiment]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    return dict(parser["experiment"])


def build_config(args) -> ExperimentConfig:
    raw = read_config(args.config) if args.config else {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        raw[key.strip().lower()] = value
    if getattr(args, "datasets", None):
        raw["datasets"] = ",".join(args.datasets)
    for key in ("seed", "folds", "out", "jobs"):
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = str(value)
    cfg = ExperimentConfig.from_mapping(raw)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# output helpers


def provenance(digest: str, seed) -> str:
    return f"# kernelnn {__version__}; config {digest}; seed {seed if seed is not None else 'none'}\n"


def _fmt(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return "" if value is None else str(value)


def write_csv(path: Path, header: str, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(header)
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_text(path: Path, header: str, body: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header)
        fh.write(body)


def read_csv_rows(path) -> tuple[str, list[dict]]:
    """Rows of a CSV written by this tool, plus its provenance line."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header = next((line for line in lines if line.startswith("#")), "")
    body = [line for line in lines if not line.startswith("#")]
    return header, list(csv.DictReader(body))


def config_fields(config: ClassifierConfig) -> dict:
    return {
        "classifier": config.classifier,
        "metric": config.metric.label,
        "scaling": config.scaling.label,
        "rank_kernel": config.rank_kernel,
        "distance_kernel": config.distance_label,
        "variant": config.variant,
        "k": "loo" if config.k is None else str(config.k),
        "multiclass": config.multiclass,
    }


def _attach_log(out: Path) -> logging.Handler:
    handler = logging.FileHandler(out / "run.log", mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logging.getLogger().addHandler(handler)
    return handler


# ---------------------------------------------------------------------------
# evaluate


def load_dataset(spec: str, label_column=-1):
    if spec in BUNDLED and not os.path.exists(spec):
        return load_bundled(spec)
    return load_csv(spec, label_column=label_column)


def _load_all(specs, label_column) -> tuple[list, list]:
    loaded, failed = [], []
    for spec in specs:
        try:
            loaded.append(load_dataset(spec, label_column))
        except (OSError, CSVFormatError, ValueError) as exc:
            log.error("cannot read dataset %s: %s", spec, exc)
            failed.append(spec)
    return loaded, failed


def write_results(out: Path, header: str, results, seed) -> None:
    eval_rows, agg_rows, time_rows = [], [], []
    for res in results:
        digest = res.digest
        for f in res.folds:
            eval_rows.append((res.dataset, digest, f.fold, f.auroc, f.k, f.approximation or ""))
            time_rows.append((res.dataset, digest, f.fold, round(f.wall_ms, 3)))
        fields = config_fields(res.config)
        scored = int(np.sum(~np.isnan(res.aurocs)))
        agg_rows.append(
            (res.dataset, digest, *(fields[k] for k in CONFIG_FIELDS), seed, len(res.folds), scored, res.mean_auroc)
        )
    write_csv(out / "evaluation.csv", header, ("dataset", "config", "fold", "auroc", "k_selected", "approximation"), eval_rows)
    write_csv(out / "aggregate.csv", header, ("dataset", "config", *CONFIG_FIELDS, "seed", "folds", "folds_scored", "mean_auroc"), agg_rows)
    # wall-clock times vary between runs, so they live apart from the reproducible results
    write_csv(out / "timings.csv", header, ("dataset", "config", "fold", "wall_ms"), time_rows)
    configs = {}
    for res in results:
        configs.setdefault(res.digest, res.config)
    write_csv(
        out / "configs.csv",
        header,
        ("config", "label", "settings"),
        [(d, c.label(), json.dumps(c.as_dict(), sort_keys=True)) for d, c in configs.items()],
    )


def run_grid(cfg: ExperimentConfig, datasets, configs, out: Path) -> tuple[list, list]:
    results, skipped = evaluate_grid(datasets, configs, folds=cfg.folds, seed=cfg.seed, jobs=cfg.jobs)
    write_results(out, provenance(cfg.digest(), cfg.seed), results, cfg.seed)
    return results, skipped


def cmd_evaluate(args) -> int:
    cfg = build_config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    handler = _attach_log(out)
    try:
        configs = cfg.cells()
        log.info("evaluating %d configuration(s) on %d dataset(s), seed %d", len(configs), len(cfg.datasets), cfg.seed)
        datasets, failed = _load_all(cfg.datasets, cfg.label_column)
        results, skipped = run_grid(cfg, datasets, configs, out)
        expected = len(cfg.datasets) * len(configs)
        log.info("%d of %d aggregate rows written to %s", len(results), expected, out)
        if not results:
            log.error("every dataset or configuration failed")
            return EXIT_FAILED
        return EXIT_FAILED if failed or skipped else EXIT_OK
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()


# ---------------------------------------------------------------------------
# comparison tables


@dataclass
class Table:
    """Pairwise tests laid out as rows x columns; each cell tests ``better > worse``."""

    name: str
    title: str
    rows: list
    columns: list
    cells: dict  # (row, column) -> (better label, worse label)
    holm: str = "column"  # column, row, table or none


def format_p(p: float) -> str:
    if p < 1e-4:
        return "< 0.0001"
    return f"{p:.2g}"


def _families(table: Table) -> list:
    keys = list(table.cells)
    if table.holm == "column":
        return [f"{table.name}:{c}" for _, c in keys]
    if table.holm == "row":
        return [f"{table.name}:{r}" for r, _ in keys]
    if table.holm == "table":
        return [table.name] * len(keys)
    return [f"{table.name}:{r}:{c}" for r, c in keys]  # singleton families leave p unchanged


def evaluate_table(table: Table, results: dict):
    keys = list(table.cells)
    report = compare_configs(results, [table.cells[k] for k in keys], _families(table), holm=table.holm != "none")
    return dict(zip(keys, report.comparisons)), report


def render_table(table: Table, outcome: dict, banner: str = "") -> str:
    corner = table.title
    body = [[""] + [str(c) for c in table.columns]]
    for r in table.rows:
        line = [str(r)]
        for c in table.columns:
            comp = outcome.get((r, c))
            line.append(format_p(comp.p_adjusted) if comp else "")
        body.append(line)
    widths = [max(len(line[j]) for line in body) for j in range(len(body[0]))]
    text = [banner] if banner else []
    text.append(corner)
    holm = {"none": "no multiple-testing correction"}.get(table.holm, f"Holm correction per {table.holm}")
    text.append(f"(one-sided Wilcoxon signed-rank p-values, {holm})")
    for line in body:
        text.append("  ".join(cell.rjust(w) if j else cell.ljust(w) for j, (cell, w) in enumerate(zip(line, widths))).rstrip())
    return "\n".join(text) + "\n"


def write_table(out: Path, header: str, table: Table, outcome: dict, banner: str = "") -> str:
    text = render_table(table, outcome, banner)
    write_text(out / f"{table.name}.txt", header, text)
    rows = []
    for (r, c), comp in outcome.items():
        rows.append(
            (r, c, comp.better, comp.worse, comp.family, comp.n_datasets, comp.wins, comp.ties, comp.losses,
             comp.statistic, comp.n_effective, comp.p_raw, comp.p_adjusted)
        )  # fmt: skip
    write_csv(
        out / f"{table.name}.csv",
        header,
        ("row", "column", "better", "worse", "family", "n_datasets", "wins", "ties", "losses", "w_plus",
         "n_effective", "p_raw", "p_adjusted"),
        rows,
    )  # fmt: skip
    return text


def _config_key(row: dict) -> str:
    return "|".join(f"{k}={row[k]}" for k in CONFIG_FIELDS)


def load_aggregates(paths) -> tuple[dict, list[dict], set]:
    """Mean AUROCs by configuration key and dataset, the raw rows, and the seeds seen."""
    results, rows, seeds = {}, [], set()
    for path in paths:
        try:
            _, file_rows = read_csv_rows(path)
        except OSError as exc:
            raise ConfigError(f"cannot read results {path}: {exc}") from None
        if file_rows and not set(CONFIG_FIELDS + ("dataset", "mean_auroc", "seed")) <= set(file_rows[0]):
            raise ConfigError(f"{path} is not an aggregate results file")
        for row in file_rows:
            key = _config_key(row)
            value = float(row["mean_auroc"])
            seeds.add(row["seed"])
            previous = results.setdefault(key, {}).get(row["dataset"])
            if previous is not None and not (previous == value or (math.isnan(previous) and math.isnan(value))):
                raise MismatchedResults(f"conflicting results for {row['dataset']} under {key}")
            results[key][row["dataset"]] = value
            rows.append(row)
    # datasets whose mean is undefined cannot be paired
    for key in results:
        results[key] = {ds: v for ds, v in results[key].items() if not math.isnan(v)}
    return results, rows, seeds


def _parse_where(items) -> dict:
    where = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--where expects field=value, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        if key not in CONFIG_FIELDS:
            raise ConfigError(f"--where: unknown field {key!r}; fields are {', '.join(CONFIG_FIELDS)}")
        where.setdefault(key, set()).update(_split(value))
    return where


def build_comparison(rows: list[dict], vary: str, reference: str | None, columns: str | None,
                     where: dict, alternative: str = "greater", all_pairs: bool = False,
                     holm: str | None = None, name: str = "comparison") -> Table:  # fmt: skip
    """Lay out the tests implied by varying one field against a reference value."""
    for fld in (vary, columns):
        if fld is not None and fld not in CONFIG_FIELDS:
            raise ConfigError(f"unknown field {fld!r}; fields are {', '.join(CONFIG_FIELDS)}")
    if columns == vary:
        raise ConfigError("--columns must differ from --vary")
    rows = [r for r in rows if all(r[k] in v for k, v in where.items())]
    if not rows:
        raise ConfigError("no results match the --where filters")
    levels = list(dict.fromkeys(r[vary] for r in rows))
    cols = list(dict.fromkeys(r[columns] for r in rows)) if columns else ["p"]
    groups = {}
    for r in rows:
        groups.setdefault((r[vary], r[columns] if columns else "p"), {})[_config_key(r)] = r
    for (v, c), members in groups.items():
        if len(members) > 1:
            free = [f for f in CONFIG_FIELDS if len({m[f] for m in members.values()}) > 1]
            values = ", ".join(f"{f} in ({', '.join(sorted({m[f] for m in members.values()}))})" for f in free)
            raise ConfigError(f"{vary}={v} matches several configurations ({values}); pin them with --where")

    def key(v, c):
        members = groups.get((v, c if columns else "p"))
        if not members:
            where = f"{vary}={v}" + (f", {columns}={c}" if columns else "")
            raise MismatchedResults(f"no configuration with {where}")
        return next(iter(members))

    cells = {}
    if all_pairs:
        if columns:
            raise ConfigError("--all-pairs lays levels out as rows and columns; drop --columns")
        if reference is not None:
            levels = [reference] + [v for v in levels if v != reference]
        for i, a in enumerate(levels):
            for b in levels[i + 1 :]:
                cells[(a, b)] = (key(a, None), key(b, None))
        return Table(name, f"{vary}: row vs column", levels[:-1], levels[1:], cells, holm or "row")
    if reference is None:
        raise ConfigError("--reference is required unless --all-pairs is given")
    if reference not in levels:
        raise ConfigError(f"reference {vary}={reference!r} not found; available: {', '.join(levels)}")
    others = [v for v in levels if v != reference]
    for v in others:
        for c in cols:
            ref, other = key(reference, c), key(v, c)
            cells[(v, c)] = (ref, other) if alternative == "greater" else (other, ref)
    title = f"{vary}={reference} vs ..." if alternative == "greater" else f"... vs {vary}={reference}"
    return Table(name, title, others, cols, cells, holm or ("column" if columns else "table"))


def cmd_compare(args) -> int:
    results, rows, seeds = load_aggregates(args.results)
    if len(seeds) > 1:
        raise ConfigError(f"result files use different seeds: {', '.join(sorted(seeds))}")
    table = build_comparison(
        rows, args.vary, args.reference, args.columns, _parse_where(args.where),
        args.alternative, args.all_pairs, args.holm, args.name,
    )  # fmt: skip
    try:
        outcome, _ = evaluate_table(table, results)
    except MismatchedResults as exc:
        log.error("%s", exc)
        return EXIT_FAILED
    settings = {k: getattr(args, k) for k in ("results", "vary", "reference", "columns", "where", "alternative", "all_pairs", "holm")}
    digest = hashlib.sha256(json.dumps(settings, sort_keys=True).encode()).hexdigest()[:12]
    header = provenance(digest, next(iter(seeds), None))
    text = render_table(table, outcome)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_table(out, header, table, outcome)
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# kernel profiles


def kernel_profiles(names, ms, samples: int = 101, epsilon: float = 1e-3) -> list[tuple]:
    """Area-normalised kernel samples ``(kernel, m, a, value)``.

    Proper kernels are sampled on a uniform grid over [0, 1]; improper
    ones on [epsilon, 1]. Each profile is divided by its trapezoidal area
    over its grid.
    """
    if samples < 2:
        raise ConfigError("need at least two samples")
    if not 0 < epsilon < 1:
        raise ConfigError("epsilon must lie in (0, 1)")
    rows = []
    for name in names:
        try:
            base = kernel_from_name(name)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if base.distance_only:
            raise ConfigError("the MacLeod rule depends on the nearest distance and has no profile")
        variants = [base.with_dimension(m) for m in ms] if base.name == "samworth" else [base]
        for kernel in variants:
            lo = epsilon if kernel.name in IMPROPER else 0.0
            grid = np.linspace(lo, 1.0, samples)
            values = kernel(grid) / kernel_area(kernel, grid)
            m = kernel.m if kernel.m is not None else ""
            rows.extend((kernel.name, m, float(a), float(v)) for a, v in zip(grid, values))
    return rows


def cmd_kernel_profiles(args) -> int:
    ms = [_int("m", v) for v in _split(args.m)]
    if any(m < 1 for m in ms):
        raise ConfigError("m values must be positive")
    names = _split(args.kernels)
    rows = kernel_profiles(names, ms, args.samples, args.epsilon)
    settings = {"kernels": names, "m": ms, "samples": args.samples, "epsilon": args.epsilon}
    digest = hashlib.sha256(json.dumps(settings, sort_keys=True).encode()).hexdigest()[:12]
    header = provenance(digest, args.seed)
    header += f"# improper kernels sampled on [{args.epsilon!r}, 1]; each profile divided by its trapezoidal area\n"
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "kernel_profiles.csv", header, ("kernel", "m", "a", "value"), rows)
    log.info("wrote %d samples to %s", len(rows), out / "kernel_profiles.csv")
    return EXIT_OK


# ---------------------------------------------------------------------------
# replication


class _Registry:
    """Collects the configurations referenced by the replication tables."""

    def __init__(self, k_grid=None):
        self.k_grid = k_grid
        self.configs = {}

    def __call__(self, classifier, scaling, rank="constant", dist=None, metric="boscovich") -> str:
        config = ClassifierConfig(classifier, rank, dist, metric=metric, scaling=scaling, k_grid=self.k_grid)
        return self.configs.setdefault(config.label(), config).label()


def replication_tables(k_grid=None) -> tuple[list[Table], list[ClassifierConfig]]:
    """Every table of pairwise tests in the full study, and the configurations they need."""
    cfg = _Registry(k_grid)
    tables = []

    def scaled(name, title, rows: dict, holm):
        # rows maps a row label to a function of the scaling giving (better, worse)
        cells = {(r, s): make(s) for r, make in rows.items() for s in SCALINGS}
        tables.append(Table(name, title, list(rows), list(SCALINGS), cells, holm))

    def vs_rinf(name, title, clf):
        rows = ("r2", "r1", "rinf*")
        cells = {(r, "p"): (cfg(clf, r, "samworth", "samworth"), cfg(clf, "rinf", "samworth", "samworth")) for r in rows}
        tables.append(Table(name, title, list(rows), ["p"], cells, "table"))

    main = {"nn": ("samworth", "samworth"), "fnn": ("constant", "samworth"), "frnn": ("samworth", "samworth")}
    for clf, (rank, dist) in main.items():
        scaled(
            f"{clf}_metrics",
            f"{clf.upper()}, rank={rank}, distance={dist}: boscovich vs ...",
            {
                other: lambda s, clf=clf, rank=rank, dist=dist, other=other: (
                    cfg(clf, s, rank, dist),
                    cfg(clf, s, rank, dist, metric=other),
                )
                for other in ("euclidean", "chebyshev")
            },
            "column",
        )

    nn_dist = ("constant", "epanechnikov", "laplace", "linear", "macleod", "quartic", "recip", "recip2", "sugeno")
    scaled(
        "nn_distance_kernels",
        "NN, boscovich: samworth distance weights vs ...",
        {d: lambda s, d=d: (cfg("nn", s, dist="samworth"), cfg("nn", s, dist=d)) for d in nn_dist},
        "column",
    )
    nn_rank = ("linear", "epanechnikov", "quartic", "samworth", "sugeno", "yager", "laplace", "recip", "recip2")
    scaled(
        "nn_distance_vs_rank",
        "NN, boscovich: kernel as distance weights vs the same kernel as rank weights",
        {r: lambda s, r=r: (cfg("nn", s, dist=r), cfg("nn", s, rank=r, dist="constant")) for r in nn_rank},
        "column",
    )
    scaled(
        "nn_samworth_vs_other_schemes",
        "NN, boscovich: samworth distance weights vs ...",
        {
            "recip rank": lambda s: (cfg("nn", s, dist="samworth"), cfg("nn", s, "recip", "constant")),
            "laplace rank": lambda s: (cfg("nn", s, dist="samworth"), cfg("nn", s, "laplace", "constant")),
            "recip rank + linear distance": lambda s: (cfg("nn", s, dist="samworth"), cfg("nn", s, "recip", "linear")),
        },
        "column",
    )
    scaled(
        "nn_combined_vs_distance",
        "NN, boscovich: samworth rank+distance weights vs ...",
        {"samworth distance": lambda s: (cfg("nn", s, "samworth", "samworth"), cfg("nn", s, dist="samworth"))},
        "none",
    )
    vs_rinf("nn_scalings", "NN, boscovich, samworth rank+distance: scaling vs rinf", "nn")

    scaled(
        "fnn_distance_kernels",
        "FNN, boscovich: samworth distance weights vs ...",
        {d: lambda s, d=d: (cfg("fnn", s, dist="samworth"), cfg("fnn", s, dist=d)) for d in ("recip", "recip2")},
        "column",
    )
    scaled(
        "fnn_distance_vs_combined",
        "FNN, boscovich: samworth distance weights vs ...",
        {"samworth rank+distance": lambda s: (cfg("fnn", s, dist="samworth"), cfg("fnn", s, "samworth", "samworth"))},
        "none",
    )
    pairs = {}
    for i, a in enumerate(SCALINGS):
        for b in SCALINGS[i + 1 :]:
            pairs[(a, b)] = (cfg("fnn", a, dist="samworth"), cfg("fnn", b, dist="samworth"))
    tables.append(
        Table("fnn_scalings", "FNN, boscovich, samworth distance: row scaling vs column scaling",
              list(SCALINGS[:-1]), list(SCALINGS[1:]), pairs, "row")  # fmt: skip
    )

    frnn_rank = ("constant", "linear", "recip", "samworth")
    scaled(
        "frnn_distance_kernels",
        "FRNN, boscovich: samworth vs linear distance weights, by rank kernel",
        {r: lambda s, r=r: (cfg("frnn", s, r, "samworth"), cfg("frnn", s, r, "linear")) for r in frnn_rank},
        "none",
    )
    scaled(
        "frnn_rank_kernels",
        "FRNN, boscovich, samworth distance: samworth rank weights vs ...",
        {r: lambda s, r=r: (cfg("frnn", s, "samworth", "samworth"), cfg("frnn", s, r, "samworth")) for r in frnn_rank[:3]},
        "column",
    )
    vs_rinf("frnn_scalings", "FRNN, boscovich, samworth rank+distance: scaling vs rinf", "frnn")

    scaled(
        "nn_vs_fnn",
        "NN vs FNN, boscovich, by distance kernel",
        {d: lambda s, d=d: (cfg("nn", s, dist=d), cfg("fnn", s, dist=d)) for d in ("recip", "recip2", "samworth")},
        "none",
    )
    scaled(
        "frnn_vs_nn",
        "FRNN vs NN, boscovich, samworth rank+distance",
        {"FRNN vs NN": lambda s: (cfg("frnn", s, "samworth", "samworth"), cfg("nn", s, "samworth", "samworth"))},
        "none",
    )
    scaled(
        "yager",
        "Yager weights, boscovich",
        {
            "NN yager rank+distance vs samworth rank+distance": lambda s: (
                cfg("nn", s, "yager", "yager"),
                cfg("nn", s, "samworth", "samworth"),
            ),
            "NN yager distance vs samworth distance": lambda s: (cfg("nn", s, dist="yager"), cfg("nn", s, dist="samworth")),
            "FNN samworth distance vs yager distance": lambda s: (cfg("fnn", s, dist="samworth"), cfg("fnn", s, dist="yager")),
            "FRNN samworth rank+distance vs yager rank+distance": lambda s: (
                cfg("frnn", s, "samworth", "samworth"),
                cfg("frnn", s, "yager", "yager"),
            ),
        },
        "none",
    )
    return tables, list(cfg.configs.values())


def cmd_replicate(args) -> int:
    folder = Path(args.directory)
    if not folder.is_dir():
        raise ConfigError(f"{folder} is not a directory")
    paths = sorted(p for p in folder.iterdir() if p.suffix.lower() == ".csv")
    if not paths:
        raise ConfigError(f"no .csv datasets in {folder}")
    if args.seed is None:
        raise ConfigError("a seed is required (--seed)")
    k_grid = tuple(_int("k_grid", v) for v in _split(args.k_grid)) if args.k_grid else None
    out = Path(args.out)
    (out / "tables").mkdir(parents=True, exist_ok=True)
    handler = _attach_log(out)
    try:
        names = {p.stem for p in paths}
        absent = [n for n in BENCHMARK if n not in names]
        if absent:
            log.warning("%d of %d benchmark datasets missing: %s", len(absent), len(BENCHMARK), ", ".join(absent))
        extra = sorted(names - set(BENCHMARK))
        if extra:
            log.info("datasets outside the benchmark list are included: %s", ", ".join(extra))
        cfg = ExperimentConfig(datasets=[str(p) for p in paths], label_column=args.label_column,
                               folds=args.folds, seed=args.seed, k_grid=k_grid, jobs=args.jobs)  # fmt: skip
        cfg.grid = {"replicate": ["full"]}
        datasets, failed = _load_all(cfg.datasets, cfg.label_column)
        tables, configs = replication_tables(k_grid)
        log.info("replication: %d configurations x %d datasets x %d folds (long-running)", len(configs), len(datasets), cfg.folds)
        results, skipped = run_grid(cfg, datasets, configs, out)
        header = provenance(cfg.digest(), cfg.seed)
        n = len({r.dataset for r in results})
        banner = ""
        if n < len(BENCHMARK):
            banner = (
                f"NOTE: reduced power. Only {n} of the {len(BENCHMARK)} benchmark datasets are present; "
                f"the smallest attainable one-sided p-value is 2^-{n} = {2.0**-n:.2g}."
            )
        means = {}
        for r in results:
            means.setdefault(r.config.label(), {})[r.dataset] = r.mean_auroc
        means = {k: {ds: v for ds, v in d.items() if not math.isnan(v)} for k, d in means.items()}
        texts = []
        for table in tables:
            try:
                outcome, _ = evaluate_table(table, means)
            except (MismatchedResults, ValueError) as exc:
                log.error("table %s skipped: %s", table.name, exc)
                skipped.append(table.name)
                continue
            texts.append(write_table(out / "tables", header, table, outcome, banner))
        write_text(out / "tables" / "all_tables.txt", header, "\n".join(texts))
        if banner:
            sys.stdout.write(banner + "\n")
        if not results:
            return EXIT_FAILED
        return EXIT_FAILED if failed or skipped else EXIT_OK
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()


# ---------------------------------------------------------------------------
# entry point


def _shared(p: argparse.ArgumentParser, config: bool = True) -> None:
    if config:
        p.add_argument("--config", help="experiment config file (flat key = value)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key; repeatable")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="seed for fold assignment")
    p.add_argument("--jobs", type=int, help="parallel worker processes (-1 for all cores)")
    p.add_argument("--folds", type=int, help="cross-validation folds (default 5)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kernelnn", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"kernelnn {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="cross-validate a configuration grid")
    _shared(p)
    p.add_argument("--datasets", nargs="+", help=f"bundled names ({', '.join(BUNDLED)}) or CSV paths")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="one-sided Wilcoxon tests between configurations")
    p.add_argument("results", nargs="+", help="aggregate.csv files")
    p.add_argument("--vary", required=True, choices=CONFIG_FIELDS, help="field whose levels are compared")
    p.add_argument("--reference", help="level of --vary every other level is tested against")
    p.add_argument("--columns", choices=CONFIG_FIELDS, help="field laid out as table columns (one Holm family each)")
    p.add_argument("--where", action="append", metavar="FIELD=VALUE", help="keep only matching rows; repeatable")
    p.add_argument("--alternative", choices=("greater", "less"), default="greater",
                   help="greater: reference beats each level; less: each level beats the reference")  # fmt: skip
    p.add_argument("--all-pairs", action="store_true", help="test every level against every later level")
    p.add_argument("--holm", choices=("column", "row", "table", "none"), help="Holm family layout")
    p.add_argument("--name", default="comparison", help="base name of the output files")
    p.add_argument("--out", help="also write the table as text and CSV here")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("kernel-profiles", help="area-normalised kernel curves as plot data")
    _shared(p, config=False)
    p.add_argument("--kernels", default=",".join(PROFILE_KERNELS), help="comma-separated kernel names")
    p.add_argument("--m", default="1,2,5,20", help="comma-separated dimensionalities for samworth")
    p.add_argument("--samples", type=int, default=101)
    p.add_argument("--epsilon", type=float, default=1e-3, help="lower end of the grid for improper kernels")
    p.set_defaults(func=cmd_kernel_profiles, out="profiles")

    p = sub.add_parser("replicate", help="run the full study over a directory of datasets (long-running)")
    _shared(p, config=False)
    p.add_argument("directory", help="directory of CSV datasets named after the benchmark")
    p.add_argument("--label-column", default=-1, type=lambda v: int(v) if v.lstrip("-").isdigit() else v)
    p.add_argument("--k-grid", help="comma-separated k values overriding the default selection grid")
    p.set_defaults(func=cmd_replicate, out="replication", jobs=1, folds=5)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING if args.quiet else (logging.DEBUG if args.verbose else logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    except MismatchedResults as exc:
        log.error("%s", exc)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
