"""Command-line entry points.

``dips synth`` reads a CSV, runs one synthesizer under a stated budget, and
writes the released set(s) plus a budget audit.  ``dips bench`` runs one of
the benchmark studies from a JSON config and writes metric CSVs.

Exit codes: 0 success, 2 configuration error, 3 privacy-budget violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .budget import BudgetExhausted, PrivacyBudget, PrivacyLedger
from .dataset import CategoricalColumn, ContinuousColumn, TabularDataset
from .harness import StudyConfig, report, run_study
from .hist_synth import (
    BinnedAxis,
    CategoricalAxis,
    GridSpec,
    bin_count_from_width,
    bin_width_scott,
    build_histogram,
    laplace_sanitizer_crosstab,
    perturb_histogram,
    sample_from_histogram,
    smooth_histogram,
)
from .param_synth import (
    BernoulliModel,
    NormalModel,
    bbmr_synthesizer,
    md_synthesizer,
    modips_release,
)
from .randvar import RngStream

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3

SYNTH_METHODS = ("laplace", "pert-hist", "smooth-hist", "md", "bbmr",
                 "modips-bernoulli", "modips-normal")


class ConfigError(ValueError):
    pass


def _load_csv(path: str, schema_path: str | None) -> TabularDataset:
    """Load a CSV, inferring a schema unless one is supplied.

    Inference treats a column as categorical when every value is a
    non-negative integer below 20; continuous bounds default to the
    observed min/max (state explicit bounds in a schema file for a
    data-independent domain)."""
    import csv as _csv

    with open(path, newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader)
        raw = {name: [] for name in header}
        for row in reader:
            if len(row) != len(header):
                raise ConfigError(f"ragged CSV row: {row}")
            for name, v in zip(header, row):
                raw[name].append(v)
    schema = {}
    if schema_path:
        with open(schema_path) as fh:
            schema = json.load(fh)
    columns = []
    data = {}
    for name in header:
        values = np.array([float(v) for v in raw[name]])
        spec = schema.get(name)
        if spec is not None:
            if spec["type"] == "categorical":
                columns.append(CategoricalColumn(
                    name, tuple(range(int(spec["levels"])))))
                data[name] = values.astype(np.int64)
            else:
                columns.append(ContinuousColumn(name, float(spec["lo"]),
                                                float(spec["hi"])))
                data[name] = values
            continue
        ints = values.astype(np.int64)
        if np.all(ints == values) and ints.min() >= 0 and ints.max() < 20:
            columns.append(CategoricalColumn(
                name, tuple(range(int(ints.max()) + 1))))
            data[name] = ints
        else:
            columns.append(ContinuousColumn(name, float(values.min()),
                                            float(values.max())))
            data[name] = values
    if not columns:
        raise ConfigError("input CSV has no columns")
    return TabularDataset(columns, data)


def _categorical_names(ds: TabularDataset) -> list[str]:
    return [c.name for c in ds.columns if isinstance(c, CategoricalColumn)]


def _histogram_grid(ds: TabularDataset):
    axes = []
    names = []
    for c in ds.columns:
        names.append(c.name)
        if isinstance(c, CategoricalColumn):
            axes.append(CategoricalAxis(len(c.levels)))
        else:
            x = ds.column(c.name)
            sd = float(x.std(ddof=1)) if len(x) > 1 else 0.0
            bins = (bin_count_from_width(c.lo, c.hi, bin_width_scott(sd, len(x)))
                    if sd > 0 else 1)
            axes.append(BinnedAxis(c.lo, c.hi, bins))
    return GridSpec(tuple(axes)), names


def _grid_to_dataset(ds, names, draw):
    data = {}
    for j, name in enumerate(names):
        data[name] = draw[f"axis{j}"]
    return TabularDataset(ds.columns, data, validate=False)


def _run_synth(args) -> int:
    ds = _load_csv(args.input, args.schema)
    rng = RngStream(args.seed)
    ledger = PrivacyLedger(PrivacyBudget(args.eps))
    m = args.m
    sets: list[TabularDataset] = []
    method = args.method
    if method == "laplace":
        cat = _categorical_names(ds)
        if len(cat) != len(ds.columns):
            raise ConfigError("laplace sanitizer needs all-categorical data")
        for j in range(m):
            share = Fraction(args.eps) / m
            _, codes = laplace_sanitizer_crosstab(
                rng.substream(j), ds, cat, float(share), ledger=ledger,
                label=f"laplace-set{j}", charge_eps=share)
            sets.append(TabularDataset(ds.columns, codes, validate=False))
    elif method in ("pert-hist", "smooth-hist"):
        grid, names = _histogram_grid(ds)
        hist = build_histogram(ds, grid, column_names=names)
        if method == "smooth-hist":
            density = smooth_histogram(hist, args.eps, ledger=ledger)
            sets.append(_grid_to_dataset(
                ds, names, sample_from_histogram(rng, grid, density, ds.n)))
        else:
            for j in range(m):
                share = Fraction(args.eps) / m
                pert = perturb_histogram(rng.substream(j), hist, float(share),
                                         ledger=ledger, label=f"pert-set{j}",
                                         charge_eps=share)
                sets.append(_grid_to_dataset(
                    ds, names, sample_from_histogram(
                        rng.substream(j, 1), grid, pert.density(), ds.n)))
    elif method == "md":
        cat = _categorical_names(ds)
        if len(cat) != len(ds.columns):
            raise ConfigError("md synthesizer needs all-categorical data")
        grid, names = _histogram_grid(ds)
        hist = build_histogram(ds, grid, column_names=names)
        release = md_synthesizer(rng, hist.counts.astype(int), args.eps, m,
                                 ledger=ledger)
        for s in release.sets:
            multi = np.unravel_index(s.column("cell"), grid.shape)
            sets.append(TabularDataset(
                ds.columns,
                {name: codes.astype(np.int64)
                 for name, codes in zip(names, multi)},
                validate=False))
    elif method == "bbmr":
        if len(ds.columns) != 1 or not isinstance(ds.columns[0],
                                                  CategoricalColumn) \
                or len(ds.columns[0].levels) != 2:
            raise ConfigError("bbmr needs a single binary column")
        name = ds.columns[0].name
        release = bbmr_synthesizer(rng, int(ds.column(name).sum()), ds.n,
                                   args.eps, ledger=ledger)
        sets.append(TabularDataset(ds.columns,
                                   {name: release.sets[0].column("x")},
                                   validate=False))
    elif method == "modips-bernoulli":
        if len(ds.columns) != 1 or not isinstance(ds.columns[0],
                                                  CategoricalColumn):
            raise ConfigError("modips-bernoulli needs a single binary column")
        name = ds.columns[0].name
        wrapped = TabularDataset([CategoricalColumn("x", (0, 1))],
                                 {"x": ds.column(name)})
        release = modips_release(rng, wrapped, BernoulliModel(), args.eps, m,
                                 ledger=ledger)
        for s in release.sets:
            sets.append(TabularDataset(ds.columns, {name: s.column("x")},
                                       validate=False))
    elif method == "modips-normal":
        if len(ds.columns) != 1 or not isinstance(ds.columns[0],
                                                  ContinuousColumn):
            raise ConfigError("modips-normal needs a single continuous column")
        col = ds.columns[0]
        wrapped = TabularDataset([ContinuousColumn("x", col.lo, col.hi)],
                                 {"x": ds.column(col.name)})
        release = modips_release(rng, wrapped, NormalModel(col.lo, col.hi),
                                 args.eps, m, ledger=ledger)
        for s in release.sets:
            sets.append(TabularDataset(ds.columns,
                                       {col.name: s.column("x")},
                                       validate=False))
    else:
        raise ConfigError(f"unknown method {method!r}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for j, s in enumerate(sets, start=1):
        s.to_csv(out / f"synth_{j}.csv")
    with open(out / "ledger.json", "w") as fh:
        fh.write(ledger.to_json())
    print(f"wrote {len(sets)} synthetic set(s) to {out}")
    return EXIT_OK


def _run_bench(args) -> int:
    cfg = {}
    if args.config:
        with open(args.config) as fh:
            cfg = json.load(fh)
    cfg["study"] = args.study
    if args.reps is not None:
        cfg["reps"] = args.reps
    cfg.setdefault("n", 100)
    try:
        config = StudyConfig(**cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    rows = run_study(config)
    report(rows, args.out, config)
    print(f"wrote {len(rows)} metric rows to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dips",
        description="differentially private data synthesis")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="synthesize one dataset")
    synth.add_argument("--input", required=True, help="input CSV")
    synth.add_argument("--method", required=True, choices=SYNTH_METHODS)
    synth.add_argument("--eps", required=True, type=float,
                       help="total privacy budget")
    synth.add_argument("--m", type=int, default=5,
                       help="number of released sets")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True, help="output directory")
    synth.add_argument("--schema", default=None,
                       help="optional JSON column schema")

    bench = sub.add_parser("bench", help="run a benchmark study")
    bench.add_argument("--study", required=True,
                       choices=("sim1", "sim2", "sim3", "sim4"))
    bench.add_argument("--config", default=None,
                       help="JSON config mirroring StudyConfig")
    bench.add_argument("--reps", type=int, default=None)
    bench.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "synth":
            if args.eps <= 0 or args.m < 1:
                raise ConfigError("need eps > 0 and m >= 1")
            return _run_synth(args)
        return _run_bench(args)
    except BudgetExhausted as exc:
        print(f"budget violation: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ConfigError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
