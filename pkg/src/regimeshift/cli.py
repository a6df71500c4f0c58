"""Command-line runs: generate, train, segment, forecast, classify and eval.

Every command reads an optional JSON run config (``--config``), applies ``--seed``
and ``--out`` overrides, and writes plain CSV/JSON outputs. Several seeds
(``--seed 0,1,2`` or ``--seed 0-9``) run as independent jobs, each writing to
``<out>/seed-<n>/``; ``--jobs`` runs them in parallel processes.

Exit codes: 0 success, 1 usage/config/input error, 2 runtime or numerical error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .adaptive import RegimeBank
from .data import (GENERATORS, CsvSchema, DataFormatError, GeneratorConfig, SequenceDataset,
                   generate, load_csv, save_csv)
from .inference import map_segmentation
from .metrics import MetricReport, aligned_accuracy, ari, forecast_scores, nmi, timeline_accuracy
from .pipeline import _architecture, prepare, run_online, run_segmentation, segment, snapshot_stream
from .probability import ContractError
from .training import TrainerConfig, TrainingAborted, train_stream

log = logging.getLogger("regimeshift")

TASKS = ("segment", "forecast", "classify")


class UsageError(Exception):
    """Bad flags, config or input files (exit code 1)."""


@dataclass
class RunConfig:
    """One run: a task, exactly one data source, trainer settings, output directory and seed."""

    task: str = "segment"
    generator: str | None = None
    generator_config: dict = field(default_factory=dict)
    csv: str | None = None
    schema: dict = field(default_factory=dict)
    trainer: dict = field(default_factory=dict)
    out: str = "run"
    seed: int = 0

    def __post_init__(self):
        if self.task not in TASKS:
            raise UsageError(f"unknown task '{self.task}'; valid tasks: {', '.join(TASKS)}")
        if (self.generator is None) == (self.csv is None):
            raise UsageError("exactly one data source required: 'generator' or 'csv'")
        if self.generator is not None and self.generator not in GENERATORS:
            raise UsageError(f"unknown generator '{self.generator}'; valid names: "
                             f"{', '.join(sorted(GENERATORS))}")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown run config fields: {', '.join(sorted(unknown))}")
        return cls(**d)

    def trainer_config(self) -> TrainerConfig:
        try:
            return TrainerConfig.from_dict({**self.trainer, "seed": self.seed})
        except (ContractError, TypeError) as exc:
            raise UsageError(f"trainer config: {exc}") from None

    def dataset(self) -> SequenceDataset:
        if self.generator is not None:
            gc = {"seed": self.seed, **self.generator_config}
            try:
                return generate(self.generator, GeneratorConfig(**gc))
            except (ContractError, TypeError) as exc:
                raise UsageError(f"generator config: {exc}") from None
        return read_dataset(self.csv, CsvSchema(**self.schema))

    def to_dict(self) -> dict:
        return asdict(self)


def read_dataset(path, schema: CsvSchema | None = None) -> SequenceDataset:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"{path}: no such file")
    try:
        return load_csv(path, schema)
    except DataFormatError as exc:
        raise UsageError(str(exc)) from None


def parse_seeds(text: str) -> list[int]:
    """'3' -> [3]; '0,2,5' -> [0, 2, 5]; '0-3' -> [0, 1, 2, 3]."""
    seeds = []
    try:
        for part in text.split(","):
            if "-" in part.strip()[1:]:
                lo, hi = part.rsplit("-", 1)
                seeds.extend(range(int(lo), int(hi) + 1))
            else:
                seeds.append(int(part))
    except ValueError:
        raise UsageError(f"invalid seed list '{text}'") from None
    if not seeds:
        raise UsageError("empty seed list")
    return seeds


# -- writers -------------------------------------------------------------------------

def _num(x) -> str:
    return repr(float(x))


def write_csv(path: Path, header: list[str], rows) -> Path:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def write_json(path: Path, doc) -> Path:
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def _outdir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def write_segmentation(path: Path, post, offset: int) -> Path:
    labels = map_segmentation(post)
    K = post.marginals.shape[1]
    rows = ([offset + t, int(labels[t])] + [_num(p) for p in post.marginals[t]]
            for t in range(len(labels)))
    return write_csv(path, ["t", "regime"] + [f"p{k}" for k in range(K)], rows)


# -- commands ------------------------------------------------------------------------

def cmd_generate(rc: RunConfig) -> list[Path]:
    if rc.generator is None:
        raise UsageError("generate needs a 'generator' data source")
    out = _outdir(rc.out)
    path = save_csv(rc.dataset(), out / "data.csv")
    print(path)
    return [path]


def _write_reports(out: Path, reports) -> Path:
    path = out / "report.jsonl"
    with path.open("w", encoding="utf-8") as fh:
        for rep in reports:
            fh.write(rep.to_json() + "\n")
    return path


def _save_bank(out: Path, bank: RegimeBank, config: TrainerConfig) -> Path:
    bank.meta["trainer"] = config.to_dict()
    path = out / "bank.json"
    path.write_text(bank.to_json() + "\n", encoding="utf-8")
    return path


def cmd_train(rc: RunConfig) -> list[Path]:
    """Stream-train on the data; writes bank.json and report.jsonl."""
    ds = rc.dataset()
    config = rc.trainer_config()
    out = _outdir(rc.out)
    task = rc.task
    _, chunks, rec = prepare(ds, task, config)
    reports = []
    try:
        bank, reports = train_stream(chunks, config, arch=_architecture(ds, task, config),
                                     on_chunk=reports.append)
    except TrainingAborted:
        _write_reports(out, reports)
        raise
    bank.meta["normalization"] = rec.to_dict()
    return [_save_bank(out, bank, config), _write_reports(out, reports)]


def cmd_segment(rc: RunConfig, snapshot: str | None = None) -> list[Path]:
    """Segment the data; trains first unless a snapshot is given.

    Writes segmentation.csv and, when the data carries true regimes, metrics.json.
    """
    ds = rc.dataset()
    out = _outdir(rc.out)
    written = []
    if snapshot is not None:
        path = Path(snapshot)
        if not path.exists():
            raise UsageError(f"{path}: no such file")
        try:
            bank = RegimeBank.from_json(path.read_text(encoding="utf-8"))
        except (ValueError, KeyError) as exc:
            raise UsageError(f"{path}: not a bank snapshot ({exc})") from None
        stream = snapshot_stream(bank, ds)
        post = segment(bank, stream)
        metrics = None
        if stream.regimes is not None:
            metrics = MetricReport.segmentation(map_segmentation(post), stream.regimes, seed=rc.seed)
    else:
        config = rc.trainer_config()
        reports = []
        try:
            result = run_segmentation(ds, config, on_chunk=reports.append)
        except TrainingAborted:
            _write_reports(out, reports)
            raise
        stream, post, metrics = result.stream, result.posterior, result.metrics
        written += [_save_bank(out, result.bank, config), _write_reports(out, result.reports)]
    written.append(write_segmentation(out / "segmentation.csv", post, stream.offset))
    if metrics is not None:
        written.append(write_json(out / "metrics.json", metrics.to_dict()))
    return written


def cmd_online(rc: RunConfig, task: str) -> list[Path]:
    """Test-then-train forecasting or classification with per-step prediction files."""
    ds = rc.dataset()
    config = rc.trainer_config()
    out = _outdir(rc.out)
    reports = []
    try:
        result = run_online(ds, task, config, on_chunk=reports.append)
    except TrainingAborted:
        _write_reports(out, reports)
        raise
    offset = result.stream.offset
    pred, target = result.predictions, result.extra["targets"]
    if task == "forecast":
        names = list(ds.feature_names)
        rows = ([offset + t] + [_num(v) for v in pred[t]] + [_num(v) for v in target[t]]
                for t in range(len(pred)))
        files = [write_csv(out / "forecast.csv",
                           ["t"] + [f"pred_{n}" for n in names] + [f"true_{n}" for n in names], rows)]
    else:
        rows = ([offset + t, int(pred[t]), int(target[t])] for t in range(len(pred)))
        files = [write_csv(out / "predictions.csv", ["t", "pred", "label"], rows)]
        window = min(config.chunk_length, len(pred))
        tl = result.metrics.timeline or []
        files.append(write_csv(out / "timeline.csv", ["t", "accuracy"],
                               ([offset + window - 1 + i, _num(v)] for i, v in enumerate(tl))))
    metrics = result.metrics.to_dict()
    metrics.pop("timeline", None)
    files.append(write_json(out / "metrics.json", metrics))
    files += [_save_bank(out, result.bank, config), _write_reports(out, result.reports)]
    return files


def _read_table(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise UsageError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise UsageError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
    return header, rows[1:]


def _column(path, header, rows, names, kind):
    for name in names:
        if name in header:
            i = header.index(name)
            out = []
            for lineno, row in enumerate(rows, start=2):
                try:
                    out.append(kind(row[i]))
                except ValueError:
                    raise UsageError(f"{path}:{lineno}: cannot parse '{row[i]}' in column '{name}'") from None
            return np.array(out)
    raise UsageError(f"{path}: no column named {' or '.join(repr(n) for n in names)}")


def _values(path, header, rows, prefix):
    """Numeric value columns: those named ``<prefix>*`` if any, else every non-bookkeeping column."""
    cols = [i for i, h in enumerate(header) if h.startswith(prefix)]
    if not cols:
        skip = {"t", "regime", "label", "pred", "truth"}
        cols = [i for i, h in enumerate(header)
                if h not in skip and not h.startswith(("pred_", "true_"))
                and not (h.startswith("p") and h[1:].isdigit())]
    if not cols:
        raise UsageError(f"{path}: no value columns")
    out = np.empty((len(rows), len(cols)))
    for lineno, row in enumerate(rows, start=2):
        for j, i in enumerate(cols):
            try:
                out[lineno - 2, j] = float(row[i])
            except ValueError:
                raise UsageError(f"{path}:{lineno}: cannot parse '{row[i]}' in column '{header[i]}'") from None
    return out


def cmd_eval(task: str, pred_path: str, truth_path: str, window: int = 50) -> MetricReport:
    """Metrics of a prediction file against a truth file, printed as JSON."""
    ph, prow = _read_table(pred_path)
    th, trow = _read_table(truth_path)
    if len(prow) != len(trow):
        raise UsageError(f"length mismatch: {pred_path} has {len(prow)} rows, "
                         f"{truth_path} has {len(trow)} rows")
    if task == "segment":
        pred = _column(pred_path, ph, prow, ("regime",), int)
        truth = _column(truth_path, th, trow, ("regime",), int)
        report = MetricReport(accuracy=aligned_accuracy(pred, truth), nmi=nmi(pred, truth),
                              ari=ari(pred, truth) if len(pred) >= 2 else None)
    elif task == "forecast":
        pred, truth = _values(pred_path, ph, prow, "pred_"), _values(truth_path, th, trow, "true_")
        if pred.shape != truth.shape:
            raise UsageError(f"column mismatch: {pred_path} has {pred.shape[1]} value columns, "
                             f"{truth_path} has {truth.shape[1]}")
        rmse, mae = forecast_scores(pred, truth)
        report = MetricReport(rmse=rmse, mae=mae)
    elif task == "classify":
        pred = _column(pred_path, ph, prow, ("pred", "label"), int)
        truth = _column(truth_path, th, trow, ("label",), int)
        tl = timeline_accuracy(pred, truth, min(window, len(pred)))
        report = MetricReport(accuracy=float(np.mean(pred == truth)), timeline=tl.tolist())
    else:
        raise UsageError(f"unknown task '{task}'; valid tasks: {', '.join(TASKS)}")
    print(report.to_json())
    return report


# -- argument handling -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--seed", help="seed, comma list or range such as 0-9 (default: config seed)")
    common.add_argument("--out", help="output directory (default: config out)")
    common.add_argument("--jobs", type=int, default=1, help="parallel processes across seeds")
    common.add_argument("-v", "--verbose", action="store_true")
    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--generator", choices=sorted(GENERATORS), help="synthetic data source")
    data.add_argument("--csv", help="CSV data source")
    data.add_argument("-T", type=int, help="generator length")

    p = argparse.ArgumentParser(prog="regimeshift", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common, data], help="write a synthetic dataset CSV")
    sub.add_parser("train", parents=[common, data], help="stream-train and save the regime bank")
    s = sub.add_parser("segment", parents=[common, data], help="segment a series into regimes")
    s.add_argument("--snapshot", help="bank.json from a previous train run (skips training)")
    sub.add_parser("forecast", parents=[common, data], help="test-then-train forecasting")
    sub.add_parser("classify", parents=[common, data], help="test-then-train classification")
    e = sub.add_parser("eval", parents=[common], help="score a prediction file against truth")
    e.add_argument("--task", choices=TASKS, required=True)
    e.add_argument("--pred", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--window", type=int, default=50, help="timeline window for classification")
    return p


def _run_config(args) -> RunConfig:
    doc = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"{path}: no such file")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(doc, dict):
            raise UsageError(f"{path}: run config must be a JSON object")
    if args.command in TASKS:
        doc["task"] = args.command
    if getattr(args, "generator", None):
        doc["generator"], doc["csv"] = args.generator, None
    if getattr(args, "csv", None):
        doc["csv"], doc["generator"] = args.csv, None
    if getattr(args, "T", None) is not None:
        doc["generator_config"] = {**doc.get("generator_config", {}), "T": args.T}
    if args.out:
        doc["out"] = args.out
    try:
        return RunConfig.from_dict(doc)
    except TypeError as exc:
        raise UsageError(f"run config: {exc}") from None


def _dispatch(command: str, rc: RunConfig, args) -> list[Path]:
    if command == "generate":
        return cmd_generate(rc)
    if command == "train":
        return cmd_train(rc)
    if command == "segment":
        return cmd_segment(rc, args.snapshot)
    return cmd_online(rc, command)


def _job(command: str, rc_doc: dict, snapshot: str | None) -> list[str]:
    args = argparse.Namespace(snapshot=snapshot)
    return [str(p) for p in _dispatch(command, RunConfig.from_dict(rc_doc), args)]


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "eval":
            cmd_eval(args.task, args.pred, args.truth, args.window)
            return 0
        rc = _run_config(args)
        seeds = parse_seeds(args.seed) if args.seed is not None else [rc.seed]
        if args.jobs < 1:
            raise UsageError("--jobs must be at least 1")
        if len(seeds) == 1:
            rc.seed = seeds[0]
            _dispatch(args.command, rc, args)
            return 0
        docs = []
        for s in seeds:
            doc = rc.to_dict()
            doc.update(seed=s, out=str(Path(rc.out) / f"seed-{s}"))
            RunConfig.from_dict(doc).trainer_config()
            docs.append(doc)
        snapshot = getattr(args, "snapshot", None)
        if args.jobs == 1:
            for doc in docs:
                _job(args.command, doc, snapshot)
        else:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                for f in [pool.submit(_job, args.command, doc, snapshot) for doc in docs]:
                    f.result()
        return 0
    except (UsageError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TrainingAborted, ad.NonFiniteError, FloatingPointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
