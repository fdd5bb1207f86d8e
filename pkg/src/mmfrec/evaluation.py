"""RMSE evaluation and the experiment protocols built on it."""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import TrainConfig, Variant
from .dataset import AttributeCatalog, RatingDataset, SplitSpec, load_attributes, split
from .errors import ConfigError
from .mf import MfModel, mf_fit
from .mmf import MmfModel, mmf_fit

VARIANT_ORDER = (Variant.BASE, Variant.OMEGA, Variant.THETA, Variant.FULL)


def rmse(predictions, truths) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1:
        raise ValueError("predictions and truths must be 1-d and of equal length")
    if p.size == 0:
        raise ValueError("rmse of an empty list")
    d = p - t
    return float(np.sqrt(d @ d / d.size))


@dataclass(frozen=True)
class EvalResult:
    rmse: float
    rmse_clamped: float
    n: int
    n_fallback: int
    clamp: bool = False

    @property
    def value(self) -> float:
        """RMSE under the requested clamp mode."""
        return self.rmse_clamped if self.clamp else self.rmse

    @property
    def all_fallback(self) -> bool:
        return self.n_fallback == self.n

    def __float__(self):
        return self.value


def evaluate(model: MfModel | MmfModel, test: RatingDataset, clamp: bool = False) -> EvalResult:
    """RMSE of ``model`` on ``test``, reported without and with clamping to [1, 5].

    Unknown users or items (and MMF items without usable attributes) are
    predicted as the training mean and counted in ``n_fallback``.
    """
    if not len(test):
        raise ValueError("empty test set")
    preds, fallback = model.predict_dataset(test)
    return EvalResult(
        rmse=rmse(preds, test.ratings),
        rmse_clamped=rmse(np.clip(preds, 1.0, 5.0), test.ratings),
        n=len(test),
        n_fallback=int(fallback.sum()),
        clamp=clamp,
    )


@dataclass
class Cell:
    dataset: str
    model: str
    variant: str | None
    param: str | None
    value: float | int | None
    rmse: float
    rmse_clamped: float
    n_test: int
    n_fallback: int


def _csv_field(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


@dataclass
class ExperimentReport:
    """Result of one protocol run.

    ``timings`` holds wall-clock seconds per cell; it is kept out of
    ``to_dict`` so the serialized report is reproducible byte-for-byte.
    """

    name: str
    config: dict
    cells: list[Cell] = field(default_factory=list)
    traces: dict[str, list[float]] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "config": self.config,
            "cells": [asdict(c) for c in self.cells],
            "traces": self.traces,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["dataset", "model", "variant", "param", "value", "rmse", "rmse_clamped", "n_test", "n_fallback"]
        w.writerow(cols)
        for c in self.cells:
            w.writerow([_csv_field(getattr(c, k)) for k in cols])
        return buf.getvalue()

    def traces_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["run", "epoch", "loss"])
        for name, trace in self.traces.items():
            for e, loss in enumerate(trace, start=1):
                w.writerow([name, e, repr(loss)])
        return buf.getvalue()

    def write(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "report.json").write_text(self.to_json())
        (directory / "report.csv").write_text(self.to_csv())
        (directory / "traces.csv").write_text(self.traces_csv())
        (directory / "timings.json").write_text(json.dumps(self.timings, indent=2, sort_keys=True) + "\n")

    def cell(self, **match) -> Cell:
        found = [c for c in self.cells if all(getattr(c, k) == v for k, v in match.items())]
        if len(found) != 1:
            raise KeyError(f"{len(found)} cells match {match}")
        return found[0]


@dataclass
class _Job:
    label: str
    kind: str
    train: RatingDataset
    test: RatingDataset
    cat: AttributeCatalog | None
    config: TrainConfig
    variant: Variant | None = None
    param: str | None = None
    value: float | int | None = None


def _run_job(job: _Job, dataset_name: str):
    start = time.perf_counter()
    if job.kind == "mf":
        model = mf_fit(job.train, job.config)
    else:
        model = mmf_fit(job.train, job.cat, job.config, job.variant)
    res = evaluate(model, job.test, job.config.clamp_eval)
    cell = Cell(
        dataset=dataset_name,
        model=job.kind,
        variant=None if job.variant is None else job.variant.value,
        param=job.param,
        value=job.value,
        rmse=res.rmse,
        rmse_clamped=res.rmse_clamped,
        n_test=res.n,
        n_fallback=res.n_fallback,
    )
    return cell, list(model.loss_trace), time.perf_counter() - start


def _run_jobs(report: ExperimentReport, jobs: list[_Job], dataset_name: str, n_workers: int):
    # Cells are appended in submission order whatever the completion order.
    if n_workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(lambda j: _run_job(j, dataset_name), jobs))
    else:
        results = [_run_job(j, dataset_name) for j in jobs]
    for job, (cell, trace, seconds) in zip(jobs, results):
        report.cells.append(cell)
        report.traces[job.label] = trace
        report.timings[job.label] = seconds
    return report


def _base_config(name, ds_name, config, spec, **extra):
    return {"protocol": name, "dataset": ds_name, "train": config.to_dict(), "split": spec.to_dict(), **extra}


def run_ablation(
    ds: RatingDataset,
    cat: AttributeCatalog,
    config: TrainConfig,
    spec: SplitSpec | None = None,
    dataset_name: str = "data",
    jobs: int = 1,
) -> ExperimentReport:
    """Train the four weight variants on one random split."""
    spec = spec or SplitSpec("random", 0.2, config.seed)
    train, test = split(ds, spec)
    report = ExperimentReport("ablation", _base_config("ablation", dataset_name, config, spec))
    work = [_Job(f"mmf/{v.value}", "mmf", train, test, cat, config, v) for v in VARIANT_ORDER]
    return _run_jobs(report, work, dataset_name, jobs)


def run_cold_start(
    ds: RatingDataset,
    cat: AttributeCatalog,
    config: TrainConfig,
    spec: SplitSpec | None = None,
    dataset_name: str = "data",
    jobs: int = 1,
) -> ExperimentReport:
    """MF against full MMF on ratings of held-out, never-seen items."""
    spec = spec or SplitSpec("item-cold-start", 0.1, config.seed)
    if spec.kind != "item-cold-start":
        raise ConfigError("cold-start protocol needs an item-cold-start split")
    train, test = split(ds, spec)
    report = ExperimentReport("cold-start", _base_config("cold-start", dataset_name, config, spec))
    work = [
        _Job("mf", "mf", train, test, None, config),
        _Job(f"mmf/{Variant.FULL.value}", "mmf", train, test, cat, config, Variant.FULL),
    ]
    return _run_jobs(report, work, dataset_name, jobs)


def run_sweep(
    ds: RatingDataset,
    cat: AttributeCatalog,
    base_config: TrainConfig,
    axis: str,
    values,
    topic_files: dict | None = None,
    spec: SplitSpec | None = None,
    variant=Variant.FULL,
    dataset_name: str = "data",
    jobs: int = 1,
) -> ExperimentReport:
    """One MMF cell per value of ``axis`` on a shared split.

    ``latent_dim`` varies ``dim``. ``topic_count`` swaps the catalog's
    ``topic`` attributes for the file mapped to each count; a count of 0
    drops topics entirely.
    """
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    if axis not in ("latent_dim", "topic_count"):
        raise ConfigError(f"unknown sweep axis {axis!r}")
    variant = Variant.parse(variant)
    spec = spec or SplitSpec("random", 0.2, base_config.seed)
    topic_files = {int(k): v for k, v in (topic_files or {}).items()}
    if axis == "topic_count":
        missing = [v for v in values if int(v) != 0 and int(v) not in topic_files]
        if missing:
            raise ConfigError(f"no topic attribute file for counts {missing}")
    train, test = split(ds, spec)
    extra = {"axis": axis, "values": values, "variant": variant.value}
    if topic_files:
        extra["topic_files"] = {str(k): str(v) for k, v in sorted(topic_files.items())}
    report = ExperimentReport("sweep", _base_config("sweep", dataset_name, base_config, spec, **extra))
    work = []
    for v in values:
        if axis == "latent_dim":
            cfg = base_config.replace(dim=int(v))
            cell_cat = cat
        else:
            cfg = base_config
            cell_cat = cat.without_types(["topic"])
            if int(v) != 0:
                topics = load_attributes(topic_files[int(v)])
                cell_cat = cell_cat.with_rows(r for r in topics.rows() if r[1] == "topic")
        work.append(_Job(f"mmf/{axis}={v}", "mmf", train, test, cell_cat, cfg, variant, axis, v))
    return _run_jobs(report, work, dataset_name, jobs)
