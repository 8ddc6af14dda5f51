"""Per-horizon MAE/RMSE in raw traffic units, plus the data-scarcity sweep
protocol (fixed test set, progressively fewer training timesteps).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import PreparedData, Scaler, SplitSpec, assemble_batch
from .errors import ConfigError
from .model import ModelConfig, ParameterSet, forward


@dataclass
class MetricsReport:
    horizons_min: list[int]
    mae: list[float]
    rmse: list[float]
    n_samples: int
    split_name: str
    scale: Optional[float] = None  # display divisor, e.g. 1e6

    def __post_init__(self):
        for m, r in zip(self.mae, self.rmse):
            assert r >= m >= 0, "RMSE >= MAE >= 0 must hold"

    def rows(self, variant: str = "full", rate: float = 1.0):
        return [
            (variant, rate, h, self.mae[i], self.rmse[i], self.n_samples)
            for i, h in enumerate(self.horizons_min)
        ]

    def format_table(self) -> str:
        scale = self.scale or 1.0
        suffix = f" (x{self.scale:g})" if self.scale else ""
        lines = [f"split={self.split_name} n={self.n_samples}{suffix}",
                 "horizon_min      MAE         RMSE"]
        for i, h in enumerate(self.horizons_min):
            lines.append(f"{h:>11d} {self.mae[i] / scale:>12.4f} "
                         f"{self.rmse[i] / scale:>12.4f}")
        return "\n".join(lines)


def predict_batched(pset: ParameterSet, config: ModelConfig, scaler: Scaler,
                    data: PreparedData, records_by_index: dict,
                    samples: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    """Eval-mode predictions in raw units, [n_samples, T_f]."""
    values_std = scaler.transform(data.series.values)
    station_index = data.station_index
    out = np.zeros((len(samples), config.t_horizon))
    for lo in range(0, len(samples), batch_size):
        part = samples[lo:lo + batch_size]
        batch = assemble_batch(part, records_by_index, values_std, station_index,
                               config.t_history, config.t_horizon,
                               graph_free=config.graph_free)
        out[lo:lo + len(part)] = scaler.inverse(forward(batch, pset, config).data)
    return out


def evaluate(pset: ParameterSet, config: ModelConfig, scaler: Scaler,
             data: PreparedData, records_by_index: dict, samples: np.ndarray,
             split_name: str = "test", batch_size: int = 1024,
             scale: Optional[float] = None) -> MetricsReport:
    """MAE_h and RMSE_h over a sample set, averaging over all (i, t) pairs.

    Predictions are un-standardized before the error computation; the
    squared-error accumulation uses compensated (exact) summation so the
    reduction order cannot perturb the result.
    """
    if len(samples) == 0:
        raise ConfigError("cannot evaluate an empty sample set")
    t_f = config.t_horizon
    abs_parts: list[list[float]] = [[] for _ in range(t_f)]
    sq_parts: list[list[float]] = [[] for _ in range(t_f)]
    values_std = scaler.transform(data.series.values)
    station_index = data.station_index
    raw = data.series.values
    for lo in range(0, len(samples), batch_size):
        part = samples[lo:lo + batch_size]
        batch = assemble_batch(part, records_by_index, values_std, station_index,
                               config.t_history, t_f,
                               graph_free=config.graph_free)
        pred = scaler.inverse(forward(batch, pset, config).data)
        target = raw[part[:, 0][:, None], part[:, 1][:, None] + np.arange(t_f)]
        err = pred - target
        for h in range(t_f):
            abs_parts[h].append(float(np.abs(err[:, h]).sum()))
            sq_parts[h].append(float((err[:, h] ** 2).sum()))
    n = len(samples)
    mae = [math.fsum(abs_parts[h]) / n for h in range(t_f)]
    rmse = [math.sqrt(math.fsum(sq_parts[h]) / n) for h in range(t_f)]
    horizons = [data.series.resolution_min * (h + 1) for h in range(t_f)]
    return MetricsReport(horizons, mae, rmse, n, split_name, scale)


def write_metrics_csv(path, rows: list[tuple]):
    """Rows of (variant, rate, horizon_min, mae, rmse, n)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "rate", "horizon", "mae", "rmse", "n"])
        for variant, rate, horizon, mae, rmse, n in rows:
            writer.writerow([variant, repr(float(rate)), horizon,
                             repr(float(mae)), repr(float(rmse)), n])


@dataclass
class SweepEntry:
    variant: str
    rate: float
    report: MetricsReport
    best_val_mae: float = float("nan")


def scarcity_sweep(data: PreparedData, store, config: ModelConfig, tcfg,
                   base_split: SplitSpec,
                   rates: tuple[float, ...] = (0.05, 0.10, 0.20, 0.40, 1.0),
                   variants: tuple[str, ...] = ("full", "transferred",
                                                "graph-free"),
                   source=None, log=None) -> list[SweepEntry]:
    """Re-split per rate (test fixed, oldest train+val steps dropped), train or
    finetune each variant, and evaluate every model on the shared test set.

    Variants: `full` trains the graph model from scratch, `transferred`
    finetunes the pretrained Checkpoint passed as `source`, and `graph-free`
    trains the temporal-only ablation.
    """
    from dataclasses import replace

    from .training import _records_by_index, finetune, train

    if "transferred" in variants and source is None:
        raise ConfigError("the transferred variant requires a source checkpoint")
    records = _records_by_index(store, data)
    entries: list[SweepEntry] = []
    for rate in rates:
        spec = replace(base_split, scarcity_rate=None if rate >= 1.0 else rate)
        for variant in variants:
            if variant == "full":
                cfg = replace(config, graph_free=False)
                pset, rep, scaler, splits = train(data, records, cfg, tcfg, spec)
            elif variant == "graph-free":
                cfg = replace(config, graph_free=True)
                pset, rep, scaler, splits = train(data, records, cfg, tcfg, spec)
            elif variant == "transferred":
                cfg = replace(source.config, graph_free=False)
                pset, rep, scaler, splits = finetune(source, data, records, tcfg,
                                                     spec, scope="all")
            else:
                raise ConfigError(f"unknown sweep variant: {variant}")
            report = evaluate(pset, cfg, scaler, data, records,
                              splits.samples["test"], split_name="test")
            entries.append(SweepEntry(variant, rate, report, rep.best_val_mae))
            if log is not None:
                log(f"rate {rate:g} variant {variant} "
                    f"test_mae {np.mean(report.mae):.6g}")
    return entries
