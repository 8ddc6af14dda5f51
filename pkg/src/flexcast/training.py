"""Training loop: Adam steps on the MAE + L2-norm objective, seeded shuffled
mini-batches with edge dropout, early stopping on validation MAE, and
transfer (finetune a source checkpoint on a target dataset).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .data import (PreparedData, Scaler, SplitResult, SplitSpec,
                   assemble_batch, split, standardize)
from .errors import ConfigError, NumericError, TransferError
from .model import (Checkpoint, ModelConfig, ParameterSet, count_parameters,
                    forward, init_parameters)


@dataclass
class TrainConfig:
    learning_rate: float = 0.009
    weight_decay: float = 1e-5
    batch_size: int = 4096
    edge_dropout: float = 0.05
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0

    def validate(self):
        if (self.learning_rate < 0 or self.weight_decay < 0
                or self.batch_size < 1 or not 0 <= self.edge_dropout < 1
                or self.max_epochs < 0 or self.patience < 1):
            raise ConfigError("invalid training configuration")

    def to_dict(self):
        return {
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "batch_size": self.batch_size,
            "edge_dropout": self.edge_dropout,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "seed": self.seed,
        }


@dataclass
class TrainReport:
    train_losses: list[float] = field(default_factory=list)
    val_maes: list[float] = field(default_factory=list)  # mean over horizons, raw units
    val_maes_per_horizon: list[list[float]] = field(default_factory=list)
    best_epoch: int = -1
    best_val_mae: float = float("inf")
    wall_time_s: float = 0.0
    param_count: int = 0
    n_train_samples: int = 0
    n_val_samples: int = 0

    def to_dict(self, include_timing: bool = False) -> dict:
        """Machine-readable view.  Timing is excluded by default so report
        files are bitwise-reproducible under a fixed seed; wall time goes to
        the line log instead."""
        d = {
            "train_losses": self.train_losses,
            "val_maes": self.val_maes,
            "val_maes_per_horizon": self.val_maes_per_horizon,
            "best_epoch": self.best_epoch,
            "best_val_mae": self.best_val_mae,
            "param_count": self.param_count,
            "n_train_samples": self.n_train_samples,
            "n_val_samples": self.n_val_samples,
        }
        if include_timing:
            d["wall_time_s"] = self.wall_time_s
        return d


class Adam:
    """Adaptive-moment optimizer (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, params: dict[str, Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self):
        self.t += 1
        b1c = 1 - self.beta1**self.t
        b2c = 1 - self.beta2**self.t
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            p.data -= self.lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)


def loss(tape, pred: Tensor, target: np.ndarray, pset: ParameterSet,
         weight_decay: float) -> Tensor:
    """Mean absolute error over all B*T_f entries, plus weight_decay times
    the global L2 norm of the learnable parameters (running stats excluded)."""
    err = ad.mean_all(tape, ad.abs_val(tape, ad.sub(tape, pred, Tensor(target))))
    if weight_decay == 0.0:
        return err
    sq = None
    for p in pset.params.values():
        term = ad.sum_all(tape, ad.mul(tape, p, p))
        sq = term if sq is None else ad.add(tape, sq, term)
    norm = ad.sqrt(tape, sq)
    return ad.add(tape, err, ad.scale_const(tape, norm, weight_decay))


def _epoch_rng(seed: int, tag: int, *parts: int) -> np.random.Generator:
    return np.random.default_rng([seed, tag, *parts])


def _validate(pset, config, scaler, values_std, records, station_index,
              samples, series_raw, batch_size: int) -> list[float]:
    """Per-horizon MAE in raw units over a sample set (eval mode)."""
    t_f = config.t_horizon
    abs_sums = np.zeros(t_f)
    n = 0
    for lo in range(0, len(samples), batch_size):
        part = samples[lo:lo + batch_size]
        batch = assemble_batch(part, records, values_std, station_index,
                               config.t_history, t_f,
                               graph_free=config.graph_free)
        pred = scaler.inverse(forward(batch, pset, config).data)
        raw = series_raw[part[:, 0][:, None], part[:, 1][:, None] + np.arange(t_f)]
        abs_sums += np.abs(pred - raw).sum(axis=0)
        n += len(part)
    return list(abs_sums / n)


def _fit(pset: ParameterSet, data: PreparedData, records_by_index: dict,
         splits: SplitResult, scaler: Scaler, config: ModelConfig,
         tcfg: TrainConfig, log: Optional[Callable[[str], None]] = None,
         limit_train_samples: Optional[int] = None,
         train_loss_goal: Optional[float] = None,
         ) -> tuple[ParameterSet, TrainReport]:
    started = time.perf_counter()
    station_index = data.station_index
    values_std = scaler.transform(data.series.values)
    train_samples = splits.samples["train"]
    if limit_train_samples is not None:
        train_samples = train_samples[:limit_train_samples]
    val_samples = splits.samples["val"]
    if len(train_samples) == 0:
        raise ConfigError("no training samples under the current split")

    report = TrainReport(param_count=count_parameters(pset),
                         n_train_samples=len(train_samples),
                         n_val_samples=len(val_samples))
    optimizer = Adam(pset.params, tcfg.learning_rate)
    best = pset.copy()
    stale = 0

    for epoch in range(tcfg.max_epochs):
        order = _epoch_rng(tcfg.seed, 11, epoch).permutation(len(train_samples))
        epoch_losses = []
        for bi, lo in enumerate(range(0, len(order), tcfg.batch_size)):
            part = train_samples[order[lo:lo + tcfg.batch_size]]
            batch = assemble_batch(
                part, records_by_index, values_std, station_index,
                config.t_history, config.t_horizon,
                dropout_p=tcfg.edge_dropout, train=True,
                rng=_epoch_rng(tcfg.seed, 13, epoch, bi),
                graph_free=config.graph_free,
            )
            tape = Tape()
            pset.zero_grads()
            pred = forward(batch, pset, config, tape, training=True)
            step_loss = loss(tape, pred, batch.targets, pset, tcfg.weight_decay)
            if not np.isfinite(step_loss.data):
                raise NumericError(
                    f"training diverged: non-finite loss at epoch {epoch}, "
                    f"batch {bi}"
                )
            ad.backward(step_loss, tape)
            optimizer.step()
            epoch_losses.append(float(step_loss.data))

        train_loss = float(np.mean(epoch_losses))
        report.train_losses.append(train_loss)

        if len(val_samples) > 0:
            per_h = _validate(pset, config, scaler, values_std, records_by_index,
                              station_index, val_samples, data.series.values,
                              tcfg.batch_size)
            val_mae = float(np.mean(per_h))
        else:
            per_h = []
            val_mae = train_loss
        report.val_maes.append(val_mae)
        report.val_maes_per_horizon.append(per_h)

        if log is not None:
            hs = " ".join(f"{m:.6g}" for m in per_h)
            log(f"epoch {epoch} train_loss {train_loss:.6g} "
                f"val_mae {val_mae:.6g} [{hs}] "
                f"elapsed_s {time.perf_counter() - started:.1f}")

        if val_mae < report.best_val_mae:
            report.best_val_mae = val_mae
            report.best_epoch = epoch
            best = pset.copy()
            stale = 0
        else:
            stale += 1
            if stale >= tcfg.patience:
                break
        if train_loss_goal is not None and train_loss <= train_loss_goal:
            best = pset.copy()
            report.best_epoch = epoch
            break

    if report.best_epoch < 0:  # max_epochs == 0
        best = pset.copy()
    report.wall_time_s = time.perf_counter() - started
    return best, report


def train(data: PreparedData, store, config: ModelConfig, tcfg: TrainConfig,
          split_spec: Optional[SplitSpec] = None,
          log: Optional[Callable[[str], None]] = None,
          limit_train_samples: Optional[int] = None,
          train_loss_goal: Optional[float] = None,
          ) -> tuple[ParameterSet, TrainReport, Scaler, SplitResult]:
    """Train from scratch; returns the best-validation parameters."""
    config.validate()
    tcfg.validate()
    spec = split_spec or data.default_split
    splits = split(data.series, spec, config.t_history, config.t_horizon)
    scaler = standardize(data.series, splits)
    records = _records_by_index(store, data)
    pset = init_parameters(config, tcfg.seed)
    best, report = _fit(pset, data, records, splits, scaler, config, tcfg,
                        log=log, limit_train_samples=limit_train_samples,
                        train_loss_goal=train_loss_goal)
    return best, report, scaler, splits


TRANSFER_SCOPES = ("all", "tcn-eps")


def transfer_parameters(source: ParameterSet, config: ModelConfig, scope: str,
                        seed: int) -> ParameterSet:
    """Initialize a target parameter set from a source one.

    Scope `all` copies every parameter and running stat.  Scope `tcn-eps`
    copies strictly the TCN filters and the per-layer eps scalars; ReadOut
    and batch-norm start fresh from the seeded initializer.
    """
    if scope not in TRANSFER_SCOPES:
        raise ConfigError(f"unknown transfer scope: {scope}")
    target = init_parameters(config, seed)
    if scope == "all":
        for name in target.params:
            target.params[name].data = source.params[name].data.copy()
        for name in target.bn_states:
            target.bn_states[name] = source.bn_states[name].copy()
    else:
        for name in target.params:
            if ".conv" in name or name.endswith(".eps"):
                target.params[name].data = source.params[name].data.copy()
    return target


def check_transfer_compat(source: ModelConfig, target: ModelConfig):
    mismatched = [
        f"{name}: source {getattr(source, name)} != target {getattr(target, name)}"
        for name in ("t_history", "t_horizon", "channels", "layers",
                     "kernel_sizes", "graph_free")
        if getattr(source, name) != getattr(target, name)
    ]
    if mismatched:
        raise TransferError("incompatible checkpoint: " + "; ".join(mismatched))


def finetune(source: Checkpoint, data: PreparedData, store, tcfg: TrainConfig,
             split_spec: Optional[SplitSpec] = None, scope: str = "all",
             config: Optional[ModelConfig] = None,
             log: Optional[Callable[[str], None]] = None,
             limit_train_samples: Optional[int] = None,
             train_loss_goal: Optional[float] = None,
             ) -> tuple[ParameterSet, TrainReport, Scaler, SplitResult]:
    """Continue training from a source checkpoint on a target dataset."""
    config = config or source.config
    config.validate()
    tcfg.validate()
    check_transfer_compat(source.config, config)
    spec = split_spec or data.default_split
    splits = split(data.series, spec, config.t_history, config.t_horizon)
    scaler = standardize(data.series, splits)
    records = _records_by_index(store, data)
    pset = transfer_parameters(source.pset, config, scope, tcfg.seed)
    if tcfg.max_epochs == 0:
        report = TrainReport(param_count=count_parameters(pset))
        return pset, report, scaler, splits
    best, report = _fit(pset, data, records, splits, scaler, config, tcfg,
                        log=log, limit_train_samples=limit_train_samples,
                        train_loss_goal=train_loss_goal)
    return best, report, scaler, splits


def _records_by_index(store, data: PreparedData) -> dict:
    """station index -> SubgraphRecord, materialized once (store is hot
    during training).  Accepts a SubgraphStore, a dict keyed by station id,
    or an already index-keyed dict."""
    if store is None:
        return {}
    if isinstance(store, dict):
        if not store or isinstance(next(iter(store)), int):
            return store
        idx = data.station_index
        return {idx[sid]: rec for sid, rec in store.items()}
    idx = data.station_index
    return {idx[sid]: rec for sid, rec in store.load_all().items()}
