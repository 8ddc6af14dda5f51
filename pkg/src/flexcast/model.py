"""The forecasting network: ReadIn TCN -> stacked (GraphAgg + TCN) blocks with
residuals and batch norm -> graph pooling -> two-step ReadOut.

The temporal module is an inception-style dilated causal convolution: one
branch per kernel size, each producing C/|kernels| channels, concatenated
back to C.  The graph module is a GIN-style sum over neighbors with a
learned self-weight (1 + eps) per layer; neighbor features are summed
unweighted (proximity weights drive graph construction only).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from . import container
from .autodiff import BatchNormState, Tape, Tensor
from .data import SampleBatch, Scaler
from .errors import ConfigError, FormatError, NumericError

POOLING_MODES = ("target", "sum", "max", "mean")


@dataclass
class ModelConfig:
    t_history: int = 12
    t_horizon: int = 3
    channels: int = 64
    layers: int = 2
    kernel_sizes: tuple[int, ...] = (1, 3)
    dilation_base: int = 1
    pooling: str = "target"
    graph_free: bool = False

    def validate(self):
        if self.channels % len(self.kernel_sizes) != 0:
            raise ConfigError(
                f"channels ({self.channels}) must be divisible by the number "
                f"of kernel sizes ({len(self.kernel_sizes)})"
            )
        if self.t_history < max(self.kernel_sizes):
            raise ConfigError("t_history must be >= the largest kernel size")
        if self.layers < 1:
            raise ConfigError("need at least one spatiotemporal layer")
        if self.pooling not in POOLING_MODES:
            raise ConfigError(f"unknown pooling mode: {self.pooling}")
        if self.dilation_base < 1:
            raise ConfigError("dilation base must be >= 1")

    def to_dict(self):
        return {
            "t_history": self.t_history,
            "t_horizon": self.t_horizon,
            "channels": self.channels,
            "layers": self.layers,
            "kernel_sizes": list(self.kernel_sizes),
            "dilation_base": self.dilation_base,
            "pooling": self.pooling,
            "graph_free": self.graph_free,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            t_history=d["t_history"],
            t_horizon=d["t_horizon"],
            channels=d["channels"],
            layers=d["layers"],
            kernel_sizes=tuple(d["kernel_sizes"]),
            dilation_base=d["dilation_base"],
            pooling=d["pooling"],
            graph_free=d["graph_free"],
        )


class ParameterSet:
    """Named learnable tensors plus batch-norm running state."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.bn_states: dict[str, BatchNormState] = {}

    def copy(self) -> "ParameterSet":
        dup = ParameterSet()
        for name, p in self.params.items():
            dup.params[name] = Tensor(p.data.copy())
        for name, s in self.bn_states.items():
            dup.bn_states[name] = s.copy()
        return dup

    def zero_grads(self):
        for p in self.params.values():
            p.zero_grad()

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def allclose(self, other: "ParameterSet") -> bool:
        return set(self.params) == set(other.params) and all(
            np.array_equal(self.params[n].data, other.params[n].data)
            for n in self.params
        )


def count_parameters(pset: ParameterSet) -> int:
    """Learnable entries only; batch-norm running stats are excluded."""
    return sum(p.size for p in pset.params.values())


def closed_form_count(config: ModelConfig) -> int:
    """Parameter count as a formula over the configuration:

    readin convs   sum_K K * 1 * (C/|K|)
    readin bn      2C
    per layer      eps (1, unless graph-free) + sum_K K * C * (C/|K|) + 2C
    readout        T_h*T_f + T_f + C + T_f
    """
    c = config.channels
    branch = c // len(config.kernel_sizes)
    ksum = sum(config.kernel_sizes)
    readin = ksum * 1 * branch + 2 * c
    eps = 0 if config.graph_free else 1
    per_layer = eps + ksum * c * branch + 2 * c
    readout = (config.t_history * config.t_horizon + config.t_horizon
               + c + config.t_horizon)
    return readin + config.layers * per_layer + readout


def init_parameters(config: ModelConfig, seed: int) -> ParameterSet:
    """Seeded uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] filters; zero biases;
    unit gamma / zero beta batch norm; eps starts at 0."""
    config.validate()
    rng = np.random.default_rng([seed, 3])
    pset = ParameterSet()
    c = config.channels
    branch = c // len(config.kernel_sizes)

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return Tensor(rng.uniform(-bound, bound, size=shape))

    for k in config.kernel_sizes:
        pset.params[f"readin.conv{k}"] = uniform((k, 1, branch), k)
    pset.params["readin.bn.gamma"] = Tensor(np.ones(c))
    pset.params["readin.bn.beta"] = Tensor(np.zeros(c))
    pset.bn_states["readin.bn"] = BatchNormState(c)

    for layer in range(config.layers):
        if not config.graph_free:
            pset.params[f"block{layer}.eps"] = Tensor(np.zeros(()))
        for k in config.kernel_sizes:
            pset.params[f"block{layer}.conv{k}"] = uniform((k, c, branch), k * c)
        pset.params[f"block{layer}.bn.gamma"] = Tensor(np.ones(c))
        pset.params[f"block{layer}.bn.beta"] = Tensor(np.zeros(c))
        pset.bn_states[f"block{layer}.bn"] = BatchNormState(c)

    pset.params["readout.w"] = uniform((config.t_history, config.t_horizon),
                                       config.t_history)
    pset.params["readout.a"] = Tensor(np.zeros(config.t_horizon))
    pset.params["readout.z"] = uniform((c,), c)
    pset.params["readout.b"] = Tensor(np.zeros(config.t_horizon))
    return pset


# ---------------------------------------------------------------------------
# forward pieces


def tcn_block(tape, h: Tensor, filters: list[tuple[int, Tensor]],
              dilation: int) -> Tensor:
    """One dilated causal conv per kernel size, concatenated on channels."""
    branches = [ad.dilated_causal_conv1d(tape, h, f, dilation) for _, f in filters]
    if len(branches) == 1:
        return branches[0]
    return ad.concat(tape, branches, axis=2)


def graph_agg(tape, h: Tensor, batch: SampleBatch, eps: Tensor) -> Tensor:
    """(1 + eps) * h_i + unweighted sum of neighbor features."""
    return ad.gin_aggregate(tape, h, batch.edge_src, batch.edge_dst, eps)


def spatiotemporal_block(tape, h: Tensor, batch: SampleBatch,
                         pset: ParameterSet, config: ModelConfig, layer: int,
                         training: bool) -> Tensor:
    """ReLU(BatchNorm(TCN(GraphAgg(h))) + h); graph-free mode skips the
    aggregation entirely."""
    if config.graph_free:
        agg = h
    else:
        agg = graph_agg(tape, h, batch, pset[f"block{layer}.eps"])
    filters = [(k, pset[f"block{layer}.conv{k}"]) for k in config.kernel_sizes]
    dilation = config.dilation_base ** (layer + 1)
    t = tcn_block(tape, agg, filters, dilation)
    t = ad.batch_norm(tape, t, pset[f"block{layer}.bn.gamma"],
                      pset[f"block{layer}.bn.beta"],
                      pset.bn_states[f"block{layer}.bn"], training)
    return ad.relu_add(tape, t, h)


def pool(tape, h: Tensor, batch: SampleBatch, mode: str) -> Tensor:
    """Collapse each sample's node block to [T_h, C]: the center's rows
    (target) or a sum/max/mean reduction over the sample's nodes."""
    if mode == "target":
        return ad.gather_rows(tape, h, batch.center_rows)
    if mode in ("sum", "max", "mean"):
        return ad.segment_reduce(tape, h, batch.offsets, mode)
    raise ConfigError(f"unknown pooling mode: {mode}")


def read_out(tape, h: Tensor, w: Tensor, a: Tensor, z: Tensor,
             b: Tensor) -> Tensor:
    """Two-step readout: mix the time axis into T_f steps with a ReLU, then
    mix channels with a shared weight vector plus a per-step bias."""
    squeeze = h.data.ndim == 2
    if squeeze:
        h = ad.reshape(tape, h, (1,) + h.shape)
    ht = ad.transpose(tape, h, (0, 2, 1))  # [B, C, T_h]
    s1 = ad.relu(tape, ad.linear(tape, ht, w, a))  # [B, C, T_f]
    s1t = ad.transpose(tape, s1, (0, 2, 1))  # [B, T_f, C]
    zc = ad.reshape(tape, z, (z.size, 1))
    y = ad.matmul(tape, s1t, zc)  # [B, T_f, 1]
    y = ad.reshape(tape, y, y.shape[:2])
    y = ad.add(tape, y, b)
    if squeeze:
        y = ad.reshape(tape, y, (y.shape[1],))
    return y


def _check_finite(t: Tensor, stage: str):
    if not np.all(np.isfinite(t.data)):
        raise NumericError(f"non-finite activations in {stage}")


def forward(batch: SampleBatch, pset: ParameterSet, config: ModelConfig,
            tape: Optional[Tape] = None, training: bool = False) -> Tensor:
    """Predict [B, T_f] (standardized units) for a batch of subgraphs.

    Eval mode (training=False) uses batch-norm running stats; edge dropout
    is an assembly-time concern and must match this flag.
    """
    x = Tensor(batch.histories[:, :, None])
    filters = [(k, pset[f"readin.conv{k}"]) for k in config.kernel_sizes]
    h = tcn_block(tape, x, filters, 1)
    h = ad.batch_norm(tape, h, pset["readin.bn.gamma"], pset["readin.bn.beta"],
                      pset.bn_states["readin.bn"], training)
    _check_finite(h, "readin")
    for layer in range(config.layers):
        h = spatiotemporal_block(tape, h, batch, pset, config, layer, training)
        _check_finite(h, f"block{layer}")
    pooled = pool(tape, h, batch, config.pooling)
    y = read_out(tape, pooled, pset["readout.w"], pset["readout.a"],
                 pset["readout.z"], pset["readout.b"])
    _check_finite(y, "readout")
    return y


# ---------------------------------------------------------------------------
# checkpointing


@dataclass
class Checkpoint:
    pset: ParameterSet
    config: ModelConfig
    scaler: Optional[Scaler]
    provenance: dict = field(default_factory=dict)


def save_checkpoint(path, pset: ParameterSet, config: ModelConfig,
                    scaler: Optional[Scaler], provenance: Optional[dict] = None):
    """Versioned little-endian container: config, named parameters, batch-norm
    running stats, scaler, and seed provenance.  Round-trips bitwise."""
    meta = {
        "format": "flexcast-checkpoint",
        "version": 1,
        "model_config": config.to_dict(),
        "scaler": None if scaler is None
        else {"mean": scaler.mean, "std": scaler.std},
        "provenance": provenance or {},
        "param_count": count_parameters(pset),
    }
    arrays = {}
    for name, p in pset.params.items():
        arrays[f"p/{name}"] = p.data
    for name, s in pset.bn_states.items():
        arrays[f"b/{name}/mean"] = s.running_mean
        arrays[f"b/{name}/var"] = s.running_var
    container.write_container(path, meta, arrays)


def load_checkpoint(path) -> Checkpoint:
    meta, arrays = container.read_container(path)
    if meta.get("format") != "flexcast-checkpoint":
        raise FormatError(f"{path}: not a flexcast checkpoint")
    if meta.get("version") != 1:
        raise FormatError(f"{path}: unsupported checkpoint version")
    config = ModelConfig.from_dict(meta["model_config"])
    pset = init_parameters(config, seed=0)
    for name, p in pset.params.items():
        stored = arrays.get(f"p/{name}")
        if stored is None or stored.shape != p.data.shape:
            raise FormatError(f"{path}: missing or misshapen parameter {name}")
        p.data = stored.astype(np.float64).copy()
    for name, s in pset.bn_states.items():
        s.running_mean = arrays[f"b/{name}/mean"].astype(np.float64).copy()
        s.running_var = arrays[f"b/{name}/var"].astype(np.float64).copy()
    scaler = None
    if meta.get("scaler"):
        scaler = Scaler(meta["scaler"]["mean"], meta["scaler"]["std"])
    return Checkpoint(pset, config, scaler, meta.get("provenance", {}))
