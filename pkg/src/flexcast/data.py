"""Dataset preparation: Voronoi re-aggregation, windowing, splits,
standardization, and training batch assembly.

Sample (i, t) pairs predict y = X_i[t : t+T_f) from the histories
x = X_j[t-T_h : t) of every node j in station i's k-hop subgraph.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import container
from .errors import ConfigError, DataError
from .graph import StationMap, SubgraphRecord, edge_dropout, pairwise_km

DATASET_FILENAME = "dataset.flx"
STORE_FILENAME = "subgraphs.flx"


@dataclass
class TileTraffic:
    tile_ids: list[str]
    coords: np.ndarray  # [M, 2]
    values: np.ndarray  # [M, T], non-negative
    coord_mode: str
    resolution_min: int = 15

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if np.any(self.values < 0):
            raise DataError("negative tile traffic")


@dataclass
class TrafficSeries:
    """Per-station traffic matrix; row order matches StationMap order."""

    station_ids: list[str]
    values: np.ndarray  # [N, T]
    resolution_min: int = 15

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != len(self.station_ids):
            raise DataError("traffic matrix must be stations x timesteps")

    @property
    def n_stations(self):
        return self.values.shape[0]

    @property
    def n_timesteps(self):
        return self.values.shape[1]


def voronoi_aggregate(tiles: TileTraffic, stations: StationMap) -> TrafficSeries:
    """Assign each tile to its nearest station and sum tile traffic per
    station.  Total traffic is conserved at every timestep.  Distance ties go
    to the lowest station id (station order is id-sorted)."""
    if tiles.coord_mode != stations.coord_mode:
        raise DataError(
            f"coordinate frame mismatch: tiles {tiles.coord_mode}, "
            f"stations {stations.coord_mode}"
        )
    n = len(stations)
    out = np.zeros((n, tiles.values.shape[1]), dtype=np.float64)
    chunk = max(1, 2_000_000 // max(n, 1))
    for lo in range(0, len(tiles.tile_ids), chunk):
        hi = min(lo + chunk, len(tiles.tile_ids))
        d = pairwise_km(tiles.coords[lo:hi], stations.coords, stations.coord_mode)
        nearest = d.argmin(axis=1)
        np.add.at(out, nearest, tiles.values[lo:hi])
    return TrafficSeries(list(stations.ids), out, tiles.resolution_min)


def window(series: TrafficSeries, i: int, t: int, t_history: int,
           t_horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """x = X_i[t-T_h : t), y = X_i[t : t+T_f)."""
    if t - t_history < 0 or t + t_horizon > series.n_timesteps:
        raise IndexError(
            f"window at t={t} outside [{t_history}, "
            f"{series.n_timesteps - t_horizon}]"
        )
    row = series.values[i]
    return row[t - t_history:t].copy(), row[t:t + t_horizon].copy()


# ---------------------------------------------------------------------------
# splits


@dataclass
class SplitSpec:
    t_fractions: tuple[float, float, float] = (0.7, 0.1, 0.2)
    v_fractions: tuple[float, float, float] = (0.7, 0.1, 0.2)
    mode: str = "transductive"  # or "inductive"
    scarcity_rate: Optional[float] = None
    seed: int = 0

    def validate(self):
        for fr in (self.t_fractions, self.v_fractions):
            if len(fr) != 3 or abs(sum(fr) - 1.0) > 1e-9 or min(fr) < 0:
                raise ConfigError(f"split fractions must be >=0 and sum to 1: {fr}")
        if self.mode not in ("inductive", "transductive"):
            raise ConfigError(f"unknown split mode: {self.mode}")
        if self.scarcity_rate is not None and not 0 < self.scarcity_rate <= 1:
            raise ConfigError(f"scarcity rate must be in (0, 1]: {self.scarcity_rate}")

    def to_dict(self):
        return {
            "t_fractions": list(self.t_fractions),
            "v_fractions": list(self.v_fractions),
            "mode": self.mode,
            "scarcity_rate": self.scarcity_rate,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            t_fractions=tuple(d["t_fractions"]),
            v_fractions=tuple(d["v_fractions"]),
            mode=d["mode"],
            scarcity_rate=d["scarcity_rate"],
            seed=d["seed"],
        )


@dataclass
class SplitResult:
    """Per-split node sets, timestep blocks, and (station, t) sample arrays."""

    spec: SplitSpec
    t_history: int
    t_horizon: int
    # half-open [start, end) timestep blocks per split
    t_blocks: dict[str, tuple[int, int]]
    # earliest timestep a train/val history window may read (scarcity floor)
    x_floor: int
    nodes: dict[str, np.ndarray]
    samples: dict[str, np.ndarray]  # each [M, 2] of (station index, t)


def split(series: TrafficSeries, spec: SplitSpec, t_history: int,
          t_horizon: int) -> SplitResult:
    """Chronological 70/10/20 timestep blocks (train earliest) and, in
    inductive mode, a seeded disjoint node partition.

    A sample (i, t) belongs to split S when t and its target window lie
    inside S's block; its history may reach back into earlier blocks (never
    forward).  Scarcity keeps only the newest `rate` fraction of the
    train+val block, with the val:train proportion held at 1:7; the test
    block is untouched and histories never read dropped timesteps.
    """
    spec.validate()
    n_t = series.n_timesteps
    n_v = series.n_stations
    n_train = int(np.floor(spec.t_fractions[0] * n_t))
    n_val = int(np.floor(spec.t_fractions[1] * n_t))
    blocks = {
        "train": (0, n_train),
        "val": (n_train, n_train + n_val),
        "test": (n_train + n_val, n_t),
    }
    x_floor = 0

    rate = spec.scarcity_rate
    if rate is not None and rate < 1.0:
        n_tv = n_train + n_val
        retained = int(np.ceil(rate * n_tv))
        v_sz = retained // 8
        start = n_tv - retained
        blocks["train"] = (start, n_tv - v_sz)
        blocks["val"] = (n_tv - v_sz, n_tv)
        x_floor = start

    if spec.mode == "transductive":
        nodes = {s: np.arange(n_v, dtype=np.int64) for s in ("train", "val", "test")}
    else:
        rng = np.random.default_rng([spec.seed, 101])
        perm = rng.permutation(n_v)
        k_train = int(np.floor(spec.v_fractions[0] * n_v))
        k_val = int(np.floor(spec.v_fractions[1] * n_v))
        nodes = {
            "train": np.sort(perm[:k_train]).astype(np.int64),
            "val": np.sort(perm[k_train:k_train + k_val]).astype(np.int64),
            "test": np.sort(perm[k_train + k_val:]).astype(np.int64),
        }

    # Membership: t lies in the split's own block, the history may reach back
    # (never past the scarcity floor), and the target window may straddle the
    # internal train/val boundary but never touch the test block.
    test_start = blocks["test"][0]
    samples = {}
    for name, (lo, hi) in blocks.items():
        floor = x_floor if name in ("train", "val") else 0
        y_limit = n_t if name == "test" else test_start
        t_lo = max(lo, floor + t_history)
        t_hi = min(hi - 1, y_limit - t_horizon)
        ts = np.arange(t_lo, t_hi + 1, dtype=np.int64)
        ns = nodes[name]
        if len(ts) == 0 or len(ns) == 0:
            samples[name] = np.zeros((0, 2), dtype=np.int64)
        else:
            grid_i = np.repeat(ns, len(ts))
            grid_t = np.tile(ts, len(ns))
            samples[name] = np.stack([grid_i, grid_t], axis=1)

    if rate is not None and rate < 1.0 and len(samples["train"]) == 0:
        raise ConfigError(
            f"scarcity rate {rate} leaves no room for a single "
            f"{t_history}+{t_horizon}-step window"
        )
    return SplitResult(spec, t_history, t_horizon, blocks, x_floor, nodes, samples)


# ---------------------------------------------------------------------------
# standardization


@dataclass
class Scaler:
    mean: float
    std: float

    def transform(self, a: np.ndarray) -> np.ndarray:
        return (a - self.mean) / self.std

    def inverse(self, a: np.ndarray) -> np.ndarray:
        return a * self.std + self.mean


def standardize(series: TrafficSeries, splits: SplitResult) -> Scaler:
    """Z-score statistics from train nodes over the train-visible timestep
    range only; test values can never influence the scaler."""
    lo, hi = splits.t_blocks["train"]
    rows = splits.nodes["train"]
    if len(rows) == 0 or hi <= splits.x_floor:
        raise ConfigError("empty training region; cannot fit scaler")
    block = series.values[np.ix_(rows, range(splits.x_floor, hi))]
    mean = float(block.mean())
    std = float(block.std())
    if std == 0.0:
        import warnings

        warnings.warn("constant training series; scaling by 1", stacklevel=2)
        std = 1.0
    return Scaler(mean, std)


# ---------------------------------------------------------------------------
# batches


@dataclass
class SampleBatch:
    """Block-combined subgraphs: per-node histories, per-center targets, and
    a directed edge list that never crosses sample boundaries."""

    histories: np.ndarray  # [N_total, T_h], standardized
    targets: np.ndarray  # [B, T_f], standardized
    edge_src: np.ndarray  # directed, both orientations of each kept edge
    edge_dst: np.ndarray
    offsets: np.ndarray  # [B+1], node rows of sample b are [offsets[b], offsets[b+1])
    center_rows: np.ndarray  # [B]
    stations: np.ndarray  # [B] station indices
    times: np.ndarray  # [B]

    @property
    def n_nodes(self):
        return self.histories.shape[0]

    @property
    def size(self):
        return len(self.stations)


def assemble_batch(samples: np.ndarray, records: dict[int, SubgraphRecord],
                   values_std: np.ndarray, station_index: dict[str, int],
                   t_history: int, t_horizon: int, dropout_p: float = 0.0,
                   train: bool = False, rng=None,
                   graph_free: bool = False) -> SampleBatch:
    """Fetch each sample's subgraph, apply edge dropout iff training, and
    block-combine with offset node indices.

    `records` maps station index -> SubgraphRecord; `values_std` is the
    standardized [N, T] series.  graph_free keeps only the center node.
    """
    if train and dropout_p > 0 and not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)

    node_rows: list[np.ndarray] = []
    src_parts: list[np.ndarray] = []
    dst_parts: list[np.ndarray] = []
    b = len(samples)
    offsets = np.zeros(b + 1, dtype=np.int64)
    t_starts: list[np.ndarray] = []

    for s, (i, t) in enumerate(samples):
        if graph_free:
            rows = np.array([i], dtype=np.int64)
        else:
            try:
                rec = records[int(i)]
            except KeyError:
                raise KeyError(f"no subgraph record for station index {i}") from None
            if train and dropout_p > 0:
                rec = edge_dropout(rec, dropout_p, rng)
            rows = np.array([station_index[sid] for sid in rec.node_ids],
                            dtype=np.int64)
            base = offsets[s]
            if rec.n_edges:
                src_parts.append(rec.edge_u + base)
                dst_parts.append(rec.edge_v + base)
                src_parts.append(rec.edge_v + base)
                dst_parts.append(rec.edge_u + base)
        node_rows.append(rows)
        offsets[s + 1] = offsets[s] + len(rows)
        t_starts.append(np.full(len(rows), t - t_history, dtype=np.int64))

    all_rows = np.concatenate(node_rows)
    starts = np.concatenate(t_starts)
    hist = values_std[all_rows[:, None], starts[:, None] + np.arange(t_history)]
    tgt_t = samples[:, 1]
    targets = values_std[samples[:, 0][:, None], tgt_t[:, None] + np.arange(t_horizon)]

    if src_parts:
        edge_src = np.concatenate(src_parts)
        edge_dst = np.concatenate(dst_parts)
    else:
        edge_src = np.zeros(0, dtype=np.int64)
        edge_dst = np.zeros(0, dtype=np.int64)

    return SampleBatch(
        histories=np.ascontiguousarray(hist),
        targets=np.ascontiguousarray(targets),
        edge_src=edge_src,
        edge_dst=edge_dst,
        offsets=offsets,
        center_rows=offsets[:-1].copy(),
        stations=samples[:, 0].copy(),
        times=samples[:, 1].copy(),
    )


# ---------------------------------------------------------------------------
# prepared dataset container


@dataclass
class PreparedData:
    stations: StationMap
    series: TrafficSeries
    graph_params: dict  # kappa_km, max_degree, k, n_components, n_edges
    default_split: SplitSpec = field(default_factory=SplitSpec)
    scaler: Optional[Scaler] = None  # populated at training time, not prepare

    @property
    def station_index(self) -> dict[str, int]:
        return {sid: i for i, sid in enumerate(self.stations.ids)}


def save_dataset(path, data: PreparedData):
    meta = {
        "format": "flexcast-dataset",
        "version": 1,
        "station_ids": data.stations.ids,
        "coord_mode": data.stations.coord_mode,
        "resolution_min": data.series.resolution_min,
        "graph_params": data.graph_params,
        "default_split": data.default_split.to_dict(),
        "scaler": None if data.scaler is None
        else {"mean": data.scaler.mean, "std": data.scaler.std},
    }
    container.write_container(path, meta, {
        "coords": data.stations.coords,
        "values": data.series.values,
    })


def load_dataset(path) -> PreparedData:
    meta, arrays = container.read_container(path)
    if meta.get("format") != "flexcast-dataset":
        raise DataError(f"{path}: not a flexcast dataset container")
    stations = StationMap(list(meta["station_ids"]), arrays["coords"],
                          meta["coord_mode"])
    series = TrafficSeries(list(meta["station_ids"]), arrays["values"],
                           meta["resolution_min"])
    scaler = None
    if meta.get("scaler"):
        scaler = Scaler(meta["scaler"]["mean"], meta["scaler"]["std"])
    return PreparedData(stations, series, dict(meta["graph_params"]),
                        SplitSpec.from_dict(meta["default_split"]), scaler)


# ---------------------------------------------------------------------------
# CSV ingestion / emission


def read_station_csv(path) -> StationMap:
    """CSV with header station_id,lat,lon or station_id,x_m,y_m."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] == ["station_id", "lat", "lon"]:
            mode = "latlon"
        elif header[:3] == ["station_id", "x_m", "y_m"]:
            mode = "xy"
        else:
            raise DataError(
                f"{path}: header must be station_id,lat,lon or station_id,x_m,y_m"
            )
        ids, coords = [], []
        for row in reader:
            if not row:
                continue
            ids.append(row[0])
            coords.append((float(row[1]), float(row[2])))
    if not ids:
        raise DataError(f"{path}: no stations")
    return StationMap(ids, np.array(coords), mode)


def read_tile_csv(path) -> tuple[list[str], np.ndarray, str]:
    """CSV with header tile_id,lat,lon or tile_id,x_m,y_m."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] == ["tile_id", "lat", "lon"]:
            mode = "latlon"
        elif header[:3] == ["tile_id", "x_m", "y_m"]:
            mode = "xy"
        else:
            raise DataError(
                f"{path}: header must be tile_id,lat,lon or tile_id,x_m,y_m"
            )
        ids, coords = [], []
        for row in reader:
            if not row:
                continue
            ids.append(row[0])
            coords.append((float(row[1]), float(row[2])))
    return ids, np.array(coords), mode


def read_traffic_csv(path, id_column: str) -> tuple[list[str], np.ndarray]:
    """Wide (`id,t0,t1,...`) or long (`id,timestep,traffic`) traffic matrix."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[0] != id_column:
            raise DataError(f"{path}: first column must be {id_column}")
        if header[1:3] == ["timestep", "traffic"]:
            rows: dict[str, dict[int, float]] = {}
            for row in reader:
                if not row:
                    continue
                rows.setdefault(row[0], {})[int(row[1])] = float(row[2])
            ids = list(rows)
            n_t = max(max(d) for d in rows.values()) + 1
            values = np.zeros((len(ids), n_t))
            for r, rid in enumerate(ids):
                for t, v in rows[rid].items():
                    values[r, t] = v
        else:
            ids, data = [], []
            for row in reader:
                if not row:
                    continue
                ids.append(row[0])
                data.append([float(v) for v in row[1:]])
            values = np.array(data)
    return ids, values


def write_station_csv(path, stations: StationMap):
    cols = ("lat", "lon") if stations.coord_mode == "latlon" else ("x_m", "y_m")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["station_id", *cols])
        for sid, (a, b) in zip(stations.ids, stations.coords):
            writer.writerow([sid, repr(float(a)), repr(float(b))])


def write_traffic_csv(path, series: TrafficSeries, id_column: str = "station_id"):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([id_column] + [f"t{j}" for j in range(series.n_timesteps)])
        for sid, row in zip(series.station_ids, series.values):
            writer.writerow([sid] + [repr(float(v)) for v in row])


def align_traffic(ids: list[str], values: np.ndarray,
                  stations: StationMap) -> TrafficSeries:
    """Reorder per-station traffic rows to the canonical station order."""
    if sorted(ids) != sorted(stations.ids):
        raise DataError("traffic station ids do not match the station map")
    pos = {sid: r for r, sid in enumerate(ids)}
    order = [pos[sid] for sid in stations.ids]
    return TrafficSeries(list(stations.ids), values[order])
