"""Command-line pipeline: gen-synthetic -> prepare -> train/finetune ->
evaluate/predict.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
Every command is deterministic under a fixed --seed (FLEXCAST_SEED is the
fallback when the flag is absent).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import RunConfig, load_run_config
from .data import (DATASET_FILENAME, STORE_FILENAME, PreparedData, SplitSpec,
                   TileTraffic, align_traffic, load_dataset, read_station_csv,
                   read_tile_csv, read_traffic_csv, save_dataset, split,
                   voronoi_aggregate, write_station_csv, write_traffic_csv)
from .errors import ConfigError, DataError, NumericError
from .evaluation import evaluate, write_metrics_csv
from .graph import build_proximity_graph
from .model import load_checkpoint, save_checkpoint
from .store import SubgraphStore, build_store
from .synthetic import generate_synthetic
from .training import _records_by_index, finetune, train


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    p = _Parser(prog="flexcast",
                description="Per-station cellular traffic forecasting")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-synthetic", help="write a synthetic station map + traffic CSVs")
    g.add_argument("--out", required=True)
    g.add_argument("--stations", type=int, required=True)
    g.add_argument("--steps", type=int, required=True)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--box-km", type=float, default=20.0)

    pr = sub.add_parser("prepare", help="build the dataset container and subgraph store")
    pr.add_argument("--stations", required=True)
    pr.add_argument("--out", required=True)
    pr.add_argument("--traffic", help="per-station traffic CSV (requires --no-voronoi)")
    pr.add_argument("--no-voronoi", action="store_true",
                    help="traffic is already per-station; skip re-aggregation")
    pr.add_argument("--tiles", help="tile coordinates CSV")
    pr.add_argument("--tile-traffic", help="tile traffic CSV")
    pr.add_argument("--kappa", type=float, default=3.5)
    pr.add_argument("--max-degree", type=int, default=10)
    pr.add_argument("--k", type=int, default=2)
    pr.add_argument("--resolution", type=int, default=15)

    tr = sub.add_parser("train", help="train from scratch")
    _add_fit_args(tr)
    tr.add_argument("--graph-free", action="store_true",
                    help="ablation: drop all graph components")

    ft = sub.add_parser("finetune", help="finetune a source checkpoint")
    ft.add_argument("--from", dest="source", required=True)
    ft.add_argument("--scope", choices=["all", "tcn-eps"], default="all")
    _add_fit_args(ft)

    ev = sub.add_parser("evaluate", help="per-horizon MAE/RMSE of a checkpoint")
    ev.add_argument("--ckpt", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--split", choices=["train", "val", "test"], default="test")
    ev.add_argument("--out", help="write the metrics CSV here")
    ev.add_argument("--scale", type=float, default=None,
                    help="display divisor for the table (e.g. 1e6)")

    pd = sub.add_parser("predict", help="forecast one station at one timestep")
    pd.add_argument("--ckpt", required=True)
    pd.add_argument("--data", required=True)
    pd.add_argument("--station", required=True)
    pd.add_argument("--t", type=int, required=True)
    return p


def _add_fit_args(sp):
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--config", help="INI run configuration")
    mode = sp.add_mutually_exclusive_group()
    mode.add_argument("--inductive", action="store_true")
    mode.add_argument("--transductive", action="store_true")
    sp.add_argument("--scarcity", type=float, default=None,
                    help="retain this fraction of the newest train+val steps")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--epochs", type=int, default=None)
    sp.add_argument("--batch-size", type=int, default=None)
    sp.add_argument("--patience", type=int, default=None)


def _resolve_seed(args_seed):
    if args_seed is not None:
        return args_seed
    env = os.environ.get("FLEXCAST_SEED")
    return int(env) if env else None


def _load_prepared(data_dir) -> tuple[PreparedData, SubgraphStore]:
    data_dir = Path(data_dir)
    dataset = data_dir / DATASET_FILENAME
    store = data_dir / STORE_FILENAME
    if not dataset.exists() or not store.exists():
        raise DataError(f"{data_dir}: run `flexcast prepare` first "
                        f"(missing {DATASET_FILENAME} or {STORE_FILENAME})")
    return load_dataset(dataset), SubgraphStore(store)


def _fit_config(args) -> RunConfig:
    cfg = load_run_config(args.config)
    seed = _resolve_seed(args.seed)
    if seed is not None:
        cfg.train.seed = seed
        cfg.split.seed = seed
    if args.inductive:
        cfg.split.mode = "inductive"
    elif args.transductive:
        cfg.split.mode = "transductive"
    if args.scarcity is not None:
        cfg.split.scarcity_rate = args.scarcity
    if args.epochs is not None:
        cfg.train.max_epochs = args.epochs
    if args.batch_size is not None:
        cfg.train.batch_size = args.batch_size
    if args.patience is not None:
        cfg.train.patience = args.patience
    cfg.split.validate()
    cfg.train.validate()
    return cfg


def _write_fit_outputs(out_path, pset, cfg, scaler, splits, report, command):
    provenance = {
        "command": command,
        "seed": cfg.train.seed,
        "split": splits.spec.to_dict(),
        "train_config": cfg.train.to_dict(),
    }
    save_checkpoint(out_path, pset, cfg.model, scaler, provenance)
    report_dict = report.to_dict()
    if splits.spec.mode == "inductive":
        report_dict["node_split_sizes"] = {
            name: int(len(nodes)) for name, nodes in splits.nodes.items()
        }
    report_path = str(out_path) + ".report.json"
    with open(report_path, "w") as fh:
        json.dump(report_dict, fh, sort_keys=True, indent=1)
        fh.write("\n")
    print(f"wrote {out_path} and {report_path}")
    print(f"best epoch {report.best_epoch} val_mae {report.best_val_mae:.6g} "
          f"({report.param_count} parameters, {report.wall_time_s:.1f}s)")


def _cmd_gen_synthetic(args) -> int:
    if args.stations < 2:
        raise ConfigError("--stations must be >= 2 (the graph needs two nodes)")
    if args.steps < 1:
        raise ConfigError("--steps must be >= 1")
    seed = _resolve_seed(args.seed) or 0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stations, series = generate_synthetic(args.stations, args.steps, seed,
                                          box_km=args.box_km)
    write_station_csv(out / "stations.csv", stations)
    write_traffic_csv(out / "traffic.csv", series)
    print(f"wrote {out / 'stations.csv'} and {out / 'traffic.csv'} "
          f"({args.stations} stations, {args.steps} steps, seed {seed})")
    return 0


def _cmd_prepare(args) -> int:
    stations = read_station_csv(args.stations)
    if args.tiles or args.tile_traffic:
        if not (args.tiles and args.tile_traffic):
            raise ConfigError("--tiles and --tile-traffic must be given together")
        tile_ids, tile_coords, tile_mode = read_tile_csv(args.tiles)
        traffic_ids, traffic = read_traffic_csv(args.tile_traffic, "tile_id")
        if traffic_ids != tile_ids:
            pos = {tid: r for r, tid in enumerate(traffic_ids)}
            try:
                traffic = traffic[[pos[tid] for tid in tile_ids]]
            except KeyError as exc:
                raise DataError(f"tile traffic is missing tile {exc}") from None
        tiles = TileTraffic(tile_ids, tile_coords, traffic, tile_mode,
                            args.resolution)
        series = voronoi_aggregate(tiles, stations)
        print(f"voronoi: {len(tile_ids)} tiles -> {len(stations)} stations")
    elif args.traffic:
        if not args.no_voronoi:
            raise ConfigError("per-station --traffic requires --no-voronoi")
        ids, values = read_traffic_csv(args.traffic, "station_id")
        series = align_traffic(ids, values, stations)
        series.resolution_min = args.resolution
        print("voronoi aggregation skipped (per-station input)")
    else:
        raise ConfigError("need either --traffic --no-voronoi or "
                          "--tiles with --tile-traffic")

    graph = build_proximity_graph(stations, args.kappa, args.max_degree)
    if graph.n_components > 1:
        print(f"warning: proximity graph has {graph.n_components} connected "
              f"components (kappa={args.kappa} km may be too small)")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    store = build_store(graph, args.k, out / STORE_FILENAME)
    degrees = graph.degrees()
    prepared = PreparedData(stations, series, {
        "kappa_km": args.kappa,
        "max_degree": args.max_degree,
        "k": args.k,
        "n_components": graph.n_components,
        "n_edges": graph.n_edges,
        "max_observed_degree": int(degrees.max()) if len(degrees) else 0,
    })
    save_dataset(out / DATASET_FILENAME, prepared)
    print(f"graph: {graph.n_nodes} nodes, {graph.n_edges} edges, "
          f"{graph.n_components} component(s), "
          f"max degree {prepared.graph_params['max_observed_degree']}")
    print(f"store: {len(store)} records (k={args.k}) at {out / STORE_FILENAME}")
    print(f"dataset: {series.n_stations} x {series.n_timesteps} at "
          f"{out / DATASET_FILENAME}")
    return 0


def _cmd_train(args) -> int:
    cfg = _fit_config(args)
    if args.graph_free:
        cfg.model.graph_free = True
    data, store = _load_prepared(args.data)
    pset, report, scaler, splits = train(data, store, cfg.model, cfg.train,
                                         cfg.split, log=print)
    _write_fit_outputs(args.out, pset, cfg, scaler, splits, report, "train")
    return 0


def _cmd_finetune(args) -> int:
    cfg = _fit_config(args)
    source = load_checkpoint(args.source)
    cfg.model = replace(source.config)
    data, store = _load_prepared(args.data)
    pset, report, scaler, splits = finetune(source, data, store, cfg.train,
                                            cfg.split, scope=args.scope,
                                            log=print)
    _write_fit_outputs(args.out, pset, cfg, scaler, splits, report, "finetune")
    return 0


def _cmd_evaluate(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    data, store = _load_prepared(args.data)
    spec = SplitSpec.from_dict(ckpt.provenance["split"]) \
        if "split" in ckpt.provenance else data.default_split
    splits = split(data.series, spec, ckpt.config.t_history,
                   ckpt.config.t_horizon)
    records = _records_by_index(store, data)
    report = evaluate(ckpt.pset, ckpt.config, ckpt.scaler, data, records,
                      splits.samples[args.split], split_name=args.split,
                      scale=args.scale)
    print(report.format_table())
    if args.out:
        write_metrics_csv(args.out, report.rows())
        print(f"wrote {args.out}")
    return 0


def _cmd_predict(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    data, store = _load_prepared(args.data)
    i = data.stations.index_of(args.station)
    t_h, t_f = ckpt.config.t_history, ckpt.config.t_horizon
    n_t = data.series.n_timesteps
    if not t_h <= args.t <= n_t - t_f:
        raise DataError(f"--t must be in [{t_h}, {n_t - t_f}]")
    samples = np.array([[i, args.t]], dtype=np.int64)
    records = {i: store.get(args.station)}
    from .evaluation import predict_batched

    pred = predict_batched(ckpt.pset, ckpt.config, ckpt.scaler, data, records,
                           samples)[0]
    res = data.series.resolution_min
    for h, value in enumerate(pred):
        print(f"{args.station} t={args.t} +{res * (h + 1)}min: {value:.6f}")
    return 0


_COMMANDS = {
    "gen-synthetic": _cmd_gen_synthetic,
    "prepare": _cmd_prepare,
    "train": _cmd_train,
    "finetune": _cmd_finetune,
    "evaluate": _cmd_evaluate,
    "predict": _cmd_predict,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (DataError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
