"""Acceptance suite: one test per criterion, each printing a PASS line with
its measured value and runtime.  Run with `pytest tests/test_acceptance.py -s`
to see the lines as they complete.

Criteria (tolerances pinned here, not deferred):
  1  gradient suite, >=20 seeded configs, primitives <1e-6, composed <1e-4, <2 min
  2  causality for K={1,3}, d in {1,2}, L in {1,2,3}, exact, <1 min
  3  oracle equivalence: BFS / exhaustive nearest / double-loop metrics 1e-10
     relative / Voronoi conservation 1e-9 relative
  4  invariances: node permutation <=1e-9, batch-vs-single <=1e-9, locality exact
  5  overfit: 64 samples, no dropout, no decay -> train MAE < 5% of target
     std within 200 epochs, < 60 s
  6  inductive: trained on 50 stations, evaluates on 20 held-out, beats the
     graph-free ablation (3-seed mean), < 10 min
  7  transfer trend at 5% scarcity: finetuned <= from-scratch (3-seed mean), < 15 min
  8  parameter accounting: runtime count == closed form, delta vs 140970 itemized
  9  determinism: full pipeline twice -> bitwise-identical checkpoints + reports
  10 hyperparameter defaults match the tuned values
"""

import math
import time
import warnings

import numpy as np

from conftest import assert_grads_close, make_tensor
from flexcast import autodiff as ad
from flexcast.autodiff import BatchNormState, Tensor
from flexcast.config import RunConfig
from flexcast.data import (PreparedData, SampleBatch, SplitSpec, TileTraffic,
                           assemble_batch, split, standardize,
                           voronoi_aggregate)
from flexcast.graph import (StationMap, build_proximity_graph, khop_subgraph)
from flexcast.model import (Checkpoint, ModelConfig, closed_form_count,
                            count_parameters, forward, init_parameters)
from flexcast.synthetic import generate_synthetic
from flexcast.training import TrainConfig, finetune, train
from flexcast.evaluation import evaluate


def report(criterion, detail, started):
    print(f"\nACCEPTANCE {criterion}: PASS ({detail}; {time.time() - started:.1f}s)")


# -- criterion 1: gradient suite ----------------------------------------------

def _primitive_checks(rng):
    """Finite-difference checks for every primitive at one random config."""
    n = int(rng.integers(2, 5))
    t = int(rng.integers(6, 12))
    c = int(rng.integers(2, 5))
    x = make_tensor(rng, n, t, c)
    y = make_tensor(rng, n, t, c)
    row = make_tensor(rng, c)
    scalar = Tensor(np.asarray(float(rng.uniform(0.2, 1.5))))
    w = make_tensor(rng, c, int(rng.integers(2, 5)))
    b = make_tensor(rng, w.shape[1])
    k = int(rng.integers(1, 4))
    dil = int(rng.integers(1, 3))
    f = make_tensor(rng, k, c, int(rng.integers(2, 5)))
    gamma = Tensor(rng.uniform(0.5, 1.5, c))
    beta = make_tensor(rng, c)
    n_edges = int(rng.integers(1, 3 * n))
    src = rng.integers(0, n, n_edges).astype(np.int64)
    dst = rng.integers(0, n, n_edges).astype(np.int64)
    idx = rng.integers(0, n, max(1, n - 1)).astype(np.int64)
    cuts = np.sort(rng.choice(np.arange(1, n), size=min(2, n - 1), replace=False))
    offsets = np.concatenate([[0], cuts, [n]]).astype(np.int64)
    eps = Tensor(np.asarray(float(rng.uniform(-0.3, 0.5))))
    axis = int(rng.integers(0, 3))

    def bn_train(tape):
        return ad.sum_all(tape, ad.mul(
            tape, ad.batch_norm(tape, x, gamma, beta, BatchNormState(c), True), x))

    state = BatchNormState(c)
    state.running_mean = rng.standard_normal(c)
    state.running_var = rng.uniform(0.5, 2.0, c)

    checks = [
        (lambda tp: ad.sum_all(tp, ad.mul(tp, ad.add(tp, x, y), x)), [x, y]),
        (lambda tp: ad.sum_all(tp, ad.mul(tp, ad.sub(tp, x, y), y)), [x, y]),
        (lambda tp: ad.sum_all(tp, ad.mul(tp, ad.add(tp, x, row), x)), [x, row]),
        (lambda tp: ad.sum_all(tp, ad.mul(tp, ad.mul(tp, x, scalar), x)),
         [x, scalar]),
        (lambda tp: ad.sum_all(tp, ad.relu(tp, x)), [x]),
        (lambda tp: ad.sum_all(tp, ad.relu_add(tp, x, y)), [x, y]),
        (lambda tp: ad.sum_all(tp, ad.abs_val(tp, x)), [x]),
        (lambda tp: ad.mean_all(tp, ad.mul(tp, x, x)), [x]),
        (lambda tp: ad.sum_all(tp, ad.mul(tp, ad.sum_over(tp, x, axis),
                                          ad.sum_over(tp, y, axis))), [x, y]),
        (lambda tp: ad.sum_all(tp, ad.mul(tp, ad.mean_over(tp, x, axis),
                                          ad.mean_over(tp, y, axis))), [x, y]),
        (lambda tp: ad.sum_all(tp, ad.max_over(tp, x, axis)), [x]),
        (lambda tp: ad.sum_all(tp, ad.mul(tp, ad.concat(tp, [x, y], 2),
                                          ad.concat(tp, [y, x], 2))), [x, y]),
        (lambda tp: ad.sum_all(tp, ad.mul(tp, ad.transpose(tp, x, (1, 0, 2)),
                                          ad.transpose(tp, y, (1, 0, 2)))),
         [x, y]),
        (lambda tp: ad.sum_all(tp, ad.mul(
            tp, ad.reshape(tp, x, (n * t, c)), ad.reshape(tp, y, (n * t, c)))),
         [x, y]),
        (lambda tp: ad.sum_all(tp, ad.sqrt(
            tp, ad.add_const(tp, ad.mul(tp, x, x), 0.5))), [x]),
        (lambda tp: ad.sum_all(tp, ad.scale_const(tp, x, -1.7)), [x]),
        (lambda tp: ad.sum_all(tp, ad.relu(tp, ad.matmul(tp, x, w))), [x, w]),
        (lambda tp: ad.sum_all(tp, ad.relu(tp, ad.linear(tp, x, w, b))),
         [x, w, b]),
        (lambda tp: ad.sum_all(tp, ad.relu(
            tp, ad.dilated_causal_conv1d(tp, x, f, dil))), [x, f]),
        (bn_train, [x, gamma, beta]),
        (lambda tp: ad.sum_all(tp, ad.mul(
            tp, ad.batch_norm(tp, x, gamma, beta, state, False), x)),
         [x, gamma, beta]),
        (lambda tp: ad.sum_all(tp, ad.mul(tp, ad.neighbor_sum(tp, x, src, dst),
                                          x)), [x]),
        (lambda tp: ad.sum_all(tp, ad.mul(
            tp, ad.gin_aggregate(tp, x, src, dst, eps), x)), [x, eps]),
        (lambda tp: ad.sum_all(tp, ad.mul(tp, ad.gather_rows(tp, x, idx),
                                          ad.gather_rows(tp, x, idx))), [x]),
    ]
    for mode in ("sum", "mean", "max"):
        checks.append((lambda tp, m=mode: ad.sum_all(
            tp, ad.mul(tp, ad.segment_reduce(tp, x, offsets, m),
                       ad.segment_reduce(tp, x, offsets, m))), [x]))
    for make_loss, params in checks:
        assert_grads_close(make_loss, params, rtol=1e-6, h=1e-5)


def _composed_model_check(rng, seed):
    stations, series = generate_synthetic(8, 60, seed=seed, box_km=6.0)
    graph = build_proximity_graph(stations, 4.0, 3)
    records = {i: khop_subgraph(graph, sid, 2) for i, sid in enumerate(graph.ids)}
    data = PreparedData(stations, series, {"k": 2})
    r = split(data.series, SplitSpec(seed=seed), 12, 3)
    scaler = standardize(data.series, r)
    vstd = scaler.transform(data.series.values)
    samples = r.samples["train"][
        rng.choice(len(r.samples["train"]), 2, replace=False)]
    batch = assemble_batch(samples, records, vstd, data.station_index, 12, 3)
    cfg = ModelConfig(channels=4, layers=int(rng.integers(1, 3)))
    pset = init_parameters(cfg, seed)

    def make_loss(tape):
        out = forward(batch, pset, cfg, tape, training=False)
        return ad.mean_all(tape, ad.abs_val(tape, out))

    # slice of >=10 parameters spanning eps and both readout steps
    probe = [pset["block0.eps"], pset["readout.b"], pset["readout.z"],
             pset["readout.a"]]
    assert sum(p.size for p in probe) >= 10
    assert_grads_close(make_loss, probe, rtol=1e-4, h=1e-5)


def test_criterion_1_gradient_suite():
    started = time.time()
    n_configs = 20
    for seed in range(n_configs):
        rng = np.random.default_rng([1000, seed])
        _primitive_checks(rng)
    for seed in (0, 1, 2):
        _composed_model_check(np.random.default_rng([2000, seed]), seed)
    elapsed = time.time() - started
    assert elapsed < 120, f"gradient suite took {elapsed:.0f}s (limit 120s)"
    report("1 gradient-suite",
           f"{n_configs} primitive configs at 1e-6 + composed model at 1e-4",
           started)


# -- criterion 2: causality ----------------------------------------------------

def test_criterion_2_causality():
    started = time.time()
    rng = np.random.default_rng(77)
    n, t_h = 6, 12
    checked = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # receptive field may exceed T
        for d in (1, 2):
            for layers in (1, 2, 3):
                cfg = ModelConfig(channels=8, layers=layers, dilation_base=d)
                pset = init_parameters(cfg, layers * 10 + d)
                hist = rng.standard_normal((n, t_h))
                batch = SampleBatch(
                    histories=hist, targets=np.zeros((1, 3)),
                    edge_src=np.array([0, 1, 1, 2], dtype=np.int64),
                    edge_dst=np.array([1, 0, 2, 1], dtype=np.int64),
                    offsets=np.array([0, n], dtype=np.int64),
                    center_rows=np.zeros(1, dtype=np.int64),
                    stations=np.zeros(1, dtype=np.int64),
                    times=np.zeros(1, dtype=np.int64))

                def node_features(h_matrix):
                    """Per-node pre-pool features in eval mode."""
                    b = SampleBatch(h_matrix, batch.targets, batch.edge_src,
                                    batch.edge_dst, batch.offsets,
                                    batch.center_rows, batch.stations,
                                    batch.times)
                    x = Tensor(b.histories[:, :, None])
                    from flexcast.model import tcn_block, spatiotemporal_block
                    filters = [(k, pset[f"readin.conv{k}"])
                               for k in cfg.kernel_sizes]
                    h = tcn_block(None, x, filters, 1)
                    h = ad.batch_norm(None, h, pset["readin.bn.gamma"],
                                      pset["readin.bn.beta"],
                                      pset.bn_states["readin.bn"], False)
                    for layer in range(cfg.layers):
                        h = spatiotemporal_block(None, h, b, pset, cfg, layer,
                                                 False)
                    return h.data

                base = node_features(hist)
                for t_cut in (3, 7, 11):
                    pert = hist.copy()
                    pert[:, t_cut:] += rng.standard_normal(pert[:, t_cut:].shape)
                    got = node_features(pert)
                    assert np.array_equal(base[:, :t_cut, :], got[:, :t_cut, :]), \
                        f"causality violated at d={d}, L={layers}, t={t_cut}"
                    checked += 1
    elapsed = time.time() - started
    assert elapsed < 60, f"causality suite took {elapsed:.0f}s (limit 60s)"
    report("2 causality", f"{checked} exact perturbation checks", started)


# -- criterion 3: oracle equivalence -------------------------------------------

def test_criterion_3_oracles():
    started = time.time()
    rng = np.random.default_rng(303)

    # k-hop vs independent BFS closure on 100 random graphs
    for trial in range(100):
        n = int(rng.integers(10, 101))
        pts = rng.uniform(0, 14, (n, 2))
        sm = StationMap([f"s{i:03d}" for i in range(n)], pts * 1000.0, "xy")
        g = build_proximity_graph(sm, 3.0, 5)
        adj = {}
        for u, v in zip(g.edge_u, g.edge_v):
            adj.setdefault(int(u), set()).add(int(v))
            adj.setdefault(int(v), set()).add(int(u))
        center = int(rng.integers(0, n))
        k = int(rng.integers(0, 4))
        sub = khop_subgraph(g, g.ids[center], k)
        seen = {center}
        frontier = [center]
        for _ in range(k):
            frontier = [v for u in frontier for v in adj.get(u, ())
                        if v not in seen and not seen.add(v)]
        assert {g.ids.index(s) for s in sub.node_ids} == seen

    # voronoi assignment vs exhaustive nearest neighbor + conservation
    st = StationMap([f"s{i:02d}" for i in range(15)],
                    rng.uniform(0, 8000, (15, 2)), "xy")
    coords = rng.uniform(0, 8000, (300, 2))
    vals = rng.uniform(0, 50, (300, 10))
    tiles = TileTraffic([f"t{i}" for i in range(300)], coords, vals, "xy")
    out = voronoi_aggregate(tiles, st)
    want = np.zeros((15, 10))
    for m in range(300):
        d = [math.hypot(*(coords[m] - st.coords[i])) for i in range(15)]
        want[int(np.argmin(d))] += vals[m]
    assert np.abs(out.values - want).max() < 1e-9
    rel = np.abs(out.values.sum(0) - vals.sum(0)) / vals.sum(0)
    assert rel.max() < 1e-9

    # metrics vs double-loop reference, 1e-10 relative
    preds = rng.uniform(0, 1e6, (100, 3))
    targets = rng.uniform(0, 1e6, (100, 3))
    from test_eval import metric_oracle
    mae_o, rmse_o = metric_oracle(preds, targets)
    err = preds - targets
    mae = [math.fsum(np.abs(err[:, h]).tolist()) / 100 for h in range(3)]
    rmse = [math.sqrt(math.fsum((err[:, h] ** 2).tolist()) / 100)
            for h in range(3)]
    for h in range(3):
        assert abs(mae[h] - mae_o[h]) <= 1e-10 * mae_o[h]
        assert abs(rmse[h] - rmse_o[h]) <= 1e-10 * rmse_o[h]
    report("3 oracle-equivalence",
           "100 BFS graphs, 300-tile Voronoi, double-loop metrics", started)


# -- criterion 4: invariance suite ---------------------------------------------

def test_criterion_4_invariances(tiny_world):
    started = time.time()
    data, graph, records = tiny_world
    r = split(data.series, SplitSpec(seed=1), 12, 3)
    scaler = standardize(data.series, r)
    vstd = scaler.transform(data.series.values)
    rng = np.random.default_rng(404)
    cfg = ModelConfig(channels=8, pooling="target")
    pset = init_parameters(cfg, 40)

    # (a) within-subgraph node permutation, eval mode, <=1e-9
    sample = r.samples["train"][rng.choice(len(r.samples["train"]), 1)]
    batch = assemble_batch(sample, records, vstd, data.station_index, 12, 3)
    base = forward(batch, pset, cfg).data
    perm = rng.permutation(batch.n_nodes)
    inv = np.argsort(perm)
    shuffled = SampleBatch(batch.histories[perm], batch.targets,
                           inv[batch.edge_src], inv[batch.edge_dst],
                           batch.offsets,
                           inv[batch.center_rows].astype(np.int64),
                           batch.stations, batch.times)
    assert np.abs(forward(shuffled, pset, cfg).data - base).max() <= 1e-9

    # (b) batch-vs-single equality, <=1e-9
    samples = r.samples["val"][
        rng.choice(len(r.samples["val"]), 6, replace=False)]
    together = forward(assemble_batch(samples, records, vstd,
                                      data.station_index, 12, 3), pset, cfg).data
    for j in range(len(samples)):
        one = forward(assemble_batch(samples[j:j + 1], records, vstd,
                                     data.station_index, 12, 3), pset, cfg).data
        assert np.abs(one[0] - together[j]).max() <= 1e-9

    # (c) locality: nodes beyond L hops never reach the target-pooled output
    found = False
    for sid in graph.ids:
        r2 = khop_subgraph(graph, sid, 2)
        r3 = khop_subgraph(graph, sid, 3)
        extra = [x for x in r3.node_ids if x not in set(r2.node_ids)]
        if extra:
            found = True
            rows = np.array([data.station_index[s] for s in r3.node_ids])
            hist = vstd[rows, 48:60]
            src = np.concatenate([r3.edge_u, r3.edge_v]).astype(np.int64)
            dst = np.concatenate([r3.edge_v, r3.edge_u]).astype(np.int64)
            b = SampleBatch(hist, np.zeros((1, 3)), src, dst,
                            np.array([0, len(rows)], dtype=np.int64),
                            np.zeros(1, dtype=np.int64),
                            np.zeros(1, dtype=np.int64),
                            np.zeros(1, dtype=np.int64))
            base = forward(b, pset, cfg).data
            hist2 = hist.copy()
            hist2[r3.node_ids.index(extra[0])] += 500.0
            b2 = SampleBatch(hist2, b.targets, src, dst, b.offsets,
                             b.center_rows, b.stations, b.times)
            assert np.array_equal(forward(b2, pset, cfg).data, base)
            break
    assert found, "no 3-hop-but-not-2-hop node in the test graph"
    report("4 invariances", "permutation 1e-9, batch-vs-single 1e-9, "
           "locality exact", started)


# -- criterion 5: overfit capacity ---------------------------------------------

def test_criterion_5_overfit():
    started = time.time()
    stations, series = generate_synthetic(12, 300, seed=3, box_km=8.0)
    graph = build_proximity_graph(stations, 4.0, 2)
    records = {i: khop_subgraph(graph, sid, 2) for i, sid in enumerate(graph.ids)}
    data = PreparedData(stations, series, {"k": 2})
    cfg = ModelConfig(channels=16)
    spec = SplitSpec(t_fractions=(0.95, 0.0, 0.05), seed=6)

    splits = split(series, spec, 12, 3)
    samples = splits.samples["train"][:64]
    targets = series.values[samples[:, 0][:, None],
                            samples[:, 1][:, None] + np.arange(3)]

    # two-phase schedule within the 200-epoch budget: coarse then fine
    tc1 = TrainConfig(batch_size=64, max_epochs=100, patience=100,
                      edge_dropout=0.0, weight_decay=0.0, seed=6,
                      learning_rate=0.03)
    pset, rep1, scaler, _ = train(data, records, cfg, tc1, spec,
                                  limit_train_samples=64)
    goal_scaled = 0.05 * targets.std() / scaler.std
    total_epochs = len(rep1.train_losses)
    best = min(rep1.train_losses)
    if best > goal_scaled:
        src = Checkpoint(pset, cfg, scaler)
        tc2 = TrainConfig(batch_size=64, max_epochs=200 - total_epochs,
                          patience=200, edge_dropout=0.0, weight_decay=0.0,
                          seed=6, learning_rate=0.004)
        _, rep2, _, _ = finetune(src, data, records, tc2, spec, scope="all",
                                 limit_train_samples=64,
                                 train_loss_goal=goal_scaled)
        total_epochs += len(rep2.train_losses)
        best = min(best, min(rep2.train_losses))

    elapsed = time.time() - started
    raw_mae = best * scaler.std
    assert total_epochs <= 200
    assert raw_mae < 0.05 * targets.std(), \
        f"train MAE {raw_mae:.0f} >= 5% of target std {0.05 * targets.std():.0f}"
    assert elapsed < 60, f"overfit run took {elapsed:.0f}s (limit 60s)"
    report("5 overfit-capacity",
           f"train MAE {raw_mae / targets.std():.1%} of std in "
           f"{total_epochs} epochs", started)


# -- criterion 6: inductive operability ------------------------------------------

def test_criterion_6_inductive_beats_graph_free():
    started = time.time()
    stations, series = generate_synthetic(75, 250, seed=100, box_km=24.0,
                                          spatial_amp=1.5e5, noise_amp=1.0e5)
    graph = build_proximity_graph(stations, 3.5, 3)
    records = {i: khop_subgraph(graph, sid, 2) for i, sid in enumerate(graph.ids)}
    data = PreparedData(stations, series, {"k": 2})
    spec = SplitSpec(v_fractions=(50 / 75, 5 / 75, 20 / 75), mode="inductive",
                     seed=0)
    flex, free = [], []
    for seed in (0, 1, 2):
        tcfg = TrainConfig(batch_size=512, max_epochs=6, patience=6, seed=seed,
                           learning_rate=0.02)
        cfg = ModelConfig(channels=16)
        p1, _, sc1, sp1 = train(data, records, cfg, tcfg, spec)
        assert len(sp1.nodes["train"]) == 50 and len(sp1.nodes["test"]) == 20
        assert not set(sp1.nodes["train"]) & set(sp1.nodes["test"])
        rep1 = evaluate(p1, cfg, sc1, data, records, sp1.samples["test"])
        flex.append(float(np.mean(rep1.mae)))

        cfg_free = ModelConfig(channels=16, graph_free=True)
        p2, _, sc2, sp2 = train(data, records, cfg_free, tcfg, spec)
        rep2 = evaluate(p2, cfg_free, sc2, data, records, sp2.samples["test"])
        free.append(float(np.mean(rep2.mae)))

    elapsed = time.time() - started
    assert np.mean(flex) < np.mean(free), \
        f"graph model {np.mean(flex):.0f} not better than ablation {np.mean(free):.0f}"
    assert elapsed < 600, f"inductive suite took {elapsed:.0f}s (limit 600s)"
    report("6 inductive-operability",
           f"held-out MAE {np.mean(flex):.0f} < graph-free {np.mean(free):.0f} "
           f"(3-seed mean)", started)


# -- criterion 7: transfer trend -------------------------------------------------

def test_criterion_7_transfer_trend():
    started = time.time()

    def make_city(seed):
        st, se = generate_synthetic(40, 400, seed=seed, box_km=18.0,
                                    spatial_amp=1.2e5, noise_amp=8e4)
        g = build_proximity_graph(st, 3.5, 3)
        rec = {i: khop_subgraph(g, sid, 2) for i, sid in enumerate(g.ids)}
        return PreparedData(st, se, {"k": 2}), rec

    src_data, src_rec = make_city(200)
    tgt_data, tgt_rec = make_city(201)
    cfg = ModelConfig(channels=16)
    spec_full = SplitSpec(seed=0)
    spec_scarce = SplitSpec(scarcity_rate=0.05, seed=0)

    ft, scratch = [], []
    for seed in (0, 1, 2):
        tc_src = TrainConfig(batch_size=512, max_epochs=4, patience=4,
                             seed=seed, learning_rate=0.02)
        src_pset, _, src_scaler, _ = train(src_data, src_rec, cfg, tc_src,
                                           spec_full)
        source = Checkpoint(src_pset, cfg, src_scaler)

        tc_t = TrainConfig(batch_size=128, max_epochs=30, patience=30,
                           seed=seed, learning_rate=0.02)
        ps, _, sc_s, sp_s = train(tgt_data, tgt_rec, cfg, tc_t, spec_scarce)
        scratch.append(float(np.mean(evaluate(
            ps, cfg, sc_s, tgt_data, tgt_rec, sp_s.samples["test"]).mae)))
        pf, _, sc_f, sp_f = finetune(source, tgt_data, tgt_rec, tc_t,
                                     spec_scarce, scope="all")
        ft.append(float(np.mean(evaluate(
            pf, cfg, sc_f, tgt_data, tgt_rec, sp_f.samples["test"]).mae)))

    elapsed = time.time() - started
    assert np.mean(ft) <= np.mean(scratch), \
        f"finetuned {np.mean(ft):.0f} worse than scratch {np.mean(scratch):.0f}"
    assert elapsed < 900, f"transfer suite took {elapsed:.0f}s (limit 900s)"
    report("7 transfer-trend",
           f"5% data: finetuned {np.mean(ft):.0f} <= scratch "
           f"{np.mean(scratch):.0f} (3-seed mean)", started)


# -- criterion 8: parameter accounting -------------------------------------------

def test_criterion_8_parameter_accounting():
    started = time.time()
    cfg = ModelConfig()
    runtime = count_parameters(init_parameters(cfg, 0))
    formula = closed_form_count(cfg)
    assert runtime == formula, f"runtime {runtime} != closed form {formula}"
    reference = 140970
    delta = reference - runtime
    print(f"\n  default-config parameters: {runtime}")
    print(f"  reference row reports:     {reference}")
    print(f"  delta: {delta} (accounting itemized in README.md: this "
          f"architecture has no conv biases and C/|K|-channel branches; the "
          f"reference row's exact accounting is not stated)")
    report("8 parameter-accounting",
           f"runtime == closed form == {runtime}; delta vs {reference} "
           f"documented", started)


# -- criterion 9: pipeline determinism -------------------------------------------

def test_criterion_9_pipeline_determinism(tmp_path):
    started = time.time()
    from flexcast.cli import main
    outputs = []
    for tag in ("a", "b"):
        base = tmp_path / tag
        raw, prep = base / "raw", base / "prep"
        ckpt = base / "m.ckpt"
        csv = base / "metrics.csv"
        assert main(["gen-synthetic", "--out", str(raw), "--stations", "12",
                     "--steps", "220", "--seed", "9"]) == 0
        assert main(["prepare", "--stations", str(raw / "stations.csv"),
                     "--traffic", str(raw / "traffic.csv"), "--no-voronoi",
                     "--out", str(prep), "--kappa", "7", "--max-degree", "3"]) == 0
        assert main(["train", "--data", str(prep), "--out", str(ckpt),
                     "--seed", "9", "--epochs", "3", "--batch-size", "512"]) == 0
        assert main(["evaluate", "--ckpt", str(ckpt), "--data", str(prep),
                     "--out", str(csv)]) == 0
        outputs.append({
            "stations": (raw / "stations.csv").read_bytes(),
            "traffic": (raw / "traffic.csv").read_bytes(),
            "dataset": (prep / "dataset.flx").read_bytes(),
            "store": (prep / "subgraphs.flx").read_bytes(),
            "ckpt": ckpt.read_bytes(),
            "report": open(str(ckpt) + ".report.json", "rb").read(),
            "metrics": csv.read_bytes(),
        })
    for key in outputs[0]:
        assert outputs[0][key] == outputs[1][key], f"{key} differs between runs"
    report("9 determinism", "checkpoints, reports, metrics bitwise equal",
           started)


# -- criterion 10: hyperparameter defaults ---------------------------------------

def test_criterion_10_default_config_snapshot():
    started = time.time()
    snap = RunConfig().snapshot()
    assert snap["train"]["learning_rate"] == 0.009
    assert snap["train"]["edge_dropout"] == 0.05
    assert snap["model"]["dilation_base"] == 1
    assert snap["model"]["channels"] == 64
    assert snap["model"]["layers"] == 2
    assert snap["train"]["weight_decay"] == 1e-5
    assert snap["model"]["kernel_sizes"] == [1, 3]
    assert snap["train"]["batch_size"] == 4096
    assert snap["model"]["pooling"] == "target"
    assert snap["model"]["t_history"] == 12
    assert snap["model"]["t_horizon"] == 3
    assert snap["graph"] == {"kappa_km": 3.5, "max_degree": 10, "k": 2}
    assert snap["split"]["t_fractions"] == [0.7, 0.1, 0.2]
    report("10 hyperparameter-defaults", "bare config equals tuned values",
           started)
