"""Station proximity graph, k-hop subgraph extraction, and edge dropout.

Stations are connected when their geographical distance is below a threshold
kappa (km); edge weight is exp(-dist_km).  The graph is then sparsified by
keeping, per node, the max_degree nearest neighbors; an edge survives if
either endpoint keeps it, so the true degree can exceed the cap through edges
kept by the neighbor (reported, not clamped).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DataError

EARTH_RADIUS_KM = 6371.0088


@dataclass
class StationMap:
    """Station ids with planar (x_m, y_m in meters) or lat/lon positions.

    Stations are kept sorted by id; this order defines graph node order and
    traffic series row order everywhere downstream.
    """

    ids: list[str]
    coords: np.ndarray  # [N, 2] float64
    coord_mode: str  # "xy" (meters) or "latlon" (degrees)

    def __post_init__(self):
        if len(self.ids) != len(set(self.ids)):
            raise DataError("duplicate station ids")
        if self.coord_mode not in ("xy", "latlon"):
            raise DataError(f"unknown coordinate mode: {self.coord_mode}")
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if not np.all(np.isfinite(self.coords)):
            raise DataError("non-finite station coordinates")
        order = sorted(range(len(self.ids)), key=lambda i: self.ids[i])
        if order != list(range(len(self.ids))):
            self.ids = [self.ids[i] for i in order]
            self.coords = self.coords[order]

    def __len__(self):
        return len(self.ids)

    def index_of(self, station_id: str) -> int:
        try:
            return self.ids.index(station_id)
        except ValueError:
            raise KeyError(f"unknown station id: {station_id}") from None


def pairwise_km(a: np.ndarray, b: np.ndarray, coord_mode: str) -> np.ndarray:
    """Distance matrix [len(a), len(b)] in kilometers."""
    if coord_mode == "xy":
        diff = a[:, None, :] - b[None, :, :]
        return np.sqrt((diff**2).sum(axis=2)) / 1000.0
    return haversine_km(a[:, None, :], b[None, :, :])


def haversine_km(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Great-circle distance between (lat, lon) points in degrees."""
    lat1, lon1 = np.radians(p[..., 0]), np.radians(p[..., 1])
    lat2, lon2 = np.radians(q[..., 0]), np.radians(q[..., 1])
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = np.sin(dlat / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


@dataclass
class ProximityGraph:
    ids: list[str]
    # undirected edge list with u < v
    edge_u: np.ndarray
    edge_v: np.ndarray
    edge_w: np.ndarray
    kappa_km: float
    max_degree: int
    n_components: int = 1
    # adjacency lists, built lazily: neighbors[i] = (sorted indices, weights)
    _adj: Optional[list] = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.ids)

    @property
    def n_edges(self) -> int:
        return len(self.edge_u)

    def neighbors(self, i: int):
        if self._adj is None:
            adj = [[] for _ in range(self.n_nodes)]
            for u, v, w in zip(self.edge_u, self.edge_v, self.edge_w):
                adj[u].append((v, w))
                adj[v].append((u, w))
            self._adj = [
                (
                    np.array([j for j, _ in sorted(lst)], dtype=np.int64),
                    np.array([w for _, w in sorted(lst)], dtype=np.float64),
                )
                for lst in adj
            ]
        return self._adj[i]

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_nodes, dtype=np.int64)
        np.add.at(deg, self.edge_u, 1)
        np.add.at(deg, self.edge_v, 1)
        return deg


def build_proximity_graph(stations: StationMap, kappa_km: float = 3.5,
                          max_degree: int = 10) -> ProximityGraph:
    """Edges where dist < kappa (strict), weight exp(-dist_km), then per-node
    nearest-max_degree sparsification with keep-if-either-endpoint union."""
    if len(stations) < 1:
        raise DataError("need at least one station")
    if kappa_km <= 0 or max_degree < 1:
        raise DataError("kappa_km must be > 0 and max_degree >= 1")
    n = len(stations)
    dist = pairwise_km(stations.coords, stations.coords, stations.coord_mode)
    np.fill_diagonal(dist, np.inf)

    kept = set()
    for i in range(n):
        cand = np.where(dist[i] < kappa_km)[0]
        if len(cand) > max_degree:
            # nearest first; ties broken by node index for determinism
            order = np.lexsort((cand, dist[i][cand]))
            cand = cand[order[:max_degree]]
        for j in cand:
            kept.add((min(i, int(j)), max(i, int(j))))

    if kept:
        edges = np.array(sorted(kept), dtype=np.int64)
        eu, ev = edges[:, 0], edges[:, 1]
        ew = np.exp(-dist[eu, ev])
    else:
        eu = np.zeros(0, dtype=np.int64)
        ev = np.zeros(0, dtype=np.int64)
        ew = np.zeros(0, dtype=np.float64)

    g = ProximityGraph(list(stations.ids), eu, ev, ew, kappa_km, max_degree)
    g.n_components = _count_components(g)
    return g


def _count_components(g: ProximityGraph) -> int:
    seen = np.zeros(g.n_nodes, dtype=bool)
    comps = 0
    for start in range(g.n_nodes):
        if seen[start]:
            continue
        comps += 1
        stack = [start]
        seen[start] = True
        while stack:
            i = stack.pop()
            nbrs, _ = g.neighbors(i)
            for j in nbrs:
                if not seen[j]:
                    seen[j] = True
                    stack.append(int(j))
    return comps


@dataclass
class SubgraphRecord:
    """Induced <=k-hop subgraph around one center station.

    node_ids are global station ids with the center first; edges are local
    index pairs (u < v) with weights copied from the proximity graph.
    """

    center_id: str
    k: int
    node_ids: list[str]
    edge_u: np.ndarray
    edge_v: np.ndarray
    edge_w: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_edges(self) -> int:
        return len(self.edge_u)

    def dense_adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_nodes, self.n_nodes), dtype=np.float64)
        a[self.edge_u, self.edge_v] = self.edge_w
        a[self.edge_v, self.edge_u] = self.edge_w
        return a

    def to_bytes(self) -> bytes:
        parts = [struct.pack("<I", self.k), struct.pack("<I", self.n_nodes)]
        for sid in self.node_ids:
            raw = sid.encode("utf-8")
            parts.append(struct.pack("<H", len(raw)))
            parts.append(raw)
        parts.append(struct.pack("<I", self.n_edges))
        parts.append(self.edge_u.astype("<u4").tobytes())
        parts.append(self.edge_v.astype("<u4").tobytes())
        parts.append(self.edge_w.astype("<f8").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "SubgraphRecord":
        off = 0
        k, n_nodes = struct.unpack_from("<II", buf, off)
        off += 8
        ids = []
        for _ in range(n_nodes):
            (ln,) = struct.unpack_from("<H", buf, off)
            off += 2
            ids.append(buf[off:off + ln].decode("utf-8"))
            off += ln
        (n_edges,) = struct.unpack_from("<I", buf, off)
        off += 4
        eu = np.frombuffer(buf, dtype="<u4", count=n_edges, offset=off).astype(np.int64)
        off += 4 * n_edges
        ev = np.frombuffer(buf, dtype="<u4", count=n_edges, offset=off).astype(np.int64)
        off += 4 * n_edges
        ew = np.frombuffer(buf, dtype="<f8", count=n_edges, offset=off).copy()
        return cls(ids[0], k, ids, eu, ev, ew)


def khop_subgraph(g: ProximityGraph, center_id: str, k: int) -> SubgraphRecord:
    """BFS closure to depth k with the center at local index 0, plus the
    induced adjacency over the closure."""
    try:
        center = g.ids.index(center_id)
    except ValueError:
        raise KeyError(f"unknown center station: {center_id}") from None
    if k < 0:
        raise DataError(f"hop count must be >= 0, got {k}")

    local = {center: 0}
    order = [center]
    frontier = [center]
    for _ in range(k):
        nxt = []
        for i in frontier:
            nbrs, _ = g.neighbors(i)
            for j in nbrs:
                j = int(j)
                if j not in local:
                    local[j] = len(order)
                    order.append(j)
                    nxt.append(j)
        frontier = nxt

    eu, ev, ew = [], [], []
    for i in order:
        nbrs, ws = g.neighbors(i)
        for j, w in zip(nbrs, ws):
            j = int(j)
            if j in local and i < j:
                eu.append(local[i])
                ev.append(local[j])
                ew.append(float(w))
    lu = np.array(eu, dtype=np.int64)
    lv = np.array(ev, dtype=np.int64)
    # normalize to u < v over local indices
    swap = lu > lv
    lu2 = np.where(swap, lv, lu)
    lv2 = np.where(swap, lu, lv)
    return SubgraphRecord(center_id, k, [g.ids[i] for i in order], lu2, lv2,
                          np.array(ew, dtype=np.float64))


def edge_dropout(sub: SubgraphRecord, p: float, rng) -> SubgraphRecord:
    """Independently remove each undirected edge with probability p.

    Nodes and surviving weights are untouched.  rng may be a seed or a
    numpy Generator; a fixed seed gives bitwise-identical output.
    """
    if not 0.0 <= p < 1.0:
        raise DataError(f"dropout probability must be in [0, 1), got {p}")
    if p == 0.0 or sub.n_edges == 0:
        return SubgraphRecord(sub.center_id, sub.k, list(sub.node_ids),
                              sub.edge_u.copy(), sub.edge_v.copy(), sub.edge_w.copy())
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    keep = rng.random(sub.n_edges) >= p
    return SubgraphRecord(sub.center_id, sub.k, list(sub.node_ids),
                          sub.edge_u[keep], sub.edge_v[keep], sub.edge_w[keep])
