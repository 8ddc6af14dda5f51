"""Synthetic station maps and traffic with daily/weekly cycles, a spatially
correlated component, and seeded noise.

Stations are placed uniformly in a planar box.  Each station mixes a small
set of latent anchor signals with distance-decayed weights, so nearby
stations share dynamics (what the graph model can exploit) while the
per-station noise is independent (what neighbor aggregation averages out).
"""

from __future__ import annotations

import numpy as np

from .data import TrafficSeries
from .errors import DataError
from .graph import StationMap


def generate_synthetic(n_stations: int, n_timesteps: int, seed: int,
                       box_km: float = 20.0, resolution_min: int = 15,
                       base_level: float = 5e5, daily_amp: float = 2e5,
                       weekly_amp: float = 4e4, spatial_amp: float = 1e5,
                       noise_amp: float = 6e4, n_anchors: int = 4,
                       anchor_scale_km: float = 6.0,
                       ) -> tuple[StationMap, TrafficSeries]:
    if n_stations < 2:
        raise DataError("synthetic generation needs at least 2 stations")
    rng = np.random.default_rng([seed, 19])

    coords = rng.uniform(0.0, box_km * 1000.0, size=(n_stations, 2))
    width = len(str(n_stations - 1))
    ids = [f"s{i:0{width}d}" for i in range(n_stations)]
    stations = StationMap(ids, coords, "xy")
    # StationMap sorts by id; zero-padded ids keep the original order

    steps_per_day = 24 * 60 // resolution_min
    t = np.arange(n_timesteps)
    day_phase = 2 * np.pi * t / steps_per_day
    week_phase = day_phase / 7.0

    anchors = rng.uniform(0.0, box_km * 1000.0, size=(n_anchors, 2))
    d_km = np.sqrt(((coords[:, None, :] - anchors[None, :, :]) ** 2).sum(2)) / 1000.0
    mix = np.exp(-d_km / anchor_scale_km)
    mix /= mix.sum(axis=1, keepdims=True)

    # slowly varying latent per anchor: AR(1)-smoothed noise
    latent = np.zeros((n_anchors, n_timesteps))
    shocks = rng.standard_normal((n_anchors, n_timesteps))
    alpha = 0.98
    for j in range(1, n_timesteps):
        latent[:, j] = alpha * latent[:, j - 1] + np.sqrt(1 - alpha**2) * shocks[:, j]

    # spatially smooth daily amplitude and phase fields via the same mixing
    anchor_amp = rng.uniform(0.8, 1.4, size=n_anchors)
    anchor_phase = rng.uniform(0.0, 2 * np.pi, size=n_anchors)
    amp_i = mix @ anchor_amp
    phase_i = mix @ anchor_phase

    daily = daily_amp * amp_i[:, None] * np.sin(day_phase[None, :] + phase_i[:, None])
    weekly = weekly_amp * np.sin(week_phase[None, :] + phase_i[:, None] / 3.0)
    spatial = spatial_amp * (mix @ latent)
    noise = noise_amp * rng.standard_normal((n_stations, n_timesteps))

    values = np.clip(base_level + daily + weekly + spatial + noise, 0.0, None)
    return stations, TrafficSeries(ids, values, resolution_min)
