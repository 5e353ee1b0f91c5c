"""Deterministic synthetic scenario builders.

Three stock layouts: a single-swarm optimizer instance (two workers, two
coordinators, ten devices), a multi-swarm learning instance, and the
eight-cluster / three-swarm / two-station trajectory world with inter-site
distances in the 500-2000 m range.
"""

from __future__ import annotations

import numpy as np

from .netmodel import (ChannelParams, Device, DeviceCluster, Scenario, Swarm,
                       UavNode)

DEFAULT_CHANNEL = dict(
    n0_dbm_hz=-174.0, alpha_pl=2.0, eta_los_db=3.0, eta_nlos_db=23.0,
    f_tx_hz=2.0e9, psi_tx=11.95, beta_tx=0.14, bandwidth_hz=2.0e6,
    bits_per_datapoint=5000.0, bits_per_model=2.5e5)


def default_channel(**overrides) -> ChannelParams:
    params = dict(DEFAULT_CHANNEL)
    params.update(overrides)
    return ChannelParams.from_db(**params)


def _spread_positions(center, n, radius, rng, altitude=0.0):
    angle = rng.uniform(0, 2 * np.pi, n)
    r = radius * np.sqrt(rng.uniform(0.15, 1.0, n))
    return [np.array([center[0] + r[i] * np.cos(angle[i]),
                      center[1] + r[i] * np.sin(angle[i]), altitude])
            for i in range(n)]


def make_cluster(cid: str, center, n_devices: int, rng,
                 data_lo: int = 600, data_hi: int = 1000,
                 buffer_capacity: int = 1500, radius: float = 120.0,
                 power_dbm_lo: float = 23.0,
                 power_dbm_hi: float = 25.0) -> DeviceCluster:
    positions = _spread_positions(center, n_devices, radius, rng)
    devices = []
    for i, pos in enumerate(positions):
        power_w = 10 ** (rng.uniform(power_dbm_lo, power_dbm_hi) / 10) * 1e-3
        size = int(rng.integers(data_lo, data_hi + 1))
        devices.append(Device(f"{cid}.d{i}", pos, power_w, buffer_capacity,
                              data_size=size))
    return DeviceCluster(cid, np.asarray(center, float), devices)


def make_swarm(sid: str, center, n_workers: int, n_coordinators: int, rng,
               altitude_lo: float = 25.0, altitude_hi: float = 30.0,
               hover_w: float = 120.0, leader_hover_w: float = 150.0,
               battery_j: float = 60_000.0, reserve_j: float = 6_000.0,
               worker_buffer: int = 6000, coord_buffer: int = 4000,
               cpu_min_hz: float = 0.3e9, cpu_max_hz: float = 2.3e9,
               capacitance: float = 3e-28, cycles_per_datapoint: float = 2e6,
               move_j_per_m: float = 40.0,
               leader_move_j_per_m: float = 30.0) -> Swarm:
    tx_w = 10 ** (20.0 / 10) * 1e-3  # 20 dBm
    spots = _spread_positions(center, n_workers + n_coordinators + 1, 60.0, rng)

    def altitude():
        return float(rng.uniform(altitude_lo, altitude_hi))

    leader = UavNode(f"{sid}.L", "leader",
                     np.array([spots[0][0], spots[0][1], altitude()]),
                     tx_w, leader_hover_w, battery_j * 1.5, reserve_j)
    workers = []
    for i in range(n_workers):
        p = spots[1 + i]
        workers.append(UavNode(
            f"{sid}.w{i}", "worker", np.array([p[0], p[1], altitude()]),
            tx_w, hover_w, battery_j, reserve_j, buffer_capacity=worker_buffer,
            cpu_min_hz=cpu_min_hz, cpu_max_hz=cpu_max_hz,
            capacitance=capacitance, cycles_per_datapoint=cycles_per_datapoint))
    coordinators = []
    for i in range(n_coordinators):
        p = spots[1 + n_workers + i]
        coordinators.append(UavNode(
            f"{sid}.c{i}", "coordinator", np.array([p[0], p[1], altitude()]),
            tx_w, hover_w, battery_j, reserve_j, buffer_capacity=coord_buffer))
    return Swarm(sid, leader, workers, coordinators,
                 move_j_per_m=move_j_per_m,
                 leader_move_j_per_m=leader_move_j_per_m)


def optimizer_scenario(seed: int = 0) -> Scenario:
    """Single swarm (2 workers + 2 coordinators) over a 10-device cluster."""
    rng = np.random.default_rng(seed)
    c0 = make_cluster("C1", (0.0, 0.0), 10, rng)
    c1 = make_cluster("C2", (900.0, 0.0), 8, rng)
    swarm = make_swarm("U1", (0.0, 0.0), 2, 2, rng)
    return Scenario([c0, c1], [swarm], stations=[np.array([450.0, 300.0, 0.0])],
                    access_points=[np.array([200.0, 100.0, 35.0])],
                    channel=default_channel(), name=f"optimizer-{seed}")


def _site_layout(n_sites: int, rng, d_min: float = 500.0,
                 d_max: float = 2000.0, tries: int = 4000):
    """Random planar sites with pairwise distances inside [d_min, d_max]."""
    box = d_max / np.sqrt(2.0)
    for _ in range(tries):
        pts = rng.uniform(0, box, size=(n_sites, 2))
        d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
        off = d[~np.eye(n_sites, dtype=bool)]
        if off.min() >= d_min and off.max() <= d_max:
            return pts
    raise RuntimeError("could not place sites within the distance band")


def trajectory_scenario(seed: int = 0, n_clusters: int = 8, n_stations: int = 2,
                        n_swarms: int = 3) -> Scenario:
    """Default trajectory world: 8 clusters, 2 stations, 3 swarms."""
    rng = np.random.default_rng(seed)
    sites = _site_layout(n_clusters + n_stations, rng)
    clusters = []
    for i in range(n_clusters):
        n_dev = int(rng.integers(8, 11))
        clusters.append(make_cluster(f"C{i + 1}", sites[i], n_dev, rng))
    stations = [np.array([sites[n_clusters + i][0], sites[n_clusters + i][1], 0.0])
                for i in range(n_stations)]
    swarms = []
    for i in range(n_swarms):
        n_workers = int(rng.integers(3, 6))
        n_coord = int(rng.integers(1, 3))
        swarms.append(make_swarm(f"U{i + 1}", sites[i], n_workers, n_coord, rng,
                                 battery_j=120_000.0, reserve_j=12_000.0))
    aps = [np.array([sites[:n_clusters, 0].mean(), sites[:n_clusters, 1].mean(), 35.0])]
    return Scenario(clusters, swarms, stations, aps, default_channel(),
                    name=f"trajectory-{seed}")


def learning_scenario(seed: int = 0, n_swarms: int = 4) -> Scenario:
    """Multi-swarm world for the learning benchmarks (one cluster per swarm
    plus a spare, satisfying the swarms < clusters invariant)."""
    rng = np.random.default_rng(seed)
    sites = _site_layout(n_swarms + 1, rng)
    clusters = [make_cluster(f"C{i + 1}", sites[i], int(rng.integers(8, 11)), rng)
                for i in range(n_swarms + 1)]
    swarms = [make_swarm(f"U{i + 1}", sites[i], int(rng.integers(2, 4)), 1, rng)
              for i in range(n_swarms)]
    stations = [np.array([sites[:, 0].mean(), sites[:, 1].mean(), 0.0])]
    aps = [np.array([sites[:, 0].mean(), sites[:, 1].mean(), 35.0])]
    return Scenario(clusters, swarms, stations, aps, default_channel(),
                    name=f"learning-{seed}")
