"""Static world model: clusters, stratified swarms, stations, access points,
plus the air-to-air / air-to-ground channel, data-rate, and energy formulas.

Unit conventions: file-facing quantities are meters and dBm; everything held
in memory is linear scale (watts, joules, Hz).  The dB-to-linear conversion
happens exactly once, when a scenario document is loaded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintViolation, DomainError

C_LIGHT = 3.0e8  # m/s


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def distance(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a, float) - np.asarray(b, float)))


@dataclass
class ChannelParams:
    """Channel constants, stored linear-scale.

    Use :meth:`from_db` for the file-facing dBm/dB representation.
    """

    noise_w_per_hz: float       # N0, W/Hz
    alpha_pl: float             # path-loss exponent
    eta_los: float              # excess LoS loss, linear (> 1)
    eta_nlos: float             # excess NLoS loss, linear (> eta_los)
    f_tx_hz: float              # carrier frequency
    psi_tx: float               # LoS-probability environment constant
    beta_tx: float              # LoS-probability environment constant
    bandwidth_hz: float
    bits_per_datapoint: float
    bits_per_model: float

    def __post_init__(self):
        for name in ("noise_w_per_hz", "alpha_pl", "eta_los", "eta_nlos",
                     "f_tx_hz", "psi_tx", "beta_tx", "bandwidth_hz",
                     "bits_per_datapoint", "bits_per_model"):
            if getattr(self, name) <= 0:
                raise ValueError(f"channel parameter {name} must be positive")
        if self.eta_nlos <= self.eta_los:
            raise ValueError("excess NLoS loss must exceed excess LoS loss")

    @classmethod
    def from_db(cls, n0_dbm_hz: float, alpha_pl: float, eta_los_db: float,
                eta_nlos_db: float, f_tx_hz: float, psi_tx: float,
                beta_tx: float, bandwidth_hz: float, bits_per_datapoint: float,
                bits_per_model: float) -> "ChannelParams":
        return cls(dbm_to_watts(n0_dbm_hz), alpha_pl, db_to_linear(eta_los_db),
                   db_to_linear(eta_nlos_db), f_tx_hz, psi_tx, beta_tx,
                   bandwidth_hz, bits_per_datapoint, bits_per_model)

    @property
    def mu_tx(self) -> float:
        return 4.0 * math.pi * self.f_tx_hz / C_LIGHT

    @property
    def noise_power_w(self) -> float:
        return self.noise_w_per_hz * self.bandwidth_hz


@dataclass
class Device:
    """IoT device with a bounded deque buffer; new points displace oldest."""

    id: str
    position: np.ndarray
    power_w: float
    buffer_capacity: int
    data_size: int = 0    # current D~_i, datapoints
    dataset: object = None  # optional learner.Dataset backing the buffer

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        if self.dataset is not None:
            self.data_size = len(self.dataset)
        if self.data_size > self.buffer_capacity:
            raise ValueError(f"device {self.id}: data exceeds buffer capacity")

    def push(self, n_points: int) -> int:
        """Collect n new points; returns how many old points were displaced."""
        total = self.data_size + n_points
        displaced = max(0, total - self.buffer_capacity)
        self.data_size = min(total, self.buffer_capacity)
        return displaced

    def attach_dataset(self, dataset) -> None:
        """Back the buffer with real datapoints, truncating to capacity.

        Keeps the newest points when the dataset exceeds the buffer (deque
        semantics: oldest displaced first).
        """
        if len(dataset) > self.buffer_capacity:
            dataset = dataset.subset(
                np.arange(len(dataset) - self.buffer_capacity, len(dataset)))
        self.dataset = dataset
        self.data_size = len(dataset)


@dataclass
class DeviceCluster:
    id: str
    center: np.ndarray
    devices: list[Device]

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)

    def device(self, dev_id: str) -> Device:
        for d in self.devices:
            if d.id == dev_id:
                return d
        raise KeyError(dev_id)


@dataclass
class UavNode:
    id: str
    role: str  # leader | worker | coordinator
    position: np.ndarray
    power_w: float
    hover_power_w: float     # psi^F, J per iteration slot
    battery_j: float
    reserve_j: float         # E^Th
    buffer_capacity: int = 0
    cpu_min_hz: float = 0.0
    cpu_max_hz: float = 0.0
    capacitance: float = 0.0        # effective chipset capacitance a_j
    cycles_per_datapoint: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        if self.reserve_j >= self.battery_j:
            raise ValueError(f"uav {self.id}: reserve threshold must be below battery")
        if self.role == "worker" and not (0 < self.cpu_min_hz <= self.cpu_max_hz):
            raise ValueError(f"worker {self.id}: need 0 < cpu_min <= cpu_max")


@dataclass
class Swarm:
    id: str
    leader: UavNode
    workers: list[UavNode]
    coordinators: list[UavNode]
    move_j_per_m: float = 0.0         # whole-swarm travel cost, trajectory layer
    leader_move_j_per_m: float = 0.0  # psi^M, leader round trips to the AP

    def __post_init__(self):
        if not self.workers:
            raise ValueError(f"swarm {self.id}: worker set must be nonempty")

    @property
    def members(self) -> list[UavNode]:
        return [self.leader] + self.workers + self.coordinators

    @property
    def non_leaders(self) -> list[UavNode]:
        return self.workers + self.coordinators

    def min_battery(self) -> float:
        return min(n.battery_j for n in self.members)


@dataclass
class Scenario:
    clusters: list[DeviceCluster]
    swarms: list[Swarm]
    stations: list[np.ndarray]
    access_points: list[np.ndarray]
    channel: ChannelParams
    name: str = "scenario"
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.stations = [np.asarray(p, float) for p in self.stations]
        self.access_points = [np.asarray(p, float) for p in self.access_points]
        problems = self.validate()
        if problems:
            raise ValueError("invalid scenario:\n  " + "\n  ".join(problems))

    def validate(self) -> list[str]:
        problems = []
        if len(self.swarms) >= len(self.clusters):
            problems.append(
                f"swarm count ({len(self.swarms)}) must be below cluster count "
                f"({len(self.clusters)})")
        seen = set()
        for sw in self.swarms:
            if sw.id in seen:
                problems.append(f"duplicate swarm id {sw.id!r}")
            seen.add(sw.id)
            for node in sw.members:
                if not np.isfinite(node.position).all():
                    problems.append(f"uav {node.id}: non-finite position")
                elif node.position[2] <= 0:
                    problems.append(f"uav {node.id}: altitude must be positive")
        for cl in self.clusters:
            for d in cl.devices:
                if not np.isfinite(d.position).all():
                    problems.append(f"device {d.id}: non-finite position")
        if not self.access_points:
            problems.append("at least one access point is required")
        return problems

    def nearest_access_point(self, position) -> tuple[int, float]:
        dists = [distance(position, ap) for ap in self.access_points]
        i = int(np.argmin(dists))
        return i, dists[i]

    def nearest_station(self, position) -> tuple[int, float]:
        dists = [distance(position, st) for st in self.stations]
        i = int(np.argmin(dists))
        return i, dists[i]

    def cluster(self, cid: str) -> DeviceCluster:
        for c in self.clusters:
            if c.id == cid:
                return c
        raise KeyError(cid)

    def swarm(self, sid: str) -> Swarm:
        for s in self.swarms:
            if s.id == sid:
                return s
        raise KeyError(sid)


# ---------------------------------------------------------------------------
# Channel and rate formulas
# ---------------------------------------------------------------------------

def pathloss_a2a(dist: float, ch: ChannelParams) -> float:
    """LoS path-loss factor eta_los * (mu_tx * d)^alpha."""
    if dist <= 0:
        raise DomainError(f"distance must be positive, got {dist}")
    return ch.eta_los * (ch.mu_tx * dist) ** ch.alpha_pl


def los_probability(delta_altitude: float, dist: float, ch: ChannelParams) -> float:
    """LoS probability from the elevation angle (degrees) between the nodes."""
    if dist <= 0:
        raise DomainError(f"distance must be positive, got {dist}")
    if not (0 < delta_altitude <= dist):
        raise DomainError(
            f"need 0 < delta_altitude <= distance, got dh={delta_altitude}, d={dist}")
    theta = math.degrees(math.asin(delta_altitude / dist))
    return 1.0 / (1.0 + ch.psi_tx * math.exp(-ch.beta_tx * (theta - ch.psi_tx)))


def pathloss_a2g(delta_altitude: float, dist: float, ch: ChannelParams) -> float:
    """Mixed LoS/NLoS path loss for ground-to-air or air-to-ground links."""
    p_los = los_probability(delta_altitude, dist, ch)
    mix = p_los * ch.eta_los + (1.0 - p_los) * ch.eta_nlos
    return (ch.mu_tx * dist) ** ch.alpha_pl * mix


def datarate(tx_power_w: float, loss: float, ch: ChannelParams) -> float:
    """Shannon rate B * log2(1 + (P / L) / sigma^2), bits per second."""
    if loss <= 0:
        raise DomainError(f"loss factor must be positive, got {loss}")
    if tx_power_w < 0:
        raise DomainError(f"transmit power must be non-negative, got {tx_power_w}")
    snr = (tx_power_w / loss) / ch.noise_power_w
    return ch.bandwidth_hz * math.log2(1.0 + snr)


def link_rate(pos_a, power_a_w: float, pos_b, ch: ChannelParams,
              kind: str) -> float:
    """Rate of an a2a or a2g/g2a link between two positioned nodes."""
    d = distance(pos_a, pos_b)
    if kind == "a2a":
        loss = pathloss_a2a(d, ch)
    elif kind in ("a2g", "g2a"):
        dh = abs(float(pos_a[2]) - float(pos_b[2]))
        loss = pathloss_a2g(dh, d, ch)
    else:
        raise ValueError(f"unknown link kind {kind!r}")
    return datarate(power_a_w, loss, ch)


# ---------------------------------------------------------------------------
# Energy model
# ---------------------------------------------------------------------------

@dataclass
class EnergyBreakdown:
    """All energy components for one swarm.

    processing / device_tx / coordinator_tx are per local-aggregation round;
    the parameter-transfer and flight components cover the whole training
    sequence.
    """

    processing: dict[str, float]        # per worker, per round
    device_tx: dict[str, float]         # per device, per round
    coordinator_tx: dict[str, float]    # per coordinator, per round
    worker_param_tx: dict[str, float]   # per worker, whole sequence
    leader_broadcast: float             # whole sequence
    uav_flight: dict[str, float]        # per non-leader UAV, whole sequence
    leader_flight: float                # whole sequence

    def per_round_total(self) -> float:
        return (sum(self.processing.values()) + sum(self.device_tx.values())
                + sum(self.coordinator_tx.values()))

    def sequence_total(self, rounds: int) -> float:
        return (rounds * self.per_round_total() + sum(self.worker_param_tx.values())
                + self.leader_broadcast + sum(self.uav_flight.values())
                + self.leader_flight)

    def worker_energy_lhs(self, worker_id: str, rounds: int) -> float:
        """Total worker drain: processing over all rounds + parameter tx + flight."""
        return (rounds * self.processing[worker_id]
                + self.worker_param_tx[worker_id] + self.uav_flight[worker_id])

    def coordinator_energy_lhs(self, coord_id: str, rounds: int) -> float:
        return rounds * self.coordinator_tx[coord_id] + self.uav_flight[coord_id]


def plan_violations(plan, swarm: Swarm, cluster: DeviceCluster, schedule,
                    ch: ChannelParams, zeta_local: float,
                    tol: float = 1e-9) -> list[str]:
    """Check an offload plan against every problem constraint.

    Returns a list of human-readable violations (empty when feasible).
    ``plan`` needs .rho[(dev,uav)], .varrho[(coord,worker)], .alpha[worker]
    (3-tuple), .g[worker]; ``schedule`` needs .tau_l, .k_l, .k_g, .t_total.
    """
    problems = []
    hat_u = swarm.workers + swarm.coordinators
    worker_ids = [w.id for w in swarm.workers]
    coord_ids = [c.id for c in swarm.coordinators]

    for dev in cluster.devices:
        s = sum(plan.rho.get((dev.id, u.id), 0.0) for u in hat_u)
        if s > 1.0 + tol:
            problems.append(
                f"device {dev.id}: offload fractions sum to {s:.6f} > 1")
        for u in hat_u:
            r = plan.rho.get((dev.id, u.id), 0.0)
            if not (-tol <= r <= 1.0 + tol):
                problems.append(f"rho[{dev.id},{u.id}]={r:.6f} outside [0, 1]")
    for cid in coord_ids:
        s = sum(plan.varrho.get((cid, w), 0.0) for w in worker_ids)
        if s > 1.0 + tol:
            problems.append(
                f"coordinator {cid}: relay fractions sum to {s:.6f} > 1")
        for w in worker_ids:
            r = plan.varrho.get((cid, w), 0.0)
            if not (-tol <= r <= 1.0 + tol):
                problems.append(f"varrho[{cid},{w}]={r:.6f} outside [0, 1]")

    d_coord = coordinator_data(plan, swarm, cluster)
    d_work = worker_data(plan, swarm, cluster)
    for c in swarm.coordinators:
        if d_coord[c.id] > c.buffer_capacity + tol:
            problems.append(
                f"coordinator {c.id}: gathered data {d_coord[c.id]:.3f} exceeds "
                f"buffer {c.buffer_capacity}")
    for w in swarm.workers:
        if d_work[w.id] > w.buffer_capacity + tol:
            problems.append(
                f"worker {w.id}: gathered data {d_work[w.id]:.3f} exceeds "
                f"buffer {w.buffer_capacity}")
        a1, a2, a3 = plan.alpha[w.id]
        for name, a in zip(("a1", "a2", "a3"), (a1, a2, a3)):
            if not (0.0 < a <= 1.0 + tol):
                problems.append(f"worker {w.id}: batch ratio {name}={a:.6f} outside (0, 1]")
        g = plan.g[w.id]
        if not (w.cpu_min_hz - tol * w.cpu_min_hz <= g <= w.cpu_max_hz * (1 + tol)):
            problems.append(
                f"worker {w.id}: cpu frequency {g:.4g} outside "
                f"[{w.cpu_min_hz:.4g}, {w.cpu_max_hz:.4g}]")

    gather = gather_times(plan, swarm, cluster, ch)
    for w in swarm.workers:
        a = sum(plan.alpha[w.id])
        t_proc = schedule.tau_l * w.cycles_per_datapoint * a * d_work[w.id] / plan.g[w.id]
        if gather[w.id] + t_proc > zeta_local * (1 + 1e-6) + tol:
            problems.append(
                f"worker {w.id}: gather+process time {gather[w.id] + t_proc:.4f}s "
                f"exceeds local window {zeta_local}s")
    for c in swarm.coordinators:
        if gather[c.id] > zeta_local * (1 + 1e-6) + tol:
            problems.append(
                f"coordinator {c.id}: gather time {gather[c.id]:.4f}s exceeds "
                f"local window {zeta_local}s")

    eb = _energy_components(plan, swarm, cluster, schedule, ch)
    for w in swarm.workers:
        lhs = eb.worker_energy_lhs(w.id, schedule.k_l)
        budget = w.battery_j - w.reserve_j
        if lhs > budget * (1 + 1e-9) + tol:
            problems.append(
                f"worker {w.id}: sequence energy {lhs:.1f}J exceeds budget {budget:.1f}J")
    for c in swarm.coordinators:
        lhs = eb.coordinator_energy_lhs(c.id, schedule.k_l)
        budget = c.battery_j - c.reserve_j
        if lhs > budget * (1 + 1e-9) + tol:
            problems.append(
                f"coordinator {c.id}: sequence energy {lhs:.1f}J exceeds budget {budget:.1f}J")
    lead = swarm.leader
    lhs = eb.leader_broadcast + eb.leader_flight
    budget = lead.battery_j - lead.reserve_j
    if lhs > budget * (1 + 1e-9) + tol:
        problems.append(
            f"leader {lead.id}: sequence energy {lhs:.1f}J exceeds budget {budget:.1f}J")
    return problems


def coordinator_data(plan, swarm: Swarm, cluster: DeviceCluster) -> dict[str, float]:
    """Datapoints gathered by each coordinator from the cluster devices."""
    out = {}
    for c in swarm.coordinators:
        out[c.id] = sum(plan.rho.get((d.id, c.id), 0.0) * d.data_size
                        for d in cluster.devices)
    return out


def worker_data(plan, swarm: Swarm, cluster: DeviceCluster) -> dict[str, float]:
    """Datapoints at each worker: direct offload plus coordinator relays."""
    d_coord = coordinator_data(plan, swarm, cluster)
    out = {}
    for w in swarm.workers:
        direct = sum(plan.rho.get((d.id, w.id), 0.0) * d.data_size
                     for d in cluster.devices)
        relayed = sum(plan.varrho.get((c.id, w.id), 0.0) * d_coord[c.id]
                      for c in swarm.coordinators)
        out[w.id] = direct + relayed
    return out


def gather_times(plan, swarm: Swarm, cluster: DeviceCluster,
                 ch: ChannelParams) -> dict[str, float]:
    """Data-gathering time per non-leader UAV for one round."""
    d_coord = coordinator_data(plan, swarm, cluster)
    out = {}
    for u in swarm.non_leaders:
        t = 0.0
        for d in cluster.devices:
            r = plan.rho.get((d.id, u.id), 0.0)
            if r > 0:
                rate = link_rate(d.position, d.power_w, u.position, ch, "g2a")
                t += r * d.data_size * ch.bits_per_datapoint / rate
        if u.role == "worker":
            for c in swarm.coordinators:
                vr = plan.varrho.get((c.id, u.id), 0.0)
                if vr > 0:
                    rate = link_rate(c.position, c.power_w, u.position, ch, "a2a")
                    t += vr * d_coord[c.id] * ch.bits_per_datapoint / rate
        out[u.id] = t
    return out


def _energy_components(plan, swarm: Swarm, cluster: DeviceCluster, schedule,
                       ch: ChannelParams) -> EnergyBreakdown:
    d_coord = coordinator_data(plan, swarm, cluster)
    d_work = worker_data(plan, swarm, cluster)

    processing = {}
    for w in swarm.workers:
        a = sum(plan.alpha[w.id])
        processing[w.id] = (schedule.tau_l * w.capacitance * w.cycles_per_datapoint
                            / 2.0 * a * d_work[w.id] * plan.g[w.id] ** 2)

    device_tx = {}
    for d in cluster.devices:
        e = 0.0
        for u in swarm.non_leaders:
            r = plan.rho.get((d.id, u.id), 0.0)
            if r > 0:
                rate = link_rate(d.position, d.power_w, u.position, ch, "g2a")
                e += r * d.data_size * ch.bits_per_datapoint / rate * d.power_w
        device_tx[d.id] = e

    coordinator_tx = {}
    for c in swarm.coordinators:
        e = 0.0
        for w in swarm.workers:
            vr = plan.varrho.get((c.id, w.id), 0.0)
            if vr > 0:
                rate = link_rate(c.position, c.power_w, w.position, ch, "a2a")
                e += vr * d_coord[c.id] * ch.bits_per_datapoint / rate * c.power_w
        coordinator_tx[c.id] = e

    worker_param_tx = {}
    for w in swarm.workers:
        rate = link_rate(w.position, w.power_w, swarm.leader.position, ch, "a2a")
        worker_param_tx[w.id] = schedule.k_l * w.power_w * ch.bits_per_model / rate

    lead = swarm.leader
    slowest = max(ch.bits_per_model
                  / link_rate(lead.position, lead.power_w, w.position, ch, "a2a")
                  for w in swarm.workers)
    leader_broadcast = schedule.k_l * lead.power_w * slowest

    uav_flight = {u.id: schedule.t_total * u.hover_power_w for u in swarm.non_leaders}
    d_ap = plan.ap_distance if getattr(plan, "ap_distance", None) is not None else 0.0
    leader_flight = (schedule.t_total * lead.hover_power_w
                     + 2.0 * schedule.k_g * swarm.leader_move_j_per_m * d_ap)

    return EnergyBreakdown(processing, device_tx, coordinator_tx,
                           worker_param_tx, leader_broadcast, uav_flight,
                           leader_flight)


def energy_terms(plan, swarm: Swarm, cluster: DeviceCluster, schedule,
                 ch: ChannelParams, zeta_local: float | None = None) -> EnergyBreakdown:
    """All seven energy components for a feasible plan.

    Raises ConstraintViolation listing every violated constraint otherwise.
    When ``zeta_local`` is None the timing constraint is not enforced.
    """
    if zeta_local is not None:
        problems = plan_violations(plan, swarm, cluster, schedule, ch, zeta_local)
        if problems:
            raise ConstraintViolation(problems)
    return _energy_components(plan, swarm, cluster, schedule, ch)
