"""Per-swarm data offloading/processing optimization.

The decision variables for one swarm over one training sequence are the
device-to-UAV offload fractions rho, the coordinator-to-worker relay
fractions varrho, the three mini-batch ratios per worker, and the worker
CPU frequencies.  The objective trades expected learning performance (the
sequence-level meta-gradient bound plus the cluster-mismatch bound) against
transmission and processing energy; the learning terms contain ratios of
posynomials, so the problem is solved by successive condensation: the
posynomial denominators (the swarm data-volume total and each worker's
data count) are replaced by their best local monomial lower bounds at the
current iterate, the resulting GP is lowered to convex form and solved,
and the anchor is moved to the new iterate.  Each iterate stays feasible
for the original problem and the true objective never increases.

Rounds within a sequence are treated as identical (device data is constant
over the sequence), so one plan per swarm covers every local round; whole-
network constants in the learning bound are split evenly across swarms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..bounds import SmoothnessEstimates, gamma_F
from ..errors import ConstraintViolation, DomainError
from ..netmodel import ChannelParams, DeviceCluster, Swarm, link_rate
from .algebra import Monomial, Posynomial, condense, const, variable
from .convex import _kkt_certificate, _Reduced, solve_convex, to_convex
from .program import GpProgram


def rho_name(dev_id: str, uav_id: str) -> str:
    return f"rho[{dev_id},{uav_id}]"


def vr_name(coord_id: str, worker_id: str) -> str:
    return f"vr[{coord_id},{worker_id}]"


def alpha_name(n: int, worker_id: str) -> str:
    return f"a{n}[{worker_id}]"


def g_name(worker_id: str) -> str:
    return f"g[{worker_id}]"


@dataclass
class OffloadPlan:
    """Solved decision variables for one swarm (one plan reused each round)."""

    swarm_id: str
    rho: dict[tuple[str, str], float]
    varrho: dict[tuple[str, str], float]
    alpha: dict[str, tuple[float, float, float]]
    g: dict[str, float]
    worker_data: dict[str, float] = field(default_factory=dict)
    objective: float = float("nan")
    ml_term: float = float("nan")
    energy_term: float = float("nan")
    kkt_residual: float = float("nan")
    iterations: int = 0
    converged: bool = False
    trace: list[dict] = field(default_factory=list)
    ap_distance: float = 0.0

    def to_json(self) -> dict:
        return {
            "swarm_id": self.swarm_id,
            "rho": {f"{d}|{u}": v for (d, u), v in self.rho.items()},
            "varrho": {f"{c}|{w}": v for (c, w), v in self.varrho.items()},
            "alpha": {w: list(a) for w, a in self.alpha.items()},
            "g": dict(self.g),
            "worker_data": dict(self.worker_data),
            "objective": self.objective,
            "ml_term": self.ml_term,
            "energy_term": self.energy_term,
            "kkt_residual": self.kkt_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "ap_distance": self.ap_distance,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "OffloadPlan":
        split = lambda key: tuple(key.split("|", 1))
        return cls(
            swarm_id=doc["swarm_id"],
            rho={split(k): v for k, v in doc["rho"].items()},
            varrho={split(k): v for k, v in doc["varrho"].items()},
            alpha={w: tuple(a) for w, a in doc["alpha"].items()},
            g=dict(doc["g"]),
            worker_data=dict(doc.get("worker_data", {})),
            objective=doc.get("objective", float("nan")),
            ml_term=doc.get("ml_term", float("nan")),
            energy_term=doc.get("energy_term", float("nan")),
            kkt_residual=doc.get("kkt_residual", float("nan")),
            iterations=doc.get("iterations", 0),
            converged=doc.get("converged", False),
            ap_distance=doc.get("ap_distance", 0.0),
        )

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "OffloadPlan":
        with open(path) as f:
            return cls.from_json(json.load(f))


class OffloadProblem:
    """Symbolic per-swarm program plus everything needed to solve it."""

    def __init__(self, swarm: Swarm, cluster: DeviceCluster, schedule,
                 channel: ChannelParams, estimates: SmoothnessEstimates,
                 theta: float, zeta_local: float, eta1: float, eta2: float,
                 theta1: float = 0.5, theta2: float = 0.5, u_count: int = 1,
                 f_gap: float = 2.0, ap_distance: float = 0.0,
                 epsilon: float = 1e-4, fixed: dict[str, float] | None = None):
        if not (0.0 <= theta <= 1.0):
            raise DomainError(f"theta must lie in [0, 1], got {theta}")
        norm = theta1 + theta2
        if norm <= 0:
            raise DomainError("theta1 + theta2 must be positive")
        self.swarm = swarm
        self.cluster = cluster
        self.schedule = schedule
        self.channel = channel
        self.estimates = estimates
        self.theta = float(theta)
        self.theta1 = theta1 / norm
        self.theta2 = theta2 / norm
        self.zeta_local = zeta_local
        self.eta1 = eta1
        self.eta2 = eta2
        self.u_count = max(1, int(u_count))
        self.f_gap = f_gap
        self.ap_distance = ap_distance
        self.epsilon = epsilon
        self.fixed = dict(fixed or {})
        self._build()

    # -- construction ------------------------------------------------------

    def _sub(self, expr):
        return expr.substitute(self.fixed) if self.fixed else expr

    def _build(self):
        sw, cl, ch = self.swarm, self.cluster, self.channel
        sched = self.schedule
        self.worker_ids = [w.id for w in sw.workers]
        self.coord_ids = [c.id for c in sw.coordinators]
        hat_u = sw.workers + sw.coordinators

        # Link rates are constants of the program (fixed powers/positions).
        self.rate_dev_uav = {}
        for d in cl.devices:
            for u in hat_u:
                self.rate_dev_uav[(d.id, u.id)] = link_rate(
                    d.position, d.power_w, u.position, ch, "g2a")
        self.rate_coord_worker = {}
        for c in sw.coordinators:
            for w in sw.workers:
                self.rate_coord_worker[(c.id, w.id)] = link_rate(
                    c.position, c.power_w, w.position, ch, "a2a")

        # Sequence-constant energies (no decision variables inside).
        self.worker_param_tx = {}
        for w in sw.workers:
            r = link_rate(w.position, w.power_w, sw.leader.position, ch, "a2a")
            self.worker_param_tx[w.id] = sched.k_l * w.power_w * ch.bits_per_model / r
        self.uav_flight = {u.id: sched.t_total * u.hover_power_w for u in hat_u}
        lead = sw.leader
        slowest = max(ch.bits_per_model
                      / link_rate(lead.position, lead.power_w, w.position, ch, "a2a")
                      for w in sw.workers)
        self.leader_broadcast = sched.k_l * lead.power_w * slowest
        self.leader_flight = (sched.t_total * lead.hover_power_w
                              + 2.0 * sched.k_g * sw.leader_move_j_per_m
                              * self.ap_distance)

        # Data-volume posynomials.
        def dev_terms(uav_id):
            return [variable(rho_name(d.id, uav_id)) * d.data_size
                    for d in cl.devices if d.data_size > 0]

        self.coord_data = {}
        for c in sw.coordinators:
            self.coord_data[c.id] = self._sub(Posynomial(dev_terms(c.id)))
        self.worker_dataposy = {}
        for w in sw.workers:
            terms = dev_terms(w.id)
            for c in sw.coordinators:
                relay = variable(vr_name(c.id, w.id)) * self.coord_data[c.id]
                terms.extend(relay.terms)
            self.worker_dataposy[w.id] = self._sub(Posynomial(terms))

        self.alpha_posy = {
            w.id: self._sub(Posynomial([variable(alpha_name(n, w.id))
                                        for n in (1, 2, 3)]))
            for w in sw.workers}
        self.delta_u = Posynomial(
            [t for w in sw.workers
             for t in (self.alpha_posy[w.id] * self.worker_dataposy[w.id]).terms])

        # Learning-bound pieces.  The per-worker meta-gradient noise is
        # sigma_j = P1_j / D_j + P2_j / D_j^2; multiplying by the weight
        # Delta_j = alpha_j * D_j cancels one power of D_j, so the weighted
        # noise is (sum_j alpha_j*P1_j + alpha_j*P2_j/D_j) / Delta_u.
        est = self.estimates
        c_sq = (est.mu_g * self.eta1) ** 2
        self.noise_flat = {}   # alpha_j * P1_j
        self.noise_over_d = {}  # alpha_j * P2_j  (divided by D_j when assembled)
        for w in sw.workers:
            a1 = variable(alpha_name(1, w.id))
            a2 = variable(alpha_name(2, w.id))
            a3 = variable(alpha_name(3, w.id))
            p1 = (3.0 * self.eta1 ** 2 * est.sigma_h * est.B ** 2 * a3 ** -1
                  + 12.0 * est.sigma_g * a2 ** -1
                  + 12.0 * est.sigma_g * c_sq * a1 ** -1)
            p2 = (3.0 * self.eta1 ** 2 * est.sigma_h * est.sigma_g
                  * (a2 ** -1 * a3 ** -1 + c_sq * a1 ** -1 * a3 ** -1))
            self.noise_flat[w.id] = self._sub(self.alpha_posy[w.id] * p1)
            self.noise_over_d[w.id] = self._sub(self.alpha_posy[w.id] * p2)

        mu_f = est.mu_f(self.eta1)
        if mu_f > 0 and not self.eta2 < 1.0 / (6.0 * mu_f):
            raise DomainError(
                f"step-size hypothesis violated: eta2={self.eta2} >= "
                f"1/(6*mu_f)={1.0 / (6.0 * mu_f):.4g}")
        denom = self.eta2 / 2.0 - 3.0 * self.eta2 ** 2 * mu_f
        ratio = 8.0 + 48.0 * (self.eta2 * mu_f) ** 2
        geo_l = (1.0 - ratio ** sched.tau_l) / (1.0 - ratio)
        geo_lg = (1.0 - ratio ** (sched.tau_l * sched.tau_g)) / (1.0 - ratio)
        gamma_u_f = gamma_F(est.gamma_h_u, est.gamma_g_u, est.B, self.eta1)
        gamma_f = gamma_F(est.gamma_h, est.gamma_g, est.B, self.eta1)
        u_cnt = self.u_count
        coef_se = 3.0 * self.eta2 ** 2 * mu_f / 2.0 + self.eta2
        c_ups = (16.0 * self.eta2 ** 2 / u_cnt) * (
            sched.tau_l * geo_l + sched.tau_l * sched.tau_g * geo_lg)
        d_ups = (24.0 * self.eta2 ** 2 / u_cnt) * (gamma_u_f * geo_l + gamma_f * geo_lg)
        # xi share of swarm u: A * weighted_noise + B_const
        self.ml_noise_coef = coef_se * (1.0 / u_cnt + mu_f ** 2 * c_ups) / denom
        self.ml_constant = (self.f_gap / (sched.t_total * u_cnt)
                            + 3.0 * self.eta2 ** 2 * mu_f * gamma_u_f / u_cnt
                            + coef_se * mu_f ** 2 * d_ups) / denom

        mu_c = est.cluster_mu_g()
        factor = 1.0 + mu_c ** 2 * self.eta1 ** 2
        self.q1 = 3.0 * self.eta1 ** 2 * est.sigma_h_c * est.B ** 2 \
            + 12.0 * est.sigma_g_c * factor
        self.q2 = 3.0 * self.eta1 ** 2 * est.sigma_h_c * est.sigma_g_c * factor

        # Energy posynomial, summed over all rounds of the sequence.
        energy_terms = []
        for w in sw.workers:
            e_p = (sched.tau_l * w.capacitance * w.cycles_per_datapoint / 2.0) \
                * self.alpha_posy[w.id] * self.worker_dataposy[w.id] \
                * variable(g_name(w.id)) ** 2
            energy_terms.extend(self._sub(e_p).terms)
        for d in cl.devices:
            if d.data_size <= 0:
                continue
            for u in hat_u:
                rate = self.rate_dev_uav[(d.id, u.id)]
                mono = variable(rho_name(d.id, u.id)) * (
                    d.data_size * ch.bits_per_datapoint / rate * d.power_w)
                energy_terms.append(self._sub(mono.as_posynomial()).terms[0])
        for c in sw.coordinators:
            for w in sw.workers:
                rate = self.rate_coord_worker[(c.id, w.id)]
                relay = variable(vr_name(c.id, w.id)) * self.coord_data[c.id] * (
                    ch.bits_per_datapoint / rate * c.power_w)
                energy_terms.extend(relay.terms)
        self.energy_per_round = Posynomial(energy_terms)
        self.energy_sequence = self.energy_per_round * float(sched.k_l)

        self._build_constraints()
        self.variable_names = self._collect_variables()

    def _build_constraints(self):
        sw, cl, ch = self.swarm, self.cluster, self.channel
        sched = self.schedule
        hat_u = sw.workers + sw.coordinators
        self.constraints: list[tuple[str, Posynomial]] = []
        self.infeasible_reasons: list[str] = []

        def add(name: str, posy, limit: float = 1.0):
            if limit <= 0:
                self.infeasible_reasons.append(
                    f"{name}: budget {limit:.4g} is non-positive")
                return
            posy = self._sub(posy) * (1.0 / limit)
            if not posy.variables():
                val = posy.evaluate({})
                if val > 1.0 + 1e-9:
                    self.infeasible_reasons.append(
                        f"{name}: fixed value {val:.6g} exceeds 1")
                return
            self.constraints.append((name, posy))

        for d in cl.devices:
            if d.data_size <= 0:
                continue
            add(f"offload_total[{d.id}]",
                Posynomial([variable(rho_name(d.id, u.id)) for u in hat_u]))
        for c in sw.coordinators:
            add(f"relay_total[{c.id}]",
                Posynomial([variable(vr_name(c.id, w.id)) for w in sw.workers]))
            add(f"buffer[{c.id}]", self.coord_data[c.id], c.buffer_capacity)
            gather = self._gather_time_posy(c.id, include_relay=False)
            add(f"time[{c.id}]", gather, self.zeta_local)
        for w in sw.workers:
            add(f"buffer[{w.id}]", self.worker_dataposy[w.id], w.buffer_capacity)
            gather = self._gather_time_posy(w.id, include_relay=True)
            process = (sched.tau_l * w.cycles_per_datapoint) \
                * self.alpha_posy[w.id] * self.worker_dataposy[w.id] \
                * variable(g_name(w.id)) ** -1
            add(f"time[{w.id}]", gather + process, self.zeta_local)
            e_p = (sched.k_l * sched.tau_l * w.capacitance
                   * w.cycles_per_datapoint / 2.0) \
                * self.alpha_posy[w.id] * self.worker_dataposy[w.id] \
                * variable(g_name(w.id)) ** 2
            budget = (w.battery_j - w.reserve_j - self.worker_param_tx[w.id]
                      - self.uav_flight[w.id])
            add(f"energy[{w.id}]", e_p, budget)
        for c in sw.coordinators:
            relay_terms = []
            for w in sw.workers:
                rate = self.rate_coord_worker[(c.id, w.id)]
                relay = variable(vr_name(c.id, w.id)) * self.coord_data[c.id] * (
                    ch.bits_per_datapoint / rate * c.power_w)
                relay_terms.extend(relay.terms)
            budget = c.battery_j - c.reserve_j - self.uav_flight[c.id]
            add(f"energy[{c.id}]",
                Posynomial(relay_terms) * float(sched.k_l), budget)
        lead = sw.leader
        lhs = self.leader_broadcast + self.leader_flight
        if lhs > lead.battery_j - lead.reserve_j:
            self.infeasible_reasons.append(
                f"energy[{lead.id}]: fixed leader drain {lhs:.1f}J exceeds "
                f"budget {lead.battery_j - lead.reserve_j:.1f}J")

        self.bounds: dict[str, tuple[float, float]] = {}
        for d in cl.devices:
            if d.data_size <= 0:
                continue
            for u in hat_u:
                name = rho_name(d.id, u.id)
                if name not in self.fixed:
                    self.bounds[name] = (self.epsilon, 1.0)
        for c in sw.coordinators:
            for w in sw.workers:
                name = vr_name(c.id, w.id)
                if name not in self.fixed:
                    self.bounds[name] = (self.epsilon, 1.0)
        for w in sw.workers:
            for n in (1, 2, 3):
                name = alpha_name(n, w.id)
                if name not in self.fixed:
                    self.bounds[name] = (self.epsilon, 1.0)
            if g_name(w.id) not in self.fixed:
                self.bounds[g_name(w.id)] = (w.cpu_min_hz, w.cpu_max_hz)

    def _gather_time_posy(self, uav_id: str, include_relay: bool) -> Posynomial:
        ch = self.channel
        terms = []
        for d in self.cluster.devices:
            if d.data_size <= 0:
                continue
            rate = self.rate_dev_uav[(d.id, uav_id)]
            terms.append((variable(rho_name(d.id, uav_id))
                          * (d.data_size * ch.bits_per_datapoint / rate)))
        if include_relay:
            for c in self.swarm.coordinators:
                rate = self.rate_coord_worker[(c.id, uav_id)]
                relay = variable(vr_name(c.id, uav_id)) * self.coord_data[c.id] \
                    * (ch.bits_per_datapoint / rate)
                terms.extend(relay.terms)
        return Posynomial(terms)

    def _collect_variables(self) -> list[str]:
        names = set(self.delta_u.variables()) | set(self.energy_sequence.variables())
        for _, g in self.constraints:
            names |= g.variables()
        names |= set(self.bounds)
        return sorted(names)

    # -- evaluation --------------------------------------------------------

    def with_fixed(self, fixed: dict[str, float]) -> "OffloadProblem":
        merged = dict(self.fixed)
        merged.update(fixed)
        return OffloadProblem(
            self.swarm, self.cluster, self.schedule, self.channel,
            self.estimates, self.theta, self.zeta_local, self.eta1, self.eta2,
            theta1=self.theta1, theta2=self.theta2, u_count=self.u_count,
            f_gap=self.f_gap, ap_distance=self.ap_distance,
            epsilon=self.epsilon, fixed=merged)

    def full_point(self, point: dict[str, float]) -> dict[str, float]:
        out = dict(self.fixed)
        out.update(point)
        return out

    def weighted_noise(self, point: dict[str, float]) -> float:
        """Exact Delta-weighted meta-gradient noise at a point."""
        delta_u = self.delta_u.evaluate(point)
        acc = 0.0
        for w in self.worker_ids:
            d_j = self.worker_dataposy[w].evaluate(point)
            acc += self.noise_flat[w].evaluate(point) \
                + self.noise_over_d[w].evaluate(point) / d_j
        return acc / delta_u

    def cluster_mismatch(self, point: dict[str, float]) -> float:
        """Exact per-round cluster mismatch share at a point."""
        delta_u = self.delta_u.evaluate(point)
        acc = 0.0
        for w in self.worker_ids:
            a = self.alpha_posy[w].evaluate(point)
            d_j = self.worker_dataposy[w].evaluate(point)
            acc += self.q1 * a + self.q2 * a / d_j
        return acc / (self.u_count * delta_u)

    def ml_value(self, point: dict[str, float]) -> float:
        xi_share = self.ml_noise_coef * self.weighted_noise(point) + self.ml_constant
        xhat = self.schedule.k_l * self.cluster_mismatch(point)
        return self.theta1 * xi_share + self.theta2 * xhat

    def energy_value(self, point: dict[str, float]) -> float:
        return self.energy_sequence.evaluate(point)

    def true_objective(self, point: dict[str, float]) -> tuple[float, float, float]:
        point = self.full_point(point)
        ml = self.ml_value(point)
        energy = self.energy_value(point)
        return (1.0 - self.theta) * ml + self.theta * energy, ml, energy

    def feasibility_margins(self, point: dict[str, float]) -> dict[str, float]:
        point = self.full_point(point)
        out = {}
        for name, gpos in self.constraints:
            out[name] = 1.0 - gpos.evaluate(point)
        for v, (lo, hi) in self.bounds.items():
            out[f"{v}<=hi"] = 1.0 - point[v] / hi
            out[f"{v}>=lo"] = 1.0 - lo / point[v]
        return out

    def check_feasible(self, point: dict[str, float], tol: float = 1e-7) -> list[str]:
        return [f"{name}: margin {m:.3e}" for name, m in
                self.feasibility_margins(point).items() if m < -tol]

    # -- condensation ------------------------------------------------------

    def condensed_gp(self, anchor: dict[str, float]) -> GpProgram:
        """GP whose objective upper-bounds the true one, exactly at anchor.

        Only the two denominator families (the swarm data-volume total and
        the per-worker data counts) are condensed; the constraints are
        already posynomial and stay untouched.
        """
        anchor = self.full_point(anchor)
        delta_hat = condense(self.delta_u, anchor)
        d_hat = {w: condense(self.worker_dataposy[w], anchor)
                 for w in self.worker_ids}

        terms = []
        ml_w = (1.0 - self.theta) * self.theta1 * self.ml_noise_coef
        mismatch_w = ((1.0 - self.theta) * self.theta2 * self.schedule.k_l
                      / self.u_count)
        if ml_w > 0:
            for w in self.worker_ids:
                terms.extend((ml_w * self.noise_flat[w] / delta_hat).terms)
                terms.extend((ml_w * self.noise_over_d[w]
                              / (delta_hat * d_hat[w])).terms)
        if mismatch_w > 0:
            for w in self.worker_ids:
                if self.q1 > 0:
                    terms.extend((mismatch_w * self.q1 * self.alpha_posy[w]
                                  / delta_hat).terms)
                if self.q2 > 0:
                    terms.extend((mismatch_w * self.q2 * self.alpha_posy[w]
                                  / (delta_hat * d_hat[w])).terms)
        if self.theta > 0:
            terms.extend((self.theta * self.energy_sequence).terms)
        constant = (1.0 - self.theta) * self.theta1 * self.ml_constant
        if constant > 0:
            terms.append(const(constant))
        if not terms:
            terms.append(const(1.0))

        gp = GpProgram(Posynomial(terms))
        for name, gpos in self.constraints:
            gp.add_inequality(name, gpos)
        for v, (lo, hi) in self.bounds.items():
            gp.set_bounds(v, lo, hi)
        return gp

    # -- starting point ----------------------------------------------------

    def initial_plan(self) -> dict[str, float]:
        """Uniform spread scaled down until strictly feasible.

        Offload fractions start at (1-eps)/|hat_u| per UAV, relay fractions
        at (1-eps)/|workers|, batch ratios at 0.1, CPU at its minimum; the
        data-dependent knobs shrink geometrically until every constraint
        holds strictly.
        """
        if self.infeasible_reasons:
            raise ConstraintViolation(self.infeasible_reasons)
        hat_n = len(self.worker_ids) + len(self.coord_ids)
        point = {}
        for name in self.variable_names:
            if name.startswith("rho["):
                point[name] = (1.0 - self.epsilon) / hat_n
            elif name.startswith("vr["):
                point[name] = (1.0 - self.epsilon) / len(self.worker_ids)
            elif name.startswith(("a1[", "a2[", "a3[")):
                point[name] = 0.1
            elif name.startswith("g["):
                lo, hi = self.bounds[name]
                point[name] = lo * (hi / lo) ** 0.1
        for _ in range(100):
            margins = self.feasibility_margins(point)
            if min(margins.values()) > 1e-10:
                return point
            floored = True
            for name in point:
                if name.startswith("g["):
                    continue
                lo = self.bounds.get(name, (self.epsilon, 1.0))[0]
                scaled = max(lo * 1.02, point[name] * 0.6)
                if scaled < point[name]:
                    floored = False
                point[name] = scaled
            if floored:
                break
        raise ConstraintViolation(
            ["no strictly feasible start found"] + self.check_feasible(point))


def _kkt_residual_at(problem: OffloadProblem, point: dict[str, float]) -> float:
    """KKT residual of the original problem at a candidate solution.

    The program is re-anchored at the point itself, where the condensed
    objective matches the true one in value and gradient, so the certificate
    of the condensed GP transfers to the original problem.
    """
    gp = problem.condensed_gp(point)
    cvx = to_convex(gp)
    z = cvx.point_to_z(problem.full_point(point))
    red = _Reduced(cvx)
    _, g0 = cvx.objective.value_grad(z)
    lam, stationarity = _kkt_certificate(cvx, red, z, g0)
    comp = 0.0
    primal = 0.0
    for i, blk in enumerate(cvx.constraints):
        fv = blk.value(z)
        primal = max(primal, fv)
        comp = max(comp, abs(lam[i] * fv))
    return max(stationarity, comp, primal)


def assemble_problem(swarm, cluster, schedule, channel, estimates, theta,
                     zeta_local, eta1, eta2, **kwargs) -> OffloadProblem:
    """Build the per-swarm offload program (see OffloadProblem)."""
    return OffloadProblem(swarm, cluster, schedule, channel, estimates, theta,
                          zeta_local, eta1, eta2, **kwargs)


def algorithm1_solve(problem: OffloadProblem,
                     init_plan: dict[str, float] | None = None,
                     criterion: float = 1e-4, max_outer: int = 50,
                     inner_tol: float = 1e-7, gap_target: float = 1e-8,
                     kkt_target: float = 1e-5) -> OffloadPlan:
    """Successive condensation: condense, convexify, solve, re-anchor.

    Runs until the relative objective change drops below ``criterion``, then
    keeps re-anchoring until the iterate is a numerical fixed point (its
    re-anchored KKT residual falls below ``kkt_target``) or the outer budget
    runs out.  The true objective is evaluated at every iterate and is
    non-increasing throughout.  The objective offset that no decision
    variable can affect is excluded from the convergence ratio.
    """
    if problem.infeasible_reasons:
        raise ConstraintViolation(problem.infeasible_reasons)
    point = dict(init_plan) if init_plan is not None else problem.initial_plan()
    bad = problem.check_feasible(point)
    if bad:
        raise ConstraintViolation(["initial plan infeasible"] + bad)

    offset = (1.0 - problem.theta) * problem.theta1 * problem.ml_constant
    obj, ml, energy = problem.true_objective(point)
    trace = [{"iteration": 0, "objective": obj, "ml": ml, "energy": energy,
              "kkt_residual": float("nan"),
              "min_margin": min(problem.feasibility_margins(point).values())}]
    converged = False
    polishing = False
    kkt = float("inf")
    it = 0
    while it < max_outer:
        it += 1
        gp = problem.condensed_gp(point)
        sol = solve_convex(to_convex(gp),
                           tol=inner_tol / 10 if polishing else inner_tol,
                           gap_target=gap_target / 10 if polishing else gap_target,
                           start=problem.full_point(point))
        if sol.status in ("infeasible", "unbounded"):
            raise ConstraintViolation(
                [f"inner solve failed with status {sol.status} at iteration {it}"])
        new_point = {v: sol.point[v] for v in problem.variable_names}
        new_obj, ml, energy = problem.true_objective(new_point)
        point = new_point
        trace.append({"iteration": it, "objective": new_obj, "ml": ml,
                      "energy": energy, "kkt_residual": sol.stationarity,
                      "min_margin": min(problem.feasibility_margins(point).values())})
        rel_change = abs(new_obj - obj) / max(1e-12, abs(obj - offset))
        obj = new_obj
        if not polishing and rel_change < criterion:
            converged = True
            polishing = True
        if polishing:
            kkt = _kkt_residual_at(problem, point)
            trace[-1]["kkt_residual"] = kkt
            if kkt <= kkt_target:
                break

    if not np.isfinite(kkt) or kkt == float("inf"):
        kkt = _kkt_residual_at(problem, point)
    full = problem.full_point(point)
    plan = OffloadPlan(
        swarm_id=problem.swarm.id,
        rho={(d.id, u.id): full[rho_name(d.id, u.id)]
             for d in problem.cluster.devices if d.data_size > 0
             for u in problem.swarm.non_leaders},
        varrho={(c, w): full[vr_name(c, w)]
                for c in problem.coord_ids for w in problem.worker_ids},
        alpha={w: tuple(full[alpha_name(n, w)] for n in (1, 2, 3))
               for w in problem.worker_ids},
        g={w: full[g_name(w)] for w in problem.worker_ids},
        worker_data={w: problem.worker_dataposy[w].evaluate(full)
                     for w in problem.worker_ids},
        objective=obj,
        ml_term=trace[-1]["ml"],
        energy_term=trace[-1]["energy"],
        kkt_residual=kkt,
        iterations=it,
        converged=converged,
        trace=trace,
        ap_distance=problem.ap_distance,
    )
    return plan


def baseline_greedy_offload(problem: OffloadProblem, **solve_kwargs) -> OffloadPlan:
    """Greedy offloading: every device ships its whole buffer, split evenly
    across the swarm's non-leader UAVs; the solver sets the rest."""
    hat_n = len(problem.worker_ids) + len(problem.coord_ids)
    fixed = {}
    for d in problem.cluster.devices:
        if d.data_size <= 0:
            continue
        for u in problem.swarm.non_leaders:
            fixed[rho_name(d.id, u.id)] = 1.0 / hat_n
    pinned = problem.with_fixed(fixed)
    plan = algorithm1_solve(pinned, **solve_kwargs)
    return plan


def baseline_max_processed(problem: OffloadProblem, **solve_kwargs) -> OffloadPlan:
    """Maximum processed: CPUs pinned at their ceiling and batch ratios at 1;
    the solver sets the rest."""
    fixed = {}
    for w in problem.swarm.workers:
        fixed[g_name(w.id)] = w.cpu_max_hz
        for n in (1, 2, 3):
            fixed[alpha_name(n, w.id)] = 1.0
    pinned = problem.with_fixed(fixed)
    plan = algorithm1_solve(pinned, **solve_kwargs)
    return plan


def initial_feasible_plan(problem: OffloadProblem) -> dict[str, float]:
    return problem.initial_plan()
