"""Training-sequence orchestration: worker meta-updates nested inside
periodic leader (local) and core-network (global) aggregations, end-of-
sequence personalization, and the plain-gradient hierarchical baseline.

The driver is deterministic given its rng and single-threaded; per-swarm
worker updates inside one iteration share no mutable state until the
aggregation barrier, so they could be evaluated concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericalFailure, ScheduleError
from .learner import (BatchRatios, Dataset, batch_size, meta_gradient,
                      sample_three_batches)


@dataclass(frozen=True)
class SequenceSchedule:
    """Timing of one training sequence.

    t_total iterations split into k_l local rounds of tau_l iterations;
    every tau_g local aggregations trigger a global one, so
    t_total = tau_l * k_l = tau_l * tau_g * k_g exactly.
    """

    t_total: int
    tau_l: int
    tau_g: int
    t_start: int = 0

    def __post_init__(self):
        if self.t_total < 1 or self.tau_l < 1 or self.tau_g < 1:
            raise ScheduleError("schedule lengths must be positive")
        if self.t_total % (self.tau_l * self.tau_g) != 0:
            raise ScheduleError(
                f"t_total={self.t_total} is not divisible by "
                f"tau_l*tau_g={self.tau_l * self.tau_g}")

    @property
    def k_l(self) -> int:
        return self.t_total // self.tau_l

    @property
    def k_g(self) -> int:
        return self.t_total // (self.tau_l * self.tau_g)

    def local_agg_times(self) -> list[int]:
        return [self.t_start + k * self.tau_l for k in range(1, self.k_l + 1)]

    def global_agg_times(self) -> list[int]:
        step = self.tau_l * self.tau_g
        return [self.t_start + k * step for k in range(1, self.k_g + 1)]


@dataclass
class AggregationWeights:
    """Per-worker data-volume weights for one local aggregation."""

    delta: dict[str, float]

    def __post_init__(self):
        for wid, d in self.delta.items():
            if d < 0:
                raise ValueError(f"weight for {wid} is negative")

    @property
    def total(self) -> float:
        return sum(self.delta.values())

    def normalized(self) -> dict[str, float]:
        tot = self.total
        if tot <= 0:
            raise DomainError("degenerate aggregation weights: all deltas are zero")
        return {k: v / tot for k, v in self.delta.items()}


def worker_step(model, params: np.ndarray, batches, eta1: float, eta2: float,
                mode: str = "first_order", context: str = "") -> np.ndarray:
    """One meta-update: w <- w - eta2 * approx meta-gradient."""
    g = meta_gradient(model, params, batches, eta1, mode)
    new = params - eta2 * g
    if not np.isfinite(new).all():
        raise NumericalFailure(f"meta-update produced non-finite parameters {context}")
    return new


def local_aggregate(worker_params: list[np.ndarray],
                    weights: AggregationWeights | list[float]) -> np.ndarray:
    """Data-volume-weighted average of worker parameters."""
    if not worker_params:
        raise DomainError("no worker parameters to aggregate")
    if isinstance(weights, AggregationWeights):
        w = np.array(list(weights.normalized().values()))
    else:
        w = np.asarray(weights, dtype=float)
        tot = w.sum()
        if tot <= 0:
            raise DomainError("degenerate aggregation weights: all deltas are zero")
        w = w / tot
    if len(w) != len(worker_params):
        raise ValueError("one weight per worker required")
    out = np.zeros_like(worker_params[0])
    for wi, p in zip(w, worker_params):
        out += wi * p
    return out


def global_aggregate(swarm_params: list[np.ndarray]) -> np.ndarray:
    """Unweighted mean across active swarms."""
    if not swarm_params:
        raise DomainError("no active swarms to aggregate")
    return np.mean(np.stack(swarm_params), axis=0)


def personalize(model, global_params: np.ndarray,
                worker_datasets: list[Dataset], eta1: float,
                rng: np.random.Generator | None = None,
                batch_ratio: float = 1.0) -> np.ndarray:
    """One stochastic gradient step per worker, then a weighted aggregation.

    Adapts the global model to one swarm's data; weights are worker data
    volumes.
    """
    stepped = []
    sizes = []
    for ds in worker_datasets:
        if rng is not None and batch_ratio < 1.0:
            idx = rng.integers(0, len(ds), size=batch_size(batch_ratio, len(ds)))
            batch = ds.subset(idx)
        else:
            batch = ds
        stepped.append(global_params - eta1 * model.gradient(global_params, batch))
        sizes.append(float(len(ds)))
    return local_aggregate(stepped, sizes)


# ---------------------------------------------------------------------------
# Sequence driver
# ---------------------------------------------------------------------------

@dataclass
class SequenceReport:
    """Everything one training sequence produced."""

    rows: list[dict] = field(default_factory=list)  # per (t, swarm) metrics
    final_global: np.ndarray | None = None
    personalized: dict[str, np.ndarray] = field(default_factory=dict)
    post_personalization: dict[str, dict] = field(default_factory=dict)
    energy_total_j: float = 0.0
    energy_by_swarm: dict[str, float] = field(default_factory=dict)
    global_agg_times: list[int] = field(default_factory=list)
    variance_trace: list[tuple[int, float]] = field(default_factory=list)

    def series(self, swarm_id: str, column: str):
        return [r[column] for r in self.rows if r["swarm"] == swarm_id]

    def to_rows(self) -> list[dict]:
        return self.rows


@dataclass
class SwarmTask:
    """One active swarm's learning-side state for a sequence."""

    swarm_id: str
    worker_ids: list[str]
    datasets: list[Dataset]      # per worker, refreshed at round boundaries
    test_set: Dataset | None = None
    ratios: dict[str, BatchRatios] | BatchRatios | None = None

    def ratio_for(self, worker_id: str, default: BatchRatios) -> BatchRatios:
        if self.ratios is None:
            return default
        if isinstance(self.ratios, BatchRatios):
            return self.ratios
        return self.ratios.get(worker_id, default)


def _weighted_variance(swarm_params: dict[str, list[np.ndarray]],
                       weights: dict[str, list[float]],
                       global_params: np.ndarray) -> float:
    """(1/U) sum_u sum_j w_uj * ||w_j - w_bar||^2 at a global aggregation."""
    acc = 0.0
    for sid, plist in swarm_params.items():
        w = np.asarray(weights[sid], dtype=float)
        w = w / w.sum()
        for wi, p in zip(w, plist):
            acc += wi * float(((p - global_params) ** 2).sum())
    return acc / len(swarm_params)


def run_sequence(model, schedule: SequenceSchedule, tasks: list[SwarmTask],
                 eta1: float, eta2: float, default_ratios: BatchRatios,
                 rng: np.random.Generator, mode: str = "first_order",
                 init_params: np.ndarray | None = None,
                 data_provider=None, energy_per_round=None,
                 record_every: int = 1) -> SequenceReport:
    """Run one full training sequence of nested meta-learning.

    data_provider(k, task) -> list[Dataset] refreshes worker data at the
    start of local round k (1-based); energy_per_round(k, swarm_id) -> J
    feeds the per-iteration cumulative energy column.  Both default to
    static data / zero energy, which is the proof-of-concept setting where
    data already sits at the workers.
    """
    if init_params is None:
        init_params = model.init_params(rng)
    report = SequenceReport()
    report.global_agg_times = schedule.global_agg_times()

    params = {t.swarm_id: [init_params.copy() for _ in t.worker_ids] for t in tasks}
    deltas = {t.swarm_id: [0.0] * len(t.worker_ids) for t in tasks}
    cum_energy = {t.swarm_id: 0.0 for t in tasks}
    global_params = init_params.copy()

    for k in range(1, schedule.k_l + 1):
        for task in tasks:
            if data_provider is not None:
                task.datasets = data_provider(k, task)
            if energy_per_round is not None:
                cum_energy[task.swarm_id] += float(energy_per_round(k, task.swarm_id))
        # accumulate aggregation weights over the round (data constant inside)
        for task in tasks:
            sid = task.swarm_id
            deltas[sid] = [0.0] * len(task.worker_ids)

        for step_in_round in range(schedule.tau_l):
            t = (k - 1) * schedule.tau_l + step_in_round + 1
            for task in tasks:
                sid = task.swarm_id
                for j, wid in enumerate(task.worker_ids):
                    ds = task.datasets[j]
                    ratios = task.ratio_for(wid, default_ratios)
                    batches = sample_three_batches(ds, ratios, rng)
                    params[sid][j] = worker_step(
                        model, params[sid][j], batches, eta1, eta2, mode,
                        context=f"(swarm {sid}, worker {wid}, t={t})")
                    deltas[sid][j] += ratios.total * len(ds)
            if t % record_every == 0 or t == schedule.t_total:
                for task in tasks:
                    sid = task.swarm_id
                    w = np.asarray(deltas[sid], float)
                    w = w / w.sum() if w.sum() > 0 else np.ones(len(w)) / len(w)
                    avg = local_aggregate(params[sid], list(w))
                    losses = [model.loss(p, d) for p, d in zip(params[sid], task.datasets)]
                    grad_norms = [float(np.linalg.norm(model.gradient(p, d)))
                                  for p, d in zip(params[sid], task.datasets)]
                    row = {
                        "t": schedule.t_start + t,
                        "swarm": sid,
                        "loss": float(np.dot(w, losses)),
                        "accuracy": (model.accuracy(avg, task.test_set)
                                     if task.test_set is not None and hasattr(model, "accuracy")
                                     else float("nan")),
                        "grad_norm": float(np.dot(w, grad_norms)),
                        "energy_j": cum_energy[sid],
                    }
                    report.rows.append(row)

        # local aggregation at t = k * tau_l
        swarm_avg = {}
        for task in tasks:
            sid = task.swarm_id
            weights = AggregationWeights(dict(zip(task.worker_ids, deltas[sid])))
            swarm_avg[sid] = local_aggregate(
                params[sid], [weights.delta[w] for w in task.worker_ids])

        if k % schedule.tau_g == 0:
            # global aggregation: measure pre-sync variance, then synchronize
            global_params = global_aggregate(list(swarm_avg.values()))
            t_now = schedule.t_start + k * schedule.tau_l
            report.variance_trace.append(
                (t_now, _weighted_variance(params, deltas, global_params)))
            for task in tasks:
                params[task.swarm_id] = [global_params.copy()
                                         for _ in task.worker_ids]
        else:
            for task in tasks:
                params[task.swarm_id] = [swarm_avg[task.swarm_id].copy()
                                         for _ in task.worker_ids]

    report.final_global = global_params.copy()
    for task in tasks:
        pers = personalize(model, global_params, task.datasets, eta1)
        report.personalized[task.swarm_id] = pers
        if task.test_set is not None and hasattr(model, "accuracy"):
            report.post_personalization[task.swarm_id] = {
                "loss": model.loss(pers, task.test_set),
                "accuracy": model.accuracy(pers, task.test_set),
            }
    report.energy_by_swarm = dict(cum_energy)
    report.energy_total_j = float(sum(cum_energy.values()))
    return report


def run_hfl_baseline(model, schedule: SequenceSchedule, tasks: list[SwarmTask],
                     eta: float, batch_ratio: float,
                     rng: np.random.Generator,
                     init_params: np.ndarray | None = None,
                     data_provider=None, energy_per_round=None,
                     record_every: int = 1) -> SequenceReport:
    """Hierarchical FL baseline: plain mini-batch gradient steps in the same
    nested orchestration.

    For data-fairness against the meta-learner, a batch ratio of r here
    corresponds to meta batch ratios of r/3 each.
    """
    if init_params is None:
        init_params = model.init_params(rng)
    report = SequenceReport()
    report.global_agg_times = schedule.global_agg_times()

    params = {t.swarm_id: [init_params.copy() for _ in t.worker_ids] for t in tasks}
    deltas = {t.swarm_id: [0.0] * len(t.worker_ids) for t in tasks}
    cum_energy = {t.swarm_id: 0.0 for t in tasks}
    global_params = init_params.copy()

    for k in range(1, schedule.k_l + 1):
        for task in tasks:
            if data_provider is not None:
                task.datasets = data_provider(k, task)
            if energy_per_round is not None:
                cum_energy[task.swarm_id] += float(energy_per_round(k, task.swarm_id))
            deltas[task.swarm_id] = [0.0] * len(task.worker_ids)

        for step_in_round in range(schedule.tau_l):
            t = (k - 1) * schedule.tau_l + step_in_round + 1
            for task in tasks:
                sid = task.swarm_id
                for j, wid in enumerate(task.worker_ids):
                    ds = task.datasets[j]
                    idx = rng.integers(0, len(ds), size=batch_size(batch_ratio, len(ds)))
                    g = model.gradient(params[sid][j], ds.subset(idx))
                    new = params[sid][j] - eta * g
                    if not np.isfinite(new).all():
                        raise NumericalFailure(
                            f"gradient step produced non-finite parameters "
                            f"(swarm {sid}, worker {wid}, t={t})")
                    params[sid][j] = new
                    deltas[sid][j] += batch_ratio * len(ds)
            if t % record_every == 0 or t == schedule.t_total:
                for task in tasks:
                    sid = task.swarm_id
                    w = np.asarray(deltas[sid], float)
                    w = w / w.sum() if w.sum() > 0 else np.ones(len(w)) / len(w)
                    avg = local_aggregate(params[sid], list(w))
                    losses = [model.loss(p, d) for p, d in zip(params[sid], task.datasets)]
                    grad_norms = [float(np.linalg.norm(model.gradient(p, d)))
                                  for p, d in zip(params[sid], task.datasets)]
                    report.rows.append({
                        "t": schedule.t_start + t,
                        "swarm": sid,
                        "loss": float(np.dot(w, losses)),
                        "accuracy": (model.accuracy(avg, task.test_set)
                                     if task.test_set is not None and hasattr(model, "accuracy")
                                     else float("nan")),
                        "grad_norm": float(np.dot(w, grad_norms)),
                        "energy_j": cum_energy[sid],
                    })

        swarm_avg = {}
        for task in tasks:
            sid = task.swarm_id
            swarm_avg[sid] = local_aggregate(params[sid], deltas[sid])
        if k % schedule.tau_g == 0:
            global_params = global_aggregate(list(swarm_avg.values()))
            t_now = schedule.t_start + k * schedule.tau_l
            report.variance_trace.append(
                (t_now, _weighted_variance(params, deltas, global_params)))
            for task in tasks:
                params[task.swarm_id] = [global_params.copy() for _ in task.worker_ids]
        else:
            for task in tasks:
                params[task.swarm_id] = [swarm_avg[task.swarm_id].copy()
                                         for _ in task.worker_ids]

    report.final_global = global_params.copy()
    for task in tasks:
        report.personalized[task.swarm_id] = global_params.copy()
        if task.test_set is not None and hasattr(model, "accuracy"):
            report.post_personalization[task.swarm_id] = {
                "loss": model.loss(global_params, task.test_set),
                "accuracy": model.accuracy(global_params, task.test_set),
            }
    report.energy_by_swarm = dict(cum_energy)
    report.energy_total_j = float(sum(cum_energy.values()))
    return report


def transfer_round_data(plan, swarm, cluster, rng: np.random.Generator,
                        num_classes: int | None = None) -> list[Dataset]:
    """Execute one round of device->UAV data transfer for a solved plan.

    Devices sample uniformly at random (without replacement) from their
    buffers; coordinators pool what they received and forward the planned
    fractions to each worker.  Returns one dataset per worker, ordered as
    swarm.workers.
    """
    device_pools = {}
    for dev in cluster.devices:
        if dev.dataset is None:
            raise DomainError(f"device {dev.id} has no attached datapoints")
        device_pools[dev.id] = dev.dataset

    def draw(ds: Dataset, n: int) -> Dataset:
        n = min(n, len(ds))
        idx = rng.choice(len(ds), size=n, replace=False)
        return ds.subset(idx)

    coord_pools = {}
    for c in swarm.coordinators:
        parts = []
        for dev in cluster.devices:
            r = plan.rho.get((dev.id, c.id), 0.0)
            n = int(round(r * dev.data_size))
            if n > 0:
                parts.append(draw(device_pools[dev.id], n))
        if parts:
            coord_pools[c.id] = Dataset(
                np.concatenate([p.x for p in parts]),
                np.concatenate([p.y for p in parts]))
        else:
            coord_pools[c.id] = None

    out = []
    for w in swarm.workers:
        parts = []
        for dev in cluster.devices:
            r = plan.rho.get((dev.id, w.id), 0.0)
            n = int(round(r * dev.data_size))
            if n > 0:
                parts.append(draw(device_pools[dev.id], n))
        for c in swarm.coordinators:
            pool = coord_pools[c.id]
            if pool is None:
                continue
            vr = plan.varrho.get((c.id, w.id), 0.0)
            n = int(round(vr * len(pool)))
            if n > 0:
                parts.append(draw(pool, n))
        if not parts:
            raise DomainError(f"plan delivers no data to worker {w.id}")
        out.append(Dataset(np.concatenate([p.x for p in parts]),
                           np.concatenate([p.y for p in parts])))
    return out
