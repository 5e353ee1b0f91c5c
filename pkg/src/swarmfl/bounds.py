"""Closed-form calculators for the convergence and drift bounds.

These feed the offload optimizer's objective (through the meta-gradient
noise term sigma_F and the variability terms) and serve as test envelopes
for the training simulator.  All calculators are pure functions of their
inputs; the constants they consume are either measured from a model/dataset
pair (see measure_* helpers) or supplied by configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError


@dataclass
class SmoothnessEstimates:
    """Loss-landscape constants: gradient bound B, Lipschitz factors, and
    data-variability terms at worker, swarm, network, and cluster level."""

    B: float
    mu_g: float
    mu_h: float
    sigma_g: float = 0.0
    sigma_h: float = 0.0
    gamma_g_u: float = 0.0
    gamma_h_u: float = 0.0
    gamma_g: float = 0.0
    gamma_h: float = 0.0
    sigma_g_c: float = 0.0
    sigma_h_c: float = 0.0
    mu_g_c: float | None = None
    mu_h_c: float | None = None

    def __post_init__(self):
        for name in ("B", "mu_g", "mu_h", "sigma_g", "sigma_h", "gamma_g_u",
                     "gamma_h_u", "gamma_g", "gamma_h", "sigma_g_c", "sigma_h_c"):
            if getattr(self, name) < 0:
                raise ValueError(f"estimate {name} must be non-negative")

    def mu_f(self, eta1: float) -> float:
        """Smoothness of the meta-objective: 4*mu_g + eta1*mu_h*B."""
        return 4.0 * self.mu_g + eta1 * self.mu_h * self.B

    def cluster_mu_g(self) -> float:
        return self.mu_g if self.mu_g_c is None else self.mu_g_c


@dataclass
class WorkerSeries:
    """Per-round decision series for one worker: batch ratios and data size.

    ratios has shape (rounds, 3); data has shape (rounds,).  Per-worker
    variability overrides fall back to the shared estimates when None.
    """

    ratios: np.ndarray
    data: np.ndarray
    sigma_g: float | None = None
    sigma_h: float | None = None

    def __post_init__(self):
        self.ratios = np.atleast_2d(np.asarray(self.ratios, dtype=float))
        self.data = np.atleast_1d(np.asarray(self.data, dtype=float))
        if self.ratios.shape != (len(self.data), 3):
            raise ValueError("ratios must be (rounds, 3) matching data length")

    def delta(self, k: int) -> float:
        """Aggregation weight for round k (0-based): alpha_j(k) * D_j(k)."""
        return float(self.ratios[k].sum() * self.data[k])


@dataclass
class BoundInputs:
    """Everything the sequence-level bounds depend on besides the estimates."""

    tau_l: int
    tau_g: int
    k_g: int
    workers: list[list[WorkerSeries]]  # indexed [swarm][worker]
    eta1: float
    eta2: float
    f_gap: float = 0.0  # meta-loss at sequence start minus its minimum

    def __post_init__(self):
        if self.tau_l < 1 or self.tau_g < 1 or self.k_g < 1:
            raise ValueError("schedule factors must be positive integers")
        rounds = self.k_l
        for u, swarm in enumerate(self.workers):
            if not swarm:
                raise ValueError(f"swarm {u} has no workers")
            for j, w in enumerate(swarm):
                if len(w.data) != rounds:
                    raise ValueError(
                        f"worker ({u},{j}) series covers {len(w.data)} rounds, "
                        f"schedule has {rounds}")

    @property
    def k_l(self) -> int:
        return self.tau_g * self.k_g

    @property
    def t_total(self) -> int:
        return self.tau_l * self.tau_g * self.k_g

    @property
    def n_swarms(self) -> int:
        return len(self.workers)

    def round_of(self, t: int) -> int:
        """0-based local round containing iteration t (0-based)."""
        return min(t // self.tau_l, self.k_l - 1)


# ---------------------------------------------------------------------------
# Calculators
# ---------------------------------------------------------------------------

def sigma_F(ratios, data_size: float, estimates: SmoothnessEstimates,
            eta1: float, sigma_g: float | None = None,
            sigma_h: float | None = None) -> float:
    """Expected squared error of the mini-batch meta-gradient approximation.

    ratios is the (a1, a2, a3) triple; diverges (DomainError) when any ratio
    or the data size is zero.
    """
    a1, a2, a3 = (float(r) for r in ratios)
    if min(a1, a2, a3) <= 0.0:
        raise DomainError("mini-batch ratios must be strictly positive; bound diverges")
    if data_size <= 0.0:
        raise DomainError("data size must be positive; bound diverges")
    sg = estimates.sigma_g if sigma_g is None else sigma_g
    sh = estimates.sigma_h if sigma_h is None else sigma_h
    b, mu_g = estimates.B, estimates.mu_g
    inner = sg * (a1 + (mu_g * eta1) ** 2 * a2) / (a1 * a2 * data_size)
    term_a = 3.0 * eta1 ** 2 * sh / (a3 * data_size)
    return term_a * (b ** 2 + inner) + 12.0 * inner


def gamma_F(gamma_h: float, gamma_g: float, B: float, eta1: float) -> float:
    """Meta-gradient variability: 3 * B^2 * eta1^2 * gamma_h + 192 * gamma_g."""
    if min(gamma_h, gamma_g, B) < 0:
        raise DomainError("variability inputs must be non-negative")
    return 3.0 * B ** 2 * eta1 ** 2 * gamma_h + 192.0 * gamma_g


def _geometric_factor(ratio: float, length: int) -> float:
    # ratio = 8 + 48*(eta2*mu_f)^2 can never equal 1, but the limit form is
    # kept for the documented degenerate case.
    if abs(1.0 - ratio) < 1e-12:
        return float(length)
    return (1.0 - ratio ** length) / (1.0 - ratio)


def _sigma_f_at(inputs: BoundInputs, est: SmoothnessEstimates, u: int, j: int,
                t: int) -> float:
    w = inputs.workers[u][j]
    k = inputs.round_of(t)
    return sigma_F(w.ratios[k], w.data[k], est, inputs.eta1,
                   sigma_g=w.sigma_g, sigma_h=w.sigma_h)


def _delta_weights(inputs: BoundInputs, u: int, k: int) -> np.ndarray:
    deltas = np.array([w.delta(k) for w in inputs.workers[u]])
    total = deltas.sum()
    if total <= 0:
        raise DomainError(f"swarm {u}: aggregation weights are all zero at round {k}")
    return deltas / total


def upsilon(inputs: BoundInputs, estimates: SmoothnessEstimates, t: int) -> float:
    """Parameter-variance bound across workers at a global aggregation time.

    ``t`` counts completed iterations and must be a positive multiple of
    tau_l * tau_g (a global aggregation instant).
    """
    period = inputs.tau_l * inputs.tau_g
    if t <= 0 or t % period != 0 or t > inputs.t_total:
        raise DomainError(
            f"t={t} is not a global aggregation instant (multiple of {period})")
    eta2 = inputs.eta2
    mu_f = estimates.mu_f(inputs.eta1)
    ratio = 8.0 + 48.0 * (eta2 * mu_f) ** 2
    u_count = inputs.n_swarms
    k_round = inputs.round_of(t - 1)  # the round that ends at t

    gamma_u_f = gamma_F(estimates.gamma_h_u, estimates.gamma_g_u, estimates.B,
                        inputs.eta1)
    gamma_f = gamma_F(estimates.gamma_h, estimates.gamma_g, estimates.B,
                      inputs.eta1)

    local_noise = 0.0
    nested_noise = 0.0
    for u in range(u_count):
        weights = _delta_weights(inputs, u, k_round)
        for j in range(len(inputs.workers[u])):
            local_noise += weights[j] * sum(
                _sigma_f_at(inputs, estimates, u, j, t - y)
                for y in range(1, inputs.tau_l + 1))
        for y in range(1, period + 1):
            nested_noise += sum(
                weights[j] * _sigma_f_at(inputs, estimates, u, j, t - y)
                for j in range(len(inputs.workers[u])))

    term_a = ((16.0 * eta2 ** 2 / u_count) * local_noise
              + (24.0 * eta2 ** 2 / u_count) * u_count * gamma_u_f) \
        * _geometric_factor(ratio, inputs.tau_l)
    term_b = ((16.0 * eta2 ** 2 / u_count) * nested_noise
              + 24.0 * eta2 ** 2 * gamma_f) \
        * _geometric_factor(ratio, period)
    return term_a + term_b


def xi(inputs: BoundInputs, estimates: SmoothnessEstimates) -> float:
    """Cumulative-average meta-gradient magnitude bound over one sequence.

    Requires the step-size hypothesis eta2 < 1 / (6 * mu_f).
    """
    eta2 = inputs.eta2
    mu_f = estimates.mu_f(inputs.eta1)
    if mu_f > 0 and not eta2 < 1.0 / (6.0 * mu_f):
        raise DomainError(
            f"step-size hypothesis violated: eta2={eta2} >= 1/(6*mu_f)={1.0 / (6.0 * mu_f)}")
    denom = eta2 / 2.0 - 3.0 * eta2 ** 2 * mu_f
    u_count = inputs.n_swarms
    gamma_u_f = gamma_F(estimates.gamma_h_u, estimates.gamma_g_u, estimates.B,
                        inputs.eta1)
    coef = 3.0 * eta2 ** 2 * mu_f / 2.0 + eta2

    acc = inputs.f_gap / inputs.t_total
    for k_prime in range(1, inputs.k_g + 1):
        ups = upsilon(inputs, estimates, k_prime * inputs.tau_l * inputs.tau_g)
        k_weight_round = k_prime * inputs.tau_g - 1  # 0-based round of the weights
        weights = [_delta_weights(inputs, u, k_weight_round) for u in range(u_count)]
        for k in range((k_prime - 1) * inputs.tau_g + 1, k_prime * inputs.tau_g + 1):
            for t in range((k - 1) * inputs.tau_l, k * inputs.tau_l):
                noise = 0.0
                for u in range(u_count):
                    noise += sum(
                        weights[u][j] * _sigma_f_at(inputs, estimates, u, j, t)
                        for j in range(len(inputs.workers[u])))
                noise /= u_count
                acc += (coef * (noise + mu_f ** 2 * ups)
                        + 3.0 * eta2 ** 2 * mu_f * gamma_u_f) / inputs.t_total
    return acc / denom


def xi_hat(inputs: BoundInputs, cluster_estimates, k: int) -> float:
    """Meta-gradient mismatch between worker UAVs and their device clusters
    at local aggregation round k (1-based).

    cluster_estimates is one SmoothnessEstimates shared by all swarms or a
    list with one entry per swarm (the visited cluster's constants).
    """
    if not (1 <= k <= inputs.k_l):
        raise DomainError(f"round k={k} outside 1..{inputs.k_l}")
    per_swarm = (cluster_estimates if isinstance(cluster_estimates, (list, tuple))
                 else [cluster_estimates] * inputs.n_swarms)
    acc = 0.0
    for u in range(inputs.n_swarms):
        est = per_swarm[u]
        mu_c = est.cluster_mu_g()
        factor = 1.0 + mu_c ** 2 * inputs.eta1 ** 2
        weights = _delta_weights(inputs, u, k - 1)
        for j, w in enumerate(inputs.workers[u]):
            d = float(w.data[k - 1])
            if d <= 0:
                raise DomainError(f"worker ({u},{j}) has no data at round {k}")
            inner = (3.0 * inputs.eta1 ** 2 * est.sigma_h_c / d
                     * (est.B ** 2 + est.sigma_g_c * factor / d)
                     + 12.0 * est.sigma_g_c * factor / d)
            acc += weights[j] * inner
    return acc / inputs.n_swarms


def drift_bound(grad_norm_sq_at_visit: float, drifts, elapsed: int) -> float:
    """Stale-model gradient-norm bound after `elapsed` unvisited steps.

    ``drifts`` is either a constant per-step drift or a sequence of at least
    ``elapsed`` per-step drift values for the unvisited interval.
    """
    if elapsed < 0:
        raise DomainError(f"elapsed must be non-negative, got {elapsed}")
    if grad_norm_sq_at_visit < 0:
        raise DomainError("gradient norm squared must be non-negative")
    factor = elapsed + 1.0
    if np.isscalar(drifts):
        total = float(drifts) * elapsed
    else:
        seq = np.asarray(drifts, dtype=float)
        if len(seq) < elapsed:
            raise DomainError(
                f"need {elapsed} per-step drifts, got {len(seq)}")
        total = float(seq[:elapsed].sum())
    return factor * grad_norm_sq_at_visit + factor * total


# ---------------------------------------------------------------------------
# Empirical constant measurement
# ---------------------------------------------------------------------------

def _operator_norm(apply_fn, dim: int, rng: np.random.Generator,
                   iters: int = 30) -> float:
    """Largest singular value of a symmetric operator via power iteration."""
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = apply_fn(v)
        n = np.linalg.norm(w)
        if n == 0:
            return 0.0
        est = n
        v = w / n
    return float(est)


def measure_worker_constants(model, dataset, probe_params: list[np.ndarray],
                             rng: np.random.Generator) -> dict[str, float]:
    """Measure B, mu_g, sigma_g, sigma_h for one worker over probe points.

    B is the max full-batch gradient norm; mu_g the max Hessian operator
    norm; sigma_g/sigma_h the max per-sample gradient/Hessian deviation
    (mean squared) across the probes.
    """
    from .learner import Dataset

    b = mu_g = sg = sh = 0.0
    n = len(dataset)
    for w in probe_params:
        grad = model.gradient(w, dataset)
        b = max(b, float(np.linalg.norm(grad)))
        mu_g = max(mu_g, _operator_norm(lambda v: model.hvp(w, dataset, v),
                                        len(w), rng))
        dev_g = 0.0
        dev_h = 0.0
        for i in range(n):
            single = Dataset(dataset.x[i:i + 1], dataset.y[i:i + 1])
            gi = model.gradient(w, single)
            dev_g += float(((gi - grad) ** 2).sum())
            dev_h += _operator_norm(
                lambda v: model.hvp(w, single, v) - model.hvp(w, dataset, v),
                len(w), rng, iters=12) ** 2
        sg = max(sg, dev_g / n)
        sh = max(sh, dev_h / n)
    return {"B": b, "mu_g": mu_g, "sigma_g": sg, "sigma_h": sh}


def measure_hierarchy_constants(model, swarm_datasets,
                                probe_params: list[np.ndarray],
                                rng: np.random.Generator,
                                weights=None) -> dict[str, float]:
    """Measure intra-swarm (gamma_*_u) and inter-swarm (gamma_*) variability.

    swarm_datasets is [[worker datasets] per swarm]; weights mirror that
    shape (normalized per swarm) and default to uniform.
    """
    from .learner import Dataset  # noqa: F401  (kept for symmetry with measure_worker_constants)

    dim = len(probe_params[0])
    gamma_g_u = gamma_h_u = gamma_g = gamma_h = 0.0
    for w in probe_params:
        swarm_grads = []
        swarm_hvp_fns = []
        for u, datasets in enumerate(swarm_datasets):
            wt = (np.ones(len(datasets)) / len(datasets) if weights is None
                  else np.asarray(weights[u], float) / np.sum(weights[u]))
            grads = [model.gradient(w, ds) for ds in datasets]
            mean_grad = sum(g * t for g, t in zip(grads, wt))
            gamma_g_u = max(gamma_g_u, float(sum(
                t * ((g - mean_grad) ** 2).sum() for g, t in zip(grads, wt))))
            dev_h = 0.0
            for ds, t in zip(datasets, wt):
                def diff(v, ds=ds, datasets=datasets, wt=wt):
                    mean_hv = sum(model.hvp(w, d2, v) * t2
                                  for d2, t2 in zip(datasets, wt))
                    return model.hvp(w, ds, v) - mean_hv
                dev_h += t * _operator_norm(diff, dim, rng, iters=12) ** 2
            gamma_h_u = max(gamma_h_u, dev_h)
            swarm_grads.append((mean_grad, list(zip(datasets, wt))))
            swarm_hvp_fns.append(list(zip(datasets, wt)))
        mean_of_means = sum(g for g, _ in swarm_grads) / len(swarm_grads)
        gamma_g = max(gamma_g, float(np.mean(
            [((g - mean_of_means) ** 2).sum() for g, _ in swarm_grads])))

        def swarm_hv(v, pairs):
            return sum(model.hvp(w, ds, v) * t for ds, t in pairs)

        dev = 0.0
        for pairs in swarm_hvp_fns:
            def diff(v, pairs=pairs):
                mean_hv = sum(swarm_hv(v, p) for p in swarm_hvp_fns) / len(swarm_hvp_fns)
                return swarm_hv(v, pairs) - mean_hv
            dev += _operator_norm(diff, dim, rng, iters=12) ** 2
        gamma_h = max(gamma_h, dev / len(swarm_hvp_fns))
    return {"gamma_g_u": gamma_g_u, "gamma_h_u": gamma_h_u,
            "gamma_g": gamma_g, "gamma_h": gamma_h}
