"""Convergence diagnostics: gradient divergence, virtual centralized
trajectories, and the closed-form bound linking them.

The divergence suprema are uncomputable over all models, so they are
approximated by maxima over probe models taken from the recorded trajectory;
results are estimates, never asserted as true suprema. Loss-Lipschitz and
gradient-smoothness constants are estimated from ratios over sampled model
pairs and inflated by a safety margin before entering the bound.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .learner import augment, one_hot
from .simulation import TrainingTrace

SAFETY_MARGIN = 1.5
BOUND_TOLERANCE = 1.05
_MIN_PAIR_DIST = 1e-12


@dataclass
class GradContext:
    """Batched loss/gradient evaluation over the run's device datasets."""

    learner: object
    features_aug: np.ndarray     # (D, n, f)
    onehots: np.ndarray          # (D, n, C)
    device_frac: np.ndarray      # |D_i| / |D|
    sat_weight: np.ndarray       # (N_S, D), rows sum to 1 on nonempty sats
    sat_frac: np.ndarray         # |D_k| / |D|
    sat_of_device: np.ndarray
    nonempty: np.ndarray

    @classmethod
    def from_trace(cls, trace: TrainingTrace) -> "GradContext":
        datasets = trace.datasets
        n_classes = trace.config.data.n_classes
        features_aug = np.stack([augment(ds.features) for ds in datasets])
        onehots = np.stack([one_hot(ds.labels, n_classes) for ds in datasets])
        sizes = trace.device_sizes
        n_sats = trace.topology.n_satellites
        n_dev = len(datasets)
        sat_weight = np.zeros((n_sats, n_dev))
        totals = np.zeros(n_sats)
        np.add.at(totals, trace.sat_of_device, sizes)
        for dev in range(n_dev):
            sat_weight[trace.sat_of_device[dev], dev] = sizes[dev]
        nonempty = totals > 0
        sat_weight[nonempty] /= totals[nonempty, None]
        return cls(
            learner=trace.learner,
            features_aug=features_aug,
            onehots=onehots,
            device_frac=sizes / sizes.sum(),
            sat_weight=sat_weight,
            sat_frac=totals / sizes.sum(),
            sat_of_device=trace.sat_of_device,
            nonempty=nonempty,
        )

    def _stack(self, w: np.ndarray) -> np.ndarray:
        return np.broadcast_to(w, (self.features_aug.shape[0], w.shape[0]))

    def device_grads(self, w: np.ndarray) -> np.ndarray:
        return self.learner.grad(self._stack(w), self.features_aug, self.onehots)

    def device_losses(self, w: np.ndarray) -> np.ndarray:
        return self.learner.loss(self._stack(w), self.features_aug, self.onehots)

    def global_loss(self, w: np.ndarray) -> float:
        return float(self.device_frac @ self.device_losses(w))

    def global_grad(self, w: np.ndarray) -> np.ndarray:
        return self.device_frac @ self.device_grads(w)

    def satellite_grads(self, w: np.ndarray) -> np.ndarray:
        return self.sat_weight @ self.device_grads(w)

    def satellite_grad(self, k: int, w: np.ndarray) -> np.ndarray:
        return self.sat_weight[k] @ self.device_grads(w)


@dataclass(frozen=True)
class DivergenceEstimate:
    delta_hat: float             # device-vs-satellite, data-weighted
    Delta_hat: float             # satellite-vs-global, data-weighted
    delta_per_device: np.ndarray
    Delta_per_satellite: np.ndarray


def measure_divergence(trace: TrainingTrace,
                       probe_points: list[np.ndarray] | None = None,
                       ctx: GradContext | None = None) -> DivergenceEstimate:
    """Gradient divergence maxima over the probe models.

    Defaults to the recorded global models as probes. Satellites without
    devices carry zero divergence (their data weight is zero anyway).
    """
    ctx = ctx or GradContext.from_trace(trace)
    if probe_points is None:
        probe_points = [gm for _, gm in trace.global_models]
    if not probe_points:
        raise InputError("need at least one probe model")
    n_dev = ctx.features_aug.shape[0]
    n_sats = ctx.sat_weight.shape[0]
    delta_dev = np.zeros(n_dev)
    delta_sat = np.zeros(n_sats)
    for w in probe_points:
        dev_g = ctx.device_grads(w)
        sat_g = ctx.sat_weight @ dev_g
        glob_g = ctx.sat_frac @ sat_g
        dev_gap = np.linalg.norm(dev_g - sat_g[ctx.sat_of_device], axis=1)
        sat_gap = np.linalg.norm(sat_g - glob_g, axis=1)
        sat_gap[~ctx.nonempty] = 0.0
        delta_dev = np.maximum(delta_dev, dev_gap)
        delta_sat = np.maximum(delta_sat, sat_gap)
    return DivergenceEstimate(
        delta_hat=float(ctx.device_frac @ delta_dev),
        Delta_hat=float(ctx.sat_frac @ delta_sat),
        delta_per_device=delta_dev,
        Delta_per_satellite=delta_sat,
    )


@dataclass(frozen=True)
class VirtualTrajectories:
    """Centralized oracle trajectories, re-synchronized at interval starts."""

    # (interval index g, start t, path of tau1*tau2+1 models)
    global_paths: list[tuple[int, int, np.ndarray]]
    # (interval index s, end t, per-satellite end models (N_S, P))
    satellite_ends: list[tuple[int, int, np.ndarray]]


def virtual_trajectories(trace: TrainingTrace,
                         ctx: GradContext | None = None) -> VirtualTrajectories:
    ctx = ctx or GradContext.from_trace(trace)
    cfg = trace.config
    tau1, tau2 = cfg.training.tau1, cfg.training.tau2
    eta = cfg.training.learning_rate

    global_paths = []
    for g, (t0, w0) in enumerate(trace.global_models[:-1], start=1):
        path = [w0.copy()]
        v = w0.copy()
        for _ in range(tau1 * tau2):
            v = v - eta * ctx.global_grad(v)
            path.append(v.copy())
        global_paths.append((g, t0, np.stack(path)))

    # satellite interval [s] starts from the post-broadcast model at (s-1)*tau1
    sat_models = dict(trace.satellite_models)
    glob_models = dict(trace.global_models)
    satellite_ends = []
    n_sats = ctx.sat_weight.shape[0]
    for s, (t_end, _) in enumerate(trace.satellite_models, start=1):
        t_start = t_end - tau1
        if t_start in glob_models:
            starts = np.tile(glob_models[t_start], (n_sats, 1))
        else:
            starts = sat_models[t_start]
        v = starts.copy()
        for _ in range(tau1):
            # one batched pass: device i's gradient at its satellite's point
            dev_g = ctx.learner.grad(v[ctx.sat_of_device], ctx.features_aug,
                                     ctx.onehots)
            sat_g = ctx.sat_weight @ dev_g
            v = np.where(ctx.nonempty[:, None], v - eta * sat_g, v)
        satellite_ends.append((s, t_end, v))
    return VirtualTrajectories(global_paths=global_paths,
                               satellite_ends=satellite_ends)


def theorem_bound(delta: float, Delta: float, rho: float, beta: float,
                  eta: float, tau1: int, tau2: int) -> float:
    """(rho/beta) * (delta*h(tau1) + Delta*h(tau1*tau2)), h(t)=(eta*beta+1)^t - 1."""
    if beta <= 0:
        raise InputError(f"beta must be positive, got {beta}")

    def h(t: int) -> float:
        try:
            return (eta * beta + 1.0) ** t - 1.0
        except OverflowError:
            return float("inf")

    return (rho / beta) * (delta * h(tau1) + Delta * h(tau1 * tau2))


def estimate_rho_beta(models: list[np.ndarray],
                      ctx: GradContext) -> tuple[float, float]:
    """Max loss-difference and gradient-difference ratios over model pairs."""
    rho = 0.0
    beta = 0.0
    losses = [ctx.global_loss(w) for w in models]
    grads = [ctx.global_grad(w) for w in models]
    for i in range(len(models)):
        for j in range(i + 1, len(models)):
            dist = float(np.linalg.norm(models[i] - models[j]))
            if dist < _MIN_PAIR_DIST:
                continue
            rho = max(rho, abs(losses[i] - losses[j]) / dist)
            beta = max(beta, float(np.linalg.norm(grads[i] - grads[j])) / dist)
    if rho == 0.0 or beta == 0.0:
        # degenerate trajectory (e.g. zero gradients everywhere)
        return max(rho, 1.0), max(beta, 1.0)
    return rho, beta


@dataclass(frozen=True)
class IntervalCheck:
    interval: int
    t_end: int
    gap: float
    bound: float
    margin: float
    holds: bool


@dataclass(frozen=True)
class BoundReport:
    intervals: list[IntervalCheck]
    delta_hat: float
    Delta_hat: float
    rho_hat: float
    beta_hat: float

    @property
    def max_margin(self) -> float:
        return max((c.margin for c in self.intervals), default=0.0)

    @property
    def holds(self) -> bool:
        return all(c.holds for c in self.intervals)


def check_convergence_bound(trace: TrainingTrace) -> BoundReport:
    """Per-global-interval check of the convergence bound.

    Estimates are taken over each interval's own models (its endpoints, the
    virtual endpoint, and the satellite aggregates recorded inside it), then
    the Lipschitz/smoothness constants are inflated by the safety margin.
    A margin of at most 1.05 counts as holding; beyond that the interval is
    flagged as a violation.
    """
    ctx = GradContext.from_trace(trace)
    virt = virtual_trajectories(trace, ctx)
    cfg = trace.config
    tau1, tau2 = cfg.training.tau1, cfg.training.tau2
    eta = cfg.training.learning_rate

    sat_models = dict(trace.satellite_models)
    checks = []
    rho_all = 0.0
    beta_all = 0.0
    for (g, t0, path), (t_end, w_end) in zip(virt.global_paths,
                                             trace.global_models[1:]):
        v_end = path[-1]
        w_start = path[0]
        probes = [w_start, w_end, v_end]
        if t_end in sat_models:
            probes.extend(sat_models[t_end][k]
                          for k in np.flatnonzero(ctx.nonempty))
        div = measure_divergence(trace, probe_points=probes, ctx=ctx)
        pair_models = [w_start, w_end, v_end, path[len(path) // 2]]
        rho, beta = estimate_rho_beta(pair_models, ctx)
        rho_all = max(rho_all, rho)
        beta_all = max(beta_all, beta)
        bound = theorem_bound(div.delta_hat, div.Delta_hat,
                              SAFETY_MARGIN * rho, SAFETY_MARGIN * beta,
                              eta, tau1, tau2)
        gap = abs(ctx.global_loss(w_end) - ctx.global_loss(v_end))
        if bound > 0:
            margin = gap / bound
        else:
            margin = 0.0 if gap <= 1e-12 else float("inf")
        checks.append(IntervalCheck(
            interval=g, t_end=t_end, gap=gap, bound=bound, margin=margin,
            holds=margin <= BOUND_TOLERANCE,
        ))
    overall = measure_divergence(trace, ctx=ctx)
    return BoundReport(intervals=checks, delta_hat=overall.delta_hat,
                       Delta_hat=overall.Delta_hat, rho_hat=rho_all,
                       beta_hat=beta_all)
