"""Sampling-based control: per-plan importance weighting with temperature
auto-tuning, per-plan mean updates, and the blended multi-modal command.

Each active plan keeps its own mean control sequence, inverse temperature, and
cost function. One iteration back-shifts every plan mean, perturbs it with
spline noise, rolls the samples through the world model, reweights each plan's
samples by exponentiated negative cost, and finally blends all samples across
plans into a single command through a second, global weighting over the
concatenated costs.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from mmtamp.halton import SplineNoiseConfig, sample_noise_streams
from mmtamp.rng import NOISE_STREAM_BASE, seeded_rng
from mmtamp.worlds.planar import PlanarSnapshot

# Total cost assigned to a rollout that produced non-finite state or cost.
ROLLOUT_FAILURE_COST = 1e6

BETA_SHRINK = 0.9
BETA_GROW = 1.2


@dataclass
class ControllerConfig:
    """Controller parameters; defaults follow conventional sampling-MPC practice."""

    num_plans: int = 2
    samples_per_plan: int = 100
    horizon: int = 20
    dt: float = 0.05
    gamma: float = 0.95
    alpha_u: float = 0.8
    beta_init: float = 1.0
    eta_bounds: tuple[float, float] | None = None  # default [0.05 K, 0.10 K]
    noise_scale: tuple | np.ndarray = (0.5, 0.5)
    seed: int = 0
    num_knots: int = 4
    spline_degree: int = 3
    rollout_executor: str = "vectorized"  # vectorized | serial | threads
    num_workers: int = 2
    max_temp_iters: int = 100

    def __post_init__(self) -> None:
        self.noise_scale = np.atleast_1d(np.asarray(self.noise_scale, dtype=np.float64))
        if self.eta_bounds is None:
            k = self.samples_per_plan
            self.eta_bounds = (0.05 * k, 0.10 * k)
        self.validate()

    def validate(self) -> None:
        if self.num_plans < 1 or self.samples_per_plan < 1 or self.horizon < 1:
            raise ValueError("num_plans, samples_per_plan, horizon must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 <= self.alpha_u <= 1.0:
            raise ValueError("alpha_u must lie in [0, 1]")
        if self.beta_init <= 0:
            raise ValueError("beta_init must be positive")
        eta_l, eta_u = self.eta_bounds
        if not 0 < eta_l < eta_u <= self.num_plans * self.samples_per_plan:
            raise ValueError("need 0 < eta_l < eta_u <= num_plans * samples_per_plan")
        if np.any(self.noise_scale < 0):
            raise ValueError("noise_scale entries must be nonnegative")
        if self.rollout_executor not in ("vectorized", "serial", "threads"):
            raise ValueError(f"unknown rollout executor '{self.rollout_executor}'")

    def noise_config(self, control_dim: int) -> SplineNoiseConfig:
        scale = self.noise_scale
        if scale.size == 1:
            scale = np.repeat(scale, control_dim)
        if scale.size != control_dim:
            raise ValueError("noise_scale length must match the control dimension")
        return SplineNoiseConfig(
            horizon=self.horizon,
            scale=scale,
            num_knots=self.num_knots,
            degree=self.spline_degree,
        )


# ---------------------------------------------------------------------------
# Core update rules
# ---------------------------------------------------------------------------

def discounted_cost(step_costs: np.ndarray, gamma: float) -> float:
    """Sum of gamma^t * c_t over the horizon."""
    costs = np.asarray(step_costs, dtype=np.float64)
    if not np.isfinite(costs).all():
        raise ValueError("step costs must be finite")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    return float(np.dot(costs, gamma ** np.arange(costs.shape[-1])))


def importance_weights(costs: np.ndarray, beta: float) -> tuple[np.ndarray, float, float]:
    """Exponentiated-cost weights: returns (weights, eta, rho).

    rho is the minimum cost (subtracted for stability), eta the normalizer.
    """
    costs = np.asarray(costs, dtype=np.float64)
    if costs.size == 0:
        raise ValueError("cannot weight an empty cost list")
    if not np.isfinite(costs).all():
        raise ValueError("costs must be finite")
    if beta <= 0:
        raise ValueError("beta must be positive")
    rho = float(costs.min())
    unnormalized = np.exp(-(costs - rho) / beta)
    eta = float(unnormalized.sum())
    return unnormalized / eta, eta, rho


def update_inverse_temperature(
    costs: np.ndarray,
    beta: float,
    eta_bounds: tuple[float, float],
    max_iters: int = 100,
) -> tuple[float, float, float, bool]:
    """Scale beta by 0.9/1.2 until the normalizer eta enters its bounds.

    Returns (beta, eta, rho, converged). With all-equal costs eta is constant,
    so the iteration cap triggers and converged is False.
    """
    costs = np.asarray(costs, dtype=np.float64)
    if not np.isfinite(costs).all():
        raise ValueError("costs must be finite")
    eta_l, eta_u = eta_bounds
    rho = float(costs.min())
    shifted = costs - rho
    for _ in range(max_iters):
        eta = float(np.exp(-shifted / beta).sum())
        if eta_l <= eta <= eta_u:
            return beta, eta, rho, True
        if eta > eta_u:
            beta = BETA_SHRINK * beta
        else:
            beta = BETA_GROW * beta
    eta = float(np.exp(-shifted / beta).sum())
    return beta, eta, rho, False


def per_plan_mean(weights: np.ndarray, sequences: np.ndarray) -> np.ndarray:
    """Weighted average of control sequences: sum_k w_k V_k."""
    weights = np.asarray(weights, dtype=np.float64)
    sequences = np.asarray(sequences, dtype=np.float64)
    if weights.shape[0] != sequences.shape[0]:
        raise ValueError("one weight per sequence required")
    return np.einsum("k,ktd->td", weights, sequences)


def shift_warm_start(u: np.ndarray) -> np.ndarray:
    """Time-shift a sequence back one step, duplicating the final input."""
    if u.shape[0] < 2:
        raise ValueError("horizon must be at least 2 to shift")
    out = np.empty_like(u)
    out[:-1] = u[1:]
    out[-1] = u[-1]
    return out


def blend_global(
    prev_u: np.ndarray,
    sequences: np.ndarray,
    costs: np.ndarray,
    beta: float,
    eta_bounds: tuple[float, float],
    alpha_u: float,
    max_iters: int = 100,
):
    """Blend all samples into one sequence, regularized toward prev_u.

    The global weighting runs the same temperature tuning over the concatenated
    costs. Returns (u, weights, beta, eta, rho, converged).
    """
    beta, _, _, converged = update_inverse_temperature(costs, beta, eta_bounds, max_iters)
    weights, eta, rho = importance_weights(costs, beta)
    u = (1.0 - alpha_u) * prev_u + alpha_u * per_plan_mean(weights, sequences)
    return u, weights, beta, eta, rho, converged


# ---------------------------------------------------------------------------
# Rollouts
# ---------------------------------------------------------------------------

def _restore_for_spec(snapshot, size: int, spec):
    """World copy for one plan's rollouts, honoring the plan's suction policy."""
    if isinstance(snapshot, PlanarSnapshot):
        batch = snapshot.restore(size, suction_auto=(spec.suction == "auto"))
        if spec.suction == "detach":
            batch.attached[:] = False
        return batch
    return snapshot.restore(size)


def _rollout_chunk(snapshot, spec, sequences, dt, step_costs, traj) -> None:
    batch = _restore_for_spec(snapshot, sequences.shape[0], spec)
    for t in range(sequences.shape[1]):
        controls = sequences[:, t]
        batch.step(controls, dt)
        step_costs[:, t] = spec.evaluate(batch, controls)
        traj[:, t] = batch.probe_pos


def rollout_plan(
    snapshot,
    spec,
    sequences: np.ndarray,
    dt: float,
    executor: str = "vectorized",
    num_workers: int = 2,
) -> tuple[np.ndarray, np.ndarray]:
    """Simulate K sequences under one plan's cost; returns (step_costs, trajectories).

    All executors produce bit-identical results: every sample steps through the
    same arithmetic and lands in its own output row.
    """
    k, t, _ = sequences.shape
    step_costs = np.empty((k, t))
    traj = np.empty((k, t, snapshot.probe_dim))
    if executor == "vectorized":
        _rollout_chunk(snapshot, spec, sequences, dt, step_costs, traj)
    elif executor == "serial":
        for i in range(k):
            _rollout_chunk(
                snapshot, spec, sequences[i : i + 1], dt,
                step_costs[i : i + 1], traj[i : i + 1],
            )
    elif executor == "threads":
        with ThreadPoolExecutor(max_workers=num_workers) as pool:
            futures = [
                pool.submit(
                    _rollout_chunk, snapshot, spec, sequences[i : i + 1], dt,
                    step_costs[i : i + 1], traj[i : i + 1],
                )
                for i in range(k)
            ]
            for f in futures:
                f.result()
    else:
        raise ValueError(f"unknown rollout executor '{executor}'")
    return step_costs, traj


@dataclass
class RolloutBatch:
    """All samples of one controller iteration, concatenated across plans."""

    sequences: np.ndarray  # (N*K, T, d)
    trajectories: np.ndarray  # (N*K, T, probe_dim)
    step_costs: np.ndarray  # (N*K, T)
    total_costs: np.ndarray  # (N*K,)
    samples_per_plan: int

    def plan_slice(self, i: int) -> slice:
        return slice(i * self.samples_per_plan, (i + 1) * self.samples_per_plan)


# ---------------------------------------------------------------------------
# Controller state and the multi-modal iteration
# ---------------------------------------------------------------------------

@dataclass
class PlanModeSlot:
    """Per-plan controller state: mean sequence plus temperature bookkeeping."""

    key: str
    plan_index: int
    mean: np.ndarray
    beta: float
    cost_spec: object
    eta: float = 0.0
    rho: float = 0.0
    temp_converged: bool = True


@dataclass
class ControllerState:
    cfg: ControllerConfig
    control_dim: int
    slots: list[PlanModeSlot] = field(default_factory=list)
    u: np.ndarray = None
    global_beta: float = 0.0
    iteration: int = 0
    last_rollouts: RolloutBatch | None = None

    def __post_init__(self) -> None:
        if self.u is None:
            self.u = np.zeros((self.cfg.horizon, self.control_dim))
        self.global_beta = self.global_beta or self.cfg.beta_init
        self._streams: dict[int, np.random.Generator] = {}
        self._noise_cfg = self.cfg.noise_config(self.control_dim)

    def stream(self, rollout_index: int) -> np.random.Generator:
        """Persistent noise stream for one global rollout index."""
        if rollout_index not in self._streams:
            self._streams[rollout_index] = seeded_rng(
                self.cfg.seed, NOISE_STREAM_BASE + rollout_index
            )
        return self._streams[rollout_index]

    def reconcile(self, cost_specs: list) -> None:
        """Match slots to the new plan set by key.

        Surviving plans keep their mean and temperature; new plans start from
        the current global sequence; surplus slots are dropped.
        """
        old = {slot.key: slot for slot in self.slots}
        slots = []
        for i, spec in enumerate(cost_specs):
            if spec.key in old:
                slot = old[spec.key]
                slot.plan_index = i
                slot.cost_spec = spec
            else:
                slot = PlanModeSlot(
                    key=spec.key,
                    plan_index=i,
                    mean=self.u.copy(),
                    beta=self.cfg.beta_init,
                    cost_spec=spec,
                )
            slots.append(slot)
        self.slots = slots


def m3p2i_iteration(state: ControllerState, world, cost_specs: list, cfg: ControllerConfig):
    """One multi-modal control iteration against the current world state.

    Returns (command, diagnostics); the state (plan means, temperatures, global
    sequence) is updated in place. The world itself is not stepped.
    """
    state.reconcile(cost_specs)
    n = len(state.slots)
    if n == 0:
        raise ValueError("need at least one cost spec")
    k, t = cfg.samples_per_plan, cfg.horizon
    snapshot = world.snapshot()
    gamma_pow = cfg.gamma ** np.arange(t)

    d = state.control_dim
    all_sequences = np.empty((n * k, t, d))
    all_step_costs = np.empty((n * k, t))
    all_traj = None
    total_costs = np.empty(n * k)
    nonfinite_counts = []

    for slot in state.slots:
        i = slot.plan_index
        slot.mean = shift_warm_start(slot.mean)
        streams = [state.stream(i * k + j) for j in range(k)]
        noise = sample_noise_streams(state._noise_cfg, streams)
        sequences = world.layout.clip_controls(slot.mean[None, :, :] + noise)
        step_costs, traj = rollout_plan(
            snapshot, slot.cost_spec, sequences, cfg.dt,
            executor=cfg.rollout_executor, num_workers=cfg.num_workers,
        )
        if all_traj is None:
            all_traj = np.empty((n * k, t, traj.shape[-1]))
        bad = ~(np.isfinite(step_costs).all(axis=1) & np.isfinite(traj).all(axis=(1, 2)))
        step_costs = np.where(bad[:, None], 0.0, step_costs)
        totals = np.einsum("kt,t->k", step_costs, gamma_pow)
        totals = np.where(bad, ROLLOUT_FAILURE_COST, totals)
        nonfinite_counts.append(int(bad.sum()))

        sl = slice(i * k, (i + 1) * k)
        all_sequences[sl] = sequences
        all_step_costs[sl] = step_costs
        all_traj[sl] = traj
        total_costs[sl] = totals

        slot.beta, slot.eta, slot.rho, converged = update_inverse_temperature(
            totals, slot.beta, cfg.eta_bounds, cfg.max_temp_iters
        )
        slot.temp_converged = converged
        weights, slot.eta, slot.rho = importance_weights(totals, slot.beta)
        slot.mean = per_plan_mean(weights, sequences)

    global_bounds = (cfg.eta_bounds[0] * n, cfg.eta_bounds[1] * n)
    u, global_weights, state.global_beta, g_eta, g_rho, g_converged = blend_global(
        state.u, all_sequences, total_costs, state.global_beta,
        global_bounds, cfg.alpha_u, cfg.max_temp_iters,
    )
    command = u[0].copy()
    state.u = shift_warm_start(u)
    state.iteration += 1
    state.last_rollouts = RolloutBatch(
        sequences=all_sequences, trajectories=all_traj,
        step_costs=all_step_costs, total_costs=total_costs, samples_per_plan=k,
    )

    diagnostics = {
        "plans": [
            {
                "key": slot.key,
                "rho": slot.rho,
                "eta": slot.eta,
                "beta": slot.beta,
                "best_cost": float(total_costs[slot.plan_index * k : (slot.plan_index + 1) * k].min()),
                "weight_mass": float(
                    global_weights[slot.plan_index * k : (slot.plan_index + 1) * k].sum()
                ),
                "temp_converged": bool(getattr(slot, "temp_converged", True)),
                "nonfinite_rollouts": nonfinite_counts[slot.plan_index],
            }
            for slot in state.slots
        ],
        "global": {
            "beta": state.global_beta,
            "eta": g_eta,
            "rho": g_rho,
            "temp_converged": bool(g_converged),
        },
    }
    return command, diagnostics
