"""Primal-dual iteration over controls and dual coefficients.

One step performs (1) gradient ascent in the controls on the saddle
objective, (2) extrapolation ``v_bar = 2 v_new - v_old``, and (3) a proximal
update of the dual coefficients evaluated on trajectories rolled out from the
extrapolated controls.  With the identity Gram of random-feature bases the
proximal update is the convex combination

    a <- (1 - h_a) a + h_a * (population feature means of z_bar)

(``paper_literal`` mode); ``exact_prox`` solves the per-slice proximal
subproblem exactly instead.  At a fixed point the duals equal the population
feature means along the optimal trajectories, which is the discrete
consistency condition the acceptance suite checks.

The iteration's coupling is not bilinear and carries no convergence
guarantee, so divergence (any non-finite state) is a handled runtime outcome
raised as :class:`SolverDivergedError` with diagnostics.

``potential_oracle_solve`` is a deliberately plain validation path: the same
equilibrium is the minimizer of a single population cost (the kernel is
symmetric positive definite), minimized here by gradient descent with
backtracking over desk-scale instances.  It shares only the elementary
feature-map evaluations with the solver, none of its batched machinery.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TextIO

import numpy as np
from numpy.typing import NDArray

from . import backend
from .kernels import RandomFeatureBasis, eval_feature_gradient, eval_features
from .problem import (
    MFGProblem,
    lagrangian_gradients,
    lagrangian_value,
    sample_initial_positions,
    terminal_value_and_gradient,
)
from .reporting import CostReport, cost_report
from .transcription import Discretization, control_gradient, rollout, saddle_objective
from .rng import CONTROL_STREAM, standard_normal, stream

Array = NDArray[np.float64]

_INIT_MODES = ("zeros", "random")
_PROX_MODES = ("paper_literal", "exact_prox")


class SolverDivergedError(RuntimeError):
    """Non-finite value encountered; carries the iteration and history."""

    def __init__(self, iteration: int, history=()):
        self.iteration = iteration
        self.history = list(history)
        super().__init__(
            f"solver diverged at iteration {iteration} (non-finite state)"
        )


@dataclass(frozen=True)
class SolverConfig:
    """Step sizes, iteration control, and initialization for ``solve``.

    ``h_v`` is the control ascent step on the M-averaged objective, so its
    useful scale grows with the number of agents; the default is tuned for
    the stock presets at M = 256.  ``h_a`` must lie in (0, 1] in
    ``paper_literal`` mode (the update is a convex combination).
    """

    h_v: float = 30.0
    h_a: float = 0.5
    max_iterations: int = 2000
    tolerance: float = 1e-6
    control_init: str = "zeros"
    control_init_scale: float = 0.1
    dual_init: str = "zeros"
    dual_init_scale: float = 0.1
    init_seed: int = 0
    prox_mode: str = "paper_literal"
    record_history_every: int = 10

    def __post_init__(self):
        if not self.h_v > 0:
            raise ValueError(f"h_v must be > 0, got {self.h_v}")
        if self.prox_mode not in _PROX_MODES:
            raise ValueError(f"prox_mode must be one of {_PROX_MODES}, got {self.prox_mode!r}")
        if self.prox_mode == "paper_literal" and not 0.0 < self.h_a <= 1.0:
            raise ValueError(f"h_a must be in (0, 1] for paper_literal, got {self.h_a}")
        if self.prox_mode == "exact_prox" and not self.h_a > 0:
            raise ValueError(f"h_a must be > 0, got {self.h_a}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be > 0, got {self.tolerance}")
        for name, mode in (("control_init", self.control_init), ("dual_init", self.dual_init)):
            if mode not in _INIT_MODES:
                raise ValueError(f"{name} must be one of {_INIT_MODES}, got {mode!r}")
        if self.record_history_every < 1:
            raise ValueError("record_history_every must be >= 1")


@dataclass(frozen=True)
class SaddleState:
    controls: Array        # (M, N, d)
    controls_prev: Array   # previous iterate, for the extrapolation
    duals: Array           # (r, N)
    iteration: int = 0


@dataclass(frozen=True)
class Solution:
    controls: Array
    trajectories: Array
    duals: Array
    initial_positions: Array
    disc: Discretization
    cost_report: CostReport
    residual_history: tuple[tuple[int, float, float], ...]  # (iter, residual, objective)
    converged: bool
    iterations: int


def feature_means(basis: RandomFeatureBasis, trajectories) -> Array:
    """Population feature means (1/M) sum_m zeta(z[m, l]), shape (r, N)."""
    z = np.asarray(trajectories, dtype=np.float64)
    if basis.amplitude == 0.0:
        return np.zeros((basis.feature_count, z.shape[1]))
    sums = backend.feature_sums(
        basis.frequencies, basis.amplitude,
        np.ascontiguousarray(z[:, :, : basis.interaction_dims]),
    )
    return sums / z.shape[0]


def prox_duals(duals, means, h_a: float, mode: str = "paper_literal",
               step: float | None = None) -> Array:
    """Dual update toward the feature means.

    ``paper_literal``: (1-h_a) a + h_a means, requiring h_a in (0, 1].
    ``exact_prox``: (a + h*h_a*means) / (1 + h*h_a), the exact minimizer of
    the per-slice proximal subproblem; needs the time step h.
    """
    a = np.asarray(duals, dtype=np.float64)
    m = np.asarray(means, dtype=np.float64)
    if a.shape != m.shape:
        raise ValueError(f"duals shape {a.shape} != feature_means shape {m.shape}")
    if mode == "paper_literal":
        if not 0.0 < h_a <= 1.0:
            raise ValueError(f"h_a must be in (0, 1] for paper_literal, got {h_a}")
        return (1.0 - h_a) * a + h_a * m
    if mode == "exact_prox":
        if step is None:
            raise ValueError("exact_prox requires the discretization step")
        return (a + step * h_a * m) / (1.0 + step * h_a)
    raise ValueError(f"unknown prox mode {mode!r}")


def residual(prev: SaddleState, new: SaddleState) -> float:
    """Normalized sup-norm change in controls plus duals; 0 iff identical."""
    if prev.controls.shape != new.controls.shape or prev.duals.shape != new.duals.shape:
        raise ValueError("state shapes do not match")
    dv = np.max(np.abs(new.controls - prev.controls))
    da = np.max(np.abs(new.duals - prev.duals))
    return float(
        dv / (1.0 + np.max(np.abs(prev.controls)))
        + da / (1.0 + np.max(np.abs(prev.duals)))
    )


def pdhg_step(state: SaddleState, problem: MFGProblem, basis: RandomFeatureBasis,
              initial_positions, disc: Discretization,
              config: SolverConfig) -> SaddleState:
    """Advance one primal-dual iteration."""
    # Divergence is a handled outcome: let overflow produce inf/nan silently
    # and turn it into a diagnostic error below.
    with np.errstate(over="ignore", invalid="ignore"):
        grad = control_gradient(
            problem, basis, state.duals, initial_positions, state.controls, disc
        )
        if not np.all(np.isfinite(grad)):
            raise SolverDivergedError(state.iteration)
        v_new = state.controls + config.h_v * grad
        v_bar = 2.0 * v_new - state.controls
        z_bar = rollout(initial_positions, v_bar, disc)
        means = feature_means(basis, z_bar)
        a_new = prox_duals(state.duals, means, config.h_a, config.prox_mode, disc.step)
    if not (np.all(np.isfinite(v_new)) and np.all(np.isfinite(a_new))):
        raise SolverDivergedError(state.iteration)
    return SaddleState(
        controls=v_new,
        controls_prev=state.controls,
        duals=a_new,
        iteration=state.iteration + 1,
    )


def _initial_state(problem, basis, num_agents, disc, config) -> SaddleState:
    shape = (num_agents, disc.num_steps, problem.dimension)
    gen = stream(config.init_seed, CONTROL_STREAM)
    if config.control_init == "random":
        v0 = standard_normal(gen, shape) * config.control_init_scale
    else:
        v0 = np.zeros(shape)
    if config.dual_init == "random":
        a0 = standard_normal(gen, (basis.feature_count, disc.num_steps))
        a0 *= config.dual_init_scale
    else:
        a0 = np.zeros((basis.feature_count, disc.num_steps))
    return SaddleState(controls=v0, controls_prev=v0.copy(), duals=a0, iteration=0)


def solve(problem: MFGProblem, basis: RandomFeatureBasis, num_agents: int,
          disc: Discretization, config: SolverConfig, position_seed: int = 0,
          progress: TextIO | None = None) -> Solution:
    """Run the primal-dual iteration from sampled initial positions.

    Stops when the normalized sup-norm residual falls below
    ``config.tolerance`` or after ``config.max_iterations``.  Emits
    ``iter=<k> objective=<float> residual=<float>`` lines to ``progress``
    every ``record_history_every`` iterations (and mirrors them into the
    returned ``residual_history``).  Raises :class:`SolverDivergedError` on
    non-finite state.
    """
    if num_agents < 1:
        raise ValueError(f"num_agents must be >= 1, got {num_agents}")
    x0 = sample_initial_positions(problem.initial, num_agents, position_seed)
    state = _initial_state(problem, basis, num_agents, disc, config)
    history: list[tuple[int, float, float]] = []
    converged = False
    for k in range(1, config.max_iterations + 1):
        try:
            new_state = pdhg_step(state, problem, basis, x0, disc, config)
        except SolverDivergedError as err:
            raise SolverDivergedError(err.iteration, history) from None
        res = residual(state, new_state)
        state = new_state
        converged = res < config.tolerance
        if k % config.record_history_every == 0 or converged or k == config.max_iterations:
            objective = saddle_objective(
                problem, basis, state.duals, state.controls, x0, disc
            )
            history.append((k, res, objective))
            if progress is not None:
                progress.write(f"iter={k} objective={objective:.12g} residual={res:.6g}\n")
        if converged:
            break
    trajectories = rollout(x0, state.controls, disc)
    report = cost_report(problem, basis, trajectories, state.controls, disc)
    return Solution(
        controls=state.controls,
        trajectories=trajectories,
        duals=state.duals,
        initial_positions=x0,
        disc=disc,
        cost_report=report,
        residual_history=tuple(history),
        converged=converged,
        iterations=state.iteration,
    )


# --- validation oracle -----------------------------------------------------


@dataclass(frozen=True)
class OracleConfig:
    """Plain gradient descent with Armijo backtracking; desk-scale only."""

    max_iterations: int = 20000
    grad_tolerance: float = 1e-9
    initial_step: float = 1.0
    backtrack: float = 0.5
    armijo: float = 1e-4
    min_step: float = 1e-15


class OracleLineSearchError(RuntimeError):
    def __init__(self, objective: float):
        self.objective = objective
        super().__init__(f"oracle line search failed (objective {objective!r})")


def potential_value(problem: MFGProblem, basis: RandomFeatureBasis,
                    initial_positions, controls, disc: Discretization) -> float:
    """Discrete population potential P(v); its minimizers are PDHG fixed
    points with duals equal to the feature means (identity Gram)."""
    x0 = np.asarray(initial_positions, dtype=np.float64)
    v = np.asarray(controls, dtype=np.float64)
    num_agents, n, _ = v.shape
    h = disc.step
    times = disc.times()
    z = np.empty_like(v)
    z[:, 0] = x0
    for l in range(n - 1):
        z[:, l + 1] = z[:, l] + h * v[:, l]
    running = 0.0
    for m in range(num_agents):
        for l in range(n):
            running += float(lagrangian_value(problem.lagrangian, times[l], z[m, l], v[m, l]))
    running *= h / num_agents
    interaction = 0.0
    for l in range(n):
        total = np.zeros(basis.feature_count)
        for m in range(num_agents):
            total += eval_features(basis, z[m, l])
        interaction += float(total @ total)
    interaction *= h / (2.0 * num_agents**2)
    terminal = 0.0
    for m in range(num_agents):
        val, _ = terminal_value_and_gradient(problem.terminal, z[m, -1])
        terminal += float(val)
    terminal /= num_agents
    return running + interaction + terminal


def _potential_gradient(problem, basis, x0, v, disc) -> Array:
    num_agents, n, _ = v.shape
    h = disc.step
    times = disc.times()
    z = np.empty_like(v)
    z[:, 0] = x0
    for l in range(n - 1):
        z[:, l + 1] = z[:, l] + h * v[:, l]
    sums = [np.zeros(basis.feature_count) for _ in range(n)]
    for l in range(n):
        for m in range(num_agents):
            sums[l] += eval_features(basis, z[m, l])
    grad = np.zeros_like(v)
    for m in range(num_agents):
        gx, gv = lagrangian_gradients(problem.lagrangian, times[-1], z[m, -1], v[m, -1])
        _, gpsi = terminal_value_and_gradient(problem.terminal, z[m, -1])
        force = eval_feature_gradient(basis, z[m, -1]).T @ sums[-1]
        lam = gpsi / num_agents + (h / num_agents) * gx + (h / num_agents**2) * force
        grad[m, -1] = (h / num_agents) * gv
        for l in range(n - 2, -1, -1):
            gx, gv = lagrangian_gradients(problem.lagrangian, times[l], z[m, l], v[m, l])
            grad[m, l] = (h / num_agents) * gv + h * lam
            force = eval_feature_gradient(basis, z[m, l]).T @ sums[l]
            lam = lam + (h / num_agents) * gx + (h / num_agents**2) * force
    return grad


def potential_oracle_minimize(problem: MFGProblem, basis: RandomFeatureBasis,
                              initial_positions, disc: Discretization,
                              config: OracleConfig = OracleConfig()):
    """Minimize P(v) from zero controls; returns (controls, trajectories,
    objective history).  The objective is nonincreasing by construction."""
    x0 = np.asarray(initial_positions, dtype=np.float64)
    num_agents, d = x0.shape
    v = np.zeros((num_agents, disc.num_steps, d))
    value = potential_value(problem, basis, x0, v, disc)
    history = [value]
    step = config.initial_step
    for _ in range(config.max_iterations):
        grad = _potential_gradient(problem, basis, x0, v, disc)
        gsq = float(np.sum(grad * grad))
        if np.sqrt(gsq) < config.grad_tolerance:
            break
        step = min(step * 2.0, config.initial_step * 1e6)
        while True:
            candidate = v - step * grad
            cand_value = potential_value(problem, basis, x0, candidate, disc)
            if cand_value <= value - config.armijo * step * gsq:
                break
            step *= config.backtrack
            if step < config.min_step:
                raise OracleLineSearchError(value)
        v, value = candidate, cand_value
        history.append(value)
    z = np.empty_like(v)
    z[:, 0] = x0
    for l in range(disc.num_steps - 1):
        z[:, l + 1] = z[:, l] + disc.step * v[:, l]
    return v, z, history


def potential_oracle_solve(problem: MFGProblem, basis: RandomFeatureBasis,
                           initial_positions, disc: Discretization,
                           config: OracleConfig = OracleConfig()) -> Array:
    """Trajectories at a (local) minimizer of the population potential."""
    _, trajectories, _ = potential_oracle_minimize(
        problem, basis, initial_positions, disc, config
    )
    return trajectories
