"""Direct transcription of the saddle-point problem.

Trajectories follow the explicit Euler recursion
``z[m, l+1] = z[m, l] + h v[m, l]`` on a uniform grid of N time samples over
[0, T] (h = T/(N-1)), and the saddle objective is

    L(a, v) = (h/2) sum_l a[:,l]^T Kinv a[:,l]
              - (1/M) sum_m [ sum_l h (L(t_l, z, v) + a[:,l].zeta(z[m,l]))
                              + psi(z[m,N]) ]

with Kinv the identity for random-feature bases.  The running sum runs to
l = N inclusive (a rectangle-rule variant that overweights by one step; kept
deliberately), so the trailing control v[:, N] enters the cost but never the
dynamics.

Array conventions: initial positions (M, d); controls and trajectories
(M, N, d); dual coefficients (r, N).  Gradients with respect to controls are
computed by a reverse (adjoint) sweep, one backward recursion per agent,
vectorized over the batch; agents are fully decoupled given the duals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from . import backend
from .kernels import RandomFeatureBasis
from .problem import (
    MFGProblem,
    lagrangian_gradients,
    lagrangian_value,
    terminal_value_and_gradient,
)

Array = NDArray[np.float64]


@dataclass(frozen=True)
class Discretization:
    """Uniform time grid: N samples t_1 = 0 ... t_N = T, step h = T/(N-1)."""

    num_steps: int
    horizon: float = 1.0

    def __post_init__(self):
        if self.num_steps < 2:
            raise ValueError(f"num_steps must be >= 2, got {self.num_steps}")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be > 0, got {self.horizon}")

    @property
    def step(self) -> float:
        return self.horizon / (self.num_steps - 1)

    def times(self) -> Array:
        return np.arange(self.num_steps) * self.step


def _check_batch(initial_positions, controls, disc) -> tuple[Array, Array]:
    x0 = np.asarray(initial_positions, dtype=np.float64)
    v = np.asarray(controls, dtype=np.float64)
    if x0.ndim != 2:
        raise ValueError(f"initial_positions must be (M, d), got shape {x0.shape}")
    if v.shape != (x0.shape[0], disc.num_steps, x0.shape[1]):
        raise ValueError(
            f"controls shape {v.shape} does not match (M, N, d) = "
            f"({x0.shape[0]}, {disc.num_steps}, {x0.shape[1]})"
        )
    return x0, v


def rollout(initial_positions, controls, disc: Discretization) -> Array:
    """Explicit Euler trajectories, shape (M, N, d).

    The final control column v[:, N] never influences the state.
    """
    x0, v = _check_batch(initial_positions, controls, disc)
    h = disc.step
    traj = np.empty_like(v)
    traj[:, 0] = x0
    np.cumsum(v[:, :-1], axis=1, out=traj[:, 1:])
    traj[:, 1:] *= h
    traj[:, 1:] += x0[:, None, :]
    return traj


def _check_duals(basis: RandomFeatureBasis, duals, disc: Discretization) -> Array:
    a = np.asarray(duals, dtype=np.float64)
    if a.shape != (basis.feature_count, disc.num_steps):
        raise ValueError(
            f"duals shape {a.shape} does not match (r, N) = "
            f"({basis.feature_count}, {disc.num_steps})"
        )
    return a


def _interaction_slice(basis: RandomFeatureBasis, traj: Array) -> Array:
    return np.ascontiguousarray(traj[:, :, : basis.interaction_dims])


def agent_costs(problem: MFGProblem, basis: RandomFeatureBasis, duals,
                trajectories, controls, disc: Discretization) -> Array:
    """Per-agent costs J_m, shape (M,); the batched form of ``agent_cost``."""
    a = _check_duals(basis, duals, disc)
    z = np.asarray(trajectories, dtype=np.float64)
    v = np.asarray(controls, dtype=np.float64)
    if z.shape != v.shape or z.ndim != 3 or z.shape[1] != disc.num_steps:
        raise ValueError(f"trajectory/control shapes {z.shape}/{v.shape} inconsistent")
    h = disc.step
    times = disc.times()
    running = lagrangian_value(problem.lagrangian, times[None, :], z, v)  # (M, N)
    if basis.amplitude != 0.0:
        running = running + backend.dual_potential(
            basis.frequencies, basis.amplitude, _interaction_slice(basis, z), a
        )
    terminal, _ = terminal_value_and_gradient(problem.terminal, z[:, -1])
    return h * running.sum(axis=1) + terminal


def agent_cost(problem: MFGProblem, basis: RandomFeatureBasis, duals,
               trajectory, controls, disc: Discretization) -> float:
    """Single-agent discrete cost J_m for one (N, d) trajectory/control pair."""
    z = np.asarray(trajectory, dtype=np.float64)
    v = np.asarray(controls, dtype=np.float64)
    return float(agent_costs(problem, basis, duals, z[None], v[None], disc)[0])


def dual_quadratic(duals, disc: Discretization, gram=None) -> float:
    """(h/2) sum_l a[:,l]^T Kinv a[:,l]; identity Gram unless one is given."""
    a = np.asarray(duals, dtype=np.float64)
    if gram is None:
        return 0.5 * disc.step * float(np.sum(a * a))
    gram = np.asarray(gram, dtype=np.float64)
    return 0.5 * disc.step * float(np.sum(a * np.linalg.solve(gram, a)))


def saddle_objective(problem: MFGProblem, basis: RandomFeatureBasis, duals,
                     controls, initial_positions, disc: Discretization,
                     gram=None) -> float:
    """L(a, v): dual quadratic minus the population-average agent cost."""
    x0, v = _check_batch(initial_positions, controls, disc)
    a = _check_duals(basis, duals, disc)
    z = rollout(x0, v, disc)
    costs = agent_costs(problem, basis, a, z, v, disc)
    return dual_quadratic(a, disc, gram) - float(costs.mean())


def control_gradient(problem: MFGProblem, basis: RandomFeatureBasis, duals,
                     initial_positions, controls, disc: Discretization) -> Array:
    """grad_v L(a, v), shape (M, N, d), by one reverse sweep per agent.

    Forward: rollout.  Backward: lam[N] = grad psi + h (grad_x L + G^T a[:,N])
    and lam[l] = lam[l+1] + h (grad_x L + G^T a[:,l]); then
    dJ/dv[l] = h grad_v L[l] + h lam[l+1] (the last column has no state
    successor), and grad_v L = -(1/M) dJ/dv.
    """
    x0, v = _check_batch(initial_positions, controls, disc)
    a = _check_duals(basis, duals, disc)
    h = disc.step
    z = rollout(x0, v, disc)
    times = disc.times()
    grad_x, grad_v = lagrangian_gradients(problem.lagrangian, times[None, :], z, v)
    if basis.amplitude != 0.0:
        force = backend.dual_force(
            basis.frequencies, basis.amplitude, _interaction_slice(basis, z), a
        )
        grad_x[:, :, : basis.interaction_dims] += force
    _, grad_term = terminal_value_and_gradient(problem.terminal, z[:, -1])

    # lam[l] = grad_term + sum_{j >= l} h*grad_x[j]: reversed cumulative sum.
    w = h * grad_x
    lam_tail = np.cumsum(w[:, ::-1], axis=1)[:, ::-1]
    djdv = h * grad_v
    djdv[:, :-1] += h * (grad_term[:, None, :] + lam_tail[:, 1:])
    return -djdv / x0.shape[0]
