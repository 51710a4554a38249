"""Mean-field game problem instances: costs, initial distributions, presets.

Cost evaluations broadcast over leading axes: ``x`` and ``v`` may be single
states of shape (d,) or batches (..., d), with values returned as (...) and
gradients as (..., d).  All specs are immutable and evaluation is pure, so
instances are safe to share across workers.

Presets (addressable as ``a``, ``b``, ``c`` from the CLI):
    a   octagon Gaussian mixture -> origin, kinetic cost |v|^2/2, planar
        Gaussian repulsion (mu=10, sigma in {0.2, 1.25}).
    b   single Gaussian source at (0,1,...) -> (0,-1,...), kinetic |v|^2/4
        plus a wedge obstacle penalty, planar repulsion (mu=50, sigma=1).
    c   preset a with full-dimensional repulsion; sigma = sigma_hat*sqrt(d/2)
        keeps the effective interaction comparable across dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .kernels import GaussianKernelSpec
from .rng import POSITION_STREAM, standard_normal, stream

Array = NDArray[np.float64]


@dataclass(frozen=True)
class ObstacleSpec:
    """Soft wedge penalty weight * max(x'^T Q x', 0) on the first two coords."""

    weight: float
    quadratic_form: Array  # 2x2

    def __post_init__(self):
        q = np.asarray(self.quadratic_form, dtype=np.float64)
        if q.shape != (2, 2):
            raise ValueError(f"quadratic_form must be 2x2, got {q.shape}")
        q.setflags(write=False)
        object.__setattr__(self, "quadratic_form", q)

    def penalty(self, x) -> Array:
        x = np.asarray(x, dtype=np.float64)
        x2 = x[..., :2]
        quad = np.einsum("...i,ij,...j->...", x2, self.quadratic_form, x2)
        return self.weight * np.maximum(quad, 0.0)

    def gradient(self, x) -> Array:
        """Gradient of the penalty; 0 on the inactive side and, by
        convention, on the kink set x'^T Q x' = 0 itself."""
        x = np.asarray(x, dtype=np.float64)
        x2 = x[..., :2]
        quad = np.einsum("...i,ij,...j->...", x2, self.quadratic_form, x2)
        sym = self.quadratic_form + self.quadratic_form.T
        grad2 = self.weight * (x2 @ sym.T)
        grad = np.zeros_like(x)
        grad[..., :2] = np.where((quad > 0.0)[..., None], grad2, 0.0)
        return grad


@dataclass(frozen=True)
class LagrangianSpec:
    """Running cost c_v * |v|^2 plus an optional obstacle penalty in x."""

    kinetic_weight: float
    obstacle: ObstacleSpec | None = None

    def __post_init__(self):
        if not self.kinetic_weight > 0:
            raise ValueError(f"kinetic_weight must be > 0, got {self.kinetic_weight}")


@dataclass(frozen=True)
class TerminalSpec:
    """psi(x) = weight * |x - target|^2 (squared norm, no 1/2 factor)."""

    weight: float
    target: Array

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError(f"terminal weight must be >= 0, got {self.weight}")
        t = np.asarray(self.target, dtype=np.float64)
        t.setflags(write=False)
        object.__setattr__(self, "target", t)


@dataclass(frozen=True)
class InitialDistribution:
    """Uniform mixture of isotropic Gaussians with common std."""

    centers: Array  # (n_components, d)
    std: float

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=np.float64))
        if c.shape[0] < 1:
            raise ValueError("at least one mixture center required")
        if not self.std > 0:
            raise ValueError(f"std must be > 0, got {self.std}")
        c.setflags(write=False)
        object.__setattr__(self, "centers", c)

    @property
    def dimension(self) -> int:
        return self.centers.shape[1]


@dataclass(frozen=True)
class MFGProblem:
    dimension: int
    horizon: float
    lagrangian: LagrangianSpec
    terminal: TerminalSpec
    initial: InitialDistribution
    kernel: GaussianKernelSpec

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dimension}")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be > 0, got {self.horizon}")
        if self.kernel.interaction_dims > self.dimension:
            raise ValueError(
                f"kernel interaction_dims {self.kernel.interaction_dims} exceeds "
                f"problem dimension {self.dimension}"
            )
        for name, arr in (("target", self.terminal.target), ("centers", self.initial.centers)):
            if arr.shape[-1] != self.dimension:
                raise ValueError(f"{name} dimension {arr.shape[-1]} != {self.dimension}")


def sample_initial_positions(dist: InitialDistribution, num_agents: int, seed: int) -> Array:
    """Draw agent start positions: uniform component choice + isotropic noise.

    Deterministic in ``seed`` and independent of the frequency stream.
    """
    if num_agents < 1:
        raise ValueError(f"num_agents must be >= 1, got {num_agents}")
    gen = stream(seed, POSITION_STREAM)
    comp = gen.integers(0, dist.centers.shape[0], size=num_agents)
    noise = standard_normal(gen, (num_agents, dist.dimension)) * dist.std
    return dist.centers[comp] + noise


def lagrangian_value(spec: LagrangianSpec, t, x, v) -> Array:
    """L(t, x, v) = c_v |v|^2 + obstacle penalty; broadcasts over batches."""
    v = np.asarray(v, dtype=np.float64)
    out = spec.kinetic_weight * np.sum(v * v, axis=-1)
    if spec.obstacle is not None:
        out = out + spec.obstacle.penalty(x)
    return out


def lagrangian_gradients(spec: LagrangianSpec, t, x, v) -> tuple[Array, Array]:
    """(grad_x L, grad_v L); grad_v = 2 c_v v, grad_x is the obstacle term."""
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    grad_v = 2.0 * spec.kinetic_weight * v
    if spec.obstacle is not None:
        grad_x = spec.obstacle.gradient(x)
    else:
        grad_x = np.zeros_like(x)
    return grad_x, grad_v


def terminal_value_and_gradient(spec: TerminalSpec, x) -> tuple[Array, Array]:
    """(w |x-target|^2, 2w (x-target)); broadcasts over batches."""
    x = np.asarray(x, dtype=np.float64)
    diff = x - spec.target
    value = spec.weight * np.sum(diff * diff, axis=-1)
    return value, 2.0 * spec.weight * diff


def _octagon_centers(d: int) -> Array:
    j = np.arange(1, 9)
    centers = np.zeros((8, d))
    centers[:, 0] = np.cos(2.0 * np.pi * j / 8.0)
    centers[:, 1] = np.sin(2.0 * np.pi * j / 8.0)
    return centers


def _unit_vector(d: int, coord: int, value: float) -> Array:
    x = np.zeros(d)
    x[coord] = value
    return x


def preset(experiment: str, d: int, *, sigma: float | None = None,
           sigma_hat: float | None = None, mu: float | None = None,
           horizon: float = 1.0) -> MFGProblem:
    """Build one of the three stock experiments.

    ``a``: sigma defaults to 0.2, mu to 10.  ``b``: mu defaults to 50, sigma
    to 1.  ``c``: pass sigma_hat; sigma resolves to sigma_hat*sqrt(d/2) and
    mu defaults by the stock pairing (0.2 -> 10, 1.25 -> 1).
    """
    tag = str(experiment).lower()
    if d < 2:
        raise ValueError(f"presets require d >= 2, got {d}")
    if tag == "a":
        kernel = GaussianKernelSpec(
            mu=10.0 if mu is None else mu,
            sigma=0.2 if sigma is None else sigma,
            interaction_dims=2,
        )
        return MFGProblem(
            dimension=d,
            horizon=horizon,
            lagrangian=LagrangianSpec(kinetic_weight=0.5),
            terminal=TerminalSpec(weight=10.0, target=np.zeros(d)),
            initial=InitialDistribution(centers=_octagon_centers(d), std=0.1),
            kernel=kernel,
        )
    if tag == "b":
        kernel = GaussianKernelSpec(
            mu=50.0 if mu is None else mu,
            sigma=1.0 if sigma is None else sigma,
            interaction_dims=2,
        )
        obstacle = ObstacleSpec(weight=5.0, quadratic_form=np.diag([1.0, -5.0]))
        return MFGProblem(
            dimension=d,
            horizon=horizon,
            lagrangian=LagrangianSpec(kinetic_weight=0.25, obstacle=obstacle),
            terminal=TerminalSpec(weight=10.0, target=_unit_vector(d, 1, -1.0)),
            initial=InitialDistribution(
                centers=_unit_vector(d, 1, 1.0)[None, :], std=0.2
            ),
            kernel=kernel,
        )
    if tag == "c":
        s_hat = 0.2 if sigma_hat is None else sigma_hat
        if mu is None:
            if s_hat == 0.2:
                mu = 10.0
            elif s_hat == 1.25:
                mu = 1.0
            else:
                raise ValueError(
                    f"no stock mu pairing for sigma_hat={s_hat}; pass mu explicitly"
                )
        kernel = GaussianKernelSpec(
            mu=mu, sigma=s_hat * np.sqrt(d / 2.0), interaction_dims=d
        )
        return MFGProblem(
            dimension=d,
            horizon=horizon,
            lagrangian=LagrangianSpec(kinetic_weight=0.5),
            terminal=TerminalSpec(weight=10.0, target=np.zeros(d)),
            initial=InitialDistribution(centers=_octagon_centers(d), std=0.1),
            kernel=kernel,
        )
    raise ValueError(f"unknown experiment {experiment!r}; expected a, b, or c")
