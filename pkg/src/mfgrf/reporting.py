"""Cost decomposition and plot-ready data exports.

The interaction cost is evaluated in feature space,

    (h / (2 M^2)) sum_l sum_i ( sum_m zeta_i(z[m, l]) )^2,

which equals the pairwise double sum (h/(2M^2)) sum_l sum_{m,m'}
K_r(z[m,l], z[m',l]) by the feature factorization -- O(r M N) work instead of
O(M^2 N).  ``interaction_cost_pairwise`` keeps the quadratic form alive as an
independent check (it works from pairwise position differences and the cosine
form of the approximate kernel, never touching the feature path).

All CSV/JSON exports format floats with 17 significant digits so a re-import
reproduces values bit-exactly, and use the C locale unconditionally.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from . import backend
from .kernels import (
    GaussianKernelSpec,
    RandomFeatureBasis,
    approximation_error,
    eval_features,
    kernel_exact,
    sample_frequencies,
)
from .problem import (
    MFGProblem,
    lagrangian_value,
    sample_initial_positions,
    terminal_value_and_gradient,
)
from .transcription import Discretization

Array = NDArray[np.float64]


@dataclass(frozen=True)
class CostReport:
    """Population running / interaction / terminal costs and their total."""

    running: float
    interaction: float
    terminal: float
    total: float

    def __post_init__(self):
        expected = self.running + self.interaction + self.terminal
        if abs(self.total - expected) > 1e-12 * max(1.0, abs(expected)):
            raise ValueError(
                f"total {self.total} != running+interaction+terminal {expected}"
            )

    def to_dict(self) -> dict[str, float]:
        return {
            "running": self.running,
            "interaction": self.interaction,
            "terminal": self.terminal,
            "total": self.total,
        }

    def write_json(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def cost_report(problem: MFGProblem, basis: RandomFeatureBasis, trajectories,
                controls, disc: Discretization) -> CostReport:
    """Decompose the population cost at a trajectory/control batch."""
    z = np.asarray(trajectories, dtype=np.float64)
    v = np.asarray(controls, dtype=np.float64)
    if z.shape != v.shape or z.ndim != 3 or z.shape[1] != disc.num_steps:
        raise ValueError(f"trajectory/control shapes {z.shape}/{v.shape} inconsistent")
    num_agents = z.shape[0]
    h = disc.step
    times = disc.times()
    running = h / num_agents * float(
        np.sum(lagrangian_value(problem.lagrangian, times[None, :], z, v))
    )
    if basis.amplitude == 0.0:
        interaction = 0.0
    else:
        sums = backend.feature_sums(
            basis.frequencies, basis.amplitude,
            np.ascontiguousarray(z[:, :, : basis.interaction_dims]),
        )
        interaction = h / (2.0 * num_agents**2) * float(np.sum(sums * sums))
    term_vals, _ = terminal_value_and_gradient(problem.terminal, z[:, -1])
    terminal = float(np.sum(term_vals)) / num_agents
    return CostReport(
        running=running,
        interaction=interaction,
        terminal=terminal,
        total=running + interaction + terminal,
    )


def interaction_cost_pairwise(basis: RandomFeatureBasis, trajectories,
                              disc: Discretization, chunk: int = 256) -> float:
    """O(M^2) interaction cost from pairwise differences (validation path).

    Evaluates K_r(z[m,l], z[m',l]) = (2 mu / r) sum_j cos(w_j . (z_m - z_m'))
    for every ordered pair, chunked over agents to bound memory.
    """
    z = np.asarray(trajectories, dtype=np.float64)[:, :, : basis.interaction_dims]
    num_agents, n, _ = z.shape
    scale = basis.amplitude**2  # 2*mu/r
    total = 0.0
    for l in range(n):
        zl = z[:, l, :]
        for m0 in range(0, num_agents, chunk):
            diff = zl[m0:m0 + chunk, None, :] - zl[None, :, :]
            total += float(np.sum(np.cos(diff @ basis.frequencies.T)))
    total *= scale
    return disc.step / (2.0 * num_agents**2) * total


def export_trajectories(solution, path, fmt: str = "csv",
                        disc: Discretization | None = None) -> None:
    """Write trajectories as ``agent,step,t,x1..xd`` rows (CSV) or as an
    array of agent records (JSON).  Accepts a Solution (which carries its
    discretization) or a bare (M, N, d) tensor plus an explicit ``disc``.
    """
    traj = np.asarray(getattr(solution, "trajectories", solution), dtype=np.float64)
    if traj.ndim != 3:
        raise ValueError(f"expected (M, N, d) trajectories, got shape {traj.shape}")
    num_agents, n, d = traj.shape
    if disc is None:
        disc = getattr(solution, "disc", None)
    if disc is None:
        raise ValueError("a Discretization is required for the time column")
    times = disc.times()
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["agent", "step", "t"] + [f"x{i + 1}" for i in range(d)])
            for m in range(num_agents):
                for l in range(n):
                    writer.writerow(
                        [m, l, f"{times[l]:.17g}"]
                        + [f"{val:.17g}" for val in traj[m, l]]
                    )
    elif fmt == "json":
        records = [
            {
                "agent": m,
                "steps": [
                    {"step": l, "t": times[l], "x": traj[m, l].tolist()}
                    for l in range(n)
                ],
            }
            for m in range(num_agents)
        ]
        with open(path, "w", newline="\n") as fh:
            json.dump(records, fh)
            fh.write("\n")
    else:
        raise ValueError(f"unknown format {fmt!r}; expected csv or json")


def read_trajectories(path, fmt: str = "csv") -> Array:
    """Inverse of ``export_trajectories``; returns the (M, N, d) tensor."""
    if fmt == "csv":
        rows = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            d = len(header) - 3
            for row in reader:
                rows.append((int(row[0]), int(row[1]), [float(x) for x in row[3:]]))
        num_agents = max(r[0] for r in rows) + 1
        n = max(r[1] for r in rows) + 1
        out = np.empty((num_agents, n, d))
        for m, l, x in rows:
            out[m, l] = x
        return out
    if fmt == "json":
        with open(path) as fh:
            records = json.load(fh)
        return np.array(
            [[step["x"] for step in rec["steps"]] for rec in records], dtype=np.float64
        )
    raise ValueError(f"unknown format {fmt!r}; expected csv or json")


def export_kernel_error_curve(spec: GaussianKernelSpec, r_values, seeds, points,
                              path) -> None:
    """CSV ``r,seed,linf,l2`` over the (r, seed) grid.

    Bases for increasing r at the same seed share their frequency prefixes,
    so rows isolate the pure effect of the feature count.
    """
    r_values = list(r_values)
    seeds = list(seeds)
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if not r_values or not seeds or pts.size == 0:
        raise ValueError("r_values, seeds, and points must be nonempty")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["r", "seed", "linf", "l2"])
        for r in r_values:
            for seed in seeds:
                basis = sample_frequencies(spec, r, seed)
                linf, l2 = approximation_error(spec, basis, pts)
                writer.writerow([r, seed, f"{linf:.17g}", f"{l2:.17g}"])


def export_kernel_slice(spec: GaussianKernelSpec, basis: RandomFeatureBasis,
                        direction, radius: float, num_points: int, path) -> None:
    """CSV ``s,exact,approx`` of both kernels along x = s*direction."""
    direction = np.asarray(direction, dtype=np.float64)
    norm = float(np.linalg.norm(direction))
    if norm == 0.0:
        raise ValueError("direction must be nonzero")
    if num_points < 2:
        raise ValueError(f"num_points must be >= 2, got {num_points}")
    direction = direction / norm
    origin = np.zeros_like(direction)
    grid = np.linspace(-radius, radius, num_points)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["s", "exact", "approx"])
        for s in grid:
            x = s * direction
            exact = kernel_exact(spec, x, origin)
            approx = float(eval_features(basis, x) @ eval_features(basis, origin))
            writer.writerow([f"{s:.17g}", f"{exact:.17g}", f"{approx:.17g}"])


def grid_points_2d(extent: float = 2.5, per_side: int = 51) -> Array:
    """Uniform evaluation grid on [-extent, extent]^2 (matches the stock
    2-d kernel comparisons)."""
    axis = np.linspace(-extent, extent, per_side)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def sampled_offsets(dist, count: int, seed: int, interaction_dims: int) -> Array:
    """Offsets x - c of draws x from the initial distribution against its
    first mixture center, projected to the interaction subspace; the
    evaluation set used for full-dimensional kernels."""
    samples = sample_initial_positions(dist, count, seed)
    offsets = samples - dist.centers[0]
    return offsets[:, :interaction_dims]


def default_error_points(spec: GaussianKernelSpec, dist=None, seed: int = 0,
                         grid_extent: float = 2.5, grid_per_side: int = 51,
                         sample_count: int = 2000) -> Array:
    """Stock evaluation set: 51x51 grid for planar kernels, 2000 sampled
    offsets from the initial distribution otherwise."""
    if spec.interaction_dims == 2:
        return grid_points_2d(grid_extent, grid_per_side)
    if dist is None:
        raise ValueError(
            "an initial distribution is required to sample evaluation points "
            "for interaction_dims != 2"
        )
    return sampled_offsets(dist, sample_count, seed, spec.interaction_dims)
