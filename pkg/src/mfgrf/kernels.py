"""Gaussian repulsive kernels and their random-feature factorizations.

A shift-invariant Gaussian kernel ``K(x - y) = mu * exp(-|x'-y'|^2/(2 sigma^2))``
(``x'`` = first ``interaction_dims`` coordinates) is approximated by a Monte
Carlo feature map: frequencies are drawn from the kernel's Gaussian spectral
density (per-coordinate std ``1/sigma``) and each frequency contributes a
scaled cosine/sine pair, so that ``K(x, y) ~= zeta(x) . zeta(y)``.

Feature layout is interleaved ``[cos_1, sin_1, cos_2, sin_2, ...]`` with
amplitude ``sqrt(2*mu/r)``; the layout is part of the serialization contract,
so dual coefficients remain portable across runs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from . import backend
from .rng import FREQUENCY_STREAM, standard_normal, stream

Array = NDArray[np.float64]


@dataclass(frozen=True)
class GaussianKernelSpec:
    """Repulsion intensity ``mu`` (= K(0)), radius ``sigma``, and the number
    of leading state coordinates the kernel acts on."""

    mu: float
    sigma: float
    interaction_dims: int

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be > 0, got {self.mu}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.interaction_dims < 1:
            raise ValueError(
                f"interaction_dims must be >= 1, got {self.interaction_dims}"
            )


@dataclass(frozen=True)
class RandomFeatureBasis:
    """Sampled frequency rows plus the common amplitude sqrt(2*mu/r).

    ``frequencies`` has shape (r/2, interaction_dims); row j generates the
    cosine/sine feature pair (2j, 2j+1).  Instances are immutable (the
    frequency array is marked read-only) and safe to share across workers.
    A zero ``amplitude`` is allowed and gives the interaction-free map
    zeta = 0 used by single-agent reductions.
    """

    frequencies: Array
    amplitude: float
    feature_count: int
    interaction_dims: int
    seed: int

    def __post_init__(self):
        if self.feature_count < 2 or self.feature_count % 2 != 0:
            raise ValueError(
                f"feature_count must be even and >= 2, got {self.feature_count}"
            )
        freqs = np.ascontiguousarray(self.frequencies, dtype=np.float64)
        if freqs.shape != (self.feature_count // 2, self.interaction_dims):
            raise ValueError(
                f"frequencies shape {freqs.shape} does not match "
                f"(r/2, d_int) = ({self.feature_count // 2}, {self.interaction_dims})"
            )
        if self.amplitude < 0:
            raise ValueError(f"amplitude must be >= 0, got {self.amplitude}")
        freqs.setflags(write=False)
        object.__setattr__(self, "frequencies", freqs)

    @property
    def mu(self) -> float:
        """K(0) implied by the amplitude: amplitude^2 * r / 2."""
        return self.amplitude**2 * self.feature_count / 2.0


@dataclass(frozen=True)
class KernelErrorReport:
    """Approximation errors per feature count, exportable as CSV."""

    feature_counts: tuple[int, ...]
    linf_errors: tuple[float, ...]
    l2_errors: tuple[float, ...]
    evaluation_set: str  # "grid" or "sampled"

    def __post_init__(self):
        if not (len(self.feature_counts) == len(self.linf_errors) == len(self.l2_errors)):
            raise ValueError("error report lists must have equal length")
        if any(e < 0 for e in self.linf_errors) or any(e < 0 for e in self.l2_errors):
            raise ValueError("errors must be nonnegative")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["r", "linf", "l2"])
            for r, linf, l2 in zip(self.feature_counts, self.linf_errors, self.l2_errors):
                writer.writerow([r, f"{linf:.17g}", f"{l2:.17g}"])


def sample_frequencies(spec: GaussianKernelSpec, r: int, seed: int) -> RandomFeatureBasis:
    """Draw r/2 frequency rows iid from the kernel's spectral density.

    The density is the isotropic Gaussian with per-coordinate std 1/sigma on
    the interaction subspace.  Draws are a pure function of (spec, r, seed)
    and are generated row-major, so bases for r' > r at the same seed share
    their first r/2 rows.
    """
    if r < 2 or r % 2 != 0:
        raise ValueError(f"feature count r must be even and >= 2, got {r}")
    gen = stream(seed, FREQUENCY_STREAM)
    freqs = standard_normal(gen, (r // 2, spec.interaction_dims)) / spec.sigma
    return RandomFeatureBasis(
        frequencies=freqs,
        amplitude=float(np.sqrt(2.0 * spec.mu / r)),
        feature_count=r,
        interaction_dims=spec.interaction_dims,
        seed=seed,
    )


def _project(basis: RandomFeatureBasis, x) -> Array:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < basis.interaction_dims:
        raise ValueError(
            f"point dimension {x.shape[-1]} < interaction_dims {basis.interaction_dims}"
        )
    return x[..., : basis.interaction_dims]


def eval_features(basis: RandomFeatureBasis, x) -> Array:
    """Feature vector zeta(x) in R^r, interleaved [cos_j, sin_j] pairs."""
    w = basis.frequencies @ _project(basis, np.atleast_1d(x))
    out = np.empty(basis.feature_count)
    out[0::2] = np.cos(w)
    out[1::2] = np.sin(w)
    out *= basis.amplitude
    return out


def eval_features_batch(basis: RandomFeatureBasis, points) -> Array:
    """Vectorized ``eval_features`` over rows of ``points``; shape (P, r)."""
    pts = _project(basis, np.atleast_2d(points))
    return backend.feature_matrix(basis.frequencies, basis.amplitude, pts)


def eval_feature_gradient(basis: RandomFeatureBasis, x) -> Array:
    """Jacobian of the feature map at x, shape (r, len(x)).

    Row 2j is -amplitude*sin(w_j . x') * w_j and row 2j+1 is
    +amplitude*cos(w_j . x') * w_j, zero-padded beyond the interaction
    coordinates.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    xp = _project(basis, x)
    w = basis.frequencies @ xp
    grad = np.zeros((basis.feature_count, x.shape[0]))
    grad[0::2, : basis.interaction_dims] = (
        -basis.amplitude * np.sin(w)[:, None] * basis.frequencies
    )
    grad[1::2, : basis.interaction_dims] = (
        basis.amplitude * np.cos(w)[:, None] * basis.frequencies
    )
    return grad


def kernel_exact(spec: GaussianKernelSpec, x, y) -> float:
    """mu * exp(-|x'-y'|^2 / (2 sigma^2)) on the interaction coordinates."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.shape[-1] < spec.interaction_dims:
        raise ValueError(
            f"point dimension {x.shape[-1]} < interaction_dims {spec.interaction_dims}"
        )
    diff = x[..., : spec.interaction_dims] - y[..., : spec.interaction_dims]
    return float(spec.mu * np.exp(-np.dot(diff, diff) / (2.0 * spec.sigma**2)))


def kernel_approx(basis: RandomFeatureBasis, x, y) -> float:
    """Feature-space kernel zeta(x) . zeta(y).

    Equals (2*mu/r) * sum_j cos(w_j . (x'-y')) by the angle-difference
    identity, hence exactly shift invariant and bounded by mu.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return float(eval_features(basis, x) @ eval_features(basis, y))


def approximation_error(
    spec: GaussianKernelSpec, basis: RandomFeatureBasis, points
) -> tuple[float, float]:
    """(sup, root-mean-square) of K(p, 0) - K_r(p, 0) over the point set.

    Points live in the interaction subspace R^{d_int}.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.size == 0:
        raise ValueError("points must be nonempty")
    if pts.shape[1] != spec.interaction_dims:
        raise ValueError(
            f"points have dimension {pts.shape[1]}, expected {spec.interaction_dims}"
        )
    exact = spec.mu * np.exp(-np.sum(pts**2, axis=1) / (2.0 * spec.sigma**2))
    zeta0 = eval_features(basis, np.zeros(spec.interaction_dims))
    approx = eval_features_batch(basis, pts) @ zeta0
    err = exact - approx
    linf = float(np.max(np.abs(err)))
    l2 = float(np.sqrt(np.mean(err**2)))
    return linf, l2


def save_basis(spec: GaussianKernelSpec, basis: RandomFeatureBasis, path) -> None:
    """Serialize (mu, sigma, d_int, r, seed, frequencies); bit-exact on load."""
    np.savez(
        path,
        mu=np.float64(spec.mu),
        sigma=np.float64(spec.sigma),
        interaction_dims=np.int64(spec.interaction_dims),
        feature_count=np.int64(basis.feature_count),
        seed=np.int64(basis.seed),
        frequencies=basis.frequencies,
    )


def load_basis(path) -> tuple[GaussianKernelSpec, RandomFeatureBasis]:
    with np.load(path) as data:
        spec = GaussianKernelSpec(
            mu=float(data["mu"]),
            sigma=float(data["sigma"]),
            interaction_dims=int(data["interaction_dims"]),
        )
        r = int(data["feature_count"])
        basis = RandomFeatureBasis(
            frequencies=data["frequencies"].copy(),
            amplitude=float(np.sqrt(2.0 * spec.mu / r)),
            feature_count=r,
            interaction_dims=spec.interaction_dims,
            seed=int(data["seed"]),
        )
    return spec, basis
