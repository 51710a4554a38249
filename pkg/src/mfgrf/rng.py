"""Deterministic random streams.

Every random draw in the library flows through a PCG64 generator keyed by
``(seed, stream tag)`` via :class:`numpy.random.SeedSequence` spawn keys, so
the frequency sampler, the initial-position sampler, and the control/dual
initializers consume independent streams even when handed the same integer
seed.  Gaussian variates are produced by an explicit Box-Muller transform
(cosine branch) of PCG64 uniforms rather than numpy's ziggurat sampler, which
pins the exact variate sequence to documented arithmetic.
"""

from __future__ import annotations

import numpy as np

# Stream tags. Changing a seed for one purpose must never perturb another.
FREQUENCY_STREAM = 0
POSITION_STREAM = 1
CONTROL_STREAM = 2
DIRECTION_STREAM = 3


def stream(seed: int, tag: int) -> np.random.Generator:
    """PCG64 generator for the given seed, domain-separated by stream tag."""
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(tag,)))
    )


def standard_normal(gen: np.random.Generator, shape) -> np.ndarray:
    """Standard normal variates via Box-Muller, cosine branch.

    Each variate consumes exactly two uniforms from ``gen`` in row-major
    order, so a draw of shape ``(n, k)`` is a prefix of a draw of shape
    ``(n', k)`` for ``n' > n`` from an identically seeded generator.
    ``log1p(-u)`` with ``u`` in ``[0, 1)`` keeps the radius finite.
    """
    shape = tuple(np.atleast_1d(shape).astype(int)) if not np.isscalar(shape) else (int(shape),)
    n = int(np.prod(shape)) if shape else 1
    u = gen.random((n, 2))
    radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    return (radius * np.cos(2.0 * np.pi * u[:, 1])).reshape(shape)
