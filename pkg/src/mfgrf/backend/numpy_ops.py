"""Pure-numpy implementations of the feature-map hot loops.

These four operations dominate solver runtime: every primal-dual iteration
evaluates trig features at all ``M x N`` trajectory points.  The compiled
backend in ``_fast.pyx`` mirrors these signatures with fused C loops; this
module is the always-available fallback and the reference the extension is
tested against.

Conventions (shared with ``_fast``):
    freqs      (q, k)  frequency rows, k = interaction dimensions
    amplitude  scalar, sqrt(2*mu/r) with r = 2*q
    points     (P, k)  evaluation points, already projected to k coords
    traj       (M, N, k) trajectory batch, projected
    duals      (2*q, N) coefficients, feature-interleaved [cos_j, sin_j]

Feature layout is interleaved: feature 2j is amplitude*cos(w_j . x), feature
2j+1 is amplitude*sin(w_j . x).
"""

from __future__ import annotations

import numpy as np

# Rows per chunk when sweeping large batches; bounds temporaries to a few MB.
_CHUNK = 16384


def set_num_threads(n: int) -> None:
    """No-op: the numpy backend runs on whatever BLAS was configured with."""


def feature_matrix(freqs, amplitude, points):
    """Feature vectors for a batch of points, shape (P, 2*q)."""
    npts = points.shape[0]
    q = freqs.shape[0]
    out = np.empty((npts, 2 * q))
    for i0 in range(0, npts, _CHUNK):
        i1 = min(i0 + _CHUNK, npts)
        w = points[i0:i1] @ freqs.T
        out[i0:i1, 0::2] = np.cos(w)
        out[i0:i1, 1::2] = np.sin(w)
    out *= amplitude
    return out


def feature_sums(freqs, amplitude, traj):
    """Per-time-slice feature sums over agents, shape (2*q, N).

    Entry (2j, l) is amplitude * sum_m cos(w_j . traj[m, l]); odd rows hold
    the sine part.  Agents are accumulated in index order (chunked), which
    keeps the reduction deterministic.
    """
    m, n, _ = traj.shape
    q = freqs.shape[0]
    sum_cos = np.zeros((n, q))
    sum_sin = np.zeros((n, q))
    step = max(1, _CHUNK // max(n, 1))
    for m0 in range(0, m, step):
        w = traj[m0:m0 + step] @ freqs.T  # (B, N, q)
        sum_cos += np.cos(w).sum(axis=0)
        sum_sin += np.sin(w).sum(axis=0)
    out = np.empty((2 * q, n))
    out[0::2] = amplitude * sum_cos.T
    out[1::2] = amplitude * sum_sin.T
    return out


def dual_potential(freqs, amplitude, traj, duals):
    """Coefficient-weighted feature sums sum_i a_i[l] * zeta_i(traj[m, l]).

    Returns shape (M, N).
    """
    m, n, _ = traj.shape
    a_cos = duals[0::2].T  # (N, q)
    a_sin = duals[1::2].T
    out = np.empty((m, n))
    step = max(1, _CHUNK // max(n, 1))
    for m0 in range(0, m, step):
        w = traj[m0:m0 + step] @ freqs.T
        out[m0:m0 + step] = np.einsum("bnq,nq->bn", np.cos(w), a_cos)
        out[m0:m0 + step] += np.einsum("bnq,nq->bn", np.sin(w), a_sin)
    out *= amplitude
    return out


def dual_force(freqs, amplitude, traj, duals):
    """Feature-gradient transpose applied to the duals, shape (M, N, k).

    Entry (m, l) is G(traj[m,l])^T a[:, l] restricted to the k interaction
    coordinates, where G is the feature-map Jacobian: the cos feature 2j
    contributes -amplitude*sin(w_j.x)*w_j and the sin feature 2j+1
    contributes +amplitude*cos(w_j.x)*w_j.
    """
    m, n, k = traj.shape
    a_cos = duals[0::2].T  # (N, q)
    a_sin = duals[1::2].T
    out = np.empty((m, n, k))
    step = max(1, _CHUNK // max(n, 1))
    for m0 in range(0, m, step):
        w = traj[m0:m0 + step] @ freqs.T
        beta = np.cos(w) * a_sin[None, :, :]
        beta -= np.sin(w) * a_cos[None, :, :]
        out[m0:m0 + step] = beta @ freqs
    out *= amplitude
    return out
