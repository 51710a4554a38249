"""Hot-loop kernels: compiled core with a pure-numpy fallback.

The four operations here (``feature_matrix``, ``feature_sums``,
``dual_potential``, ``dual_force``) are the solver's inner loop.  At import
time the Cython extension ``mfgrf.backend._fast`` is preferred when it built;
otherwise the numpy implementation is used.  ``use_backend`` switches
explicitly (tests and the backend benchmark rely on it).  Both backends are
deterministic for a fixed input; they agree to ~1e-13 relative (summation
order differs), not bit-for-bit.
"""

from __future__ import annotations

import numpy as np

from . import numpy_ops

try:
    from . import _fast
except ImportError:
    _fast = None

_IMPLS = {"numpy": numpy_ops}
if _fast is not None:
    _IMPLS["compiled"] = _fast

_active = _IMPLS.get("compiled", numpy_ops)


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_IMPLS))


def active_backend() -> str:
    return "compiled" if _active is _fast else "numpy"


def use_backend(name: str) -> None:
    """Select 'numpy' or 'compiled' explicitly."""
    global _active
    if name not in _IMPLS:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    _active = _IMPLS[name]


def get_backend(name: str | None = None):
    """Raw implementation module (for benchmarks); default = active one."""
    if name is None:
        return _active
    if name not in _IMPLS:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    return _IMPLS[name]


def set_num_threads(n: int) -> None:
    """Thread cap for the compiled backend; the numpy path ignores it."""
    for impl in _IMPLS.values():
        impl.set_num_threads(int(n))


def _carr(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def feature_matrix(freqs, amplitude, points) -> np.ndarray:
    return _active.feature_matrix(_carr(freqs), float(amplitude), _carr(points))


def feature_sums(freqs, amplitude, traj) -> np.ndarray:
    return _active.feature_sums(_carr(freqs), float(amplitude), _carr(traj))


def dual_potential(freqs, amplitude, traj, duals) -> np.ndarray:
    return _active.dual_potential(
        _carr(freqs), float(amplitude), _carr(traj), _carr(duals)
    )


def dual_force(freqs, amplitude, traj, duals) -> np.ndarray:
    return _active.dual_force(
        _carr(freqs), float(amplitude), _carr(traj), _carr(duals)
    )
