"""Solver library for high-dimensional nonlocal mean-field games.

Interaction kernels are factorized through random Fourier features and the
resulting saddle-point problem is solved by a primal-dual iteration over
agent trajectories and time-dependent dual coefficients.  See the module
docstrings of :mod:`mfgrf.kernels`, :mod:`mfgrf.transcription`, and
:mod:`mfgrf.solver` for the numerical conventions.
"""

__version__ = "0.1.0"

from .kernels import (
    GaussianKernelSpec,
    KernelErrorReport,
    RandomFeatureBasis,
    approximation_error,
    eval_feature_gradient,
    eval_features,
    kernel_approx,
    kernel_exact,
    load_basis,
    sample_frequencies,
    save_basis,
)
from .problem import (
    InitialDistribution,
    LagrangianSpec,
    MFGProblem,
    ObstacleSpec,
    TerminalSpec,
    lagrangian_gradients,
    lagrangian_value,
    preset,
    sample_initial_positions,
    terminal_value_and_gradient,
)
from .reporting import (
    CostReport,
    cost_report,
    export_kernel_error_curve,
    export_kernel_slice,
    export_trajectories,
    interaction_cost_pairwise,
)
from .solver import (
    OracleConfig,
    SaddleState,
    Solution,
    SolverConfig,
    SolverDivergedError,
    pdhg_step,
    potential_oracle_solve,
    prox_duals,
    residual,
    solve,
)
from .transcription import (
    Discretization,
    agent_cost,
    control_gradient,
    rollout,
    saddle_objective,
)

__all__ = [name for name in dir() if not name.startswith("_")]
