"""Primal-dual stepping, fixed points, the LQ reduction, and the oracle."""

import dataclasses
import io

import numpy as np
import pytest

from mfgrf.kernels import GaussianKernelSpec, sample_frequencies
from mfgrf.problem import (
    InitialDistribution,
    LagrangianSpec,
    MFGProblem,
    TerminalSpec,
    preset,
    sample_initial_positions,
)
from mfgrf.solver import (
    OracleConfig,
    SaddleState,
    SolverConfig,
    SolverDivergedError,
    feature_means,
    pdhg_step,
    potential_oracle_minimize,
    potential_oracle_solve,
    potential_value,
    prox_duals,
    residual,
    solve,
)
from mfgrf.transcription import Discretization, control_gradient, rollout


def tiny_problem(mu=1.0, sigma=0.5, std=0.2):
    spec = GaussianKernelSpec(mu=mu, sigma=sigma, interaction_dims=1)
    return MFGProblem(
        dimension=1,
        horizon=1.0,
        lagrangian=LagrangianSpec(kinetic_weight=0.5),
        terminal=TerminalSpec(weight=10.0, target=np.zeros(1)),
        initial=InitialDistribution(centers=np.array([[0.6], [-0.4]]), std=std),
        kernel=spec,
    )


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(h_v=0.0)
    with pytest.raises(ValueError):
        SolverConfig(h_a=1.5)  # paper_literal needs (0, 1]
    with pytest.raises(ValueError):
        SolverConfig(h_a=0.0)
    with pytest.raises(ValueError):
        SolverConfig(max_iterations=0)
    with pytest.raises(ValueError):
        SolverConfig(prox_mode="bogus")
    with pytest.raises(ValueError):
        SolverConfig(control_init="sometimes")
    # exact_prox allows h_a > 1
    SolverConfig(h_a=2.0, prox_mode="exact_prox")


def test_prox_duals_modes():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(8, 5))
    m = rng.normal(size=(8, 5))
    assert np.array_equal(prox_duals(a, m, 1.0), m)
    frozen = prox_duals(a, m, 1e-12)
    assert np.max(np.abs(frozen - a)) < 1e-10
    out = prox_duals(a, m, 0.3, "exact_prox", step=0.25)
    expected = (a + 0.25 * 0.3 * m) / (1 + 0.25 * 0.3)
    assert np.allclose(out, expected, rtol=1e-15)
    with pytest.raises(ValueError):
        prox_duals(a, m, 1.5, "paper_literal")
    with pytest.raises(ValueError):
        prox_duals(a, m, 0.5, "exact_prox")  # needs step
    with pytest.raises(ValueError):
        prox_duals(a, m[:4], 0.5)


def test_prox_duals_geometric_contraction():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(6, 4))
    m = rng.normal(size=(6, 4))
    h_a = 0.25
    gap = a - m
    for k in range(1, 20):
        a = prox_duals(a, m, h_a)
        assert np.allclose(a - m, (1 - h_a) ** k * gap, rtol=1e-10, atol=1e-14)


def test_prox_duals_convex_combination_bounds():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(10, 3))
    m = rng.normal(size=(10, 3))
    out = prox_duals(a, m, 0.7)
    lower = np.minimum(a, m) - 1e-15
    upper = np.maximum(a, m) + 1e-15
    assert np.all(out >= lower) and np.all(out <= upper)


def test_residual_definition():
    v = np.zeros((2, 3, 1))
    a = np.zeros((4, 3))
    s1 = SaddleState(v, v.copy(), a, 0)
    s2 = SaddleState(v.copy(), v.copy(), a.copy(), 1)
    assert residual(s1, s2) == 0.0
    v2 = v.copy()
    v2[0, 1, 0] = 0.125
    assert residual(s1, SaddleState(v2, v, a, 1)) == pytest.approx(0.125)
    a2 = a.copy()
    a2[2, 1] = 0.125
    assert residual(s1, SaddleState(v, v, a2, 1)) == pytest.approx(0.125)
    with pytest.raises(ValueError):
        residual(s1, SaddleState(np.zeros((3, 3, 1)), v, a, 1))


def test_pdhg_step_fixed_point_invariant():
    problem = tiny_problem()
    basis = sample_frequencies(problem.kernel, 8, seed=3)
    disc = Discretization(num_steps=5, horizon=1.0)
    x0 = sample_initial_positions(problem.initial, 4, seed=2)
    cfg = SolverConfig(h_v=1.0, h_a=0.5, max_iterations=10000, tolerance=1e-13)
    sol = solve(problem, basis, 4, disc, cfg, position_seed=2)
    assert sol.converged
    state = SaddleState(sol.controls, sol.controls.copy(), sol.duals, 0)
    new = pdhg_step(state, problem, basis, x0, disc, cfg)
    assert np.max(np.abs(new.controls - state.controls)) < 1e-12
    assert np.max(np.abs(new.duals - state.duals)) < 1e-12


def test_pdhg_step_hv_degenerate():
    # h_v -> 0 keeps controls frozen while duals contract toward the means
    problem = tiny_problem()
    basis = sample_frequencies(problem.kernel, 8, seed=1)
    disc = Discretization(num_steps=5, horizon=1.0)
    x0 = sample_initial_positions(problem.initial, 3, seed=1)
    rng = np.random.default_rng(5)
    v = rng.normal(size=(3, 5, 1))
    a = rng.normal(size=(8, 5))
    cfg = SolverConfig(h_v=1e-300, h_a=0.5)
    state = SaddleState(v, v.copy(), a, 0)
    new = pdhg_step(state, problem, basis, x0, disc, cfg)
    assert np.max(np.abs(new.controls - v)) < 1e-250
    means = feature_means(basis, rollout(x0, v, disc))
    assert np.allclose(new.duals, 0.5 * a + 0.5 * means, rtol=1e-10, atol=1e-12)


def test_single_agent_zero_interaction_reaches_lq_solution():
    # mu = 0 basis: plain gradient ascent on the negated single-agent cost;
    # the constant closed-form control is v* = 2w(target - x)/(1 + 2wT).
    problem = tiny_problem()
    basis = dataclasses.replace(
        sample_frequencies(problem.kernel, 8, seed=0), amplitude=0.0
    )
    disc = Discretization(num_steps=20, horizon=1.0)
    cfg = SolverConfig(h_v=0.5, h_a=0.5, max_iterations=6000, tolerance=1e-9)
    sol = solve(problem, basis, 1, disc, cfg, position_seed=4)
    assert sol.converged
    x = sol.initial_positions[0]
    v_star = 2 * 10.0 * (0.0 - x) / (1 + 2 * 10.0 * 1.0)
    interior = sol.controls[0, 1:-1, 0]
    assert np.max(np.abs(interior - v_star)) < 5e-2 * max(abs(v_star), 1.0)
    endpoint = x + 1.0 * v_star
    assert abs(sol.trajectories[0, -1, 0] - endpoint) < 5e-2


def test_solve_deterministic():
    problem = tiny_problem()
    basis = sample_frequencies(problem.kernel, 8, seed=0)
    disc = Discretization(num_steps=5, horizon=1.0)
    cfg = SolverConfig(h_v=1.0, h_a=0.5, max_iterations=200, tolerance=1e-9)
    a = solve(problem, basis, 4, disc, cfg, position_seed=3)
    b = solve(problem, basis, 4, disc, cfg, position_seed=3)
    assert np.array_equal(a.controls, b.controls)
    assert np.array_equal(a.duals, b.duals)
    assert np.array_equal(a.trajectories, b.trajectories)
    assert a.residual_history == b.residual_history
    assert a.cost_report == b.cost_report


def test_solve_random_init_seeded():
    problem = tiny_problem()
    basis = sample_frequencies(problem.kernel, 8, seed=0)
    disc = Discretization(num_steps=5, horizon=1.0)
    cfg = SolverConfig(
        h_v=0.5, h_a=0.5, max_iterations=5, tolerance=1e-14,
        control_init="random", dual_init="random", init_seed=9,
    )
    a = solve(problem, basis, 4, disc, cfg, position_seed=3)
    b = solve(problem, basis, 4, disc, cfg, position_seed=3)
    assert np.array_equal(a.controls, b.controls)
    c = solve(problem, basis, 4, disc, dataclasses.replace(cfg, init_seed=10), position_seed=3)
    assert not np.array_equal(a.controls, c.controls)


def test_solve_agent_permutation_equivariance():
    problem = tiny_problem()
    basis = sample_frequencies(problem.kernel, 8, seed=0)
    disc = Discretization(num_steps=5, horizon=1.0)
    x0 = sample_initial_positions(problem.initial, 5, seed=6)
    perm = np.array([3, 0, 4, 1, 2])
    cfg = SolverConfig(h_v=1.0, h_a=0.5, max_iterations=300, tolerance=1e-11)

    def run_from(x_init):
        v = np.zeros((5, disc.num_steps, 1))
        a = np.zeros((basis.feature_count, disc.num_steps))
        state = SaddleState(v, v.copy(), a, 0)
        for _ in range(cfg.max_iterations):
            state = pdhg_step(state, problem, basis, x_init, disc, cfg)
        return state

    straight = run_from(x0)
    permuted = run_from(x0[perm])
    assert np.max(np.abs(permuted.controls - straight.controls[perm])) < 1e-12
    assert np.max(np.abs(permuted.duals - straight.duals)) < 1e-12


def test_solve_divergence_detected():
    problem = tiny_problem()
    basis = sample_frequencies(problem.kernel, 8, seed=0)
    disc = Discretization(num_steps=5, horizon=1.0)
    cfg = SolverConfig(h_v=1e12, h_a=1.0, max_iterations=500, tolerance=1e-12)
    with pytest.raises(SolverDivergedError) as excinfo:
        solve(problem, basis, 4, disc, cfg, position_seed=0)
    assert excinfo.value.iteration >= 0


def test_solve_progress_lines():
    problem = tiny_problem()
    basis = sample_frequencies(problem.kernel, 8, seed=0)
    disc = Discretization(num_steps=5, horizon=1.0)
    cfg = SolverConfig(h_v=1.0, h_a=0.5, max_iterations=30, tolerance=1e-14,
                       record_history_every=10)
    out = io.StringIO()
    sol = solve(problem, basis, 4, disc, cfg, position_seed=0, progress=out)
    lines = out.getvalue().strip().splitlines()
    assert len(lines) == len(sol.residual_history)
    assert all(line.startswith("iter=") and " objective=" in line and " residual=" in line
               for line in lines)
    iters = [h[0] for h in sol.residual_history]
    assert iters == sorted(iters)


def test_fixed_point_consistency_at_convergence():
    problem = tiny_problem()
    basis = sample_frequencies(problem.kernel, 8, seed=5)
    disc = Discretization(num_steps=5, horizon=1.0)
    cfg = SolverConfig(h_v=1.0, h_a=0.5, max_iterations=20000, tolerance=1e-10)
    sol = solve(problem, basis, 4, disc, cfg, position_seed=8)
    assert sol.converged
    means = feature_means(basis, sol.trajectories)
    assert np.max(np.abs(sol.duals - means)) < 10 * cfg.tolerance


def test_oracle_matches_pdhg_on_tiny_instances():
    from mfgrf.reporting import cost_report

    problem = tiny_problem()
    disc = Discretization(num_steps=5, horizon=1.0)
    for seed in range(2):
        basis = sample_frequencies(problem.kernel, 8, seed=seed)
        cfg = SolverConfig(h_v=1.0, h_a=0.5, max_iterations=20000, tolerance=1e-10)
        sol = solve(problem, basis, 4, disc, cfg, position_seed=seed)
        assert sol.converged
        controls, traj, history = potential_oracle_minimize(
            problem, basis, sol.initial_positions, disc,
            OracleConfig(max_iterations=8000, grad_tolerance=1e-9),
        )
        assert np.max(np.abs(traj - sol.trajectories)) < 1e-3
        oracle_report = cost_report(problem, basis, traj, controls, disc)
        assert sol.cost_report.total == pytest.approx(oracle_report.total, rel=1e-4)


def test_oracle_objective_monotone():
    problem = tiny_problem()
    basis = sample_frequencies(problem.kernel, 8, seed=2)
    disc = Discretization(num_steps=5, horizon=1.0)
    x0 = sample_initial_positions(problem.initial, 4, seed=1)
    _, _, history = potential_oracle_minimize(
        problem, basis, x0, disc, OracleConfig(max_iterations=500)
    )
    assert all(later <= earlier for earlier, later in zip(history, history[1:]))


def test_oracle_permutation_symmetry():
    problem = tiny_problem()
    basis = sample_frequencies(problem.kernel, 8, seed=2)
    disc = Discretization(num_steps=5, horizon=1.0)
    x0 = sample_initial_positions(problem.initial, 4, seed=9)
    perm = np.array([2, 0, 3, 1])
    # P itself is exactly symmetric up to summation-order rounding
    rng = np.random.default_rng(0)
    v = rng.normal(size=(4, 5, 1))
    p1 = potential_value(problem, basis, x0, v, disc)
    p2 = potential_value(problem, basis, x0[perm], v[perm], disc)
    assert p1 == pytest.approx(p2, rel=1e-12)
    # minimizer trajectories permute accordingly (line-search branching
    # amplifies rounding, so the match is at solver accuracy, not 1e-12)
    cfg = OracleConfig(max_iterations=2000, grad_tolerance=1e-9)
    traj = potential_oracle_solve(problem, basis, x0, disc, cfg)
    traj_perm = potential_oracle_solve(problem, basis, x0[perm], disc, cfg)
    assert np.max(np.abs(traj_perm - traj[perm])) < 1e-6


def test_oracle_zero_interaction_reduces_to_lq():
    problem = tiny_problem()
    basis = dataclasses.replace(sample_frequencies(problem.kernel, 8, seed=0), amplitude=0.0)
    disc = Discretization(num_steps=20, horizon=1.0)
    x0 = sample_initial_positions(problem.initial, 3, seed=4)
    traj = potential_oracle_solve(
        problem, basis, x0, disc, OracleConfig(max_iterations=20000, grad_tolerance=1e-12)
    )
    for m in range(3):
        x = x0[m, 0]
        endpoint = x + 2 * 10.0 * (0.0 - x) / (1 + 2 * 10.0)
        assert abs(traj[m, -1, 0] - endpoint) < 5e-2


def test_oracle_gradient_matches_finite_differences():
    from mfgrf.solver import _potential_gradient

    problem = tiny_problem()
    basis = sample_frequencies(problem.kernel, 8, seed=7)
    disc = Discretization(num_steps=4, horizon=1.0)
    rng = np.random.default_rng(3)
    x0 = rng.normal(size=(3, 1))
    v = rng.normal(size=(3, 4, 1))
    grad = _potential_gradient(problem, basis, x0, v, disc)
    eps = 1e-6
    fd = np.zeros_like(v)
    for m in range(3):
        for l in range(4):
            vp, vm = v.copy(), v.copy()
            vp[m, l, 0] += eps
            vm[m, l, 0] -= eps
            fd[m, l, 0] = (
                potential_value(problem, basis, x0, vp, disc)
                - potential_value(problem, basis, x0, vm, disc)
            ) / (2 * eps)
    assert np.max(np.abs(grad - fd)) / max(np.max(np.abs(fd)), 1e-12) < 1e-6
