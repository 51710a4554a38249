"""Cost functions, initial sampling, and the experiment presets."""

import numpy as np
import pytest

from mfgrf.problem import (
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
from mfgrf.kernels import GaussianKernelSpec, sample_frequencies


def wedge():
    return ObstacleSpec(weight=5.0, quadratic_form=np.diag([1.0, -5.0]))


def test_sample_initial_degenerate_std():
    dist = InitialDistribution(centers=np.array([[1.0, -2.0]]), std=1e-12)
    pts = sample_initial_positions(dist, 100, seed=0)
    assert np.max(np.abs(pts - np.array([1.0, -2.0]))) < 1e-9


def test_sample_initial_rejects_bad_count():
    dist = InitialDistribution(centers=np.zeros((1, 2)), std=0.1)
    with pytest.raises(ValueError):
        sample_initial_positions(dist, 0, seed=0)


def test_sample_initial_component_balance():
    # multinomial concentration: each of 8 components gets ~12.5% of draws;
    # 5-sigma band at M=80000 is ~ +/-0.6 percentage points.
    dist = InitialDistribution(centers=np.eye(8), std=0.01)
    pts = sample_initial_positions(dist, 80000, seed=3)
    comp = np.argmax(pts, axis=1)
    fractions = np.bincount(comp, minlength=8) / len(comp)
    assert np.all(fractions >= 0.09) and np.all(fractions <= 0.16), fractions


def test_sample_initial_octagon_mean_near_origin():
    problem = preset("a", 3)
    pts = sample_initial_positions(problem.initial, 100000, seed=11)
    assert np.max(np.abs(pts.mean(axis=0))) < 0.01


def test_sample_initial_deterministic():
    dist = InitialDistribution(centers=np.zeros((1, 4)), std=1.0)
    a = sample_initial_positions(dist, 64, seed=5)
    b = sample_initial_positions(dist, 64, seed=5)
    assert np.array_equal(a, b)


def test_position_and_frequency_streams_independent():
    # same integer seed, disjoint streams: changing one does not move the other
    problem = preset("a", 2)
    pts = sample_initial_positions(problem.initial, 16, seed=7)
    basis1 = sample_frequencies(problem.kernel, 32, seed=7)
    basis2 = sample_frequencies(problem.kernel, 32, seed=8)
    pts_again = sample_initial_positions(problem.initial, 16, seed=7)
    assert np.array_equal(pts, pts_again)
    assert not np.array_equal(basis1.frequencies, basis2.frequencies)
    assert not np.array_equal(
        basis1.frequencies[: pts.size // 2].ravel()[: pts.size], pts.ravel()
    )


def test_lagrangian_kinetic_only():
    spec = LagrangianSpec(kinetic_weight=0.5)
    assert lagrangian_value(spec, 0.0, np.zeros(2), np.zeros(2)) == 0.0
    assert lagrangian_value(spec, 0.0, np.zeros(2), np.array([1.0, 2.0])) == pytest.approx(2.5)


def test_obstacle_wedge_values():
    spec = LagrangianSpec(kinetic_weight=0.25, obstacle=wedge())
    # (0, 1): x'Qx' = -5 -> no penalty
    assert lagrangian_value(spec, 0.0, np.array([0.0, 1.0]), np.zeros(2)) == 0.0
    # (1, 0): x'Qx' = 1 -> penalty 5
    assert lagrangian_value(spec, 0.0, np.array([1.0, 0.0]), np.zeros(2)) == pytest.approx(5.0)


def test_obstacle_gradient_analytic():
    spec = LagrangianSpec(kinetic_weight=0.25, obstacle=wedge())
    gx, gv = lagrangian_gradients(spec, 0.0, np.array([1.0, 0.0]), np.zeros(2))
    assert np.allclose(gx, [10.0, 0.0])
    assert np.all(gv == 0.0)
    # inactive side and the kink convention
    gx, _ = lagrangian_gradients(spec, 0.0, np.array([0.0, 1.0]), np.zeros(2))
    assert np.all(gx == 0.0)
    gx, _ = lagrangian_gradients(spec, 0.0, np.zeros(2), np.zeros(2))
    assert np.all(gx == 0.0)


def test_obstacle_penalty_nonnegative_and_continuous():
    obs = wedge()
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(200, 2))
    assert np.all(obs.penalty(pts) >= 0.0)
    # continuity across the boundary |x1| = sqrt(5)|x2|
    for x2 in (0.5, -1.2):
        edge = np.array([np.sqrt(5.0) * abs(x2), x2])
        eps = 1e-8
        inside = obs.penalty(edge * (1 + eps))
        outside = obs.penalty(edge * (1 - eps))
        assert abs(inside - outside) < 1e-5


def test_lagrangian_gradients_match_finite_differences():
    spec = LagrangianSpec(kinetic_weight=0.25, obstacle=wedge())
    rng = np.random.default_rng(9)
    eps = 1e-6
    checked = 0
    while checked < 100:
        x = rng.normal(size=2) * 2
        v = rng.normal(size=2)
        quad = x @ np.diag([1.0, -5.0]) @ x
        if abs(quad) < 1e-3:  # stay away from the kink
            continue
        checked += 1
        gx, gv = lagrangian_gradients(spec, 0.0, x, v)
        for c in range(2):
            for vec, grad in ((x, gx), (v, gv)):
                p, m = vec.copy(), vec.copy()
                p[c] += eps
                m[c] -= eps
                if vec is x:
                    fd = (lagrangian_value(spec, 0, p, v) - lagrangian_value(spec, 0, m, v)) / (2 * eps)
                else:
                    fd = (lagrangian_value(spec, 0, x, p) - lagrangian_value(spec, 0, x, m)) / (2 * eps)
                assert grad[c] == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_terminal_value_and_gradient():
    spec = TerminalSpec(weight=10.0, target=np.zeros(2))
    val, grad = terminal_value_and_gradient(spec, np.zeros(2))
    assert val == 0.0 and np.all(grad == 0.0)
    val, grad = terminal_value_and_gradient(spec, np.array([0.1, 0.0]))
    assert val == pytest.approx(0.1)
    assert np.allclose(grad, [2.0, 0.0])
    # finite differences
    rng = np.random.default_rng(2)
    eps = 1e-6
    spec = TerminalSpec(weight=3.0, target=rng.normal(size=4))
    for x in rng.normal(size=(20, 4)):
        _, grad = terminal_value_and_gradient(spec, x)
        for c in range(4):
            p, m = x.copy(), x.copy()
            p[c] += eps
            m[c] -= eps
            fd = (terminal_value_and_gradient(spec, p)[0]
                  - terminal_value_and_gradient(spec, m)[0]) / (2 * eps)
            assert grad[c] == pytest.approx(fd, rel=1e-8, abs=1e-7)


def test_preset_a():
    problem = preset("a", 2, sigma=0.2)
    assert problem.kernel.mu == 10.0
    assert problem.kernel.sigma == 0.2
    assert problem.kernel.interaction_dims == 2
    assert problem.initial.centers.shape == (8, 2)
    assert np.allclose(np.linalg.norm(problem.initial.centers, axis=1), 1.0)
    assert problem.horizon == 1.0
    assert np.all(problem.terminal.target == 0.0)
    assert problem.lagrangian.kinetic_weight == 0.5


def test_preset_b_high_dimensional():
    problem = preset("b", 100)
    x_init = problem.initial.centers[0]
    assert x_init[1] == 1.0 and np.sum(x_init != 0) == 1
    target = problem.terminal.target
    assert target[1] == -1.0 and np.sum(target != 0) == 1
    assert problem.kernel.mu == 50.0 and problem.kernel.sigma == 1.0
    assert problem.lagrangian.obstacle.weight == 5.0
    assert np.array_equal(problem.lagrangian.obstacle.quadratic_form, np.diag([1.0, -5.0]))
    assert problem.lagrangian.kinetic_weight == 0.25


def test_preset_c_sigma_scaling():
    problem = preset("c", 50, sigma_hat=0.2)
    assert problem.kernel.sigma == pytest.approx(1.0)
    assert problem.kernel.interaction_dims == 50
    assert problem.kernel.mu == 10.0
    p2 = preset("c", 50, sigma_hat=1.25)
    assert p2.kernel.mu == 1.0
    with pytest.raises(ValueError):
        preset("c", 50, sigma_hat=0.7)  # no stock mu pairing
    assert preset("c", 50, sigma_hat=0.7, mu=2.0).kernel.mu == 2.0


def test_preset_c_reduces_to_a_at_d2():
    pa = preset("a", 2, sigma=0.2)
    pc = preset("c", 2, sigma_hat=0.2)
    assert pc.kernel.sigma == pytest.approx(pa.kernel.sigma)
    assert pc.kernel.mu == pa.kernel.mu
    assert pc.kernel.interaction_dims == pa.kernel.interaction_dims


def test_preset_unknown_tag():
    with pytest.raises(ValueError):
        preset("z", 2)


def test_preset_costs_nonnegative():
    rng = np.random.default_rng(1)
    for tag in ("a", "b"):
        problem = preset(tag, 4)
        x = rng.normal(size=(50, 4))
        v = rng.normal(size=(50, 4))
        vals = lagrangian_value(problem.lagrangian, 0.0, x, v)
        assert np.all(np.isfinite(vals)) and np.all(vals >= 0.0)
        tvals, _ = terminal_value_and_gradient(problem.terminal, x)
        assert np.all(tvals >= 0.0)


def test_problem_validation():
    # kernel interaction dims may not exceed the state dimension
    with pytest.raises(ValueError):
        MFGProblem(
            dimension=1,
            horizon=1.0,
            lagrangian=LagrangianSpec(kinetic_weight=0.5),
            terminal=TerminalSpec(weight=1.0, target=np.zeros(1)),
            initial=InitialDistribution(centers=np.zeros((1, 1)), std=0.1),
            kernel=GaussianKernelSpec(mu=1.0, sigma=1.0, interaction_dims=2),
        )
