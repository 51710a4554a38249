"""Experiment runner: YAML config parsing, orchestration, output population.

Config surface (YAML, flat keys plus nested sections; every key optional
unless noted, defaults in parentheses):

    experiment: a | b | c | custom   (a)
    dimension: int                   (2)
    feature_count: even int          (512)
    agents: int                      (256)
    time_steps: int                  (50)
    threads: int, 0 = auto           (0)
    output_dir: str                  (runs/out)
    kernel:        mu / sigma / sigma_hat overrides (preset defaults)
    solver:        h_v h_a max_iterations tolerance prox_mode control_init
                   control_init_scale dual_init dual_init_scale
                   record_history_every
    seeds:         frequencies (0) initial_positions (1) init_controls (2)
    exports:       trajectories (true) cost_report (true)
                   kernel_error_curve (false) kernel_slice (false)
    kernel_bench:  r_values seeds grid_extent grid_per_side sample_count
                   sample_seed slice_radius slice_points slice_direction_seed
    problem:       custom-experiment fields: horizon kinetic_weight
                   obstacle_weight obstacle_matrix terminal_weight target
                   centers std interaction_dims

Unknown keys are rejected by name; type mismatches name the key and the
expected type.  Note the YAML 1.1 float rule: scientific notation needs a
dot and a signed exponent (``1.0e-6``, ``1.0e+12``), otherwise the value
parses as a string and is rejected.  Every run writes the fully resolved
config next to its outputs so a run directory is reproducible from itself.

Exit codes: 0 converged / success, 1 usage or config error, 2 stopped at
max_iterations without converging, 3 diverged, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__, backend
from .kernels import GaussianKernelSpec, sample_frequencies
from .problem import (
    InitialDistribution,
    LagrangianSpec,
    MFGProblem,
    ObstacleSpec,
    TerminalSpec,
    preset,
)
from .reporting import (
    default_error_points,
    export_kernel_error_curve,
    export_kernel_slice,
    export_trajectories,
)
from .rng import DIRECTION_STREAM, standard_normal, stream
from .solver import SolverConfig, SolverDivergedError, solve
from .transcription import Discretization

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_MAX_ITERATIONS = 2
EXIT_DIVERGED = 3
EXIT_IO = 4


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class KernelOverrides:
    mu: float | None = None
    sigma: float | None = None
    sigma_hat: float | None = None


@dataclass(frozen=True)
class SeedConfig:
    frequencies: int = 0
    initial_positions: int = 1
    init_controls: int = 2


@dataclass(frozen=True)
class ExportConfig:
    trajectories: bool = True
    cost_report: bool = True
    kernel_error_curve: bool = False
    kernel_slice: bool = False


@dataclass(frozen=True)
class KernelBenchConfig:
    r_values: tuple[int, ...] = (32, 128, 512, 2048)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4, 5, 6, 7, 8, 9)
    grid_extent: float = 2.5
    grid_per_side: int = 51
    sample_count: int = 2000
    sample_seed: int = 0
    slice_radius: float = 2.5
    slice_points: int = 101
    slice_direction_seed: int = 0


@dataclass(frozen=True)
class CustomProblemConfig:
    horizon: float = 1.0
    kinetic_weight: float = 0.5
    obstacle_weight: float | None = None
    obstacle_matrix: tuple[tuple[float, ...], ...] | None = None
    terminal_weight: float = 10.0
    target: tuple[float, ...] | None = None
    centers: tuple[tuple[float, ...], ...] | None = None
    std: float = 0.1
    interaction_dims: int | None = None


@dataclass(frozen=True)
class RunConfig:
    experiment: str = "a"
    dimension: int = 2
    feature_count: int = 512
    agents: int = 256
    time_steps: int = 50
    threads: int = 0
    output_dir: str = "runs/out"
    kernel: KernelOverrides = field(default_factory=KernelOverrides)
    solver: SolverConfig = field(default_factory=SolverConfig)
    seeds: SeedConfig = field(default_factory=SeedConfig)
    exports: ExportConfig = field(default_factory=ExportConfig)
    kernel_bench: KernelBenchConfig = field(default_factory=KernelBenchConfig)
    problem: CustomProblemConfig = field(default_factory=CustomProblemConfig)


_SCALARS = {int: "int", float: "float", bool: "bool", str: "str"}


def _coerce(key, value, kind):
    if kind == "bool":
        if isinstance(value, bool):
            return value
    elif kind == "int":
        if isinstance(value, int) and not isinstance(value, bool):
            return int(value)
    elif kind == "float":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif kind == "str":
        if isinstance(value, str):
            return value
    elif kind == "int_list":
        if isinstance(value, (list, tuple)) and all(
            isinstance(v, int) and not isinstance(v, bool) for v in value
        ):
            return tuple(int(v) for v in value)
    elif kind == "float_list":
        if isinstance(value, (list, tuple)) and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            return tuple(float(v) for v in value)
    elif kind == "float_matrix":
        if isinstance(value, (list, tuple)) and all(
            isinstance(row, (list, tuple)) and all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in row
            )
            for row in value
        ):
            return tuple(tuple(float(v) for v in row) for row in value)
    raise ConfigError(f"config key {key!r}: expected {kind}, got {value!r}")


def _section(data, name, allowed) -> dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config section {name!r} must be a mapping")
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown config key {name}.{sorted(unknown)[0]}")
    return data


_TOP_KINDS = {
    "experiment": "str",
    "dimension": "int",
    "feature_count": "int",
    "agents": "int",
    "time_steps": "int",
    "threads": "int",
    "output_dir": "str",
}

_SECTION_KINDS = {
    "kernel": {"mu": "float", "sigma": "float", "sigma_hat": "float"},
    "solver": {
        "h_v": "float",
        "h_a": "float",
        "max_iterations": "int",
        "tolerance": "float",
        "control_init": "str",
        "control_init_scale": "float",
        "dual_init": "str",
        "dual_init_scale": "float",
        "prox_mode": "str",
        "record_history_every": "int",
    },
    "seeds": {"frequencies": "int", "initial_positions": "int", "init_controls": "int"},
    "exports": {
        "trajectories": "bool",
        "cost_report": "bool",
        "kernel_error_curve": "bool",
        "kernel_slice": "bool",
    },
    "kernel_bench": {
        "r_values": "int_list",
        "seeds": "int_list",
        "grid_extent": "float",
        "grid_per_side": "int",
        "sample_count": "int",
        "sample_seed": "int",
        "slice_radius": "float",
        "slice_points": "int",
        "slice_direction_seed": "int",
    },
    "problem": {
        "horizon": "float",
        "kinetic_weight": "float",
        "obstacle_weight": "float",
        "obstacle_matrix": "float_matrix",
        "terminal_weight": "float",
        "target": "float_list",
        "centers": "float_matrix",
        "std": "float",
        "interaction_dims": "int",
    },
}

_SECTION_TYPES = {
    "kernel": KernelOverrides,
    "seeds": SeedConfig,
    "exports": ExportConfig,
    "kernel_bench": KernelBenchConfig,
    "problem": CustomProblemConfig,
}


def parse_config(text: str) -> RunConfig:
    """Parse and validate config text; unknown keys and bad types raise
    :class:`ConfigError` naming the offending key."""
    data = yaml.safe_load(text)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    allowed = set(_TOP_KINDS) | set(_SECTION_KINDS)
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown config key {sorted(unknown)[0]}")

    top = {}
    for key, kind in _TOP_KINDS.items():
        if key in data:
            top[key] = _coerce(key, data[key], kind)

    parts = {}
    for name, kinds in _SECTION_KINDS.items():
        raw = _section(data.get(name), name, kinds)
        values = {
            key: _coerce(f"{name}.{key}", raw[key], kind)
            for key, kind in kinds.items()
            if key in raw
        }
        if name == "solver":
            try:
                parts[name] = SolverConfig(**values)
            except ValueError as exc:
                raise ConfigError(f"config section solver: {exc}") from None
        else:
            parts[name] = _SECTION_TYPES[name](**values)

    config = RunConfig(**top, **{k: v for k, v in parts.items()})

    if config.experiment not in ("a", "b", "c", "custom"):
        raise ConfigError(
            f"config key experiment: expected one of a, b, c, custom, "
            f"got {config.experiment!r}"
        )
    if config.feature_count % 2 != 0 or config.feature_count < 2:
        raise ConfigError(
            f"config key feature_count: must be even and >= 2, got {config.feature_count}"
        )
    if config.agents < 1:
        raise ConfigError(f"config key agents: must be >= 1, got {config.agents}")
    if config.time_steps < 2:
        raise ConfigError(f"config key time_steps: must be >= 2, got {config.time_steps}")
    # The control/dual initializer stream is seeded from the seeds section.
    config = replace(
        config, solver=replace(config.solver, init_seed=config.seeds.init_controls)
    )
    return config


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def _config_dict(config: RunConfig) -> dict:
    out = {key: getattr(config, key) for key in _TOP_KINDS}
    for name, kinds in _SECTION_KINDS.items():
        section = getattr(config, name)
        values = {}
        for key in kinds:
            val = getattr(section, key)
            if isinstance(val, tuple):
                val = [list(v) if isinstance(v, tuple) else v for v in val]
            values[key] = val
        out[name] = values
    return out


def emit_config(config: RunConfig) -> str:
    """Inverse of ``parse_config`` up to formatting: parse(emit(c)) == c."""
    data = _config_dict(config)
    # None values mean "unset"; drop them so the emitted file stays minimal.
    for name in list(data):
        if isinstance(data[name], dict):
            data[name] = {k: v for k, v in data[name].items() if v is not None}
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=False)


def build_problem(config: RunConfig) -> MFGProblem:
    """Materialize the MFG instance a config describes."""
    kk = config.kernel
    if config.experiment in ("a", "b"):
        if kk.sigma_hat is not None:
            raise ConfigError("kernel.sigma_hat only applies to experiment c")
        return preset(config.experiment, config.dimension, sigma=kk.sigma, mu=kk.mu)
    if config.experiment == "c":
        if kk.sigma is not None:
            raise ConfigError("use kernel.sigma_hat (not sigma) for experiment c")
        return preset("c", config.dimension, sigma_hat=kk.sigma_hat, mu=kk.mu)
    # custom
    pc = config.problem
    d = config.dimension
    if kk.mu is None or kk.sigma is None:
        raise ConfigError("custom experiments require kernel.mu and kernel.sigma")
    obstacle = None
    if pc.obstacle_weight is not None:
        matrix = pc.obstacle_matrix
        if matrix is None:
            raise ConfigError("problem.obstacle_matrix required with obstacle_weight")
        obstacle = ObstacleSpec(weight=pc.obstacle_weight, quadratic_form=np.array(matrix))
    target = np.zeros(d) if pc.target is None else np.asarray(pc.target, dtype=np.float64)
    centers = (
        np.zeros((1, d)) if pc.centers is None
        else np.asarray(pc.centers, dtype=np.float64)
    )
    d_int = d if pc.interaction_dims is None else pc.interaction_dims
    return MFGProblem(
        dimension=d,
        horizon=pc.horizon,
        lagrangian=LagrangianSpec(kinetic_weight=pc.kinetic_weight, obstacle=obstacle),
        terminal=TerminalSpec(weight=pc.terminal_weight, target=target),
        initial=InitialDistribution(centers=centers, std=pc.std),
        kernel=GaussianKernelSpec(mu=kk.mu, sigma=kk.sigma, interaction_dims=d_int),
    )


def _write_residual_history(history, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("iteration,residual,objective\n")
        for k, res, obj in history:
            fh.write(f"{k},{res:.17g},{obj:.17g}\n")


def _resolved_with_dir(config: RunConfig, out_dir: Path) -> RunConfig:
    return replace(config, output_dir=str(out_dir))


def _write_kernel_exports(config: RunConfig, problem: MFGProblem, basis,
                          out_dir: Path) -> None:
    bench = config.kernel_bench
    if config.exports.kernel_error_curve:
        points = default_error_points(
            problem.kernel,
            dist=problem.initial,
            seed=bench.sample_seed,
            grid_extent=bench.grid_extent,
            grid_per_side=bench.grid_per_side,
            sample_count=bench.sample_count,
        )
        export_kernel_error_curve(
            problem.kernel, bench.r_values, bench.seeds, points,
            out_dir / "kernel_error_curve.csv",
        )
    if config.exports.kernel_slice:
        gen = stream(bench.slice_direction_seed, DIRECTION_STREAM)
        direction = standard_normal(gen, problem.kernel.interaction_dims)
        direction /= np.linalg.norm(direction)
        export_kernel_slice(
            problem.kernel, basis, direction, bench.slice_radius,
            bench.slice_points, out_dir / "kernel_slice.csv",
        )


def run(config: RunConfig, out_dir: str | None = None,
        threads: int | None = None, progress=None) -> int:
    """Execute one configured run; returns a documented exit status."""
    out = Path(out_dir if out_dir is not None else config.output_dir)
    threads = config.threads if threads is None else threads
    resolved = _resolved_with_dir(config, out)
    if threads != config.threads:
        resolved = replace(resolved, threads=threads)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "resolved_config.yaml").write_text(emit_config(resolved))
    except OSError as exc:
        print(f"cli: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO

    backend.set_num_threads(threads)
    problem = build_problem(resolved)
    basis = sample_frequencies(
        problem.kernel, resolved.feature_count, resolved.seeds.frequencies
    )
    disc = Discretization(num_steps=resolved.time_steps, horizon=problem.horizon)

    try:
        solution = solve(
            problem, basis, resolved.agents, disc, resolved.solver,
            position_seed=resolved.seeds.initial_positions, progress=progress,
        )
    except SolverDivergedError as exc:
        print(f"solver: {exc}", file=sys.stderr)
        try:
            _write_residual_history(exc.history, out / "residual_history.csv")
        except OSError as io_exc:
            print(f"cli: I/O failure: {io_exc}", file=sys.stderr)
            return EXIT_IO
        return EXIT_DIVERGED

    try:
        _write_residual_history(solution.residual_history, out / "residual_history.csv")
        if resolved.exports.cost_report:
            solution.cost_report.write_json(out / "cost_report.json")
        if resolved.exports.trajectories:
            export_trajectories(solution, out / "trajectories.csv", "csv")
        _write_kernel_exports(resolved, problem, basis, out)
    except OSError as exc:
        print(f"cli: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK if solution.converged else EXIT_MAX_ITERATIONS


def kernel_bench(config: RunConfig, out_dir: str | None = None) -> int:
    """Write only the kernel error-curve and slice exports for a config."""
    out = Path(out_dir if out_dir is not None else config.output_dir)
    resolved = _resolved_with_dir(config, out)
    forced = replace(
        resolved,
        exports=replace(resolved.exports, kernel_error_curve=True, kernel_slice=True),
    )
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "resolved_config.yaml").write_text(emit_config(forced))
        problem = build_problem(forced)
        basis = sample_frequencies(
            problem.kernel, forced.feature_count, forced.seeds.frequencies
        )
        _write_kernel_exports(forced, problem, basis, out)
    except OSError as exc:
        print(f"cli: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def main(argv=None) -> int:
    parser = _Parser(prog="mfgrf", description="Nonlocal mean-field game solver")
    parser.add_argument("--version", action="version", version=f"mfgrf {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="solve a configured experiment")
    p_run.add_argument("--config", required=True, help="YAML config path")
    p_run.add_argument("--out", default=None, help="output directory override")
    p_run.add_argument("--threads", type=int, default=None,
                       help="compiled-backend thread cap (0 = auto)")

    p_bench = sub.add_parser("kernel-bench", help="kernel error/slice exports only")
    p_bench.add_argument("--config", required=True, help="YAML config path")
    p_bench.add_argument("--out", default=None, help="output directory override")

    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
    except (ConfigError, OSError, yaml.YAMLError) as exc:
        print(f"cli: bad config: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "run":
        return run(config, out_dir=args.out, threads=args.threads, progress=sys.stdout)
    return kernel_bench(config, out_dir=args.out)


if __name__ == "__main__":
    sys.exit(main())
