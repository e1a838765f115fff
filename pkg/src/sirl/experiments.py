"""Experiment orchestration: INI configs, recovery and sweep runners, and
deterministic result files.

Every result CSV is written with LF line endings and repr() floats, so two
runs with the same config and seeds produce byte-identical files. Wall
times are real measurements and therefore live in separate files
(timings.csv, and the seconds column of iterations.csv) that deterministic
comparisons should skip.
"""

from __future__ import annotations

import configparser
import csv
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import gmm as gm
from . import mcem
from . import objectworld as ow
from .exceptions import ConfigError
from .maxent import maxent_baseline
from .mcem import McemConfig
from .mdp import TabularMdp, value_iteration
from .robustness import SolutionSet, candidate_evd, generate_solution_set

FEATURE_KINDS = ("continuous", "discrete")
METHODS = ("sirl", "maxent", "random")

# Axes for the larger benchmark grid behind the --full-scale flag: demo
# counts doubling from 20 to 2560 and trajectory lengths doubling to 64.
FULL_SCALE_DEMO_COUNTS = (20, 40, 80, 160, 320, 640, 1280, 2560)
FULL_SCALE_EPSILON_REPS = (0.65, 0.8, 0.95)
FULL_SCALE_TRAJECTORY_LENGTHS = (1, 2, 4, 8, 16, 32, 64)

# Spawn-key namespace for the random-weights baseline stream.
_NS_RANDOM = 3


@dataclass(frozen=True)
class WorldSettings:
    grid_size: int = 10
    n_objects: int = 25
    n_colors: int = 2
    wind: float = 0.3
    discount: float = 0.9
    seed: int = 0


@dataclass(frozen=True)
class DemoSettings:
    n_demos: int = 20
    trajectory_length: int = 5
    seed: int = 1


@dataclass(frozen=True)
class SweepAxes:
    demo_counts: tuple[int, ...] = (40, 80, 160, 320)
    epsilon_reps: tuple[float, ...] = (0.65, 0.8, 0.95)
    trajectory_lengths: tuple[int, ...] = (2, 4, 8)
    replications: int = 3


FULL_SCALE_AXES = SweepAxes(
    FULL_SCALE_DEMO_COUNTS,
    FULL_SCALE_EPSILON_REPS,
    FULL_SCALE_TRAJECTORY_LENGTHS,
    3,
)


@dataclass(frozen=True)
class RobustnessSettings:
    n: int = 5
    delta: float = 1.0
    epsilon_evd: float = 10.0
    max_draws: int = 0  # 0 means the generator default of 100 * n
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    world: WorldSettings = WorldSettings()
    demos: DemoSettings = DemoSettings()
    feature_kind: str = "continuous"
    methods: tuple[str, ...] = METHODS
    maxent_epochs: int = 20
    maxent_lr: float = 0.01
    maxent_seed: int = 0
    mcem: McemConfig = McemConfig()
    sweep: SweepAxes = SweepAxes()
    robustness: RobustnessSettings = RobustnessSettings()
    master_seed: int = 0
    checkpoint: bool = True


def _int_list(raw: str) -> tuple[int, ...]:
    return tuple(int(part.strip()) for part in raw.split(",") if part.strip())


def _float_list(raw: str) -> tuple[float, ...]:
    return tuple(float(part.strip()) for part in raw.split(",") if part.strip())


def _str_list(raw: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in raw.split(",") if part.strip())


def _bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


_SCHEMA = {
    "world": {
        "grid_size": int, "n_objects": int, "n_colors": int,
        "wind": float, "discount": float, "seed": int,
    },
    "demos": {"n_demos": int, "trajectory_length": int, "seed": int},
    "features": {"kind": str},
    "methods": {"use": _str_list},
    "maxent": {"epochs": int, "lr": float, "seed": int},
    "mcem": {
        "seed": int, "n_components": int, "epsilon_rep": float, "n0": int,
        "growth": float, "m": int, "lr": float, "delta_mcem": float,
        "epsilon_mcem": float, "max_outer_iters": int, "gmm_max_iter": int,
        "gmm_tol": float,
    },
    "sweep": {
        "demo_counts": _int_list, "epsilon_reps": _float_list,
        "trajectory_lengths": _int_list, "replications": int,
    },
    "robustness": {
        "n": int, "delta": float, "epsilon_evd": float,
        "max_draws": int, "seed": int,
    },
    "run": {"seed": int, "checkpoint": _bool},
}


def load_config(path) -> ExperimentConfig:
    """Parse an INI experiment config; unknown sections or keys and
    unparseable values raise ConfigError."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file: {exc}") from exc
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    raw: dict[str, dict] = {section: {} for section in _SCHEMA}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, text in parser.items(section):
            convert = _SCHEMA[section].get(key)
            if convert is None:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            try:
                raw[section][key] = convert(text)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r} in [{section}]: {exc}") from exc
    try:
        world = WorldSettings(**raw["world"])
        demos = DemoSettings(**raw["demos"])
        mcem_config = McemConfig(**raw["mcem"])
        axes = SweepAxes(**raw["sweep"])
        robust = RobustnessSettings(**raw["robustness"])
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    kind = raw["features"].get("kind", "continuous")
    if kind not in FEATURE_KINDS:
        raise ConfigError(f"feature kind must be one of {FEATURE_KINDS}")
    methods = raw["methods"].get("use", METHODS)
    for method in methods:
        if method not in METHODS:
            raise ConfigError(f"unknown method {method!r}")
    if not methods:
        raise ConfigError("at least one method is required")
    if world.grid_size < 2 or world.n_objects < 1 or world.n_colors < 1:
        raise ConfigError("world settings out of range")
    if demos.n_demos < 1 or demos.trajectory_length < 1:
        raise ConfigError("demo settings out of range")
    if raw["maxent"].get("epochs", 20) < 1:
        raise ConfigError("maxent epochs must be >= 1")
    if axes.replications < 1:
        raise ConfigError("sweep replications must be >= 1")
    if robust.n < 1 or robust.delta < 0 or robust.epsilon_evd <= 0:
        raise ConfigError("robustness settings out of range")
    return ExperimentConfig(
        world=world,
        demos=demos,
        feature_kind=kind,
        methods=tuple(methods),
        maxent_epochs=raw["maxent"].get("epochs", 20),
        maxent_lr=raw["maxent"].get("lr", 0.01),
        maxent_seed=raw["maxent"].get("seed", 0),
        mcem=mcem_config,
        sweep=axes,
        robustness=robust,
        master_seed=raw["run"].get("seed", 0),
        checkpoint=raw["run"].get("checkpoint", True),
    )


def with_seed(config: ExperimentConfig, seed: int) -> ExperimentConfig:
    """Override every learner seed at once (world and demo draws keep
    their own seeds)."""
    return replace(
        config,
        mcem=replace(config.mcem, seed=seed),
        maxent_seed=seed,
        master_seed=seed,
    )


def build_world(config: ExperimentConfig):
    """Instance, true-reward MDP, and feature matrix from the config."""
    instance = ow.generate(
        grid_size=config.world.grid_size,
        n_objects=config.world.n_objects,
        n_colors=config.world.n_colors,
        wind=config.world.wind,
        discount=config.world.discount,
        seed=config.world.seed,
    )
    mdp = ow.build_mdp(instance)
    if config.feature_kind == "continuous":
        features = ow.features_continuous(instance)
    else:
        features = ow.features_discrete(instance)
    return instance, mdp, features


# ------------------------------------------------------------------ files


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(value) for value in row])


def write_grid_csv(path, flat_values, grid_size: int) -> None:
    grid = np.asarray(flat_values, dtype=np.float64).reshape(grid_size, grid_size)
    write_csv(path, [f"col{j}" for j in range(grid_size)], grid)


def write_demos_csv(path, demos: ow.DemoSet) -> None:
    rows = []
    for i in range(demos.n_demos):
        for step in range(demos.trajectory_length):
            rows.append((i, step, demos.states[i, step], demos.actions[i, step]))
    write_csv(path, ["demo", "step", "state", "action"], rows)


def read_demos_csv(path) -> ow.DemoSet:
    with open(path, newline="") as handle:
        rows = list(csv.DictReader(handle))
    if not rows:
        raise ValueError("empty demo file")
    n_demos = int(rows[-1]["demo"]) + 1
    length = int(rows[-1]["step"]) + 1
    states = np.zeros((n_demos, length), dtype=np.int64)
    actions = np.zeros((n_demos, length), dtype=np.int64)
    for row in rows:
        i, step = int(row["demo"]), int(row["step"])
        states[i, step] = int(row["state"])
        actions[i, step] = int(row["action"])
    return ow.DemoSet(states, actions)


def save_weights(path, weights) -> None:
    with open(path, "w", newline="\n") as handle:
        for value in np.asarray(weights, dtype=np.float64):
            handle.write(repr(float(value)) + "\n")


def load_weights(path) -> np.ndarray:
    with open(path) as handle:
        return np.array([float(line) for line in handle if line.strip()])


# --------------------------------------------------------------- recovery


@dataclass(frozen=True)
class MethodResult:
    method: str
    weights: "np.ndarray | None"
    evd: float
    n_iterations: int
    converged: bool
    seconds: float


@dataclass(frozen=True)
class RecoveryOutcome:
    results: tuple[MethodResult, ...]
    gmm: "gm.Gmm | None"
    mcem_result: "mcem.RunResult | None"


def random_weights(n_dims: int, master_seed: int) -> np.ndarray:
    rng = np.random.default_rng(
        np.random.SeedSequence(master_seed, spawn_key=(_NS_RANDOM,))
    )
    return rng.uniform(-1.0, 1.0, size=n_dims)


def random_baseline_evd(
    mdp: TabularMdp, features: np.ndarray, master_seed: int, n_draws: int = 20
) -> float:
    """Chance baseline: mean EVD over uniformly drawn weight vectors.

    A single random draw is too high-variance to compare against, so the
    baseline is the average over a seeded batch of draws.
    """
    rng = np.random.default_rng(
        np.random.SeedSequence(master_seed, spawn_key=(_NS_RANDOM,))
    )
    draws = rng.uniform(-1.0, 1.0, size=(n_draws, features.shape[1]))
    return float(np.mean([candidate_evd(w, mdp, features) for w in draws]))


def run_recovery(
    config: ExperimentConfig,
    out_dir,
    methods: tuple[str, ...] | None = None,
    resume: bool = False,
) -> RecoveryOutcome:
    """Run the configured recovery methods on one world and write all
    artifacts (result CSVs, reward and value heatmaps, mixture file)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if methods is None:
        methods = config.methods
    instance, mdp, features = build_world(config)
    demos = ow.generate_demos(
        instance, config.demos.n_demos, config.demos.trajectory_length,
        config.demos.seed,
    )
    write_grid_csv(out / "true_reward.csv", mdp.reward, instance.grid_size)
    write_grid_csv(
        out / "true_value.csv", value_iteration(mdp)[0], instance.grid_size
    )

    results: list[MethodResult] = []
    recovered_gmm = None
    mcem_result = None
    for method in methods:
        start = time.perf_counter()
        if method == "sirl":
            checkpoint = out / "sirl_state.json" if config.checkpoint else None
            initial = None
            if resume and checkpoint is not None and checkpoint.exists():
                initial = mcem.load_state(checkpoint)
            mcem_result = mcem.run(
                config.mcem, demos, features, mdp,
                checkpoint_path=checkpoint, initial=initial,
            )
            recovered_gmm = mcem_result.gmm
            weights = gm.mixture_mean(recovered_gmm)
            n_iterations = mcem_result.state.t
            converged = mcem_result.converged
            gm.save_gmm(out / "sirl_gmm.txt", recovered_gmm)
            write_csv(
                out / "iterations.csv",
                ["t", "n_tasks", "theta2_change", "mean_ll_gain", "seconds"],
                [
                    (r.t, r.n_tasks, r.theta2_change, r.mean_ll_gain, r.seconds)
                    for r in mcem_result.records
                ],
            )
        elif method == "maxent":
            weights = maxent_baseline(
                demos, features, mdp,
                epochs=config.maxent_epochs, lr=config.maxent_lr,
                seed=config.maxent_seed,
            )
            n_iterations = config.maxent_epochs
            converged = True
        elif method == "random":
            # the chance baseline is an averaged statistic, so it has no
            # single weight vector or heatmap artifact
            evd_value = random_baseline_evd(mdp, features, config.master_seed)
            seconds = time.perf_counter() - start
            results.append(MethodResult("random", None, evd_value, 0, True, seconds))
            continue
        else:
            raise ConfigError(f"unknown method {method!r}")
        evd_value = candidate_evd(weights, mdp, features)
        seconds = time.perf_counter() - start
        results.append(
            MethodResult(method, weights, evd_value, n_iterations, converged, seconds)
        )
        save_weights(out / f"{method}_weights.txt", weights)
        reward = features @ weights
        write_grid_csv(out / f"{method}_reward.csv", reward, instance.grid_size)
        write_grid_csv(
            out / f"{method}_value.csv",
            value_iteration(mdp.with_reward(reward))[0],
            instance.grid_size,
        )

    write_csv(
        out / "recovery_results.csv",
        ["method", "evd", "n_iterations", "converged"],
        [(r.method, r.evd, r.n_iterations, r.converged) for r in results],
    )
    write_csv(
        out / "timings.csv",
        ["method", "wall_seconds"],
        [(r.method, r.seconds) for r in results],
    )
    return RecoveryOutcome(tuple(results), recovered_gmm, mcem_result)


# --------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class SweepCell:
    axis: str
    value: float
    rep: int
    demo_seed: int
    mcem_seed: int
    evd: float
    n_iterations: int
    converged: bool
    status: str
    seconds: float


def cell_seeds(master_seed: int, axis_idx: int, value_idx: int, rep: int):
    """Derive the (demo, mcem) seed pair for one sweep cell."""
    sequence = np.random.SeedSequence(
        master_seed, spawn_key=(axis_idx, value_idx, rep)
    )
    state = sequence.generate_state(2)
    return int(state[0]), int(state[1])


def run_sweep(
    config: ExperimentConfig, out_dir, full_scale: bool = False
) -> tuple[SweepCell, ...]:
    """One-axis-at-a-time sensitivity sweep with replications.

    Each cell reruns the full two-stage loop on fresh demos; a cell that
    raises is recorded with a failed status and the sweep continues.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    axes = FULL_SCALE_AXES if full_scale else config.sweep
    instance, mdp, features = build_world(config)
    axis_values = (
        ("n_demos", axes.demo_counts),
        ("epsilon_rep", axes.epsilon_reps),
        ("trajectory_length", axes.trajectory_lengths),
    )
    cells: list[SweepCell] = []
    for axis_idx, (axis, values) in enumerate(axis_values):
        for value_idx, value in enumerate(values):
            for rep in range(axes.replications):
                demo_seed, mcem_seed = cell_seeds(
                    config.master_seed, axis_idx, value_idx, rep
                )
                n_demos = value if axis == "n_demos" else config.demos.n_demos
                length = (
                    value if axis == "trajectory_length"
                    else config.demos.trajectory_length
                )
                epsilon = (
                    value if axis == "epsilon_rep" else config.mcem.epsilon_rep
                )
                cell_config = replace(
                    config.mcem, seed=mcem_seed, epsilon_rep=epsilon
                )
                start = time.perf_counter()
                try:
                    demos = ow.generate_demos(instance, n_demos, length, demo_seed)
                    result = mcem.run(cell_config, demos, features, mdp)
                    weights = gm.mixture_mean(result.gmm)
                    cells.append(SweepCell(
                        axis, value, rep, demo_seed, mcem_seed,
                        candidate_evd(weights, mdp, features),
                        result.state.t, result.converged, "ok",
                        time.perf_counter() - start,
                    ))
                except Exception as exc:
                    cells.append(SweepCell(
                        axis, value, rep, demo_seed, mcem_seed,
                        float("nan"), 0, False,
                        f"failed:{type(exc).__name__}",
                        time.perf_counter() - start,
                    ))
    write_csv(
        out / "sweep_results.csv",
        ["axis", "value", "rep", "demo_seed", "mcem_seed", "evd",
         "n_iterations", "converged", "status"],
        [
            (c.axis, c.value, c.rep, c.demo_seed, c.mcem_seed, c.evd,
             c.n_iterations, c.converged, c.status)
            for c in cells
        ],
    )
    write_csv(
        out / "timings.csv",
        ["axis", "value", "rep", "wall_seconds"],
        [(c.axis, c.value, c.rep, c.seconds) for c in cells],
    )
    write_csv(
        out / "sweep_summary.csv",
        ["axis", "value", "mean_evd", "stderr_evd", "n_ok"],
        summarize_sweep(cells),
    )
    return tuple(cells)


def summarize_sweep(cells) -> list[tuple]:
    """Mean and standard error of the EVD per (axis, value), failed cells
    dropped."""
    rows = []
    seen = []
    for cell in cells:
        key = (cell.axis, cell.value)
        if key not in seen:
            seen.append(key)
    for axis, value in seen:
        values = [
            c.evd for c in cells
            if (c.axis, c.value) == (axis, value) and c.status == "ok"
        ]
        if values:
            mean = float(np.mean(values))
            stderr = (
                float(np.std(values, ddof=1) / np.sqrt(len(values)))
                if len(values) > 1 else 0.0
            )
        else:
            mean, stderr = float("nan"), float("nan")
        rows.append((axis, value, mean, stderr, len(values)))
    return rows


# ------------------------------------------------------------ robustness


def run_robustness(
    config: ExperimentConfig, gmm: "gm.Gmm", out_dir
) -> SolutionSet:
    """Draw a diverse solution set from a recovered mixture and write it
    with its admission record."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _, mdp, features = build_world(config)
    settings = config.robustness
    solution = generate_solution_set(
        gmm, settings.n, settings.delta, settings.epsilon_evd, mdp, features,
        seed=settings.seed,
        max_draws=settings.max_draws if settings.max_draws > 0 else None,
    )
    rows = []
    for i in range(solution.n_found):
        rows.append((i, solution.evds[i],
                     *[float(x) for x in solution.members[i]]))
    n_dims = features.shape[1]
    write_csv(
        out / "solution_set.csv",
        ["member", "evd", *[f"w{j}" for j in range(n_dims)]],
        rows,
    )
    write_csv(
        out / "solution_set_meta.csv",
        ["n_requested", "n_found", "delta", "epsilon_evd", "complete", "n_draws"],
        [(settings.n, solution.n_found, solution.delta,
          solution.epsilon_evd, solution.complete, solution.n_draws)],
    )
    return solution
