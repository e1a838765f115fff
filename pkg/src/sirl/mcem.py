"""Two-stage Monte Carlo EM over reward-weight distributions.

Each outer iteration t holds a mixture estimate Theta2 over weight space and

1. draws N_t starting weights from Theta2, one per learning task,
2. gives every task its own random demo subset (a fraction epsilon_rep of
   the demo set, without replacement) and runs m normalized gradient-ascent
   steps on the demo likelihood, yielding the weight cloud Theta1,
3. refits the mixture on Theta1, warm-started at the previous Theta2,
4. grows the sample size, N_{t+1} = ceil(growth * N_t) with growth > 1 so
   that sum_t 1/N_t stays finite,
5. records the relative change of Theta2 (components in canonical order,
   parameters flattened, coordinatewise |new - old| / (|new| + delta)).

The loop terminates once the last three recorded changes all fall below
epsilon_mcem, or is flagged non-converged at max_outer_iters.

Every random draw comes from a stream keyed by (seed, namespace, t, task),
so results are independent of execution order, identical under resume from
a checkpoint, and reproducible bit for bit on one machine.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError
from .gmm import FitResult, Gmm, fit, sample, sort_components
from .maxent import DEFAULT_TOL, ascend_batch, batch_stats
from .mdp import TabularMdp
from .objectworld import DemoSet

# Spawn-key namespaces for the keyed random streams.
_NS_INIT = 0
_NS_TASK = 1
_NS_FIT = 2


@dataclass(frozen=True)
class McemConfig:
    """Hyperparameters of the outer loop; defaults follow the reference
    experiment settings."""

    seed: int = 0
    n_components: int = 3
    epsilon_rep: float = 0.95
    n0: int = 10
    growth: float = 2.0
    m: int = 20
    lr: float = 0.01
    delta_mcem: float = 1e-3
    epsilon_mcem: float = 5e-2
    max_outer_iters: int = 15
    gmm_max_iter: int = 1000
    gmm_tol: float = 1e-6
    solver_tol: float = DEFAULT_TOL

    def __post_init__(self):
        if self.n_components < 1:
            raise ConfigError("n_components must be >= 1")
        if not 0.0 < self.epsilon_rep <= 1.0:
            raise ConfigError("epsilon_rep must lie in (0, 1]")
        if self.n0 < self.n_components:
            raise ConfigError("n0 must be at least n_components")
        if self.growth <= 1.0:
            raise ConfigError("growth must exceed 1 so sample sizes are summable")
        if self.m < 0:
            raise ConfigError("m must be >= 0")
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")
        if self.delta_mcem <= 0 or self.epsilon_mcem <= 0:
            raise ConfigError("delta_mcem and epsilon_mcem must be positive")
        if self.max_outer_iters < 1:
            raise ConfigError("max_outer_iters must be >= 1")
        if self.gmm_max_iter < 1:
            raise ConfigError("gmm_max_iter must be >= 1")


@dataclass(frozen=True)
class McemState:
    """Loop state after t completed iterations.

    theta1 holds the most recent m-step weight cloud (n_used, d); n_t is the
    sample size the next iteration will use; termination_history collects
    the per-iteration relative-change statistics.
    """

    theta1: np.ndarray
    theta2: Gmm
    t: int
    n_t: int
    termination_history: tuple[float, ...]


@dataclass(frozen=True)
class IterationRecord:
    """One row of the iteration log."""

    t: int
    n_tasks: int
    theta2_change: float
    mean_ll_gain: float
    seconds: float


@dataclass(frozen=True)
class RunResult:
    gmm: Gmm
    records: tuple[IterationRecord, ...]
    converged: bool
    state: McemState


def subset_size(n_demos: int, epsilon_rep: float) -> int:
    """ceil(epsilon_rep * n_demos), guarded against float fuzz so that e.g.
    0.95 * 20 counts as exactly 19."""
    return max(1, int(math.ceil(round(epsilon_rep * n_demos, 9))))


def sample_trajectory_set(
    demos: DemoSet, epsilon_rep: float, seed: "int | np.random.Generator"
) -> np.ndarray:
    """Sorted distinct demo indices, uniform without replacement."""
    if not 0.0 < epsilon_rep <= 1.0:
        raise ValueError("epsilon_rep must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    k = subset_size(demos.n_demos, epsilon_rep)
    return np.sort(rng.choice(demos.n_demos, size=k, replace=False))


def _task_rng(config: McemConfig, t: int, task: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(_NS_TASK, t, task)))


def initial_state(config: McemConfig, n_dims: int) -> McemState:
    """Random starting profile: component means uniform in [-1, 1] per
    coordinate, unit variances, uniform mixing."""
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(_NS_INIT,)))
    theta2 = Gmm(
        np.full(config.n_components, 1.0 / config.n_components),
        rng.uniform(-1.0, 1.0, size=(config.n_components, n_dims)),
        np.ones((config.n_components, n_dims)),
    )
    return McemState(np.zeros((0, n_dims)), theta2, 0, config.n0, ())


def _flatten(gmm: Gmm) -> np.ndarray:
    ordered = sort_components(gmm)
    return np.concatenate([ordered.mixing, ordered.means.ravel(), ordered.covariances.ravel()])


def relative_change(new: Gmm, old: Gmm, delta: float) -> float:
    """Max coordinatewise |new - old| / (|new| + delta) over the flattened
    parameters, components sorted canonically on both sides."""
    a = _flatten(new)
    b = _flatten(old)
    if a.shape != b.shape:
        raise ValueError("mixtures must have matching shapes")
    return float(np.max(np.abs(a - b) / (np.abs(a) + delta)))


def termination_check(
    history: tuple[float, ...], delta_mcem: float, epsilon_mcem: float
) -> bool:
    """True once the last three recorded changes (already normalized with
    delta_mcem) are all below epsilon_mcem."""
    if len(history) < 3:
        return False
    return all(value < epsilon_mcem for value in list(history)[-3:])


def mcem_iteration(
    state: McemState,
    demos: DemoSet,
    features: np.ndarray,
    mdp: TabularMdp,
    config: McemConfig,
) -> tuple[McemState, IterationRecord]:
    """Run one outer iteration and return the new state with its log record."""
    if features.shape[0] != mdp.n_states:
        raise ValueError("features row count must match the state count")
    start_time = time.perf_counter()
    t = state.t + 1
    n_used = state.n_t
    n_dims = features.shape[1]
    k = subset_size(demos.n_demos, config.epsilon_rep)
    draws = np.empty((n_used, n_dims))
    subsets = np.empty((n_used, k), dtype=np.int64)
    for i in range(n_used):
        rng = _task_rng(config, t, i)
        draws[i] = sample(state.theta2, 1, rng)[0]
        subsets[i] = sample_trajectory_set(demos, config.epsilon_rep, rng)
    stats = batch_stats(
        demos.states[subsets], demos.actions[subsets], features, mdp.transition
    )
    finals, initial_ll, traces = ascend_batch(
        draws, stats, features, mdp.transition, mdp.discount,
        config.m, config.lr, config.solver_tol,
    )
    assert finals.shape[0] == n_used
    fit_rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(_NS_FIT, t)))
    result: FitResult = fit(
        finals,
        config.n_components,
        init=state.theta2,
        max_iter=config.gmm_max_iter,
        tol=config.gmm_tol,
        seed=fit_rng,
    )
    change = relative_change(result.gmm, state.theta2, config.delta_mcem)
    mean_gain = float(np.mean(traces[:, -1] - initial_ll)) if config.m > 0 else 0.0
    next_n = max(n_used + 1, int(math.ceil(config.growth * n_used)))
    new_state = McemState(
        finals, result.gmm, t, next_n, state.termination_history + (change,)
    )
    record = IterationRecord(
        t, n_used, change, mean_gain, time.perf_counter() - start_time
    )
    return new_state, record


def run(
    config: McemConfig,
    demos: DemoSet,
    features: np.ndarray,
    mdp: TabularMdp,
    checkpoint_path=None,
    initial: McemState | None = None,
) -> RunResult:
    """Iterate to termination or max_outer_iters.

    Pass ``initial`` to resume from a checkpointed state; keyed random
    streams make the resumed run identical to an uninterrupted one.
    """
    state = initial if initial is not None else initial_state(config, features.shape[1])
    records: list[IterationRecord] = []
    converged = termination_check(
        state.termination_history, config.delta_mcem, config.epsilon_mcem
    )
    while not converged and state.t < config.max_outer_iters:
        state, record = mcem_iteration(state, demos, features, mdp, config)
        records.append(record)
        if checkpoint_path is not None:
            save_state(checkpoint_path, state)
        converged = termination_check(
            state.termination_history, config.delta_mcem, config.epsilon_mcem
        )
    return RunResult(state.theta2, tuple(records), converged, state)


def save_state(path, state: McemState) -> None:
    """JSON checkpoint of the full loop state; floats round-trip exactly."""
    payload = {
        "t": state.t,
        "n_t": state.n_t,
        "theta1": state.theta1.tolist(),
        "theta2": {
            "mixing": state.theta2.mixing.tolist(),
            "means": state.theta2.means.tolist(),
            "covariances": state.theta2.covariances.tolist(),
        },
        "termination_history": list(state.termination_history),
    }
    with open(path, "w", newline="\n") as handle:
        json.dump(payload, handle)
        handle.write("\n")


def load_state(path) -> McemState:
    with open(path) as handle:
        payload = json.load(handle)
    theta2 = Gmm(
        np.array(payload["theta2"]["mixing"]),
        np.array(payload["theta2"]["means"]),
        np.array(payload["theta2"]["covariances"]),
    )
    theta1 = np.array(payload["theta1"], dtype=np.float64).reshape(-1, theta2.n_dims)
    return McemState(
        theta1,
        theta2,
        int(payload["t"]),
        int(payload["n_t"]),
        tuple(float(x) for x in payload["termination_history"]),
    )
