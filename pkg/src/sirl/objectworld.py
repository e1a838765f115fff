"""Objectworld grid environments.

An N x N grid populated with colored objects. Each object carries an inner
and an outer color; rewards and features are defined by proximity to objects
of given outer/inner colors:

* reward +1 where the nearest outer-red object is within 3 steps (L1) and
  the nearest outer-blue object is within 2 steps,
* reward -1 where only the outer-red condition holds,
* reward 0 elsewhere.

Color 0 is red, color 1 is blue. Movement offers five actions (up, down,
left, right, stay); with probability ``wind`` the realized move is one of the
five chosen uniformly at random. Moving off the grid leaves the agent in
place. Feature distances are Euclidean; the reward's step distances are L1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mdp import TabularMdp, value_iteration

N_ACTIONS = 5
# Row/col deltas for up, down, left, right, stay; state index = row * N + col.
ACTION_DELTAS = ((-1, 0), (1, 0), (0, -1), (0, 1), (0, 0))

RED = 0
BLUE = 1
RED_RADIUS = 3
BLUE_RADIUS = 2


@dataclass(frozen=True)
class ObjectworldInstance:
    """A concrete sampled objectworld.

    Attributes:
        grid_size: side length N of the grid.
        n_colors: number of object colors C (>= 2).
        wind: probability of a uniformly random move.
        discount: MDP discount factor.
        seed: seed the instance was generated from (recorded for provenance).
        objects: int array (n_objects, 3) of rows (cell, inner, outer).
    """

    grid_size: int
    n_colors: int
    wind: float
    discount: float
    seed: int
    objects: np.ndarray

    def __post_init__(self):
        objects = np.asarray(self.objects, dtype=np.int64).reshape(-1, 3)
        object.__setattr__(self, "objects", objects)
        if self.grid_size < 1:
            raise ValueError("grid_size must be >= 1")
        if self.n_colors < 2:
            raise ValueError("n_colors must be >= 2")
        if not 0.0 <= self.wind <= 1.0:
            raise ValueError("wind must lie in [0, 1]")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        n_cells = self.grid_size**2
        if objects.shape[0] > n_cells:
            raise ValueError("more objects than grid cells")
        if objects.shape[0]:
            if objects[:, 0].min() < 0 or objects[:, 0].max() >= n_cells:
                raise ValueError("object cell index out of range")
            if len(np.unique(objects[:, 0])) != objects.shape[0]:
                raise ValueError("objects must occupy distinct cells")
            if objects[:, 1:].min() < 0 or objects[:, 1:].max() >= self.n_colors:
                raise ValueError("object color out of range")

    @property
    def n_states(self) -> int:
        return self.grid_size**2

    @property
    def n_objects(self) -> int:
        return self.objects.shape[0]


def generate(
    grid_size: int = 10,
    n_objects: int = 25,
    n_colors: int = 2,
    wind: float = 0.3,
    discount: float = 0.9,
    seed: int = 0,
) -> ObjectworldInstance:
    """Sample an instance: object cells without replacement, colors uniform."""
    if n_objects > grid_size**2:
        raise ValueError("n_objects cannot exceed the number of grid cells")
    rng = np.random.default_rng(seed)
    cells = rng.choice(grid_size**2, size=n_objects, replace=False)
    inner = rng.integers(0, n_colors, size=n_objects)
    outer = rng.integers(0, n_colors, size=n_objects)
    objects = np.stack([cells, inner, outer], axis=1)
    return ObjectworldInstance(grid_size, n_colors, wind, discount, seed, objects)


def _coords(grid_size: int) -> np.ndarray:
    """(N^2, 2) array of (row, col) for each state index."""
    rows, cols = np.divmod(np.arange(grid_size**2), grid_size)
    return np.stack([rows, cols], axis=1)


def _move_table(grid_size: int) -> np.ndarray:
    """(N^2, 5) intended successor per state and action; off-grid stays put."""
    coords = _coords(grid_size)
    table = np.empty((grid_size**2, N_ACTIONS), dtype=np.int64)
    for a, (dr, dc) in enumerate(ACTION_DELTAS):
        rows = coords[:, 0] + dr
        cols = coords[:, 1] + dc
        valid = (rows >= 0) & (rows < grid_size) & (cols >= 0) & (cols < grid_size)
        targets = np.where(valid, rows * grid_size + cols, np.arange(grid_size**2))
        table[:, a] = targets
    return table


def transition_model(instance: ObjectworldInstance) -> np.ndarray:
    """Dense (S, 5, S) transition tensor for the windy grid dynamics."""
    n_states = instance.n_states
    moves = _move_table(instance.grid_size)
    transition = np.zeros((n_states, N_ACTIONS, n_states))
    states = np.arange(n_states)
    noise = instance.wind / N_ACTIONS
    for a in range(N_ACTIONS):
        np.add.at(transition, (states, a, moves[:, a]), 1.0 - instance.wind)
        for other in range(N_ACTIONS):
            np.add.at(transition, (states, a, moves[:, other]), noise)
    return transition


def _class_distances(instance: ObjectworldInstance, column: int, color: int) -> np.ndarray:
    """Euclidean distance from every state to the nearest object whose
    inner (column 1) or outer (column 2) color equals ``color``."""
    cells = instance.objects[instance.objects[:, column] == color, 0]
    if cells.size == 0:
        return np.full(instance.n_states, instance.grid_size * math.sqrt(2.0))
    coords = _coords(instance.grid_size)
    deltas = coords[:, None, :] - coords[cells][None, :, :]
    return np.sqrt((deltas.astype(np.float64) ** 2).sum(axis=2)).min(axis=1)


def _l1_class_distances(instance: ObjectworldInstance, color: int) -> np.ndarray:
    """L1 distance from every state to the nearest object with outer color."""
    cells = instance.objects[instance.objects[:, 2] == color, 0]
    if cells.size == 0:
        return np.full(instance.n_states, np.inf)
    coords = _coords(instance.grid_size)
    deltas = np.abs(coords[:, None, :] - coords[cells][None, :, :])
    return deltas.sum(axis=2).min(axis=1).astype(np.float64)


def true_reward(instance: ObjectworldInstance) -> np.ndarray:
    """State rewards in {-1, 0, +1} from outer-red / outer-blue proximity."""
    red = _l1_class_distances(instance, RED)
    blue = _l1_class_distances(instance, BLUE)
    reward = np.zeros(instance.n_states)
    near_red = red <= RED_RADIUS
    reward[near_red] = -1.0
    reward[near_red & (blue <= BLUE_RADIUS)] = 1.0
    return reward


def features_continuous(instance: ObjectworldInstance) -> np.ndarray:
    """(S, 2C) matrix of Euclidean distances to the nearest inner- and
    outer-colored object, ordered (inner 0, outer 0, inner 1, outer 1, ...).

    A color class with no objects contributes the sentinel N * sqrt(2),
    larger than any realizable on-grid distance.
    """
    columns = []
    for color in range(instance.n_colors):
        columns.append(_class_distances(instance, 1, color))
        columns.append(_class_distances(instance, 2, color))
    return np.stack(columns, axis=1)


def features_discrete(instance: ObjectworldInstance) -> np.ndarray:
    """(S, 2C*N) binary thresholding of the continuous features.

    Each continuous column expands to N bits; bit d (d = 1..N) is 1 when the
    distance is strictly below d.
    """
    continuous = features_continuous(instance)
    thresholds = np.arange(1, instance.grid_size + 1)
    bits = continuous[:, :, None] < thresholds[None, None, :]
    return bits.reshape(instance.n_states, -1).astype(np.float64)


def build_mdp(instance: ObjectworldInstance, reward: np.ndarray | None = None) -> TabularMdp:
    """TabularMdp with the instance dynamics; defaults to the true reward."""
    if reward is None:
        reward = true_reward(instance)
    return TabularMdp(transition_model(instance), reward, instance.discount)


@dataclass(frozen=True)
class DemoSet:
    """Expert demonstrations as parallel (n_demos, length) state/action arrays."""

    states: np.ndarray
    actions: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.int64)
        actions = np.asarray(self.actions, dtype=np.int64)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)
        if states.ndim != 2 or states.shape != actions.shape:
            raise ValueError("states and actions must be matching 2-D arrays")

    @property
    def n_demos(self) -> int:
        return self.states.shape[0]

    @property
    def trajectory_length(self) -> int:
        return self.states.shape[1]

    def subset(self, indices: np.ndarray) -> "DemoSet":
        return DemoSet(self.states[indices], self.actions[indices])

    def start_counts(self, n_states: int) -> np.ndarray:
        """Histogram of first states, used as the start distribution estimate."""
        return np.bincount(self.states[:, 0], minlength=n_states).astype(np.float64)


def generate_demos(
    instance: ObjectworldInstance,
    n_demos: int,
    trajectory_length: int,
    seed: int,
) -> DemoSet:
    """Roll out the optimal deterministic policy from uniform start states.

    The expert follows hard value iteration on the true reward; transitions
    are sampled from the windy dynamics. Pairs (s_t, a_t) are recorded for
    t = 0..length-1.
    """
    if n_demos < 1 or trajectory_length < 1:
        raise ValueError("n_demos and trajectory_length must be >= 1")
    mdp = build_mdp(instance)
    _, policy = value_iteration(mdp)
    cum_transition = np.cumsum(mdp.transition, axis=2)
    rng = np.random.default_rng(seed)
    states = np.empty((n_demos, trajectory_length), dtype=np.int64)
    actions = np.empty((n_demos, trajectory_length), dtype=np.int64)
    current = rng.integers(0, instance.n_states, size=n_demos)
    for t in range(trajectory_length):
        states[:, t] = current
        actions[:, t] = policy[current]
        rows = cum_transition[current, actions[:, t]]
        current = (rows < rng.random((n_demos, 1))).sum(axis=1)
    return DemoSet(states, actions)


def save_instance(path, instance: ObjectworldInstance) -> None:
    """Write the plain-text instance format.

    Header line: grid_size n_colors wind discount seed. One line per object:
    cell inner outer.
    """
    lines = [
        f"{int(instance.grid_size)} {int(instance.n_colors)} {float(instance.wind)!r} "
        f"{float(instance.discount)!r} {int(instance.seed)}"
    ]
    for cell, inner, outer in instance.objects:
        lines.append(f"{int(cell)} {int(inner)} {int(outer)}")
    with open(path, "w", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")


def load_instance(path) -> ObjectworldInstance:
    """Parse the format written by save_instance."""
    with open(path) as handle:
        lines = [line.strip() for line in handle if line.strip()]
    if not lines:
        raise ValueError(f"empty instance file: {path}")
    header = lines[0].split()
    if len(header) != 5:
        raise ValueError(f"instance header must have 5 fields, got {len(header)}")
    grid_size, n_colors = int(header[0]), int(header[1])
    wind, discount = float(header[2]), float(header[3])
    seed = int(header[4])
    objects = np.array([[int(x) for x in line.split()] for line in lines[1:]], dtype=np.int64)
    objects = objects.reshape(-1, 3)
    return ObjectworldInstance(grid_size, n_colors, wind, discount, seed, objects)
