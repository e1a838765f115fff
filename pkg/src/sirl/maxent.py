"""Maximum-entropy IRL on linear state rewards.

The demo log-likelihood of a weight vector w is

    L(w) = sum over demo pairs (s, a) of log pi_w(a | s),

where pi_w is the infinite-horizon soft policy of the reward ``features @ w``
(see :func:`sirl.mdp.soft_value_iteration`). ``gradient`` returns the exact
derivative of L: with G = dV/dw solving G = Phi + discount * P_pi G, the
chain rule gives

    dL = sum_pairs phi(s) + b^T G,   b[s'] = discount * q[s'] - c[s'],

where c counts demo-pair states and q their expected one-step successors.
The second term is evaluated through the adjoint system
(I - discount * P_pi^T) rho = b as dL = sum_pairs phi(s) + rho @ features.

Ascent steps are normalized by the number of demo trajectories so that the
learning rate is insensitive to demo count.

The batched functions at the bottom run many independent learning tasks
against the same dynamics at once; the per-task results match the single-task
entry points and all functions here are pure, so concurrent calls are safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .exceptions import ConvergenceError, NumericalError
from .mdp import MAX_SWEEPS, TabularMdp, policy_matrix
from .objectworld import DemoSet

DEFAULT_TOL = 1e-9
# Tasks per batched linear-algebra block; bounds the (chunk, S, S) workspaces.
CHUNK = 256


def reward_from_weights(weights: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Linear state reward ``features @ weights`` with shape validation."""
    weights = np.asarray(weights, dtype=np.float64)
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {features.shape}")
    if weights.shape != (features.shape[1],):
        raise ValueError(
            f"weights must have shape ({features.shape[1]},), got {weights.shape}"
        )
    return features @ weights


def expected_svf(
    mdp: TabularMdp,
    policy: np.ndarray,
    start_counts: np.ndarray,
    horizon: int,
) -> np.ndarray:
    """Expected state-visitation frequencies of a policy over a finite horizon.

    D_0 is the normalized start distribution and
    D_{t+1}[s'] = sum_{s,a} D_t[s] pi(a|s) T[s,a,s']; the result is the sum
    of D_0 .. D_{horizon-1} and so carries total mass equal to the horizon.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    start_counts = np.asarray(start_counts, dtype=np.float64)
    if start_counts.shape != (mdp.n_states,):
        raise ValueError(f"start_counts must have shape ({mdp.n_states},)")
    if np.any(start_counts < 0) or start_counts.sum() <= 0:
        raise ValueError("start_counts must be non-negative with positive total")
    matrix = policy_matrix(mdp, policy)
    flat_transition = mdp.transition.reshape(-1, mdp.n_states)
    current = start_counts / start_counts.sum()
    total = current.copy()
    for _ in range(horizon - 1):
        current = (current[:, None] * matrix).reshape(-1) @ flat_transition
        total += current
    return total


@dataclass(frozen=True)
class AscentTrace:
    """Record of one gradient-ascent run.

    ``log_likelihoods[j]`` is the demo log-likelihood after step j + 1, so the
    trace has exactly ``m`` entries; ``initial_ll`` is the log-likelihood of
    the starting weights.
    """

    initial: np.ndarray
    final: np.ndarray
    log_likelihoods: np.ndarray
    initial_ll: float


def log_likelihood(
    demos: DemoSet,
    weights: np.ndarray,
    features: np.ndarray,
    mdp: TabularMdp,
    tol: float = DEFAULT_TOL,
) -> float:
    """Sum of log soft-policy probabilities of the demonstrated actions."""
    stats = batch_stats(demos.states[None], demos.actions[None], features, mdp.transition)
    weights = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    rewards = weights @ features.T
    _, _, log_pi = soft_solve_batch(rewards, mdp.transition, mdp.discount, None, tol)
    return float(_gather_ll(log_pi, stats)[0])


def gradient(
    demos: DemoSet,
    weights: np.ndarray,
    features: np.ndarray,
    mdp: TabularMdp,
    tol: float = DEFAULT_TOL,
) -> np.ndarray:
    """Exact gradient of :func:`log_likelihood` with respect to the weights."""
    stats = batch_stats(demos.states[None], demos.actions[None], features, mdp.transition)
    weights = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    rewards = weights @ features.T
    _, _, log_pi = soft_solve_batch(rewards, mdp.transition, mdp.discount, None, tol)
    return _batch_gradient(log_pi, stats, features, mdp.transition, mdp.discount)[0]


def ascend(
    initial: np.ndarray,
    demos: DemoSet,
    features: np.ndarray,
    mdp: TabularMdp,
    m: int,
    lr: float,
    tol: float = DEFAULT_TOL,
) -> AscentTrace:
    """Run m constant-step gradient-ascent updates from the given weights."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if lr < 0:
        raise ValueError("lr must be >= 0")
    initial = np.asarray(initial, dtype=np.float64)
    stats = batch_stats(demos.states[None], demos.actions[None], features, mdp.transition)
    final, initial_ll, lls = ascend_batch(
        initial[None], stats, features, mdp.transition, mdp.discount, m, lr, tol
    )
    return AscentTrace(initial, final[0], lls[0], float(initial_ll[0]))


def maxent_baseline(
    demos: DemoSet,
    features: np.ndarray,
    mdp: TabularMdp,
    epochs: int = 20,
    lr: float = 0.01,
    seed: int = 0,
) -> np.ndarray:
    """Point-estimate weights: gradient ascent from a seeded uniform init.

    Initial weights are uniform in [-1, 1] per coordinate.
    """
    rng = np.random.default_rng(seed)
    initial = rng.uniform(-1.0, 1.0, size=features.shape[1])
    return ascend(initial, demos, features, mdp, epochs, lr).final


# ---------------------------------------------------------------------------
# Batched engine. Tasks are independent recovery problems sharing one MDP;
# arrays carry a leading task axis and results are row-wise identical to the
# single-task entry points above.


@dataclass(frozen=True)
class BatchStats:
    """Per-task demo statistics consumed by the ascent engine.

    feat_counts[i] sums features over task i's demo pairs, state_counts[i]
    histograms their states, succ_counts[i] holds the expected one-step
    successor mass of the pairs, and pair_states/pair_actions index the raw
    pairs for likelihood gathers. n_traj is the (shared) trajectory count.
    """

    feat_counts: np.ndarray
    state_counts: np.ndarray
    succ_counts: np.ndarray
    pair_states: np.ndarray
    pair_actions: np.ndarray
    n_traj: int


def batch_stats(
    states: np.ndarray,
    actions: np.ndarray,
    features: np.ndarray,
    transition: np.ndarray,
) -> BatchStats:
    """Precompute demo statistics for a batch of tasks.

    Args:
        states, actions: int arrays (n_tasks, n_traj, length).
        features: (S, d) feature matrix.
        transition: (S, A, S) shared dynamics.
    """
    states = np.asarray(states)
    actions = np.asarray(actions)
    if states.ndim != 3 or states.shape != actions.shape:
        raise ValueError("states and actions must be matching (tasks, traj, length) arrays")
    n_states, n_actions = transition.shape[0], transition.shape[1]
    if features.shape[0] != n_states:
        raise ValueError("features row count must match the state count")
    n_tasks = states.shape[0]
    pair_states = states.reshape(n_tasks, -1)
    pair_actions = actions.reshape(n_tasks, -1)
    feat_counts = features[pair_states].sum(axis=1)
    rows = np.broadcast_to(np.arange(n_tasks)[:, None], pair_states.shape)
    state_counts = np.zeros((n_tasks, n_states))
    np.add.at(state_counts, (rows, pair_states), 1.0)
    sa_counts = np.zeros((n_tasks, n_states * n_actions))
    np.add.at(sa_counts, (rows, pair_states * n_actions + pair_actions), 1.0)
    succ_counts = sa_counts @ transition.reshape(-1, n_states)
    return BatchStats(
        feat_counts, state_counts, succ_counts, pair_states, pair_actions, states.shape[1]
    )


def soft_solve_batch(
    rewards: np.ndarray,
    transition: np.ndarray,
    discount: float,
    values: np.ndarray | None,
    tol: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Solve the soft control fixed point for a batch of rewards.

    Policy-iteration acceleration of the logsumexp backup: alternately take
    the softmax policy of the current Q and solve the entropy-augmented
    linear evaluation system exactly. Converges to the same fixed point as
    the sweep form in :func:`sirl.mdp.soft_value_iteration` but in a handful
    of linear solves, which is what makes large task batches affordable.

    Args:
        rewards: (n_tasks, S) state rewards.
        values: warm-start values (n_tasks, S) or None for zeros.

    Returns:
        (values, q, log_pi) with shapes (n, S), (n, S, A), (n, S, A); the
        returned values satisfy the logsumexp fixed point within tol.
    """
    n_tasks, n_states = rewards.shape
    n_actions = transition.shape[1]
    flat_transition = transition.reshape(-1, n_states)
    if values is None:
        values = np.zeros((n_tasks, n_states))
    eye = np.eye(n_states)
    for _ in range(MAX_SWEEPS):
        q = rewards[:, :, None] + discount * (values @ flat_transition.T).reshape(
            n_tasks, n_states, n_actions
        )
        lse = logsumexp(q, axis=2)
        if not np.all(np.isfinite(lse)):
            raise NumericalError("soft solve produced non-finite values")
        if np.max(np.abs(lse - values)) <= tol:
            return lse, q, q - lse[:, :, None]
        log_pi = q - lse[:, :, None]
        pi = np.exp(log_pi)
        entropy = lse - (pi * q).sum(axis=2)
        p_pi = np.einsum("nsa,sap->nsp", pi, transition)
        values = np.linalg.solve(eye - discount * p_pi, (rewards + entropy)[:, :, None])[
            :, :, 0
        ]
    raise ConvergenceError(f"soft solve did not converge in {MAX_SWEEPS} iterations")


def _gather_ll(log_pi: np.ndarray, stats: BatchStats) -> np.ndarray:
    rows = np.arange(log_pi.shape[0])[:, None]
    return log_pi[rows, stats.pair_states, stats.pair_actions].sum(axis=1)


def _batch_gradient(
    log_pi: np.ndarray,
    stats: BatchStats,
    features: np.ndarray,
    transition: np.ndarray,
    discount: float,
) -> np.ndarray:
    """Exact per-task likelihood gradients given the converged soft policy."""
    pi = np.exp(log_pi)
    p_pi = np.einsum("nsa,sap->nsp", pi, transition)
    b = discount * stats.succ_counts - stats.state_counts
    eye = np.eye(transition.shape[0])
    system = (eye - discount * p_pi).transpose(0, 2, 1)
    rho = np.linalg.solve(system, b[:, :, None])[:, :, 0]
    return stats.feat_counts + rho @ features


def ascend_batch(
    initial: np.ndarray,
    stats: BatchStats,
    features: np.ndarray,
    transition: np.ndarray,
    discount: float,
    m: int,
    lr: float,
    tol: float = DEFAULT_TOL,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradient-ascend every task in the batch for m steps.

    Returns:
        (final_weights, initial_ll, log_likelihoods) with shapes
        (n_tasks, d), (n_tasks,), (n_tasks, m).
    """
    initial = np.asarray(initial, dtype=np.float64)
    n_tasks = initial.shape[0]
    finals = np.empty_like(initial)
    initial_ll = np.empty(n_tasks)
    traces = np.empty((n_tasks, m))
    for lo in range(0, n_tasks, CHUNK):
        hi = min(lo + CHUNK, n_tasks)
        chunk = BatchStats(
            stats.feat_counts[lo:hi],
            stats.state_counts[lo:hi],
            stats.succ_counts[lo:hi],
            stats.pair_states[lo:hi],
            stats.pair_actions[lo:hi],
            stats.n_traj,
        )
        finals[lo:hi], initial_ll[lo:hi], traces[lo:hi] = _ascend_chunk(
            initial[lo:hi], chunk, features, transition, discount, m, lr, tol
        )
    return finals, initial_ll, traces


def _ascend_chunk(weights, stats, features, transition, discount, m, lr, tol):
    weights = weights.copy()
    step_norm = lr / stats.n_traj
    values = None
    initial_ll = None
    traces = np.empty((weights.shape[0], m))
    for step in range(m + 1):
        rewards = weights @ features.T
        values, _, log_pi = soft_solve_batch(rewards, transition, discount, values, tol)
        ll = _gather_ll(log_pi, stats)
        if not np.all(np.isfinite(ll)):
            raise NumericalError(f"non-finite log-likelihood at ascent step {step}")
        if step == 0:
            initial_ll = ll
        else:
            traces[:, step - 1] = ll
        if step == m:
            break
        grad = _batch_gradient(log_pi, stats, features, transition, discount)
        weights = weights + step_norm * grad
        if not np.all(np.isfinite(weights)):
            raise NumericalError(f"non-finite weights after ascent step {step + 1}")
    return weights, initial_ll, traces
