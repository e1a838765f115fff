"""Tabular MDPs and the dynamic-programming routines built on them.

Conventions used throughout the package:

* A state-only reward ``r[s]`` is earned in the state where the agent
  currently is, so every value recursion has the form
  ``V(s) = r(s) + discount * E[V(s')]``.
* Deterministic policies are integer arrays of shape ``(n_states,)`` mapping
  states to action indices; stochastic policies are row-stochastic arrays of
  shape ``(n_states, n_actions)``.
* Greedy argmax ties resolve to the lowest action index.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from .exceptions import ConvergenceError, NumericalError

# Iteration cap shared by all fixed-point loops in this module.
MAX_SWEEPS = 10_000


@dataclass(frozen=True)
class TabularMdp:
    """Finite MDP with dense transitions and a state-only reward.

    Attributes:
        transition: array (n_states, n_actions, n_states); transition[s, a, s']
            is the probability of landing in s' after taking a in s.
        reward: array (n_states,) of finite rewards.
        discount: discount factor in [0, 1).
    """

    transition: np.ndarray
    reward: np.ndarray
    discount: float

    def __post_init__(self):
        transition = np.asarray(self.transition, dtype=np.float64)
        reward = np.asarray(self.reward, dtype=np.float64)
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "reward", reward)
        if transition.ndim != 3 or transition.shape[0] != transition.shape[2]:
            raise ValueError(f"transition must be (S, A, S), got {transition.shape}")
        if reward.shape != (transition.shape[0],):
            raise ValueError(
                f"reward must have shape ({transition.shape[0]},), got {reward.shape}"
            )
        if not np.all(np.isfinite(transition)) or np.any(transition < 0):
            raise ValueError("transition entries must be finite and non-negative")
        row_sums = transition.sum(axis=2)
        if np.max(np.abs(row_sums - 1.0)) > 1e-9:
            raise ValueError("transition rows must sum to 1 within 1e-9")
        if not np.all(np.isfinite(reward)):
            raise ValueError("reward entries must be finite")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError(f"discount must lie in [0, 1), got {self.discount}")

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def with_reward(self, reward: np.ndarray) -> "TabularMdp":
        """Same dynamics and discount, different state reward."""
        return replace(self, reward=reward)


def uniform_start(n_states: int) -> np.ndarray:
    """Uniform distribution over states, the default start weighting."""
    return np.full(n_states, 1.0 / n_states)


def policy_matrix(mdp: TabularMdp, policy: np.ndarray) -> np.ndarray:
    """Validate a policy and return it as a row-stochastic (S, A) matrix."""
    policy = np.asarray(policy)
    if policy.ndim == 1:
        if policy.shape != (mdp.n_states,):
            raise ValueError(f"policy must have shape ({mdp.n_states},), got {policy.shape}")
        if policy.min() < 0 or policy.max() >= mdp.n_actions:
            raise ValueError("policy contains out-of-range action indices")
        matrix = np.zeros((mdp.n_states, mdp.n_actions))
        matrix[np.arange(mdp.n_states), policy.astype(int)] = 1.0
        return matrix
    if policy.ndim == 2:
        if policy.shape != (mdp.n_states, mdp.n_actions):
            raise ValueError(
                f"policy must have shape ({mdp.n_states}, {mdp.n_actions}), got {policy.shape}"
            )
        policy = policy.astype(np.float64)
        if np.any(policy < 0) or np.max(np.abs(policy.sum(axis=1) - 1.0)) > 1e-9:
            raise ValueError("stochastic policy rows must be non-negative and sum to 1")
        return policy
    raise ValueError("policy must be a 1-D action array or 2-D probability matrix")


def value_iteration(mdp: TabularMdp, tol: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Solve for the optimal values and a greedy deterministic policy.

    Sweeps ``V <- r + discount * max_a T V`` until the max-norm change drops
    below tol; the Bellman residual of the returned values is then at most
    tol as well.

    Returns:
        (values, policy) where values has shape (S,) and policy is an int
        array of shape (S,) with argmax ties resolved to the lowest index.
    """
    values = np.zeros(mdp.n_states)
    for _ in range(MAX_SWEEPS):
        q = mdp.reward[:, None] + mdp.discount * (mdp.transition @ values)
        new_values = q.max(axis=1)
        if np.max(np.abs(new_values - values)) <= tol:
            values = new_values
            break
        values = new_values
    else:
        raise ConvergenceError(f"value iteration did not converge in {MAX_SWEEPS} sweeps")
    q = mdp.reward[:, None] + mdp.discount * (mdp.transition @ values)
    if np.max(np.abs(q.max(axis=1) - values)) > tol:
        raise ConvergenceError("value iteration stopped with Bellman residual above tol")
    return values, np.argmax(q, axis=1)


def soft_value_iteration(mdp: TabularMdp, tol: float = 1e-4) -> np.ndarray:
    """Solve the entropy-regularized control problem for a stochastic policy.

    Sweeps ``V <- logsumexp_a Q`` with ``Q(s, a) = r(s) + discount * T[s, a] V``
    until the max-norm change drops below tol, then returns the policy
    ``pi(a | s) = exp(Q(s, a) - V(s))``.

    Returns:
        Row-stochastic policy array of shape (S, A).
    """
    values = np.zeros(mdp.n_states)
    for _ in range(MAX_SWEEPS):
        q = mdp.reward[:, None] + mdp.discount * (mdp.transition @ values)
        new_values = logsumexp(q, axis=1)
        if not np.all(np.isfinite(new_values)):
            raise NumericalError("soft value iteration produced non-finite values")
        if np.max(np.abs(new_values - values)) <= tol:
            values = new_values
            break
        values = new_values
    else:
        raise ConvergenceError(f"soft value iteration did not converge in {MAX_SWEEPS} sweeps")
    q = mdp.reward[:, None] + mdp.discount * (mdp.transition @ values)
    return np.exp(q - logsumexp(q, axis=1, keepdims=True))


def policy_evaluation(mdp: TabularMdp, policy: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Fixed-point values of a fixed policy under the MDP's reward.

    Accepts either policy representation. Sweeps ``V <- r + discount * P_pi V``
    until the max-norm change drops below tol.
    """
    matrix = policy_matrix(mdp, policy)
    # P_pi[s, s'] = sum_a pi(a | s) T[s, a, s']
    p_pi = np.einsum("sa,sap->sp", matrix, mdp.transition)
    values = np.zeros(mdp.n_states)
    for _ in range(MAX_SWEEPS):
        new_values = mdp.reward + mdp.discount * (p_pi @ values)
        if np.max(np.abs(new_values - values)) <= tol:
            return new_values
        values = new_values
    raise ConvergenceError(f"policy evaluation did not converge in {MAX_SWEEPS} sweeps")


def evd(
    true_mdp: TabularMdp,
    candidate_policy: np.ndarray,
    start_dist: np.ndarray | None = None,
    tol: float = 1e-9,
) -> float:
    """Expected value difference of a candidate policy under the true reward.

    Computes ``sum_s start_dist[s] * (V*(s) - V_pi(s))`` where V* comes from
    value iteration on the true MDP and V_pi from evaluating the candidate.
    Differences inside -2 * tol of zero are reported as 0.0; anything more
    negative indicates a broken solve and raises.
    """
    if start_dist is None:
        start_dist = uniform_start(true_mdp.n_states)
    start_dist = np.asarray(start_dist, dtype=np.float64)
    if start_dist.shape != (true_mdp.n_states,):
        raise ValueError(f"start_dist must have shape ({true_mdp.n_states},)")
    if np.any(start_dist < 0) or abs(start_dist.sum() - 1.0) > 1e-9:
        raise ValueError("start_dist must be a probability distribution")
    optimal_values, _ = value_iteration(true_mdp, tol=tol)
    candidate_values = policy_evaluation(true_mdp, candidate_policy, tol=tol)
    value = float(start_dist @ (optimal_values - candidate_values))
    if value < -2.0 * tol:
        raise NumericalError(f"candidate policy evaluated above the optimal values: {value}")
    return max(value, 0.0)
