"""Diverse near-optimal reward sets drawn from a recovered weight mixture.

A solution set collects up to n weight vectors that are pairwise more than
delta apart (Frobenius distance) while each keeps the expected value
difference of its induced policy below epsilon_evd on the true task. The
generator draws a fixed pool of candidates from the mixture up front and
scans it greedily, so the candidate sequence never depends on the
thresholds and runs with different delta or epsilon_evd stay comparable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import TabularMdp, evd, value_iteration
from . import gmm as gmm_mod


@dataclass(frozen=True)
class SolutionSet:
    """Admitted weight vectors with the EVD each one achieved.

    complete is False when the candidate pool ran out before n members
    were found; n_draws counts the candidates scanned.
    """

    members: np.ndarray
    evds: np.ndarray
    delta: float
    epsilon_evd: float
    complete: bool
    n_draws: int

    def __post_init__(self):
        members = np.asarray(self.members, dtype=np.float64)
        evds = np.asarray(self.evds, dtype=np.float64)
        if members.ndim != 2:
            raise ValueError("members must be 2-D (n_found, n_dims)")
        if evds.shape != (members.shape[0],):
            raise ValueError("evds must align with members")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "evds", evds)

    @property
    def n_found(self) -> int:
        return self.members.shape[0]


def frobenius_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Frobenius (entrywise L2) distance between two weight arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("shapes must match")
    return float(np.linalg.norm(a - b))


def candidate_evd(
    weights: np.ndarray, true_mdp: TabularMdp, features: np.ndarray
) -> float:
    """EVD on the true task of the optimal policy under the linear reward
    features @ weights."""
    reward = features @ np.asarray(weights, dtype=np.float64)
    _, policy = value_iteration(true_mdp.with_reward(reward))
    return evd(true_mdp, policy)


def generate_solution_set(
    gmm: "gmm_mod.Gmm",
    n: int,
    delta: float,
    epsilon_evd: float,
    true_mdp: TabularMdp,
    features: np.ndarray,
    seed=None,
    max_draws: int | None = None,
) -> SolutionSet:
    """Greedy scan of a pre-drawn candidate pool.

    A candidate is admitted when it is more than delta from every member
    admitted so far and its EVD is below epsilon_evd. The distance check
    runs first; EVD is only computed for candidates that survive it, except
    that the very first admission always needs the EVD check.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if epsilon_evd <= 0:
        raise ValueError("epsilon_evd must be positive")
    if features.shape[0] != true_mdp.n_states:
        raise ValueError("features row count must match the state count")
    if max_draws is None:
        max_draws = 100 * n
    candidates = gmm_mod.sample(gmm, max_draws, seed)
    members: list[np.ndarray] = []
    evds: list[float] = []
    n_draws = 0
    for idx in range(max_draws):
        w = candidates[idx]
        n_draws = idx + 1
        if members:
            gaps = np.linalg.norm(np.asarray(members) - w, axis=1)
            if float(gaps.min()) <= delta:
                continue
        value = candidate_evd(w, true_mdp, features)
        if value >= epsilon_evd:
            continue
        members.append(w)
        evds.append(value)
        if len(members) == n:
            break
    found = np.asarray(members, dtype=np.float64).reshape(len(members), features.shape[1])
    return SolutionSet(
        found,
        np.asarray(evds, dtype=np.float64),
        float(delta),
        float(epsilon_evd),
        len(members) == n,
        n_draws,
    )


def verify_solution_set(
    solution: SolutionSet, true_mdp: TabularMdp, features: np.ndarray
) -> bool:
    """Recheck every constraint from scratch: pairwise separation beyond
    delta and per-member EVD below epsilon_evd."""
    members = solution.members
    for i in range(members.shape[0]):
        for j in range(i + 1, members.shape[0]):
            if frobenius_distance(members[i], members[j]) <= solution.delta:
                return False
    for w in members:
        if candidate_evd(w, true_mdp, features) >= solution.epsilon_evd:
            return False
    return True
