"""Gaussian mixture models with diagonal covariances, fit by EM.

Model: p(x) = sum_k alpha_k N(x; mu_k, diag(sigma2_k)). The E-step computes
responsibilities in the log domain; the M-step re-estimates

    alpha_k = (1/n) sum_i r_ik,
    mu_k    = sum_i r_ik x_i / sum_i r_ik,
    sigma2_k = sum_i r_ik (x_i - mu_k)^2 / sum_i r_ik   (per coordinate),

with every variance floored at VARIANCE_FLOOR. A component whose total
responsibility falls below RESEED_THRESHOLD is re-seeded at a uniformly
chosen data point with the global data variance, which keeps EM moving when
a component starves.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .exceptions import NumericalError

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-6
RESEED_THRESHOLD = 1e-12
# Slack allowed on the EM monotonicity assertion.
MONOTONE_SLACK = 1e-8


@dataclass(frozen=True)
class Gmm:
    """Mixture parameters: mixing (K,), means (K, d), covariances (K, d).

    Covariances store the diagonal entries only and respect the variance
    floor.
    """

    mixing: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __post_init__(self):
        mixing = np.asarray(self.mixing, dtype=np.float64)
        means = np.asarray(self.means, dtype=np.float64)
        covariances = np.asarray(self.covariances, dtype=np.float64)
        object.__setattr__(self, "mixing", mixing)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covariances)
        if means.ndim != 2:
            raise ValueError("means must be (n_components, n_dims)")
        k = means.shape[0]
        if mixing.shape != (k,) or covariances.shape != means.shape:
            raise ValueError("mixing, means, covariances have inconsistent shapes")
        if not (
            np.all(np.isfinite(mixing))
            and np.all(np.isfinite(means))
            and np.all(np.isfinite(covariances))
        ):
            raise ValueError("mixture parameters must be finite")
        if np.any(mixing < 0) or abs(mixing.sum() - 1.0) > 1e-9:
            raise ValueError("mixing weights must be non-negative and sum to 1")
        if np.any(covariances < VARIANCE_FLOOR * (1 - 1e-9)):
            raise ValueError(f"covariance entries must be >= {VARIANCE_FLOOR}")

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def n_dims(self) -> int:
        return self.means.shape[1]

    def mean(self) -> np.ndarray:
        """Overall mixture mean sum_k alpha_k mu_k."""
        return self.mixing @ self.means


def sort_components(gmm: Gmm) -> Gmm:
    """Canonical component order: ascending first mean coordinate (ties fall
    through the remaining coordinates, then the mixing weight)."""
    keys = (gmm.mixing,) + tuple(gmm.means.T[::-1])
    order = np.lexsort(keys)
    return Gmm(gmm.mixing[order], gmm.means[order], gmm.covariances[order])


def _component_log_densities(gmm: Gmm, points: np.ndarray) -> np.ndarray:
    """(n, K) matrix of log alpha_k + log N(x_i; mu_k, sigma2_k)."""
    diff = points[:, None, :] - gmm.means[None, :, :]
    quad = (diff**2 / gmm.covariances[None, :, :]).sum(axis=2)
    log_norm = 0.5 * (np.log(2 * np.pi * gmm.covariances)).sum(axis=1)
    with np.errstate(divide="ignore"):
        log_mixing = np.log(gmm.mixing)
    return log_mixing[None, :] - log_norm[None, :] - 0.5 * quad


def _validated_points(gmm_dims: int | None, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[None, :]
    if points.ndim != 2:
        raise ValueError("points must be a vector or an (n, d) matrix")
    if gmm_dims is not None and points.shape[1] != gmm_dims:
        raise ValueError(f"points must have {gmm_dims} columns, got {points.shape[1]}")
    if not np.all(np.isfinite(points)):
        raise ValueError("points must be finite")
    return points


def log_pdf(gmm: Gmm, points: np.ndarray) -> np.ndarray | float:
    """Log mixture density; scalar for a single point, (n,) for a matrix."""
    single = np.asarray(points).ndim == 1
    points = _validated_points(gmm.n_dims, points)
    values = logsumexp(_component_log_densities(gmm, points), axis=1)
    return float(values[0]) if single else values


def e_step(gmm: Gmm, points: np.ndarray) -> np.ndarray:
    """Responsibilities (n, K); rows sum to 1."""
    points = _validated_points(gmm.n_dims, points)
    log_densities = _component_log_densities(gmm, points)
    norm = logsumexp(log_densities, axis=1)
    if not np.all(np.isfinite(norm)):
        raise NumericalError("a point has zero density under every component")
    return np.exp(log_densities - norm[:, None])


def m_step(
    points: np.ndarray,
    responsibilities: np.ndarray,
    rng: np.random.Generator | None = None,
) -> tuple[Gmm, bool, int]:
    """Re-estimate parameters from responsibilities.

    Returns (gmm, floored, n_reseeded) where ``floored`` reports whether any
    variance hit the floor; both flags matter to callers tracking EM
    monotonicity, which the floor and re-seeding legitimately break.
    """
    points = _validated_points(None, points)
    responsibilities = np.asarray(responsibilities, dtype=np.float64)
    n, d = points.shape
    if responsibilities.ndim != 2 or responsibilities.shape[0] != n:
        raise ValueError("responsibilities must be (n_points, n_components)")
    if np.any(responsibilities < 0):
        raise ValueError("responsibilities must be non-negative")
    totals = responsibilities.sum(axis=0)
    k = totals.shape[0]
    starved = totals < RESEED_THRESHOLD
    safe_totals = np.where(starved, 1.0, totals)
    means = (responsibilities.T @ points) / safe_totals[:, None]
    diff = points[:, None, :] - means[None, :, :]
    raw_cov = (responsibilities[:, :, None] * diff**2).sum(axis=0) / safe_totals[:, None]
    mixing = totals / n
    if np.any(starved):
        if rng is None:
            rng = np.random.default_rng(0)
        global_var = np.maximum(points.var(axis=0), VARIANCE_FLOOR)
        for j in np.nonzero(starved)[0]:
            means[j] = points[rng.integers(n)]
            raw_cov[j] = global_var
        mixing[starved] = 1.0 / n
        mixing = mixing / mixing.sum()
        logger.info("re-seeded %d starved mixture components", int(starved.sum()))
    floored = bool(np.any(raw_cov < VARIANCE_FLOOR))
    covariances = np.maximum(raw_cov, VARIANCE_FLOOR)
    return Gmm(mixing, means, covariances), floored, int(starved.sum())


@dataclass(frozen=True)
class FitResult:
    """EM outcome: final parameters, final total log-likelihood, the
    per-iteration log-likelihood history, and how many re-seeds occurred."""

    gmm: Gmm
    log_likelihood: float
    history: np.ndarray
    n_reseeds: int


def fit(
    points: np.ndarray,
    n_components: int,
    init: "Gmm | int",
    max_iter: int = 1000,
    tol: float = 1e-6,
    seed: "int | np.random.Generator | None" = None,
) -> FitResult:
    """Run EM to convergence.

    Args:
        init: either a Gmm to warm-start from, or an int seed for a cold
            start (means at n_components distinct random data points, the
            global data variance, uniform mixing).
        seed: randomness for component re-seeding; defaults to the cold-start
            seed when ``init`` is an int.

    The total log-likelihood is non-decreasing across iterations up to
    MONOTONE_SLACK except immediately after a floor clip or re-seed; a larger
    drop raises NumericalError.
    """
    points = _validated_points(None, points)
    n = points.shape[0]
    if n_components < 1:
        raise ValueError("n_components must be >= 1")
    if isinstance(init, Gmm):
        if init.n_components != n_components or init.n_dims != points.shape[1]:
            raise ValueError("warm-start Gmm shape does not match the requested fit")
        current = init
        rng = np.random.default_rng(seed)
    else:
        if n < n_components:
            raise ValueError("need at least n_components points for a cold start")
        rng = np.random.default_rng(init if seed is None else seed)
        idx = rng.choice(n, size=n_components, replace=False)
        global_var = np.maximum(points.var(axis=0), VARIANCE_FLOOR)
        current = Gmm(
            np.full(n_components, 1.0 / n_components),
            points[idx],
            np.broadcast_to(global_var, (n_components, points.shape[1])).copy(),
        )
    history = []
    previous_ll = None
    params_moved = True  # whether the last m_step clipped or re-seeded
    n_reseeds = 0
    for _ in range(max_iter):
        log_densities = _component_log_densities(current, points)
        norm = logsumexp(log_densities, axis=1)
        if not np.all(np.isfinite(norm)):
            raise NumericalError("a point has zero density under every component")
        total_ll = float(norm.sum())
        if previous_ll is not None:
            if not params_moved and total_ll < previous_ll - MONOTONE_SLACK:
                raise NumericalError(
                    f"EM log-likelihood decreased from {previous_ll} to {total_ll}"
                )
            if abs(total_ll - previous_ll) < tol:
                history.append(total_ll)
                break
        history.append(total_ll)
        previous_ll = total_ll
        responsibilities = np.exp(log_densities - norm[:, None])
        current, floored, reseeded = m_step(points, responsibilities, rng)
        params_moved = floored or reseeded > 0
        n_reseeds += reseeded
    return FitResult(current, history[-1], np.array(history), n_reseeds)


def fit_restarts(
    points: np.ndarray,
    n_components: int,
    n_restarts: int = 3,
    max_iter: int = 1000,
    tol: float = 1e-6,
    seed: "int | None" = None,
) -> FitResult:
    """Best of several cold-started EM runs by final log-likelihood.

    A single cold start occasionally lands in a local optimum (for
    instance one component straddling two clusters); restarting from
    different random points and keeping the likeliest fit is the usual
    remedy.
    """
    if n_restarts < 1:
        raise ValueError("n_restarts must be >= 1")
    streams = np.random.SeedSequence(seed).spawn(n_restarts)
    best = None
    for stream in streams:
        rng = np.random.default_rng(stream)
        result = fit(points, n_components, init=0, max_iter=max_iter, tol=tol, seed=rng)
        if best is None or result.log_likelihood > best.log_likelihood:
            best = result
    return best


def mixture_mean(gmm: Gmm) -> np.ndarray:
    """Overall mean of the mixture, sum_k alpha_k mu_k."""
    return gmm.mixing @ gmm.means


def sample(
    gmm: Gmm, n: int, seed: "int | np.random.Generator | None" = None
) -> np.ndarray:
    """Draw n points: categorical component choice, then diagonal normals."""
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = np.random.default_rng(seed)
    components = rng.choice(gmm.n_components, size=n, p=gmm.mixing)
    noise = rng.standard_normal((n, gmm.n_dims))
    return gmm.means[components] + noise * np.sqrt(gmm.covariances[components])


def save_gmm(path, gmm: Gmm) -> None:
    """Plain-text format: header ``K d``, then one ``alpha; mu...; sigma...``
    line per component with comma-separated coordinates."""
    lines = [f"{gmm.n_components} {gmm.n_dims}"]
    for k in range(gmm.n_components):
        mu = ",".join(repr(float(x)) for x in gmm.means[k])
        sigma = ",".join(repr(float(x)) for x in gmm.covariances[k])
        lines.append(f"{float(gmm.mixing[k])!r}; {mu}; {sigma}")
    with open(path, "w", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")


def load_gmm(path) -> Gmm:
    """Parse the format written by save_gmm."""
    with open(path) as handle:
        lines = [line.strip() for line in handle if line.strip()]
    if not lines:
        raise ValueError(f"empty mixture file: {path}")
    header = lines[0].split()
    if len(header) != 2:
        raise ValueError("mixture header must be 'n_components n_dims'")
    k, d = int(header[0]), int(header[1])
    if len(lines) != 1 + k:
        raise ValueError(f"expected {k} component lines, found {len(lines) - 1}")
    mixing = np.empty(k)
    means = np.empty((k, d))
    covariances = np.empty((k, d))
    for j, line in enumerate(lines[1:]):
        parts = [part.strip() for part in line.split(";")]
        if len(parts) != 3:
            raise ValueError(f"component line must have 3 ';'-separated fields: {line!r}")
        mixing[j] = float(parts[0])
        means[j] = [float(x) for x in parts[1].split(",")]
        covariances[j] = [float(x) for x in parts[2].split(",")]
    return Gmm(mixing, means, covariances)
