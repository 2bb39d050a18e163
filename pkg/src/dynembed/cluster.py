"""Gaussian mixture clustering with BIC selection for pooled embeddings.

Dynamic community detection downstream of a joint embedding: per-snapshot
point sets are mapped to spherical coordinates, the non-zero rows pooled
across snapshots into one matrix, and a full-covariance Gaussian mixture is
fitted for each candidate component count. The Bayesian Information
Criterion picks the count; nodes are then assigned their maximum a
posteriori component per snapshot.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import logsumexp

from .embedders import Embedding
from .linalg import spherical_coordinates

RIDGE_FACTOR = 1e-6
CONVERGENCE_RTOL = 1e-7
MAX_ITERATIONS = 500


@dataclass
class GmmModel:
    """One fitted Gaussian mixture.

    weights: (G,) simplex vector. means: (G, q). covariances: (G, q, q),
    symmetric positive definite after regularization. loglik and bic refer to
    the training points; loglik_trace holds the per-iteration log likelihood
    so the monotone ascent of the fit can be audited.
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    loglik: float
    bic: float
    converged: bool
    n_iter: int
    loglik_trace: list = field(default_factory=list, repr=False)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def parameter_count(g: int, q: int) -> int:
    """Free parameters of a g-component full-covariance mixture on R^q."""
    return (g - 1) + g * q + g * q * (q + 1) // 2


def _log_densities(points, weights, means, covariances):
    """log of w_g * N(x | mean_g, cov_g) for every point and component."""
    n, q = points.shape
    out = np.empty((n, weights.shape[0]))
    for g in range(weights.shape[0]):
        chol = cho_factor(covariances[g], lower=True)
        diff = points - means[g]
        maha = np.sum(diff * cho_solve(chol, diff.T).T, axis=1)
        logdet = 2.0 * np.sum(np.log(np.diag(chol[0])))
        out[:, g] = (
            np.log(weights[g])
            - 0.5 * (q * np.log(2.0 * np.pi) + logdet + maha)
        )
    return out


def _regularize(cov, scale, warned):
    """Make a covariance usable by adding an escalating diagonal ridge."""
    ridge = RIDGE_FACTOR * max(np.trace(cov) / cov.shape[0], scale)
    for _ in range(40):
        try:
            cho_factor(cov, lower=True)
            return cov, warned
        except np.linalg.LinAlgError:
            if not warned:
                warnings.warn(
                    "singular mixture covariance regularized with a diagonal "
                    "ridge",
                    RuntimeWarning,
                )
                warned = True
            cov = cov + ridge * np.eye(cov.shape[0])
            ridge *= 10.0
    raise np.linalg.LinAlgError("covariance could not be regularized")


def _kmeans_pp_centers(points, g, rng):
    # distance-squared seeding; first center uniform
    n = points.shape[0]
    centers = [points[rng.integers(n)]]
    for _ in range(1, g):
        d2 = np.min(
            [np.sum((points - c) ** 2, axis=1) for c in centers], axis=0
        )
        total = d2.sum()
        if total <= 0:
            centers.append(points[rng.integers(n)])
            continue
        centers.append(points[rng.choice(n, p=d2 / total)])
    return np.array(centers)


def _m_step(points, resp, scale, warned):
    n, q = points.shape
    nk = resp.sum(axis=0) + 10 * np.finfo(float).tiny
    weights = nk / n
    means = (resp.T @ points) / nk[:, None]
    covariances = np.empty((resp.shape[1], q, q))
    for g in range(resp.shape[1]):
        diff = points - means[g]
        cov = (resp[:, g][:, None] * diff).T @ diff / nk[g]
        cov = (cov + cov.T) / 2.0
        covariances[g], warned = _regularize(cov, scale, warned)
    return weights, means, covariances, warned


def fit_gmm(
    points: np.ndarray,
    g: int,
    seed: int = 0,
    *,
    max_iter: int = MAX_ITERATIONS,
) -> GmmModel:
    """One EM fit of a g-component full-covariance mixture.

    Initialization places centers by distance-squared seeding, hard-assigns
    each point to its nearest center and starts EM from that partition. The
    log likelihood trace over iterations is retained on the result.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n, q = points.shape
    if n < g:
        raise ValueError(f"cannot fit {g} components to {n} points")
    rng = np.random.default_rng(seed)
    scale = max(float(np.var(points)), np.finfo(float).tiny)

    centers = _kmeans_pp_centers(points, g, rng)
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    resp = np.zeros((n, g))
    resp[np.arange(n), np.argmin(d2, axis=1)] = 1.0

    warned = False
    weights, means, covariances, warned = _m_step(points, resp, scale, warned)
    trace = []
    loglik = -np.inf
    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        log_dens = _log_densities(points, weights, means, covariances)
        row_lse = logsumexp(log_dens, axis=1)
        new_loglik = float(row_lse.sum())
        trace.append(new_loglik)
        if np.isfinite(loglik) and abs(new_loglik - loglik) <= CONVERGENCE_RTOL * abs(loglik):
            loglik = new_loglik
            converged = True
            break
        loglik = new_loglik
        resp = np.exp(log_dens - row_lse[:, None])
        weights, means, covariances, warned = _m_step(points, resp, scale, warned)
    bic = -2.0 * loglik + parameter_count(g, q) * np.log(n)
    return GmmModel(
        weights=weights,
        means=means,
        covariances=covariances,
        loglik=loglik,
        bic=float(bic),
        converged=converged,
        n_iter=iteration,
        loglik_trace=trace,
    )


def fit_gmm_bic(
    points: np.ndarray,
    g_grid,
    restarts: int = 10,
    seed: int = 0,
    *,
    max_iter: int = MAX_ITERATIONS,
):
    """Best mixture over a grid of component counts.

    For each count the fit with the highest log likelihood over ``restarts``
    seeded initializations is kept; the count minimizing BIC wins (ties go to
    the earlier grid entry). Returns (best model, list of (count, bic)).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    g_grid = [int(g) for g in g_grid]
    if not g_grid:
        raise ValueError("empty component-count grid")
    n, q = points.shape
    if n <= max(g_grid) * max(q, 1):
        raise ValueError(
            f"{n} points cannot support {max(g_grid)} components in "
            f"dimension {q}"
        )
    root = np.random.SeedSequence(seed)
    table = []
    best = None
    for g, child in zip(g_grid, root.spawn(len(g_grid))):
        fits = [
            fit_gmm(points, g, seed=int(s), max_iter=max_iter)
            for s in child.generate_state(restarts)
        ]
        winner = max(fits, key=lambda m: m.loglik)
        table.append((g, winner.bic))
        if best is None or winner.bic < best.bic:
            best = winner
    return best, table


def assign(model: GmmModel, points: np.ndarray):
    """Maximum a posteriori component per point, with responsibilities.

    Ties go to the lowest component index. Returns (labels, responsibilities)
    where responsibilities rows sum to 1.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != model.dim:
        raise ValueError(
            f"points have dimension {points.shape[1]}, model expects {model.dim}"
        )
    log_dens = _log_densities(
        points, model.weights, model.means, model.covariances
    )
    resp = np.exp(log_dens - logsumexp(log_dens, axis=1)[:, None])
    return np.argmax(resp, axis=1), resp


def pool_spherical(embedding: Embedding, atol: float = 0.0):
    """Angle coordinates of all non-zero points, pooled across snapshots.

    Rows are stacked time-major: all retained nodes of snapshot 0, then of
    snapshot 1, and so on. Returns (theta, index) where theta is (M, d-1) and
    index is an (M, 2) integer array of (node, snapshot) per retained row.
    Requires a common embedding dimension across snapshots.
    """
    if len(set(embedding.dims)) != 1:
        raise ValueError("snapshots have differing dimensions; cannot pool")
    thetas, pairs = [], []
    for t, pts in enumerate(embedding.points):
        angles, active = spherical_coordinates(pts, atol=atol)
        thetas.append(angles[active])
        nodes = np.flatnonzero(active)
        pairs.append(np.column_stack([nodes, np.full(nodes.shape, t)]))
    theta = np.vstack(thetas)
    index = np.vstack(pairs).astype(int)
    return theta, index
