"""One-dimensional Gaussian mixtures for GrabCut colour models."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

log = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-3
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class Gmm:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    var_floor: float = VARIANCE_FLOOR
    log_likelihood_trace: list[float] = field(default_factory=list)

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def component_log_joint(self, x) -> np.ndarray:
        """``log w_k + log N(x | mu_k, var_k)`` with shape ``(n, K)``."""
        x = np.asarray(x, dtype=np.float64).reshape(-1, 1)
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        return logw - 0.5 * (_LOG_2PI + np.log(self.variances)) - (x - self.means) ** 2 / (2.0 * self.variances)

    def log_density(self, x) -> np.ndarray:
        return logsumexp(self.component_log_joint(x), axis=1)

    def best_component_cost(self, x) -> np.ndarray:
        """``min_k -log(w_k N(x | k))``: the data cost under the most likely component."""
        return -self.component_log_joint(x).max(axis=1)

    def assign(self, x) -> np.ndarray:
        return np.argmax(self.component_log_joint(x), axis=1)

    def refit_hard(self, x, assignment) -> "Gmm":
        """Maximum-likelihood parameters given a hard component assignment.

        Components that receive no samples keep their mean and get zero weight.
        """
        x = np.asarray(x, dtype=np.float64).ravel()
        K = self.n_components
        counts = np.bincount(assignment, minlength=K).astype(np.float64)
        sums = np.bincount(assignment, weights=x, minlength=K)
        means = np.where(counts > 0, sums / np.maximum(counts, 1), self.means)
        sq = np.bincount(assignment, weights=(x - means[assignment]) ** 2, minlength=K)
        variances = np.maximum(np.where(counts > 0, sq / np.maximum(counts, 1), self.var_floor), self.var_floor)
        return Gmm(counts / counts.sum(), means, variances, self.var_floor)


def _kmeans_pp(x: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(len(x))]]
    for _ in range(1, K):
        d2 = np.min((x[:, None] - np.asarray(centers)[None, :]) ** 2, axis=1)
        total = d2.sum()
        if total <= 0:
            break
        centers.append(x[rng.choice(len(x), p=d2 / total)])
    return np.asarray(centers, dtype=np.float64)


def fit_gmm(
    samples,
    K: int = 5,
    seed: int = 0,
    var_floor: float = VARIANCE_FLOOR,
    max_iter: int = 50,
    rel_tol: float = 1e-6,
) -> Gmm:
    """EM fit of a K-component 1D mixture from a k-means++ start.

    ``K`` shrinks to the number of distinct sample values when that is smaller.
    The per-iteration total log-likelihood is kept in ``log_likelihood_trace``.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if len(x) == 0:
        raise ValueError("cannot fit a mixture to zero samples")
    n_distinct = len(np.unique(x))
    if n_distinct < K:
        log.debug("collapsing K=%d to %d distinct values", K, n_distinct)
        K = n_distinct
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(x, K, rng)
    K = len(centers)
    init = np.argmin((x[:, None] - centers[None, :]) ** 2, axis=1)
    gmm = Gmm(np.full(K, 1.0 / K), centers, np.full(K, var_floor), var_floor).refit_hard(x, init)

    trace = [float(gmm.log_density(x).sum())]
    for _ in range(max_iter):
        joint = gmm.component_log_joint(x)
        resp = np.exp(joint - logsumexp(joint, axis=1, keepdims=True))
        nk = resp.sum(axis=0)
        safe = np.maximum(nk, np.finfo(float).tiny)
        means = np.where(nk > 0, resp.T @ x / safe, gmm.means)
        variances = np.where(nk > 0, (resp * (x[:, None] - means) ** 2).sum(axis=0) / safe, var_floor)
        gmm = Gmm(nk / nk.sum(), means, np.maximum(variances, var_floor), var_floor)
        trace.append(float(gmm.log_density(x).sum()))
        if abs(trace[-1] - trace[-2]) <= rel_tol * max(abs(trace[-2]), 1e-300):
            break
    gmm.log_likelihood_trace = trace
    return gmm
