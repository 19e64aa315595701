"""Model-based clustering of functional data.

Each cluster is a Gaussian whose covariance is large along a few
cluster-specific directions and flat (noise level b) on the orthogonal
remainder.  Fitting happens in a working space where the basis
inner product is Euclidean (coefficients times the square root of the
inner-product matrix), so subspaces orthonormal there correspond to
orthonormal function systems.

Two covariance variants are supported, named by which parameters are
free per cluster: "akj-bk-qk-dk" gives every cluster its own noise
level, "akj-b-qk-dk" pools one noise level across clusters.  Subspace
dimensions are chosen anew at each EM step by the scree-gap rule, and
models across cluster counts and variants are compared by BIC.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import logsumexp

from .cluster import Partition, kmeans
from .errors import ConfigError, NumericError
from .smooth import FunctionalDataset

_LOG_2PI = math.log(2.0 * math.pi)
_NOISE_FLOOR = 1e-10
_SIGNAL_MARGIN = 1e-12


class FlmVariant(str, Enum):
    """Covariance parameterizations, named by their free blocks."""

    FREE_NOISE = "akj-bk-qk-dk"
    COMMON_NOISE = "akj-b-qk-dk"

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        try:
            return cls(str(text).strip().lower())
        except ValueError:
            raise ConfigError(f"unknown model variant {text!r}") from None


def cattell_scree(eigenvalues, threshold=0.2):
    """Retained dimension by the largest-gap scree rule.

    Scans the consecutive drops of a non-increasing eigenvalue sequence
    and keeps everything up to the last drop that reaches `threshold`
    times the largest drop.  A sequence with no positive drop keeps a
    single dimension.
    """
    ev = np.asarray(eigenvalues, dtype=np.float64)
    if ev.ndim != 1 or ev.size < 2:
        raise ConfigError("need at least two eigenvalues")
    if not 0.0 < threshold < 1.0:
        raise ConfigError("threshold must be in (0, 1)")
    if np.any(ev[1:] > ev[:-1] + 1e-12):
        raise ConfigError("eigenvalues must be non-increasing")
    drops = ev[:-1] - ev[1:]
    top = drops.max()
    if top <= 0.0:
        return 1
    keep = np.flatnonzero(drops >= threshold * top)
    return int(keep[-1]) + 1


def n_params(n_clusters, dimension, dims, variant):
    """Free-parameter count of a fitted mixture.

    Counts mixing weights, cluster means, the orientation of each
    cluster subspace, the per-direction variances, and the noise
    level(s): with K clusters in dimension p,

        (K - 1) + K*p + sum_k d_k*(p - (d_k + 1)/2) + sum_k d_k + noise

    where noise is 1 for the pooled variant and K otherwise.
    """
    K = int(n_clusters)
    p = int(dimension)
    variant = FlmVariant.parse(variant)
    dims = [int(d) for d in dims]
    if K < 1 or p < 1:
        raise ConfigError("n_clusters and dimension must be positive")
    if len(dims) != K:
        raise ConfigError(f"expected {K} subspace dimensions, got {len(dims)}")
    if any(d < 1 or d >= p for d in dims):
        raise ConfigError("subspace dimensions must lie in 1..dimension-1")
    total = (K - 1) + K * p
    total += sum(d * (2 * p - d - 1) // 2 for d in dims)
    total += sum(dims)
    total += 1 if variant is FlmVariant.COMMON_NOISE else K
    return total


@dataclass(frozen=True)
class FlmConfig:
    """Settings for one EM fit."""

    n_clusters: int
    variant: FlmVariant = FlmVariant.COMMON_NOISE
    scree_threshold: float = 0.2
    max_iter: int = 200
    tol: float = 1e-7
    seed: int = 0
    init: str = "kmeans"
    init_labels: object = None
    init_restarts: int = 10

    def __post_init__(self):
        object.__setattr__(self, "variant", FlmVariant.parse(self.variant))
        if int(self.n_clusters) < 1:
            raise ConfigError("n_clusters must be >= 1")
        object.__setattr__(self, "n_clusters", int(self.n_clusters))
        if not 0.0 < self.scree_threshold < 1.0:
            raise ConfigError("scree_threshold must be in (0, 1)")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if not self.tol > 0.0:
            raise ConfigError("tol must be positive")
        if self.init not in ("kmeans", "random", "labels"):
            raise ConfigError(f"unknown init {self.init!r}")
        if self.init == "labels" and self.init_labels is None:
            raise ConfigError("init='labels' needs init_labels")


@dataclass(frozen=True)
class FlmModel:
    """Fitted subspace mixture.

    Cluster subspace bases are stored as coefficient vectors
    (`subspace[k]` has shape (p, d_k), columns orthonormal under the
    basis inner product), so curves can be evaluated directly.
    """

    basis: object
    variant: FlmVariant
    weights: np.ndarray
    means: np.ndarray
    subspaces: tuple
    dims: tuple
    signal_variances: tuple
    noise_variances: np.ndarray
    posteriors: np.ndarray
    loglik_trace: tuple
    converged: bool
    config: FlmConfig

    @property
    def n_clusters(self):
        return self.means.shape[0]

    @property
    def dimension(self):
        return self.means.shape[1]

    @property
    def loglik(self):
        return self.loglik_trace[-1]

    @property
    def n_iter(self):
        return len(self.loglik_trace)

    def n_parameters(self):
        return n_params(self.n_clusters, self.dimension, self.dims, self.variant)

    def partition(self):
        """Hard assignment by highest posterior probability.

        Labels follow the model's cluster order; a cluster that wins no
        curve is dropped from the numbering.
        """
        raw = np.argmax(self.posteriors, axis=1)
        present = np.unique(raw)
        remap = {int(m): i + 1 for i, m in enumerate(present)}
        labels = np.asarray([remap[int(r)] for r in raw], dtype=np.int64)
        found = len(present)
        sizes = tuple(int((labels == k).sum()) for k in range(1, found + 1))
        return Partition(labels, found, sizes, float(self.loglik))

    def component_effect(self, cluster, component, multiple=2.0):
        """Cluster mean perturbed along one subspace direction.

        Returns coefficient vectors ``(plus, minus, mean)`` for the
        1-based `cluster` and `component`.
        """
        k = int(cluster)
        if not 1 <= k <= self.n_clusters:
            raise ConfigError(f"cluster must be in 1..{self.n_clusters}")
        j = int(component)
        if not 1 <= j <= self.dims[k - 1]:
            raise ConfigError(
                f"component must be in 1..{self.dims[k - 1]} for cluster {k}")
        mean = self.means[k - 1]
        step = float(multiple) * math.sqrt(self.signal_variances[k - 1][j - 1]) \
            * self.subspaces[k - 1][:, j - 1]
        return mean + step, mean - step, mean.copy()

    def explained_within(self, cluster):
        """Share of a cluster's variance captured by its subspace."""
        k = int(cluster)
        if not 1 <= k <= self.n_clusters:
            raise ConfigError(f"cluster must be in 1..{self.n_clusters}")
        signal = float(np.sum(self.signal_variances[k - 1]))
        flat = float(self.noise_variances[k - 1]) * (self.dimension - self.dims[k - 1])
        return signal / (signal + flat)


@dataclass(frozen=True)
class ModelScore:
    """BIC record for one fitted model."""

    n_clusters: int
    variant: FlmVariant
    seed: int
    loglik: float
    n_parameters: int
    bic: float


def bic(model, n_obs):
    """Bayesian information criterion, larger is better.

    BIC = loglik - (nu / 2) * ln(n) with nu the free-parameter count.
    """
    n_obs = int(n_obs)
    if n_obs < 1:
        raise ConfigError("n_obs must be >= 1")
    nu = model.n_parameters()
    value = model.loglik - 0.5 * nu * math.log(n_obs)
    return ModelScore(model.n_clusters, model.variant, model.config.seed,
                      float(model.loglik), nu, float(value))


def _initial_posteriors(X, config):
    n = X.shape[0]
    K = config.n_clusters
    if config.init_labels is not None:
        labels = np.asarray(config.init_labels, dtype=np.int64)
        if labels.shape != (n,):
            raise ConfigError("init_labels must have one label per curve")
        if labels.min() < 1 or labels.max() > K:
            raise ConfigError("init_labels must lie in 1..n_clusters")
        if len(np.unique(labels)) != K:
            raise ConfigError("init_labels leave some cluster empty")
        labels0 = labels - 1
    elif config.init == "kmeans":
        part = kmeans(X, K, seed=config.seed, restarts=config.init_restarts)
        labels0 = part.labels - 1
    else:
        rng = np.random.default_rng(config.seed)
        labels0 = rng.permutation(n) % K  # balanced, never empty
    T = np.zeros((n, K))
    T[np.arange(n), labels0] = 1.0
    return T


def _m_step(X, T, config, iteration):
    n, p = X.shape
    K = config.n_clusters
    counts = T.sum(axis=0)
    weights = counts / n
    if np.any(weights < 1.0 / (10.0 * n)):
        dead = int(np.argmin(weights)) + 1
        raise NumericError(
            f"cluster {dead} collapsed at iteration {iteration} "
            f"(weight {weights.min():.3g})")
    means = (T.T @ X) / counts[:, None]

    bases, signal, dims, resid_mass = [], [], [], []
    for k in range(K):
        centered = X - means[k]
        cov = (centered * T[:, k][:, None]).T @ centered / counts[k]
        cov = (cov + cov.T) / 2.0
        evals, evecs = np.linalg.eigh(cov)
        evals = np.clip(evals[::-1], 0.0, None)
        evecs = evecs[:, ::-1]
        cap = min(p - 1, max(1, int(math.floor(counts[k])) - 1))
        d_k = min(cattell_scree(evals, config.scree_threshold), cap)
        Q = evecs[:, :d_k].copy()
        for col in range(d_k):  # deterministic orientation
            peak = int(np.argmax(np.abs(Q[:, col])))
            if Q[peak, col] < 0.0:
                Q[:, col] = -Q[:, col]
        bases.append(Q)
        signal.append(evals[:d_k].copy())
        dims.append(d_k)
        resid_mass.append(max(float(evals.sum() - evals[:d_k].sum()), 0.0))

    dims = np.asarray(dims)
    resid_mass = np.asarray(resid_mass)
    if config.variant is FlmVariant.COMMON_NOISE:
        pooled = float((counts * resid_mass).sum() / (counts * (p - dims)).sum())
        noise = np.full(K, max(pooled, _NOISE_FLOOR))
    else:
        noise = np.maximum(resid_mass / (p - dims), _NOISE_FLOOR)
    signal = [np.maximum(a, noise[k] + _SIGNAL_MARGIN)
              for k, a in enumerate(signal)]
    return weights, means, bases, signal, tuple(int(d) for d in dims), noise


def _log_joint(X, weights, means, bases, signal, dims, noise):
    n, p = X.shape
    K = weights.shape[0]
    out = np.empty((n, K))
    for k in range(K):
        centered = X - means[k]
        proj = centered @ bases[k]
        total_sq = (centered ** 2).sum(axis=1)
        inside = (proj ** 2 / signal[k]).sum(axis=1)
        flat_sq = np.clip(total_sq - (proj ** 2).sum(axis=1), 0.0, None)
        logdet = float(np.log(signal[k]).sum()) \
            + (p - dims[k]) * math.log(noise[k])
        out[:, k] = math.log(weights[k]) - 0.5 * (
            inside + flat_sq / noise[k] + logdet + p * _LOG_2PI)
    return out


def fit_flm(dataset, config):
    """Fit the subspace mixture by expectation-maximization.

    Starts from a hard partition (k-means by default), alternates
    posterior updates with the closed-form M-step, and stops when the
    log-likelihood gain falls below `config.tol` or `config.max_iter`
    is reached.  The log-likelihood must never decrease; a drop beyond
    a small slack raises NumericError, as does a cluster whose weight
    collapses toward zero.
    """
    if not isinstance(dataset, FunctionalDataset):
        raise ConfigError("fit_flm expects a FunctionalDataset")
    if isinstance(config, dict):
        config = FlmConfig(**config)
    if not isinstance(config, FlmConfig):
        raise ConfigError("config must be an FlmConfig")
    n, p = dataset.coefficients.shape
    if n <= config.n_clusters:
        raise ConfigError(
            f"need more curves ({n}) than clusters ({config.n_clusters})")
    if p < 2:
        raise ConfigError("the basis dimension must be at least 2")

    half, inv_half = dataset.basis.gram_factors
    X = dataset.coefficients @ half

    T = _initial_posteriors(X, config)
    trace = []
    prev = -np.inf
    converged = False
    params = None
    for iteration in range(1, config.max_iter + 1):
        params = _m_step(X, T, config, iteration)
        log_joint = _log_joint(X, *params)
        row_norm = logsumexp(log_joint, axis=1)
        loglik = float(row_norm.sum())
        T = np.exp(log_joint - row_norm[:, None])
        if loglik < prev - 1e-8:
            raise NumericError(
                f"log-likelihood decreased at iteration {iteration} "
                f"({prev:.9g} -> {loglik:.9g})")
        trace.append(loglik)
        if np.isfinite(prev) and abs(loglik - prev) < config.tol:
            converged = True
            break
        prev = loglik

    weights, means_w, bases_w, signal, dims, noise = params
    means = means_w @ inv_half
    subspaces = tuple(inv_half @ Q for Q in bases_w)
    return FlmModel(
        basis=dataset.basis,
        variant=config.variant,
        weights=weights,
        means=means,
        subspaces=subspaces,
        dims=dims,
        signal_variances=tuple(signal),
        noise_variances=noise,
        posteriors=T,
        loglik_trace=tuple(trace),
        converged=converged,
        config=config,
    )


def select_model(dataset, n_clusters_range, variants=(FlmVariant.COMMON_NOISE,),
                 seeds=(0,), **options):
    """Fit a family of models and keep the BIC maximizer.

    Every (n_clusters, variant, seed) combination is fitted; fits that
    fail numerically are recorded and skipped.  Ties on BIC go to the
    smaller cluster count, then to fewer parameters.

    Returns ``(best_model, scores)`` with scores in run order.
    """
    cluster_counts = [int(k) for k in n_clusters_range]
    if not cluster_counts:
        raise ConfigError("n_clusters_range must be non-empty")
    variants = [FlmVariant.parse(v) for v in variants]
    if not variants:
        raise ConfigError("variants must be non-empty")
    seeds = list(seeds)
    if not seeds:
        raise ConfigError("seeds must be non-empty")

    n = len(dataset)
    scores = []
    best = None  # (score, model)
    failures = []
    for K in cluster_counts:
        for variant in variants:
            for seed in seeds:
                config = FlmConfig(n_clusters=K, variant=variant, seed=seed,
                                   **options)
                try:
                    model = fit_flm(dataset, config)
                except NumericError as exc:
                    failures.append(f"K={K} {variant.value} seed={seed}: {exc}")
                    continue
                score = bic(model, n)
                scores.append(score)
                if best is None or _score_better(score, best[0]):
                    best = (score, model)
    if best is None:
        detail = "; ".join(failures)
        raise NumericError(f"every candidate fit failed: {detail}")
    return best[1], scores


def _score_better(candidate, incumbent):
    if candidate.bic != incumbent.bic:
        return candidate.bic > incumbent.bic
    if candidate.n_clusters != incumbent.n_clusters:
        return candidate.n_clusters < incumbent.n_clusters
    return candidate.n_parameters < incumbent.n_parameters
