"""Constrained EM for Gaussian mixtures whose covariances follow a G-CPC or
G-PROP structure.

Responsibilities are stored as an ``(N, k)`` array (one row per
observation). Labels and component indices are 0-based.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.special import logsumexp

from .covclass import (
    CovClassModel,
    _family,
    classification_objective,
    classify_covariances,
    random_partition,
)
from .errors import DegenerateComponentError, InvalidGError, SingularMatrixError, TooFewObservationsError
from .selection import Context, bic, df

LOG_2PI = math.log(2.0 * math.pi)


def log_gauss_density(y, mu, sigma):
    """Log density of ``N(mu, sigma)`` at ``y`` (one point or an ``(N, d)`` array).

    Raises
    ------
    SingularMatrixError
        If ``sigma`` is not positive definite.
    """
    y = np.asarray(y, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("covariance is not positive definite") from exc
    d = sigma.shape[0]
    diff = np.atleast_2d(y - np.asarray(mu, dtype=float))
    sol = np.linalg.solve(chol, diff.T)
    quad = np.sum(sol**2, axis=0)
    out = -0.5 * (d * LOG_2PI + 2.0 * np.sum(np.log(np.diag(chol))) + quad)
    return float(out[0]) if y.ndim == 1 else out


@dataclass
class MixtureModel:
    """Weights, means and the structured covariance part."""

    weights: np.ndarray
    means: np.ndarray
    cov: CovClassModel

    @property
    def k(self) -> int:
        return len(self.weights)

    @property
    def d(self) -> int:
        return self.means.shape[1]

    @property
    def family(self):
        return self.cov.family

    def covariances(self) -> np.ndarray:
        return self.cov.covariances()


@dataclass
class FitReport:
    loglik: float
    df: int
    bic: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)
    restarts: int = 0
    repairs: int = 0
    start: int = 0


def component_log_densities(X, model: MixtureModel) -> np.ndarray:
    """``log pi_i + log phi(y_j | mu_i, Sigma_i)``, shape (N, k)."""
    X = np.asarray(X, dtype=float)
    covs = model.covariances()
    with np.errstate(divide="ignore"):
        logw = np.log(model.weights)
    return np.column_stack(
        [logw[i] + log_gauss_density(X, model.means[i], covs[i]) for i in range(model.k)]
    )


def e_step(X, model: MixtureModel) -> np.ndarray:
    """Posterior membership probabilities, shape (N, k); rows sum to one."""
    dens = component_log_densities(X, model)
    return np.exp(dens - logsumexp(dens, axis=1, keepdims=True))


def loglik(X, model: MixtureModel) -> float:
    """Observed-data mixture log-likelihood."""
    return float(np.sum(logsumexp(component_log_densities(X, model), axis=1)))


def weighted_statistics(X, z):
    """Sizes, means and (1/n_i)-normalized weighted scatters."""
    X = np.asarray(X, dtype=float)
    z = np.asarray(z, dtype=float)
    n = z.sum(axis=0)
    means = (z.T @ X) / n[:, None]
    scatters = np.empty((z.shape[1], X.shape[1], X.shape[1]))
    for i in range(z.shape[1]):
        c = X - means[i]
        scatters[i] = (z[:, i, None] * c).T @ c / n[i]
    return n, means, 0.5 * (scatters + scatters.transpose(0, 2, 1))


def m_step(
    X,
    z,
    family,
    G=None,
    c_sh: float = math.inf,
    c_vol: float = math.inf,
    nstart1: int = 8,
    seed=None,
    init: CovClassModel | None = None,
    **cov_options,
):
    """Weights, means and constrained covariances from responsibilities.

    With ``init`` the covariance fit is warm-started there and never returns
    parameters worse than ``init`` itself, which keeps EM monotone.

    Returns
    -------
    weights, means, CovClassModel

    Raises
    ------
    DegenerateComponentError
        If some ``n_i = sum_j z_ij`` falls below ``d * 1e-8``.
    """
    X = np.asarray(X, dtype=float)
    N, d = X.shape
    n = np.asarray(z, dtype=float).sum(axis=0)
    if np.any(n < d * 1e-8):
        raise DegenerateComponentError(f"component with total weight {n.min():.3g}")
    n, means, scatters = weighted_statistics(X, z)
    fam = _family(family, G)
    cov = classify_covariances(
        scatters, n, fam, c_sh=c_sh, c_vol=c_vol, nstart1=nstart1, seed=seed, init=init, **cov_options
    )
    if init is not None:
        ref = init.copy()
        ref.objective = classification_objective(ref, scatters, n)
        if ref.objective < cov.objective:
            cov = ref
    return n / N, means, cov


def hard_assign(z) -> np.ndarray:
    """Row-wise argmax; ties go to the smallest index."""
    return np.argmax(np.asarray(z), axis=1)


def _identity_cov(k, d, fam, rng, c_sh, c_vol) -> CovClassModel:
    # unit sizes, spherical shapes, identity axes: feasible for any constraint
    rows = k if fam.kind.value == "cpc" else fam.G
    return CovClassModel(
        fam,
        random_partition(k, fam.G, rng),
        np.ones(k),
        np.ones((rows, d)),
        np.repeat(np.eye(d)[None], fam.G, axis=0),
        c_sh=c_sh,
        c_vol=c_vol,
    )


def initial_means(X, k: int, rng) -> np.ndarray:
    """k-means centers of a random half-sample, perturbed by ``N(0, cov(X)) / 10``."""
    X = np.asarray(X, dtype=float)
    N, d = X.shape
    half = X[rng.choice(N, size=max(k, N // 2), replace=False)]
    best, best_inertia = None, math.inf
    for _ in range(10):
        with warnings.catch_warnings():
            # an empty k-means cluster only makes this trial lose on inertia
            warnings.simplefilter("ignore", UserWarning)
            centers, lab = kmeans2(half, k, minit="++", seed=rng)
        inertia = np.sum((half - centers[lab]) ** 2)
        if inertia < best_inertia:
            best, best_inertia = centers, inertia
    cov = np.atleast_2d(np.cov(X, rowvar=False))
    return best + 0.1 * rng.multivariate_normal(np.zeros(d), cov, size=k, method="cholesky")


def _em_run(X, k, fam, c_sh, c_vol, nstart1, tol, max_iter, rng, cov_options):
    N, d = X.shape
    model = MixtureModel(np.full(k, 1.0 / k), initial_means(X, k, rng), _identity_cov(k, d, fam, rng, c_sh, c_vol))
    ll = loglik(X, model)
    trace = [ll]
    repairs = 0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        z = e_step(X, model)
        w, mu, cov = m_step(
            X, z, fam, c_sh=c_sh, c_vol=c_vol, nstart1=nstart1,
            seed=np.random.SeedSequence(int(rng.integers(2**63))), init=model.cov, **cov_options,
        )
        repairs += cov.repairs
        model = MixtureModel(w, mu, cov)
        new = loglik(X, model)
        trace.append(new)
        done = abs(new - ll) <= tol * abs(new)
        ll = new
        if done:
            converged = True
            break
    return model, ll, it, converged, trace, repairs


def fit_clustering(
    X,
    k: int,
    family,
    G=None,
    c_sh: float = math.inf,
    c_vol: float = math.inf,
    nstart1: int = 8,
    nstart2: int = 32,
    tol: float = 1e-8,
    max_iter: int = 500,
    seed=None,
    threads: int = 1,
    max_restarts: int = 20,
    **cov_options,
):
    """Best-of-``nstart2`` EM fit of a constrained intermediate mixture.

    Each start draws means from k-means on a random half-sample plus a small
    Gaussian perturbation, with equal weights and identity covariances. An
    initialization whose EM run empties a component is redrawn (up to
    ``max_restarts`` times per start).

    Parameters
    ----------
    X : array_like, shape (N, d)
    k : int
        Number of components.
    family : IntermediateFamily or {"cpc", "prop"}
    G : int, optional
        Number of covariance classes when ``family`` is a string.
    c_sh, c_vol : float
        Shape and size ratio bounds.
    nstart1, nstart2 : int
        Random starts of each covariance classification and of EM.
    tol, max_iter
        EM stops when the relative loglik change drops below ``tol``.
    seed : int, optional
    threads : int
        EM starts run in a thread pool when above one.

    Returns
    -------
    MixtureModel, FitReport
        Ties between starts go to the earlier start.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    N, d = X.shape
    fam = _family(family, G)
    if not 1 <= fam.G <= k:
        raise InvalidGError(f"G={fam.G} outside [1, k={k}]")
    if N <= k:
        raise TooFewObservationsError(f"N={N} must exceed k={k}")
    if nstart2 < 1:
        raise ValueError("nstart2 must be >= 1")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(nstart2)

    def run(idx):
        rng = np.random.default_rng(children[idx])
        restarts = 0
        while True:
            try:
                return idx, restarts, _em_run(X, k, fam, c_sh, c_vol, nstart1, tol, max_iter, rng, cov_options)
            except DegenerateComponentError:
                restarts += 1
                if restarts > max_restarts:
                    return idx, restarts, None

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            runs = list(ex.map(run, range(nstart2)))
    else:
        runs = [run(i) for i in range(nstart2)]

    total_restarts = sum(r[1] for r in runs)
    good = [r for r in runs if r[2] is not None]
    if not good:
        raise DegenerateComponentError("every EM start degenerated")
    idx, _, best = good[0]
    for cand in good[1:]:
        if cand[2][1] > best[1]:
            idx, _, best = cand
    model, ll, it, converged, trace, repairs = best
    p = df(fam, k, d, Context.CLUSTERING)
    report = FitReport(ll, p, bic(ll, p, N), it, converged, trace, total_restarts, repairs, idx)
    return model, report
