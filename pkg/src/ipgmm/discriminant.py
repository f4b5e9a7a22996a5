"""Discriminant analysis with G-CPC / G-PROP covariance structures.

With known labels a single M step gives the fit: group proportions, group
means and group scatters, followed by a classification of the scatters.
New points go to the group with the largest posterior probability.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .covclass import _family
from .errors import (
    AllZeroValuesError,
    EmptyGroupError,
    SingularGroupError,
    SingularScatterError,
)
from .mixture import FitReport, MixtureModel, component_log_densities, e_step, hard_assign, loglik, m_step
from .selection import Context, bic, df


@dataclass
class DAModel:
    """Fitted discriminant model.

    ``classes[i]`` is the original label of component ``i``.
    """

    mixture: MixtureModel
    classes: np.ndarray
    complete_loglik: float = math.nan

    @property
    def k(self) -> int:
        return self.mixture.k


@dataclass
class ErrorReport:
    mm: float
    loo: float | None = None
    cv: float | None = None
    K: int | None = None
    p: float | None = None
    redraws: int = 0
    loo_mode: str = "warm"


def encode_labels(labels, classes=None):
    """Map labels to ``0..k-1``; ``classes`` fixes the order (sorted by default).

    Raises
    ------
    EmptyGroupError
        If a requested class has no observation.
    ValueError
        If a label is not among ``classes``.
    """
    labels = np.asarray(labels)
    if classes is None:
        classes = np.unique(labels)
    classes = np.asarray(classes)
    lookup = {c: i for i, c in enumerate(classes.tolist())}
    try:
        codes = np.array([lookup[v] for v in labels.tolist()], dtype=int)
    except KeyError as exc:
        raise ValueError(f"label {exc.args[0]!r} not among the classes") from None
    counts = np.bincount(codes, minlength=len(classes))
    if np.any(counts == 0):
        raise EmptyGroupError(f"group {classes[np.argmin(counts)]!r} has no observation")
    return codes, classes


def fit_da(
    X,
    labels,
    family,
    G=None,
    c_sh: float = math.inf,
    c_vol: float = math.inf,
    nstart1: int = 8,
    seed=None,
    classes=None,
    init=None,
    **cov_options,
):
    """Fit a discriminant model from labeled data.

    Parameters
    ----------
    X : array_like, shape (N, d)
    labels : array_like, shape (N,)
        Any hashable labels.
    family : IntermediateFamily or {"cpc", "prop"}
    G : int, optional
    c_sh, c_vol : float
        Ratio bounds; disabled by default.
    nstart1 : int
        Random starts of the covariance classification.
    classes : sequence, optional
        Order of the groups; every class must be present.
    init : CovClassModel, optional
        Warm start for the covariance classification.

    Returns
    -------
    DAModel, FitReport
        ``FitReport.loglik`` is the mixture log-likelihood of the training
        data, on which BIC is based; the complete-data value is kept on the
        model.

    Raises
    ------
    EmptyGroupError
    SingularGroupError
        If a group scatter is singular and the shape constraint is disabled.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    codes, classes = encode_labels(labels, classes)
    N, d = X.shape
    k = len(classes)
    fam = _family(family, G)
    z = np.zeros((N, k))
    z[np.arange(N), codes] = 1.0
    try:
        w, mu, cov = m_step(X, z, fam, c_sh=c_sh, c_vol=c_vol, nstart1=nstart1, seed=seed, init=init, **cov_options)
    except (SingularScatterError, AllZeroValuesError) as exc:
        raise SingularGroupError(f"singular group scatter: {exc}") from exc
    mix = MixtureModel(w, mu, cov)
    dens = component_log_densities(X, mix)
    complete = float(np.sum(dens[np.arange(N), codes]))
    ll = loglik(X, mix)
    p = df(fam, k, d, Context.DISCRIMINANT)
    report = FitReport(ll, p, bic(ll, p, N), 1, bool(cov.converged), [ll], 0, cov.repairs)
    return DAModel(mix, classes, complete), report


def predict(model: DAModel, X):
    """Labels and posterior probabilities ``(N, k)`` for new points."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :] if X.shape[0] == model.mixture.d else X[:, None]
    if X.shape[1] != model.mixture.d:
        raise ValueError(f"expected dimension {model.mixture.d}, got {X.shape[1]}")
    post = e_step(X, model.mixture)
    return model.classes[hard_assign(post)], post


def mm_error(X, labels, model: DAModel) -> float:
    """Training misclassification rate."""
    pred, _ = predict(model, X)
    return float(np.mean(pred != np.asarray(labels)))


def loo_error(
    X,
    labels,
    family,
    G=None,
    c_sh: float = math.inf,
    c_vol: float = math.inf,
    nstart1: int = 8,
    seed=None,
    warm: bool = True,
    threads: int = 1,
    **cov_options,
) -> float:
    """Leave-one-out misclassification rate.

    With ``warm=True`` every refit starts only from the covariance
    classification of the full-data fit; with ``warm=False`` each refit uses
    ``nstart1`` fresh random starts. An observation that is the only member
    of its group cannot be predicted and counts as an error.
    """
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    codes, classes = encode_labels(labels)
    N = len(codes)
    ss = np.random.SeedSequence(seed)
    full_seed, *fold_seeds = ss.spawn(N + 1)
    full, _ = fit_da(X, labels, family, G, c_sh, c_vol, nstart1, full_seed, classes=classes, **cov_options)
    counts = np.bincount(codes, minlength=len(classes))

    def one(j):
        if counts[codes[j]] == 1:
            return 1
        keep = np.arange(N) != j
        model, _ = fit_da(
            X[keep], labels[keep], family, G, c_sh, c_vol,
            nstart1=0 if warm else nstart1, seed=fold_seeds[j], classes=classes,
            init=full.mixture.cov if warm else None, **cov_options,
        )
        pred, _ = predict(model, X[j : j + 1])
        return int(pred[0] != labels[j])

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            errors = sum(ex.map(one, range(N)))
    else:
        errors = sum(one(j) for j in range(N))
    return errors / N


def cv_masks(labels, K: int, p: float, seed=None):
    """Labeled/unlabeled splits for repeated cross validation.

    Each observation is labeled with probability ``p``. A split that leaves
    a group without labeled points, or leaves no unlabeled point, is
    redrawn. The masks depend only on ``(seed, K, p, labels)``, so competing
    models can be compared on identical splits.

    Returns
    -------
    masks : ndarray of bool, shape (K, N)
        True marks a labeled observation.
    redraws : int
    """
    if K < 1 or not 0 < p < 1:
        raise ValueError("need K >= 1 and 0 < p < 1")
    codes, classes = encode_labels(labels)
    rng = np.random.default_rng(seed)
    masks, redraws = [], 0
    while len(masks) < K:
        m = rng.random(len(codes)) < p
        if m.all() or np.any(np.bincount(codes[m], minlength=len(classes)) == 0):
            redraws += 1
            continue
        masks.append(m)
    return np.array(masks), redraws


def cv_error(
    X,
    labels,
    family,
    G=None,
    K: int = 300,
    p: float = 0.8,
    seed=None,
    c_sh: float = math.inf,
    c_vol: float = math.inf,
    nstart1: int = 8,
    warm: bool = True,
    threads: int = 1,
    **cov_options,
):
    """Mean misclassification rate on the unlabeled part over ``K`` splits.

    Returns
    -------
    error : float
    redraws : int
        Number of rejected splits.
    """
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    masks, redraws = cv_masks(labels, K, p, seed)
    _, classes = encode_labels(labels)
    fit_seeds = np.random.SeedSequence(seed).spawn(K + 1)
    full = None
    if warm:
        full, _ = fit_da(X, labels, family, G, c_sh, c_vol, nstart1, fit_seeds[0], classes=classes, **cov_options)

    def one(r):
        m = masks[r]
        model, _ = fit_da(
            X[m], labels[m], family, G, c_sh, c_vol,
            nstart1=0 if warm else nstart1, seed=fit_seeds[r + 1], classes=classes,
            init=full.mixture.cov if warm else None, **cov_options,
        )
        pred, _ = predict(model, X[~m])
        return float(np.mean(pred != labels[~m]))

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            rates = list(ex.map(one, range(K)))
    else:
        rates = [one(r) for r in range(K)]
    return float(np.mean(rates)), redraws


def match_clusters(pred, truth):
    """Cluster-to-class matching with the fewest mismatches.

    Parameters
    ----------
    pred : array_like of int
        Cluster indices.
    truth : array_like
        Reference labels.

    Returns
    -------
    mismatches : int
    mapping : dict
        Cluster index to matched label.
    """
    pred = np.asarray(pred)
    truth_codes, classes = np.unique(np.asarray(truth), return_inverse=True)[1], np.unique(truth)
    clusters = np.unique(pred)
    table = np.zeros((len(clusters), len(classes)), dtype=int)
    np.add.at(table, (np.searchsorted(clusters, pred), truth_codes), 1)
    rows, cols = linear_sum_assignment(-table)
    mapping = {int(clusters[r]): classes[c] for r, c in zip(rows, cols)}
    return int(len(pred) - table[rows, cols].sum()), mapping
