"""Optimal truncation of eigenvalue-like quantities under a ratio bound.

Given positive weights ``n_j`` and non-negative values ``d_jl``, the operator
clamps every value into ``[m, c*m]`` where the threshold ``m`` minimizes

    sum_j n_j sum_l ( log(d_jl^m) + d_jl / d_jl^m ).

The objective is continuously differentiable in ``m``; between consecutive
breakpoints ``{d_jl, d_jl / c}`` its stationary point has a closed form, so
the global minimizer is found by evaluating a finite candidate set.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import AllZeroValuesError, SingularMatrixError


def truncate(d, m: float, c: float):
    """Clamp ``d`` into ``[m, c*m]``."""
    return np.clip(d, m, c * m)


def truncation_objective(m, weights, values, c: float):
    """Objective minimized by :func:`optimal_truncation`, vectorized over ``m``."""
    m = np.atleast_1d(np.asarray(m, dtype=float))
    w = np.repeat(np.asarray(weights, dtype=float), np.shape(values)[1])
    v = np.asarray(values, dtype=float).ravel()
    t = np.clip(v[None, :], m[:, None], c * m[:, None])
    return (w[None, :] * (np.log(t) + v[None, :] / t)).sum(axis=1)


def _candidates(w: np.ndarray, v: np.ndarray, c: float) -> np.ndarray:
    """Breakpoints plus the stationary point of every inter-breakpoint regime."""
    bp = np.unique(np.concatenate([v, v / c]))
    bp = bp[bp > 0]
    # one probe point inside every open interval, plus both unbounded ends
    probes = np.concatenate([[bp[0] / 2.0], 0.5 * (bp[1:] + bp[:-1]), [bp[-1] * 2.0]])
    below = v[None, :] < probes[:, None]
    above = v[None, :] > c * probes[:, None]
    a = (w * below).sum(axis=1) + (w * above).sum(axis=1)
    b = (w * v * below).sum(axis=1) + (w * v / c * above).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = np.where(a > 0, b / a, np.nan)
    stat = stat[np.isfinite(stat) & (stat > 0)]
    return np.unique(np.concatenate([bp, stat]))


def optimal_truncation(weights, values, c: float) -> tuple[np.ndarray, float]:
    """Constrained maximum-likelihood truncation of a ``J x L`` value table.

    Parameters
    ----------
    weights : array_like, shape (J,)
        Positive weights ``n_j``.
    values : array_like, shape (J, L) or (J,)
        Non-negative values ``d_jl``. A 1-d input is treated as ``L = 1``.
    c : float
        Ratio bound ``c >= 1``; ``math.inf`` disables the constraint.

    Returns
    -------
    truncated : ndarray
        Values clamped into ``[m_opt, c * m_opt]``, same shape as ``values``.
    m_opt : float
        The optimal threshold. Ties go to the smallest threshold.

    Raises
    ------
    AllZeroValuesError
        If every value is zero.
    """
    values = np.asarray(values, dtype=float)
    shape = values.shape
    table = values.reshape(shape[0], -1) if values.ndim > 1 else values[:, None]
    weights = np.asarray(weights, dtype=float).ravel()
    if weights.size != table.shape[0]:
        raise ValueError("weights and values disagree on J")
    if np.any(weights <= 0) or np.any(table < 0) or not np.all(np.isfinite(table)):
        raise ValueError("weights must be positive and values finite and non-negative")
    if c < 1:
        raise ValueError(f"constraint constant must be >= 1, got {c}")
    if not np.any(table > 0):
        raise AllZeroValuesError("optimal truncation of an all-zero input")

    pos = table[table > 0]
    if math.isinf(c):
        return values.copy(), float(pos.min())
    lo, hi = pos.min(), pos.max()
    if pos.size == table.size and hi <= c * lo:
        # feasible input is its own optimum; smallest optimal threshold
        return values.copy(), float(hi / c)

    w = np.repeat(weights, table.shape[1])
    v = table.ravel()
    cand = _candidates(w, v, c)
    obj = truncation_objective(cand, weights, table, c)
    best = int(np.argmin(obj))
    # ties (within rounding) resolved toward the smallest m
    tol = 1e-13 * max(1.0, abs(obj[best]))
    best = int(np.flatnonzero(obj <= obj[best] + tol)[0])
    m_opt = float(cand[best])
    return truncate(values, m_opt, c), m_opt


def constrained_shape(raw, c_sh: float) -> np.ndarray:
    """Shape vector with ``max/min <= c_sh`` and unit product.

    Truncation (single weight) followed by division by the geometric mean.
    """
    return constrained_shapes(np.asarray(raw, dtype=float)[None, :], c_sh)[0]


def constrained_shapes(raw, c_sh: float) -> np.ndarray:
    """Row-wise :func:`constrained_shape` of a ``(r, d)`` array."""
    raw = np.asarray(raw, dtype=float)
    lo, hi = raw.min(axis=1), raw.max(axis=1)
    out = raw.copy()
    # feasible rows are their own truncation
    for i in np.flatnonzero(~((lo > 0) & (hi <= c_sh * lo) & np.isfinite(hi))):
        out[i] = optimal_truncation([1.0], raw[i : i + 1], c_sh)[0][0]
    if np.any(out <= 0):
        raise SingularMatrixError("zero shape entry with the shape constraint disabled")
    logs = np.log(out)
    return np.exp(logs - logs.mean(axis=1, keepdims=True))


def constrained_sizes(n, gamma_opt, c_vol: float) -> np.ndarray:
    """Sizes with ``max/min <= c_vol`` maximizing the weighted likelihood."""
    n = np.asarray(n, dtype=float)
    gamma_opt = np.asarray(gamma_opt, dtype=float)
    if n.shape != gamma_opt.shape:
        raise ValueError("n and gamma_opt must have the same length")
    lo, hi = gamma_opt.min(), gamma_opt.max()
    if lo > 0 and hi <= c_vol * lo and np.isfinite(hi) and np.all(n > 0):
        return gamma_opt.copy()
    out, _ = optimal_truncation(n, gamma_opt, c_vol)
    return out
