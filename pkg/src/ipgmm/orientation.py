"""Common orientation shared by several scatter matrices.

Minimizes ``f(B) = sum_i w_i tr(diag(1/lambda_i) B^T S_i B)`` over orthogonal
``B``. Two monotone solvers are provided.

``"mm"``
    Majorization-minimization. Writing ``S_i = alpha_i I - (alpha_i I - S_i)``
    with ``alpha_i`` the largest eigenvalue of ``S_i``, the second part is
    concave in ``B`` and is majorized by its tangent plane; the linear
    surrogate is minimized over the orthogonal group by ``B <- U V^T`` for the
    SVD ``F = U D V^T`` of ``F = sum_i w_i (alpha_i I - S_i) B diag(1/lambda_i)``.
    Its rate degrades with the eigenvalue spread of the ``S_i``.

``"pairwise"`` (default)
    Sweeps over column pairs ``(l, m)``. Rotating the pair by ``t`` changes
    ``f`` by ``A (cos 2t - 1) + B sin 2t`` for scalars ``A, B``, so each plane
    rotation is minimized in closed form. Pairs are visited in round-robin
    order; the pairs of one round are disjoint and are rotated together.
    Fixed points are stationary points of ``f`` on the orthogonal group.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .spectral import eigh_sym


@dataclass
class OrientationFit:
    beta: np.ndarray
    objective: float
    n_iter: int
    converged: bool
    trace: list = field(default_factory=list)


def orientation_objective(beta, scatters, weights, shapes) -> float:
    """``sum_i w_i sum_l (B^T S_i B)_ll / lambda_il``."""
    beta = np.asarray(beta, dtype=float)
    proj = np.einsum("dl,ide,el->il", beta, np.asarray(scatters, dtype=float), beta)
    return float(np.sum(np.asarray(weights)[:, None] * proj / np.asarray(shapes)))


def _single_scatter_solution(s, shape):
    # exact minimizer for one matrix: eigenvectors paired by rank with the shape
    _, vec = eigh_sym(s)
    order = np.argsort(-np.asarray(shape), kind="stable")
    beta = np.empty_like(vec)
    beta[:, order] = vec
    return beta


def fit_common_orientation(
    scatters,
    weights,
    shapes,
    init=None,
    max_iter: int = 500,
    tol: float = 1e-10,
    record: bool = False,
    method: str = "pairwise",
) -> OrientationFit:
    """Fit a common orthogonal orientation.

    Parameters
    ----------
    scatters : array_like, shape (r, d, d)
        Scatter matrices sharing the orientation.
    weights : array_like, shape (r,)
        Positive weights, typically ``n_i / gamma_i``.
    shapes : array_like, shape (r, d)
        Per-matrix positive diagonal shape entries, aligned with the columns
        of the orientation.
    init : array_like, shape (d, d), optional
        Starting orthogonal matrix (identity by default).
    max_iter, tol
        The loop stops once the relative objective decrease falls below
        ``tol`` or after ``max_iter`` sweeps.
    record
        Keep the per-sweep objective values in ``trace``.
    method : {"pairwise", "mm"}
        Solver; see the module notes.

    Returns
    -------
    OrientationFit
        ``converged`` is False when ``max_iter`` was reached; the last
        iterate is still returned.
    """
    s = np.asarray(scatters, dtype=float)
    w = np.asarray(weights, dtype=float)
    lam = np.asarray(shapes, dtype=float)
    r, d, _ = s.shape
    beta = np.eye(d) if init is None else np.array(init, dtype=float)

    # spherical shapes: every orthogonal matrix is optimal
    if np.all(np.ptp(lam, axis=1) <= 1e-14 * lam.max(axis=1)):
        obj = orientation_objective(beta, s, w, lam)
        return OrientationFit(beta, obj, 0, True, [obj] if record else [])
    if r == 1:
        beta = _single_scatter_solution(s[0], lam[0])
        obj = orientation_objective(beta, s, w, lam)
        return OrientationFit(beta, obj, 1, True, [obj] if record else [])

    if method == "pairwise":
        return _pairwise(s, w, lam, beta, max_iter, tol, record)
    if method != "mm":
        raise ValueError(f"unknown method {method!r}")

    alpha = np.linalg.eigvalsh(s)[:, -1]
    shifted = w[:, None, None] * (alpha[:, None, None] * np.eye(d) - s)
    inv_lam = 1.0 / lam

    obj = orientation_objective(beta, s, w, lam)
    trace = [obj] if record else []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        # F = sum_i w_i (alpha_i I - S_i) B diag(1/lambda_i)
        f = np.einsum("ide,el,il->dl", shifted, beta, inv_lam)
        u, _, vt = np.linalg.svd(f)
        new_beta = u @ vt
        new_obj = orientation_objective(new_beta, s, w, lam)
        if new_obj > obj:
            # surrogate guarantees descent; any increase is rounding noise
            if new_obj - obj > 1e-12 * abs(obj):
                break
        beta, dec, obj = new_beta, obj - new_obj, min(obj, new_obj)
        if record:
            trace.append(new_obj)
        if dec <= tol * abs(obj):
            converged = True
            break
    return OrientationFit(beta, obj, it, converged, trace)


@lru_cache(maxsize=None)
def _rounds(d: int):
    """Round-robin schedule: every column pair once, pairs within a round disjoint."""
    players = list(range(d)) + ([-1] if d % 2 else [])
    n = len(players)
    rounds = []
    for _ in range(n - 1):
        pairs = [(players[j], players[n - 1 - j]) for j in range(n // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a >= 0 and b >= 0]
        rounds.append((np.array([a for a, _ in pairs]), np.array([b for _, b in pairs])))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _pairwise(s, w, lam, beta, max_iter, tol, record):
    d = s.shape[1]
    inv_lam = 1.0 / lam
    beta = beta.copy()
    # projected scatters T_i = B^T S_i B, carried along the rotations
    t = np.einsum("dl,ide,em->ilm", beta, s, beta)
    diag = np.arange(d)

    def value(t):
        return float(np.sum(w[:, None] * t[:, diag, diag] * inv_lam))

    obj = value(t)
    trace = [obj] if record else []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        # rotations of disjoint pairs do not interact, so a round is one step
        for L, M in _rounds(d):
            dl = w[:, None] * (inv_lam[:, L] - inv_lam[:, M])
            a = 0.5 * np.sum(dl * (t[:, L, L] - t[:, M, M]), axis=0)
            b = np.sum(dl * t[:, L, M], axis=0)
            # f(angle) - f(0) = a (cos 2t - 1) + b sin 2t
            angle = np.where((a == 0) & (b == 0), 0.0, 0.5 * np.arctan2(-b, -a))
            c, sn = np.cos(angle), np.sin(angle)
            rot = np.eye(d)
            rot[L, L] = c
            rot[M, M] = c
            rot[M, L] = sn
            rot[L, M] = -sn
            beta = beta @ rot
            t = rot.T @ t @ rot
        new = value(t)
        dec = obj - new
        obj = min(obj, new)
        if record:
            trace.append(new)
        if dec <= tol * abs(obj):
            converged = True
            break
    # re-orthonormalize against accumulated rounding
    u, _, vt = np.linalg.svd(beta)
    beta = u @ vt
    return OrientationFit(beta, orientation_objective(beta, s, w, lam), it, converged, trace)
