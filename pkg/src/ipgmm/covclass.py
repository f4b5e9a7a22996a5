"""Classification of covariance matrices into G-CPC / G-PROP classes.

Given ``k`` scatter matrices ``S_i`` with (possibly fractional) sample sizes
``n_i``, find a partition ``P`` of the matrices into ``G`` non-empty classes
and parameters minimizing

    sum_i n_i * ( d log(gamma_i) + tr(Lambda^-1 beta_{P_i}^T S_i beta_{P_i}) / gamma_i )

where ``Lambda`` is ``Lambda_i`` (G-CPC: orientation shared within a class)
or ``Lambda_{P_i}`` (G-PROP: orientation and shape shared, so the class
members are proportional). The fit alternates a partition step with a
coordinate-descent step on sizes, shapes and orientations, under the
eigenvalue-ratio constraints ``max/min shape <= c_sh`` and
``max/min gamma <= c_vol``.

Partitions are stored 0-based: ``partition[i]`` is in ``range(G)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidGError, SingularScatterError
from .orientation import fit_common_orientation
from .spectral import FamilyKind, IntermediateFamily, compose, eigh_sym
from .truncation import constrained_shapes, constrained_sizes


@dataclass
class CovClassModel:
    """Fitted covariance classification.

    ``shapes`` has one row per matrix for G-CPC and one row per class for
    G-PROP; ``orientations`` has one matrix per class.
    """

    family: IntermediateFamily
    partition: np.ndarray
    gammas: np.ndarray
    shapes: np.ndarray
    orientations: np.ndarray
    objective: float = math.nan
    c_sh: float = math.inf
    c_vol: float = math.inf
    n_iter: int = 0
    converged: bool = False
    repairs: int = 0
    trace: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.partition)

    @property
    def d(self) -> int:
        return self.orientations.shape[1]

    def shape_of(self, i: int) -> np.ndarray:
        if self.family.kind is FamilyKind.CPC:
            return self.shapes[i]
        return self.shapes[self.partition[i]]

    def member_shapes(self) -> np.ndarray:
        """Shape row used by every matrix, shape (k, d)."""
        if self.family.kind is FamilyKind.CPC:
            return self.shapes
        return self.shapes[self.partition]

    def covariances(self) -> np.ndarray:
        return np.array(
            [
                compose(self.gammas[i], self.shape_of(i), self.orientations[self.partition[i]])
                for i in range(self.k)
            ]
        )

    def copy(self) -> "CovClassModel":
        return replace(
            self,
            partition=self.partition.copy(),
            gammas=self.gammas.copy(),
            shapes=self.shapes.copy(),
            orientations=self.orientations.copy(),
            trace=list(self.trace),
        )


def _as_input(scatters, sizes):
    s = np.asarray(scatters, dtype=float)
    n = np.asarray(sizes, dtype=float)
    if s.ndim != 3 or s.shape[1] != s.shape[2]:
        raise ValueError("scatters must have shape (k, d, d)")
    if n.shape != (s.shape[0],) or np.any(n <= 0):
        raise ValueError("sizes must be k positive numbers")
    return 0.5 * (s + s.transpose(0, 2, 1)), n


def _family(family, G=None) -> IntermediateFamily:
    if isinstance(family, IntermediateFamily):
        return family
    return IntermediateFamily(FamilyKind(family), G)


def projected_variances(scatters, orientations, partition) -> np.ndarray:
    """``diag(beta_{P_i}^T S_i beta_{P_i})`` for every matrix, shape (k, d)."""
    b = orientations[partition]
    return np.einsum("idl,ide,iel->il", b, scatters, b)


def classification_objective(model: CovClassModel, scatters, sizes) -> float:
    """Value of the weighted Wishart discrepancy (lower is better)."""
    s, n = _as_input(scatters, sizes)
    return _objective(model, s, n)


def _objective(model, s, n):
    proj = projected_variances(s, model.orientations, model.partition)
    r = np.sum(proj / model.member_shapes(), axis=1)
    return float(np.sum(n * (s.shape[1] * np.log(model.gammas) + r / model.gammas)))


def _fit_values(scatters, family, orientations, shapes, c_sh):
    """Per (i, g) discrepancy ``R`` with the best class-compatible shape.

    Returns ``R`` of shape (k, G) and, for G-CPC, the constrained optimal
    shapes of shape (k, G, d).
    """
    proj = np.einsum("gdl,ide,gel->igl", orientations, scatters, orientations)
    if family.kind is FamilyKind.PROP:
        return np.sum(proj / shapes[None, :, :], axis=2), None
    k, G, d = proj.shape
    tilde = constrained_shapes(proj.reshape(k * G, d), c_sh).reshape(k, G, d)
    return np.sum(proj / tilde, axis=2), tilde


def _repair(partition, contrib, G):
    """Refill empty classes with the worst-fitting member of the largest class."""
    partition = partition.copy()
    repairs = 0
    while True:
        counts = np.bincount(partition, minlength=G)
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0:
            return partition, repairs
        big = int(np.argmax(counts))
        members = np.flatnonzero(partition == big)
        worst = members[np.argmax(contrib[members])]
        partition[worst] = empty[0]
        contrib[worst] = -np.inf
        repairs += 1


def pv_step(scatters, sizes, family, orientations, shapes, c_sh: float = math.inf, *, return_repairs=False):
    """Assign every matrix to the class whose common parameters fit it best.

    The sizes are left out of the comparison. Ties go to the lowest class
    index. A class left empty is refilled with the worst-fitting member of
    the largest class.
    """
    s, n = _as_input(scatters, sizes)
    fam = _family(family, len(orientations))
    partition, repairs = _pv_step(s, n, fam, np.asarray(orientations), np.asarray(shapes), c_sh)
    return (partition, repairs) if return_repairs else partition


def _pv_step(s, n, fam, orientations, shapes, c_sh):
    r, _ = _fit_values(s, fam, orientations, shapes, c_sh)
    partition = np.argmin(r, axis=1)
    d = s.shape[1]
    best = r[np.arange(len(partition)), partition]
    contrib = n * (d * np.log(best / d) + d)
    return _repair(partition, contrib, fam.G)


def vc_step(
    scatters,
    sizes,
    model: CovClassModel,
    c_sh: float = math.inf,
    c_vol: float = math.inf,
    inner_tol: float = 1e-10,
    inner_max_iter: int = 100,
    orient_tol: float = 1e-10,
    orient_max_iter: int = 1,
    orient_method: str = "pairwise",
) -> CovClassModel:
    """Cyclic size / shape / orientation updates for a fixed partition.

    Each pass updates the sizes (then applies the size constraint), the
    shapes (pooled over the class for G-PROP, per matrix for G-CPC, then the
    shape constraint and unit-product normalization) and the class
    orientations. Every update is an exact or majorized minimization, so the
    objective does not increase.

    Parameters
    ----------
    inner_tol, inner_max_iter
        The passes stop when the relative objective decrease falls below
        ``inner_tol``.
    orient_tol, orient_max_iter, orient_method
        Passed to :func:`ipgmm.orientation.fit_common_orientation`. The
        orientation is warm-started at every pass, so a single sweep per pass
        is enough for the outer loop to converge.

    Returns
    -------
    CovClassModel
        A new model; ``converged`` tells whether ``inner_tol`` was reached.
    """
    s, n = _as_input(scatters, sizes)
    return _vc_step(s, n, model, c_sh, c_vol, inner_tol, inner_max_iter, orient_tol, orient_max_iter, orient_method)


def _vc_step(s, n, model, c_sh, c_vol, inner_tol=1e-10, inner_max_iter=100, orient_tol=1e-10,
             orient_max_iter=1, orient_method="pairwise"):
    m = model.copy()
    fam = m.family
    k, d = len(n), s.shape[1]
    P = m.partition
    members = [np.flatnonzero(P == g) for g in range(fam.G)]

    obj = _objective(m, s, n)
    trace = [obj]
    converged = False
    for _ in range(inner_max_iter):
        proj = projected_variances(s, m.orientations, P)
        raw_gamma = np.sum(proj / m.member_shapes(), axis=1) / d
        m.gammas = constrained_sizes(n, raw_gamma, c_vol)

        scaled = proj / m.gammas[:, None]
        if fam.kind is FamilyKind.PROP:
            pooled = np.zeros((fam.G, d))
            np.add.at(pooled, P, n[:, None] * scaled)
            pooled /= np.bincount(P, weights=n, minlength=fam.G)[:, None]
            m.shapes = _checked_shape(pooled, c_sh)
        else:
            m.shapes = _checked_shape(scaled, c_sh)

        lam = m.member_shapes()
        for g, idx in enumerate(members):
            fit = fit_common_orientation(
                s[idx],
                n[idx] / m.gammas[idx],
                lam[idx],
                init=m.orientations[g],
                max_iter=orient_max_iter,
                tol=orient_tol,
                method=orient_method,
            )
            m.orientations[g] = fit.beta

        new = _objective(m, s, n)
        trace.append(new)
        done = obj - new <= inner_tol * abs(new)
        obj = new
        if done:
            converged = True
            break
    m.objective = obj
    m.trace = trace
    m.converged = converged
    return m


def _checked_shape(raw, c_sh):
    """Constrained shape of one row, or of every row of a 2-d array."""
    raw = np.asarray(raw, dtype=float)
    rows = np.atleast_2d(raw)
    if math.isinf(c_sh) and np.any(rows.min(axis=1) <= 1e-14 * rows.max(axis=1)):
        raise SingularScatterError("singular class scatter with the shape constraint disabled")
    out = constrained_shapes(rows, c_sh)
    return out if raw.ndim == 2 else out[0]


def random_partition(k: int, G: int, rng) -> np.ndarray:
    """Uniform-ish random member of the set of partitions with no empty class."""
    partition = rng.integers(0, G, size=k)
    forced = rng.permutation(k)[:G]
    partition[forced] = np.arange(G)
    return partition


def relabel(partition) -> np.ndarray:
    """Renumber classes in order of first appearance."""
    _, first, inv = np.unique(partition, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inv]


def initial_model(scatters, sizes, family, partition, c_sh, c_vol) -> CovClassModel:
    """Starting parameters for a given partition.

    Each class orientation is taken from the eigenvectors of its first
    member; shapes are the constrained, normalized projected variances of
    that member (G-PROP) or of each matrix (G-CPC); sizes come from the
    trace formula followed by the size constraint.
    """
    s, n = _as_input(scatters, sizes)
    fam = _family(family)
    k, d = len(n), s.shape[1]
    reps = np.array([np.flatnonzero(partition == g)[0] for g in range(fam.G)])
    orient = np.array([eigh_sym(s[i])[1] for i in reps])
    proj = projected_variances(s, orient, partition)
    if fam.kind is FamilyKind.PROP:
        shapes = np.array([_checked_shape(proj[i], c_sh) for i in reps])
        lam = shapes[partition]
    else:
        shapes = _checked_shape(proj, c_sh)
        lam = shapes
    gammas = constrained_sizes(n, np.sum(proj / lam, axis=1) / d, c_vol)
    model = CovClassModel(fam, partition.copy(), gammas, shapes, orient, c_sh=c_sh, c_vol=c_vol)
    model.objective = _objective(model, s, n)
    return model


def _profile_shapes(model: CovClassModel, s, c_sh):
    # G-CPC: best constrained shape of every matrix under its (new) class axes
    if model.family.kind is FamilyKind.CPC:
        proj = projected_variances(s, model.orientations, model.partition)
        model.shapes = _checked_shape(proj, c_sh)


def _run_alternation(s, n, model, c_sh, c_vol, max_iter, tol, inner):
    """Alternate partition and parameter steps starting from ``model``."""
    fam = model.family
    m = _vc_step(s, n, model, c_sh, c_vol, **inner)
    history = [m.objective]
    repairs = 0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        part, rep = _pv_step(s, n, fam, m.orientations, m.shapes, c_sh)
        repairs += rep
        changed = not np.array_equal(part, m.partition)
        cand = m.copy()
        if changed:
            cand.partition = part
            _profile_shapes(cand, s, c_sh)
        cand = _vc_step(s, n, cand, c_sh, c_vol, **inner)
        if changed and not rep and cand.objective > m.objective:
            # reassignment judged without the size constraint did not pay off
            converged = True
            break
        small = m.objective - cand.objective <= tol * abs(cand.objective)
        m = cand
        history.append(m.objective)
        if not changed and small:
            converged = True
            break
    m.n_iter = it
    m.converged = converged
    m.repairs = repairs
    m.trace = history
    return m


def canonical_order(model: CovClassModel, scatters) -> CovClassModel:
    """Permute orientation columns (with their shape entries) per class so the
    first member's projected variances are descending. The objective is
    unchanged."""
    s = np.asarray(scatters, dtype=float)
    m = model.copy()
    for g in range(m.family.G):
        idx = np.flatnonzero(m.partition == g)
        if idx.size == 0:
            continue
        b = m.orientations[g]
        proj = np.einsum("dl,de,el->l", b, s[idx[0]], b)
        order = np.argsort(-proj, kind="stable")
        m.orientations[g] = _fix_column_signs(b[:, order])
        if m.family.kind is FamilyKind.PROP:
            m.shapes[g] = m.shapes[g][order]
        else:
            m.shapes[idx] = m.shapes[idx][:, order]
    return m


def _fix_column_signs(b):
    idx = np.argmax(np.abs(b), axis=0)
    signs = np.sign(b[idx, np.arange(b.shape[1])])
    signs[signs == 0] = 1.0
    return b * signs


def classify_covariances(
    scatters,
    sizes,
    family,
    G: int | None = None,
    c_sh: float = math.inf,
    c_vol: float = math.inf,
    nstart1: int = 8,
    seed=None,
    init: CovClassModel | None = None,
    max_iter: int = 200,
    tol: float = 1e-9,
    inner_tol: float = 1e-10,
    inner_max_iter: int = 100,
    orient_tol: float = 1e-10,
    orient_max_iter: int = 1,
    orient_method: str = "pairwise",
    threads: int = 1,
) -> CovClassModel:
    """Best-of-``nstart1`` classification of scatter matrices.

    Parameters
    ----------
    scatters : array_like, shape (k, d, d)
    sizes : array_like, shape (k,)
        Effective sample sizes; fractional values are allowed.
    family : IntermediateFamily or {"cpc", "prop"}
        With a string, ``G`` must be given.
    c_sh, c_vol : float
        Shape and size ratio bounds, ``math.inf`` to disable.
    nstart1 : int
        Number of random starting partitions.
    seed : int or numpy SeedSequence, optional
    init : CovClassModel, optional
        Extra warm start, run before the random starts. Its result is kept
        unless a random start reaches a strictly lower objective.

    Returns
    -------
    CovClassModel
        Columns are put in canonical order. Ties between starts go to the
        earlier start.

    Raises
    ------
    InvalidGError
        If ``G`` is not in ``[1, k]``.
    """
    s, n = _as_input(scatters, sizes)
    fam = _family(family, G)
    k = len(n)
    if not 1 <= fam.G <= k:
        raise InvalidGError(f"G={fam.G} outside [1, k={k}]")
    if nstart1 < 1 and init is None:
        raise ValueError("nstart1 must be >= 1")
    inner = dict(
        inner_tol=inner_tol,
        inner_max_iter=inner_max_iter,
        orient_tol=orient_tol,
        orient_max_iter=orient_max_iter,
        orient_method=orient_method,
    )
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(max(nstart1, 0))

    # the start depends only on the partition up to class relabeling, so
    # repeated draws (common for small k) would only repeat work
    parts, seen = [], set()
    for child in children:
        part = relabel(random_partition(k, fam.G, np.random.default_rng(child)))
        if part.tobytes() not in seen:
            seen.add(part.tobytes())
            parts.append(part)

    def run(part):
        start = initial_model(s, n, fam, part, c_sh, c_vol)
        return _run_alternation(s, n, start, c_sh, c_vol, max_iter, tol, inner)

    results = []
    if init is not None:
        warm = init.copy()
        warm.family = fam
        warm.c_sh, warm.c_vol = c_sh, c_vol
        results.append(_run_alternation(s, n, warm, c_sh, c_vol, max_iter, tol, inner))
    if threads > 1 and len(parts) > 1:
        with ThreadPoolExecutor(threads) as ex:
            results.extend(ex.map(run, parts))
    else:
        results.extend(run(p) for p in parts)

    best = results[0]
    for r in results[1:]:
        if r.objective < best.objective:
            best = r
    best = canonical_order(best, s)
    best.c_sh, best.c_vol = c_sh, c_vol
    return best
