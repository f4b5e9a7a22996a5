"""Degrees of freedom, BIC and model sweeps.

BIC is reported on the "larger is better" scale, ``2 loglik - log(N) p``.
Candidates are either intermediate families (``IntermediateFamily``) or one
of three classical levels that are exactly representable by them:

========  ==============================
``VVV``   G-CPC with ``G = k``
``VEE``   G-PROP with ``G = 1``
``VVE``   G-CPC with ``G = 1``
========  ==============================

The other eleven classical levels are counted by :func:`df` but not fitted.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from enum import Enum

from .spectral import (
    FamilyKind,
    IntermediateFamily,
    ParsimoniousLevel,
    cov_param_count,
    get_level,
    intermediate_param_count,
)


class Context(str, Enum):
    CLUSTERING = "clustering"
    DISCRIMINANT = "discriminant"


# classical level -> (family kind, G); None means "G = k"
REPRESENTABLE = {"VVV": (FamilyKind.CPC, None), "VEE": (FamilyKind.PROP, 1), "VVE": (FamilyKind.CPC, 1)}


def bic(loglik: float, p: int, N: int) -> float:
    """``2 * loglik - log(N) * p``."""
    if N < 1 or p < 0:
        raise ValueError("need N >= 1 and p >= 0")
    return 2.0 * loglik - math.log(N) * p


def df(kind, k: int, d: int, context=Context.CLUSTERING) -> int:
    """Number of free parameters.

    Parameters
    ----------
    kind : IntermediateFamily, ParsimoniousLevel or level code
    context : {"clustering", "discriminant"}
        Mixture weights are counted (``k - 1``) only for clustering.
    """
    context = Context(context)
    if isinstance(kind, IntermediateFamily):
        cov = intermediate_param_count(kind, k, d)
    else:
        cov = cov_param_count(get_level(kind), k, d)
    weights = k - 1 if context is Context.CLUSTERING else 0
    return weights + k * d + cov


def as_family(candidate, k: int) -> IntermediateFamily:
    """Map a candidate (family, level code or ``(kind, G)`` pair) to a family.

    Raises
    ------
    ValueError
        For a classical level that is not representable.
    """
    if isinstance(candidate, IntermediateFamily):
        return candidate
    if isinstance(candidate, (tuple, list)):
        return IntermediateFamily(FamilyKind(candidate[0]), candidate[1])
    code = candidate.code if isinstance(candidate, ParsimoniousLevel) else str(candidate).upper()
    if code not in REPRESENTABLE:
        raise ValueError(f"level {code} is counted but not fitted")
    kind, G = REPRESENTABLE[code]
    return IntermediateFamily(kind, k if G is None else G)


def candidate_name(candidate) -> str:
    if isinstance(candidate, IntermediateFamily):
        return candidate.name
    if isinstance(candidate, (tuple, list)):
        return IntermediateFamily(FamilyKind(candidate[0]), candidate[1]).name
    if isinstance(candidate, ParsimoniousLevel):
        return candidate.code
    return str(candidate).upper()


@dataclass
class SweepRow:
    candidate: str
    loglik: float | None
    df: int | None
    bic: float | None
    error: str | None = None


def _sort_key(row: SweepRow):
    # failed rows last, then BIC descending, then name for a stable order
    failed = row.error is not None or row.bic is None
    return (failed, -(row.bic if not failed else 0.0), row.candidate)


def sweep(X, k: int, candidates, context=Context.CLUSTERING, labels=None, threads: int = 1, **fit_options):
    """Fit every candidate and rank the results by BIC.

    Failed fits do not abort the sweep; their row carries the error message
    and sorts last. The ranking does not depend on the candidate order.

    Parameters
    ----------
    X : array_like, shape (N, d)
    k : int
        Number of components (clustering) or groups (discriminant).
    candidates : sequence
        ``IntermediateFamily`` objects, ``(kind, G)`` pairs or level codes.
    context : {"clustering", "discriminant"}
    labels : array_like, optional
        Required for discriminant sweeps.
    fit_options
        Passed on to :func:`ipgmm.mixture.fit_clustering` or
        :func:`ipgmm.discriminant.fit_da`.

    Returns
    -------
    list of SweepRow
    """
    from .discriminant import fit_da
    from .mixture import fit_clustering

    context = Context(context)
    candidates = list(candidates)
    if not candidates:
        raise ValueError("empty candidate list")
    if context is Context.DISCRIMINANT and labels is None:
        raise ValueError("discriminant sweep needs labels")

    def run(cand):
        name = candidate_name(cand)
        try:
            fam = as_family(cand, k)
            if context is Context.CLUSTERING:
                _, rep = fit_clustering(X, k, fam, **fit_options)
            else:
                _, rep = fit_da(X, labels, fam, **fit_options)
            return SweepRow(name, rep.loglik, rep.df, rep.bic)
        except Exception as exc:  # recorded per row by contract
            return SweepRow(name, None, None, None, f"{type(exc).__name__}: {exc}")

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            rows = list(ex.map(run, candidates))
    else:
        rows = [run(c) for c in candidates]
    return sorted(rows, key=_sort_key)


def sweep_table(rows) -> str:
    """Aligned plain-text rendering of a sweep."""
    lines = [f"{'model':<10} {'loglik':>14} {'df':>5} {'BIC':>14}"]
    for r in rows:
        if r.error is not None:
            lines.append(f"{r.candidate:<10} {'failed':>14} {'':>5} {'':>14}  {r.error}")
        else:
            lines.append(f"{r.candidate:<10} {r.loglik:>14.3f} {r.df:>5d} {r.bic:>14.3f}")
    return "\n".join(lines)


def sweep_json(rows) -> str:
    return json.dumps([asdict(r) for r in rows], indent=2)
