"""Synthetic data for illustrations and model-recovery experiments.

Recovery designs are JSON files with six groups split into two covariance
classes. A G-PROP design gives ``Sigma_i = lambda_i A_{class(i)}``; a G-CPC
design gives ``Sigma_i = lambda_i B_{class(i)} diag(shape_i) B_{class(i)}^T``.
Two designs ship with the package (``default-2prop`` and ``default-2cpc``);
any file with the same keys can be used instead.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import SingularMatrixError, TooFewObservationsError
from .selection import REPRESENTABLE, Context, as_family
from .spectral import FamilyKind, IntermediateFamily

BASELINES = tuple(REPRESENTABLE)


def random_cov_2d(rng) -> np.ndarray:
    """``X * U(a) diag(1, Y) U(a)^T`` with ``X ~ U(0.5, 2)``, ``Y ~ U(0, 0.5)``,
    ``a ~ U(0, pi)``; ``Y`` is redrawn until it exceeds ``1e-9``."""
    x = rng.uniform(0.5, 2.0)
    y = rng.uniform(0.0, 0.5)
    while y <= 1e-9:
        y = rng.uniform(0.0, 0.5)
    a = rng.uniform(0.0, math.pi)
    u = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    return x * (u * [1.0, y]) @ u.T


def sample_gaussian(mu, sigma, n: int, rng) -> np.ndarray:
    """``n`` draws from ``N(mu, sigma)``, shape (n, d)."""
    mu = np.asarray(mu, dtype=float)
    try:
        chol = np.linalg.cholesky(np.asarray(sigma, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("sigma is not positive definite") from exc
    return mu + rng.standard_normal((int(n), len(mu))) @ chol.T


def sample_cov(sigma, n: int, rng) -> np.ndarray:
    """Sample covariance (denominator ``n``) of ``n`` centered-model draws."""
    if n < 2:
        raise TooFewObservationsError("a sample covariance needs n >= 2")
    y = sample_gaussian(np.zeros(len(sigma)), sigma, n, rng)
    c = y - y.mean(axis=0)
    return c.T @ c / n


def illustration_scatters(k: int = 100, n: int = 200, seed=None):
    """``k`` sample covariances, each from ``n`` draws of ``N(0, random_cov_2d)``.

    Returns
    -------
    scatters : ndarray, shape (k, 2, 2)
    sizes : ndarray, shape (k,)
    """
    rng = np.random.default_rng(seed)
    scatters = np.array([sample_cov(random_cov_2d(rng), n, rng) for _ in range(k)])
    return scatters, np.full(k, float(n))


# --- recovery designs --------------------------------------------------------------------


def load_design(design) -> dict:
    """Design by packaged name (``"default-2prop"``), path, or dict."""
    if isinstance(design, dict):
        return design
    path = Path(str(design))
    if path.suffix == ".json" and path.exists():
        return json.loads(path.read_text())
    res = resources.files("ipgmm") / "designs" / f"{design}.json"
    if not res.is_file():
        raise FileNotFoundError(f"no design named {design!r}")
    return json.loads(res.read_text())


def design_covariances(design) -> np.ndarray:
    """True group covariances of a design."""
    design = load_design(design)
    lam = np.asarray(design["lambdas"], dtype=float)
    cls = np.asarray(design["classes"], dtype=int)
    if FamilyKind(design["family"]) is FamilyKind.PROP:
        A = np.asarray(design["A"], dtype=float)
        return lam[:, None, None] * A[cls]
    B = np.asarray(design["orientations"], dtype=float)[cls]
    shapes = np.asarray(design["shapes"], dtype=float)
    return lam[:, None, None] * np.einsum("idl,il,iel->ide", B, shapes, B)


def sample_design(design, n: int, rng):
    """``n`` points per group; returns ``(X, labels)``."""
    design = load_design(design)
    covs = design_covariances(design)
    means = np.asarray(design["means"], dtype=float)
    X = np.vstack([sample_gaussian(means[i], covs[i], n, rng) for i in range(len(means))])
    return X, np.repeat(np.arange(len(means)), n)


def recovery_experiment(
    design,
    setting="clustering",
    n: int = 200,
    replicates: int = 50,
    seed=None,
    baselines=BASELINES,
    threads: int = 1,
    **fit_options,
) -> dict:
    """How often the generating intermediate model beats the baselines on BIC.

    Each replicate draws ``n`` points per group, fits the design's own
    family and every baseline level, and counts a win when the intermediate
    BIC is strictly above the best baseline BIC. A failed baseline fit is
    ignored; a failed intermediate fit is a loss.

    Returns
    -------
    dict
        ``win_rate``, ``wins``, ``replicates`` and one row per replicate.
    """
    from .discriminant import fit_da
    from .mixture import fit_clustering

    design = load_design(design)
    setting = Context(setting)
    k = len(design["means"])
    target = IntermediateFamily(FamilyKind(design["family"]), int(design["G"]))
    children = np.random.SeedSequence(seed).spawn(replicates)

    def fit(X, y, fam, child):
        if setting is Context.CLUSTERING:
            return fit_clustering(X, k, fam, seed=child, **fit_options)[1].bic
        return fit_da(X, y, fam, seed=child, **fit_options)[1].bic

    def one(r):
        rng = np.random.default_rng(children[r])
        X, y = sample_design(design, n, rng)
        fit_seeds = children[r].spawn(1 + len(baselines))
        try:
            own = fit(X, y, target, fit_seeds[0])
        except Exception:
            own = -math.inf
        base = {}
        for name, child in zip(baselines, fit_seeds[1:]):
            try:
                base[name] = fit(X, y, as_family(name, k), child)
            except Exception:
                base[name] = -math.inf
        best = max(base, key=lambda b: base[b])
        return {"replicate": r, "bic": own, "best_baseline": best, "baseline_bic": base[best], "win": own > base[best]}

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            rows = list(ex.map(one, range(replicates)))
    else:
        rows = [one(r) for r in range(replicates)]
    wins = sum(r["win"] for r in rows)
    return {
        "design": design.get("name", "custom"),
        "family": target.name,
        "setting": setting.value,
        "n": n,
        "replicates": replicates,
        "wins": wins,
        "win_rate": wins / replicates if replicates else math.nan,
        "rows": rows,
    }


def win_table(result: dict) -> str:
    head = f"{result['design']} {result['family']} {result['setting']} n={result['n']}"
    return f"{head}\nwins {result['wins']}/{result['replicates']}  rate {result['win_rate']:.3f}"
