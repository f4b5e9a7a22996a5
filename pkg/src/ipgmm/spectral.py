"""Size/shape/orientation decomposition of covariance matrices.

A positive definite matrix is written as ``gamma * beta @ diag(shape) @ beta.T``
with ``gamma = det(S) ** (1/d)``, ``prod(shape) == 1`` and ``beta`` orthogonal.
The module also holds the registry of the fourteen classical parsimonious
levels, the parameter counts of the grouped (G-CPC / G-PROP) families, and
the Wishart discrepancy that every fitting objective is built from.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidGError, InvalidMatrixError, InvalidShapeError, SingularMatrixError

TOL_PSD = 1e-10
TOL_PD = 1e-12


def sym_matrix(a, tol_psd: float = TOL_PSD) -> np.ndarray:
    """Validate ``a`` as a symmetric positive semidefinite matrix.

    The input is symmetrized by averaging with its transpose. Eigenvalues
    below ``-tol_psd * max|eigenvalue|`` are rejected.

    Raises
    ------
    InvalidMatrixError
        If ``a`` is not square, not finite, or is indefinite.
    """
    s = np.array(a, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1] or s.shape[0] == 0:
        raise InvalidMatrixError(f"expected a non-empty square matrix, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise InvalidMatrixError("matrix contains non-finite entries")
    s = 0.5 * (s + s.T)
    w = np.linalg.eigvalsh(s)
    scale = np.max(np.abs(w))
    if w[0] < -tol_psd * scale:
        raise InvalidMatrixError(f"matrix is not positive semidefinite (min eigenvalue {w[0]:.3g})")
    return s


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # largest-magnitude coordinate of every column made positive
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def eigh_sym(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Eigenvector signs are fixed so that the largest-magnitude entry of each
    column is positive, which makes the result deterministic. Exactly tied
    eigenvalues keep the solver's column order.
    """
    w, v = np.linalg.eigh(s)
    order = np.argsort(-w, kind="stable")
    return w[order], _fix_signs(v[:, order])


@dataclass(frozen=True)
class SpectralDecomp:
    """``S = gamma * orientation @ diag(shape) @ orientation.T``."""

    gamma: float
    shape: np.ndarray
    orientation: np.ndarray

    def compose(self) -> np.ndarray:
        return compose(self.gamma, self.shape, self.orientation)


def decompose(s) -> SpectralDecomp:
    """Split a positive definite matrix into size, shape and orientation.

    Raises
    ------
    SingularMatrixError
        If the smallest eigenvalue is not above ``1e-12`` times the largest.
    """
    s = sym_matrix(s)
    w, v = eigh_sym(s)
    if w[-1] <= TOL_PD * w[0]:
        raise SingularMatrixError("matrix is not strictly positive definite")
    logw = np.log(w)
    gamma = float(np.exp(logw.mean()))
    shape = np.exp(logw - logw.mean())
    return SpectralDecomp(gamma, shape, v)


def compose(gamma: float, shape, orientation) -> np.ndarray:
    """Build ``gamma * B diag(shape) B^T``; ``shape`` must have unit product."""
    shape = np.asarray(shape, dtype=float)
    if np.any(shape <= 0) or abs(np.prod(shape) - 1.0) > 1e-6:
        raise InvalidShapeError(f"shape must be positive with unit product, got {shape}")
    b = np.asarray(orientation, dtype=float)
    out = gamma * (b * shape) @ b.T
    return 0.5 * (out + out.T)


def wishart_discrepancy(s, n: float, sigma) -> float:
    """Return ``n * (log|sigma| + tr(sigma^-1 s))``.

    Up to an additive constant that depends only on ``(s, n)``, this is
    ``-2`` times the log Wishart density of ``n s`` with scale ``sigma``.
    """
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("sigma is not positive definite") from exc
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    sol = np.linalg.solve(chol, s)
    tr = np.trace(np.linalg.solve(chol.T, sol))
    return float(n * (logdet + tr))


# --- parsimonious level registry ---------------------------------------------------------


class Flag(str, Enum):
    EQUAL = "equal"
    VARIABLE = "variable"
    SPHERICAL = "spherical"
    CANONICAL = "canonical"
    ABSENT = "absent"


@dataclass(frozen=True)
class ParsimoniousLevel:
    code: str
    size: Flag
    shape: Flag
    orientation: Flag


_E, _V = Flag.EQUAL, Flag.VARIABLE
LEVELS: dict[str, ParsimoniousLevel] = {
    lvl.code: lvl
    for lvl in (
        ParsimoniousLevel("EII", _E, Flag.SPHERICAL, Flag.ABSENT),
        ParsimoniousLevel("VII", _V, Flag.SPHERICAL, Flag.ABSENT),
        ParsimoniousLevel("EEI", _E, _E, Flag.CANONICAL),
        ParsimoniousLevel("EVI", _E, _V, Flag.CANONICAL),
        ParsimoniousLevel("VEI", _V, _E, Flag.CANONICAL),
        ParsimoniousLevel("VVI", _V, _V, Flag.CANONICAL),
        ParsimoniousLevel("EEE", _E, _E, _E),
        ParsimoniousLevel("EEV", _E, _E, _V),
        ParsimoniousLevel("EVE", _E, _V, _E),
        ParsimoniousLevel("VEE", _V, _E, _E),
        ParsimoniousLevel("VVE", _V, _V, _E),
        ParsimoniousLevel("EVV", _E, _V, _V),
        ParsimoniousLevel("VEV", _V, _E, _V),
        ParsimoniousLevel("VVV", _V, _V, _V),
    )
}


def get_level(level) -> ParsimoniousLevel:
    if isinstance(level, ParsimoniousLevel):
        return level
    try:
        return LEVELS[str(level).upper()]
    except KeyError:
        raise ValueError(f"unknown parsimonious level {level!r}") from None


def cov_param_count(level, k: int, d: int) -> int:
    """Number of free covariance parameters of a parsimonious level."""
    lvl = get_level(level)
    size = 1 if lvl.size is Flag.EQUAL else k
    shape = {Flag.SPHERICAL: 0, Flag.EQUAL: d - 1, Flag.VARIABLE: k * (d - 1)}[lvl.shape]
    rot = d * (d - 1) // 2
    orient = {Flag.ABSENT: 0, Flag.CANONICAL: 0, Flag.EQUAL: rot, Flag.VARIABLE: k * rot}[
        lvl.orientation
    ]
    return size + shape + orient


class FamilyKind(str, Enum):
    CPC = "cpc"
    PROP = "prop"


@dataclass(frozen=True)
class IntermediateFamily:
    """Covariances grouped into ``G`` classes sharing axes (CPC) or a matrix (PROP)."""

    kind: FamilyKind
    G: int

    def __post_init__(self):
        object.__setattr__(self, "kind", FamilyKind(self.kind))
        if int(self.G) != self.G or self.G < 1:
            raise InvalidGError(f"G must be a positive integer, got {self.G}")
        object.__setattr__(self, "G", int(self.G))

    @property
    def name(self) -> str:
        return f"{self.G}-{self.kind.value.upper()}"

    def check(self, k: int) -> None:
        if not 1 <= self.G <= k:
            raise InvalidGError(f"G={self.G} outside [1, k={k}]")


def intermediate_param_count(family: IntermediateFamily, k: int, d: int) -> int:
    """Free covariance parameters of a G-CPC or G-PROP family."""
    rot = family.G * d * (d - 1) // 2
    if family.kind is FamilyKind.CPC:
        return k + k * (d - 1) + rot
    return k + family.G * (d - 1) + rot
