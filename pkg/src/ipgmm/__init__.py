"""Gaussian mixtures with intermediate parsimonious covariance structures.

Covariance matrices are grouped into ``G`` classes. Within a class they
share their principal axes (G-CPC) or are proportional to one another
(G-PROP). The package covers the classification of covariance matrices,
constrained EM clustering, discriminant analysis, BIC-based selection and
simulation designs.
"""

from .covclass import CovClassModel, classify_covariances
from .discriminant import DAModel, cv_error, fit_da, loo_error, mm_error, predict
from .mixture import FitReport, MixtureModel, e_step, fit_clustering, hard_assign, loglik, m_step
from .selection import bic, df, sweep
from .spectral import FamilyKind, IntermediateFamily, compose, decompose

__version__ = "0.1.0"

__all__ = [
    "CovClassModel",
    "DAModel",
    "FamilyKind",
    "FitReport",
    "IntermediateFamily",
    "MixtureModel",
    "bic",
    "classify_covariances",
    "compose",
    "cv_error",
    "decompose",
    "df",
    "e_step",
    "fit_clustering",
    "fit_da",
    "hard_assign",
    "loglik",
    "loo_error",
    "m_step",
    "mm_error",
    "predict",
    "sweep",
]
