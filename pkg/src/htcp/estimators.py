"""scikit-learn style wrappers around the compound and supremum builders.

``fit`` takes a grid density (the severity, or the walk's step law),
``predict`` returns density values at points and ``cdf`` the law's
distribution function including the atom at 0.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator

from .compound import (NegBinCompoundSpec, PoissonCompoundSpec, negbin_compound, poisson_compound,
                       with_atom)
from .randomwalk import WalkSpec, spitzer_nu, supremum_from_nu
from .validation import (check_grid_density, check_is_fitted, check_open_unit, check_points,
                         check_positive)


class _AtomLawMixin:
    """Shared evaluation once ``law_`` (an AtomPlusDensity) is set."""

    def predict(self, x):
        check_is_fitted(self, "law_")
        return self.law_.density.value_at(check_points(x)) / (1.0 - self.law_.atom)

    def cdf(self, x):
        check_is_fitted(self, "law_")
        return self.law_.cdf(check_points(x))

    def transform(self, x):
        return self.cdf(x)

    def score(self, x):
        """Mean log density at ``x`` (absolutely continuous part)."""
        with np.errstate(divide="ignore"):
            return float(np.mean(np.log(self.predict(x))))


class CompoundPoissonDensity(_AtomLawMixin, BaseEstimator):
    """Compound Poisson law with Levy mass ``lam * t`` and severity fitted from a grid."""

    def __init__(self, lam=1.0, t=1.0, tol=1e-12):
        self.lam = lam
        self.t = t
        self.tol = tol

    def fit(self, phi, y=None):
        phi = check_grid_density(phi, name="severity", nonnegative_origin=True)
        lam, t = check_positive(self.lam, "lam"), check_positive(self.t, "t")
        self.density_, self.report_ = poisson_compound(PoissonCompoundSpec(lam, t, phi, check_positive(self.tol, "tol")))
        self.law_ = with_atom(self.density_, math.exp(-lam * t))
        return self


class NegBinCompoundDensity(_AtomLawMixin, BaseEstimator):
    """Negative-binomial compound law; ``alpha=1`` is the geometric compound."""

    def __init__(self, alpha=1.0, lam=0.5, tol=1e-12):
        self.alpha = alpha
        self.lam = lam
        self.tol = tol

    def fit(self, f, y=None):
        f = check_grid_density(f, name="severity", nonnegative_origin=True)
        spec = NegBinCompoundSpec(check_positive(self.alpha, "alpha"), check_open_unit(self.lam, "lam"), f,
                                  check_positive(self.tol, "tol"))
        self.density_, self.report_ = negbin_compound(spec)
        self.law_ = with_atom(self.density_, spec.c0)
        return self


class SpitzerSupremum(_AtomLawMixin, BaseEstimator):
    """Law of the supremum of a negative-drift walk, built from its step density.

    ``fit(rho, mean=...)`` needs the walk's mean step since the grid alone
    loses the far tails.  ``defect_side`` is where the step grid's missing
    mass lies.
    """

    def __init__(self, spitzer_depth=200, defect_bound=1e-9, series_tol=1e-12, defect_side="right"):
        self.spitzer_depth = spitzer_depth
        self.defect_bound = defect_bound
        self.series_tol = series_tol
        self.defect_side = defect_side

    def fit(self, rho, y=None, *, mean):
        rho = check_grid_density(rho, name="step density")
        spec = WalkSpec(rho, float(mean), spitzer_depth=int(self.spitzer_depth),
                        defect_bound=float(self.defect_bound), series_tol=float(self.series_tol),
                        defect_side=self.defect_side)
        self.spitzer_ = spitzer_nu(spec)
        self.result_ = supremum_from_nu(self.spitzer_, spec.series_tol)
        self.law_ = self.result_.pi
        self.B_ = self.spitzer_.B_partial
        self.lambda_rw_ = self.result_.lambda_rw
        return self

    def predict(self, x):
        check_is_fitted(self, "law_")
        if self.law_.atom >= 1.0:
            return np.zeros(check_points(x).size)
        return super().predict(x)
