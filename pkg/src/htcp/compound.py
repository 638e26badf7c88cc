"""Compound Poisson, negative-binomial and logarithmic sums of a severity density.

All three series have the form ``sum_{n>=1} w_n f^{n(x)}`` with probability
weights ``w_n`` whose tails are known in closed form, so each series is cut at
the smallest ``N`` whose residual weight drops below ``tol``.  The returned
density carries the residual weight in its defect; the side report keeps the
residual and the support defect apart.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import special

from .errors import GridError, SeriesTruncationError
from .kernel import AtomPlusDensity, GridDensity, _offset, convolve, embed

MAX_TERMS = 512


@dataclass(frozen=True)
class SeriesReport:
    terms_used: int
    residual_weight: float
    defect: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass(frozen=True, eq=False)
class PoissonCompoundSpec:
    lam: float
    t: float
    severity: GridDensity
    tol: float = 1e-12
    max_terms: int = MAX_TERMS

    def __post_init__(self):
        if not (self.lam > 0 and self.t > 0 and self.tol > 0):
            raise GridError("lambda, t and tol must be positive")
        if self.severity.total_mass > 1 + 1e-9:
            raise GridError("severity mass exceeds 1")


@dataclass(frozen=True, eq=False)
class NegBinCompoundSpec:
    alpha: float
    lam: float
    severity: GridDensity
    tol: float = 1e-12
    max_terms: int = MAX_TERMS

    def __post_init__(self):
        if not 0 < self.lam < 1:
            raise GridError(f"lambda must lie in (0, 1), got {self.lam}")
        if not (self.alpha > 0 and self.tol > 0):
            raise GridError("alpha and tol must be positive")

    @property
    def delta(self) -> float:
        return -math.log1p(-self.lam)

    @property
    def c0(self) -> float:
        return math.exp(-self.alpha * self.delta)

    @property
    def one_minus_c0(self) -> float:
        return -math.expm1(-self.alpha * self.delta)


# -- weights and their residuals ------------------------------------------


def poisson_weights(mu: float, n_max: int) -> np.ndarray:
    """``mu^n / n! / (e^mu - 1)`` for ``n = 1..n_max``."""
    n = np.arange(1, n_max + 1)
    return np.exp(n * math.log(mu) - special.gammaln(n + 1) - math.log(math.expm1(mu)))


def poisson_residual(mu: float, n: int) -> float:
    return float(special.gammainc(n + 1, mu) / -math.expm1(-mu))


def negbin_weights(alpha: float, lam: float, n_max: int) -> np.ndarray:
    """``c0/(1-c0) * binom(alpha+n-1, alpha-1) * lam^n`` for ``n = 1..n_max``."""
    n = np.arange(1, n_max + 1)
    log_binom = special.gammaln(alpha + n) - special.gammaln(alpha) - special.gammaln(n + 1)
    one_minus_c0 = -math.expm1(alpha * math.log1p(-lam))
    return np.exp(alpha * math.log1p(-lam) - math.log(one_minus_c0) + log_binom + n * math.log(lam))


def negbin_residual(alpha: float, lam: float, n: int) -> float:
    return float(special.betainc(n + 1, alpha, lam) / -math.expm1(alpha * math.log1p(-lam)))


def log_weights(lam: float, n_max: int) -> np.ndarray:
    """``lam^n / (n * delta)`` for ``n = 1..n_max``."""
    n = np.arange(1, n_max + 1)
    return np.exp(n * math.log(lam) - np.log(n)) / -math.log1p(-lam)


def log_residual(lam: float, n: int) -> float:
    delta = -math.log1p(-lam)
    total = 0.0
    start = n + 1
    while True:
        k = np.arange(start, start + 4096)
        terms = np.exp(k * math.log(lam) - np.log(k))
        total += float(terms.sum())
        if terms[-1] <= 1e-18 * max(total, 1e-300) or terms[-1] == 0.0:
            return total / delta
        start += 4096


def _terms_needed(residual, tol: float, cap: int) -> int:
    for n in range(1, cap + 1):
        if residual(n) < tol:
            return n
    raise SeriesTruncationError(
        f"series needs more than {cap} terms to reach residual weight {tol:g}",
        cap=cap, needed_weight=residual(cap))


# -- the series engine ------------------------------------------------------


def _series(severity: GridDensity, weights: np.ndarray, residual: float):
    """Sum ``weights[n-1] * severity^{n(x)}`` on the severity grid, ascending in n."""
    if severity.origin < 0:
        raise GridError("compound severities must live on [0, inf)")
    _offset(severity, 0.0)  # origin must sit on a multiple of the step
    origin, n_cells, x_max = severity.origin, severity.n_cells, severity.right
    acc = np.zeros(n_cells)
    support_defect = 0.0
    power = severity
    for n, w in enumerate(weights, start=1):
        if n > 1:
            power = convolve(power, severity, x_max=x_max)
        placed, _, _ = embed(power, origin, n_cells)
        acc += w * placed.values
        support_defect += w * placed.defect
    report = SeriesReport(len(weights), float(residual), float(support_defect))
    return GridDensity(origin, severity.step, acc, support_defect + residual), report


def poisson_compound(spec: PoissonCompoundSpec):
    """``p^t = (e^{lam t} - 1)^-1 sum (lam t)^n/n! phi^{n(x)}``; returns ``(density, report)``."""
    mu = spec.lam * spec.t
    n = _terms_needed(lambda k: poisson_residual(mu, k), spec.tol, spec.max_terms)
    return _series(spec.severity, poisson_weights(mu, n), poisson_residual(mu, n))


def negbin_compound(spec: NegBinCompoundSpec):
    """Negative-binomial compound; ``alpha = 1`` gives the geometric series."""
    a, lam = spec.alpha, spec.lam
    n = _terms_needed(lambda k: negbin_residual(a, lam, k), spec.tol, spec.max_terms)
    return _series(spec.severity, negbin_weights(a, lam, n), negbin_residual(a, lam, n))


def log_compound(spec: NegBinCompoundSpec):
    """Logarithmic compound ``delta^-1 sum lam^n/n f^{n(x)}``; ``alpha`` is ignored."""
    lam = spec.lam
    n = _terms_needed(lambda k: log_residual(lam, k), spec.tol, spec.max_terms)
    return _series(spec.severity, log_weights(lam, n), log_residual(lam, n))


def lemma41_identity_check(alpha: float, lam: float, f: GridDensity, tol: float = 1e-12) -> float:
    """L1 distance between the negative-binomial compound of ``f`` and the
    Poisson compound (mass ``alpha * delta``) of the logarithmic compound of ``f``.

    The two routes build their own convolution ladders from ``f``.
    """
    direct, _ = negbin_compound(NegBinCompoundSpec(alpha, lam, f, tol))
    nb = NegBinCompoundSpec(alpha, lam, f, tol)
    phi, _ = log_compound(nb)
    via_log, _ = poisson_compound(PoissonCompoundSpec(alpha * nb.delta, 1.0, phi, tol))
    return float(np.abs(direct.values - via_log.values).sum() * f.step)


def with_atom(p: GridDensity, atom: float) -> AtomPlusDensity:
    """``atom * delta_0 + (1 - atom) * p``."""
    if not 0.0 <= atom < 1.0:
        raise GridError(f"atom must lie in [0, 1), got {atom}")
    return AtomPlusDensity(atom, p.scaled(1.0 - atom))
