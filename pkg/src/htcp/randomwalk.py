"""Supremum of a negative-drift random walk.

Two grid constructions of the law of ``M = sup_n S_n`` are provided:

* the Spitzer route, which sums ``n^-1`` times the positive part of the
  n-step law into a Levy measure ``nu`` and then takes the compound Poisson
  law with that Levy measure;
* the ladder route, a geometric compound of a given ascending ladder-height
  density.

A vectorized Monte Carlo simulator with a stopping barrier serves as an
independent check.
"""

from __future__ import annotations

import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .asymptotics import TailRatioReport, TailWindow, _summarize
from .compound import (NegBinCompoundSpec, PoissonCompoundSpec, SeriesReport,
                       negbin_compound, poisson_compound, with_atom)
from .errors import (GridError, PathLengthError, SpitzerConvergenceError,
                     SupportOverflowError, WindowError)
from .kernel import (AtomPlusDensity, GridDensity, _offset, convolve, crop_positive,
                     discretize, embed, interval_mass, restrict_positive)

log = logging.getLogger(__name__)

MAX_PATH_STEPS = 10 ** 7
DEFAULT_BARRIER_CAP = 400.0


@dataclass(frozen=True, eq=False)
class WalkSpec:
    """Random walk with step law ``step_density`` on a two-sided grid.

    ``defect_side`` says where the step grid's missing mass lies: beyond the
    right edge for steps ``Y - c`` with ``Y >= 0``, beyond the left edge for
    mirrored steps ``-Y - c``.
    """

    step_density: GridDensity
    mean: float
    spitzer_depth: int = 200
    mc_paths: int = 100_000
    mc_barrier: float | None = None
    seed: int = 0
    defect_bound: float = 1e-9
    series_tol: float = 1e-12
    defect_side: str = "right"

    def __post_init__(self):
        if self.defect_side not in ("left", "right"):
            raise GridError(f"defect_side must be 'left' or 'right', got {self.defect_side!r}")
        if not (self.mean < 0 and math.isfinite(self.mean)):
            raise GridError(f"walk mean must be finite and negative, got {self.mean}")
        if self.spitzer_depth < 1:
            raise GridError("spitzer_depth must be >= 1")
        if self.mc_barrier is not None and not self.mc_barrier > 0:
            raise GridError("mc_barrier must be positive")
        if self.mc_paths < 1:
            raise GridError("mc_paths must be >= 1")
        _offset(self.step_density, 0.0)  # x = 0 must be a cell edge

    def barrier(self, cap: float = DEFAULT_BARRIER_CAP) -> float:
        if self.mc_barrier is not None:
            return float(self.mc_barrier)
        return min(40.0 * math.sqrt(self.step_density.right * abs(self.mean)), cap)


def shifted_walk(family, shift: float, *, step: float, left: float, right: float, sign: int = 1,
                 **kwargs) -> WalkSpec:
    """Walk with steps ``sign * Y - shift``, ``Y ~ family``, gridded on ``[-left, right)``."""
    n_left = int(round(left / step))
    n_right = int(round(right / step))
    origin = -n_left * step
    rho = discretize(family, origin, step, n_left + n_right, loc=-shift, sign=sign)
    kwargs.setdefault("defect_side", "right" if sign > 0 else "left")
    return WalkSpec(rho, sign * family.mean() - shift, **kwargs)


def family_sampler(family, shift: float, sign: int = 1) -> Callable:
    """Sampler ``(rng, size) -> steps`` for ``sign * Y - shift``."""
    def sample(rng, size):
        return sign * family.sample(rng, size) - shift
    return sample


@dataclass(frozen=True, eq=False)
class SpitzerResult:
    nu: GridDensity
    B_partial: float
    tail_gap: float
    per_n_positive_mass: np.ndarray
    left_loss: float = 0.0

    def to_dict(self) -> dict:
        return {"B_partial": self.B_partial, "tail_gap": self.tail_gap,
                "terms": int(self.per_n_positive_mass.size), "left_loss": self.left_loss,
                "nu_mass": self.nu.mass, "nu_defect": self.nu.defect,
                "per_n_positive_mass": self.per_n_positive_mass.tolist()}


@dataclass(frozen=True, eq=False)
class SupremumResult:
    pi: AtomPlusDensity
    lambda_rw: float
    source: str
    B: float = math.nan
    report: SeriesReport | None = None

    def cdf(self, x):
        return self.pi.cdf(x)

    def to_dict(self) -> dict:
        out = {"source": self.source, "atom": self.pi.atom, "lambda_rw": self.lambda_rw,
               "defect": self.pi.defect, "B": self.B}
        if self.report is not None:
            out["series"] = {"terms_used": self.report.terms_used,
                             "residual_weight": self.report.residual_weight,
                             "defect": self.report.defect}
        return out


def _tail_gap(a: np.ndarray) -> float:
    """Extrapolated ``sum_{n>N} a_n`` from the last five terms, power or geometric fit."""
    n_terms = a.size
    if n_terms < 5:
        return math.nan
    n = np.arange(n_terms - 4, n_terms + 1, dtype=float)
    last = a[-5:]
    if np.any(last <= 0):
        return 0.0
    y = np.log(last)
    fits = {}
    for kind, x in (("power", np.log(n)), ("geometric", n)):
        coef = np.polyfit(x, y, 1)
        fits[kind] = (float(np.sum((np.polyval(coef, x) - y) ** 2)), coef[0])
    kind = min(fits, key=lambda k: fits[k][0])
    slope = fits[kind][1]
    big_n, a_n = n[-1], last[-1]
    if kind == "power":
        beta = -slope
        if beta <= 1:
            return math.inf
        return float(a_n * big_n ** beta * (big_n + 0.5) ** (1 - beta) / (beta - 1))
    r = math.exp(slope)
    if r >= 1:
        return math.inf
    return float(a_n * r / (1 - r))


def spitzer_nu(spec: WalkSpec) -> SpitzerResult:
    """``nu = sum_{n<=N} n^-1 rho^{n*}`` restricted to ``(0, inf)`` and ``B = nu((0, inf))``.

    ``rho^{n*}`` is built one convolution per step and kept on the step
    grid.  Mass leaving on the right is still positive and is counted in
    ``nu``'s defect; mass leaving on the left is treated as never returning,
    and an error is raised when that assumption could move ``B`` by more than
    ``spec.defect_bound``.
    """
    rho = spec.step_density
    origin, n_cells, h = rho.origin, rho.n_cells, rho.step
    rho_clean = rho.with_values(rho.values, 0.0)
    rho_right = rho.defect if spec.defect_side == "right" else 0.0
    rho_left = rho.defect - rho_right
    # chance that one step jumps over the whole left part of the grid
    k_back = 2 * int(round(-origin / h))
    tails = rho.tail_at_edges()
    jump_left = (float(tails[k_back]) if k_back < tails.size else 0.0) + rho_right
    # rho^{n*} vanishes beyond n times the top edge of rho; cut spectral noise there
    nz = np.flatnonzero(rho.values)
    top = int(nz[-1]) + 1 if nz.size else 0
    n_left = k_back // 2

    nu_values = np.zeros(n_cells)
    power = rho_clean
    right_lost = rho_right
    left_lost = rho_left
    positive, nu_right = [], 0.0
    for n in range(1, spec.spitzer_depth + 1):
        if n > 1:
            in_mass = power.mass
            full = convolve(power, rho_clean)
            cut = full.values.copy()
            cut[max(n * top - (n - 2) * n_left, 0):] = 0.0
            placed, lost_l, lost_r = embed(full.with_values(cut), origin, n_cells)
            power = placed.with_values(placed.values, 0.0)
            right_lost += lost_r + in_mass * rho_right
            left_lost += lost_l + in_mass * rho_left
            if left_lost * spec.spitzer_depth * jump_left > spec.defect_bound:
                raise SupportOverflowError(
                    f"step {n}: {left_lost:.3e} mass left the grid on the left; widen the grid")
        pos = restrict_positive(power)
        p_n = pos.mass + right_lost
        positive.append(p_n)
        nu_values += pos.values / n
        nu_right += right_lost / n
    positive = np.array(positive)
    if positive.size >= 6:
        late = positive[-6:]
        grow = (late[1:] > 1.01 * late[:-1]) & (late[1:] > 1e-12)
        if grow.any():
            raise SpitzerConvergenceError("P(S_n > 0) is not decreasing over the last terms; refine the grid")
    a = positive / np.arange(1, positive.size + 1)
    B = float(a.sum())
    nu = crop_positive(GridDensity(origin, h, nu_values, nu_right))
    return SpitzerResult(nu, B, _tail_gap(a), positive, left_lost)


def supremum_from_nu(sr: SpitzerResult, tol: float = 1e-12) -> SupremumResult:
    """Compound Poisson law with Levy measure ``nu``: atom ``e^-B`` at 0."""
    B = sr.B_partial
    if B <= 0:
        empty = GridDensity(sr.nu.origin, sr.nu.step, np.zeros(sr.nu.n_cells), 0.0)
        return SupremumResult(AtomPlusDensity(1.0, empty), 0.0, "spitzer", 0.0)
    phi = sr.nu.scaled(1.0 / B)
    p, report = poisson_compound(PoissonCompoundSpec(B, 1.0, phi, tol))
    return SupremumResult(with_atom(p, math.exp(-B)), -math.expm1(-B), "spitzer", B, report)


def supremum_from_ladder(f_plus: GridDensity, lambda_rw: float, tol: float = 1e-12) -> SupremumResult:
    """``(1 - lambda) delta_0 + lambda * geometric compound of the ladder density``."""
    if not 0 < lambda_rw < 1:
        raise GridError(f"lambda_rw must lie in (0, 1), got {lambda_rw}")
    p, report = negbin_compound(NegBinCompoundSpec(1.0, lambda_rw, f_plus, tol))
    return SupremumResult(with_atom(p, 1.0 - lambda_rw), lambda_rw, "ladder", -math.log1p(-lambda_rw), report)


def theorem42_ratio(spec: WalkSpec, rho_tail: Callable, w: TailWindow, tol: float = 0.2, *,
                    c: float = 1.0, spitzer: SpitzerResult | None = None) -> TailRatioReport:
    """Ratios ``(1 - e^-B) p(x) |E X| / rho_bar(x)`` from the Spitzer-route supremum.

    The interval form ``pi((x, x+c]) |E X| / (c rho_bar(x))`` is summarized
    under ``notes["interval"]``.
    """
    sr = spitzer if spitzer is not None else spitzer_nu(spec)
    xs = w.points()
    tails = np.asarray(rho_tail(xs), dtype=float)
    if sr.B_partial <= 0 or np.all(tails <= 0):
        return TailRatioReport("theorem42", w, xs, np.zeros(0), math.nan, math.nan, (), False, 1.0, tol,
                               None, "no positive tail", 0, {"B_partial": sr.B_partial})
    sup = supremum_from_nu(sr, spec.series_tol)
    dens = sup.pi.density
    if w.x_hi + c > dens.right:
        raise WindowError("window deeper than the resolved Levy measure")
    drift = abs(spec.mean)
    # nu near x_hi is fed by n-th step jumps of size ~ x_hi + n |E X|
    reach_ok = spec.step_density.right >= w.x_hi + spec.spitzer_depth * drift
    if not reach_ok:
        log.warning("step grid ends at %g, short of x_hi + depth |E X| = %g; deep tail ratios are biased low",
                    spec.step_density.right, w.x_hi + spec.spitzer_depth * drift)
    num = dens.value_at(xs) * drift
    interval = np.array([interval_mass(sup.pi, x, c) for x in xs]) * drift / c
    inner = _summarize("theorem42_interval", w, xs, interval, tails, expected=1.0, tol=tol,
                       names=("interval law holds", "interval law fails"))
    notes = {"B_partial": sr.B_partial, "tail_gap": sr.tail_gap, "spitzer_depth": spec.spitzer_depth,
             "jump_reach_ok": reach_ok,
             "interval": {"c": c, "limit_estimate": inner.limit_estimate, "passed": inner.passed,
                          "trend_ok": inner.trend_ok}}
    return _summarize("theorem42", w, xs, num, tails, expected=1.0, tol=tol,
                      names=("tail law holds", "tail law fails"), notes=notes)


# -- Monte Carlo --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MonteCarloResult:
    maxima: np.ndarray  # sorted
    barrier: float
    bias_proxy: float
    seed: int
    notes: dict = field(default_factory=dict)

    @property
    def paths(self) -> int:
        return self.maxima.size

    @property
    def positive_fraction(self) -> float:
        return float(np.count_nonzero(self.maxima > 0) / self.paths)

    @property
    def positive_se(self) -> float:
        p = self.positive_fraction
        return math.sqrt(max(p * (1 - p), 0.0) / self.paths)

    def ecdf(self, x):
        return np.searchsorted(self.maxima, np.asarray(x, dtype=float), side="right") / self.paths

    def to_csv(self, path=None, x=None):
        if x is None:
            top = float(self.maxima[-1]) if self.paths else 0.0
            x = np.linspace(0.0, top, 1001)
        buf = io.StringIO()
        buf.write("x,F\n")
        for xi, fi in zip(np.asarray(x, float).tolist(), self.ecdf(x).tolist()):
            buf.write(f"{xi!r},{fi!r}\n")
        if path is None:
            return buf.getvalue()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(buf.getvalue())

    def to_dict(self) -> dict:
        return {"paths": self.paths, "barrier": self.barrier, "bias_proxy": self.bias_proxy,
                "seed": self.seed, "positive_fraction": self.positive_fraction,
                "positive_se": self.positive_se, **self.notes}


def _batch_rng(seed: int, index: int) -> np.random.Generator:
    # Philox is counter based: the key selects an independent stream per batch
    return np.random.Generator(np.random.Philox(key=(int(seed) & (2 ** 64 - 1)) | (index << 64)))


def _simulate_batch(sampler, seed, index, size, barrier, max_steps, block):
    rng = _batch_rng(seed, index)
    s = np.zeros(size)
    m = np.zeros(size)
    ids = np.arange(size)
    out = np.empty(size)
    steps = 0
    while ids.size:
        if steps >= max_steps:
            raise PathLengthError(f"{ids.size} paths still above the barrier after {max_steps} steps")
        x = sampler(rng, (ids.size, block))
        path = s[:, None] + np.cumsum(x, axis=1)
        run_max = np.maximum(np.maximum.accumulate(path, axis=1), m[:, None])
        below = path < -barrier
        hit = below.any(axis=1)
        first = np.argmax(below, axis=1)
        rows = np.nonzero(hit)[0]
        out[ids[rows]] = run_max[rows, first[rows]]
        stay = ~hit
        s, m, ids = path[stay, -1], run_max[stay, -1], ids[stay]
        steps += block
    return out


def montecarlo_supremum(spec: WalkSpec, sampler: Callable, *, threads: int = 1, batch_size: int = 1 << 16,
                        barrier_cap: float = DEFAULT_BARRIER_CAP, max_steps: int = MAX_PATH_STEPS,
                        block: int = 32) -> MonteCarloResult:
    """Simulate maxima of ``spec.mc_paths`` paths stopped once ``S_n < -K``.

    Batch ``i`` draws from its own Philox stream keyed by ``(seed, i)``, so the
    result does not depend on ``threads``.  ``bias_proxy`` is the fraction of
    paths whose maximum came within ``K/10`` of ``K``; a large value means the
    barrier is too shallow for the tail being simulated.
    """
    barrier = spec.barrier(barrier_cap)
    sizes = [min(batch_size, spec.mc_paths - i) for i in range(0, spec.mc_paths, batch_size)]
    args = [(sampler, spec.seed, i, n, barrier, max_steps, block) for i, n in enumerate(sizes)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda a: _simulate_batch(*a), args))
    else:
        parts = [_simulate_batch(*a) for a in args]
    maxima = np.sort(np.concatenate(parts))
    bias = float(np.count_nonzero(maxima >= 0.9 * barrier) / maxima.size)
    return MonteCarloResult(maxima, barrier, bias, spec.seed)


def kolmogorov_distance(pi: AtomPlusDensity, maxima: np.ndarray, x_upper: float | None = None) -> float:
    """Sup distance between the grid law ``pi`` and the empirical law of ``maxima``.

    Both one-sided limits of the empirical CDF are compared at every distinct
    sample, which finds the supremum for a law continuous off the atom at 0.
    """
    xs = np.unique(maxima)
    if x_upper is not None:
        xs = xs[xs <= x_upper]
    n = maxima.size
    f_right = np.searchsorted(maxima, xs, side="right") / n
    f_left = np.searchsorted(maxima, xs, side="left") / n
    model = pi.cdf(xs)
    model_left = np.where(xs == 0, 0.0, model)
    return float(max(np.max(np.abs(f_right - model)), np.max(np.abs(f_left - model_left))))
