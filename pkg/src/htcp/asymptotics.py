"""Finite-window numerical verdicts for tail equivalences ``f(x) ~ g(x)``.

``x -> inf`` is sampled on a :class:`TailWindow`.  The limit estimate is the
median ratio over the last quartile of the window and the ratio is deemed
settled when the per-quartile deviation from that estimate does not grow
(10% slack) from one quartile to the next.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .compound import (NegBinCompoundSpec, PoissonCompoundSpec, negbin_compound,
                       poisson_compound)
from .errors import WindowError
from .kernel import (AtomPlusDensity, GridDensity, _snap, conv_power, convolve,
                     convolve_at, convolve_atoms, discretize, interval_mass)

DENOMINATOR_FLOOR = 1e-300
MAX_EXCLUDED = 0.10
TREND_SLACK = 0.10

TOL_LONG_TAIL = 0.02
TOL_SUBEXP = 0.05
TOL_SSTAR = 0.10


@dataclass(frozen=True)
class TailWindow:
    x_lo: float
    x_hi: float
    n_points: int = 64
    spacing: str = "geometric"

    def __post_init__(self):
        if not 0 < self.x_lo < self.x_hi:
            raise WindowError(f"need 0 < x_lo < x_hi, got [{self.x_lo}, {self.x_hi}]")
        if self.n_points < 8:
            raise WindowError("a tail window needs at least 8 points")
        if self.spacing not in ("geometric", "arithmetic"):
            raise WindowError(f"unknown spacing {self.spacing!r}")

    def points(self) -> np.ndarray:
        if self.spacing == "geometric":
            return np.geomspace(self.x_lo, self.x_hi, self.n_points)
        return np.linspace(self.x_lo, self.x_hi, self.n_points)

    def scaled(self, s: float) -> TailWindow:
        return TailWindow(self.x_lo * s, self.x_hi * s, self.n_points, self.spacing)

    def to_dict(self) -> dict:
        return {"x_lo": self.x_lo, "x_hi": self.x_hi, "n_points": self.n_points, "spacing": self.spacing}


@dataclass(frozen=True, eq=False)
class TailRatioReport:
    label: str
    window: TailWindow
    x: np.ndarray
    ratio: np.ndarray
    limit_estimate: float
    max_abs_dev: float
    quartile_devs: tuple
    trend_ok: bool
    expected: float | None
    tol: float | None
    passed: bool | None
    verdict: str
    excluded: int = 0
    notes: dict = field(default_factory=dict)

    @property
    def samples(self):
        return list(zip(self.x.tolist(), self.ratio.tolist()))

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "window": self.window.to_dict(),
            "limit_estimate": self.limit_estimate,
            "max_abs_dev": self.max_abs_dev,
            "quartile_devs": list(self.quartile_devs),
            "trend_ok": self.trend_ok,
            "expected": self.expected,
            "tol": self.tol,
            "passed": self.passed,
            "verdict": self.verdict,
            "excluded": self.excluded,
            "notes": self.notes,
        }

    def to_json(self, **extra) -> str:
        return json.dumps({**self.to_dict(), **extra}, sort_keys=True, indent=2, default=_jsonable)

    def to_csv(self, path=None):
        buf = io.StringIO()
        buf.write("x,ratio\n")
        for x, r in zip(self.x.tolist(), self.ratio.tolist()):
            buf.write(f"{x!r},{r!r}\n")
        if path is None:
            return buf.getvalue()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(buf.getvalue())


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


@dataclass(frozen=True)
class KestenReport:
    epsilon: float
    n_max: int
    x0: float
    C_min: float
    violated: bool
    per_n_max: tuple
    argmax: tuple

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "n_max": self.n_max, "x0": self.x0, "C_min": self.C_min,
                "violated": self.violated, "per_n_max": list(self.per_n_max), "argmax": list(self.argmax)}


def _summarize(label, window, xs, num, den, *, expected, tol, names, notes=None,
               allow_vanishing=False) -> TailRatioReport:
    num, den = np.asarray(num, float), np.asarray(den, float)
    keep = den > DENOMINATOR_FLOOR
    excluded = int((~keep).sum())
    if excluded > MAX_EXCLUDED * xs.size:
        if allow_vanishing:
            return TailRatioReport(label, window, xs[keep], np.zeros(int(keep.sum())), 0.0, 0.0,
                                   (0.0,) * 4, False, expected, tol, False, names[1] + " (tail vanishes)",
                                   excluded, dict(notes or {}))
        raise WindowError(f"{excluded} of {xs.size} denominators underflow; window too deep for the grid")
    x, ratio = xs[keep], num[keep] / den[keep]
    quarters = np.array_split(np.arange(x.size), 4)
    last = ratio[quarters[-1]]
    limit = float(np.median(last))
    devs = tuple(float(np.max(np.abs(ratio[q] - limit))) if q.size else 0.0 for q in quarters)
    slack = 1e-9 * max(1.0, abs(limit))
    trend_ok = bool(np.all(np.isfinite(ratio))) and all(
        devs[i + 1] <= (1 + TREND_SLACK) * devs[i] + slack for i in range(3))
    passed = None
    if expected is not None:
        passed = bool(trend_ok and abs(limit - expected) <= tol * abs(expected))
    verdict = names[0] if passed else names[1]
    return TailRatioReport(label, window, x, ratio, limit, devs[-1], devs, trend_ok, expected, tol, passed,
                           verdict, excluded, dict(notes or {}))


def _fit(f: GridDensity, window: TailWindow, margin: float = 0.0):
    if window.x_hi + margin > f.right + 1e-9 * max(1.0, abs(f.right)):
        raise WindowError(f"window [{window.x_lo}, {window.x_hi}] plus probe {margin} "
                          f"extends past the grid edge {f.right}")
    if window.x_lo < f.origin:
        raise WindowError("window starts left of the grid")


def _shifted_values(f: GridDensity, xs: np.ndarray, a: float) -> np.ndarray:
    k = float(_snap(a / f.step))
    if k == round(k):
        idx = f.cell_index(xs) + int(round(k))
        out = np.zeros(xs.size)
        inside = (idx >= 0) & (idx < f.n_cells)
        out[inside] = f.values[idx[inside]]
        return out
    return f.value_at(xs + a)


def long_tail_check(f: GridDensity, shifts, w: TailWindow, tol: float = TOL_LONG_TAIL) -> TailRatioReport:
    """Ratios ``f(x + a) / f(x)``; long-tailed when every shift's limit is 1 +- tol.

    The returned report carries the samples of the worst shift; the limit for
    every shift is listed under ``notes["per_shift"]``.
    """
    shifts = [float(a) for a in shifts]
    if not shifts or any(a < 0 for a in shifts):
        raise WindowError("shifts must be nonnegative")
    _fit(f, w, max(shifts))
    xs = w.points()
    den = f.value_at(xs)
    reports = [_summarize(f"long_tail(a={a!r})", w, xs, _shifted_values(f, xs, a), den, expected=1.0, tol=tol,
                          names=("long-tailed", "not long-tailed")) for a in shifts]
    worst = max(reports, key=lambda r: (not r.passed, abs(r.limit_estimate - 1.0)))
    notes = {"per_shift": {repr(a): r.limit_estimate for a, r in zip(shifts, reports)}}
    passed = all(r.passed for r in reports)
    return TailRatioReport("long_tail", w, worst.x, worst.ratio, worst.limit_estimate, worst.max_abs_dev,
                           worst.quartile_devs, worst.trend_ok, 1.0, tol, passed,
                           "long-tailed" if passed else "not long-tailed", worst.excluded, notes)


def subexp_check(f: GridDensity, w: TailWindow, tol: float = TOL_SUBEXP) -> TailRatioReport:
    """Ratios ``f^{2(x)}(x) / f(x)`` against the limit 2.

    The numerator is an exact dot product of cell masses at each window
    point, so it resolves tails far below spectral round-off.
    """
    _fit(f, w)
    xs = w.points()
    return _summarize("subexp", w, xs, convolve_at(f, f, xs), f.value_at(xs), expected=2.0, tol=tol,
                      names=("subexponential", "not subexponential"))


def nfold_check(f: GridDensity, n: int, w: TailWindow, tol: float = TOL_SUBEXP) -> TailRatioReport:
    """Ratios ``f^{n(x)}(x) / f(x)`` against the limit ``n``."""
    if n < 1:
        raise WindowError("n must be >= 1")
    _fit(f, w)
    xs = w.points()
    den = f.value_at(xs)
    if n == 1:
        num = den
    else:
        head = conv_power(f, n - 1, x_max=f.right)
        num = convolve_at(head, f, xs)
    return _summarize(f"nfold(n={n})", w, xs, num, den, expected=float(n), tol=tol,
                      names=(f"{n}-fold equivalent", f"not {n}-fold equivalent"))


def kesten_scan(f: GridDensity, epsilon: float, n_max: int, x0: float, w: TailWindow) -> KestenReport:
    """Smallest ``C`` with ``f^{n(x)}(x) <= C (1+eps)^n f(x)`` over sampled ``x > x0``, ``n <= n_max``."""
    if not epsilon > 0 or n_max < 1:
        raise WindowError("need epsilon > 0 and n_max >= 1")
    _fit(f, w)
    xs = w.points()
    xs = xs[xs > x0]
    if xs.size == 0:
        raise WindowError("no window points beyond x0")
    den = f.value_at(xs)
    power = f
    per_n, best, argmax, violated = [], -math.inf, (math.nan, 0), False
    for n in range(1, n_max + 1):
        num = den if n == 1 else convolve_at(power, f, xs)
        if n > 1:
            power = convolve(power, f, x_max=f.right)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = num / ((1 + epsilon) ** n * den)
        ratio = np.where((num == 0) & (den == 0), 0.0, ratio)
        if not np.all(np.isfinite(ratio)):
            violated = True
        top = float(np.max(ratio))
        per_n.append(top)
        if top > best:
            best, argmax = top, (float(xs[int(np.argmax(ratio))]), n)
    return KestenReport(epsilon, n_max, x0, best, violated or not math.isfinite(best), tuple(per_n), argmax)


def theorem11_ratio(phi: GridDensity, lam: float, w: TailWindow, tol: float = TOL_SUBEXP, *,
                    series_tol: float = 1e-12, square_integrable: bool = True) -> TailRatioReport:
    """Ratios ``(1 - e^{-lam}) p(x) / (lam phi(x))`` for the compound Poisson density ``p``."""
    _fit(phi, w)
    p, rep = poisson_compound(PoissonCompoundSpec(lam, 1.0, phi, series_tol))
    xs = w.points()
    num = -math.expm1(-lam) * p.value_at(xs)
    return _summarize("theorem11", w, xs, num, lam * phi.value_at(xs), expected=1.0, tol=tol,
                      names=("equivalent", "not equivalent"),
                      notes={"lambda": lam, "terms_used": rep.terms_used,
                             "square_integrable": square_integrable})


def corollary11_scaling(phi: GridDensity, lam: float, t: float, w: TailWindow, tol: float = TOL_SUBEXP, *,
                        series_tol: float = 1e-12) -> TailRatioReport:
    """Ratios ``(1 - e^{-lam t}) p^t(x) / (t (1 - e^{-lam}) p(x))``; the limit is 1."""
    _fit(phi, w)
    pt, _ = poisson_compound(PoissonCompoundSpec(lam, t, phi, series_tol))
    p1, _ = poisson_compound(PoissonCompoundSpec(lam, 1.0, phi, series_tol))
    xs = w.points()
    num = -math.expm1(-lam * t) * pt.value_at(xs)
    den = t * -math.expm1(-lam) * p1.value_at(xs)
    return _summarize("corollary11", w, xs, num, den, expected=1.0, tol=tol,
                      names=("C(t) = t", "C(t) != t"), notes={"lambda": lam, "t": t})


def local_subexp_check(rho: AtomPlusDensity, c: float, w: TailWindow, tol: float = TOL_SUBEXP) -> TailRatioReport:
    """Interval-mass ratios ``rho^{2*}((x, x+c]) / rho((x, x+c])`` against 2."""
    _fit(rho.density, w, c)
    rho2 = convolve_atoms(rho, rho, x_max=rho.density.right)
    xs = w.points()
    num = np.array([interval_mass(rho2, x, c) for x in xs])
    den = np.array([interval_mass(rho, x, c) for x in xs])
    return _summarize("local_subexp", w, xs, num, den, expected=2.0, tol=tol,
                      names=("locally subexponential", "not locally subexponential"),
                      notes={"c": c, "atom": rho.atom})


def positive_mean(rho: GridDensity) -> float:
    """``int_0^inf u rho(du)`` over the grid cells right of 0."""
    lo = np.maximum(rho.x_left, 0.0)
    hi = np.maximum(rho.edges[1:], 0.0)
    return float(np.sum(rho.values * (hi - lo) * 0.5 * (lo + hi)))


def sstar_check(rho: GridDensity, w: TailWindow, tol: float = TOL_SSTAR, *,
                right_defect: float | None = None) -> TailRatioReport:
    """Ratios ``int_0^x T(x-y) T(y) dy / (2 m+ T(x))`` with ``T`` the upper tail.

    ``T`` is piecewise linear between grid edges, so the integral is taken by
    the trapezoid rule at edges.  ``right_defect`` is the part of the defect
    lying beyond the grid (defaults to all of it for grids on ``[0, inf)``).
    """
    _fit(rho, w)
    j0 = int(round(float(_snap(-rho.origin / rho.step))))
    if abs(j0 * rho.step + rho.origin) > 1e-9 * max(1.0, abs(rho.origin)) or j0 < 0:
        raise WindowError("sstar_check needs x = 0 on a cell edge inside the grid")
    if right_defect is None:
        right_defect = rho.defect if rho.origin >= 0 else 0.0
    tails = rho.tail_at_edges()[j0:] + right_defect
    h = rho.step
    m_plus = positive_mean(rho)
    xs = w.points()
    ks = np.rint(xs / h).astype(int)
    num = np.array([h * (np.dot(tails[:k + 1], tails[k::-1]) - tails[0] * tails[k]) for k in ks])
    den = 2.0 * m_plus * tails[ks]
    return _summarize("sstar", w, xs, num, den, expected=1.0, tol=tol, names=("S*", "not S*"),
                      notes={"m_plus": m_plus}, allow_vanishing=True)


def negbin_pgf_derivative(alpha: float, lam: float) -> float:
    """Derivative at 1 of ``((1 - lam) / (1 - lam s))**alpha``."""
    return alpha * lam / (1.0 - lam)


def theorem41_ratio(f: GridDensity, alpha: float, lam: float, w: TailWindow, tol: float = TOL_SUBEXP, *,
                    series_tol: float = 1e-12) -> TailRatioReport:
    """Ratios ``(1 - c0) p(x) / (phi'(1) f(x))`` for the negative-binomial compound ``p``."""
    _fit(f, w)
    spec = NegBinCompoundSpec(alpha, lam, f, series_tol)
    p, rep = negbin_compound(spec)
    xs = w.points()
    num = spec.one_minus_c0 * p.value_at(xs)
    den = negbin_pgf_derivative(alpha, lam) * f.value_at(xs)
    return _summarize("theorem41", w, xs, num, den, expected=1.0, tol=tol,
                      names=("equivalent", "not equivalent"),
                      notes={"alpha": alpha, "lambda": lam, "terms_used": rep.terms_used})


def refinement_probe(family, points, steps, *, lam: float = 1.0, x_max: float = 8.0,
                     series_tol: float = 1e-12) -> dict:
    """Cell values of ``family`` and of its compound Poisson density at the cells
    starting at each of ``points``, for each grid step in ``steps``.

    Used to exhibit blow-up of an unbounded severity under refinement.
    """
    cells, comp = [], []
    for h in steps:
        n_cells = int(round(x_max / h))
        phi = discretize(family, 0.0, h, n_cells)
        p, _ = poisson_compound(PoissonCompoundSpec(lam, 1.0, phi, series_tol))
        cells.append([float(phi.value_at(x)) for x in points])
        comp.append([float(p.value_at(x)) for x in points])
    return {"points": list(points), "steps": list(steps), "cell_values": cells, "compound_values": comp}
