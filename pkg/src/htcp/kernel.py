"""Uniform-grid densities and linear convolution with mass-defect tracking.

A :class:`GridDensity` stores cell averages ``values[i] = (1/step) * mass of
[origin + i*step, origin + (i+1)*step)``.  Mass that a computation pushes
outside the grid is never dropped; it is added to ``defect``.

The convolution of two cell-averaged densities is computed exactly for their
piecewise-constant interpolants: the sum of two points drawn uniformly from
cells ``i`` and ``j`` is triangular on ``[i+j, i+j+2)`` cells, so half of the
product mass lands in result cell ``i+j`` and half in ``i+j+1``.
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.fft
from scipy import integrate

from .errors import GridError

logger = logging.getLogger(__name__)

#: clamped round-off mass above this level is reported as a warning
CLAMP_WARN = 1e-10

_ALIGN_TOL = 1e-9


def _snap(k):
    """Round ``k`` to the nearest integer when it is within grid tolerance."""
    kr = np.rint(k)
    close = np.abs(k - kr) <= _ALIGN_TOL * np.maximum(1.0, np.abs(k))
    return np.where(close, kr, k)


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Cell-averaged nonnegative density on ``origin + step * [0, n_cells]``."""

    origin: float
    step: float
    values: np.ndarray
    defect: float = 0.0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise GridError("values must be a non-empty 1-d sequence")
        if not (self.step > 0 and math.isfinite(self.step)):
            raise GridError(f"step must be positive and finite, got {self.step}")
        if not math.isfinite(self.origin):
            raise GridError("origin must be finite")
        if not np.all(np.isfinite(values)):
            raise GridError("values must be finite")
        if np.any(values < 0):
            raise GridError("values must be nonnegative")
        if not (self.defect >= 0 and math.isfinite(self.defect)):
            raise GridError(f"defect must be finite and >= 0, got {self.defect}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "origin", float(self.origin))
        object.__setattr__(self, "step", float(self.step))
        object.__setattr__(self, "defect", float(self.defect))

    @property
    def n_cells(self) -> int:
        return self.values.size

    @property
    def right(self) -> float:
        return self.origin + self.n_cells * self.step

    @property
    def edges(self) -> np.ndarray:
        return self.origin + self.step * np.arange(self.n_cells + 1)

    @property
    def x_left(self) -> np.ndarray:
        return self.edges[:-1]

    @property
    def masses(self) -> np.ndarray:
        return self.values * self.step

    @property
    def mass(self) -> float:
        """Mass held on the grid (excludes the defect)."""
        return float(self.values.sum() * self.step)

    @property
    def total_mass(self) -> float:
        return self.mass + self.defect

    def cell_index(self, x):
        """Index of the cell ``[left, left + step)`` containing ``x``.

        Points within round-off of a cell boundary are assigned to the cell
        that starts there.  Indices may fall outside ``[0, n_cells)``.
        """
        k = _snap((np.asarray(x, dtype=float) - self.origin) / self.step)
        return np.floor(k).astype(int)

    def value_at(self, x):
        """Cell value at ``x``; zero outside the grid."""
        idx = np.atleast_1d(self.cell_index(x))
        inside = (idx >= 0) & (idx < self.n_cells)
        out = np.zeros(idx.shape)
        out[inside] = self.values[idx[inside]]
        return out if np.ndim(x) else float(out[0])

    def scaled(self, factor: float) -> GridDensity:
        return GridDensity(self.origin, self.step, self.values * factor, self.defect * factor)

    def with_values(self, values, defect=None) -> GridDensity:
        return GridDensity(self.origin, self.step, values, self.defect if defect is None else defect)

    def cdf_at_edges(self) -> np.ndarray:
        """Grid mass of ``(-inf, edge]`` at every edge (defect excluded)."""
        return np.concatenate([[0.0], np.cumsum(self.masses)])

    def tail_at_edges(self) -> np.ndarray:
        """Grid mass above every edge, summed from the right for tail precision."""
        return np.concatenate([np.cumsum(self.masses[::-1])[::-1], [0.0]])

    # -- serialization -------------------------------------------------
    def to_csv(self, path=None):
        """Write ``x_left,value`` rows after a ``# origin=.. step=.. defect=..`` line.

        Floats use shortest round-trip formatting, so :meth:`from_csv`
        reproduces the object bit for bit.  Returns the text when ``path``
        is None.
        """
        buf = io.StringIO()
        buf.write(f"# origin={self.origin!r} step={self.step!r} defect={self.defect!r}\n")
        buf.write("x_left,value\n")
        for x, v in zip(self.x_left.tolist(), self.values.tolist()):
            buf.write(f"{x!r},{v!r}\n")
        text = buf.getvalue()
        if path is None:
            return text
        Path(path).write_text(text, encoding="utf-8")
        return None

    @classmethod
    def from_csv(cls, source) -> GridDensity:
        if isinstance(source, (str, Path)) and not str(source).lstrip().startswith("#"):
            text = Path(source).read_text(encoding="utf-8")
        else:
            text = str(source)
        lines = text.splitlines()
        if not lines or not lines[0].startswith("#"):
            raise GridError("missing '# origin=.. step=.. defect=..' metadata line")
        meta = dict(item.split("=", 1) for item in lines[0][1:].split())
        try:
            origin, step, defect = float(meta["origin"]), float(meta["step"]), float(meta["defect"])
        except KeyError as exc:
            raise GridError(f"metadata line lacks {exc}") from None
        if lines[1].strip() != "x_left,value":
            raise GridError("expected header 'x_left,value'")
        values = [float(line.split(",")[1]) for line in lines[2:] if line.strip()]
        return cls(origin, step, np.array(values), defect)


@dataclass(frozen=True, eq=False)
class AtomPlusDensity:
    """``atom * delta_0 + density``, the density carrying mass ``1 - atom``."""

    atom: float
    density: GridDensity

    def __post_init__(self):
        if not 0.0 <= self.atom <= 1.0:
            raise GridError(f"atom must lie in [0, 1], got {self.atom}")
        total = self.atom + self.density.total_mass
        if abs(total - 1.0) > 1e-9:
            raise GridError(f"atom + density mass + defect = {total!r}, expected 1")

    @property
    def defect(self) -> float:
        return self.density.defect

    def cdf(self, x):
        """``P((-inf, x])`` with the grid density linearly interpolated in each cell."""
        d = self.density
        cum = d.cdf_at_edges()
        k = np.clip((np.asarray(x, dtype=float) - d.origin) / d.step, 0, d.n_cells)
        out = np.interp(k, np.arange(d.n_cells + 1), cum)
        return out + np.where(np.asarray(x) >= 0, self.atom, 0.0)


# -- discretization -------------------------------------------------------


def discretize(density_spec, origin: float, step: float, n_cells: int, *, loc: float = 0.0,
               sign: int = 1, epsrel: float = 1e-10) -> GridDensity:
    """Cell-average the law of ``sign * Y + loc`` onto a uniform grid.

    ``density_spec`` is either a family object exposing vectorized
    ``cell_mass(a, b)`` (exact integrals) or a plain callable pdf, which is
    integrated cell by cell with adaptive quadrature.  Mass outside the grid
    becomes the defect.
    """
    if not step > 0 or n_cells < 1:
        raise GridError("need step > 0 and n_cells >= 1")
    if sign not in (1, -1):
        raise GridError("sign must be +1 or -1")
    edges = origin + step * np.arange(n_cells + 1)
    # map grid edges back to Y coordinates
    ya, yb = (edges[:-1] - loc), (edges[1:] - loc)
    if sign == -1:
        ya, yb = -yb, -ya
    if hasattr(density_spec, "cell_mass"):
        masses = np.asarray(density_spec.cell_mass(ya, yb), dtype=float)
        lo, hi = (-np.inf, ya.min()), (yb.max(), np.inf)
        outside = float(density_spec.cell_mass(*lo) + density_spec.cell_mass(*hi))
    elif callable(density_spec):
        masses = np.array([_quad(density_spec, a, b, epsrel) for a, b in zip(ya, yb)])
        outside = _quad(density_spec, -np.inf, ya.min(), epsrel) + _quad(density_spec, yb.max(), np.inf, epsrel)
    else:
        raise GridError("density_spec must expose cell_mass(a, b) or be a callable pdf")
    if not np.all(np.isfinite(masses)) or not math.isfinite(outside):
        raise GridError("non-finite cell integral (unhandled singularity?)")
    if np.any(masses < -1e-15) or outside < -1e-15:
        raise GridError("negative cell integral: density definition is broken")
    masses = np.maximum(masses, 0.0)
    return GridDensity(origin, step, masses / step, max(outside, 0.0))


def _quad(pdf: Callable[[float], float], a: float, b: float, epsrel: float) -> float:
    val, _ = integrate.quad(pdf, a, b, epsabs=0.0, epsrel=epsrel, limit=200)
    return float(val)


# -- grid surgery -----------------------------------------------------------


def _offset(src: GridDensity, origin: float) -> int:
    k = float(_snap((src.origin - origin) / src.step))
    if k != round(k):
        raise GridError(f"grids are not aligned: origin {src.origin} vs {origin} at step {src.step}")
    return int(round(k))


def embed(d: GridDensity, origin: float, n_cells: int):
    """Place ``d`` on the aligned grid ``origin + step * [0, n_cells]``.

    Returns ``(grid, lost_left, lost_right)``; lost masses are added to the
    returned grid's defect.
    """
    off = _offset(d, origin)
    out = np.zeros(n_cells)
    lo, hi = max(off, 0), min(off + d.n_cells, n_cells)
    masses = d.masses
    if lo < hi:
        out[lo:hi] = d.values[lo - off:hi - off]
    lost_left = float(masses[:max(0, min(-off, d.n_cells))].sum())
    lost_right = float(masses[max(0, n_cells - off):].sum())
    return GridDensity(origin, d.step, out, d.defect + lost_left + lost_right), lost_left, lost_right


def restrict_positive(d: GridDensity) -> GridDensity:
    """Zero every cell whose right edge is ``<= 0``; the defect is unchanged."""
    right_edges = _snap((d.edges[1:]) / d.step) * d.step
    values = np.where(right_edges <= 0, 0.0, d.values)
    return d.with_values(values)


def crop_positive(d: GridDensity) -> GridDensity:
    """Cells with left edge ``>= 0``, re-gridded to start at the first of them."""
    start = max(0, int(d.cell_index(0.0)))
    if start >= d.n_cells:
        raise GridError("grid has no cells at x >= 0")
    return GridDensity(d.origin + start * d.step, d.step, d.values[start:], d.defect)


# -- convolution -----------------------------------------------------------


def _mass_convolution(ma: np.ndarray, mb: np.ndarray) -> np.ndarray:
    n = ma.size + mb.size - 1
    nfft = scipy.fft.next_fast_len(n, real=True)
    return scipy.fft.irfft(scipy.fft.rfft(ma, nfft) * scipy.fft.rfft(mb, nfft), nfft)[:n]


def _cells_from_mass_conv(c: np.ndarray, step: float) -> np.ndarray:
    out = np.zeros(c.size + 1)
    out[:-1] += c
    out[1:] += c
    return out / (2.0 * step)


def convolve(a: GridDensity, b: GridDensity, *, x_min: float | None = None,
             x_max: float | None = None) -> GridDensity:
    """Linear convolution ``a (x) b`` via a zero-padded real FFT.

    The result starts at ``a.origin + b.origin`` and covers the full summed
    support, optionally cut to ``[x_min, x_max)``; cut mass and every
    product involving an input defect go to the result's defect, so
    ``mass + defect == (a.mass + a.defect) * (b.mass + b.defect)``.
    """
    if not math.isclose(a.step, b.step, rel_tol=1e-12):
        raise GridError(f"mismatched steps {a.step} and {b.step}")
    h = a.step
    values = _cells_from_mass_conv(_mass_convolution(a.masses, b.masses), h)
    neg = values < 0
    if neg.any():
        clamped = float(-values[neg].sum() * h)
        (logger.warning if clamped > CLAMP_WARN else logger.debug)(
            "clamped %.3e of negative round-off mass", clamped)
        values[neg] = 0.0
    origin = a.origin + b.origin
    lo = 0 if x_min is None else max(0, int(np.floor(_snap((x_min - origin) / h))))
    hi = values.size if x_max is None else min(values.size, int(np.ceil(_snap((x_max - origin) / h))))
    hi = max(hi, lo + 1)
    kept = values[lo:hi]
    total = a.total_mass * b.total_mass
    defect = max(total - float(kept.sum() * h), 0.0)
    return GridDensity(origin + lo * h, h, kept, defect)


def convolve_at(a: GridDensity, b: GridDensity, x) -> np.ndarray:
    """Values of ``a (x) b`` in the result cells containing ``x``.

    Each value is an exact dot product of nonnegative masses (no spectral
    round-off), so it stays accurate deep in the tail where FFT noise would
    dominate.
    """
    if not math.isclose(a.step, b.step, rel_tol=1e-12):
        raise GridError(f"mismatched steps {a.step} and {b.step}")
    h = a.step
    origin = a.origin + b.origin
    ks = np.atleast_1d(np.floor(_snap((np.asarray(x, dtype=float) - origin) / h)).astype(int))
    ma, mb = a.masses, b.masses
    n_out = ma.size + mb.size - 1

    def c(k):
        if k < 0 or k >= n_out:
            return 0.0
        i0, i1 = max(0, k - mb.size + 1), min(k, ma.size - 1)
        return float(np.dot(ma[i0:i1 + 1], mb[k - i1:k - i0 + 1][::-1]))

    return np.array([(c(k) + c(k - 1)) / (2.0 * h) for k in ks])


def conv_power(f: GridDensity, n: int, *, x_min: float | None = None,
               x_max: float | None = None) -> GridDensity:
    """``f`` convolved with itself ``n`` times, by binary exponentiation.

    Matches repeated :func:`convolve` up to floating accumulation order.  With
    a cut, intermediate results are cut as well, which is exact for grids on
    ``[0, inf)`` cut on the right.
    """
    if int(n) != n or n < 1:
        raise GridError(f"convolution power needs an integer n >= 1, got {n}")
    n = int(n)
    if n == 1:
        return f
    result = None
    base = f
    while True:
        if n & 1:
            result = base if result is None else convolve(result, base, x_min=x_min, x_max=x_max)
        n >>= 1
        if not n:
            return result
        base = convolve(base, base, x_min=x_min, x_max=x_max)


def convolve_atoms(a: AtomPlusDensity, b: AtomPlusDensity, *, x_max: float | None = None) -> AtomPlusDensity:
    """Convolution of two atom-plus-density laws, density part on a common grid."""
    da, db = a.density, b.density
    dd = convolve(da, db, x_max=x_max)
    origin = min(da.origin, db.origin, dd.origin)
    right = x_max if x_max is not None else max(da.right, db.right)
    n_cells = int(np.ceil(_snap((right - origin) / da.step)))
    parts = [embed(dd, origin, n_cells)[0],
             embed(da.scaled(b.atom), origin, n_cells)[0],
             embed(db.scaled(a.atom), origin, n_cells)[0]]
    values = sum(p.values for p in parts)
    defect = sum(p.defect for p in parts)
    return AtomPlusDensity(a.atom * b.atom, GridDensity(origin, da.step, values, defect))


def interval_mass(d: AtomPlusDensity | GridDensity, x: float, c: float) -> float:
    """Mass of ``(x, x + c]``, with partial cells weighted by overlap."""
    if not c > 0:
        raise GridError("interval length c must be positive")
    atom = 0.0
    if isinstance(d, AtomPlusDensity):
        atom = d.atom if x < 0.0 <= x + c else 0.0
        d = d.density
    k0 = (x - d.origin) / d.step
    k1 = (x + c - d.origin) / d.step
    i0 = max(int(np.floor(_snap(k0))), 0)
    i1 = min(int(np.ceil(_snap(k1))), d.n_cells)
    if i0 >= i1:
        return atom
    idx = np.arange(i0, i1)
    overlap = np.clip(np.minimum(idx + 1, k1) - np.maximum(idx, k0), 0.0, 1.0)
    return atom + float(np.dot(d.values[i0:i1], overlap) * d.step)
