"""Input checks shared by the estimators and the CLI."""

from __future__ import annotations

import math
import os

import numpy as np

from .errors import GridError
from .kernel import AtomPlusDensity, GridDensity


def check_grid_density(obj, *, name: str = "density", nonnegative_origin: bool = False) -> GridDensity:
    """Return ``obj`` if it is a usable :class:`GridDensity`, else raise GridError."""
    if isinstance(obj, AtomPlusDensity):
        obj = obj.density
    if not isinstance(obj, GridDensity):
        raise GridError(f"{name} must be a GridDensity, got {type(obj).__name__}")
    if nonnegative_origin and obj.origin < 0:
        raise GridError(f"{name} must live on [0, inf), origin is {obj.origin}")
    if obj.total_mass > 1 + 1e-9:
        raise GridError(f"{name} carries mass {obj.total_mass} > 1")
    return obj


def check_positive(value, name: str, *, allow_zero: bool = False) -> float:
    value = float(value)
    ok = value >= 0 if allow_zero else value > 0
    if not (ok and math.isfinite(value)):
        raise GridError(f"{name} must be {'nonnegative' if allow_zero else 'positive'} and finite, got {value}")
    return value


def check_open_unit(value, name: str) -> float:
    value = float(value)
    if not 0.0 < value < 1.0:
        raise GridError(f"{name} must lie in (0, 1), got {value}")
    return value


def check_points(x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        x = x.ravel()
    if not np.all(np.isfinite(x)):
        raise GridError("evaluation points must be finite")
    return x


def check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise GridError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def resolve_threads(threads=None, env=None) -> int:
    """``threads`` if given, else ``HTCP_THREADS``, else 1."""
    if threads is None:
        env = os.environ if env is None else env
        threads = env.get("HTCP_THREADS") or 1
    try:
        threads = int(threads)
    except ValueError:
        raise GridError(f"thread count must be an integer, got {threads!r}") from None
    if threads < 1:
        raise GridError(f"thread count must be >= 1, got {threads}")
    return threads


def check_is_fitted(est, attr: str):
    if not hasattr(est, attr):
        raise AttributeError(f"{type(est).__name__} is not fitted yet; call fit() first")
