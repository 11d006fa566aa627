"""Scalar numerical routines shared by the solvers: three-point quadratic
interpolation on an interval, bisection, and fixed-point iteration."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np


class BracketError(ValueError):
    """Bisection endpoints do not bracket a sign change."""


class FixedPointError(RuntimeError):
    """Fixed-point iteration hit its cap without converging."""


class TraceEntry(NamedTuple):
    """One recorded solver step: flat iteration index, objective value,
    equality-constraint violation, and the penalty coefficients in force."""

    iteration: int
    objective: float
    violation: float
    mu: float
    nu: float


@dataclass(frozen=True)
class Interval:
    """Closed interval; endpoints may be given in either order."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError("interval endpoints must be finite")

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def clip(self, x: float) -> float:
        lo, hi = min(self.lo, self.hi), max(self.lo, self.hi)
        return min(max(x, lo), hi)


@dataclass(frozen=True)
class SolverTolerances:
    """Thresholds and iteration caps shared across the iterative solvers.

    eps1 bounds the relative objective change that ends an inner loop, eps2
    the constraint violation that ends an outer loop, eps3 the bisection
    bracket width.
    """

    eps1: float = 1e-3
    eps2: float = 1e-8
    eps3: float = 1e-6
    max_inner: int = 300
    max_outer: int = 200
    max_fixed_point: int = 500

    def __post_init__(self):
        if min(self.eps1, self.eps2, self.eps3) <= 0.0:
            raise ValueError("tolerances must be positive")
        if min(self.max_inner, self.max_outer, self.max_fixed_point) < 1:
            raise ValueError("iteration caps must be at least 1")


def quad_fit_extremum(f: Callable[[float], float], region: Interval) -> tuple[float, float]:
    """Approximate argmax of f on region from a quadratic through its endpoints
    and midpoint.

    Returns (theta, f(theta)) for the best of the fitted stationary point
    (clipped into the region) and the three samples, so the result never
    undercuts the best sample. A flat or linear fit falls back to the best
    sample.
    """
    ta, tc = region.lo, region.hi
    tb = region.midpoint
    f1, f2, f3 = f(ta), f(tb), f(tc)
    candidates = []
    den = 4.0 * (f1 - 2.0 * f2 + f3)
    if den != 0.0:
        th = (ta * (f1 - 4.0 * f2 + 3.0 * f3) + tc * (3.0 * f1 - 4.0 * f2 + f3)) / den
        if math.isfinite(th):
            th = region.clip(th)
            candidates.append((th, f(th)))
    candidates.extend([(ta, f1), (tb, f2), (tc, f3)])
    return max(candidates, key=lambda c: c[1])


def bisect_root(
    g: Callable[[float], float],
    lo: float,
    hi: float,
    eps3: float = 1e-6,
    max_iter: int = 200,
) -> float:
    """Bisection root of g on [lo, hi]; the endpoints must bracket a sign change.

    Returns the midpoint of a bracket no wider than eps3 (or an exact zero).
    """
    glo, ghi = g(lo), g(hi)
    if glo == 0.0:
        return lo
    if ghi == 0.0:
        return hi
    if (glo < 0.0) == (ghi < 0.0):
        raise BracketError(f"g({lo}) = {glo} and g({hi}) = {ghi} have the same sign")
    for _ in range(max_iter):
        if abs(hi - lo) <= eps3:
            break
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0.0:
            return mid
        if (gm < 0.0) == (glo < 0.0):
            lo, glo = mid, gm
        else:
            hi, ghi = mid, gm
    return 0.5 * (lo + hi)


def fixed_point(
    map_fn: Callable[[np.ndarray], np.ndarray],
    x0,
    tol: float = 1e-8,
    max_iter: int = 500,
) -> np.ndarray:
    """Iterate x <- map_fn(x) until the largest relative coordinate change
    drops below tol; raises FixedPointError at the cap."""
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    for _ in range(max_iter):
        x_new = np.atleast_1d(np.asarray(map_fn(x), dtype=float))
        if not np.all(np.isfinite(x_new)):
            raise FixedPointError("fixed point produced a non-finite iterate")
        scale = np.maximum(np.abs(x), 1e-300)
        change = float(np.max(np.abs(x_new - x) / scale))
        x = x_new
        if change < tol:
            return x
    raise FixedPointError(f"fixed point did not converge within {max_iter} iterations")
