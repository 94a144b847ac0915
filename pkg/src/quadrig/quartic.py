"""Exact minimisation of ``q*v + r*v**2 + s*v**4`` over a closed interval.

The derivative ``q + 2*r*v + 4*s*v**3`` has no quadratic term, so it is a
depressed cubic and its real roots follow in closed form (hyperbolic or
trigonometric branch). The minimiser is the best of the in-range roots and
the two end points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "BoundedQuartic",
    "ROOT_RESIDUAL_TOL",
    "OPTIMALITY_TOL",
    "cubic_roots",
    "minimize",
    "minimize_quartic",
    "quartic_value",
]

#: Root residual guarantee, relative to max(|c0|, |c1|, |c3|, 1).
ROOT_RESIDUAL_TOL = 1e-8
#: No feasible point beats the returned value by more than this, relative to 1 + |value|.
OPTIMALITY_TOL = 1e-10
# Candidates this close to the best value count as tied.
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class BoundedQuartic:
    q: float
    r: float
    s: float
    lo: float
    hi: float

    def __post_init__(self):
        vals = (self.q, self.r, self.s, self.lo, self.hi)
        if not all(math.isfinite(x) for x in vals):
            raise ValueError(f"non-finite quartic problem {vals}")
        if self.s < 0:
            raise ValueError(f"quartic coefficient s={self.s} must be >= 0")
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    def value(self, v: float) -> float:
        return quartic_value(self.q, self.r, self.s, v)


def quartic_value(q, r, s, v):
    # Horner-style grouping; s can dwarf q and r
    v2 = v * v
    return q * v + v2 * (r + s * v2)


def _depressed_roots(p, t):
    """Real roots of x**3 + p*x + t."""
    if p == 0.0:
        return [math.copysign(abs(t) ** (1.0 / 3.0), -t)]
    if p > 0.0:
        arg = (1.5 * t / p) * math.sqrt(3.0 / p)
        if not math.isfinite(arg):
            return [math.copysign(abs(t) ** (1.0 / 3.0), -t)]
        return [-2.0 * math.sqrt(p / 3.0) * math.sinh(math.asinh(arg) / 3.0)]
    a = math.sqrt(-p / 3.0)
    u = (1.5 * t / p) * math.sqrt(-3.0 / p)
    if not math.isfinite(u):
        return [math.copysign(abs(t) ** (1.0 / 3.0), -t)]
    if abs(u) <= 1.0:
        theta = math.acos(u) / 3.0
        return [2.0 * a * math.cos(theta - 2.0 * math.pi * k / 3.0) for k in range(3)]
    return [-math.copysign(2.0 * a * math.cosh(math.acosh(abs(u)) / 3.0), t)]


def _polish(x, c0, c1, c3):
    f = c0 + x * (c1 + c3 * x * x)
    df = c1 + 3.0 * c3 * x * x
    if df == 0.0 or not math.isfinite(df):
        return x
    y = x - f / df
    fy = c0 + y * (c1 + c3 * y * y)
    return y if math.isfinite(y) and abs(fy) <= abs(f) else x


def cubic_roots(c0: float, c1: float, c3: float) -> list[float]:
    """Real roots of ``c0 + c1*v + c3*v**3``, sorted ascending.

    Degenerate cases: with ``c3 == 0`` the linear equation is solved; if
    ``c1 == c3 == 0`` there is no root unless ``c0 == 0``, in which case
    every point is a root and ``[0.0]`` is returned as the representative.
    Each closed-form root gets one Newton step.
    """
    if c3 == 0.0:
        if c1 == 0.0:
            return [0.0] if c0 == 0.0 else []
        return [-c0 / c1]
    p, t = c1 / c3, c0 / c3
    if math.isfinite(p) and math.isfinite(t):
        roots = _depressed_roots(p, t)
    else:
        # c3 negligible: the root near -c0/c1 plus (for p < 0) a far-out pair
        roots = [-c0 / c1] if c1 != 0.0 else []
        if c1 != 0.0 and (c1 < 0) != (c3 < 0):
            big = math.sqrt(abs(c1)) / math.sqrt(abs(c3))
            roots += [-big, big]
        roots = [x for x in roots if math.isfinite(x)]
    roots = sorted(_polish(x, c0, c1, c3) for x in roots)
    out = []
    for x in roots:
        if not out or x != out[-1]:
            out.append(x)
    return out


def minimize_quartic(q: float, r: float, s: float, lo: float, hi: float):
    """Return ``(v, value)`` minimising ``q*v + r*v**2 + s*v**4`` on ``[lo, hi]``.

    Ties (within a 1e-12 relative band) go to the smallest ``|v|``, then to
    the smaller ``v``.
    """
    BoundedQuartic(q, r, s, lo, hi)
    q, r, s = float(q), float(r), float(s)
    cands = [float(lo), float(hi)]
    cands += [x for x in cubic_roots(q, 2.0 * r, 4.0 * s) if lo <= x <= hi]
    vals = [quartic_value(q, r, s, v) for v in cands]
    best = min(vals)
    band = best + _TIE_TOL * (1.0 + abs(best))
    v = min((c for c, f in zip(cands, vals) if f <= band), key=lambda c: (abs(c), c))
    return v, quartic_value(q, r, s, v)


def minimize(problem: BoundedQuartic):
    return minimize_quartic(problem.q, problem.r, problem.s, problem.lo, problem.hi)
