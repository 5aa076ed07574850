"""Closed-form separation constants and the exact exclusion radius r_N.

For each space the constant C is the one appearing in the lower bound
dsep >= C (N-1)^{-1/n} for minimal-energy configurations, and r_N is the
geodesic radius with V(r_N) = V/(N-1).  Both reduce to the volume quotient
(n vol(M) / vol(S^{n-1}))^{1/n}; the table values below are the simplified
Gamma expressions, evaluated through log-Gamma for stability at n = 16.
"""

import math
from dataclasses import dataclass

from .geometry import (CayleyPlane, ComplexProjective, CrossSpace,
                       QuaternionProjective, RealProjective, Sphere,
                       unit_sphere_volume)


def cross_constant(space):
    """Closed-form separation constant C for a space.

    S^n:  (n sqrt(pi) Gamma(n/2) / Gamma((n+1)/2))^{1/n}
    RP^m: (m sqrt(pi) Gamma(m/2) / (2 Gamma((m+1)/2)))^{1/m}
    CP^m: 1
    HP^m: (2m+1)^{-1/(4m)}
    OP^2: 165^{-1/16}
    """
    if isinstance(space, Sphere):
        n = space.n
        return math.exp((math.log(n) + 0.5 * math.log(math.pi)
                         + math.lgamma(0.5 * n) - math.lgamma(0.5 * (n + 1))) / n)
    if isinstance(space, RealProjective):
        m = space.m
        return math.exp((math.log(m) + 0.5 * math.log(math.pi)
                         + math.lgamma(0.5 * m) - math.log(2.0)
                         - math.lgamma(0.5 * (m + 1))) / m)
    if isinstance(space, ComplexProjective):
        return 1.0
    if isinstance(space, QuaternionProjective):
        m = space.m
        return math.exp(-math.log(2 * m + 1) / (4 * m))
    if isinstance(space, CayleyPlane):
        return math.exp(-math.log(165.0) / 16.0)
    raise TypeError(f"not a known space: {space!r}")


def constant_from_volumes(space):
    """The same constant from the raw quotient (n vol(M) / vol(S^{n-1}))^{1/n}."""
    n = space.n
    return (n * space.total_volume / unit_sphere_volume(n - 1)) ** (1.0 / n)


def constant_consistency_check(space, tol=1e-12):
    """True when the table value and the volume-quotient route agree to tol."""
    a = cross_constant(space)
    b = constant_from_volumes(space)
    return abs(a - b) <= tol * max(1.0, abs(a))


def radius_r_n(space, n_points):
    """Radius r_N with V(r_N) = V/(N-1), found by bisection on the ball volume.

    Returns ``(r, saturated)``; ``saturated`` is True for N = 2, where the
    target volume is the whole space and r equals the diameter.
    """
    if n_points < 2:
        raise ValueError("need at least 2 points")
    V = space.total_volume
    target = V / (n_points - 1)
    if n_points == 2:
        return space.diameter, True
    lo, hi = 0.0, space.diameter
    tol = 1e-12 * V
    # bisection: V is strictly increasing and cheap
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = space.ball_volume(mid)
        if abs(val - target) <= tol:
            return mid, False
        if val < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16:
            break
    return 0.5 * (lo + hi), False


@dataclass
class BoundReport:
    """Separation bounds for one (space, N) pair.

    ``bound_constant`` is C (N-1)^{-1/n}; ``vol_check`` records how closely
    V(r_N) hits V/(N-1).
    """

    manifold: CrossSpace
    n_points: int
    c_constant: float
    bound_constant: float
    r_n: float
    saturated: bool
    vol_check: float


def bound_report(space, n_points):
    c = cross_constant(space)
    bound_c = c * (n_points - 1) ** (-1.0 / space.n)
    r, saturated = radius_r_n(space, n_points)
    vol_check = abs(space.ball_volume(r) - space.total_volume / (n_points - 1))
    return BoundReport(space, n_points, c, bound_c, r, saturated, vol_check)
