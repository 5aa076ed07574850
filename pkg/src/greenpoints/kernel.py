"""Radial Green's function for the rank one symmetric spaces.

The kernel phi solves the radial reduction of the manifold Green equation:
its derivative is

    phi'(r) = -(V^{-1} int_r^D v(t) dt) / v(r),

where v is the geodesic-sphere area profile, and the additive constant is
fixed by the zero-mean condition int_0^D phi(r) v(r) dr = 0.  Tables store
phi and phi' on a grid refined near the singularity at r = 0 and evaluate
through the analytic singular part plus interpolated remainders:

* n = 2:  phi(r) = -(1/2pi) log r + smooth remainder,
* n >= 3: below ``r_split`` the scaled values phi r^{n-2} and -phi' r^{n-1}
  are tabulated against log r (they are analytic in that variable, with the
  leading coefficient 1/((n-2) vol(S^{n-1}))), above it plain interpolation.

phi' is interpolated on its own, never differentiated from the phi
interpolant, so forces keep the correct sign.
"""

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.interpolate import CubicSpline, PchipInterpolator

from .errors import KernelBuildError, SingularityError
from .geometry import (CrossSpace, adaptive_quad, parse_manifold,
                       unit_sphere_volume)

KERNEL_FORMAT = "greenpoints-kernel"
KERNEL_FORMAT_VERSION = 1


# -- exact radial volume helpers ----------------------------------------------
# Incomplete-beta antiderivative of the area profile; used inside table
# construction for speed and verified at build time against the quadrature
# route exposed by ball_volume / phi_prime.

def _profile_integral(space, lo_x):
    """int over {t : sin^2(t) <= lo_x} of sin^{n-1} cos^{dK-1}, half-beta form."""
    n = space.n
    b = max(space.field_dim, 1)
    return 0.5 * special.beta(0.5 * n, 0.5 * b) * special.betainc(0.5 * n, 0.5 * b, lo_x)


def ball_volume_closed(space, r):
    """V(r) from the regularized incomplete beta function (machine accuracy)."""
    r = np.asarray(r, dtype=float)
    omega = unit_sphere_volume(space.n - 1)
    if space.field_dim == 0:
        half = np.minimum(r, math.pi / 2.0)
        out = omega * _profile_integral(space, np.sin(half) ** 2)
        over = r > math.pi / 2.0
        if np.any(over):
            ref = omega * _profile_integral(space, np.sin(np.pi - r) ** 2)
            out = np.where(over, space.total_volume - ref, out)
        return out if out.ndim else float(out)
    out = omega * _profile_integral(space, np.sin(r) ** 2)
    return out if out.ndim else float(out)


def ball_tail_closed(space, r):
    """int_r^D v(t) dt, computed without cancellation at r near D."""
    r = np.asarray(r, dtype=float)
    n, dk = space.n, space.field_dim
    omega = unit_sphere_volume(n - 1)
    if dk == 0:
        # for r >= pi/2 mirror the integral to int_0^{pi-r}, avoiding V - V(r)
        under = r < math.pi / 2.0
        out = np.where(
            under,
            space.total_volume - ball_volume_closed(space, np.where(under, r, 0.0)),
            omega * _profile_integral(space, np.sin(math.pi - np.where(under, math.pi, r)) ** 2))
        return out if out.ndim else float(out)
    b = max(dk, 1)
    out = omega * 0.5 * special.beta(0.5 * b, 0.5 * n) \
        * special.betainc(0.5 * b, 0.5 * n, np.cos(r) ** 2)
    return out if out.ndim else float(out)


def _tail_over_v(space, r):
    """(int_r^D v) / v(r) with the series limit (D - r)/c at the far endpoint."""
    r = np.asarray(r, dtype=float)
    D = space.diameter
    c = space.n if space.field_dim == 0 else space.field_dim
    eps = D - r
    near = eps < 1e-9
    safe = np.where(near, 0.5 * D, r)
    ratio = ball_tail_closed(space, safe) / space.sphere_area(safe)
    out = np.where(near, eps / c, ratio)
    return out if out.ndim else float(out)


def minus_phi_prime(space, r):
    """-phi'(r) = (V - V(r)) / (V v(r)), via the closed radial antiderivative."""
    return _tail_over_v(space, r) / space.total_volume


def phi_prime(space, r):
    """phi'(r) by adaptive quadrature of the area profile.

    Valid for 0 < r < D; both endpoints are singular (0/0 at the diameter,
    the kernel singularity at the origin).
    """
    if np.ndim(r) > 0:
        return np.array([phi_prime(space, float(t)) for t in np.asarray(r).ravel()])
    r = float(r)
    D = space.diameter
    if not 0.0 < r < D:
        raise ValueError(f"phi_prime needs 0 < r < diameter, got {r}")
    V = space.total_volume
    tail = adaptive_quad(lambda t: space.sphere_area(t), r, D, epsabs=1e-14 * V)
    return -tail / (V * space.sphere_area(r))


def singular_coefficient(space):
    """Leading coefficient of phi at the origin.

    Returns c with phi ~ c r^{2-n} for n > 2, or c with phi ~ -c log r for
    n = 2 (c = 1/(2 pi)).
    """
    n = space.n
    if n == 2:
        return 1.0 / (2.0 * math.pi)
    return 1.0 / ((n - 2) * unit_sphere_volume(n - 1))


def _gauss_panels(f, edges, order=24):
    """Fixed-order Gauss-Legendre integral on each [edges[i], edges[i+1]]."""
    x, w = np.polynomial.legendre.leggauss(order)
    a = edges[:-1][:, None]
    b = edges[1:][:, None]
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    vals = f((mid + half * x[None, :]).ravel()).reshape(len(a), order)
    return (vals * w[None, :] * half).sum(axis=1)


@dataclass
class KernelTable:
    """Tabulated radial Green's function of one space.

    Attributes mirror the stored file: the grid, node values of phi and
    phi', the analytic singular part (coefficient plus exponent 2-n, or a
    logarithmic flag in dimension 2), the zero-mean normalization constant,
    and the verified residual of int phi v dr after normalization.
    """

    manifold: CrossSpace
    grid: np.ndarray
    phi: np.ndarray
    phi_prime: np.ndarray
    singular_coeff: float
    log_singularity: bool
    norm_constant: float
    mean_residual: float
    tol: float
    r_split: float
    _interp: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self._build_interpolants()

    @property
    def r_min(self):
        return float(self.grid[0])

    @staticmethod
    def _sign_safe(x, y, keep_negative):
        """Cubic spline unless it flips the sign of the data between nodes;
        then the shape-preserving monotone cubic."""
        spline = CubicSpline(x, y)
        fine = np.linspace(x[0], x[-1], 8 * len(x))
        vals = spline(fine)
        ok = np.all(vals <= 1e-15) if keep_negative else np.all(vals >= -1e-15)
        return spline if ok else PchipInterpolator(x, y)

    def _build_interpolants(self):
        r = self.grid
        n = self.manifold.n
        if n == 2:
            c = self.singular_coeff
            self._interp["rem"] = CubicSpline(r, self.phi + c * np.log(r))
            self._interp["rem_d"] = CubicSpline(r, self.phi_prime + c / r)
        else:
            split = np.searchsorted(r, self.r_split, side="right")
            lo = slice(0, split)
            s = np.log(r[lo])
            self._interp["scaled"] = CubicSpline(s, self.phi[lo] * r[lo] ** (n - 2))
            self._interp["scaled_d"] = self._sign_safe(
                s, -self.phi_prime[lo] * r[lo] ** (n - 1), keep_negative=False)
            hi = slice(max(split - 1, 0), len(r))
            self._interp["far"] = CubicSpline(r[hi], self.phi[hi])
            self._interp["far_d"] = self._sign_safe(
                r[hi], self.phi_prime[hi], keep_negative=True)

    def _check_domain(self, r):
        r = np.asarray(r, dtype=float)
        D = self.manifold.diameter
        if np.any(r <= 0.0) or np.any(r > D * (1 + 1e-14)):
            raise ValueError(f"kernel radius outside (0, {D}]")
        return np.minimum(r, D)

    def phi_at(self, r):
        """Evaluate phi(r) for r in (0, D]."""
        scalar = np.ndim(r) == 0
        r = np.atleast_1d(self._check_domain(r))
        n = self.manifold.n
        if n == 2:
            out = -self.singular_coeff * np.log(r) \
                + self._interp["rem"](np.clip(r, self.r_min, None))
        else:
            out = np.empty_like(r)
            lo = r <= self.r_split
            s = np.log(np.clip(r[lo], self.r_min, None))
            out[lo] = self._interp["scaled"](s) / r[lo] ** (n - 2)
            out[~lo] = self._interp["far"](r[~lo])
        return float(out[0]) if scalar else out

    def phi_prime_at(self, r):
        """Evaluate phi'(r) for r in (0, D] (phi'(D) = 0)."""
        scalar = np.ndim(r) == 0
        r = np.atleast_1d(self._check_domain(r))
        n = self.manifold.n
        if n == 2:
            out = -self.singular_coeff / r \
                + self._interp["rem_d"](np.clip(r, self.r_min, None))
        else:
            out = np.empty_like(r)
            lo = r <= self.r_split
            s = np.log(np.clip(r[lo], self.r_min, None))
            out[lo] = -self._interp["scaled_d"](s) / r[lo] ** (n - 1)
            out[~lo] = self._interp["far_d"](r[~lo])
        return float(out[0]) if scalar else out

    # -- persistence ----------------------------------------------------------

    def to_dict(self):
        return {
            "format": KERNEL_FORMAT,
            "format_version": KERNEL_FORMAT_VERSION,
            "manifold": self.manifold.name,
            "grid_size": int(len(self.grid)),
            "tol": self.tol,
            "r_split": self.r_split,
            "singular_coeff": self.singular_coeff,
            "log_singularity": self.log_singularity,
            "norm_constant": self.norm_constant,
            "mean_residual": self.mean_residual,
            "grid": self.grid.tolist(),
            "phi": self.phi.tolist(),
            "phi_prime": self.phi_prime.tolist(),
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)

    @classmethod
    def from_dict(cls, doc):
        if doc.get("format") != KERNEL_FORMAT:
            raise ValueError("not a kernel table file")
        if doc.get("format_version") != KERNEL_FORMAT_VERSION:
            raise ValueError(f"unsupported kernel file version {doc.get('format_version')}")
        return cls(
            manifold=parse_manifold(doc["manifold"]),
            grid=np.asarray(doc["grid"], dtype=float),
            phi=np.asarray(doc["phi"], dtype=float),
            phi_prime=np.asarray(doc["phi_prime"], dtype=float),
            singular_coeff=float(doc["singular_coeff"]),
            log_singularity=bool(doc["log_singularity"]),
            norm_constant=float(doc["norm_constant"]),
            mean_residual=float(doc["mean_residual"]),
            tol=float(doc["tol"]),
            r_split=float(doc["r_split"]),
        )

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_csv(self, target):
        """Dump grid, phi and phi' as CSV (path or file object)."""
        own = isinstance(target, (str, bytes)) or hasattr(target, "__fspath__")
        fh = open(target, "w", newline="") if own else target
        try:
            fh.write(f"# manifold={self.manifold.name} grid_size={len(self.grid)} "
                     f"tol={self.tol!r} norm_constant={self.norm_constant!r} "
                     f"mean_residual={self.mean_residual!r}\n")
            writer = csv.writer(fh)
            writer.writerow(["r", "phi", "phi_prime"])
            for r, p, dp in zip(self.grid, self.phi, self.phi_prime):
                writer.writerow([repr(r), repr(p), repr(dp)])
        finally:
            if own:
                fh.close()


def _build_grid(space, grid_size, r_min_factor=1e-7, split_factor=0.25):
    """Geometric grid through the singular zone (two bands, the upper one
    dense so the scaled interpolants stay consistent near the split), then
    Chebyshev points out to the diameter."""
    D = space.diameter
    r_min = r_min_factor * D
    r_split = split_factor * D
    k_deep = max(64, grid_size // 4)
    k_mid = max(96, grid_size // 3)
    k_far = max(128, grid_size - k_deep - k_mid)
    deep = np.geomspace(r_min, 0.02 * D, k_deep, endpoint=False)
    mid = np.geomspace(0.02 * D, r_split, k_mid, endpoint=False)
    j = np.arange(k_far)
    cheb = -np.cos(np.pi * j / (k_far - 1))
    far = r_split + 0.5 * (D - r_split) * (cheb + 1.0)
    far[0], far[-1] = r_split, D
    return np.concatenate([deep, mid, far]), r_split


def build_table(space, grid_size=1024, tol=1e-10):
    """Construct the kernel table for one space.

    phi is accumulated as the primitive of phi' from the diameter inward
    (one Gauss panel per grid interval), then shifted so the weighted mean
    int phi v vanishes.  Node derivatives are spot-checked against the
    independent quadrature route; disagreement raises KernelBuildError.
    """
    if grid_size < 64:
        raise ValueError("grid_size must be at least 64")
    V = space.total_volume
    D = space.diameter
    grid, r_split = _build_grid(space, grid_size)

    mpp = np.asarray(minus_phi_prime(space, grid))
    phi_prime_nodes = -mpp

    # phi_raw(r) = int_r^D (-phi'), accumulated per interval from the far end
    panel = _gauss_panels(lambda t: np.asarray(minus_phi_prime(space, t)), grid)
    phi_raw = np.concatenate([np.cumsum(panel[::-1])[::-1], [0.0]])

    # zero-mean shift: int_0^D phi_raw v dr = int_0^D (-phi'(t)) V(t) dt by Fubini
    overlap = adaptive_quad(
        lambda t: minus_phi_prime(space, t) * ball_volume_closed(space, t),
        0.0, D, epsabs=1e-13 * V * max(D, 1.0))
    const = -overlap / V
    phi = phi_raw + const

    table = KernelTable(
        manifold=space,
        grid=grid,
        phi=phi,
        phi_prime=phi_prime_nodes,
        singular_coeff=singular_coefficient(space),
        log_singularity=(space.n == 2),
        norm_constant=const,
        mean_residual=0.0,
        tol=tol,
        r_split=r_split,
    )

    # re-check the zero-mean condition through the interpolant; the lower
    # limit skips a sliver where phi v ~ c r is below roundoff (and r^{n-2}
    # would underflow for n = 16)
    t_lo = 1e-12 * D
    eps_resid = min(1e-11 * V * max(D, 1.0), 0.2e-8 * V)

    def weighted_mean():
        # breakpoints at the interpolant kinks keep the subdivision shallow
        return adaptive_quad(lambda t: table.phi_at(t) * space.sphere_area(t),
                             t_lo, D, epsabs=eps_resid,
                             points=[grid[0], 0.02 * D, r_split])

    residual = weighted_mean()
    if np.isfinite(residual) and abs(residual) > 0.1 * max(tol, 1e-8) * V:
        # fold the interpolation bias of the first quadrature route into the
        # constant, then verify again with a fresh quadrature
        table.phi = table.phi - residual / V
        table.norm_constant -= residual / V
        table._build_interpolants()
        residual = weighted_mean()
    table.mean_residual = residual
    if not np.isfinite(residual) or abs(residual) > max(tol, 1e-8) * V:
        raise KernelBuildError(
            f"zero-mean residual {residual!r} exceeds {max(tol, 1e-8) * V!r} on {space.name}")

    # spot-check the closed-antiderivative path against plain quadrature
    probe = grid[np.linspace(len(grid) // 8, len(grid) - 2, 6, dtype=int)]
    for r in probe:
        quad_val = phi_prime(space, float(r))
        fast_val = -float(minus_phi_prime(space, float(r)))
        if abs(quad_val - fast_val) > 1e-8 * max(abs(quad_val), 1e-12):
            raise KernelBuildError(
                f"antiderivative route disagrees with quadrature at r={r!r} "
                f"({fast_val!r} vs {quad_val!r}) on {space.name}")

    if not np.all(np.diff(table.phi) < 0):
        raise KernelBuildError(f"tabulated phi is not strictly decreasing on {space.name}")
    if not np.all(table.phi_prime[:-1] < 0):
        raise KernelBuildError(f"tabulated phi' is not negative on {space.name}")
    return table


def green_pair(table, x, y):
    """G(x, y) = phi(d(x, y)); raises SingularityError at coincident points."""
    d = table.manifold.distance(x, y)
    if d <= 1e-12:
        raise SingularityError("Green kernel evaluated at coincident points")
    return table.phi_at(d)


# -- closed-form potentials used as validation oracles -------------------------

def _inv_v_integral(space, a, b):
    """int_a^b du / v(u); a, b strictly inside (0, D)."""
    return adaptive_quad(lambda u: 1.0 / space.sphere_area(u), a, b, epsabs=1e-12)


def shell_potential(table, p, r, x):
    """Potential at x of the uniform probability measure on the geodesic
    sphere S(p, r).

    Piecewise closed form: phi(t) + V^{-1} int_0^r V(u)/v(u) du outside the
    ball (t = d(p, x) >= r), with the extra term -int_t^r du/v(u) inside.
    Continuous across t = r.
    """
    space = table.manifold
    D = space.diameter
    if not 0.0 < r < D:
        raise ValueError(f"shell radius must lie in (0, {D})")
    t = space.distance(p, x)
    if t <= 1e-12:
        raise SingularityError("shell potential evaluated at the center")
    V = space.total_volume
    base = adaptive_quad(lambda u: ball_volume_closed(space, u) / space.sphere_area(u),
                         0.0, r, epsabs=1e-12 * V) / V
    out = table.phi_at(t) + base
    if t < r:
        out -= _inv_v_integral(space, t, r)
    return float(out)


def ball_potential(table, p, r, x):
    """Potential at x of chi_{B(p,r)} vol minus its additive normalization.

    Outside the ball this is V(r) phi(t); inside it is
    V(r) phi(t) - int_t^r v(s) int_t^s du/v(u) ds with t = d(p, x), the
    function whose Laplacian is chi_B - V(r)/V and which coincides with the
    obstacle-problem minimizer at volume a = V(r).
    """
    space = table.manifold
    D = space.diameter
    if not 0.0 < r < D:
        raise ValueError(f"ball radius must lie in (0, {D})")
    t = space.distance(p, x)
    if t <= 1e-12:
        raise SingularityError("ball potential evaluated at the center")
    Vr = ball_volume_closed(space, r)
    out = Vr * table.phi_at(t)
    if t < r:
        inner = lambda s: space.sphere_area(s) * _inv_v_integral(space, t, s)
        out -= adaptive_quad(inner, t, r, epsabs=1e-10 * max(Vr, 1.0))
    return float(out)
