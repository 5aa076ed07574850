"""Geometry of the compact rank one symmetric spaces.

Implements the sphere S^n, the projective spaces RP^m, CP^m, HP^m and the
Cayley plane OP^2 with the round metrics normalized so that the sphere has
diameter pi and every projective space has diameter pi/2.  Points are stored
as unit vectors over the base field (R, C or H); projective points are
equivalence classes and carry a canonical gauge (first nonzero coordinate
real positive).  Quaternions are explicit 4-component arrays with a Hamilton
product, so HP^m needs no matrix model.

The Cayley plane has no coordinate model here; it supports only the scalar
queries (dimension, diameter, volumes, area profile).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import CutLocusError, UnsupportedPointOperation

# Distances below this are treated as zero (coincident points / same class).
ZERO_DISTANCE = 1e-12
# Log maps are refused within this margin of the diameter.
CUT_LOCUS_MARGIN = 1e-12


def unit_sphere_volume(k):
    """Surface volume of the unit k-sphere in R^{k+1}: 2 pi^{(k+1)/2} / Gamma((k+1)/2)."""
    return 2.0 * math.exp(0.5 * (k + 1) * math.log(math.pi) - math.lgamma(0.5 * (k + 1)))


def _simpson_fallback(f, a, b, panels=2 ** 16):
    x = np.linspace(a, b, panels + 1)
    try:
        y = np.asarray(f(x), dtype=float)
        if y.shape != x.shape:
            raise ValueError
    except Exception:
        y = np.asarray([f(t) for t in x])
    return integrate.simpson(y, x=x)


def adaptive_quad(f, a, b, epsabs, points=None):
    """Adaptive Gauss-Kronrod quadrature with a composite-Simpson fallback."""
    if a == b:
        return 0.0
    import warnings
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, abserr = integrate.quad(f, a, b, epsabs=epsabs, epsrel=1e-13,
                                     limit=400, points=points)
    if not np.isfinite(val) or abserr > max(epsabs * 1e3, abs(val) * 1e-7):
        return _simpson_fallback(f, a, b)
    return val


# -- quaternion arithmetic ---------------------------------------------------
# Quaternions are arrays whose last axis has length 4 (w, x, y, z components).

def quat_mult(a, b):
    """Hamilton product, broadcasting over leading axes."""
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def quat_conj(a):
    out = a.copy()
    out[..., 1:] = -out[..., 1:]
    return out


def quat_abs(a):
    return np.sqrt(np.sum(a * a, axis=-1))


def ambient_inner(u, v):
    """Real inner product of ambient vectors (sum over all real components)."""
    if np.iscomplexobj(u) or np.iscomplexobj(v):
        return float(np.sum((np.conj(u) * v).real))
    return float(np.sum(u * v))


def ambient_norm(v):
    return math.sqrt(ambient_inner(v, v))


@dataclass(frozen=True)
class GeometryParams:
    """Scalar geometry of one space: intrinsic dimension, diameter, total
    volume in the standard normalization, and the real dimension of the
    base field (0 for spheres)."""

    n: int
    diameter: float
    total_volume: float
    field_dim: int


class CrossSpace:
    """Base class: one compact rank one symmetric space.

    Concrete subclasses fix the intrinsic dimension ``n``, diameter, base
    field and coordinate model.  All methods are pure functions of their
    arguments; random sampling takes an explicit generator.
    """

    kind = None            # short id prefix, e.g. "S", "RP"
    point_capable = True

    # subclasses set: n (int), diameter (float), field_dim (int)

    def __repr__(self):
        return self.name

    def __eq__(self, other):
        return isinstance(other, CrossSpace) and self.name == other.name

    def __hash__(self):
        return hash(self.name)

    @property
    def total_volume(self):
        raise NotImplementedError

    def params(self):
        return GeometryParams(self.n, self.diameter, self.total_volume, self.field_dim)

    # -- radial volume data --------------------------------------------------

    def sphere_area(self, r):
        """Area v(r) of the geodesic sphere of radius r.

        Spheres: vol(S^{n-1}) sin^{n-1} r.  Projective spaces additionally
        carry the factor cos^{dK-1} r from the base-field fibration.
        """
        r = np.asarray(r, dtype=float)
        if np.any(r < -1e-15) or np.any(r > self.diameter + 1e-15):
            raise ValueError(f"radius outside [0, {self.diameter}]: {r}")
        r = np.clip(r, 0.0, self.diameter)
        omega = unit_sphere_volume(self.n - 1)
        if self.field_dim <= 1:
            val = omega * np.sin(r) ** (self.n - 1)
        else:
            val = omega * np.sin(r) ** (self.n - 1) * np.cos(r) ** (self.field_dim - 1)
        return float(val) if np.isscalar(r) or val.ndim == 0 else val

    def ball_volume(self, r):
        """Volume V(r) of the geodesic ball, by adaptive quadrature of v."""
        if np.ndim(r) > 0:
            return np.array([self.ball_volume(float(t)) for t in np.asarray(r).ravel()])
        r = float(r)
        if r < -1e-15 or r > self.diameter + 1e-15:
            raise ValueError(f"radius outside [0, {self.diameter}]: {r}")
        r = min(max(r, 0.0), self.diameter)
        if r == 0.0:
            return 0.0
        return adaptive_quad(lambda t: self.sphere_area(t), 0.0, r,
                             epsabs=1e-12 * self.total_volume)

    # -- point operations (overridden away by CayleyPlane) --------------------

    def _check_point(self, x):
        x = np.asarray(x)
        if x.shape != self.point_shape:
            raise ValueError(f"point shape {x.shape} != {self.point_shape} on {self.name}")
        nrm = ambient_norm(x)
        if abs(nrm - 1.0) > 1e-12:
            raise ValueError(f"point not unit (|x| = {nrm!r}) on {self.name}")
        return x

    def canonicalize(self, x):
        """Return the canonical representative of the point's class."""
        return np.asarray(x, dtype=self.point_dtype)

    def distance(self, x, y):
        """Intrinsic distance arccos(<x,y>) (field modulus on projective spaces).

        Near-coincident classes switch to the chord form 2 asin(|x - y~|/2),
        which agrees exactly in real arithmetic but keeps full float accuracy
        where arccos loses half its digits.
        """
        x = self._check_point(x)
        y = self._check_point(y)
        d, aligned = self._align(x, y)
        if math.cos(d) > 0.99:
            d = 2.0 * math.asin(min(1.0, 0.5 * ambient_norm(x - aligned)))
        return 0.0 if d < ZERO_DISTANCE else d

    def exp(self, x, v):
        """Geodesic endpoint exp_x(v): x cos|v| + (v/|v|) sin|v|, gauge fixed."""
        x = self._check_point(x)
        v = np.asarray(v, dtype=self.point_dtype)
        t = ambient_norm(v)
        if t < 1e-300:
            return x.copy()
        y = x * math.cos(t) + (v / t) * math.sin(t)
        y = y / ambient_norm(y)
        return self.canonicalize(y)

    def log(self, x, y):
        """Tangent vector at x pointing to y with |log| = d(x, y).

        Raises CutLocusError at distance equal to the diameter, where the
        minimizing geodesic is not unique.  Coincident points (or identical
        projective classes) give the zero vector.
        """
        x = self._check_point(x)
        y = self._check_point(y)
        d, aligned = self._align(x, y)
        if d < ZERO_DISTANCE:
            return np.zeros_like(x)
        if d > self.diameter - CUT_LOCUS_MARGIN:
            raise CutLocusError(
                f"log map undefined at the cut locus (d = {d!r} on {self.name})")
        unit = (aligned - x * math.cos(d)) / math.sin(d)
        return d * unit

    def project_tangent(self, x, v):
        """Project an ambient vector onto the horizontal tangent space at x."""
        raise NotImplementedError

    def random_tangent(self, rng, x, norm=1.0):
        v = self.project_tangent(x, self._random_ambient(rng))
        n = ambient_norm(v)
        if n == 0.0:
            return self.random_tangent(rng, x, norm)
        return v * (norm / n)

    def random_point(self, rng):
        """Uniform point w.r.t. the Riemannian volume (normalized Gaussian)."""
        x = self._random_ambient(rng)
        x = x / ambient_norm(x)
        return self.canonicalize(x)

    def random_points(self, rng, count):
        return np.stack([self.random_point(rng) for _ in range(count)])

    def pairwise_distances(self, X):
        d, _ = self._pair_geometry(np.asarray(X), tangents=False)
        return d

    def pair_tangents(self, X):
        """Distances d[i, j] and unit tangents T[i, j] at point i toward point j.

        Diagonal entries are zero.  Entries at (near-)zero or (near-)diameter
        distance are left as zeros; callers enforce their own floors.
        """
        return self._pair_geometry(np.asarray(X), tangents=True)

    # internal hooks ----------------------------------------------------------

    def _random_ambient(self, rng):
        raise NotImplementedError

    def _align(self, x, y):
        """Distance and the gauge-aligned representative of y seen from x."""
        raise NotImplementedError

    def _pair_geometry(self, X, tangents):
        raise NotImplementedError


def _safe_unit_tangents(X_aligned, X, cosd, sind):
    """(aligned_j - x_i cos d) / sin d with guarded division."""
    s = np.where(sind > 1e-300, sind, 1.0)
    extra = (slice(None),) * 2 + (None,) * (X_aligned.ndim - 2)
    T = (X_aligned - X[:, None] * cosd[extra]) / s[extra]
    T[sind <= 1e-300] = 0.0
    return T


class Sphere(CrossSpace):
    """Round unit sphere S^n in R^{n+1}, n >= 2."""

    kind = "S"
    field_dim = 0
    point_dtype = np.float64

    def __init__(self, n):
        if n < 2:
            raise ValueError("sphere dimension must be >= 2")
        self.n = int(n)
        self.diameter = math.pi
        self.name = f"S{n}"
        self.point_shape = (n + 1,)

    @property
    def total_volume(self):
        return unit_sphere_volume(self.n)

    def distance(self, x, y):
        x = self._check_point(x)
        y = self._check_point(y)
        c = float(np.dot(x, y))
        if c > 0.99:
            d = 2.0 * math.asin(min(1.0, 0.5 * ambient_norm(x - y)))
        elif c < -0.99:
            d = math.pi - 2.0 * math.asin(min(1.0, 0.5 * ambient_norm(x + y)))
        else:
            d = math.acos(c)
        return 0.0 if d < ZERO_DISTANCE else d

    def canonicalize(self, x):
        return np.asarray(x, dtype=float)

    def project_tangent(self, x, v):
        return v - x * float(np.dot(x, v))

    def _random_ambient(self, rng):
        return rng.standard_normal(self.point_shape)

    def _align(self, x, y):
        c = min(1.0, max(-1.0, float(np.dot(x, y))))
        return math.acos(c), y

    def _pair_geometry(self, X, tangents):
        C = np.clip(X @ X.T, -1.0, 1.0)
        d = np.arccos(C)
        np.fill_diagonal(d, 0.0)
        if not tangents:
            return d, None
        cosd, sind = np.cos(d), np.sin(d)
        T = _safe_unit_tangents(np.broadcast_to(X[None, :, :], (len(X),) + X.shape).copy(),
                                X, cosd, sind)
        return d, T


class RealProjective(CrossSpace):
    """Real projective space RP^m: unit vectors in R^{m+1} modulo sign."""

    kind = "RP"
    field_dim = 1
    point_dtype = np.float64

    def __init__(self, m):
        if m < 1:
            raise ValueError("projective dimension must be >= 1")
        self.m = int(m)
        self.n = int(m)
        self.diameter = math.pi / 2.0
        self.name = f"RP{m}"
        self.point_shape = (m + 1,)

    @property
    def total_volume(self):
        return 0.5 * unit_sphere_volume(self.m)

    def canonicalize(self, x):
        x = np.asarray(x, dtype=float)
        idx = int(np.argmax(np.abs(x) > ZERO_DISTANCE))
        return x if x[idx] >= 0 else -x

    def project_tangent(self, x, v):
        return v - x * float(np.dot(x, v))

    def _random_ambient(self, rng):
        return rng.standard_normal(self.point_shape)

    def _align(self, x, y):
        c = float(np.dot(x, y))
        a = min(1.0, abs(c))
        return math.acos(a), (y if c >= 0 else -y)

    def _pair_geometry(self, X, tangents):
        C = X @ X.T
        A = np.clip(np.abs(C), 0.0, 1.0)
        d = np.arccos(A)
        np.fill_diagonal(d, 0.0)
        if not tangents:
            return d, None
        sgn = np.where(C >= 0, 1.0, -1.0)
        aligned = sgn[:, :, None] * X[None, :, :]
        T = _safe_unit_tangents(aligned, X, np.cos(d), np.sin(d))
        return d, T


class ComplexProjective(CrossSpace):
    """Complex projective space CP^m with the Fubini-Study metric, diameter pi/2."""

    kind = "CP"
    field_dim = 2
    point_dtype = np.complex128

    def __init__(self, m):
        if m < 1:
            raise ValueError("projective dimension must be >= 1")
        self.m = int(m)
        self.n = 2 * int(m)
        self.diameter = math.pi / 2.0
        self.name = f"CP{m}"
        self.point_shape = (m + 1,)

    @property
    def total_volume(self):
        return math.pi ** self.m / math.factorial(self.m)

    def canonicalize(self, x):
        x = np.asarray(x, dtype=complex)
        idx = int(np.argmax(np.abs(x) > ZERO_DISTANCE))
        q = x[idx]
        return x * (np.conj(q) / abs(q))

    def project_tangent(self, x, v):
        return v - x * complex(np.vdot(x, v))

    def _random_ambient(self, rng):
        return (rng.standard_normal(self.point_shape)
                + 1j * rng.standard_normal(self.point_shape))

    def _align(self, x, y):
        c = complex(np.vdot(x, y))
        a = min(1.0, abs(c))
        d = math.acos(a)
        if a < ZERO_DISTANCE or d > self.diameter - CUT_LOCUS_MARGIN:
            return d, y
        return d, y * (np.conj(c) / a)

    def _pair_geometry(self, X, tangents):
        C = np.conj(X) @ X.T            # C[i, j] = <x_i, x_j>
        A = np.clip(np.abs(C), 0.0, 1.0)
        d = np.arccos(A)
        np.fill_diagonal(d, 0.0)
        if not tangents:
            return d, None
        mod = np.where(A > 1e-300, A, 1.0)
        phase = np.conj(C) / mod
        aligned = phase[:, :, None] * X[None, :, :]
        T = _safe_unit_tangents(aligned, X, np.cos(d), np.sin(d))
        return d, T


class QuaternionProjective(CrossSpace):
    """Quaternionic projective space HP^m, diameter pi/2.

    Ambient vectors are (m+1, 4) arrays of quaternions with the right
    Sp(1)-action as gauge; the inner product is sum_k conj(x_k) y_k.
    """

    kind = "HP"
    field_dim = 4
    point_dtype = np.float64

    def __init__(self, m):
        if m < 1:
            raise ValueError("projective dimension must be >= 1")
        self.m = int(m)
        self.n = 4 * int(m)
        self.diameter = math.pi / 2.0
        self.name = f"HP{m}"
        self.point_shape = (m + 1, 4)

    @property
    def total_volume(self):
        return math.pi ** (2 * self.m) / math.factorial(2 * self.m + 1)

    def _inner(self, x, y):
        return quat_mult(quat_conj(x), y).sum(axis=-2)

    def canonicalize(self, x):
        x = np.asarray(x, dtype=float)
        mods = quat_abs(x)
        idx = int(np.argmax(mods > ZERO_DISTANCE))
        q = x[idx]
        s = quat_conj(q) / mods[idx]
        return quat_mult(x, s[None, :])

    def project_tangent(self, x, v):
        c = self._inner(x, v)
        return v - quat_mult(x, c[None, :])

    def _random_ambient(self, rng):
        return rng.standard_normal(self.point_shape)

    def _align(self, x, y):
        c = self._inner(x, y)
        a = min(1.0, float(quat_abs(c)))
        d = math.acos(a)
        if a < ZERO_DISTANCE or d > self.diameter - CUT_LOCUS_MARGIN:
            return d, y
        s = quat_conj(c) / a
        return d, quat_mult(y, s[None, :])

    def _pair_geometry(self, X, tangents):
        # gram[i, j] = sum_k conj(X[i, k]) X[j, k], a quaternion per pair
        gram = quat_mult(quat_conj(X)[:, None], X[None, :]).sum(axis=2)
        A = np.clip(quat_abs(gram), 0.0, 1.0)
        d = np.arccos(A)
        np.fill_diagonal(d, 0.0)
        if not tangents:
            return d, None
        mod = np.where(A > 1e-300, A, 1.0)
        s = quat_conj(gram) / mod[:, :, None]
        aligned = quat_mult(X[None, :, :, :], s[:, :, None, :])
        T = _safe_unit_tangents(aligned, X, np.cos(d), np.sin(d))
        return d, T


class CayleyPlane(CrossSpace):
    """Octonionic projective plane OP^2: scalar queries only (n = 16, dK = 8)."""

    kind = "OP"
    field_dim = 8
    point_capable = False
    point_dtype = None
    point_shape = None

    def __init__(self):
        self.n = 16
        self.diameter = math.pi / 2.0
        self.name = "OP2"

    @property
    def total_volume(self):
        return 6.0 * math.pi ** 8 / math.factorial(11)

    def _no_points(self, op):
        raise UnsupportedPointOperation(
            f"{op} is not available on OP2 (no coordinate model)")

    def distance(self, x, y):
        self._no_points("distance")

    def exp(self, x, v):
        self._no_points("exp")

    def log(self, x, y):
        self._no_points("log")

    def random_point(self, rng):
        self._no_points("random_point")

    def random_points(self, rng, count):
        self._no_points("random_points")

    def project_tangent(self, x, v):
        self._no_points("project_tangent")

    def canonicalize(self, x):
        self._no_points("canonicalize")

    def pairwise_distances(self, X):
        self._no_points("pairwise_distances")

    def pair_tangents(self, X):
        self._no_points("pair_tangents")


def random_isometry(space, rng):
    """Random ambient isometry: orthogonal, unitary, or quaternion-unitary
    matrix acting on representatives (commutes with the gauge action)."""
    k = space.point_shape[0]
    if space.kind in ("S", "RP"):
        q, r = np.linalg.qr(rng.standard_normal((k, k)))
        return q * np.sign(np.diag(r))[None, :]
    if space.kind == "CP":
        q, r = np.linalg.qr(rng.standard_normal((k, k))
                            + 1j * rng.standard_normal((k, k)))
        d = np.diag(r)
        return q * (np.conj(d) / np.abs(d))[None, :]
    if space.kind == "HP":
        # modified Gram-Schmidt on quaternion columns
        cols = []
        for _ in range(k):
            a = rng.standard_normal((k, 4))
            for e in cols:
                c = quat_mult(quat_conj(e), a).sum(axis=0)
                a = a - quat_mult(e, c[None, :])
            cols.append(a / math.sqrt(np.sum(a * a)))
        return np.stack(cols, axis=1)        # Q[row, col, component]
    raise UnsupportedPointOperation(f"no isometry model on {space.name}")


def apply_isometry(space, Q, X):
    """Apply an ambient isometry to a stack of points, re-gauged."""
    X = np.asarray(X)
    if space.kind == "HP":
        # (Q x)_k = sum_l Q[k, l] x_l with quaternion products
        out = quat_mult(Q[None, :, :, :], X[:, None, :, :]).sum(axis=2)
    else:
        out = X @ Q.T
    return np.stack([space.canonicalize(row) for row in out])


def parse_manifold(name):
    """Parse ids like 'S2', 'RP3', 'CP2', 'HP1', 'OP2' into space objects."""
    name = name.strip()
    for prefix, cls in (("RP", RealProjective), ("CP", ComplexProjective),
                        ("HP", QuaternionProjective), ("OP", CayleyPlane),
                        ("S", Sphere)):
        if name.upper().startswith(prefix):
            rest = name[len(prefix):]
            if cls is CayleyPlane:
                if rest != "2":
                    raise ValueError(f"unknown manifold id {name!r}")
                return CayleyPlane()
            try:
                k = int(rest)
            except ValueError:
                raise ValueError(f"unknown manifold id {name!r}") from None
            return cls(k)
    raise ValueError(f"unknown manifold id {name!r}")


ALL_KINDS = (Sphere, RealProjective, ComplexProjective, QuaternionProjective, CayleyPlane)
