"""Discrete Green energy on a space, its Riemannian gradient, and a
retraction-based multi-start descent.

The energy of N distinct points is the sum over ordered pairs of
phi(d(x_i, x_j)).  Its gradient at x_i is

    -2 sum_{j != i} phi'(d_ij) log_{x_i}(x_j) / d_ij,

a tangent vector at x_i.  Descent retracts along the exponential map with
Armijo backtracking; coincident or cut-locus pairs reject the trial step.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import cross_constant, radius_r_n
from .errors import CutLocusError
from .geometry import CrossSpace, ambient_inner, parse_manifold

CONFIG_FORMAT = "greenpoints-config"
CONFIG_FORMAT_VERSION = 1

CUT_LOCUS_GUARD = 1e-9


@dataclass
class Configuration:
    """N points on one space, stored as a stacked array of representatives."""

    manifold: CrossSpace
    points: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points)
        if len(self.points) < 2:
            raise ValueError("a configuration needs at least 2 points")

    @property
    def n_points(self):
        return len(self.points)

    def to_dict(self, metadata=None):
        pts = self.points
        if np.iscomplexobj(pts):
            coords = np.stack([pts.real, pts.imag], axis=-1).tolist()
        else:
            coords = pts.tolist()
        doc = {
            "format": CONFIG_FORMAT,
            "format_version": CONFIG_FORMAT_VERSION,
            "manifold": self.manifold.name,
            "n_points": self.n_points,
            "points": coords,
        }
        if metadata:
            doc["metadata"] = metadata
        return doc

    @classmethod
    def from_dict(cls, doc):
        if doc.get("format") != CONFIG_FORMAT:
            raise ValueError("not a configuration file")
        space = parse_manifold(doc["manifold"])
        arr = np.asarray(doc["points"], dtype=float)
        if space.kind == "CP":
            arr = arr[..., 0] + 1j * arr[..., 1]
        return cls(space, arr)

    def save(self, path, metadata=None):
        with open(path, "w") as fh:
            json.dump(self.to_dict(metadata), fh, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class MinimizeOptions:
    max_iters: int = 2000
    grad_tol: float = None          # default 1e-8 * N, set at run time
    armijo_c1: float = 1e-4
    armijo_shrink: float = 0.5
    max_backtracks: int = 40
    restarts: int = 8
    seed: int = 0
    min_dist_floor: float = 1e-9

    def __post_init__(self):
        if not 0.0 < self.armijo_c1 < 1.0:
            raise ValueError("armijo_c1 must lie in (0, 1)")
        if not 0.0 < self.armijo_shrink < 1.0:
            raise ValueError("armijo_shrink must lie in (0, 1)")

    def to_dict(self):
        return {
            "max_iters": self.max_iters, "grad_tol": self.grad_tol,
            "armijo_c1": self.armijo_c1, "armijo_shrink": self.armijo_shrink,
            "max_backtracks": self.max_backtracks, "restarts": self.restarts,
            "seed": self.seed, "min_dist_floor": self.min_dist_floor,
        }


@dataclass
class MinimizeReport:
    final: Configuration
    energy_trace: list
    grad_norm_final: float
    dsep_final: float
    bound_margin: float
    rn_margin: float
    iterations: int
    restarts_used: int
    converged: bool
    options: MinimizeOptions = field(repr=False, default=None)


def _canonical_order(points):
    """Index order making the pair sum independent of input permutation."""
    flat = np.ascontiguousarray(points).reshape(len(points), -1)
    if np.iscomplexobj(flat):
        flat = np.concatenate([flat.real, flat.imag], axis=1)
    return np.lexsort(flat.T[::-1])


def _offdiag_min(d):
    n = len(d)
    mask = ~np.eye(n, dtype=bool)
    return float(d[mask].min())


def _energy_from_distances(table, d, order=None):
    """2 sum_{i<j} phi(d_ij) accumulated in a fixed pair order."""
    n = len(d)
    if order is not None:
        d = d[np.ix_(order, order)]
    iu = np.triu_indices(n, k=1)
    vals = d[iu]
    if vals.min() <= 1e-12:
        return math.inf
    return 2.0 * float(np.sum(table.phi_at(vals)))


def green_energy(table, cfg):
    """Green energy of a configuration; +inf signals coincident points.

    The accumulation order is fixed by a canonical sort of the points, so
    permutations of the same point set give bit-identical values.
    """
    d = cfg.manifold.pairwise_distances(cfg.points)
    return _energy_from_distances(table, d, order=_canonical_order(cfg.points))


def separation(cfg):
    """Least pairwise intrinsic distance."""
    return _offdiag_min(cfg.manifold.pairwise_distances(cfg.points))


def riemannian_gradient(table, cfg, min_dist_floor=1e-9, at_cut_locus="raise"):
    """Gradient of the Green energy: one tangent vector per point.

    By default raises CutLocusError when some pair sits at the diameter,
    where the log map direction is not unique; callers may perturb and
    retry.  ``at_cut_locus="zero"`` instead uses the limit value of the
    pair force, which vanishes because phi'(D) = 0 on every space here
    (this is what makes symmetric critical configurations with antipodal
    pairs, such as the octahedron, evaluable).
    """
    space = cfg.manifold
    d, T = space.pair_tangents(cfg.points)
    n = len(d)
    off = ~np.eye(n, dtype=bool)
    D = space.diameter
    at_cut = off & (d >= D - CUT_LOCUS_GUARD)
    if np.any(at_cut):
        if at_cut_locus != "zero":
            raise CutLocusError("a pair sits at the cut locus; gradient undefined")
        off = off & ~at_cut
    if np.any(d[off] <= min_dist_floor):
        raise ValueError("pairwise distance below min_dist_floor")
    W = np.zeros_like(d)
    W[off] = table.phi_prime_at(d[off])
    extra = (None,) * (T.ndim - 2)
    grad = -2.0 * np.sum(W[(...,) + extra] * T, axis=1)
    return grad


def _grad_norm(space, grad):
    return math.sqrt(sum(ambient_inner(g, g) for g in grad))


def _exp_rows(space, X, V):
    """Row-wise retraction exp_{x_i}(v_i)."""
    flatV = V.reshape(len(V), -1)
    if np.iscomplexobj(flatV):
        norms = np.sqrt(np.sum((flatV * flatV.conj()).real, axis=1))
    else:
        norms = np.sqrt(np.sum(flatV * flatV, axis=1))
    out = np.empty_like(X)
    for i in range(len(X)):
        if norms[i] < 1e-300:
            out[i] = X[i]
        else:
            y = X[i] * math.cos(norms[i]) + (V[i] / norms[i]) * math.sin(norms[i])
            out[i] = space.canonicalize(y / math.sqrt(ambient_inner(y, y)))
    return out


def _descend(table, X0, opts, grad_tol):
    """Armijo-backtracking retraction descent from one start."""
    space = table.manifold
    D = space.diameter
    X = X0.copy()
    d = space.pairwise_distances(X)
    E = _energy_from_distances(table, d)
    trace = [E]
    step = 0.5
    converged = False
    iters = 0
    for _ in range(opts.max_iters):
        try:
            grad = riemannian_gradient(table, Configuration(space, X),
                                       min_dist_floor=opts.min_dist_floor)
        except (CutLocusError, ValueError):
            break
        gn2 = sum(ambient_inner(g, g) for g in grad)
        gn = math.sqrt(gn2)
        if gn <= grad_tol:
            converged = True
            break
        # keep single-step displacement below half the diameter
        row_norms = max(math.sqrt(ambient_inner(g, g)) for g in grad)
        step = min(step, 0.5 * D / row_norms)
        accepted = False
        t = step
        for _ in range(opts.max_backtracks):
            Y = _exp_rows(space, X, -t * grad)
            dY = space.pairwise_distances(Y)
            off = ~np.eye(len(dY), dtype=bool)
            if dY[off].min() <= opts.min_dist_floor or dY[off].max() >= D - CUT_LOCUS_GUARD:
                t *= opts.armijo_shrink
                continue
            EY = _energy_from_distances(table, dY)
            if EY <= E - opts.armijo_c1 * t * gn2:
                accepted = True
                break
            t *= opts.armijo_shrink
        if not accepted:
            break
        X, E = Y, EY
        trace.append(E)
        iters += 1
        step = min(t * 2.0, 10.0)
    return X, E, trace, iters, converged


def minimize(table, start, opts=None):
    """Multi-start retraction descent on the Green energy.

    ``start`` is either a Configuration (used as the first start; remaining
    restarts are uniform) or an integer N.  Deterministic for a fixed seed.
    """
    opts = opts or MinimizeOptions()
    space = table.manifold
    if isinstance(start, Configuration):
        n_points = start.n_points
        first = start.points
    else:
        n_points = int(start)
        first = None
    if n_points < 2:
        raise ValueError("need at least 2 points")
    grad_tol = opts.grad_tol if opts.grad_tol is not None else 1e-8 * n_points

    seeds = np.random.SeedSequence(opts.seed).spawn(max(opts.restarts, 1))
    best = None
    for k, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        if k == 0 and first is not None:
            X0 = first
        else:
            X0 = space.random_points(rng, n_points)
            # resample the rare start with a nearly coincident pair
            for _ in range(20):
                dm = space.pairwise_distances(X0)
                if _offdiag_min(dm) > max(opts.min_dist_floor, 1e-6):
                    break
                X0 = space.random_points(rng, n_points)
        X, E, trace, iters, converged = _descend(table, X0, opts, grad_tol)
        if best is None or E < best[1]:
            best = (X, E, trace, iters, converged)

    X, E, trace, iters, converged = best
    cfg = Configuration(space, X)
    dsep = separation(cfg)
    c_bound = cross_constant(space) * (n_points - 1) ** (-1.0 / space.n)
    r_n, _ = radius_r_n(space, n_points)
    try:
        gn = _grad_norm(space, riemannian_gradient(table, cfg,
                                                   min_dist_floor=opts.min_dist_floor))
    except (CutLocusError, ValueError):
        gn = math.nan
    return MinimizeReport(
        final=cfg,
        energy_trace=trace,
        grad_norm_final=gn,
        dsep_final=dsep,
        bound_margin=dsep - c_bound,
        rn_margin=dsep - r_n,
        iterations=iters,
        restarts_used=max(opts.restarts, 1),
        converged=converged,
        options=opts,
    )


def verify_separation_bound(cfg, which="constant"):
    """Check dsep against the closed-form bound for claimed minimizers.

    ``which`` selects the constant bound C (N-1)^{-1/n} or the exact radius
    r_N.  Returns (ok, margin); a False return flags a non-minimizer or a
    bug, never an exception.
    """
    space = cfg.manifold
    n_pts = cfg.n_points
    dsep = separation(cfg)
    if which == "constant":
        bound = cross_constant(space) * (n_pts - 1) ** (-1.0 / space.n)
    elif which == "radius":
        bound, _ = radius_r_n(space, n_pts)
    else:
        raise ValueError("which must be 'constant' or 'radius'")
    margin = dsep - bound
    return margin >= 0.0, margin
