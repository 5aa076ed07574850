"""Discrete harmonic balls on triangulated closed surfaces.

A harmonic ball around vertex p with prescribed volume a is the non-contact
set of the obstacle problem

    minimize  1/2 u^T L u - tau m^T u   subject to  u <= a g,

where L is the cotangent Laplacian, m the lumped vertex areas, g the
discrete Green vector of p (L g = e_p - m/A, zero weighted mean) and
tau = 1 - a/A.  On non-contact vertices the solution satisfies
(L u)_i = tau m_i; on contact vertices away from p, (L u)_i = -(a/A) m_i.
The solver is a colored projected Gauss-Seidel sweep, deterministic for a
fixed mesh.

The module also hosts the set-level checks: mean value property, volume
identity, nesting, connectedness, the local Dirichlet formulation of mean
value sets, and the vertex-restricted energy minimization with the
exclusion test of minimizers against each other's harmonic balls.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu, spsolve

from .errors import ConvergenceError


# -- discrete Green vectors -----------------------------------------------------

@dataclass
class DiscreteGreen:
    """Green vector of one source vertex: L g = e_p - m/A, sum m g = 0."""

    source: int
    values: np.ndarray
    residual: float


def _green_factor(mesh):
    if mesh._green_factor is None:
        L = mesh.laplacian.tocsc()
        mesh._green_factor = splu(L[1:, 1:])
    return mesh._green_factor


def _green_solve(mesh, rhs):
    """Solve L g = rhs (rhs summing to zero) with the zero-weighted-mean gauge."""
    lu = _green_factor(mesh)
    g = np.empty(mesh.n_vertices)
    g[0] = 0.0
    g[1:] = lu.solve(rhs[1:])
    g -= float(mesh.mass @ g) / mesh.total_area
    return g


def mesh_green(mesh, p):
    """Discrete Green vector of vertex p."""
    p = int(p)
    rhs = -mesh.mass / mesh.total_area
    rhs[p] += 1.0
    g = _green_solve(mesh, rhs)
    resid = np.linalg.norm(mesh.laplacian @ g - rhs) / np.linalg.norm(rhs)
    if resid > 1e-10:
        raise ConvergenceError(f"Green solve residual {resid!r} too large")
    return DiscreteGreen(p, g, float(resid))


# -- projected Gauss-Seidel core -------------------------------------------------

def _greedy_coloring(adj):
    """Deterministic greedy coloring; vertices ordered by decreasing degree."""
    n = adj.shape[0]
    degrees = np.diff(adj.indptr)
    order = np.lexsort((np.arange(n), -degrees))
    color = -np.ones(n, dtype=int)
    for v in order:
        nb = adj.indices[adj.indptr[v]:adj.indptr[v + 1]]
        used = set(color[nb][color[nb] >= 0].tolist())
        c = 0
        while c in used:
            c += 1
        color[v] = c
    groups = [np.nonzero(color == c)[0] for c in range(color.max() + 1)]
    return groups


def _pgs_setup(L):
    d = L.diagonal()
    W = sparse.diags(d) - L          # positive off-diagonal couplings
    W = W.tocsr()
    adj = W.copy()
    adj.data[:] = 1.0
    groups = _greedy_coloring(adj.tocsr())
    Wg = [W[g] for g in groups]
    return d, groups, Wg


def projected_gauss_seidel(L, load, upper, u0, update_scale, lambda_scale,
                           slack_scale, tol, max_sweeps, relaxation=1.0,
                           check_every=50):
    """Colored projected Gauss-Seidel for min 1/2 u^T L u - load^T u, u <= upper.

    Converged when the largest per-sweep update falls below tol*update_scale
    and the scaled complementarity residual falls below tol.  Returns
    (u, sweeps, kkt_residual); raises ConvergenceError with the residual
    history when the sweep budget is exhausted.
    """
    d, groups, Wg = _pgs_setup(L)
    u = u0.copy()
    history = []
    omega = float(relaxation)
    for sweep in range(1, max_sweeps + 1):
        delta = 0.0
        for g, W in zip(groups, Wg):
            z = (load[g] + W @ u) / d[g]
            if omega != 1.0:
                z = u[g] + omega * (z - u[g])
            z = np.minimum(z, upper[g])
            step = np.abs(z - u[g]).max(initial=0.0)
            delta = max(delta, step)
            u[g] = z
        if delta < tol * update_scale or sweep % check_every == 0 or sweep == max_sweeps:
            lam = load - L @ u
            slack = upper - u
            kkt = float(np.abs(np.minimum(slack / slack_scale, lam / lambda_scale)).max())
            history.append((sweep, delta, kkt))
            if delta < tol * update_scale and kkt < tol:
                return u, sweep, kkt
    raise ConvergenceError(
        f"projected Gauss-Seidel did not converge in {max_sweeps} sweeps "
        f"(last update {history[-1][1]!r}, kkt {history[-1][2]!r})",
        history=history)


# -- the global obstacle problem --------------------------------------------------

@dataclass
class ObstacleSolution:
    """Converged discrete obstacle solution for one (p, a) pair."""

    source: int
    a: float
    tau: float
    u: np.ndarray
    contact: np.ndarray              # bool per vertex
    ball: np.ndarray                 # non-contact vertex indices
    kkt_residual: float
    sweeps: int
    tol: float
    eps_contact: float
    ball_area: float
    green: DiscreteGreen = field(repr=False, default=None)

    def boundary_band(self, mesh):
        """Ball vertices adjacent to the contact set plus the outer ring."""
        in_ball = np.zeros(len(self.u), dtype=bool)
        in_ball[self.ball] = True
        touch_out = np.asarray(mesh.adjacency @ (~in_ball).astype(float)) > 0
        inner = np.nonzero(in_ball & touch_out)[0]
        outer = mesh.vertex_ring(self.ball)
        return np.union1d(inner, outer)


def solve_obstacle(mesh, p, a, tol=1e-6, max_sweeps=200_000, green=None,
                   relaxation=1.0):
    """Solve the harmonic-ball obstacle problem at source vertex p, volume a.

    Returns the solution with contact flags and the extracted ball vertex
    set.  Contact is declared within eps = 10 tol a max(g) of the obstacle;
    the projection makes most contact values exact.
    """
    A = mesh.total_area
    if not 0.0 < a < A:
        raise ValueError(f"prescribed volume must lie in (0, {A}), got {a}")
    p = int(p)
    if green is None:
        green = mesh_green(mesh, p)
    elif green.source != p:
        raise ValueError("green vector source does not match p")
    g = green.values
    tau = 1.0 - a / A
    upper = a * g
    load = tau * mesh.mass
    gmax = float(g.max())
    scale = a * gmax
    u, sweeps, kkt = projected_gauss_seidel(
        mesh.laplacian, load, upper, upper.copy(),
        update_scale=scale, lambda_scale=mesh.mass, slack_scale=scale,
        tol=tol, max_sweeps=max_sweeps, relaxation=relaxation)
    eps = 10.0 * tol * scale
    contact = u >= upper - eps
    ball = np.nonzero(~contact)[0]
    if contact[p]:
        raise ConvergenceError("source vertex ended in the contact set")
    return ObstacleSolution(
        source=p, a=float(a), tau=float(tau), u=u, contact=contact, ball=ball,
        kkt_residual=kkt, sweeps=sweeps, tol=tol, eps_contact=eps,
        ball_area=float(mesh.mass[ball].sum()), green=green)


# -- property checks ----------------------------------------------------------------

def harmonic_extension(mesh, interior, boundary_values):
    """Discrete-harmonic function on ``interior`` with Dirichlet data on its
    one-ring; returns values on the whole mesh (zero elsewhere)."""
    interior = np.asarray(interior, dtype=int)
    ring = mesh.vertex_ring(interior)
    L = mesh.laplacian
    phi = np.zeros(mesh.n_vertices)
    phi[ring] = boundary_values
    rhs = -L[interior][:, ring] @ phi[ring]
    phi[interior] = spsolve(L[interior][:, interior].tocsc(), rhs)
    return phi, ring


def mvp_deviation(mesh, sol, phi):
    """|mass-weighted ball average of phi - phi(p)| for given vertex values."""
    w = mesh.mass[sol.ball]
    return float(abs(w @ (phi[sol.ball] - phi[sol.source])) / w.sum())


def check_mvp(mesh, sol, trials=20, seed=0):
    """Mean value property probe with random discrete-harmonic functions.

    Each trial solves L phi = 0 on the ball with random boundary values on
    the outer ring and compares the mass-weighted ball average with the
    value at the source.  Returns the largest deviation relative to the
    oscillation of the test function (expected O(h)).
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        ring = mesh.vertex_ring(sol.ball)
        phi, _ = harmonic_extension(mesh, sol.ball, rng.standard_normal(len(ring)))
        support = np.concatenate([sol.ball, ring])
        osc = float(phi[support].max() - phi[support].min())
        dev = mvp_deviation(mesh, sol, phi)
        worst = max(worst, dev / osc if osc > 0 else 0.0)
    return worst


def check_nested(mesh, p, a, b, sol_a=None, sol_b=None, tol=1e-6, green=None):
    """ball(a) contained in ball(b) for a <= b, up to a 1-ring band."""
    if not 0.0 < a <= b:
        raise ValueError("need 0 < a <= b")
    if green is None and (sol_a is None or sol_b is None):
        green = mesh_green(mesh, int(p))
    if sol_a is None:
        sol_a = solve_obstacle(mesh, p, a, tol=tol, green=green)
    if sol_b is None:
        sol_b = solve_obstacle(mesh, p, b, tol=tol, green=green)
    allowed = np.zeros(mesh.n_vertices, dtype=bool)
    allowed[sol_b.ball] = True
    allowed[mesh.vertex_ring(sol_b.ball)] = True
    return bool(np.all(allowed[sol_a.ball]))


def check_connected(mesh, sol):
    """The ball induces a connected subgraph containing the source."""
    return mesh.subset_connected(sol.ball, start=sol.source)


# -- local Dirichlet formulation -----------------------------------------------------

@dataclass
class LocalObstacleSolution:
    source: int
    r_param: float
    region: np.ndarray               # interior vertex indices of B(p, R)
    w: np.ndarray                    # values on the region (local indexing)
    green_dirichlet: np.ndarray      # Dirichlet Green vector on the region
    inside: np.ndarray               # global indices of the mean value set
    kkt_residual: float
    sweeps: int


def solve_local_obstacle(mesh, p, r_param, region_radius, tol=1e-6,
                         max_sweeps=200_000, distances=None, relaxation=1.0):
    """Local obstacle problem on the geodesic region B(p, R).

    Solves the Dirichlet problem L_R g_R = e_p, then the obstacle problem
    with load density 1/r_param^2 against the obstacle g_R; the non-contact
    set is the mean value set, equal (up to solver bands) to the harmonic
    ball of volume r_param^2.
    """
    p = int(p)
    if distances is None:
        distances = mesh.geodesic_distances(p)[0]
    interior = np.nonzero(distances < region_radius)[0]
    if p not in interior:
        raise ValueError("source vertex outside its own region")
    region_area = float(mesh.mass[interior].sum())
    if region_area >= 0.5 * mesh.total_area:
        raise ValueError("region radius too large: the geodesic ball is not "
                         "well inside the surface")
    if r_param ** 2 >= region_area:
        raise ValueError("load parameter too large for the region")
    L_II = mesh.laplacian[interior][:, interior].tocsc()
    e = np.zeros(len(interior))
    e[np.searchsorted(interior, p)] = 1.0
    g_R = spsolve(L_II, e)
    load = mesh.mass[interior] / r_param ** 2
    scale = float(g_R.max())
    w, sweeps, kkt = projected_gauss_seidel(
        L_II.tocsr(), load, g_R, np.zeros(len(interior)),
        update_scale=scale, lambda_scale=load, slack_scale=scale,
        tol=tol, max_sweeps=max_sweeps, relaxation=relaxation)
    eps = 10.0 * tol * scale
    inside_local = np.nonzero(w < g_R - eps)[0]
    return LocalObstacleSolution(
        source=p, r_param=float(r_param), region=interior, w=w,
        green_dirichlet=g_R, inside=interior[inside_local],
        kkt_residual=kkt, sweeps=sweeps)


def local_mean_value_set(mesh, p, r_param, region_radius, **kw):
    """Vertex set of the local mean value set D_p(r)."""
    return solve_local_obstacle(mesh, p, r_param, region_radius, **kw).inside


def inner_ball_fraction(mesh, p, a, sol=None, distances=None, tol=1e-6):
    """Largest c with {d(p, .) < c sqrt(a)} contained in the harmonic ball.

    Empirical probe of the inner-radius property; reported, not asserted
    against any fixed constant.
    """
    if sol is None:
        sol = solve_obstacle(mesh, p, a, tol=tol)
    if distances is None:
        distances = mesh.geodesic_distances(int(p))[0]
    outside = np.ones(mesh.n_vertices, dtype=bool)
    outside[sol.ball] = False
    return float(distances[outside].min() / np.sqrt(sol.a))


# -- vertex-restricted energy minimization ---------------------------------------------

@dataclass
class ExclusionReport:
    """Best-found discrete minimizer plus the pairwise exclusion checks."""

    vertices: np.ndarray
    energy: float
    exclusion_volume: float
    violations: list                 # (i, j): x_i strictly inside ball(x_j)
    pairs_checked: int
    restarts: int
    seed: int


def _config_energy(points, greens):
    e = 0.0
    for i, p in enumerate(points):
        gp = greens[p].values
        for q in points[i + 1:]:
            e += 2.0 * gp[q]
    return e


def mesh_minimize_energy(mesh, n_points, seed=0, restarts=8, tol=1e-6,
                         exclusion_volume=None, check_exclusion=True,
                         relaxation=1.0):
    """Minimize the discrete Green energy over n_points distinct vertices.

    Multi-start local search: a point moves to a neighboring vertex whenever
    that strictly decreases the energy, until no move helps.  The exclusion
    report then solves the obstacle problem at every selected vertex with
    volume A/(N-1) (clamped inside the admissible range, which the N = 2
    case exceeds) and flags configuration points lying strictly inside
    another point's harmonic ball beyond the 1-ring boundary band.
    """
    nv = mesh.n_vertices
    if not 2 <= n_points < nv:
        raise ValueError("need 2 <= n_points < number of vertices")
    greens = {}

    def green_of(v):
        if v not in greens:
            greens[v] = mesh_green(mesh, v)
        return greens[v]

    def local_search(points):
        points = list(points)
        for v in points:
            green_of(v)
        improved = True
        while improved:
            improved = False
            for i in range(len(points)):
                current = points[i]
                others = [q for k, q in enumerate(points) if k != i]
                base = sum(green_of(q).values[current] for q in others)
                best_v, best_gain = current, -1e-14
                for v in mesh.neighbors(current):
                    if v in points:
                        continue
                    cand = sum(green_of(q).values[v] for q in others)
                    gain = base - cand
                    if gain > best_gain + 1e-14:
                        best_v, best_gain = int(v), gain
                if best_v != current and best_gain > 1e-14:
                    points[i] = best_v
                    green_of(best_v)
                    improved = True
        return points

    seeds = np.random.SeedSequence(seed).spawn(max(restarts, 1))
    best_points, best_energy = None, np.inf
    for ss in seeds:
        rng = np.random.default_rng(ss)
        start = rng.choice(nv, size=n_points, replace=False).tolist()
        pts = local_search(start)
        e = _config_energy(pts, greens)
        if e < best_energy:
            best_points, best_energy = pts, e

    a_excl = exclusion_volume
    if a_excl is None:
        a_excl = min(mesh.total_area / (n_points - 1), 0.95 * mesh.total_area)
    violations = []
    pairs = 0
    if check_exclusion:
        for j, pj in enumerate(best_points):
            sol = solve_obstacle(mesh, pj, a_excl, tol=tol,
                                 green=green_of(pj), relaxation=relaxation)
            in_ball = np.zeros(nv, dtype=bool)
            in_ball[sol.ball] = True
            band = np.zeros(nv, dtype=bool)
            band[sol.boundary_band(mesh)] = True
            for i, pi in enumerate(best_points):
                if i == j:
                    continue
                pairs += 1
                if in_ball[pi] and not band[pi]:
                    violations.append((i, j))
    return ExclusionReport(
        vertices=np.asarray(best_points, dtype=int), energy=float(best_energy),
        exclusion_volume=float(a_excl), violations=violations,
        pairs_checked=pairs, restarts=max(restarts, 1), seed=seed)
