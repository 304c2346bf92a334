"""Scaling factors, walk dimensions, and critical exponents.

The p-scaling factor of a self-similar family is read off from p-capacities
of its graph approximations: cap_p(m) is the minimal graph energy
sum_edges |u(i)-u(j)|^p over potentials pinned to 0/1 on two boundary sets,
and rho_p is the limit of cap_p(m)/cap_p(m+1).  The walk dimension follows
as log(N rho_p)/log L for an iterated function system with N maps of
contraction ratio 1/L.

The critical exponents are estimated from level trends: the largest theta
at which some candidate keeps a level-stable double-sum energy (smoothness
exponent), and the largest theta at which penalized projections still
approximate ball indicators in L^p (density exponent).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla
from scipy.linalg import cho_factor, cho_solve

from . import _kernels
from .energy import FunctionOnSpace, besov_pp_many, fn
from .errors import ConvergenceError, InfeasibleError, ResolutionError
from .space import Space, regular_simplex

SLOPE_TOL = 0.1        # level-growth slope below this counts as "stable energy"
DENSITY_TOL = 0.05     # relative L^p error below this counts as "approximable"
KKT_FACTOR = 1e-8
WEIGHT_FLOOR_START = 1e-2
WEIGHT_FLOOR_END = 1e-12
PROJECTION_LIMIT = 3000

IFS_CONSTANTS = {
    "cube": lambda n: (3 ** n, 3.0),
    "gasket": lambda n: (n + 1, 2.0),
    "carpet": lambda n: (8, 3.0),
}


# -- graph approximations -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class GraphApprox:
    level: int
    vertices: np.ndarray         # (V, dim) coordinates
    edges: np.ndarray            # (E, 2) int64, each undirected edge once
    boundary_a: np.ndarray
    boundary_b: np.ndarray
    family: str
    n: int = 2
    cells: np.ndarray | None = None   # per-cell vertex ids, aligned with the
                                      # atom order of the matching Space

    def __post_init__(self):
        ba = np.asarray(self.boundary_a, dtype=np.int64)
        bb = np.asarray(self.boundary_b, dtype=np.int64)
        if ba.size == 0 or bb.size == 0:
            raise ValueError("boundary sets must be nonempty")
        if np.intersect1d(ba, bb).size:
            raise ValueError("boundary sets must be disjoint")
        object.__setattr__(self, "boundary_a", ba)
        object.__setattr__(self, "boundary_b", bb)
        e = np.asarray(self.edges, dtype=np.int64)
        if e.size and np.unique(np.sort(e, axis=1), axis=0).shape[0] != e.shape[0]:
            raise ValueError("duplicate edges")
        object.__setattr__(self, "edges", e)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def adjacency(self) -> sp.csr_matrix:
        i, j = self.edges[:, 0], self.edges[:, 1]
        ones = np.ones(len(i))
        a = sp.coo_matrix((ones, (i, j)), shape=(self.n_vertices, self.n_vertices))
        return (a + a.T).tocsr()


def _cube_graph(n: int, m: int) -> GraphApprox:
    side = 3 ** m
    axes = [np.arange(side)] * n
    grids = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([g.ravel() for g in grids], axis=1)
    verts = (coords.astype(np.float64) + 0.5) / side
    idx = np.arange(side ** n).reshape([side] * n)
    edges = []
    for ax in range(n):
        a = np.take(idx, np.arange(side - 1), axis=ax).ravel()
        b = np.take(idx, np.arange(1, side), axis=ax).ravel()
        edges.append(np.stack([a, b], axis=1))
    edges = np.concatenate(edges, axis=0) if edges else np.empty((0, 2), dtype=np.int64)
    face_a = np.nonzero(coords[:, 0] == 0)[0]
    face_b = np.nonzero(coords[:, 0] == side - 1)[0]
    return GraphApprox(level=m, vertices=verts, edges=edges,
                       boundary_a=face_a, boundary_b=face_b, family="cube", n=n)


def _gasket_graph(n: int, m: int) -> GraphApprox:
    """Vertex graph of the level-m gasket.

    Vertices carry exact barycentric integer coordinates (denominator 2^m),
    so shared cell corners merge exactly.  Cell order matches the atom order
    of make_sierpinski_gasket."""
    n_v = n + 1
    basis = np.eye(n_v, dtype=np.int64)
    cells = [basis.copy()]                         # level 0: the simplex itself
    for k in range(m):
        scale = 2 ** k                             # current denominator
        new = []
        for i in range(n_v):
            for cell in cells:
                new.append(cell + scale * basis[i])
        # block of map i applied to all previous cells, matching the atom
        # order of make_sierpinski_gasket
        cells = new
    denom = 2 ** m
    key_to_id: dict[tuple, int] = {}
    cell_ids = np.empty((len(cells), n_v), dtype=np.int64)
    for ci, cell in enumerate(cells):
        for vi in range(n_v):
            key = tuple(cell[vi])
            if key not in key_to_id:
                key_to_id[key] = len(key_to_id)
            cell_ids[ci, vi] = key_to_id[key]
    bary = np.array(list(key_to_id.keys()), dtype=np.float64) / denom
    verts = bary @ regular_simplex(n)
    edge_set = set()
    for ci in range(len(cells)):
        ids = cell_ids[ci]
        for i in range(n_v):
            for j in range(i + 1, n_v):
                a, b = int(ids[i]), int(ids[j])
                edge_set.add((a, b) if a < b else (b, a))
    edges = np.array(sorted(edge_set), dtype=np.int64)
    corner0 = key_to_id[tuple(denom if k == 0 else 0 for k in range(n_v))]
    corner1 = key_to_id[tuple(denom if k == 1 else 0 for k in range(n_v))]
    return GraphApprox(level=m, vertices=verts, edges=edges,
                       boundary_a=np.array([corner0]), boundary_b=np.array([corner1]),
                       family="gasket", n=n, cells=cell_ids)


def _carpet_graph(m: int) -> GraphApprox:
    """Cell-adjacency graph of the level-m carpet (cells sharing a side).

    Cell order matches the atom order of make_sierpinski_carpet."""
    offsets = np.array([(a, b) for a in range(3) for b in range(3) if (a, b) != (1, 1)],
                       dtype=np.int64)
    cells = np.zeros((1, 2), dtype=np.int64)
    for _ in range(m):
        cells = (3 * cells[:, None, :] + offsets[None, :, :]).reshape(-1, 2)
    side = 3 ** m
    verts = (cells.astype(np.float64) + 0.5) / side
    flat = cells[:, 0] * side + cells[:, 1]
    lookup = {int(f): i for i, f in enumerate(flat)}
    edges = []
    for di, dj in ((1, 0), (0, 1)):
        nb = (cells[:, 0] + di) * side + (cells[:, 1] + dj)
        ok = (cells[:, 0] + di < side) & (cells[:, 1] + dj < side)
        for i in np.nonzero(ok)[0]:
            j = lookup.get(int(nb[i]))
            if j is not None:
                edges.append((i, j))
    edges = np.array(sorted(edges), dtype=np.int64)
    left = np.nonzero(cells[:, 0] == 0)[0]
    right = np.nonzero(cells[:, 0] == side - 1)[0]
    return GraphApprox(level=m, vertices=verts, edges=edges,
                       boundary_a=left, boundary_b=right, family="carpet", n=2,
                       cells=np.arange(len(cells), dtype=np.int64)[:, None])


def build_graph_family(family: str, levels, n: int = 2) -> list[GraphApprox]:
    """Graph approximations of one family at the requested (ascending) levels."""
    levels = [int(v) for v in levels]
    if levels != sorted(levels):
        raise ValueError("levels must be ascending")
    if family == "cube":
        return [_cube_graph(n, m) for m in levels]
    if family == "gasket":
        return [_gasket_graph(n, m) for m in levels]
    if family == "carpet":
        return [_carpet_graph(m) for m in levels]
    raise ValueError(f"unknown graph family {family!r}")


# -- p-capacity ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CapacityResult:
    p: float
    level: int
    capacity: float
    minimizer: np.ndarray
    iterations: int
    grad_residual: float

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError("capacity must be positive")


def _graph_energy(u: np.ndarray, edges: np.ndarray, p: float) -> float:
    du = u[edges[:, 0]] - u[edges[:, 1]]
    return float((np.abs(du) ** p).sum())


def _kkt_residual(u: np.ndarray, graph: GraphApprox, p: float, interior: np.ndarray) -> float:
    """Sup norm of the energy gradient at interior vertices."""
    du = u[graph.edges[:, 0]] - u[graph.edges[:, 1]]
    flow = p * np.abs(du) ** (p - 1) * np.sign(du)
    grad = np.zeros(graph.n_vertices)
    np.add.at(grad, graph.edges[:, 0], flow)
    np.add.at(grad, graph.edges[:, 1], -flow)
    return float(np.abs(grad[interior]).max()) if interior.size else 0.0


def p_capacity(graph: GraphApprox, p: float, tol: float = 1e-10,
               max_iter: int = 600) -> CapacityResult:
    """Minimal p-energy among potentials with u=0 on A and u=1 on B.

    Iteratively reweighted quadratic solves with an annealed weight floor
    (halved from 1e-2 down to 1e-12) and a backtracking step on the true
    energy, which keeps the scheme a descent method for every p in (1, inf).
    Deterministic: fixed initialization, fixed annealing, direct sparse
    factorizations."""
    if not (1.0 < p < math.inf):
        raise ValueError("p must lie in (1, inf)")
    nv = graph.n_vertices
    fixed = np.zeros(nv, dtype=bool)
    fixed[graph.boundary_a] = True
    fixed[graph.boundary_b] = True
    interior = np.nonzero(~fixed)[0]
    bvals = np.zeros(nv)
    bvals[graph.boundary_b] = 1.0

    adj = graph.adjacency()
    d_a = csgraph.dijkstra(adj, indices=graph.boundary_a, min_only=True,
                           unweighted=True)
    d_b = csgraph.dijkstra(adj, indices=graph.boundary_b, min_only=True,
                           unweighted=True)
    if not np.all(np.isfinite(d_a[graph.boundary_b])):
        raise InfeasibleError("boundary sets are not connected through the graph")
    u = np.where(np.isfinite(d_a) & np.isfinite(d_b),
                 d_a / np.maximum(d_a + d_b, 1.0), 0.0)
    u[fixed] = bvals[fixed]

    edges = graph.edges
    ei, ej = edges[:, 0], edges[:, 1]

    def solve_weighted(w_e):
        out = bvals.copy()
        if interior.size == 0:
            return out
        lap = sp.coo_matrix(
            (np.concatenate([w_e, w_e, -w_e, -w_e]),
             (np.concatenate([ei, ej, ei, ej]),
              np.concatenate([ei, ej, ej, ei]))),
            shape=(nv, nv)).tocsr()
        lii = lap[interior][:, interior]
        rhs = -lap[interior][:, fixed] @ bvals[fixed]
        sol = np.array(spla.spsolve(lii.tocsc(), rhs)).ravel()
        out[interior] = sol
        return out

    energy = _graph_energy(u, edges, p)
    iters = 0
    if p == 2.0:
        u = solve_weighted(np.ones(len(edges)))
        energy = _graph_energy(u, edges, p)
        iters = 1
    else:
        # damping 1/(p-1) keeps the reweighted iteration locally contractive
        # for p > 2 (undamped, noise is amplified by a factor p-2)
        s0 = min(1.0, 1.0 / (p - 1.0))
        eps_w = WEIGHT_FLOOR_START
        while True:
            improved_any = True
            while improved_any:
                iters += 1
                if iters > max_iter:
                    best = CapacityResult(p=p, level=graph.level,
                                          capacity=max(energy, 1e-300), minimizer=u,
                                          iterations=iters, grad_residual=math.inf)
                    raise ConvergenceError("p-capacity solve exceeded max_iter", best=best)
                du = np.abs(u[ei] - u[ej])
                floor = max(eps_w, du.max() * 1e-14)
                w_e = np.maximum(du, floor) ** (p - 2.0)
                cand = solve_weighted(w_e)
                step = cand - u
                s = s0
                new_e = _graph_energy(u + s * step, edges, p)
                while new_e > energy and s > 1e-12:
                    s *= 0.5
                    new_e = _graph_energy(u + s * step, edges, p)
                if new_e <= energy:
                    u = u + s * step
                    improved_any = (energy - new_e) > tol * max(energy, 1e-300)
                    energy = new_e
                else:
                    improved_any = False
            if eps_w <= WEIGHT_FLOOR_END:
                break
            eps_w /= 2.0

    res = _kkt_residual(u, graph, p, interior)
    # polish at the weight floor until the certificate holds; accept
    # energy-neutral steps, they can still reduce the gradient residual
    while res > KKT_FACTOR * energy and iters < max_iter and p != 2.0:
        iters += 1
        du = np.abs(u[ei] - u[ej])
        floor = max(WEIGHT_FLOOR_END, du.max() * 1e-14)
        w_e = np.maximum(du, floor) ** (p - 2.0)
        cand = solve_weighted(w_e)
        step = cand - u
        s = min(1.0, 1.0 / (p - 1.0))
        new_e = _graph_energy(u + s * step, edges, p)
        while new_e > energy * (1 + 1e-12) and s > 1e-12:
            s *= 0.5
            new_e = _graph_energy(u + s * step, edges, p)
        if new_e > energy * (1 + 1e-12):
            break
        u = u + s * step
        energy = min(energy, new_e)
        new_res = _kkt_residual(u, graph, p, interior)
        stalled = new_res >= res * 0.999
        res = new_res
        if stalled:
            break
    if res > KKT_FACTOR * max(energy, 1e-300) and p != 2.0:
        best = CapacityResult(p=p, level=graph.level, capacity=energy, minimizer=u,
                              iterations=iters, grad_residual=res)
        raise ConvergenceError(
            f"KKT residual {res:.3e} above certificate {KKT_FACTOR:.0e}*capacity", best=best)
    u.setflags(write=False)
    return CapacityResult(p=p, level=graph.level, capacity=energy, minimizer=u,
                          iterations=iters, grad_residual=res)


# -- scaling factor and walk dimension ---------------------------------------

@dataclass(frozen=True)
class RhoEstimate:
    p: float
    ratios: tuple[float, ...]
    rho_p: float
    walk_dimension: float
    family: str
    n: int
    warning: str | None = None

    def __post_init__(self):
        if self.rho_p <= 0:
            raise ValueError("rho must be positive")


def rho_p_estimate(results: list[CapacityResult], family: str, n: int = 2) -> RhoEstimate:
    """Capacity ratios across consecutive levels, extrapolated to rho_p.

    Monotone ratio sequences get one Aitken (Richardson-style) step on the
    last three entries; noisy sequences are reported raw with a warning."""
    if len(results) < 3:
        raise ValueError("need capacities at >= 3 consecutive levels")
    levels = [r.level for r in results]
    if any(b - a != 1 for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be consecutive")
    p = results[0].p
    caps = np.array([r.capacity for r in results])
    ratios = caps[:-1] / caps[1:]
    warning = None
    rho = float(ratios[-1])
    diffs = np.diff(ratios)
    monotone = np.all(diffs >= 0) or np.all(diffs <= 0)
    if monotone and len(ratios) >= 3:
        r1, r2, r3 = ratios[-3:]
        denom = r3 - 2 * r2 + r1
        if abs(denom) > 1e-14 * max(abs(r3), 1.0):
            aitken = r3 - (r3 - r2) ** 2 / denom
            if aitken > 0:
                rho = float(aitken)
    elif not monotone:
        spread = float(ratios.max() - ratios.min()) / max(abs(float(ratios.mean())), 1e-300)
        if spread > 0.2:
            warning = f"non-monotone ratio sequence with spread {spread:.1%}"
    if family not in IFS_CONSTANTS:
        raise ValueError(f"unknown family {family!r}")
    n_maps, ell = IFS_CONSTANTS[family](n)
    walk = math.log(n_maps * rho) / math.log(ell)
    return RhoEstimate(p=p, ratios=tuple(float(r) for r in ratios), rho_p=rho,
                       walk_dimension=walk, family=family, n=n, warning=warning)


# -- smoothness critical exponent ---------------------------------------------

def level_slope(scales: np.ndarray, energies: np.ndarray) -> float:
    """Slope of log energy against log(1/mesh scale) across levels."""
    keep = energies > 0
    if keep.sum() < 2:
        return 0.0
    x = np.log(1.0 / scales[keep])
    y = np.log(energies[keep])
    return float(np.polyfit(x, y, 1)[0])


SATURATION_RATIO = 0.95
PLATEAU_FRACTION = 0.02


def energy_trend_stable(energies: np.ndarray, slope: float) -> bool:
    """Whether a level sequence of energies is converging rather than diverging.

    A finite-energy function shows a saturating sequence E_m -> E_inf with
    geometrically shrinking increments, while a divergent one grows
    geometrically.  Stability = plateau, or shrinking increments
    (difference ratio <= SATURATION_RATIO), or an already flat log-log slope.
    """
    if slope <= SLOPE_TOL:
        return True
    es = energies[np.isfinite(energies)]
    if es.size < 3:
        return False
    diffs = np.diff(es)
    last = es[-1]
    if last <= 0:
        return True
    if np.all(np.abs(diffs) <= PLATEAU_FRACTION * last):
        return True
    if np.all(diffs > 0):
        ratios = diffs[1:] / diffs[:-1]
        return bool(ratios[-1] <= SATURATION_RATIO)
    # non-monotone: stable only when the wiggle is small
    return bool(abs(diffs[-1]) <= 0.05 * last)


@dataclass(frozen=True)
class ThetaEstimate:
    theta: float | None
    evidence: list[dict]
    slope_tol: float
    p: float


def theta_p_estimate(space_family: list[Space], p: float, candidates,
                     theta_grid) -> ThetaEstimate:
    """Largest theta at which some candidate has level-stable double-sum energy.

    candidates is a list of (name, builder) with builder(space, p) returning a
    FunctionOnSpace or None.  The evidence table records every
    (theta, candidate) slope."""
    if len(space_family) < 3:
        raise ResolutionError("need at least 3 refinement levels")
    theta_grid = np.sort(np.asarray(theta_grid, dtype=np.float64))
    scales = np.array([sp_.mesh_scale for sp_ in space_family], dtype=np.float64)
    if np.any(~np.isfinite(scales)) or np.any(scales <= 0):
        raise ValueError("spaces need positive mesh scales")

    names = [name for name, _ in candidates]
    energies = np.full((len(space_family), len(candidates), len(theta_grid)), np.nan)
    present = np.zeros(len(candidates), dtype=bool)
    for li, sp_ in enumerate(space_family):
        rows = []
        row_ids = []
        for ci, (_, builder) in enumerate(candidates):
            u = builder(sp_, p)
            if u is None:
                continue
            present[ci] = True
            rows.append(u.values)
            row_ids.append(ci)
        if not rows:
            continue
        vals = besov_pp_many(sp_, np.stack(rows), p, theta_grid)
        for k, ci in enumerate(row_ids):
            energies[li, ci, :] = vals[k]

    evidence = []
    any_stable = np.zeros(len(theta_grid), dtype=bool)
    for ki, th in enumerate(theta_grid):
        for ci, name in enumerate(names):
            if not present[ci]:
                continue
            es = energies[:, ci, ki]
            ok = np.isfinite(es)
            if ok.sum() < 2:
                continue
            slope = level_slope(scales[ok], es[ok])
            stable = energy_trend_stable(es[ok], slope)
            any_stable[ki] |= stable
            evidence.append({"theta": float(th), "candidate": name,
                             "energies": [None if not np.isfinite(v) else float(v) for v in es],
                             "slope": slope, "stable": bool(stable)})
    accepted = [float(theta_grid[k]) for k in range(len(theta_grid)) if any_stable[k]]
    theta = max(accepted) if accepted else None
    return ThetaEstimate(theta=theta, evidence=evidence, slope_tol=SLOPE_TOL, p=p)


# -- penalized projection and density exponent --------------------------------

@dataclass(frozen=True, eq=False)
class ProjectionResult:
    g: FunctionOnSpace
    objective: float
    fidelity: float              # sum w |g - f|^p
    penalty_energy: float        # double-sum energy of g
    iterations: int


def _symmetric_kernel(space: Space, p: float, theta: float) -> np.ndarray:
    use_dist = space.metric_kind == "explicit_matrix"
    dist = space.dist if use_dist else np.zeros((1, 1))
    k = _kernels.kernel_matrix(space.points, space.weights, dist, use_dist,
                               float(p), float(theta))
    return k + k.T


def besov_projection(f: FunctionOnSpace, p: float, theta: float, penalty: float,
                     tol: float = 1e-6, max_iter: int = 200,
                     kernel: np.ndarray | None = None,
                     floor_start: float = 1e-3, floor_end: float = 1e-5,
                     start: np.ndarray | None = None) -> ProjectionResult:
    """Minimize sum_x w_x |g-f|^p + penalty * E_pp(g) by the same reweighted
    quadratic scheme as p_capacity (dense solves; small spaces only).

    The weight-floor anneal runs a shorter schedule than the capacity solver:
    the projection feeds a 5% classification threshold, so solver noise far
    below that is wasted work."""
    if penalty <= 0:
        raise ValueError("penalty must be positive")
    sp_ = f.space
    n = sp_.n_points
    if n > PROJECTION_LIMIT:
        raise ResolutionError(f"projection is dense and capped at {PROJECTION_LIMIT} atoms")
    b = _symmetric_kernel(sp_, p, theta) if kernel is None else kernel
    w = sp_.weights
    fv = f.values

    def objective(g):
        obj_, fid_, pen_ = _kernels.proj_objective(b, g, fv, w, float(p), float(penalty))
        return float(obj_), float(fid_), float(pen_)

    g = fv.copy() if start is None else np.asarray(start, dtype=np.float64).copy()
    obj, fid, pen = objective(g)
    iters = 0
    if p == 2.0:
        lap = np.diag(b.sum(axis=1)) - b
        mat = np.diag(w) + penalty * lap
        g = cho_solve(cho_factor(mat, lower=True), w * fv)
        obj, fid, pen = objective(g)
        iters = 1
    else:
        s0 = min(1.0, 1.0 / (p - 1.0))  # damping, see p_capacity
        eps_w = floor_start
        while True:
            improving = True
            while improving:
                iters += 1
                if iters > max_iter:
                    raise ConvergenceError(
                        "projection exceeded max_iter",
                        best=ProjectionResult(g=fn(sp_, g), objective=obj, fidelity=fid,
                                              penalty_energy=pen, iterations=iters))
                scale = max(np.abs(g).max() * 2.0, np.abs(g - fv).max(), 1.0)
                floor = max(eps_w, scale * 1e-14)
                mat, rhs = _kernels.proj_system(b, g, fv, w, float(p), float(penalty),
                                                float(floor))
                cand = cho_solve(cho_factor(mat, lower=True, overwrite_a=True,
                                            check_finite=False),
                                 rhs, check_finite=False)
                step = cand - g
                s = s0
                new_obj, nf, npen = objective(g + s * step)
                while new_obj > obj and s > 1e-12:
                    s *= 0.5
                    new_obj, nf, npen = objective(g + s * step)
                if new_obj <= obj:
                    g = g + s * step
                    improving = (obj - new_obj) > tol * max(obj, 1e-300)
                    obj, fid, pen = new_obj, nf, npen
                else:
                    improving = False
            if eps_w <= floor_end:
                break
            eps_w /= 2.0
    return ProjectionResult(g=fn(sp_, g), objective=obj, fidelity=fid,
                            penalty_energy=pen, iterations=iters)


@dataclass(frozen=True)
class ThetaStarEstimate:
    theta_star: float | None
    evidence: list[dict]
    density_tol: float
    p: float
    eps_grid: tuple[float, ...]


def theta_p_star_estimate(space_family: list[Space], p: float, targets,
                          theta_grid, eps_grid=(5e-4, 2e-3, 8e-3)) -> ThetaStarEstimate:
    """Largest theta at which every target ball indicator can be approximated
    within DENSITY_TOL relative L^p error by a penalized projection.

    targets is a list of (name, builder) with builder(space, p) returning a
    FunctionOnSpace or None.  D(theta) is evaluated at the finest level; the
    level trend is recorded in the evidence."""
    if not space_family:
        raise ValueError("empty family")
    theta_grid = np.sort(np.asarray(theta_grid, dtype=np.float64))
    eps_grid = tuple(float(e) for e in eps_grid)
    evidence = []
    d_finest = np.full(len(theta_grid), np.nan)
    eps_desc = tuple(sorted(eps_grid, reverse=True))
    for ki, th in enumerate(theta_grid):
        for li, sp_ in enumerate(space_family):
            kern = _symmetric_kernel(sp_, p, float(th))
            worst = 0.0
            rows = []
            for name, builder in targets:
                u = builder(sp_, p)
                if u is None:
                    continue
                norm = u.lp_norm(p)
                if norm == 0:
                    continue
                errs = {}
                warm = None
                for eps in eps_desc:  # descending: warm-start the next solve
                    proj = besov_projection(u, p, float(th), eps, kernel=kern,
                                            start=warm)
                    warm = proj.g.values
                    errs[eps] = fn(sp_, proj.g.values - u.values).lp_norm(p) / norm
                ordered = [errs[e] for e in eps_grid]
                best = min(ordered)
                worst = max(worst, best)
                rows.append({"target": name, "errors": ordered, "best": best})
            evidence.append({"theta": float(th), "level_index": li,
                             "finest": li == len(space_family) - 1,
                             "d_value": worst, "targets": rows})
            if li == len(space_family) - 1:
                d_finest[ki] = worst
    accepted = [float(theta_grid[k]) for k in range(len(theta_grid))
                if np.isfinite(d_finest[k]) and d_finest[k] <= DENSITY_TOL]
    theta = max(accepted) if accepted else None
    return ThetaStarEstimate(theta_star=theta, evidence=evidence,
                             density_tol=DENSITY_TOL, p=p, eps_grid=eps_grid)


# -- serialization ------------------------------------------------------------

def save_graph(graph: GraphApprox, path) -> None:
    path = str(path)
    with open(path, "w") as fh:
        for i, j in graph.edges:
            fh.write(f"{i} {j}\n")
    meta = {
        "level": graph.level,
        "family": graph.family,
        "n": graph.n,
        "boundary_a": [int(v) for v in graph.boundary_a],
        "boundary_b": [int(v) for v in graph.boundary_b],
        "vertices": [[float(c) for c in row] for row in graph.vertices],
    }
    with open(path + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)


def load_graph(path) -> GraphApprox:
    path = str(path)
    edges = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                i, j = line.split()
                edges.append((int(i), int(j)))
    with open(path + ".meta.json") as fh:
        meta = json.load(fh)
    return GraphApprox(level=meta["level"], vertices=np.array(meta["vertices"]),
                       edges=np.array(edges, dtype=np.int64),
                       boundary_a=np.array(meta["boundary_a"], dtype=np.int64),
                       boundary_b=np.array(meta["boundary_b"], dtype=np.int64),
                       family=meta["family"], n=meta["n"])
