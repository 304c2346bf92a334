"""Discretized doubling metric measure spaces.

A space is a finite weighted point cloud: atoms sit at cell barycenters of a
self-similar construction (cube grid, gasket, carpet) and carry the cell mass,
so total mass and Ahlfors-type ball growth survive discretization exactly.
Two spaces can be glued at a designated point, with one copy reflected through
the gluing point so the copies meet only there.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree
from scipy.spatial.distance import pdist

from .errors import BudgetExceededError, GeometryError

DEFAULT_BUDGET = 4_000_000
COINCIDENCE_TOL = 1e-12
TRIANGLE_TOL = 1e-9


def atom_budget() -> int:
    """Point-count cap for constructors; override with BESOVLAB_BUDGET."""
    raw = os.environ.get("BESOVLAB_BUDGET", "")
    if raw.strip():
        return int(raw)
    return DEFAULT_BUDGET


def _check_budget(requested: int) -> None:
    budget = atom_budget()
    if requested > budget:
        raise BudgetExceededError(requested, budget)


@dataclass(frozen=True)
class GlueInfo:
    """Metadata of a single-point gluing: atom indices of the glue pair,
    the gluing point (origin of the glued coordinates), and, when the two
    components lie on opposite sides of a hyperplane through the gluing
    point, a unit normal of that hyperplane (positive side = E2)."""

    index_a: int
    index_b: int
    origin: np.ndarray
    normal: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class Space:
    """Finite metric measure space (points, weights, metric)."""

    points: np.ndarray                  # (N, D) float64
    weights: np.ndarray                 # (N,) float64, strictly positive
    metric_kind: str = "euclidean"      # "euclidean" | "explicit_matrix"
    dist: np.ndarray | None = None      # (N, N) when explicit
    diameter: float = 0.0
    labels: np.ndarray | None = None    # per-atom component tags
    glue: GlueInfo | None = None
    mesh_scale: float | None = None     # linear cell scale of the refinement
    family: str | None = None
    level: int | None = None

    def __post_init__(self):
        pts = np.ascontiguousarray(np.atleast_2d(np.asarray(self.points, dtype=np.float64)))
        w = np.ascontiguousarray(np.asarray(self.weights, dtype=np.float64).ravel())
        if pts.shape[0] != w.shape[0]:
            raise ValueError("points and weights length mismatch")
        if pts.shape[0] == 0:
            raise ValueError("space needs at least one atom")
        if not np.all(np.isfinite(pts)):
            raise ValueError("non-finite coordinates")
        if not np.all(w > 0):
            raise ValueError("weights must be strictly positive")
        if self.metric_kind not in ("euclidean", "explicit_matrix"):
            raise ValueError(f"unknown metric_kind {self.metric_kind!r}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        if self.metric_kind == "explicit_matrix":
            if self.dist is None:
                raise ValueError("explicit_matrix space needs a distance matrix")
            d = np.ascontiguousarray(np.asarray(self.dist, dtype=np.float64))
            _validate_metric_matrix(d)
            object.__setattr__(self, "dist", d)
            object.__setattr__(self, "diameter", float(d.max()))
        else:
            diam = float(self.diameter) if self.diameter else exact_diameter(pts)
            object.__setattr__(self, "diameter", diam)
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if lab.shape[0] != pts.shape[0]:
                raise ValueError("labels length mismatch")
            object.__setattr__(self, "labels", lab)
        for arr in (self.points, self.weights, self.dist):
            if arr is not None:
                arr.setflags(write=False)

    # -- basic queries ------------------------------------------------------

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def distance_row(self, i: int) -> np.ndarray:
        """Distances from atom i to every atom (own entry 0)."""
        if self.metric_kind == "explicit_matrix":
            return self.dist[i]
        diff = self.points - self.points[i]
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))

    def component_masks(self) -> dict[str, np.ndarray]:
        if self.labels is None:
            return {}
        return {str(v): self.labels == v for v in np.unique(self.labels)}

    def min_separation(self) -> float:
        """Smallest positive interatom distance."""
        if self.n_points < 2:
            return 0.0
        if self.metric_kind == "explicit_matrix":
            off = self.dist[~np.eye(self.n_points, dtype=bool)]
            pos = off[off > 0]
            return float(pos.min()) if pos.size else 0.0
        tree = cKDTree(self.points)
        k = min(self.n_points, 4)
        d, _ = tree.query(self.points, k=k)
        pos = d[:, 1:][d[:, 1:] > 0]
        if pos.size:
            return float(pos.min())
        # pathological: heavy coincidence, fall back to brute force
        dm = pdist(self.points)
        pos = dm[dm > 0]
        return float(pos.min()) if pos.size else 0.0


def _validate_metric_matrix(d: np.ndarray, rng_seed: int = 0) -> None:
    n = d.shape[0]
    if d.shape != (n, n):
        raise ValueError("distance matrix must be square")
    if not np.allclose(d, d.T, atol=1e-12):
        raise ValueError("distance matrix not symmetric")
    if np.any(np.diag(d) != 0):
        raise ValueError("distance matrix diagonal must be zero")
    off = d + np.eye(n) * (d.max() + 1.0)
    if np.any(off <= 0):
        raise ValueError("distance matrix has zero off the diagonal")
    # triangle inequality on sampled triples
    rng = np.random.default_rng(rng_seed)
    m = min(n, 30)
    idx = rng.choice(n, size=m, replace=False)
    sub = d[np.ix_(idx, idx)]
    via = sub[:, :, None] + sub[None, :, :]      # d(i,k) + d(k,j)
    slack = sub[:, None, :] - via.min(axis=1)    # worst violation per (i,j)
    if slack.max() > TRIANGLE_TOL:
        raise ValueError("triangle inequality violated beyond tolerance")


def exact_diameter(points: np.ndarray) -> float:
    """Largest pairwise Euclidean distance, exact.

    Uses the convex hull to prune; falls back to a direct scan for small or
    degenerate inputs."""
    n = points.shape[0]
    if n == 1:
        return 0.0
    if points.shape[1] == 1:
        return float(points.max() - points.min())
    cand = points
    if n > 2000:
        try:
            hull = ConvexHull(points)
            cand = points[hull.vertices]
        except QhullError:
            pass
    if cand.shape[0] > 4000:
        # hull did not prune enough; chunked max
        best = 0.0
        for i in range(0, cand.shape[0], 512):
            block = cand[i:i + 512]
            diff = block[:, None, :] - cand[None, :, :]
            best = max(best, float(np.sqrt((diff ** 2).sum(-1)).max()))
        return best
    return float(pdist(cand).max())


# -- constructors -----------------------------------------------------------

def make_cube_grid(n: int, m: int, base: int = 3) -> Space:
    """Unit cube [0,1]^n discretized into a base^m-per-side grid of cells.

    Atoms are cell centers, each carrying mass base^(-n*m); total mass 1."""
    if n < 1:
        raise ValueError("dimension must be >= 1")
    if m < 0:
        raise ValueError("refinement level must be >= 0")
    if base < 3 or base % 2 == 0:
        raise ValueError("subdivision base must be odd and >= 3")
    side = base ** m
    count = side ** n
    _check_budget(count)
    axis = (np.arange(side, dtype=np.float64) + 0.5) / side
    grids = np.meshgrid(*([axis] * n), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    w = np.full(count, float(side) ** (-n))
    return Space(points=pts, weights=w, family="cube", level=m, mesh_scale=1.0 / side)


def regular_simplex(n: int) -> np.ndarray:
    """Vertices of the unit-side regular n-simplex in R^n, v0 at the origin."""
    v = np.zeros((n + 1, n))
    shared = np.zeros(n)
    s = 0.0  # running sum of squared shared coordinates
    for i in range(1, n + 1):
        b = math.sqrt(1.0 - s)
        v[i, : i - 1] = shared[: i - 1]
        v[i, i - 1] = b
        a = (0.5 - s) / b
        shared[i - 1] = a
        s += a * a
    return v


def make_sierpinski_gasket(n: int, m: int) -> Space:
    """Level-m cell barycenters of the standard n-dimensional gasket.

    The IFS has n+1 maps of ratio 1/2 toward the regular simplex vertices;
    each atom carries mass (n+1)^(-m)."""
    if n < 2:
        raise ValueError("ambient dimension must be >= 2")
    if m < 0:
        raise ValueError("level must be >= 0")
    count = (n + 1) ** m
    _check_budget(count)
    verts = regular_simplex(n)
    pts = verts.mean(axis=0)[None, :]
    for _ in range(m):
        pts = np.concatenate([(pts + v) / 2.0 for v in verts], axis=0)
    w = np.full(count, float(n + 1) ** (-m))
    return Space(points=pts, weights=w, family="gasket", level=m, mesh_scale=2.0 ** (-m))


def make_sierpinski_carpet(m: int) -> Space:
    """Level-m cell barycenters of the planar standard carpet (8 maps, ratio 1/3)."""
    if m < 0:
        raise ValueError("level must be >= 0")
    count = 8 ** m
    _check_budget(count)
    offsets = np.array([(a, b) for a in range(3) for b in range(3) if (a, b) != (1, 1)],
                       dtype=np.int64)
    cells = np.zeros((1, 2), dtype=np.int64)
    for _ in range(m):
        cells = (3 * cells[:, None, :] + offsets[None, :, :]).reshape(-1, 2)
    pts = (cells.astype(np.float64) + 0.5) / float(3 ** m)
    w = np.full(count, 8.0 ** (-m))
    return Space(points=pts, weights=w, family="carpet", level=m, mesh_scale=3.0 ** (-m))


# -- gluing -----------------------------------------------------------------

def glue_at_point(a: Space, oa: int, b: Space, ob: int, renormalize: bool = False,
                  vertex_a=None, vertex_b=None) -> Space:
    """Glue isometric copies of a and b at a single point.

    Copy a is reflected through the gluing point and both copies are
    translated so the gluing point sits at the origin.  By default the
    gluing point is the designated atom itself (so the two designated atoms
    coincide at the origin and form the exempt glue pair).  Constructors of
    the example families pass the cell-corner vertex instead, which
    reproduces the continuum gluing with no atom at the origin.

    Labels mark the copies E1 (from a) and E2 (from b).  Any coincidence
    between the copies other than the designated pair is a geometry error.
    """
    if a.metric_kind != "euclidean" or b.metric_kind != "euclidean":
        raise ValueError("gluing requires euclidean spaces")
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    if not (0 <= oa < a.n_points) or not (0 <= ob < b.n_points):
        raise ValueError("glue index out of range")
    va = np.asarray(vertex_a, dtype=np.float64) if vertex_a is not None else a.points[oa]
    vb = np.asarray(vertex_b, dtype=np.float64) if vertex_b is not None else b.points[ob]
    pa = va[None, :] - a.points          # reflect through va, va -> origin
    pb = b.points - vb[None, :]

    tree = cKDTree(pb)
    clashes = tree.query_ball_point(pa, r=COINCIDENCE_TOL)
    for i, js in enumerate(clashes):
        for j in js:
            if not (i == oa and j == ob):
                raise GeometryError(
                    f"copies overlap beyond the glue point: atoms {i} (E1) and {j} (E2) coincide")

    pts = np.concatenate([pa, pb], axis=0)
    w = np.concatenate([a.weights, b.weights])
    if renormalize:
        w = w / w.sum()
    labels = np.array(["E1"] * a.n_points + ["E2"] * b.n_points)
    normal = _separating_normal(pa, pb, w[a.n_points:])
    glue = GlueInfo(index_a=oa, index_b=a.n_points + ob,
                    origin=np.zeros(a.dim), normal=normal)
    scale = None
    if a.mesh_scale and b.mesh_scale:
        scale = min(a.mesh_scale, b.mesh_scale)
    fam = None
    if a.family and a.family == b.family:
        fam = f"glued_{a.family}"
    lvl = a.level if a.level == b.level else None
    return Space(points=pts, weights=w, labels=labels, glue=glue,
                 mesh_scale=scale, family=fam, level=lvl)


def _separating_normal(pa: np.ndarray, pb: np.ndarray, wb: np.ndarray) -> np.ndarray | None:
    """Unit normal of a hyperplane through the origin with E1 on the
    non-positive and E2 on the non-negative side, if one exists along the
    E2 barycenter direction."""
    center = (pb * wb[:, None]).sum(axis=0)
    norm = np.linalg.norm(center)
    if norm == 0:
        return None
    nhat = center / norm
    scale = max(np.abs(pa).max(), np.abs(pb).max(), 1.0)
    tol = 1e-9 * scale
    if (pa @ nhat).max() <= tol and (pb @ nhat).min() >= -tol:
        return nhat
    return None


def make_bowtie_cubes(n: int, m: int, base: int = 3) -> Space:
    """Two unit n-cubes glued at a corner: [0,1]^n union [-1,0]^n."""
    cube = make_cube_grid(n, m, base=base)
    corner = np.zeros(n)
    return glue_at_point(cube, 0, cube, 0, vertex_a=corner, vertex_b=corner)


def make_glued_gaskets(n: int, m: int) -> Space:
    """Two n-gaskets glued at the corner vertex at the origin."""
    g = make_sierpinski_gasket(n, m)
    corner = np.zeros(n)
    return glue_at_point(g, 0, g, 0, vertex_a=corner, vertex_b=corner)


def make_glued_carpets(m: int) -> Space:
    """Two planar carpets glued at the (0,0) corner vertex."""
    c = make_sierpinski_carpet(m)
    corner = np.zeros(2)
    return glue_at_point(c, 0, c, 0, vertex_a=corner, vertex_b=corner)


_FAMILY_BUILDERS = {
    "cube": lambda lvl, n, base: make_cube_grid(n, lvl, base),
    "gasket": lambda lvl, n, base: make_sierpinski_gasket(n, lvl),
    "carpet": lambda lvl, n, base: make_sierpinski_carpet(lvl),
    "gluedcubes": lambda lvl, n, base: make_bowtie_cubes(n, lvl, base),
    "gluedgaskets": lambda lvl, n, base: make_glued_gaskets(n, lvl),
    "gluedcarpets": lambda lvl, n, base: make_glued_carpets(lvl),
}


def build_family(kind: str, levels, n: int = 2, base: int = 3) -> list[Space]:
    """Build the level family of one of the example space kinds."""
    if kind not in _FAMILY_BUILDERS:
        raise ValueError(f"unknown family {kind!r}; choose from {sorted(_FAMILY_BUILDERS)}")
    builder = _FAMILY_BUILDERS[kind]
    return [builder(int(lvl), n, base) for lvl in levels]


# -- ball queries -----------------------------------------------------------

class BallIndex:
    """Range-query structure over a space's open balls B(x,r) = {y : d(x,y) < r}.

    Uses uniform grid bucketing for large euclidean spaces and a direct scan
    below the brute-force threshold; both paths evaluate the identical
    predicate d(x,y) < r, so results match a naive scan exactly."""

    BRUTE_THRESHOLD = 2000

    def __init__(self, space: Space):
        self.space = space
        self._grid = None
        if space.metric_kind == "euclidean" and space.n_points >= self.BRUTE_THRESHOLD:
            self._grid = _BucketGrid(space.points)

    def ball(self, x: int, r: float) -> np.ndarray:
        """Ascending indices of atoms with d(x, y) < r."""
        if r <= 0:
            raise ValueError("radius must be positive")
        if self._grid is None:
            d = self.space.distance_row(x)
            return np.nonzero(d < r)[0]
        return self._grid.ball(self.space.points[x], r)

    def ball_mass(self, x: int, r: float) -> float:
        idx = self.ball(x, r)
        return float(self.space.weights[idx].sum())


class _BucketGrid:
    """Uniform bucket grid (CSR layout) over a euclidean point cloud."""

    def __init__(self, points: np.ndarray, res_cap: int = 512):
        n, d = points.shape
        lo = points.min(axis=0)
        hi = points.max(axis=0)
        extent = np.maximum(hi - lo, 1e-300)
        res = max(1, int(min(res_cap, math.ceil((2.0 * n) ** (1.0 / d)))))
        self.cell = float(extent.max() / res)
        self.lo = lo - 0.5 * self.cell
        self.dims = np.floor((hi - self.lo) / self.cell).astype(np.int64) + 1
        strides = np.ones(d, dtype=np.int64)
        for j in range(d - 2, -1, -1):
            strides[j] = strides[j + 1] * self.dims[j + 1]
        self.strides = strides
        ids = np.floor((points - self.lo) / self.cell).astype(np.int64)
        ids = np.clip(ids, 0, self.dims - 1)
        flat = ids @ strides
        self.order = np.argsort(flat, kind="stable").astype(np.int64)
        nb = int(self.dims.prod())
        counts = np.bincount(flat, minlength=nb)
        self.start = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.points = points

    def ball(self, center: np.ndarray, r: float) -> np.ndarray:
        lo_id = np.floor((center - r - self.lo) / self.cell).astype(np.int64)
        hi_id = np.floor((center + r - self.lo) / self.cell).astype(np.int64)
        lo_id = np.clip(lo_id, 0, self.dims - 1)
        hi_id = np.clip(hi_id, 0, self.dims - 1)
        chunks = []
        for combo in itertools.product(*[range(int(a), int(b) + 1)
                                         for a, b in zip(lo_id, hi_id)]):
            fid = int(np.dot(np.asarray(combo, dtype=np.int64), self.strides))
            s, e = self.start[fid], self.start[fid + 1]
            if e > s:
                chunks.append(self.order[s:e])
        if not chunks:
            return np.empty(0, dtype=np.int64)
        cand = np.concatenate(chunks)
        diff = self.points[cand] - center
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        hit = cand[dist < r]
        hit.sort()
        return hit


def ball_volume(space: Space, x: int, r: float, index: BallIndex | None = None) -> float:
    """Mass of the open ball B(x, r); strictly positive since x is inside."""
    if r <= 0:
        raise ValueError("radius must be positive")
    if not (0 <= x < space.n_points):
        raise ValueError("atom index out of range")
    if index is None:
        index = BallIndex(space)
    return index.ball_mass(x, r)


# -- doubling diagnostics ---------------------------------------------------

@dataclass(frozen=True)
class DoublingReport:
    doubling_constant: float
    dimension_fit: float
    fit_residual: float
    radius_range: tuple[float, float]
    sample_count: int
    seed: int

    def __post_init__(self):
        if self.doubling_constant < 1.0:
            raise ValueError("doubling constant must be >= 1")


def doubling_report(space: Space, sample_count: int = 40, radius_decades: float = 2.0,
                    seed: int = 0, radius_range=None) -> DoublingReport:
    """Estimate the doubling constant and the Ahlfors dimension.

    C_D is the max of ball-mass ratios mu(B(x,2r))/mu(B(x,r)) over sampled
    (x, r); the dimension comes from a least-squares slope of log mass
    against log radius with per-center intercepts removed (within-center
    regression), which keeps boundary centers from biasing the slope."""
    if space.n_points < 2:
        raise ValueError("need at least two atoms")
    rng = np.random.default_rng(seed)
    k = min(sample_count, space.n_points)
    xs = np.sort(rng.choice(space.n_points, size=k, replace=False))
    if radius_range is None:
        r_hi = space.diameter / 2.0
        r_lo = max(2.0 * space.min_separation(), r_hi * 10.0 ** (-radius_decades))
    else:
        r_lo, r_hi = radius_range
    if not (0 < r_lo < r_hi):
        raise ValueError("invalid radius range")
    n_r = max(8, int(round(6 * math.log10(r_hi / r_lo))) + 1)
    radii = np.geomspace(r_lo, r_hi, n_r)

    index = BallIndex(space)
    c_d = 1.0
    logr_all, logm_all, group = [], [], []
    for gi, x in enumerate(xs):
        for r in radii:
            m1 = index.ball_mass(int(x), float(r))
            m2 = index.ball_mass(int(x), float(2 * r))
            c_d = max(c_d, m2 / m1)
            logr_all.append(math.log(r))
            logm_all.append(math.log(m1))
            group.append(gi)
    logr = np.array(logr_all)
    logm = np.array(logm_all)
    grp = np.array(group)
    # demean within each center, then one pooled slope
    for g in np.unique(grp):
        sel = grp == g
        logr[sel] -= logr[sel].mean()
        logm[sel] -= logm[sel].mean()
    denom = float((logr ** 2).sum())
    slope = float((logr * logm).sum() / denom) if denom > 0 else 0.0
    resid = logm - slope * logr
    rms = float(np.sqrt((resid ** 2).mean()))
    return DoublingReport(doubling_constant=float(c_d), dimension_fit=slope,
                          fit_residual=rms, radius_range=(float(r_lo), float(r_hi)),
                          sample_count=k, seed=seed)


# -- serialization ----------------------------------------------------------

def save_space(space: Space, csv_path) -> None:
    """Write the columnar CSV plus the JSON sidecar (and the distance matrix
    for explicit-metric spaces).  Floats are written with repr, which
    round-trips float64 exactly."""
    csv_path = str(csv_path)
    if not csv_path.endswith(".csv"):
        raise ValueError("space path must end in .csv")
    d = space.dim
    header = ",".join([f"x{j}" for j in range(d)] + ["weight", "label"])
    lines = [header]
    labels = space.labels if space.labels is not None else [""] * space.n_points
    for i in range(space.n_points):
        coords = ",".join(repr(float(space.points[i, j])) for j in range(d))
        lines.append(f"{coords},{repr(float(space.weights[i]))},{labels[i]}")
    with open(csv_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

    meta = {
        "metric_kind": space.metric_kind,
        "diameter": float(space.diameter),
        "mesh_scale": space.mesh_scale,
        "family": space.family,
        "level": space.level,
        "glue": None,
    }
    if space.glue is not None:
        meta["glue"] = {
            "index_a": space.glue.index_a,
            "index_b": space.glue.index_b,
            "origin": [float(v) for v in space.glue.origin],
            "normal": None if space.glue.normal is None
                      else [float(v) for v in space.glue.normal],
        }
    with open(_meta_path(csv_path), "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
    if space.metric_kind == "explicit_matrix":
        with open(csv_path[:-4] + ".dist.csv", "w") as fh:
            for row in space.dist:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _meta_path(csv_path: str) -> str:
    return csv_path[:-4] + ".meta.json"


def load_space(csv_path) -> Space:
    csv_path = str(csv_path)
    with open(csv_path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    d = len(header) - 2
    pts = np.array([[float(v) for v in row[:d]] for row in rows])
    w = np.array([float(row[d]) for row in rows])
    raw_labels = [row[d + 1] for row in rows]
    labels = np.array(raw_labels) if any(raw_labels) else None
    with open(_meta_path(csv_path)) as fh:
        meta = json.load(fh)
    glue = None
    if meta.get("glue"):
        g = meta["glue"]
        glue = GlueInfo(index_a=g["index_a"], index_b=g["index_b"],
                        origin=np.array(g["origin"]),
                        normal=None if g["normal"] is None else np.array(g["normal"]))
    dist = None
    if meta["metric_kind"] == "explicit_matrix":
        dist = np.loadtxt(csv_path[:-4] + ".dist.csv", delimiter=",")
    return Space(points=pts, weights=w, metric_kind=meta["metric_kind"], dist=dist,
                 diameter=meta["diameter"], labels=labels, glue=glue,
                 mesh_scale=meta["mesh_scale"], family=meta["family"],
                 level=meta["level"])
