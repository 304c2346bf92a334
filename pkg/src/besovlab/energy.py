"""Nonlocal smoothness energies on discretized spaces.

Three statistics of one family: the full double-sum energy

    E_pp(u) = sum_{x != y} |u(x)-u(y)|^p w_x w_y / (d(x,y)^(theta p) mu(B(x,d(x,y))))

its averaged single-scale version

    E(u, t) = sum_x (w_x / mu(B(x,t))) sum_{y in B(x,t)} |u(x)-u(y)|^p w_y / t^(theta p)

and scale-limit statistics of the curve t -> E(u, t): the sup over scales,
and a tail window standing in for the limit t -> 0 (classified through a
power-law fit, since the scaling exponent is the robust observable on a
finite discretization).
"""

from __future__ import annotations

import json
import math
import weakref
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import BindingError, EnergyOverflowError, ResolutionError
from .space import Space, _BucketGrid

BESOV_AUTO_LIMIT = 6000          # auto-compute the double sum up to this many atoms
DENSE_PATH_LIMIT = 200_000       # refuse the O(N^2) general kernel beyond this
PER_DECADE = 16

KS_VANISH_ALPHA = 0.0            # tail slope > this (with good fit) means tail -> 0
KS_FLAT_ALPHA = 0.1              # |slope| <= this with positive values means tail > 0
KS_FIT_R2 = 0.9


@dataclass(frozen=True, eq=False)
class FunctionOnSpace:
    """A function given by one value per atom of a bound space."""

    values: np.ndarray
    space: Space

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64).ravel())
        if v.shape[0] != self.space.n_points:
            raise BindingError("value vector length does not match the space")
        if not np.all(np.isfinite(v)):
            raise ValueError("function values must be finite")
        object.__setattr__(self, "values", v)
        v.setflags(write=False)

    @property
    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())

    def lp_norm(self, p: float) -> float:
        return float((self.space.weights * np.abs(self.values) ** p).sum() ** (1.0 / p))


def fn(space: Space, values) -> FunctionOnSpace:
    return FunctionOnSpace(values=np.asarray(values, dtype=np.float64), space=space)


def constant(space: Space, c: float) -> FunctionOnSpace:
    return fn(space, np.full(space.n_points, float(c)))


def indicator(space: Space, mask) -> FunctionOnSpace:
    return fn(space, np.asarray(mask, dtype=bool).astype(np.float64))


def component_indicator(space: Space, label: str) -> FunctionOnSpace:
    masks = space.component_masks()
    if label not in masks:
        raise ValueError(f"space has no component {label!r}")
    return indicator(space, masks[label])


def _require_same_space(u: FunctionOnSpace, v: FunctionOnSpace):
    if u.space is not v.space:
        raise BindingError("functions are bound to different spaces")


def _check_exponents(p: float, theta: float):
    if not (1.0 < p < math.inf):
        raise ValueError("p must lie in (1, inf)")
    if theta <= 0:
        raise ValueError("theta must be positive")


# -- double-sum energy -------------------------------------------------------

def besov_pp_many(space: Space, values_matrix: np.ndarray, p: float,
                  thetas) -> np.ndarray:
    """Double-sum energies of several functions at several thetas in one pass.

    values_matrix is (C, N); returns a (C, K) array."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=np.float64))
    for th in thetas:
        _check_exponents(p, float(th))
    vm = np.ascontiguousarray(np.atleast_2d(values_matrix), dtype=np.float64)
    if vm.shape[1] != space.n_points:
        raise BindingError("value matrix does not match the space")
    use_dist = space.metric_kind == "explicit_matrix"
    dist = space.dist if use_dist else np.zeros((1, 1))
    partials, overflow = _kernels.besov_pp_partials(
        space.points, space.weights, dist, use_dist, vm, float(p), thetas)
    bad = np.nonzero(overflow)[0]
    if bad.size:
        x = int(bad[0])
        raise EnergyOverflowError((x, int(overflow[x] - 1)))
    return partials.sum(axis=0)


def besov_pp_energy(u: FunctionOnSpace, p: float, theta: float) -> float:
    """The discrete double-sum smoothness energy (open-ball volume kernel)."""
    _check_exponents(p, theta)
    out = besov_pp_many(u.space, u.values[None, :], p, [theta])
    return float(out[0, 0])


# -- scaling fits ------------------------------------------------------------

@dataclass(frozen=True)
class ScalingFit:
    """Least-squares power law v = C * t^alpha over a radius window."""

    alpha: float
    log_constant: float
    r_squared: float
    window: tuple[float, float]
    n_points: int

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "log_constant": self.log_constant,
                "r_squared": self.r_squared, "window": list(self.window),
                "n_points": self.n_points}


def fit_power_law(radii, values, window=None) -> ScalingFit:
    radii = np.asarray(radii, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    sel = values > 0
    if window is not None:
        lo, hi = window
        sel &= (radii >= lo) & (radii <= hi)
    t = radii[sel]
    v = values[sel]
    if t.size < 4:
        raise ResolutionError("power-law fit needs at least 4 positive grid points")
    lt = np.log(t)
    lv = np.log(v)
    alpha, logc = np.polyfit(lt, lv, 1)
    pred = alpha * lt + logc
    ss_res = float(((lv - pred) ** 2).sum())
    ss_tot = float(((lv - lv.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - ss_res / ss_tot)
    return ScalingFit(alpha=float(alpha), log_constant=float(logc),
                      r_squared=float(min(r2, 1.0)),
                      window=(float(t.min()), float(t.max())), n_points=int(t.size))


# -- multiscale profile ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EnergyProfile:
    """The curve t -> E(u, t) over a decreasing radius grid."""

    p: float
    theta: float
    radii: np.ndarray            # strictly decreasing, within (0, diam]
    values: np.ndarray
    besov_pp: float              # nan when skipped for size
    dyadic_radii: np.ndarray
    dyadic_values: np.ndarray
    dyadic_sum: float
    diameter: float

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        if r.ndim != 1 or r.shape != v.shape:
            raise ValueError("radii/values shape mismatch")
        if np.any(np.diff(r) >= 0):
            raise ValueError("radii must be strictly decreasing")
        if r[0] > self.diameter * (1 + 1e-12) or r[-1] <= 0:
            raise ValueError("radii must lie in (0, diam]")
        if np.any(v < 0):
            raise ValueError("profile values must be nonnegative")

    @property
    def decades(self) -> float:
        return math.log10(self.radii[0] / self.radii[-1])


def default_radii(space: Space, per_decade: int = PER_DECADE,
                  r_min: float | None = None, r_max: float | None = None) -> np.ndarray:
    """Log-spaced decreasing radius grid from the diameter down to twice the
    minimum interpoint distance."""
    if r_max is None:
        r_max = space.diameter
    if r_min is None:
        sep = space.min_separation()
        r_min = 2.0 * sep if sep > 0 else r_max / 100.0
    if not (0 < r_min < r_max):
        raise ValueError("invalid radius range")
    count = max(4, int(round(per_decade * math.log10(r_max / r_min))) + 1)
    return np.geomspace(r_max, r_min, count)


def _dyadic_radii(space: Space, r_min: float, r_max: float) -> np.ndarray:
    """Powers of 1/2 times the diameter, clipped to the profile window."""
    out = []
    t = space.diameter
    while t >= r_min * (1 - 1e-12):
        if t <= r_max * (1 + 1e-12):
            out.append(t)
        t /= 2.0
    return np.asarray(out)


def _componentwise_values(u: FunctionOnSpace):
    """For a two-component labeled space, the per-component constants of u
    (or None if u is not componentwise constant)."""
    sp = u.space
    if sp.labels is None or sp.glue is None or sp.metric_kind != "euclidean":
        return None
    masks = sp.component_masks()
    if len(masks) != 2:
        return None
    consts = {}
    for lab, mask in masks.items():
        vals = u.values[mask]
        if vals.size == 0 or not np.all(vals == vals[0]):
            return None
        consts[lab] = float(vals[0])
    return consts


def _cross_prune_vector(space: Space, mask_e2: np.ndarray) -> np.ndarray:
    """Per-atom lower bound on the distance to the opposite component.

    The gluing normal certifies the hyperplane bound |n.(x-o)|.  When both
    components additionally fit in polar cones (half-angle sum <= pi/2 around
    the normal axis) the stronger bound |x-o| is used."""
    glue = space.glue
    n = space.n_points
    if glue is None or glue.normal is None:
        return np.zeros(n)
    rel = space.points - glue.origin
    proj = rel @ glue.normal
    prune = np.abs(proj)
    norms = np.sqrt(np.einsum("ij,ij->i", rel, rel))
    safe = norms > 1e-300
    cos1 = 1.0
    cos2 = 1.0
    sel1 = (~mask_e2) & safe
    sel2 = mask_e2 & safe
    if sel1.any():
        cos1 = float((-proj[sel1] / norms[sel1]).min())
    if sel2.any():
        cos2 = float((proj[sel2] / norms[sel2]).min())
    if cos1 > 0 and cos2 > 0 and math.acos(min(cos1, 1.0)) + math.acos(min(cos2, 1.0)) \
            <= math.pi / 2 + 1e-12:
        return norms
    return prune


_CROSS_STATS_CACHE = weakref.WeakKeyDictionary()


def _component_cross_stats(space: Space, radii_desc: np.ndarray) -> np.ndarray:
    """S[t] = sum_x w_x mu(B(x,t) cap opposite)/mu(B(x,t)) for 2-label spaces.

    Independent of the function constants and of (p, theta), so results are
    memoized per space and radius grid."""
    radii = np.ascontiguousarray(radii_desc, dtype=np.float64)
    per_space = _CROSS_STATS_CACHE.setdefault(space, {})
    key = radii.tobytes()
    if key in per_space:
        return per_space[key]
    masks = space.component_masks()
    labs = sorted(masks)
    mask_e2 = masks[labs[1]]
    grid = _BucketGrid(space.points, res_cap=256)
    prune = _cross_prune_vector(space, mask_e2)
    stats = _kernels.indicator_cross_stats(
        space.points, space.weights, mask_e2.astype(np.uint8), prune,
        grid.order, grid.start, grid.dims, grid.strides, grid.lo, grid.cell, radii)
    per_space[key] = stats
    return stats


def _profile_values(u: FunctionOnSpace, p: float, radii_desc: np.ndarray,
                    x_active: np.ndarray | None = None,
                    num_mask: np.ndarray | None = None) -> np.ndarray:
    """Raw profile sums (no t^(-theta p) factor) on a decreasing grid."""
    sp = u.space
    n = sp.n_points
    if x_active is None and num_mask is None:
        consts = _componentwise_values(u)
        if consts is not None and n >= 512:
            labs = sorted(consts)
            jump = abs(consts[labs[0]] - consts[labs[1]]) ** p
            return jump * _component_cross_stats(sp, radii_desc)
    if n > DENSE_PATH_LIMIT:
        raise ResolutionError(
            f"general multiscale path is quadratic and capped at {DENSE_PATH_LIMIT} atoms; "
            "use a componentwise-constant function or a smaller level")
    active = np.ones(n, dtype=bool) if x_active is None else np.asarray(x_active, dtype=bool)
    wnum = sp.weights if num_mask is None else sp.weights * np.asarray(num_mask, dtype=np.float64)
    use_dist = sp.metric_kind == "explicit_matrix"
    dist = sp.dist if use_dist else np.zeros((1, 1))
    radii_asc = np.ascontiguousarray(radii_desc[::-1], dtype=np.float64)
    num, mass = _kernels.multiscale_partials(
        sp.points, sp.weights, dist, use_dist, u.values,
        np.ascontiguousarray(wnum), active, radii_asc, float(p))
    contrib = np.zeros_like(num)
    np.divide(num, mass, out=contrib, where=mass > 0)
    vals_asc = (sp.weights[:, None] * contrib).sum(axis=0)
    return vals_asc[::-1].copy()


def multiscale_energy(u: FunctionOnSpace, p: float, theta: float,
                      radii=None, compute_besov="auto") -> EnergyProfile:
    """Evaluate t -> E(u, t) on a radius grid, plus the dyadic sub-grid sum
    and (size permitting) the full double-sum energy."""
    _check_exponents(p, theta)
    sp = u.space
    if radii is None:
        radii = default_radii(sp)
    radii = np.asarray(radii, dtype=np.float64)
    if radii.size < 4:
        raise ValueError("radius grid needs at least 4 points")
    if np.any(np.diff(radii) >= 0):
        radii = np.sort(radii)[::-1]
    raw = _profile_values(u, p, radii)
    values = raw * radii ** (-theta * p)

    dy_r = _dyadic_radii(sp, radii[-1], radii[0])
    dy_raw = _profile_values(u, p, dy_r)
    dy_values = dy_raw * dy_r ** (-theta * p)

    if compute_besov == "auto":
        compute_besov = sp.n_points <= BESOV_AUTO_LIMIT
    besov = besov_pp_energy(u, p, theta) if compute_besov else float("nan")
    return EnergyProfile(p=p, theta=theta, radii=radii, values=values,
                         besov_pp=besov, dyadic_radii=dy_r, dyadic_values=dy_values,
                         dyadic_sum=float(dy_values.sum()), diameter=sp.diameter)


def multiscale_restricted(u: FunctionOnSpace, mask, p: float, theta: float,
                          radii) -> np.ndarray:
    """Restricted profile sum_{x in E} w_x/mu(B(x,t)) sum_{y in B(x,t) cap E}
    |u(x)-u(y)|^p w_y / t^(theta p).  The ball volume stays global."""
    _check_exponents(p, theta)
    mask = np.asarray(mask, dtype=bool)
    radii = np.asarray(radii, dtype=np.float64)
    raw = _profile_values(u, p, radii, x_active=mask, num_mask=mask)
    return raw * radii ** (-theta * p)


# -- scale-limit statistics --------------------------------------------------

def besov_pinfty_energy(profile: EnergyProfile) -> float:
    """Grid supremum of the profile (the sup-over-scales energy)."""
    if profile.values.size == 0:
        raise ValueError("empty profile")
    return float(profile.values.max())


@dataclass(frozen=True)
class KSTail:
    """Tail-window statistic standing in for the limit t -> 0."""

    energy: float
    fit: ScalingFit | None
    classification: str          # "vanishing" | "positive" | "indeterminate"
    window: tuple[float, float]


def ks_energy_tail(profile: EnergyProfile, tail_fraction: float = 0.25) -> KSTail:
    """Max of the profile over the smallest radii plus a slope classification.

    A clearly positive tail slope (values falling as t -> 0) is classified
    "vanishing"; a flat slope with positive values is "positive"."""
    if profile.radii.size < 8 or profile.decades < 2.0 - 1e-9:
        raise ResolutionError("tail statistics need >= 8 radii spanning >= 2 decades")
    k = max(4, int(math.ceil(tail_fraction * profile.radii.size)))
    tail_r = profile.radii[-k:]
    tail_v = profile.values[-k:]
    window = (float(tail_r.min()), float(tail_r.max()))
    energy = float(tail_v.max())
    if energy == 0.0:
        return KSTail(energy=0.0, fit=None, classification="vanishing", window=window)
    try:
        fit = fit_power_law(tail_r, tail_v)
    except ResolutionError:
        return KSTail(energy=energy, fit=None, classification="indeterminate", window=window)
    if abs(fit.alpha) <= KS_FLAT_ALPHA:
        cls = "positive"
    elif fit.alpha > KS_VANISH_ALPHA and fit.r_squared >= KS_FIT_R2:
        cls = "vanishing"
    else:
        cls = "indeterminate"
    return KSTail(energy=energy, fit=fit, classification=cls, window=window)


# -- pointwise operations ----------------------------------------------------

def normal_contraction(u: FunctionOnSpace, alpha: float, beta: float) -> FunctionOnSpace:
    """Clamp to [alpha, beta] with alpha <= 0 <= beta; never increases the
    double-sum energy."""
    if alpha > 0 or beta < 0:
        raise ValueError("need alpha <= 0 <= beta")
    return fn(u.space, np.clip(u.values, alpha, beta))


def positive_part(u: FunctionOnSpace) -> FunctionOnSpace:
    return fn(u.space, np.maximum(u.values, 0.0))


def negative_part(u: FunctionOnSpace) -> FunctionOnSpace:
    return fn(u.space, np.maximum(-u.values, 0.0))


def product(u: FunctionOnSpace, v: FunctionOnSpace) -> FunctionOnSpace:
    _require_same_space(u, v)
    return fn(u.space, u.values * v.values)


# -- gluing-point functionals -------------------------------------------------

def loglog_witness(space: Space) -> FunctionOnSpace:
    """log(-log|x - o|) on E1, zero on E2 and wherever |x - o| >= 1.

    The outer log is clamped at 0, and |x - o| is floored at a tiny positive
    value so the value stays finite even if an atom sits at the gluing point."""
    if space.glue is None or space.labels is None:
        raise ValueError("need a glued space with labels")
    rel = space.points - space.glue.origin
    s = np.sqrt(np.einsum("ij,ij->i", rel, rel))
    s = np.clip(s, 1e-300, None)
    vals = np.zeros(space.n_points)
    e1 = space.labels == "E1"
    inside = e1 & (s < 1.0)
    vals[inside] = np.maximum(0.0, np.log(-np.log(s[inside])))
    return fn(space, vals)


def default_iks_exponent(space: Space, p: float, theta: float) -> float:
    """Normalization exponent of the cross-coupling functional: 2n for glued
    cubes, Hausdorff dimension + p*theta for the fractal gluings."""
    fam = space.family or ""
    if fam == "glued_cube":
        return 2.0 * space.dim
    if fam == "glued_gasket":
        return math.log(space.dim + 1) / math.log(2) + p * theta
    if fam == "glued_carpet":
        return math.log(8) / math.log(3) + p * theta
    return 2.0 * space.dim


@dataclass(frozen=True)
class IksProfile:
    radii: np.ndarray
    values: np.ndarray
    norm_exponent: float
    tail_fit: ScalingFit | None
    classification: str          # "divergent" | "bounded" | "vanishing" | "indeterminate"


def cross_coupling_iks(u1: FunctionOnSpace, u2: FunctionOnSpace, glued: Space,
                       p: float, theta: float, radii=None,
                       norm_exponent: float | None = None,
                       tail_fraction: float = 0.25) -> IksProfile:
    """Profile of the gluing-point coupling

        r -> sum_{x in E1 cap B(o,r)} sum_{y in E2 cap B(o,r)}
                 w_x w_y |u1(x) - u2(y)|^p / r^q

    with q the family normalization (see default_iks_exponent)."""
    _check_exponents(p, theta)
    if glued.glue is None or glued.labels is None:
        raise ValueError("need a glued space with labels")
    if u1.space is not glued or u2.space is not glued:
        raise BindingError("u1/u2 must be bound to the glued space")
    if norm_exponent is None:
        norm_exponent = default_iks_exponent(glued, p, theta)
    if radii is None:
        radii = default_radii(glued, r_max=min(1.0, glued.diameter))
    radii = np.sort(np.asarray(radii, dtype=np.float64))  # ascending for prefixes
    masks = glued.component_masks()
    rel = glued.points - glued.glue.origin
    dist_o = np.sqrt(np.einsum("ij,ij->i", rel, rel))
    out = {}
    for lab, uu in (("E1", u1), ("E2", u2)):
        idx = np.nonzero(masks[lab])[0]
        order = np.argsort(dist_o[idx], kind="stable")
        idx = idx[order]
        out[lab] = (glued.weights[idx], uu.values[idx],
                    np.searchsorted(dist_o[idx], radii, side="left"))
    w1, v1, c1 = out["E1"]
    w2, v2, c2 = out["E2"]
    sums = _kernels.cross_coupling_sums(w1, v1, w2, v2,
                                        c1.astype(np.int64), c2.astype(np.int64),
                                        float(p))
    values = sums * radii ** (-float(norm_exponent))
    # report on the standard decreasing-radius convention
    radii_desc = radii[::-1].copy()
    values_desc = values[::-1].copy()
    k = max(4, int(math.ceil(tail_fraction * radii_desc.size)))
    tail_r = radii_desc[-k:]
    tail_v = values_desc[-k:]
    fit = None
    cls = "indeterminate"
    if np.all(tail_v == 0):
        cls = "vanishing"
    else:
        try:
            fit = fit_power_law(tail_r, tail_v)
        except ResolutionError:
            fit = None
        if fit is not None:
            if fit.alpha <= -KS_FLAT_ALPHA:
                cls = "divergent"
            elif fit.alpha > KS_FLAT_ALPHA and fit.r_squared >= KS_FIT_R2:
                cls = "vanishing"
            elif abs(fit.alpha) <= KS_FLAT_ALPHA:
                cls = "bounded"
    return IksProfile(radii=radii_desc, values=values_desc,
                      norm_exponent=float(norm_exponent), tail_fit=fit,
                      classification=cls)


# -- ratio diagnostics --------------------------------------------------------

@dataclass(frozen=True)
class RatioResult:
    ratio: float
    flag: str                    # "finite" | "infinite" | "degenerate"
    numerator: float
    denominator: float
    window: tuple[float, float]


def wmax_ratio(u: FunctionOnSpace, p: float, theta: float, radii=None,
               tail_fraction: float = 0.25) -> RatioResult:
    """sup-over-scales energy divided by the tail energy; flags the
    weak-maximality failure (positive sup over a vanishing tail)."""
    profile = multiscale_energy(u, p, theta, radii=radii, compute_besov=False)
    sup = besov_pinfty_energy(profile)
    tail = ks_energy_tail(profile, tail_fraction)
    if sup == 0.0:
        return RatioResult(ratio=1.0, flag="degenerate", numerator=0.0,
                           denominator=0.0, window=tail.window)
    if tail.classification == "vanishing" or tail.energy == 0.0:
        return RatioResult(ratio=math.inf, flag="infinite", numerator=sup,
                           denominator=tail.energy, window=tail.window)
    return RatioResult(ratio=sup / tail.energy, flag="finite", numerator=sup,
                       denominator=tail.energy, window=tail.window)


def sobolev_ratio(u: FunctionOnSpace, p: float, theta: float, radii=None,
                  tail_fraction: float = 0.25) -> RatioResult:
    """Poincare-type ratio: int |u - mean|^p dmu over the tail minimum of the
    profile (a liminf proxy)."""
    sp = u.space
    mean = float((sp.weights * u.values).sum() / sp.weights.sum())
    numer = float((sp.weights * np.abs(u.values - mean) ** p).sum())
    profile = multiscale_energy(u, p, theta, radii=radii, compute_besov=False)
    if profile.radii.size < 8 or profile.decades < 2.0 - 1e-9:
        raise ResolutionError("liminf proxy needs >= 8 radii spanning >= 2 decades")
    k = max(4, int(math.ceil(tail_fraction * profile.radii.size)))
    tail_v = profile.values[-k:]
    window = (float(profile.radii[-1]), float(profile.radii[-k]))
    denom = float(tail_v.min())
    if numer == 0.0 and denom == 0.0:
        return RatioResult(ratio=1.0, flag="degenerate", numerator=0.0,
                           denominator=0.0, window=window)
    if denom == 0.0:
        return RatioResult(ratio=math.inf, flag="infinite", numerator=numer,
                           denominator=0.0, window=window)
    return RatioResult(ratio=numer / denom, flag="finite", numerator=numer,
                       denominator=denom, window=window)


# -- serialization ------------------------------------------------------------

def save_profile(profile: EnergyProfile, csv_path, fit: ScalingFit | None = None,
                 extra: dict | None = None) -> None:
    csv_path = str(csv_path)
    lines = ["t,value"]
    for t, v in zip(profile.radii, profile.values):
        lines.append(f"{repr(float(t))},{repr(float(v))}")
    with open(csv_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    side = {
        "p": profile.p,
        "theta": profile.theta,
        "besov_pp": None if math.isnan(profile.besov_pp) else profile.besov_pp,
        "dyadic_sum": profile.dyadic_sum,
        "dyadic_radii": [float(t) for t in profile.dyadic_radii],
        "dyadic_values": [float(v) for v in profile.dyadic_values],
        "diameter": profile.diameter,
        "fit": fit.to_dict() if fit is not None else None,
    }
    if extra:
        side.update(extra)
    with open(csv_path[:-4] + ".meta.json", "w") as fh:
        json.dump(side, fh, indent=1, sort_keys=True)


def save_function(u: FunctionOnSpace, csv_path) -> None:
    with open(str(csv_path), "w") as fh:
        fh.write("value\n")
        for v in u.values:
            fh.write(repr(float(v)) + "\n")


def load_function(space: Space, csv_path) -> FunctionOnSpace:
    with open(str(csv_path)) as fh:
        fh.readline()
        vals = [float(line) for line in fh if line.strip()]
    return fn(space, vals)
