"""Naive reference evaluations of the energy sums.

Deliberately written as direct loops over the defining formulas, with no
sorting, bucketing, or prefix tricks, so they stay an independent check on
the optimized kernels.  Quadratic or worse; use on small spaces only.
"""

import numpy as np

from .energy import FunctionOnSpace
from .space import Space


def naive_ball(space: Space, x: int, r: float) -> np.ndarray:
    d = space.distance_row(x)
    return np.nonzero(d < r)[0]


def naive_ball_mass(space: Space, x: int, r: float) -> float:
    return float(space.weights[naive_ball(space, x, r)].sum())


def naive_besov_pp(u: FunctionOnSpace, p: float, theta: float) -> float:
    sp = u.space
    w = sp.weights
    v = u.values
    total = 0.0
    for x in range(sp.n_points):
        d = sp.distance_row(x)
        for y in range(sp.n_points):
            if y == x or d[y] == 0.0:
                continue
            mu = float(w[d < d[y]].sum())
            total += abs(v[x] - v[y]) ** p * w[x] * w[y] / (d[y] ** (theta * p) * mu)
    return total


def naive_multiscale(u: FunctionOnSpace, p: float, theta: float, radii) -> np.ndarray:
    sp = u.space
    w = sp.weights
    v = u.values
    out = np.zeros(len(radii))
    for i, t in enumerate(radii):
        acc = 0.0
        for x in range(sp.n_points):
            d = sp.distance_row(x)
            inside = d < t
            mass = float(w[inside].sum())
            num = float((np.abs(v[x] - v[inside]) ** p * w[inside]).sum())
            acc += w[x] * num / mass
        out[i] = acc / t ** (theta * p)
    return out


def naive_multiscale_restricted(u: FunctionOnSpace, mask, p: float, theta: float,
                                radii) -> np.ndarray:
    """Outer integral over E, inner over B(x,t) cap E, global ball volume."""
    sp = u.space
    w = sp.weights
    v = u.values
    mask = np.asarray(mask, dtype=bool)
    out = np.zeros(len(radii))
    for i, t in enumerate(radii):
        acc = 0.0
        for x in np.nonzero(mask)[0]:
            d = sp.distance_row(x)
            inside = d < t
            mass = float(w[inside].sum())
            sel = inside & mask
            num = float((np.abs(v[x] - v[sel]) ** p * w[sel]).sum())
            acc += w[x] * num / mass
        out[i] = acc / t ** (theta * p)
    return out


def naive_cross_coupling(u1: FunctionOnSpace, u2: FunctionOnSpace, glued: Space,
                         p: float, radii, norm_exponent: float) -> np.ndarray:
    masks = glued.component_masks()
    rel = glued.points - glued.glue.origin
    dist_o = np.sqrt((rel ** 2).sum(axis=1))
    e1 = np.nonzero(masks["E1"])[0]
    e2 = np.nonzero(masks["E2"])[0]
    w = glued.weights
    out = np.zeros(len(radii))
    for i, r in enumerate(radii):
        acc = 0.0
        for x in e1[dist_o[e1] < r]:
            for y in e2[dist_o[e2] < r]:
                acc += w[x] * w[y] * abs(u1.values[x] - u2.values[y]) ** p
        out[i] = acc / r ** norm_exponent
    return out
