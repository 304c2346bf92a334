"""Named function generators for estimator candidates and targets.

A generator is a pair (name, builder) with builder(space, p) returning a
FunctionOnSpace, or None when the space does not support that function
(missing labels, degenerate level).  String specs make the generators
configurable from experiment configs:

    indicator:E1          component indicator
    coordinate:0          the j-th coordinate (smooth Lipschitz witness)
    harmonic              graph p-capacity minimizer mapped onto atoms
    cone:0.4              truncated cone of radius 0.4*diam at the centroid
    ball:0.5,0.5:0.3      indicator of the euclidean ball B(center, r)
    component_ball:E1:0.3 ball at the component barycenter
    glueball:E1:0.3       B(o, r) intersected with one component
    bump:E1:0.5           smooth bump at the component barycenter
"""

from __future__ import annotations

import numpy as np

from . import exponents
from .energy import FunctionOnSpace, fn
from .space import Space

_GLUED_BASE = {"glued_cube": "cube", "glued_gasket": "gasket", "glued_carpet": "carpet"}
_WITNESS_CACHE: dict[tuple, np.ndarray | None] = {}


def _component_center(space: Space, label: str) -> np.ndarray | None:
    masks = space.component_masks()
    if label in masks:
        m = masks[label]
    elif space.labels is None and label in ("E1", "X"):
        m = np.ones(space.n_points, dtype=bool)
    else:
        return None
    w = space.weights[m]
    return (space.points[m] * w[:, None]).sum(axis=0) / w.sum()


def indicator_builder(label: str):
    def build(space: Space, p: float):
        masks = space.component_masks()
        if label not in masks:
            return None
        return fn(space, masks[label].astype(np.float64))
    return build


def coordinate_builder(axis: int):
    def build(space: Space, p: float):
        if axis >= space.dim:
            return None
        return fn(space, space.points[:, axis])
    return build


def cone_builder(radius_fraction: float):
    """Truncated cone u(x) = max(1 - d(x0,x)/R0, 0) around the atom nearest
    the mass centroid."""
    def build(space: Space, p: float):
        if space.n_points < 2:
            return None
        center = (space.points * space.weights[:, None]).sum(axis=0) / space.weights.sum()
        d_c = np.sqrt(((space.points - center) ** 2).sum(axis=1))
        x0 = int(np.argmin(d_c))
        r0 = radius_fraction * space.diameter
        d = space.distance_row(x0)
        return fn(space, np.maximum(1.0 - d / r0, 0.0))
    return build


def ball_builder(center, radius: float):
    center = np.asarray(center, dtype=np.float64)
    def build(space: Space, p: float):
        if center.shape[0] != space.dim:
            return None
        d = np.sqrt(((space.points - center) ** 2).sum(axis=1))
        vals = (d < radius).astype(np.float64)
        if vals.sum() == 0:
            return None
        return fn(space, vals)
    return build


def component_ball_builder(label: str, radius: float):
    def build(space: Space, p: float):
        center = _component_center(space, label)
        if center is None:
            return None
        d = np.sqrt(((space.points - center) ** 2).sum(axis=1))
        vals = (d < radius).astype(np.float64)
        if vals.sum() == 0 or vals.sum() == space.n_points:
            return None
        return fn(space, vals)
    return build


def glueball_builder(label: str, radius: float):
    """Indicator of B(o, r) intersected with one labeled component."""
    def build(space: Space, p: float):
        if space.glue is None or space.labels is None:
            return None
        masks = space.component_masks()
        if label not in masks:
            return None
        d = np.sqrt(((space.points - space.glue.origin) ** 2).sum(axis=1))
        vals = ((d < radius) & masks[label]).astype(np.float64)
        if vals.sum() == 0:
            return None
        return fn(space, vals)
    return build


def bump_builder(label: str, radius_fraction: float):
    """Smooth bump (1 - (d/r)^2)^2 at the component barycenter, supported
    inside the component."""
    def build(space: Space, p: float):
        center = _component_center(space, label)
        if center is None:
            return None
        masks = space.component_masks()
        sel = masks[label] if label in masks else np.ones(space.n_points, dtype=bool)
        d = np.sqrt(((space.points - center) ** 2).sum(axis=1))
        r0 = radius_fraction * space.diameter / 2.0
        vals = np.where(sel, np.maximum(1.0 - (d / r0) ** 2, 0.0) ** 2, 0.0)
        if vals.max() == 0:
            return None
        return fn(space, vals)
    return build


def _base_witness_values(family: str, n: int, level: int, p: float) -> np.ndarray | None:
    """Atom values of the graph p-capacity minimizer for one base family."""
    key = (family, n, level, round(p, 12))
    if key in _WITNESS_CACHE:
        return _WITNESS_CACHE[key]
    vals = None
    if level >= 1:
        graph = exponents.build_graph_family(family, [level], n=n)[0]
        result = exponents.p_capacity(graph, p)
        pot = result.minimizer
        if family == "gasket":
            vals = pot[graph.cells].mean(axis=1)
        else:
            vals = pot.copy()  # cube and carpet: atoms correspond to vertices
    _WITNESS_CACHE[key] = vals
    return vals


def harmonic_builder():
    """Capacity-minimizer witness: the least-energy non-constant potential of
    the matching graph, averaged onto cell atoms; mirrored across a gluing."""
    def build(space: Space, p: float):
        fam = space.family
        if fam is None or space.level is None:
            return None
        if fam in _GLUED_BASE:
            base = _GLUED_BASE[fam]
            half = space.n_points // 2
            vals = _base_witness_values(base, space.dim, space.level, p)
            if vals is None or vals.shape[0] != half:
                return None
            return fn(space, np.concatenate([vals, vals]))
        if fam in ("cube", "gasket", "carpet"):
            vals = _base_witness_values(fam, space.dim, space.level, p)
            if vals is None or vals.shape[0] != space.n_points:
                return None
            return fn(space, vals)
        return None
    return build


def parse_function_spec(spec: str):
    """Turn a spec string into a (name, builder) pair."""
    parts = spec.split(":")
    kind = parts[0]
    if kind == "indicator":
        return spec, indicator_builder(parts[1])
    if kind == "coordinate":
        return spec, coordinate_builder(int(parts[1]))
    if kind == "harmonic":
        return spec, harmonic_builder()
    if kind == "cone":
        return spec, cone_builder(float(parts[1]) if len(parts) > 1 else 0.4)
    if kind == "ball":
        center = [float(v) for v in parts[1].split(",")]
        return spec, ball_builder(center, float(parts[2]))
    if kind == "component_ball":
        return spec, component_ball_builder(parts[1], float(parts[2]))
    if kind == "glueball":
        return spec, glueball_builder(parts[1], float(parts[2]))
    if kind == "bump":
        return spec, bump_builder(parts[1], float(parts[2]) if len(parts) > 2 else 0.5)
    raise ValueError(f"unknown function spec {spec!r}")


def default_theta_candidates(glued: bool) -> list:
    specs = ["coordinate:0", "harmonic"]
    if glued:
        specs = ["indicator:E1", "indicator:E2"] + specs
    return [parse_function_spec(s) for s in specs]


def default_density_targets(glued: bool) -> list:
    if glued:
        specs = ["component_ball:E1:0.3", "component_ball:E2:0.15"]
    else:
        specs = ["component_ball:E1:0.25", "component_ball:E1:0.12"]
    return [parse_function_spec(s) for s in specs]
