"""Numba kernels for the nonlocal energy sums.

All kernels follow the same determinism contract: work is parallel over the
outer atom index with one partial result per atom, and the cross-atom
reduction happens afterwards in a fixed order.  Results are therefore
bit-stable under any thread count.  Inner accumulations use compensated
(Kahan) summation.
"""

import numpy as np
from numba import njit, prange

F8 = np.float64


@njit(cache=True, inline="always")
def _dist_row(points, dist, use_dist, i, out):
    n = out.shape[0]
    if use_dist:
        for j in range(n):
            out[j] = dist[i, j]
    else:
        d = points.shape[1]
        for j in range(n):
            s = 0.0
            for k in range(d):
                t = points[i, k] - points[j, k]
                s += t * t
            out[j] = np.sqrt(s)


@njit(cache=True, parallel=True)
def besov_pp_partials(points, weights, dist, use_dist, values, pexp, thetas):
    """Per-atom partial sums of the double-sum smoothness energy.

    values is (C, N): one row per function evaluated in the same pass.
    Returns partials (N, C, K) for K thetas and an overflow marker per atom
    (y+1 of the first non-finite pair, 0 if clean).
    """
    n = weights.shape[0]
    n_c = values.shape[0]
    n_k = thetas.shape[0]
    partials = np.zeros((n, n_c, n_k))
    overflow = np.zeros(n, dtype=np.int64)
    for x in prange(n):
        drow = np.empty(n)
        _dist_row(points, dist, use_dist, x, drow)
        order = np.argsort(drow)
        sorted_d = drow[order]
        # prefix masses: cum[k] = mass of the k nearest atoms (including x)
        cum = np.empty(n + 1)
        cum[0] = 0.0
        c = 0.0
        for k in range(n):
            yv = weights[order[k]] - c
            t = cum[k] + yv
            c = (t - cum[k]) - yv
            cum[k + 1] = t
        acc = np.zeros((n_c, n_k))
        comp = np.zeros((n_c, n_k))
        for y in range(n):
            dxy = drow[y]
            if dxy <= 0.0:
                continue  # diagonal and coincident pairs are excluded
            pos = np.searchsorted(sorted_d, dxy)  # count of atoms with d < dxy
            mu = cum[pos]
            wy = weights[y]
            for ci in range(n_c):
                du = values[ci, x] - values[ci, y]
                if du == 0.0:
                    continue
                base = abs(du) ** pexp * wy / mu
                for ki in range(n_k):
                    term = base * dxy ** (-thetas[ki] * pexp)
                    if not np.isfinite(term):
                        if overflow[x] == 0:
                            overflow[x] = y + 1
                        continue
                    yv = term - comp[ci, ki]
                    t = acc[ci, ki] + yv
                    comp[ci, ki] = (t - acc[ci, ki]) - yv
                    acc[ci, ki] = t
        for ci in range(n_c):
            for ki in range(n_k):
                partials[x, ci, ki] = weights[x] * acc[ci, ki]
    return partials, overflow


@njit(cache=True, parallel=True)
def multiscale_partials(points, weights, dist, use_dist, u, w_num, x_active, radii_asc, pexp):
    """Per-atom ball statistics for every radius in one pass.

    For active atoms x returns
      num[x, r]  = sum over y in B(x, t_r) of w_num[y] * |u(x)-u(y)|^p
      mass[x, r] = mu(B(x, t_r))  (full ball mass, all atoms).
    """
    n = weights.shape[0]
    n_r = radii_asc.shape[0]
    num = np.zeros((n, n_r))
    mass = np.zeros((n, n_r))
    for x in prange(n):
        if not x_active[x]:
            continue
        drow = np.empty(n)
        _dist_row(points, dist, use_dist, x, drow)
        order = np.argsort(drow)
        sorted_d = drow[order]
        pref_w = np.empty(n + 1)
        pref_n = np.empty(n + 1)
        pref_w[0] = 0.0
        pref_n[0] = 0.0
        cw = 0.0
        cn = 0.0
        ux = u[x]
        for k in range(n):
            y = order[k]
            yv = weights[y] - cw
            t = pref_w[k] + yv
            cw = (t - pref_w[k]) - yv
            pref_w[k + 1] = t
            du = ux - u[y]
            term = 0.0
            if du != 0.0:
                term = w_num[y] * abs(du) ** pexp
            yv = term - cn
            t = pref_n[k] + yv
            cn = (t - pref_n[k]) - yv
            pref_n[k + 1] = t
        for r in range(n_r):
            pos = np.searchsorted(sorted_d, radii_asc[r])
            mass[x, r] = pref_w[pos]
            num[x, r] = pref_n[pos]
    return num, mass


@njit(cache=True, inline="always")
def _box_sums(points, weights, mask, order, start, dims, strides, lo, cell,
              bucket_w, bucket_w2, cx, cy_arr, r, out):
    """Ball mass and opposite-component ball mass around one center.

    Buckets entirely outside the ball are skipped, buckets entirely inside
    contribute their precomputed totals, and only boundary buckets are
    scanned atom by atom (squared-distance predicate, exact)."""
    d = points.shape[1]
    rsq = r * r
    lo_id = np.empty(d, dtype=np.int64)
    hi_id = np.empty(d, dtype=np.int64)
    for j in range(d):
        a = int(np.floor((cy_arr[j] - r - lo[j]) / cell))
        b = int(np.floor((cy_arr[j] + r - lo[j]) / cell))
        if a < 0:
            a = 0
        if b > dims[j] - 1:
            b = dims[j] - 1
        if a > dims[j] - 1 or b < 0:
            out[0] = 0.0
            out[1] = 0.0
            return
        lo_id[j] = a
        hi_id[j] = b
    idx = lo_id.copy()
    total = 0.0
    masked = 0.0  # mass of atoms with mask == 1 inside the ball
    while True:
        fid = 0
        for j in range(d):
            fid += idx[j] * strides[j]
        s = start[fid]
        e = start[fid + 1]
        if e > s:
            near = 0.0
            far = 0.0
            for j in range(d):
                blo = lo[j] + idx[j] * cell
                bhi = blo + cell
                gap = 0.0
                if cy_arr[j] < blo:
                    gap = blo - cy_arr[j]
                elif cy_arr[j] > bhi:
                    gap = cy_arr[j] - bhi
                near += gap * gap
                fa = cy_arr[j] - blo
                fb = bhi - cy_arr[j]
                ext = fa if fa > fb else fb
                far += ext * ext
            if near < rsq:
                if far < rsq:
                    total += bucket_w[fid]
                    masked += bucket_w2[fid]
                else:
                    for kk in range(s, e):
                        y = order[kk]
                        sq = 0.0
                        for j in range(d):
                            t = points[y, j] - cy_arr[j]
                            sq += t * t
                        if sq < rsq:
                            total += weights[y]
                            if mask[y] == 1:
                                masked += weights[y]
        j = d - 1
        while j >= 0:
            idx[j] += 1
            if idx[j] <= hi_id[j]:
                break
            idx[j] = lo_id[j]
            j -= 1
        if j < 0:
            break
    out[0] = total
    out[1] = masked if cx == 0 else total - masked


@njit(cache=True, parallel=True)
def indicator_cross_stats(points, weights, mask, prune_dist,
                          order, start, dims, strides, lo, cell, radii):
    """Cross-component ball statistic for two-label spaces.

    Returns s[r] = sum over atoms x with prune_dist[x] < t_r of
    w_x * mu(B(x,t) cap opposite) / mu(B(x,t)).  prune_dist must be a valid
    lower bound for the distance from x to the opposite component.
    """
    n = weights.shape[0]
    n_r = radii.shape[0]
    nb = start.shape[0] - 1
    bucket_w = np.zeros(nb)
    bucket_w2 = np.zeros(nb)
    for fid in range(nb):
        for kk in range(start[fid], start[fid + 1]):
            y = order[kk]
            bucket_w[fid] += weights[y]
            if mask[y] == 1:
                bucket_w2[fid] += weights[y]
    s_out = np.empty(n_r)
    part = np.empty(n)
    for ri in range(n_r):
        r = radii[ri]
        for x in prange(n):
            if prune_dist[x] >= r:
                part[x] = 0.0
                continue
            out = np.empty(2)
            _box_sums(points, weights, mask, order, start, dims, strides,
                      lo, cell, bucket_w, bucket_w2, mask[x], points[x], r, out)
            part[x] = weights[x] * out[1] / out[0] if out[0] > 0.0 else 0.0
        acc = 0.0
        comp = 0.0
        for x in range(n):
            yv = part[x] - comp
            t = acc + yv
            comp = (t - acc) - yv
            acc = t
        s_out[ri] = acc
    return s_out


@njit(cache=True)
def cross_coupling_sums(w1, v1, w2, v2, c1_counts, c2_counts, pexp):
    """Running double sums over growing prefixes of the two components.

    w1/v1 are weights/values of E1 atoms sorted by distance to the gluing
    point (w2/v2 likewise); c1_counts[r], c2_counts[r] give prefix sizes per
    radius (ascending).  Returns sums[r] = sum_{i<c1,j<c2} w1_i w2_j |v1_i-v2_j|^p.
    """
    n_r = c1_counts.shape[0]
    sums = np.empty(n_r)
    acc = 0.0
    comp = 0.0
    i_done = 0
    j_done = 0
    for r in range(n_r):
        c1 = c1_counts[r]
        c2 = c2_counts[r]
        for i in range(i_done, c1):
            for j in range(j_done):
                term = w1[i] * w2[j] * abs(v1[i] - v2[j]) ** pexp
                yv = term - comp
                t = acc + yv
                comp = (t - acc) - yv
                acc = t
        i_done = c1
        for j in range(j_done, c2):
            for i in range(i_done):
                term = w1[i] * w2[j] * abs(v1[i] - v2[j]) ** pexp
                yv = term - comp
                t = acc + yv
                comp = (t - acc) - yv
                acc = t
        j_done = c2
        sums[r] = acc
    return sums


@njit(cache=True, parallel=True)
def proj_objective(b, g, fv, w, pexp, penalty):
    """Objective of the penalized projection: fidelity + penalty * energy."""
    n = g.shape[0]
    fid = 0.0
    for x in range(n):
        fid += w[x] * abs(g[x] - fv[x]) ** pexp
    row = np.zeros(n)
    for x in prange(n):
        acc = 0.0
        gx = g[x]
        for y in range(n):
            d = gx - g[y]
            if d != 0.0:
                acc += b[x, y] * abs(d) ** pexp
        row[x] = acc
    pen = 0.5 * row.sum()
    return fid + penalty * pen, fid, pen


@njit(cache=True, parallel=True)
def proj_system(b, g, fv, w, pexp, penalty, floor):
    """Reweighted quadratic system matrix and right-hand side."""
    n = g.shape[0]
    mat = np.empty((n, n))
    rhs = np.empty(n)
    for x in prange(n):
        gx = g[x]
        rowsum = 0.0
        for y in range(n):
            d = abs(gx - g[y])
            if d < floor:
                d = floor
            v = b[x, y] * d ** (pexp - 2.0)
            mat[x, y] = -penalty * v
            rowsum += v
        df = abs(gx - fv[x])
        if df < floor:
            df = floor
        a = w[x] * df ** (pexp - 2.0)
        mat[x, x] = a + penalty * rowsum
        rhs[x] = a * fv[x]
    return mat, rhs


@njit(cache=True, parallel=True)
def kernel_matrix(points, weights, dist, use_dist, pexp, theta):
    """Dense coupling matrix K[x,y] = w_x w_y / (d^(theta p) mu(B(x,d))), zero diagonal.

    Note K is not symmetric: the ball in the denominator is centered at x.
    """
    n = weights.shape[0]
    out = np.zeros((n, n))
    for x in prange(n):
        drow = np.empty(n)
        _dist_row(points, dist, use_dist, x, drow)
        order = np.argsort(drow)
        sorted_d = drow[order]
        cum = np.empty(n + 1)
        cum[0] = 0.0
        for k in range(n):
            cum[k + 1] = cum[k] + weights[order[k]]
        for y in range(n):
            dxy = drow[y]
            if dxy <= 0.0:
                continue
            pos = np.searchsorted(sorted_d, dxy)
            mu = cum[pos]
            out[x, y] = weights[x] * weights[y] * dxy ** (-theta * pexp) / mu
    return out
