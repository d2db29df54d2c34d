"""Path-construction kernels for the micro renderer (numba scalar + numpy batch).

Scene arrays:

* ``quads``   ``(nq, 15)``: origin, edge1, edge2, albedo, emission
* ``spheres`` ``(ns, 10)``: center, radius, albedo, emission
* ``cam``     ``(12,)``: position, forward, right, up (right/up pre-scaled by
  the half-extent of the image plane at unit distance)
* ``ip``      ``(3,)`` int64: width, height, depth

A path is fully determined by ``u``: ``u[0], u[1]`` place the camera ray on
the image plane and each later pair drives one cosine-weighted bounce.
"""

import math

import numpy as np

from ._backend import njit

T_MIN = 1e-9
OFFSET = 1e-7
INF = 1e300


@njit
def _concentric(a, b):
    a = 2.0 * a - 1.0
    b = 2.0 * b - 1.0
    if a == 0.0 and b == 0.0:
        return 0.0, 0.0
    if abs(a) > abs(b):
        r = a
        phi = 0.25 * math.pi * (b / a)
    else:
        r = b
        phi = 0.5 * math.pi - 0.25 * math.pi * (a / b)
    return r * math.cos(phi), r * math.sin(phi)


@njit
def _intersect(quads, spheres, ox, oy, oz, dx, dy, dz):
    best = INF
    kind = -1
    idx = -1
    for q in range(quads.shape[0]):
        e1x, e1y, e1z = quads[q, 3], quads[q, 4], quads[q, 5]
        e2x, e2y, e2z = quads[q, 6], quads[q, 7], quads[q, 8]
        nx = e1y * e2z - e1z * e2y
        ny = e1z * e2x - e1x * e2z
        nz = e1x * e2y - e1y * e2x
        den = nx * dx + ny * dy + nz * dz
        if abs(den) < 1e-14:
            continue
        px = quads[q, 0] - ox
        py = quads[q, 1] - oy
        pz = quads[q, 2] - oz
        t = (px * nx + py * ny + pz * nz) / den
        if t <= T_MIN or t >= best:
            continue
        hx = ox + t * dx - quads[q, 0]
        hy = oy + t * dy - quads[q, 1]
        hz = oz + t * dz - quads[q, 2]
        nn = nx * nx + ny * ny + nz * nz
        # barycentric-style coordinates along the two edges
        a = (nx * (hy * e2z - hz * e2y) + ny * (hz * e2x - hx * e2z) + nz * (hx * e2y - hy * e2x)) / nn
        b = (nx * (e1y * hz - e1z * hy) + ny * (e1z * hx - e1x * hz) + nz * (e1x * hy - e1y * hx)) / nn
        if a < 0.0 or a > 1.0 or b < 0.0 or b > 1.0:
            continue
        best = t
        kind = 0
        idx = q
    for s in range(spheres.shape[0]):
        cx = ox - spheres[s, 0]
        cy = oy - spheres[s, 1]
        cz = oz - spheres[s, 2]
        r = spheres[s, 3]
        bb = cx * dx + cy * dy + cz * dz
        cc = cx * cx + cy * cy + cz * cz - r * r
        disc = bb * bb - cc
        if disc < 0.0:
            continue
        sq = math.sqrt(disc)
        t = -bb - sq
        if t <= T_MIN:
            t = -bb + sq
        if t <= T_MIN or t >= best:
            continue
        best = t
        kind = 1
        idx = s
    return best, kind, idx


@njit
def trace_point(quads, spheres, cam, ip, u, rgb):
    """Write the RGB contribution of the path ``u`` into ``rgb``."""
    rgb[0] = 0.0
    rgb[1] = 0.0
    rgb[2] = 0.0
    depth = ip[2]
    sx = 2.0 * u[0] - 1.0
    sy = 1.0 - 2.0 * u[1]
    dx = cam[3] + sx * cam[6] + sy * cam[9]
    dy = cam[4] + sx * cam[7] + sy * cam[10]
    dz = cam[5] + sx * cam[8] + sy * cam[11]
    inv = 1.0 / math.sqrt(dx * dx + dy * dy + dz * dz)
    dx *= inv
    dy *= inv
    dz *= inv
    ox, oy, oz = cam[0], cam[1], cam[2]
    tr, tg, tb = 1.0, 1.0, 1.0
    for bounce in range(depth + 1):
        t, kind, idx = _intersect(quads, spheres, ox, oy, oz, dx, dy, dz)
        if kind < 0:
            break
        hx = ox + t * dx
        hy = oy + t * dy
        hz = oz + t * dz
        if kind == 0:
            e1x, e1y, e1z = quads[idx, 3], quads[idx, 4], quads[idx, 5]
            e2x, e2y, e2z = quads[idx, 6], quads[idx, 7], quads[idx, 8]
            nx = e1y * e2z - e1z * e2y
            ny = e1z * e2x - e1x * e2z
            nz = e1x * e2y - e1y * e2x
            ar, ag, ab = quads[idx, 9], quads[idx, 10], quads[idx, 11]
            er, eg, eb = quads[idx, 12], quads[idx, 13], quads[idx, 14]
        else:
            nx = hx - spheres[idx, 0]
            ny = hy - spheres[idx, 1]
            nz = hz - spheres[idx, 2]
            ar, ag, ab = spheres[idx, 4], spheres[idx, 5], spheres[idx, 6]
            er, eg, eb = spheres[idx, 7], spheres[idx, 8], spheres[idx, 9]
        rgb[0] += tr * er
        rgb[1] += tg * eg
        rgb[2] += tb * eb
        if bounce == depth:
            break
        tr *= ar
        tg *= ag
        tb *= ab
        if tr == 0.0 and tg == 0.0 and tb == 0.0:
            break
        inv = 1.0 / math.sqrt(nx * nx + ny * ny + nz * nz)
        nx *= inv
        ny *= inv
        nz *= inv
        if nx * dx + ny * dy + nz * dz > 0.0:
            nx, ny, nz = -nx, -ny, -nz
        lx, ly = _concentric(u[2 + 2 * bounce], u[3 + 2 * bounce])
        lz = math.sqrt(max(0.0, 1.0 - lx * lx - ly * ly))
        sign = 1.0 if nz >= 0.0 else -1.0
        a = -1.0 / (sign + nz)
        b = nx * ny * a
        t1x, t1y, t1z = 1.0 + sign * nx * nx * a, sign * b, -sign * nx
        t2x, t2y, t2z = b, sign + ny * ny * a, -ny
        dx = lx * t1x + ly * t2x + lz * nx
        dy = lx * t1y + ly * t2y + lz * ny
        dz = lx * t1z + ly * t2z + lz * nz
        ox = hx + OFFSET * nx
        oy = hy + OFFSET * ny
        oz = hz + OFFSET * nz


# ---------------------------------------------------------------- numpy batch


def _concentric_np(a, b):
    a = 2.0 * a - 1.0
    b = 2.0 * b - 1.0
    use_a = np.abs(a) > np.abs(b)
    zero = (a == 0.0) & (b == 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi_a = 0.25 * np.pi * (b / a)
        phi_b = 0.5 * np.pi - 0.25 * np.pi * (a / b)
    r = np.where(use_a, a, b)
    phi = np.where(use_a, phi_a, phi_b)
    r = np.where(zero, 0.0, r)
    phi = np.where(zero, 0.0, phi)
    return r * np.cos(phi), r * np.sin(phi)


def _intersect_np(quads, spheres, o, d):
    n = o.shape[0]
    best = np.full(n, INF)
    kind = np.full(n, -1, dtype=np.int64)
    idx = np.full(n, -1, dtype=np.int64)
    for q in range(quads.shape[0]):
        org, e1, e2 = quads[q, 0:3], quads[q, 3:6], quads[q, 6:9]
        nrm = np.cross(e1, e2)
        den = d @ nrm
        ok = np.abs(den) >= 1e-14
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((org - o) @ nrm) / den
        ok &= (t > T_MIN) & (t < best)
        h = o + t[:, None] * d - org
        nn = nrm @ nrm
        a = np.cross(h, e2) @ nrm / nn
        b = np.cross(e1, h) @ nrm / nn
        ok &= (a >= 0.0) & (a <= 1.0) & (b >= 0.0) & (b <= 1.0)
        best = np.where(ok, t, best)
        kind = np.where(ok, 0, kind)
        idx = np.where(ok, q, idx)
    for s in range(spheres.shape[0]):
        c = o - spheres[s, 0:3]
        r = spheres[s, 3]
        bb = np.einsum("ij,ij->i", c, d)
        cc = np.einsum("ij,ij->i", c, c) - r * r
        disc = bb * bb - cc
        sq = np.sqrt(np.maximum(disc, 0.0))
        t = -bb - sq
        t = np.where(t <= T_MIN, -bb + sq, t)
        ok = (disc >= 0.0) & (t > T_MIN) & (t < best)
        best = np.where(ok, t, best)
        kind = np.where(ok, 1, kind)
        idx = np.where(ok, s, idx)
    return best, kind, idx


def trace_batch(quads, spheres, cam, ip, U):
    """RGB contributions ``(n, 3)`` for a batch of primary-sample-space points."""
    U = np.atleast_2d(np.asarray(U, dtype=np.float64))
    n = U.shape[0]
    depth = int(ip[2])
    rgb = np.zeros((n, 3))
    sx = 2.0 * U[:, 0] - 1.0
    sy = 1.0 - 2.0 * U[:, 1]
    d = cam[3:6] + sx[:, None] * cam[6:9] + sy[:, None] * cam[9:12]
    d = d / np.sqrt(np.einsum("ij,ij->i", d, d))[:, None]
    o = np.broadcast_to(cam[0:3], (n, 3)).copy()
    thr = np.ones((n, 3))
    alive = np.ones(n, dtype=bool)
    quad_n = np.cross(quads[:, 3:6], quads[:, 6:9]) if quads.shape[0] else np.zeros((0, 3))
    for bounce in range(depth + 1):
        act = np.flatnonzero(alive)
        if act.size == 0:
            break
        t, kind, idx = _intersect_np(quads, spheres, o[act], d[act])
        hit = kind >= 0
        alive[act[~hit]] = False
        act, t, kind, idx = act[hit], t[hit], kind[hit], idx[hit]
        h = o[act] + t[:, None] * d[act]
        is_q = kind == 0
        qi = np.where(is_q, idx, 0)
        si = np.where(is_q, 0, idx)
        if quads.shape[0]:
            nq = quad_n[qi]
            aq, eq = quads[qi, 9:12], quads[qi, 12:15]
        else:
            nq = aq = eq = np.zeros((act.size, 3))
        if spheres.shape[0]:
            ns = h - spheres[si, 0:3]
            as_, es = spheres[si, 4:7], spheres[si, 7:10]
        else:
            ns = as_ = es = np.zeros((act.size, 3))
        nrm = np.where(is_q[:, None], nq, ns)
        alb = np.where(is_q[:, None], aq, as_)
        emi = np.where(is_q[:, None], eq, es)
        rgb[act] += thr[act] * emi
        if bounce == depth:
            break
        thr[act] *= alb
        dead = np.all(thr[act] == 0.0, axis=1)
        alive[act[dead]] = False
        keep = ~dead
        act, h, nrm = act[keep], h[keep], nrm[keep]
        nrm = nrm / np.sqrt(np.einsum("ij,ij->i", nrm, nrm))[:, None]
        flip = np.einsum("ij,ij->i", nrm, d[act]) > 0.0
        nrm[flip] = -nrm[flip]
        lx, ly = _concentric_np(U[act, 2 + 2 * bounce], U[act, 3 + 2 * bounce])
        lz = np.sqrt(np.maximum(0.0, 1.0 - lx * lx - ly * ly))
        nx, ny, nz = nrm[:, 0], nrm[:, 1], nrm[:, 2]
        sign = np.where(nz >= 0.0, 1.0, -1.0)
        a = -1.0 / (sign + nz)
        b = nx * ny * a
        t1 = np.stack([1.0 + sign * nx * nx * a, sign * b, -sign * nx], axis=1)
        t2 = np.stack([b, sign + ny * ny * a, -ny], axis=1)
        d[act] = lx[:, None] * t1 + ly[:, None] * t2 + lz[:, None] * nrm
        o[act] = h + OFFSET * nrm
    return rgb
