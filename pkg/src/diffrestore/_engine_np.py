"""Vectorized numpy twin of the numba block kernels.

All chains advance together, one round at a time, and contributions are
scattered into per-block buffers with ``np.add.at`` (which applies updates in
index order), so each block buffer sees the same summation order as the numba
kernel.  Arithmetic mirrors the kernels expression by expression; results
agree up to libm rounding differences.
"""

import numpy as np

from ._engine_nb import (C_ACCEPTED, C_LEN_SUM, C_LOCAL, C_PROPOSED, C_STEPS, C_TOURS, DYN_LANGEVIN,
                         DYN_MALA, DYN_METROPOLIS, N_COUNTS)
from .dynamics import rotate
from .rng import TAG_CHAIN, TAG_PIXEL, CounterRNG
from .targets import EPS, _wrap_np, eval_batch, pixel_index, score_batch


def _logq(frm, drift, to, stddev):
    dd = _wrap_np(to - (frm + drift) + 0.5) - 0.5
    return -0.5 * np.sum(dd * dd, axis=1) / (stddev * stddev)


def _mh_move(pk, dyn, stddev, large_p, X, S, sok, P, RGB, idx, rng, blk, counts):
    """Metropolis / MALA transition for chains ``idx`` (in place)."""
    n, d = idx.shape[0], X.shape[1]
    if n == 0:
        return
    sub = rng.subset(idx)
    x = X[idx]
    h = 0.5 * stddev * stddev
    if dyn == DYN_MALA:
        need = idx[~sok[idx]]
        if need.size:
            S[need] = score_batch(pk, X[need])
            sok[need] = True
        drift = h * S[idx]
    else:
        drift = np.zeros((n, d))
    u_large, u_acc = sub.uniform_pair()
    large = u_large < large_p
    y = np.empty((n, d))
    for b in range(d // 2):
        u0, u1 = sub.uniform_pair()
        r = np.sqrt(-2.0 * np.log1p(-u0))
        t = 2.0 * np.pi * u1
        s0 = _wrap_np(x[:, 2 * b] + drift[:, 2 * b] + stddev * (r * np.cos(t)))
        s1 = _wrap_np(x[:, 2 * b + 1] + drift[:, 2 * b + 1] + stddev * (r * np.sin(t)))
        y[:, 2 * b] = np.where(large, u0, s0)
        y[:, 2 * b + 1] = np.where(large, u1, s1)
    rng.merge(idx, sub)
    rgb_y, py = eval_batch(pk, y)
    px = P[idx]
    np.add.at(counts, (blk[idx], C_PROPOSED), 1)
    if dyn == DYN_METROPOLIS:
        accept = u_acc * (px + EPS) < py + EPS
    else:
        lr = np.log(py + EPS) - np.log(px + EPS)
        small = ~large
        sy = np.zeros((n, d))
        if np.any(small):
            sy[small] = score_batch(pk, y[small])
            fwd = _logq(x[small], drift[small], y[small], stddev)
            bwd = _logq(y[small], h * sy[small], x[small], stddev)
            lr[small] += bwd - fwd
        accept = np.log1p(-u_acc) < lr
    acc = idx[accept]
    np.add.at(counts, (blk[acc], C_ACCEPTED), 1)
    X[acc] = y[accept]
    P[acc] = py[accept]
    RGB[acc] = rgb_y[accept]
    if dyn == DYN_MALA:
        sok[acc] = ~large[accept]
        keep = accept & ~large
        S[idx[keep]] = sy[keep]


def restore(pk, d, dyn, stddev, c_tilde, large_p, lam, kappa0, seed, frame,
            n_chains, block, rounds, nbins):
    width, height = int(pk[5][0]), int(pk[5][1])
    npix = float(width * height)
    nblocks = -(-n_chains // block)
    blk = np.arange(n_chains) // block
    bufs = np.zeros((nblocks, width * height, 3))
    hist = np.zeros((nblocks, nbins), dtype=np.int64)
    counts = np.zeros((nblocks, N_COUNTS), dtype=np.int64)
    rng = CounterRNG.streams(n_chains, seed, frame, TAG_CHAIN)
    X = np.zeros((n_chains, d))
    S = np.zeros((n_chains, d))
    sok = np.zeros(n_chains, dtype=bool)
    P = np.zeros(n_chains)
    RGB = np.zeros((n_chains, 3))
    killed = np.ones(n_chains, dtype=bool)
    tl = np.zeros(n_chains, dtype=np.int64)
    h = 0.5 * stddev * stddev
    for _ in range(rounds):
        regen = np.flatnonzero(killed)
        if regen.size:
            sub = rng.subset(regen)
            X[regen] = sub.uniform(d)
            rng.merge(regen, sub)
            RGB[regen], P[regen] = eval_batch(pk, X[regen])
            sok[regen] = False
            tl[regen] = 0
        mov = np.flatnonzero(~killed)
        if mov.size:
            if dyn == DYN_LANGEVIN:
                s = score_batch(pk, X[mov])
                sub = rng.subset(mov)
                z = sub.normal(d)
                rng.merge(mov, sub)
                X[mov] = _wrap_np(X[mov] + h * s + rotate(s, c_tilde) + stddev * z)
                RGB[mov], P[mov] = eval_batch(pk, X[mov])
            else:
                _mh_move(pk, dyn, stddev, large_p, X, S, sok, P, RGB, mov, rng, blk, counts)
            tl[mov] += 1
            np.add.at(counts, (blk[mov], C_LOCAL), 1)
        u1, u2 = rng.uniform_pair()
        t1 = -np.log1p(-u1) / lam
        kap = kappa0 / (P + EPS)
        t2 = -np.log1p(-u2) / kap
        np.add.at(counts, (blk, C_STEPS), 1)
        survive = t1 < t2
        dtau = np.where(survive, t1, t2)
        killed = ~survive
        dead = np.flatnonzero(killed)
        np.add.at(counts, (blk[dead], C_TOURS), 1)
        np.add.at(counts, (blk[dead], C_LEN_SUM), tl[dead])
        np.add.at(hist, (blk[dead], np.minimum(tl[dead], nbins - 1)), 1)
        pos = np.flatnonzero(P > 0.0)
        if pos.size:
            pix = pixel_index(X[pos], width, height)
            w = dtau[pos] * npix
            contrib = w[:, None] * (RGB[pos] / P[pos][:, None])
            np.add.at(bufs, (blk[pos], pix), contrib)
    return bufs, hist, counts


def mcmc(pk, d, dyn, stddev, large_p, seed, frame, n_chains, block, steps, boot_x, boot_cdf):
    width, height = int(pk[5][0]), int(pk[5][1])
    nblocks = -(-n_chains // block)
    blk = np.arange(n_chains) // block
    bufs = np.zeros((nblocks, width * height, 3))
    counts = np.zeros((nblocks, N_COUNTS), dtype=np.int64)
    rng = CounterRNG.streams(n_chains, seed, frame, TAG_CHAIN)
    u0, _ = rng.uniform_pair()
    j = np.minimum(np.searchsorted(boot_cdf, u0 * boot_cdf[-1], side="right"), boot_cdf.shape[0] - 1)
    X = boot_x[j].copy()
    RGB, P = eval_batch(pk, X)
    S = np.zeros((n_chains, d))
    sok = np.zeros(n_chains, dtype=bool)
    idx = np.arange(n_chains)
    for _ in range(steps):
        _mh_move(pk, dyn, stddev, large_p, X, S, sok, P, RGB, idx, rng, blk, counts)
        np.add.at(counts, (blk, C_STEPS), 1)
        pos = np.flatnonzero(P > 0.0)
        pix = pixel_index(X[pos], width, height)
        np.add.at(bufs, (blk[pos], pix), RGB[pos] / P[pos][:, None])
    return bufs, counts


def path_tracing(pk, d, seed, frame, pix_lo, pix_hi, spp, chunk=1 << 16):
    """Sums of ``f`` and ``f^2`` for pixels ``[pix_lo, pix_hi)``."""
    width = int(pk[5][0])
    height = int(pk[5][1])
    pixels = np.arange(pix_lo, pix_hi)
    buf = np.zeros((pixels.size, 3))
    buf_sq = np.zeros((pixels.size, 3))
    rng = CounterRNG(pixels, seed, frame, TAG_PIXEL)
    px = (pixels % width).astype(np.float64)
    py = (pixels // width).astype(np.float64)
    rows = max(1, chunk // max(pixels.size, 1))
    # samples are generated pixel-major in the kernel; here sample-major in
    # chunks, then summed per pixel in sample order (same order per pixel)
    for s0 in range(0, spp, rows):
        ns = min(rows, spp - s0)
        X = np.empty((ns, pixels.size, d))
        for s in range(ns):
            u0, u1 = rng.uniform_pair()
            X[s, :, 0] = (px + u0) / width
            X[s, :, 1] = (py + u1) / height
            for b in range(1, d // 2):
                X[s, :, 2 * b], X[s, :, 2 * b + 1] = rng.uniform_pair()
        rgb, _ = eval_batch(pk, X.reshape(-1, d))
        rgb = rgb.reshape(ns, pixels.size, 3)
        for s in range(ns):
            buf += rgb[s]
            buf_sq += rgb[s] * rgb[s]
    return buf, buf_sq
