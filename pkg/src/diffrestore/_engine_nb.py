"""Numba block kernels for the sampling drivers.

Each kernel advances a contiguous block of chains (or pixels) and writes into
block-private buffers.  Within a block the loop order is round-major, chain
minor, which the numpy engine reproduces; blocks never share state.
"""

import math

import numpy as np

from ._backend import njit
from .dynamics import langevin_point, proposal_logq, propose_point
from .rng import TAG_CHAIN, TAG_PIXEL, uniform_pair
from .targets import EPS, eval_point, score_point

DYN_LANGEVIN = 0
DYN_METROPOLIS = 1
DYN_MALA = 2

ONE = np.uint64(1)

# counts layout
C_TOURS = 0
C_STEPS = 1
C_ACCEPTED = 2
C_PROPOSED = 3
C_LOCAL = 4
C_LEN_SUM = 5  # local steps summed over completed tours
N_COUNTS = 6


@njit
def _pixel(x0, x1, width, height):
    px = int(x0 * width)
    if px >= width:
        px = width - 1
    py = int(x1 * height)
    if py >= height:
        py = height - 1
    return py * width + px


@njit
def restore_block(pk, d, dyn, stddev, c_tilde, large_p, lam, kappa0, seed, frame,
                  chain_lo, chain_hi, rounds, buf, hist, counts):
    n = chain_hi - chain_lo
    width = pk[5][0]
    height = pk[5][1]
    npix = float(width * height)
    k1 = np.uint64(seed & 0xFFFFFFFF)
    fr = np.uint64(frame)
    tag = np.uint64(TAG_CHAIN)
    nh = hist.shape[0]
    h = 0.5 * stddev * stddev

    X = np.zeros((n, d))
    S = np.zeros((n, d))
    sok = np.zeros(n, dtype=np.bool_)
    P = np.zeros(n)
    RGB = np.zeros((n, 3))
    killed = np.ones(n, dtype=np.bool_)
    ctr = np.zeros(n, dtype=np.uint64)
    tl = np.zeros(n, dtype=np.int64)
    y = np.zeros(d)
    sy = np.zeros(d)
    drift = np.zeros(d)
    work = np.zeros(d)
    rgb_y = np.zeros(3)
    tmp = np.zeros(3)

    for r in range(rounds):
        for c in range(n):
            k0 = np.uint64(chain_lo + c)
            cc = ctr[c]
            x = X[c]
            if killed[c]:
                for b in range(d // 2):
                    u0, u1 = uniform_pair(k0, k1, fr, tag, cc)
                    cc += ONE
                    x[2 * b] = u0
                    x[2 * b + 1] = u1
                P[c] = eval_point(pk, x, RGB[c])
                sok[c] = False
                tl[c] = 0
            else:
                if dyn == DYN_LANGEVIN:
                    score_point(pk, x, S[c], work, tmp)
                    cc = langevin_point(x, S[c], stddev, c_tilde, k0, k1, fr, tag, cc)
                    P[c] = eval_point(pk, x, RGB[c])
                else:
                    cc = _mh_move(pk, d, dyn, stddev, h, large_p, x, S[c], sok, c, P, RGB,
                                  y, sy, drift, work, rgb_y, tmp, k0, k1, fr, tag, cc, counts)
                tl[c] += 1
                counts[C_LOCAL] += 1
            # accumulate: race of holding and killing clocks
            u1, u2 = uniform_pair(k0, k1, fr, tag, cc)
            cc += ONE
            ctr[c] = cc
            p = P[c]
            t1 = -math.log1p(-u1) / lam
            kap = kappa0 / (p + EPS)
            t2 = -math.log1p(-u2) / kap
            counts[C_STEPS] += 1
            if t1 < t2:
                dtau = t1
                killed[c] = False
            else:
                dtau = t2
                killed[c] = True
                counts[C_TOURS] += 1
                counts[C_LEN_SUM] += tl[c]
                j = tl[c]
                if j >= nh:
                    j = nh - 1
                hist[j] += 1
            if p > 0.0:
                pix = _pixel(x[0], x[1], width, height)
                w = dtau * npix
                for ch in range(3):
                    buf[pix, ch] += w * (RGB[c, ch] / p)


@njit
def _mh_move(pk, d, dyn, stddev, h, large_p, x, s, sok, c, P, RGB,
             y, sy, drift, work, rgb_y, tmp, k0, k1, fr, tag, cc, counts):
    """One Metropolis or MALA transition of chain ``c`` in place."""
    if dyn == DYN_MALA and not sok[c]:
        score_point(pk, x, s, work, tmp)
        sok[c] = True
    u_large, u_acc = uniform_pair(k0, k1, fr, tag, cc)
    cc += ONE
    large = u_large < large_p
    for i in range(d):
        drift[i] = h * s[i] if dyn == DYN_MALA else 0.0
    cc = propose_point(x, drift, y, large, stddev, k0, k1, fr, tag, cc)
    py = eval_point(pk, y, rgb_y)
    px = P[c]
    counts[C_PROPOSED] += 1
    if dyn == DYN_METROPOLIS:
        accept = u_acc * (px + EPS) < py + EPS
    else:
        lr = math.log(py + EPS) - math.log(px + EPS)
        if not large:
            score_point(pk, y, sy, work, tmp)
            fwd = proposal_logq(x, drift, y, stddev)
            for i in range(d):
                work[i] = h * sy[i]
            bwd = proposal_logq(y, work, x, stddev)
            lr += bwd - fwd
        accept = math.log1p(-u_acc) < lr
    if accept:
        counts[C_ACCEPTED] += 1
        for i in range(d):
            x[i] = y[i]
        P[c] = py
        for ch in range(3):
            RGB[c, ch] = rgb_y[ch]
        if dyn == DYN_MALA:
            if large:
                sok[c] = False
            else:
                for i in range(d):
                    s[i] = sy[i]
    return cc


@njit
def mcmc_block(pk, d, dyn, stddev, large_p, seed, frame, chain_lo, chain_hi, steps,
               boot_x, boot_cdf, buf, counts):
    """Plain MH chains; ``buf`` collects ``f / p`` per visited state with ``p > 0``."""
    n = chain_hi - chain_lo
    width = pk[5][0]
    height = pk[5][1]
    k1 = np.uint64(seed & 0xFFFFFFFF)
    fr = np.uint64(frame)
    tag = np.uint64(TAG_CHAIN)
    h = 0.5 * stddev * stddev
    X = np.zeros((n, d))
    S = np.zeros((n, d))
    sok = np.zeros(n, dtype=np.bool_)
    P = np.zeros(n)
    RGB = np.zeros((n, 3))
    ctr = np.zeros(n, dtype=np.uint64)
    y = np.zeros(d)
    sy = np.zeros(d)
    drift = np.zeros(d)
    work = np.zeros(d)
    rgb_y = np.zeros(3)
    tmp = np.zeros(3)
    total = boot_cdf[boot_cdf.shape[0] - 1]
    for c in range(n):
        k0 = np.uint64(chain_lo + c)
        u0, _ = uniform_pair(k0, k1, fr, tag, ctr[c])
        ctr[c] += ONE
        j = np.searchsorted(boot_cdf, u0 * total, side="right")
        if j >= boot_cdf.shape[0]:
            j = boot_cdf.shape[0] - 1
        for i in range(d):
            X[c, i] = boot_x[j, i]
        P[c] = eval_point(pk, X[c], RGB[c])
    for r in range(steps):
        for c in range(n):
            k0 = np.uint64(chain_lo + c)
            x = X[c]
            ctr[c] = _mh_move(pk, d, dyn, stddev, h, large_p, x, S[c], sok, c, P, RGB,
                              y, sy, drift, work, rgb_y, tmp, k0, k1, fr, tag, ctr[c], counts)
            counts[C_STEPS] += 1
            p = P[c]
            if p > 0.0:
                pix = _pixel(x[0], x[1], width, height)
                for ch in range(3):
                    buf[pix, ch] += RGB[c, ch] / p


@njit
def pt_block(pk, d, seed, frame, pix_lo, pix_hi, spp, buf, buf_sq):
    """Pixel-stratified independent sampling; block-local sums of f and f^2."""
    width = pk[5][0]
    height = pk[5][1]
    k1 = np.uint64(seed & 0xFFFFFFFF)
    fr = np.uint64(frame)
    tag = np.uint64(TAG_PIXEL)
    x = np.zeros(d)
    rgb = np.zeros(3)
    for j in range(pix_lo, pix_hi):
        k0 = np.uint64(j)
        cc = np.uint64(0)
        px = j % width
        py = j // width
        for s in range(spp):
            u0, u1 = uniform_pair(k0, k1, fr, tag, cc)
            cc += ONE
            x[0] = (px + u0) / width
            x[1] = (py + u1) / height
            for b in range(1, d // 2):
                u0, u1 = uniform_pair(k0, k1, fr, tag, cc)
                cc += ONE
                x[2 * b] = u0
                x[2 * b + 1] = u1
            eval_point(pk, x, rgb)
            for ch in range(3):
                buf[j - pix_lo, ch] += rgb[ch]
                buf_sq[j - pix_lo, ch] += rgb[ch] * rgb[ch]
