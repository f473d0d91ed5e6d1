"""Pure numpy implementation of the coordinate-descent kernels.

Used when the compiled ``_cd_core`` extension is unavailable.  Same
arithmetic as the extension, vectorised over observations and candidates.
"""

import numpy as np

CANCEL = 1e-6


def _term(d, nn, s, rho_u, fb_u, var):
    den = rho_u + d
    den = np.where(den <= 0.0, fb_u, den)
    inv = 1.0 / den
    g = nn * inv
    return (2.0 * s - 2.0 * var * d) * inv - g * g


def accumulate(x1, x2, t1, t2, a1, a2, D, N, S):
    n = x1.shape[0]
    block = max(1, (1 << 20) // max(n, 1))
    for start in range(0, n, block):
        rows = slice(start, min(n, start + block))
        w = t1[None, :] - x1[rows, None]
        dz = x2[rows, None] - t2[None, :]
        u = np.exp(-a1 * w * w - a2 * dz * dz)
        D[rows] = u.sum(axis=1)
        N[rows] = (w * u).sum(axis=1)
        S[rows] = (w * w * u).sum(axis=1)


def update_block(dim, x1, x2, t1, t2, a1, a2, var, rho_u, fb_u, sd, offsets, order,
                 D, N, S, tol_factor):
    n = x1.shape[0]
    moves = 0
    for j in range(n):
        xj = x1[j] if dim == 1 else x2[j]
        cand = xj + sd * offsets
        w_old = t1[j] - x1
        dz_old = x2 - t2[j]
        u_old = np.exp(-a1 * w_old * w_old - a2 * dz_old * dz_old)
        dm = D - u_old
        nm = N - w_old * u_old
        sm = S - w_old * w_old * u_old
        bad = np.flatnonzero(dm < CANCEL * D)
        if bad.size:
            w = t1[None, :] - x1[bad, None]
            dz = x2[bad, None] - t2[None, :]
            u = np.exp(-a1 * w * w - a2 * dz * dz)
            u[:, j] = 0.0
            dm[bad] = u.sum(axis=1)
            nm[bad] = (w * u).sum(axis=1)
            sm[bad] = (w * w * u).sum(axis=1)
        tinc = _term(dm + u_old, nm + w_old * u_old, sm + w_old * w_old * u_old,
                     rho_u, fb_u, var).sum()
        if dim == 1:
            w = cand[None, :] - x1[:, None]
            u = np.exp(-a1 * w * w - (a2 * dz_old * dz_old)[:, None])
            totals = _term(dm[:, None] + u, nm[:, None] + w * u, sm[:, None] + w * w * u,
                           rho_u, fb_u, var).sum(axis=0)
        else:
            dz = x2[:, None] - cand[None, :]
            u = np.exp(-(a1 * w_old * w_old)[:, None] - a2 * dz * dz)
            ww = (w_old * w_old)[:, None]
            totals = _term(dm[:, None] + u, nm[:, None] + w_old[:, None] * u,
                           sm[:, None] + ww * u, rho_u, fb_u, var).sum(axis=0)
        ranked = totals[order]
        best = order[int(np.argmin(ranked))]
        tol = tol_factor * (n * var + abs(n * var + tinc))
        if totals[best] < tinc - tol:
            if dim == 1:
                t1[j] = cand[best]
            else:
                t2[j] = cand[best]
            w = t1[j] - x1
            dz = x2 - t2[j]
            u = np.exp(-a1 * w * w - a2 * dz * dz)
            D[:] = dm + u
            N[:] = nm + w * u
            S[:] = sm + w * w * u
            moves += 1
    return moves
