# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled coordinate-descent kernels.

Densities are kept unnormalised, ``u_ij = exp(-a1 w^2 - a2 dz^2)``, i.e. shifted
by the log of the kernel's mode.  The caller rescales ``rho`` accordingly.
Per observation ``i`` three sums are cached::

    D[i] = sum_j u_ij,  N[i] = sum_j w_ij u_ij,  S[i] = sum_j w_ij^2 u_ij

with ``w_ij = t1[j] - x1[i]``.  Must stay in step with ``_cd_py``.
"""

from libc.math cimport exp, fabs
from libc.stdlib cimport free, malloc

# below this fraction of D[i] the subtract-and-add update loses too many digits
cdef double CANCEL = 1e-6


cdef inline double _term(double d, double nn, double s, double rho_u, double fb_u,
                         double var) noexcept nogil:
    cdef double den = rho_u + d
    cdef double inv, g
    den = fb_u if den <= 0.0 else den
    inv = 1.0 / den
    g = nn * inv
    return (2.0 * s - 2.0 * var * d) * inv - g * g


cdef inline void _grid_kernel(const double *cand, Py_ssize_t K, double x, double a,
                              double q, double step, double *u) noexcept nogil:
    """u[k] = exp(-a (cand[k] - x)^2 - q) on an evenly spaced grid.

    Three exp calls: the value at the candidate nearest ``x`` and the first
    ratio in each direction.  Successive ratios shrink by exp(-2 a step^2),
    and the walk moves away from the peak so values only decrease and
    underflow harmlessly to zero.
    """
    cdef Py_ssize_t peak, k
    cdef double w, r, shrink
    if x <= cand[0]:
        peak = 0
    elif x >= cand[K - 1]:
        peak = K - 1
    else:
        peak = <Py_ssize_t> ((x - cand[0]) / step + 0.5)
        if peak > K - 1:
            peak = K - 1
    w = cand[peak] - x
    u[peak] = exp(-a * w * w - q)
    shrink = exp(-2.0 * a * step * step)
    r = exp(-a * step * (2.0 * w + step))
    for k in range(peak + 1, K):
        u[k] = u[k - 1] * r
        r *= shrink
    r = exp(-a * step * (step - 2.0 * w))
    for k in range(peak - 1, -1, -1):
        u[k] = u[k + 1] * r
        r *= shrink


def accumulate(const double[::1] x1, const double[::1] x2, const double[::1] t1,
               const double[::1] t2, double a1, double a2,
               double[::1] D, double[::1] N, double[::1] S):
    cdef Py_ssize_t n = x1.shape[0]
    cdef Py_ssize_t i, j
    cdef double w, dz, u, dd, nn, ss
    with nogil:
        for i in range(n):
            dd = 0.0
            nn = 0.0
            ss = 0.0
            for j in range(n):
                w = t1[j] - x1[i]
                dz = x2[i] - t2[j]
                u = exp(-a1 * w * w - a2 * dz * dz)
                dd += u
                nn += w * u
                ss += w * w * u
            D[i] = dd
            N[i] = nn
            S[i] = ss


def update_block(int dim, const double[::1] x1, const double[::1] x2,
                 double[::1] t1, double[::1] t2, double a1, double a2, double var,
                 double rho_u, double fb_u, double sd, const double[::1] offsets,
                 const Py_ssize_t[::1] order, double[::1] D, double[::1] N,
                 double[::1] S, double tol_factor):
    """Update t1[0..n) (dim 1) or t2[0..n) (dim 2) in index order; return the move count."""
    cdef Py_ssize_t n = x1.shape[0]
    cdef Py_ssize_t K = offsets.shape[0]
    cdef Py_ssize_t i, j, jj, k, best, idx
    cdef int moves = 0
    cdef double step, xj, w_old, dz_old, u_old, dm, nm, sm, tinc, q, w, dz, u, newval, tol, ww
    cdef double *cand = <double *> malloc(K * sizeof(double))
    cdef double *totals = <double *> malloc(K * sizeof(double))
    cdef double *ubuf = <double *> malloc(K * sizeof(double))
    cdef double *Dm = <double *> malloc(n * sizeof(double))
    cdef double *Nm = <double *> malloc(n * sizeof(double))
    cdef double *Sm = <double *> malloc(n * sizeof(double))
    if cand == NULL or totals == NULL or ubuf == NULL or Dm == NULL or Nm == NULL or Sm == NULL:
        free(cand); free(totals); free(ubuf); free(Dm); free(Nm); free(Sm)
        raise MemoryError()
    try:
        with nogil:
            for j in range(n):
                xj = x1[j] if dim == 1 else x2[j]
                step = sd * (offsets[1] - offsets[0])
                for k in range(K):
                    cand[k] = xj + sd * offsets[k]
                    totals[k] = 0.0
                tinc = 0.0
                for i in range(n):
                    w_old = t1[j] - x1[i]
                    dz_old = x2[i] - t2[j]
                    u_old = exp(-a1 * w_old * w_old - a2 * dz_old * dz_old)
                    dm = D[i] - u_old
                    nm = N[i] - w_old * u_old
                    sm = S[i] - w_old * w_old * u_old
                    if dm < CANCEL * D[i]:
                        dm = 0.0
                        nm = 0.0
                        sm = 0.0
                        for jj in range(n):
                            if jj == j:
                                continue
                            w = t1[jj] - x1[i]
                            dz = x2[i] - t2[jj]
                            u = exp(-a1 * w * w - a2 * dz * dz)
                            dm += u
                            nm += w * u
                            sm += w * w * u
                    Dm[i] = dm
                    Nm[i] = nm
                    Sm[i] = sm
                    tinc += _term(dm + u_old, nm + w_old * u_old,
                                  sm + w_old * w_old * u_old, rho_u, fb_u, var)
                    if dim == 1:
                        q = a2 * dz_old * dz_old
                        _grid_kernel(cand, K, x1[i], a1, q, step, ubuf)
                        for k in range(K):
                            w = cand[k] - x1[i]
                            totals[k] += _term(dm + ubuf[k], nm + w * ubuf[k],
                                               sm + w * w * ubuf[k], rho_u, fb_u, var)
                    else:
                        q = a1 * w_old * w_old
                        ww = w_old * w_old
                        _grid_kernel(cand, K, x2[i], a2, q, step, ubuf)
                        for k in range(K):
                            totals[k] += _term(dm + ubuf[k], nm + w_old * ubuf[k],
                                               sm + ww * ubuf[k], rho_u, fb_u, var)
                best = order[0]
                for idx in range(1, K):
                    k = order[idx]
                    if totals[k] < totals[best]:
                        best = k
                tol = tol_factor * (n * var + fabs(n * var + tinc))
                if totals[best] < tinc - tol:
                    newval = cand[best]
                    if dim == 1:
                        t1[j] = newval
                    else:
                        t2[j] = newval
                    for i in range(n):
                        w = t1[j] - x1[i]
                        dz = x2[i] - t2[j]
                        u = exp(-a1 * w * w - a2 * dz * dz)
                        D[i] = Dm[i] + u
                        N[i] = Nm[i] + w * u
                        S[i] = Sm[i] + w * w * u
                    moves += 1
    finally:
        free(cand)
        free(totals)
        free(ubuf)
        free(Dm)
        free(Nm)
        free(Sm)
    return moves
