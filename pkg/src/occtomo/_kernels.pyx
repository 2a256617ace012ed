# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: ray traversal and the per-ray forward/Jacobian sweeps.

Mirrors ``_pykernels`` entry point for entry point.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, floor, sqrt

cnp.import_array()

cdef double MIN_LENGTH = 1e-12


cdef inline void _slab(double a, double d, double lo, double hi,
                       double* tmin, double* tmax) noexcept nogil:
    cdef double t1, t2, tmp
    if d != 0.0:
        t1 = (lo - a) / d
        t2 = (hi - a) / d
        if t1 > t2:
            tmp = t1
            t1 = t2
            t2 = tmp
        if t1 > tmin[0]:
            tmin[0] = t1
        if t2 < tmax[0]:
            tmax[0] = t2
    elif a < lo or a > hi:
        tmin[0] = 1.0
        tmax[0] = 0.0


cdef inline Py_ssize_t _clampi(Py_ssize_t i, Py_ssize_t hi) noexcept nogil:
    if i < 0:
        return 0
    if i > hi:
        return hi
    return i


def trace_batch(double[::1] ax, double[::1] ay, double[::1] bx, double[::1] by,
                Py_ssize_t nx, Py_ssize_t ny, double x0, double y0, double ps):
    cdef Py_ssize_t n = ax.shape[0]
    cdef Py_ssize_t cap = nx + ny + 2
    cdef cnp.int64_t[::1] indptr = np.zeros(n + 1, dtype=np.int64)
    pix_arr = np.empty(max(n * cap, 1), dtype=np.int64)
    len_arr = np.empty(max(n * cap, 1), dtype=np.float64)
    cdef cnp.int64_t[::1] pix = pix_arr
    cdef double[::1] lens = len_arr
    cdef double xmax = x0 + nx * ps
    cdef double ymax = y0 + ny * ps
    cdef Py_ssize_t r, pos = 0, ix, iy, p, i_x, i_y, step_x, step_y, end_x, end_y
    cdef double dx, dy, norm, tmin, tmax, tcur, tnext, tx, ty, seg, tm
    cdef bint has_x, has_y
    with nogil:
        for r in range(n):
            indptr[r] = pos
            dx = bx[r] - ax[r]
            dy = by[r] - ay[r]
            norm = sqrt(dx * dx + dy * dy)
            tmin = 0.0
            tmax = 1.0
            _slab(ax[r], dx, x0, xmax, &tmin, &tmax)
            _slab(ay[r], dy, y0, ymax, &tmin, &tmax)
            if tmax <= tmin:
                continue
            # grid-line indices walked in the direction of travel
            if dx > 0:
                i_x, step_x, end_x = 0, 1, nx + 1
            else:
                i_x, step_x, end_x = nx, -1, -1
            if dy > 0:
                i_y, step_y, end_y = 0, 1, ny + 1
            else:
                i_y, step_y, end_y = ny, -1, -1
            has_x = dx != 0.0
            has_y = dy != 0.0
            tcur = tmin
            while True:
                tx = 2.0
                while has_x and i_x != end_x:
                    tx = (x0 + ps * i_x - ax[r]) / dx
                    if tx > tcur:
                        break
                    i_x += step_x
                    tx = 2.0
                ty = 2.0
                while has_y and i_y != end_y:
                    ty = (y0 + ps * i_y - ay[r]) / dy
                    if ty > tcur:
                        break
                    i_y += step_y
                    ty = 2.0
                tnext = tmax
                if tx < tnext:
                    tnext = tx
                if ty < tnext:
                    tnext = ty
                seg = (tnext - tcur) * norm / ps
                if seg > MIN_LENGTH:
                    tm = 0.5 * (tcur + tnext)
                    ix = _clampi(<Py_ssize_t>floor((ax[r] + tm * dx - x0) / ps), nx - 1)
                    iy = _clampi(<Py_ssize_t>floor((ay[r] + tm * dy - y0) / ps), ny - 1)
                    p = iy * nx + ix
                    if pos > indptr[r] and pix[pos - 1] == p:
                        lens[pos - 1] += seg
                    else:
                        pix[pos] = p
                        lens[pos] = seg
                        pos += 1
                if tnext >= tmax:
                    break
                tcur = tnext
        indptr[n] = pos
    return np.asarray(indptr), pix_arr[:pos].copy(), len_arr[:pos].copy()


def ray_tau(cnp.int64_t[::1] indptr, cnp.int64_t[::1] pix, double[::1] weight,
            double[::1] expo, double[::1] own, double[::1] loga, double[::1] logs):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    out = np.empty(pix.shape[0], dtype=np.float64)
    cdef double[::1] tau = out
    cdef Py_ssize_t k, m, j
    cdef double acc, la
    with nogil:
        for k in range(n):
            acc = 0.0
            m = indptr[k + 1] - 1
            while m >= indptr[k]:
                j = pix[m]
                la = loga[j]
                tau[m] = weight[m] * exp(acc + own[m] * la + logs[j])
                acc = acc + expo[m] * la
                m -= 1
    return out


def ray_sum(cnp.int64_t[::1] indptr, double[::1] tau):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] b = out
    cdef Py_ssize_t k, m
    cdef double acc
    with nogil:
        for k in range(n):
            acc = 0.0
            for m in range(indptr[k], indptr[k + 1]):
                acc = acc + tau[m]
            b[k] = acc
    return out


def ray_jvp(cnp.int64_t[::1] indptr, cnp.int64_t[::1] pix, double[::1] expo,
            double[::1] own, double[::1] tau, double[::1] ra, double[::1] rs):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    result = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = result
    cdef Py_ssize_t k, m, j
    cdef double acc, tot
    with nogil:
        for k in range(n):
            acc = 0.0
            tot = 0.0
            m = indptr[k + 1] - 1
            while m >= indptr[k]:
                j = pix[m]
                tot = tot + tau[m] * (rs[j] + own[m] * ra[j] + acc)
                acc = acc + expo[m] * ra[j]
                m -= 1
            out[k] = tot
    return result


def ray_vjp(cnp.int64_t[::1] indptr, cnp.int64_t[::1] pix, double[::1] expo,
            double[::1] own, double[::1] tau, double[::1] w, Py_ssize_t n_pixels):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    ga_arr = np.zeros(n_pixels, dtype=np.float64)
    gs_arr = np.zeros(n_pixels, dtype=np.float64)
    cdef double[::1] ga = ga_arr
    cdef double[::1] gs = gs_arr
    cdef Py_ssize_t k, m, j
    cdef double wk, pre, wt
    with nogil:
        for k in range(n):
            wk = w[k]
            if wk == 0.0:
                continue
            pre = 0.0
            for m in range(indptr[k], indptr[k + 1]):
                j = pix[m]
                wt = wk * tau[m]
                gs[j] += wt
                ga[j] += own[m] * wt + expo[m] * pre
                pre = pre + wt
    return ga_arr, gs_arr
