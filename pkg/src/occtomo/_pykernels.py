"""Pure numpy implementations of the hot kernels.

Same signatures and semantics as the compiled ``_kernels`` module; used when
the extension is not built or ``OCCTOMO_PURE_PYTHON`` is set.

Per-ray data is stored CSR style: ray ``k`` owns entries
``indptr[k]:indptr[k+1]`` ordered from the source end to the detector end.
"""
import numpy as np

# Segments shorter than this (pixel units) are zero-length ties.
MIN_LENGTH = 1e-12


def trace_batch(ax, ay, bx, by, nx, ny, x0, y0, ps):
    n = len(ax)
    xs = x0 + ps * np.arange(nx + 1)
    ys = y0 + ps * np.arange(ny + 1)
    xmax = x0 + nx * ps
    ymax = y0 + ny * ps
    counts = np.zeros(n, dtype=np.int64)
    pix_out, len_out = [], []
    for r in range(n):
        pix, lens = _trace_one(ax[r], ay[r], bx[r], by[r], nx, ny, x0, y0, ps, xs, ys, xmax, ymax)
        counts[r] = len(pix)
        pix_out.append(pix)
        len_out.append(lens)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    if n and indptr[-1]:
        return indptr, np.concatenate(pix_out).astype(np.int64), np.concatenate(len_out)
    return indptr, np.zeros(0, dtype=np.int64), np.zeros(0)


def _slab(a, d, lo, hi, tmin, tmax):
    if d != 0.0:
        t1 = (lo - a) / d
        t2 = (hi - a) / d
        if t1 > t2:
            t1, t2 = t2, t1
        return max(tmin, t1), min(tmax, t2)
    if a < lo or a > hi:
        return 1.0, 0.0
    return tmin, tmax


def _trace_one(ax, ay, bx, by, nx, ny, x0, y0, ps, xs, ys, xmax, ymax):
    empty = (np.zeros(0, dtype=np.int64), np.zeros(0))
    dx = bx - ax
    dy = by - ay
    norm = np.hypot(dx, dy)
    tmin, tmax = _slab(ax, dx, x0, xmax, 0.0, 1.0)
    tmin, tmax = _slab(ay, dy, y0, ymax, tmin, tmax)
    if tmax <= tmin:
        return empty
    parts = [np.array([tmin, tmax])]
    if dx != 0.0:
        tx = (xs - ax) / dx
        parts.append(tx[(tx > tmin) & (tx < tmax)])
    if dy != 0.0:
        ty = (ys - ay) / dy
        parts.append(ty[(ty > tmin) & (ty < tmax)])
    t = np.sort(np.concatenate(parts))
    t0 = t[:-1]
    t1 = t[1:]
    lens = (t1 - t0) * norm / ps
    keep = lens > MIN_LENGTH
    if not np.any(keep):
        return empty
    t0 = t0[keep]
    t1 = t1[keep]
    lens = lens[keep]
    tm = 0.5 * (t0 + t1)
    ix = np.clip(np.floor((ax + tm * dx - x0) / ps).astype(np.int64), 0, nx - 1)
    iy = np.clip(np.floor((ay + tm * dy - y0) / ps).astype(np.int64), 0, ny - 1)
    pix = iy * nx + ix
    if len(pix) > 1:
        new = np.concatenate([[True], pix[1:] != pix[:-1]])
        if not np.all(new):
            grp = np.cumsum(new) - 1
            lens = np.bincount(grp, weights=lens)
            pix = pix[new]
    return pix, lens


def _layout(indptr):
    counts = np.diff(indptr)
    n = len(counts)
    width = int(counts.max()) if n else 0
    ray_id = np.repeat(np.arange(n), counts)
    col = np.arange(int(indptr[-1])) - np.repeat(indptr[:-1], counts)
    return ray_id, col, (n, width)


def _padded(values, ray_id, col, shape):
    out = np.zeros(shape)
    out[ray_id, col] = values
    return out


def _suffix_excl(values, ray_id, col, shape):
    """Per-ray sum of ``values`` strictly after each entry."""
    m = _padded(values, ray_id, col, shape)
    rev = np.cumsum(m[:, ::-1], axis=1)[:, ::-1]
    return (rev - m)[ray_id, col]


def _prefix_excl(values, ray_id, col, shape):
    """Per-ray sum of ``values`` strictly before each entry."""
    m = _padded(values, ray_id, col, shape)
    return (np.cumsum(m, axis=1) - m)[ray_id, col]


def ray_tau(indptr, pix, weight, expo, own, loga, logs):
    ray_id, col, shape = _layout(indptr)
    la = loga[pix]
    after = _suffix_excl(expo * la, ray_id, col, shape)
    return weight * np.exp(after + own * la + logs[pix])


def ray_sum(indptr, tau):
    ray_id, _, shape = _layout(indptr)
    return np.bincount(ray_id, weights=tau, minlength=shape[0])


def ray_jvp(indptr, pix, expo, own, tau, ra, rs):
    ray_id, col, shape = _layout(indptr)
    r = ra[pix]
    after = _suffix_excl(expo * r, ray_id, col, shape)
    return np.bincount(ray_id, weights=tau * (rs[pix] + own * r + after), minlength=shape[0])


def ray_vjp(indptr, pix, expo, own, tau, w, n_pixels):
    ray_id, col, shape = _layout(indptr)
    wt = w[ray_id] * tau
    before = _prefix_excl(wt, ray_id, col, shape)
    gs = np.bincount(pix, weights=wt, minlength=n_pixels)
    ga = np.bincount(pix, weights=own * wt + expo * before, minlength=n_pixels)
    return ga, gs
