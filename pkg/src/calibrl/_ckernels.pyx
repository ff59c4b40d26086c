# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: pool-adjacent-violators and inventory rollouts.

Semantics are mirrored by ``calibrl._pykernels``; both backends return
identical values for identical inputs.
"""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef enum:
    MAX_SHELF = 64
    EXPECTED = 0
    SAMPLED = 1
    FIFO = 2

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL


cdef inline uint64_t _mix(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline int64_t _below(uint64_t* s, int64_t n) noexcept nogil:
    s[0] += GOLDEN
    return <int64_t>(((_mix(s[0]) >> 32) * <uint64_t>n) >> 32)


cdef inline uint64_t _stream(uint64_t seed, uint64_t m, uint64_t k, uint64_t horizon) noexcept nogil:
    return _mix(seed + GOLDEN * (m * horizon + k + 1))


cdef inline void _remove_random(int64_t* x, int64_t total, int64_t n,
                                int64_t* removed, uint64_t* rng) noexcept nogil:
    cdef int64_t i, r, remaining = total
    cdef int l
    for i in range(n):
        r = _below(rng, remaining)
        l = 0
        while r >= x[l]:
            r -= x[l]
            l += 1
        x[l] -= 1
        removed[l] += 1
        remaining -= 1


cdef inline int64_t _sell_units(int64_t* x, int shelf, int64_t demand,
                                uint64_t* rng, bint fifo) noexcept nogil:
    """Remove sold units from ``x`` in place and return the stockout."""
    cdef int64_t total = 0, sales, r
    cdef int64_t picked[MAX_SHELF]
    cdef int l
    for l in range(shelf):
        total += x[l]
        picked[l] = 0
    sales = demand if demand < total else total
    if sales == total:
        for l in range(shelf):
            x[l] = 0
    elif sales > 0:
        if fifo:
            r = sales
            for l in range(shelf):
                if x[l] >= r:
                    x[l] -= r
                    break
                r -= x[l]
                x[l] = 0
        elif 2 * sales <= total:
            _remove_random(x, total, sales, picked, rng)
        else:
            # draw the (fewer) units that stay on the shelf instead
            _remove_random(x, total, total - sales, picked, rng)
            for l in range(shelf):
                x[l] = picked[l]
    return demand - sales


def sell_units(int64_t[:] x, int64_t demand, uint64_t seed, int mode=SAMPLED):
    """One selling step on an integer stock vector, in place; returns stockout."""
    if x.shape[0] < 1 or x.shape[0] > MAX_SHELF:
        raise ValueError("shelf life must be in [1, 64]")
    cdef uint64_t rng = _mix(seed)
    return _sell_units(&x[0], x.shape[0], demand, &rng, mode == FIFO)


def rollout_values(const double[:] stock, const int64_t[:, :] actions,
                   const int64_t[:, :] demands, const int64_t[:] order,
                   const int64_t[:] shared, uint64_t seed, int mode=EXPECTED):
    """Mean cumulative reward of each action sequence over the demand paths.

    Trajectories are visited in ``order``; ``shared[i]`` is the length of the
    action prefix the i-th visited trajectory shares with its predecessor,
    whose intermediate states are reused.
    """
    cdef int shelf = stock.shape[0]
    cdef Py_ssize_t n_traj = actions.shape[0]
    cdef int horizon = actions.shape[1]
    cdef Py_ssize_t n_mc = demands.shape[0]
    cdef Py_ssize_t m, idx, j
    cdef int k, l, c
    cdef uint64_t rng
    cdef int64_t xi[MAX_SHELF]
    cdef int64_t stockout
    cdef double total_m, sales, keep, a, d, acc
    cdef double* x
    cdef double* r
    cdef double* dk
    if shelf < 1 or shelf > MAX_SHELF or horizon > 64:
        raise ValueError("shelf life must be in [1, 64] and horizon at most 64")
    if mode not in (EXPECTED, SAMPLED, FIFO):
        raise ValueError(f"unknown selling mode {mode}")
    # states[k, l, m]: stock before step k on path m; cum[k, m]: reward of steps < k
    states_arr = np.zeros((horizon + 1, shelf, n_mc), dtype=np.float64)
    cum_arr = np.zeros((horizon + 1, n_mc), dtype=np.float64)
    dem_arr = np.ascontiguousarray(np.asarray(demands, dtype=np.float64).T)
    total = np.zeros(n_traj, dtype=np.float64)
    cdef double[:, :, ::1] states = states_arr
    cdef double[:, ::1] cum = cum_arr
    cdef double[:, ::1] dem = dem_arr
    cdef double[:] tot = total
    for l in range(shelf):
        for m in range(n_mc):
            states[0, l, m] = stock[l]
    with nogil:
        for idx in range(n_traj):
            j = order[idx]
            c = <int>shared[idx]
            for k in range(c, horizon):
                x = &states[k + 1, 0, 0]
                r = &cum[k + 1, 0]
                dk = &dem[k, 0]
                a = <double>actions[j, k]
                for l in range(shelf):
                    for m in range(n_mc):
                        x[l * n_mc + m] = states[k, l, m]
                for m in range(n_mc):
                    r[m] = cum[k, m]
                    x[(shelf - 1) * n_mc + m] += a
                if mode == EXPECTED:
                    for m in range(n_mc):
                        total_m = 0.0
                        for l in range(shelf):
                            total_m = total_m + x[l * n_mc + m]
                        d = dk[m]
                        sales = d if d < total_m else total_m
                        keep = (1.0 - sales / total_m) if total_m > 0.0 else 1.0
                        for l in range(shelf):
                            x[l * n_mc + m] = x[l * n_mc + m] * keep
                        r[m] = r[m] - (x[m] + (d - sales))
                else:
                    for m in range(n_mc):
                        for l in range(shelf):
                            xi[l] = <int64_t>x[l * n_mc + m]
                        rng = _stream(seed, m, k, horizon)
                        stockout = _sell_units(xi, shelf, <int64_t>dk[m], &rng, mode == FIFO)
                        for l in range(shelf):
                            x[l * n_mc + m] = <double>xi[l]
                        r[m] = r[m] - <double>(xi[0] + stockout)
                # spoil the oldest bucket and age the rest
                for l in range(shelf - 1):
                    for m in range(n_mc):
                        x[l * n_mc + m] = x[(l + 1) * n_mc + m]
                for m in range(n_mc):
                    x[(shelf - 1) * n_mc + m] = 0.0
            acc = 0.0
            for m in range(n_mc):
                acc = acc + cum[horizon, m]
            tot[j] = acc
    return total / n_mc


def pava(const double[:] y, const double[:] w):
    """Weighted pool-adjacent-violators; returns the fitted value per input."""
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t i, b = 0, start
    value = np.empty(n, dtype=np.float64)
    weight = np.empty(n, dtype=np.float64)
    size = np.empty(n, dtype=np.int64)
    out = np.empty(n, dtype=np.float64)
    cdef double[:] v = value
    cdef double[:] wt = weight
    cdef int64_t[:] sz = size
    cdef double[:] o = out
    cdef double tw
    for i in range(n):
        v[b] = y[i]
        wt[b] = w[i]
        sz[b] = 1
        while b > 0 and v[b - 1] > v[b]:
            tw = wt[b - 1] + wt[b]
            v[b - 1] = (wt[b - 1] * v[b - 1] + wt[b] * v[b]) / tw
            wt[b - 1] = tw
            sz[b - 1] += sz[b]
            b -= 1
        b += 1
    start = 0
    for i in range(b):
        o[start:start + sz[i]] = v[i]
        start += sz[i]
    return out
