# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; see ``_kernels_py`` for the reference semantics."""
import numpy as np

from libc.math cimport floor, isnan
from libc.stdint cimport int8_t, uint64_t

cdef uint64_t GOLDEN = <uint64_t>0x9E3779B97F4A7C15
cdef uint64_t MIX1 = <uint64_t>0xBF58476D1CE4E5B9
cdef uint64_t MIX2 = <uint64_t>0x94D049BB133111EB
cdef double INV53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    return z ^ (z >> 31)


cdef inline double _uniform(uint64_t seed, uint64_t t) noexcept nogil:
    return <double>(_mix64(seed + (t + 1) * GOLDEN) >> 11) * INV53


cdef inline double _inverse_cdf(double u, const double* cdf, const double* t, Py_ssize_t m) noexcept nogil:
    # branchless lower bound: first index with cdf >= u
    cdef Py_ssize_t base = 0, n = m, half, lo
    while n > 1:
        half = n >> 1
        base = base + half if cdf[base + half] < u else base
        n -= half
    lo = base + (1 if cdf[base] < u else 0)
    if lo > m - 1:
        lo = m - 1
    if lo == 0:
        return t[0]
    cdef double den = cdf[lo] - cdf[lo - 1]
    if den > 0:
        return t[lo - 1] + (u - cdf[lo - 1]) / den * (t[lo] - t[lo - 1])
    return t[lo - 1] + (u - cdf[lo - 1]) * (t[lo] - t[lo - 1])


def mix64(z):
    return int(_mix64(<uint64_t>(int(z) & 0xFFFFFFFFFFFFFFFF)))


def uniforms(seed, Py_ssize_t start, Py_ssize_t count):
    cdef uint64_t s = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    out = np.empty(count, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t k
    with nogil:
        for k in range(count):
            o[k] = _uniform(s, <uint64_t>(start + k))
    return out


def inverse_cdf(u, cdf, t):
    ua = np.ascontiguousarray(u, dtype=np.float64).ravel()
    out = np.empty_like(ua)
    cdef const double[::1] uv = ua
    cdef const double[::1] cv = np.ascontiguousarray(cdf, dtype=np.float64)
    cdef const double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t k
    with nogil:
        for k in range(uv.shape[0]):
            o[k] = _inverse_cdf(uv[k], &cv[0], &tv[0], cv.shape[0])
    return out.reshape(np.shape(u))


def stage_expectation(ys, t, p, double x_lo, double h, values, double w_carry, double c_h, double c_p):
    cdef const double[::1] yv = np.ascontiguousarray(ys, dtype=np.float64)
    cdef const double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef const double[::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef const double[::1] vv = np.ascontiguousarray(values, dtype=np.float64)
    out = np.empty(yv.shape[0], dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t a, j, i, nv = vv.shape[0], nt = tv.shape[0]
    cdef long under = 0
    cdef double acc, z, carry, pos, frac, top = <double>(nv - 1)
    with nogil:
        for a in range(yv.shape[0]):
            acc = 0.0
            for j in range(nt):
                z = yv[a] - tv[j]
                if z >= 0:
                    carry = c_h * z
                else:
                    carry = (-c_p) * z
                pos = (z - x_lo) / h
                if pos < 0:
                    under += 1
                    pos = 0.0
                elif pos > top:
                    pos = top
                i = <Py_ssize_t>floor(pos)
                if i > nv - 2:
                    i = nv - 2
                frac = pos - i
                acc = acc + (w_carry * carry + (vv[i] + frac * (vv[i + 1] - vv[i]))) * pv[j]
            o[a] = acc
    return out, int(under)


def simulate(levels, double x0, seeds, cdf, t, double q, double c, double c_h, double c_p, bint retain):
    cdef const double[::1] lv = np.ascontiguousarray(levels, dtype=np.float64)
    cdef const uint64_t[::1] sv = np.ascontiguousarray(seeds, dtype=np.uint64)
    cdef const double[::1] cv = np.ascontiguousarray(cdf, dtype=np.float64)
    cdef const double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef Py_ssize_t n = lv.shape[0], R = sv.shape[0], r, i
    cum_arr = np.zeros(R, dtype=np.float64)
    cdef double[::1] cum = cum_arr
    X_arr = np.empty((R if retain else 0, n + 1), dtype=np.float64)
    T_arr = np.empty((R if retain else 0, n), dtype=np.float64)
    Y_arr = np.empty((R if retain else 0, n), dtype=np.int8)
    D_arr = np.empty((R if retain else 0, n), dtype=np.float64)
    P_arr = np.empty((R if retain else 0, n), dtype=np.float64)
    C_arr = np.empty((R if retain else 0, n), dtype=np.float64)
    cdef double[:, ::1] Xv = X_arr
    cdef double[:, ::1] Tv = T_arr
    cdef int8_t[:, ::1] Yv = Y_arr
    cdef double[:, ::1] Dv = D_arr
    cdef double[:, ::1] Pv = P_arr
    cdef double[:, ::1] Cv = C_arr
    cdef double x, y, s, d, z, carry, cost, acc
    cdef bint filled
    cdef uint64_t seed
    with nogil:
        for r in range(R):
            seed = sv[r]
            x = x0
            acc = 0.0
            for i in range(n):
                s = lv[i]
                if isnan(s):
                    y = x
                elif x <= s:
                    y = s
                else:
                    y = x
                d = _inverse_cdf(_uniform(seed, <uint64_t>(2 * i)), &cv[0], &tv[0], cv.shape[0])
                filled = _uniform(seed, <uint64_t>(2 * i + 1)) < q
                if filled:
                    z = y - d
                else:
                    z = x - d
                if z >= 0:
                    carry = c_h * z
                else:
                    carry = (-c_p) * z
                cost = c * (y - x) + carry
                acc = acc + cost
                if retain:
                    Xv[r, i] = x
                    Tv[r, i] = y
                    Yv[r, i] = 1 if filled else 0
                    Dv[r, i] = d
                    Pv[r, i] = cost
                    Cv[r, i] = acc
                x = y - d
            cum[r] = acc
            if retain:
                Xv[r, n] = x
    if retain:
        return {"X": X_arr, "target": T_arr, "Y": Y_arr, "D": D_arr, "P": P_arr, "C": C_arr}
    return cum_arr
