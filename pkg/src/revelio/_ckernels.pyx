# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the functions in ``_pykernels``.

Inputs are any buffer-protocol sequences (``array.array`` or numpy arrays);
outputs match the pure-Python versions element for element.
"""

from libc.math cimport sqrt
from libc.stdlib cimport calloc, malloc, free

# TTLs are bucketed directly, so they must be small non-negative integers
cdef enum:
    MAX_TTL = 65535


cdef struct Point:
    double size
    double rtt


cdef Py_ssize_t[9] _GAPS = [1750, 701, 301, 132, 57, 23, 10, 4, 1]


cdef void _sort_by_size(Point *a, Py_ssize_t n) noexcept nogil:
    # shellsort: buckets are ~100 points, no recursion, no comparator calls
    cdef Py_ssize_t g, gap, i, j
    cdef Point tmp
    for g in range(9):
        gap = _GAPS[g]
        if gap >= n:
            continue
        for i in range(gap, n):
            tmp = a[i]
            j = i
            while j >= gap and a[j - gap].size > tmp.size:
                a[j] = a[j - gap]
                j -= gap
            a[j] = tmp


def fit_lines(const long long[:] ttls, const double[:] sizes, const double[:] rtts,
              int min_sizes):
    cdef Py_ssize_t n = ttls.shape[0]
    if sizes.shape[0] != n or rtts.shape[0] != n:
        raise ValueError("ttls, sizes and rtts must have equal length")
    out = []
    if n == 0:
        return out

    cdef Py_ssize_t i, j, k, m, lo, hi
    cdef long long t, tmax = 0
    for i in range(n):
        t = ttls[i]
        if t < 0 or t > MAX_TTL:
            raise ValueError(f"ttl {t} outside 0..{MAX_TTL}")
        if t > tmax:
            tmax = t

    cdef Py_ssize_t *start = <Py_ssize_t *>calloc(tmax + 2, sizeof(Py_ssize_t))
    cdef Py_ssize_t *fill = <Py_ssize_t *>malloc((tmax + 1) * sizeof(Py_ssize_t))
    cdef Point *pts = <Point *>malloc(n * sizeof(Point))
    # per-hop (size, min rtt) after dedup
    cdef double *px = <double *>malloc(n * sizeof(double))
    cdef double *py = <double *>malloc(n * sizeof(double))
    if start == NULL or fill == NULL or pts == NULL or px == NULL or py == NULL:
        free(start); free(fill); free(pts); free(px); free(py)
        raise MemoryError()

    cdef double sx, sy, mx, my, sxx, sxy, dx, slope, intercept, ss, e
    try:
        # counting sort by ttl
        for i in range(n):
            start[ttls[i] + 1] += 1
        for t in range(tmax + 1):
            start[t + 1] += start[t]
            fill[t] = start[t]
        for i in range(n):
            t = ttls[i]
            pts[fill[t]].size = sizes[i]
            pts[fill[t]].rtt = rtts[i]
            fill[t] += 1

        for t in range(tmax + 1):
            lo = start[t]
            hi = start[t + 1]
            if hi == lo:
                continue
            _sort_by_size(pts + lo, hi - lo)
            m = 0
            for j in range(lo, hi):
                if m == 0 or px[m - 1] != pts[j].size:
                    px[m] = pts[j].size
                    py[m] = pts[j].rtt
                    m += 1
                elif pts[j].rtt < py[m - 1]:
                    py[m - 1] = pts[j].rtt
            if m < min_sizes:
                continue
            sx = 0.0
            sy = 0.0
            for k in range(m):
                sx += px[k]
                sy += py[k]
            mx = sx / m
            my = sy / m
            sxx = 0.0
            sxy = 0.0
            for k in range(m):
                dx = px[k] - mx
                sxx += dx * dx
                sxy += dx * (py[k] - my)
            slope = sxy / sxx
            intercept = my - slope * mx
            ss = 0.0
            for k in range(m):
                e = py[k] - (intercept + slope * px[k])
                ss += e * e
            out.append((t, intercept, slope, m, sqrt(ss / m)))
    finally:
        free(start); free(fill); free(pts); free(px); free(py)
    return out


def cumulative_rtts(const double[:] delays, const double[:] bandwidths, double size):
    cdef Py_ssize_t n = delays.shape[0]
    if bandwidths.shape[0] != n:
        raise ValueError("delays and bandwidths must have equal length")
    cdef Py_ssize_t i
    cdef double acc = 0.0
    out = [0.0] * n
    for i in range(n):
        acc += delays[i] + size / bandwidths[i]
        out[i] = 2.0 * acc
    return out
