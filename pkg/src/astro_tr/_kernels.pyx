# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: counter-based random words and Brownian bridge paths.

Keep every integer operation in lockstep with ``_kernels_py.py``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, cos, sqrt, fabs, floor
from libc.stdint cimport uint64_t

cnp.import_array()

BACKEND = "cython"

cdef uint64_t _GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t _M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t _M2 = 0x94D049BB133111EBULL
cdef uint64_t _ROOT = 0x243F6A8885A308D3ULL
cdef uint64_t _CHILD = 0x13198A2E03707344ULL
cdef double _TWO53 = 1.0 / 9007199254740992.0
cdef double _TWO_PI = 6.283185307179586


cdef inline uint64_t _mix(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * _M1
    z = (z ^ (z >> 27)) * _M2
    return z ^ (z >> 31)


cdef inline uint64_t _ctr(uint64_t c) nogil:
    return _mix(c * _GOLDEN + _GOLDEN)


cdef inline uint64_t _child(uint64_t parent, uint64_t idx) nogil:
    return _mix(parent ^ _mix((idx + 1) * _CHILD + _GOLDEN))


cdef inline double _unif(uint64_t key, uint64_t c) nogil:
    return <double>(_mix(key ^ _ctr(c)) >> 11) * _TWO53


cdef inline double _normal(uint64_t key, uint64_t c) nogil:
    cdef double u1 = 1.0 - _unif(key, 2 * c)
    cdef double u2 = _unif(key, 2 * c + 1)
    return sqrt(-2.0 * log(u1)) * cos(_TWO_PI * u2)


def root_key(seed):
    cdef uint64_t z = <uint64_t>(seed & 0xFFFFFFFFFFFFFFFF)
    return int(_mix(z ^ _ROOT))


def derive_keys(parent, indices):
    cdef uint64_t p = <uint64_t>parent
    cdef cnp.uint64_t[::1] idx = np.ascontiguousarray(indices, dtype=np.uint64)
    cdef Py_ssize_t i, n = idx.shape[0]
    out = np.empty(n, dtype=np.uint64)
    cdef cnp.uint64_t[::1] o = out
    for i in range(n):
        o[i] = _child(p, idx[i])
    return out


def raw_words(keys, Py_ssize_t start, Py_ssize_t count):
    cdef cnp.uint64_t[::1] k = np.ascontiguousarray(keys, dtype=np.uint64)
    cdef Py_ssize_t i, j, n = k.shape[0]
    out = np.empty((n, count), dtype=np.uint64)
    cdef cnp.uint64_t[:, ::1] o = out
    for j in range(count):
        h = _ctr(<uint64_t>(start + j))
        for i in range(n):
            o[i, j] = _mix(k[i] ^ <uint64_t>h)
    return out


def uniforms(keys, Py_ssize_t start, Py_ssize_t count):
    cdef cnp.uint64_t[::1] k = np.ascontiguousarray(keys, dtype=np.uint64)
    cdef Py_ssize_t i, j, n = k.shape[0]
    out = np.empty((n, count), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            for j in range(count):
                o[i, j] = _unif(k[i], <uint64_t>(start + j))
    return out


def normals(keys, Py_ssize_t start, Py_ssize_t count):
    cdef cnp.uint64_t[::1] k = np.ascontiguousarray(keys, dtype=np.uint64)
    cdef Py_ssize_t i, j, n = k.shape[0]
    out = np.empty((n, count), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            for j in range(count):
                o[i, j] = _normal(k[i], <uint64_t>(start + j))
    return out


def segment_tag(side, seg):
    return int(_child(_child(0, <uint64_t>side), <uint64_t>seg))


def brownian(keys, times, double seg_len, int depth):
    cdef cnp.uint64_t[::1] k = np.ascontiguousarray(keys, dtype=np.uint64)
    cdef double[::1] ts = np.ascontiguousarray(times, dtype=np.float64)
    cdef Py_ssize_t i, j, q, n = k.shape[0], m = ts.shape[0]
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double sq = sqrt(seg_len)
    cdef double a, u, lo, hi, mid, b_lo, b_hi, b_mid, base, t, w
    cdef uint64_t side, seg, side_root, sk, h
    cdef int lev
    with nogil:
        for j in range(m):
            t = ts[j]
            side = 0 if t >= 0.0 else 1
            a = fabs(t)
            seg = <uint64_t>floor(a / seg_len)
            u = a - <double>seg * seg_len
            side_root = _child(0, side)
            for i in range(n):
                base = 0.0
                for q in range(<Py_ssize_t>seg):
                    sk = _mix(k[i] ^ _child(side_root, <uint64_t>q))
                    base += sq * _normal(sk, 0)
                sk = _mix(k[i] ^ _child(side_root, seg))
                lo = 0.0
                hi = seg_len
                b_lo = 0.0
                b_hi = sq * _normal(sk, 0)
                h = 1
                for lev in range(depth):
                    mid = 0.5 * (lo + hi)
                    b_mid = 0.5 * (b_lo + b_hi) + sqrt(0.25 * (hi - lo)) * _normal(sk, h)
                    if u < mid:
                        hi = mid
                        b_hi = b_mid
                        h = 2 * h
                    else:
                        lo = mid
                        b_lo = b_mid
                        h = 2 * h + 1
                w = (u - lo) / (hi - lo)
                o[i, j] = base + b_lo + w * (b_hi - b_lo)
    return out
