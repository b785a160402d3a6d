"""Pure numpy implementations of the hot kernels.

These mirror ``_kernels.pyx`` operation for operation.  Integer outputs
(keys, raw words, uniforms) are bit-identical across backends; normals and
Brownian values agree to within libm rounding.
"""

import numpy as np

BACKEND = "python"

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_ROOT = np.uint64(0x243F6A8885A308D3)
_CHILD = np.uint64(0x13198A2E03707344)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO53 = 1.0 / 9007199254740992.0
_TWO_PI = 6.283185307179586


def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def root_key(seed):
    z = np.asarray([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return int(_mix(z ^ _ROOT)[0])


def derive_keys(parent, indices):
    """Child keys of ``parent`` for every entry of ``indices``."""
    idx = np.asarray(indices, dtype=np.uint64)
    p = np.uint64(parent)
    return _mix(p ^ _mix((idx + np.uint64(1)) * _CHILD + _GOLDEN))


def raw_words(keys, start, count):
    """Counter-based 64-bit words, shape ``(len(keys), count)``."""
    keys = np.asarray(keys, dtype=np.uint64)
    ctr = np.arange(start, start + count, dtype=np.uint64)
    h = _mix(ctr * _GOLDEN + _GOLDEN)
    return _mix(keys[:, None] ^ h[None, :])


def uniforms(keys, start, count):
    return (raw_words(keys, start, count) >> _S11).astype(np.float64) * _TWO53


def normals(keys, start, count):
    """Box-Muller normals; draw ``j`` consumes counters ``2j`` and ``2j+1``."""
    keys = np.asarray(keys, dtype=np.uint64)
    u = uniforms(keys, 2 * start, 2 * count)
    u1 = 1.0 - u[:, 0::2]
    u2 = u[:, 1::2]
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


def _normal_at(keys, counter):
    c = np.asarray([counter], dtype=np.uint64)
    h1 = _mix((c * np.uint64(2)) * _GOLDEN + _GOLDEN)
    h2 = _mix((c * np.uint64(2) + np.uint64(1)) * _GOLDEN + _GOLDEN)
    u1 = 1.0 - (_mix(keys ^ h1) >> _S11).astype(np.float64) * _TWO53
    u2 = (_mix(keys ^ h2) >> _S11).astype(np.float64) * _TWO53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


def segment_tag(side, seg):
    """Key tweak for segment ``seg`` on ``side`` (0: t >= 0, 1: t < 0)."""
    return int(derive_keys(int(derive_keys(0, [side])[0]), [seg])[0])


def brownian(keys, times, seg_len, depth):
    """Two-sided Brownian motion values ``B(times)`` for every key.

    Each side of the origin is cut into segments of length ``seg_len``; the
    segment endpoint increment uses counter 0 and dyadic midpoints are filled
    in by bridge refinement with heap-numbered counters, so every value is a
    pure function of ``(key, t)``.
    """
    keys = np.asarray(keys, dtype=np.uint64)
    times = np.asarray(times, dtype=np.float64)
    n = keys.shape[0]
    out = np.empty((n, times.shape[0]))
    sq = np.sqrt(seg_len)
    for j, t in enumerate(times):
        side = 0 if t >= 0.0 else 1
        a = abs(float(t))
        seg = int(a // seg_len)
        u = a - seg * seg_len
        base = np.zeros(n)
        for q in range(seg):
            sk = _mix(keys ^ np.uint64(segment_tag(side, q)))
            base += sq * _normal_at(sk, 0)
        sk = _mix(keys ^ np.uint64(segment_tag(side, seg)))
        lo, hi = 0.0, float(seg_len)
        b_lo = np.zeros(n)
        b_hi = sq * _normal_at(sk, 0)
        h = 1
        for _ in range(depth):
            mid = 0.5 * (lo + hi)
            b_mid = 0.5 * (b_lo + b_hi) + np.sqrt(0.25 * (hi - lo)) * _normal_at(sk, h)
            if u < mid:
                hi, b_hi, h = mid, b_mid, 2 * h
            else:
                lo, b_lo, h = mid, b_mid, 2 * h + 1
        w = (u - lo) / (hi - lo)
        out[:, j] = base + b_lo + w * (b_hi - b_lo)
    return out
