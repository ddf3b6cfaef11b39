"""Compiled modular arithmetic over RNS polynomials.

Residue arrays are ``uint64`` with one row per modulus. Moduli must stay
below 2**61 so that lazy sums and the 128-bit Barrett reduction hold.
"""

import numpy as np
from numba import njit

_M32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_ONE = np.uint64(1)
_ZERO = np.uint64(0)


@njit(inline="always", cache=True)
def _mul64(a, b):
    a0 = a & _M32
    a1 = a >> _S32
    b0 = b & _M32
    b1 = b >> _S32
    p00 = a0 * b0
    p01 = a0 * b1
    p10 = a1 * b0
    p11 = a1 * b1
    mid = (p00 >> _S32) + (p01 & _M32) + (p10 & _M32)
    lo = (p00 & _M32) | (mid << _S32)
    hi = p11 + (p01 >> _S32) + (p10 >> _S32) + (mid >> _S32)
    return hi, lo


@njit(inline="always", cache=True)
def _mulhi(a, b):
    hi, _ = _mul64(a, b)
    return hi


@njit(inline="always", cache=True)
def _mulmod_shoup(a, w, wp, q):
    r = a * w - _mulhi(a, wp) * q
    if r >= q:
        r -= q
    return r


@njit(inline="always", cache=True)
def _mulmod(a, b, q, r0, r1):
    # Barrett reduction of a 128-bit product with ratio floor(2**128 / q) = (r1, r0)
    z1, z0 = _mul64(a, b)
    carry = _mulhi(z0, r0)
    t_hi, t_lo = _mul64(z0, r1)
    tmp1 = t_lo + carry
    tmp3 = t_hi + (_ONE if tmp1 < carry else _ZERO)
    t_hi, t_lo = _mul64(z1, r0)
    tmp1b = tmp1 + t_lo
    carry = t_hi + (_ONE if tmp1b < tmp1 else _ZERO)
    est = z1 * r1 + tmp3 + carry
    r = z0 - est * q
    if r >= q:
        r -= q
    return r


@njit(cache=True, nogil=True)
def ntt_forward(a, q, psi, psip):
    """In-place negacyclic NTT of every row; output is in bit-reversed order.

    Butterflies keep values lazily in [0, 4q); the final pass reduces to [0, q).
    """
    rows, n = a.shape
    for r in range(rows):
        qr = q[r]
        q2 = qr + qr
        row = a[r]
        t = n
        m = 1
        while m < n:
            t >>= 1
            for i in range(m):
                j1 = 2 * i * t
                w = psi[r, m + i]
                wp = psip[r, m + i]
                if t >= 8:
                    x = row[j1 : j1 + t]
                    y = row[j1 + t : j1 + 2 * t]
                    for k in range(t):
                        u = x[k]
                        if u >= q2:
                            u -= q2
                        yv = y[k]
                        v = yv * w - _mulhi(yv, wp) * qr
                        x[k] = u + v
                        y[k] = u + q2 - v
                else:
                    for j in range(j1, j1 + t):
                        u = row[j]
                        if u >= q2:
                            u -= q2
                        yv = row[j + t]
                        v = yv * w - _mulhi(yv, wp) * qr
                        row[j] = u + v
                        row[j + t] = u + q2 - v
            m <<= 1
        for j in range(n):
            v = row[j]
            if v >= q2:
                v -= q2
            if v >= qr:
                v -= qr
            row[j] = v


@njit(cache=True, nogil=True)
def ntt_inverse(a, q, ipsi, ipsip, ninv, ninvp):
    """In-place inverse of :func:`ntt_forward`, including the 1/N factor."""
    rows, n = a.shape
    for r in range(rows):
        qr = q[r]
        q2 = qr + qr
        row = a[r]
        t = 1
        m = n
        while m > 1:
            h = m >> 1
            for i in range(h):
                j1 = 2 * i * t
                w = ipsi[r, h + i]
                wp = ipsip[r, h + i]
                if t >= 8:
                    x = row[j1 : j1 + t]
                    y = row[j1 + t : j1 + 2 * t]
                    for k in range(t):
                        u = x[k]
                        v = y[k]
                        s = u + v
                        if s >= q2:
                            s -= q2
                        x[k] = s
                        d = u + q2 - v
                        y[k] = d * w - _mulhi(d, wp) * qr
                else:
                    for j in range(j1, j1 + t):
                        u = row[j]
                        v = row[j + t]
                        s = u + v
                        if s >= q2:
                            s -= q2
                        row[j] = s
                        d = u + q2 - v
                        row[j + t] = d * w - _mulhi(d, wp) * qr
            t <<= 1
            m = h
        nv = ninv[r]
        nvp = ninvp[r]
        for j in range(n):
            row[j] = _mulmod_shoup(row[j], nv, nvp, qr)


@njit(cache=True, nogil=True)
def mul(a, b, q, r0, r1):
    rows, n = a.shape
    out = np.empty_like(a)
    for r in range(rows):
        for j in range(n):
            out[r, j] = _mulmod(a[r, j], b[r, j], q[r], r0[r], r1[r])
    return out


@njit(cache=True, nogil=True)
def mul_acc(acc, a, b, q, r0, r1):
    """acc += a * b (mod q), row-wise, in place."""
    rows, n = a.shape
    for r in range(rows):
        qr = q[r]
        for j in range(n):
            s = acc[r, j] + _mulmod(a[r, j], b[r, j], qr, r0[r], r1[r])
            if s >= qr:
                s -= qr
            acc[r, j] = s


@njit(cache=True, nogil=True)
def mul_scalar(a, c, q, r0, r1):
    """Multiply row r by the scalar c[r] (already reduced mod q[r])."""
    rows, n = a.shape
    out = np.empty_like(a)
    for r in range(rows):
        for j in range(n):
            out[r, j] = _mulmod(a[r, j], c[r], q[r], r0[r], r1[r])
    return out


@njit(cache=True, nogil=True)
def add(a, b, q):
    rows, n = a.shape
    out = np.empty_like(a)
    for r in range(rows):
        qr = q[r]
        for j in range(n):
            s = a[r, j] + b[r, j]
            if s >= qr:
                s -= qr
            out[r, j] = s
    return out


@njit(cache=True, nogil=True)
def sub(a, b, q):
    rows, n = a.shape
    out = np.empty_like(a)
    for r in range(rows):
        qr = q[r]
        for j in range(n):
            x = a[r, j]
            y = b[r, j]
            out[r, j] = x - y if x >= y else x + qr - y
    return out


@njit(cache=True, nogil=True)
def neg(a, q):
    rows, n = a.shape
    out = np.empty_like(a)
    for r in range(rows):
        qr = q[r]
        for j in range(n):
            x = a[r, j]
            out[r, j] = _ZERO if x == _ZERO else qr - x
    return out


@njit(cache=True, nogil=True)
def from_signed(x, q):
    """Reduce a signed int64 coefficient vector into every modulus row."""
    rows = q.shape[0]
    n = x.shape[0]
    out = np.empty((rows, n), dtype=np.uint64)
    for r in range(rows):
        qr = q[r]
        qi = np.int64(qr)
        for j in range(n):
            v = x[j] % qi
            out[r, j] = np.uint64(v)
    return out


@njit(cache=True, nogil=True)
def lift_row(x, src_q, q):
    """Lift residues in [0, src_q) to every modulus in q (unsigned)."""
    rows = q.shape[0]
    n = x.shape[0]
    out = np.empty((rows, n), dtype=np.uint64)
    for r in range(rows):
        qr = q[r]
        for j in range(n):
            v = x[j]
            out[r, j] = v % qr if v >= qr else v
    return out


@njit(cache=True, nogil=True)
def lift_row_centered(x, src_q, q):
    """Lift residues mod src_q, read as centered integers, to every modulus in q."""
    rows = q.shape[0]
    n = x.shape[0]
    half = src_q >> _ONE
    out = np.empty((rows, n), dtype=np.uint64)
    for r in range(rows):
        qr = q[r]
        sq = src_q % qr
        for j in range(n):
            v = x[j]
            vr = v % qr
            if v > half:
                # v - src_q, reduced mod qr
                vr = vr + qr - sq if vr < sq else vr - sq
            out[r, j] = vr
    return out


@njit(cache=True, nogil=True)
def divide_round_last(a, last_lifted, inv_last, q, r0, r1):
    """(a - lift(last)) * last^-1 mod q, row-wise; the rescale/mod-down core."""
    rows, n = a.shape
    out = np.empty_like(a)
    for r in range(rows):
        qr = q[r]
        for j in range(n):
            x = a[r, j]
            y = last_lifted[r, j]
            d = x - y if x >= y else x + qr - y
            out[r, j] = _mulmod(d, inv_last[r], qr, r0[r], r1[r])
    return out


@njit(cache=True, nogil=True)
def garner_to_float(res, q, inv_table, r0, r1):
    """Centered CRT reconstruction of each coefficient, returned as float64.

    ``inv_table[i, j]`` holds q_j^-1 mod q_i for j < i.
    """
    rows, n = res.shape
    out = np.empty(n, dtype=np.float64)
    digits = np.empty(rows, dtype=np.int64)
    for k in range(n):
        for i in range(rows):
            qi = q[i]
            y = res[i, k]
            for j in range(i):
                dj = digits[j]
                if dj >= 0:
                    dm = np.uint64(dj) % qi
                else:
                    dm = np.uint64(-dj) % qi
                    dm = _ZERO if dm == _ZERO else qi - dm
                y = y - dm if y >= dm else y + qi - dm
                y = _mulmod(y, inv_table[i, j], qi, r0[i], r1[i])
            if y > (qi >> _ONE):
                digits[i] = -np.int64(qi - y)
            else:
                digits[i] = np.int64(y)
        acc = 0.0
        for i in range(rows - 1, -1, -1):
            acc = acc * float(q[i]) + float(digits[i])
        out[k] = acc
    return out


@njit(inline="always", cache=True)
def _reduce64(v, q, b):
    # b = floor(2**64 / q)
    r = v - _mulhi(v, b) * q
    if r >= q:
        r -= q
    return r


@njit(cache=True, nogil=True)
def shoup_companion(a, q, r0, r1, c64, qinv):
    """floor(a * 2**64 / q) per element, via exact division by q modulo 2**64.

    ``c64`` is 2**64 mod q and ``qinv`` is q^-1 mod 2**64.
    """
    rows, n = a.shape
    out = np.empty_like(a)
    for r in range(rows):
        for j in range(n):
            rem = _mulmod(a[r, j], c64[r], q[r], r0[r], r1[r])
            out[r, j] = (_ZERO - rem) * qinv[r]
    return out


@njit(cache=True, nogil=True)
def mul_acc_shoup(acc, a, k, kp, q):
    """acc += a * k (mod q) with precomputed Shoup companions kp."""
    rows, n = a.shape
    for r in range(rows):
        qr = q[r]
        x = acc[r]
        ar = a[r]
        kr = k[r]
        kpr = kp[r]
        for j in range(n):
            av = ar[j]
            v = av * kr[j] - _mulhi(av, kpr[j]) * qr
            if v >= qr:
                v -= qr
            s = x[j] + v
            if s >= qr:
                s -= qr
            x[j] = s


@njit(cache=True, nogil=True)
def lift_row_fast(x, src_q, q, b64):
    """Like lift_row_centered / lift_row, using 64-bit Barrett instead of division."""
    rows = q.shape[0]
    n = x.shape[0]
    half = src_q >> _ONE
    out = np.empty((rows, n), dtype=np.uint64)
    for r in range(rows):
        qr = q[r]
        br = b64[r]
        sq = _reduce64(src_q, qr, br)
        o = out[r]
        for j in range(n):
            v = x[j]
            vr = v if v < qr else _reduce64(v, qr, br)
            if v > half:
                vr = vr + qr - sq if vr < sq else vr - sq
            o[j] = vr
    return out


@njit(cache=True, nogil=True)
def lift_row_unsigned(x, q, b64):
    rows = q.shape[0]
    n = x.shape[0]
    out = np.empty((rows, n), dtype=np.uint64)
    for r in range(rows):
        qr = q[r]
        br = b64[r]
        o = out[r]
        for j in range(n):
            v = x[j]
            o[j] = v if v < qr else _reduce64(v, qr, br)
    return out
