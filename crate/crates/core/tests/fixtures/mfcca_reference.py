"""Independent reference for the detrending fixtures used in tests/detrend_fixtures.rs.

Uses numpy.polyfit on raw (uncentred) in-segment abscissae k = 1..s, which is a
different numerical route from the crate's orthonormal-basis projection.
Run: python3 mfcca_reference.py
"""
import math
import numpy as np


def segments(n, s):
    m = n // s
    fwd = [v * s for v in range(m)]
    bwd = [n - m * s + j * s for j in range(m)]
    return fwd + bwd


def detrended(p, start, s, order):
    k = np.arange(1, s + 1, dtype=float)
    seg = np.asarray(p[start:start + s], dtype=float)
    coef = np.polyfit(k, seg, order)
    return seg - np.polyval(coef, k)


def seg_cov(xp, yp, s, order):
    out = []
    for st in segments(len(xp), s):
        x = detrended(xp, st, s, order)
        y = detrended(yp, st, s, order)
        out.append(float(np.dot(x, y) / s))
    return out


def fq(vals, q):
    acc = sum(math.copysign(abs(v) ** (q / 2), v) for v in vals) / len(vals)
    return math.copysign(abs(acc) ** (1 / q), acc)


def profile(u):
    u = np.asarray(u, dtype=float)
    return np.cumsum(u - u.mean())


xp8 = [1, 3, 2, 5, 4, 4, 7, 6]
yp8 = [2, 1, 4, 3, 3, 6, 5, 8]
print("len8 s=4 m=1 f2xy", repr(seg_cov(xp8, yp8, 4, 1)))
print("len8 s=4 m=1 f2xx", repr(seg_cov(xp8, xp8, 4, 1)))

i = np.arange(64, dtype=float)
x = np.sin(0.7 * i) + 0.05 * i + 0.3 * np.cos(2.1 * i)
y = np.cos(1.3 * i) - 0.02 * i + 0.5 * np.sin(0.37 * i)
xp, yp = profile(x), profile(y)
for s in (8, 16):
    cxy = seg_cov(xp, yp, s, 1)
    cxx = seg_cov(xp, xp, s, 1)
    cyy = seg_cov(yp, yp, s, 1)
    for q in (1.0, 2.0, 4.0):
        print(f"len64 s={s} q={q}", repr((fq(cxy, q), fq(cxx, q), fq(cyy, q))))
