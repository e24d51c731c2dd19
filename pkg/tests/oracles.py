"""Slow, independent reference implementations used only by the tests.

Written with plain Python loops and ``math.fsum`` so they share no code
path with the vectorized library versions.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def quantile7(sorted_vals, p):
    h = (len(sorted_vals) - 1) * p
    lo = math.floor(h)
    hi = min(lo + 1, len(sorted_vals) - 1)
    return sorted_vals[lo] + (h - lo) * (sorted_vals[hi] - sorted_vals[lo])


def continuous(window, fps):
    x = [float(v) for v in window]
    n = len(x)
    s = sorted(x)
    mean = math.fsum(x) / n
    c = [v - mean for v in x]
    m2 = math.fsum(v * v for v in c) / n
    m3 = math.fsum(v**3 for v in c) / n
    m4 = math.fsum(v**4 for v in c) / n
    q1, med, q3 = quantile7(s, 0.25), quantile7(s, 0.5), quantile7(s, 0.75)
    constant = s[0] == s[-1]
    t = [i / fps for i in range(n)]
    tbar = math.fsum(t) / n
    sxx = math.fsum((ti - tbar) ** 2 for ti in t)
    slope = 0.0 if constant else math.fsum((ti - tbar) * ci for ti, ci in zip(t, c)) / sxx
    crossings = sum(1 for a, b in zip(c, c[1:]) if (a < 0 < b) or (b < 0 < a))
    return [
        s[0],
        s[-1],
        mean,
        med,
        q1,
        q3,
        0.0 if constant else m3 / m2**1.5,
        0.0 if constant else m4 / m2**2 - 3.0,
        0.0 if constant else math.sqrt(m2),
        q3 - q1,
        med - q1,
        q3 - med,
        slope,
        mean - slope * tbar,
        math.sqrt(math.fsum(v * v for v in x) / n),
        0.0 if constant else crossings / (n - 1),
    ]


def binary(window, fps):
    runs = [len(list(g)) for k, g in itertools.groupby(int(v) for v in window) if k == 1]
    n = len(window)
    if not runs:
        return [sum(int(v) for v in window) / n, 0.0, 0.0, 0.0, 0.0]
    return [
        sum(runs) / n,
        min(runs) / fps,
        sum(runs) / len(runs) / fps,
        max(runs) / fps,
        sum(runs) / fps,
    ]


def rel_err(got, want, floor=1e-12):
    """Elementwise relative error; ``floor`` guards values that are exactly zero."""
    return [abs(g - w) / max(abs(w), floor) for g, w in zip(got, want)]


def ccc_eq(x, y):
    n = len(x)
    mx, my = math.fsum(x) / n, math.fsum(y) / n
    vx = math.fsum((a - mx) ** 2 for a in x) / n
    vy = math.fsum((b - my) ** 2 for b in y) / n
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y)) / n
    return 2 * sxy / (vx + vy + (mx - my) ** 2)


def binned_mi(x, y, bins=20):
    """Plug-in MI (nats) from an equal-width 2-D histogram."""
    h, _, _ = np.histogram2d(x, y, bins=bins)
    p = h / h.sum()
    px, py = p.sum(axis=1, keepdims=True), p.sum(axis=0, keepdims=True)
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / (px @ py)[nz])))


def fd_gradient(loss_fn, flat, h=1e-3):
    """Five-point central differences of ``loss_fn(flat)``, one coordinate at a time.

    The fourth-order stencil lets ``h`` stay large enough that round-off does
    not swamp gradient entries many orders below the largest one.
    """
    g = np.zeros_like(flat)
    for i in range(flat.size):
        f = {}
        for m in (-2, -1, 1, 2):
            q = flat.copy()
            q[i] += m * h
            f[m] = loss_fn(q)
        g[i] = (8 * (f[1] - f[-1]) - (f[2] - f[-2])) / (12 * h)
    return g


def max_rel_err(a, b, floor=1e-7):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))
