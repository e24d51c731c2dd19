"""Multilevel Daubechies DWT over feature windows and per-band summaries.

The filter bank follows the common convention (same coefficient layout and
output lengths as PyWavelets): analysis outputs have
``floor((n + L - 1) / 2)`` coefficients under half-sample symmetric
extension.  Every function works along the last axis, so a whole matrix of
windows (one per row) is transformed in one call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np
from scipy.special import comb

from .errors import TooManyLevelsError, WindowShorterThanFilterError

DEFAULT_ORDER = 10
BAND_STATS = ("min", "max", "mean", "std", "rms")
MODES = ("symmetric", "periodization")


@dataclass(frozen=True)
class Wavelet:
    name: str
    dec_lo: np.ndarray
    dec_hi: np.ndarray
    rec_lo: np.ndarray
    rec_hi: np.ndarray

    @property
    def filter_length(self) -> int:
        return self.dec_lo.size


@lru_cache(maxsize=None)
def daubechies(order: int = DEFAULT_ORDER) -> Wavelet:
    """Daubechies wavelet with ``order`` vanishing moments (filter length 2*order).

    Built by spectral factorization of the half-band polynomial, keeping the
    minimum-phase roots.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    n = order
    # P(y) = sum_k C(n-1+k, k) y^k with y = sin^2(w/2); np.roots wants highest power first.
    p = [comb(n - 1 + k, k, exact=True) for k in range(n)][::-1]
    zeros = []
    for y in np.roots(p) if n > 1 else []:
        # y = (2 - z - 1/z) / 4  ->  z^2 - (2 - 4y) z + 1 = 0
        z = np.roots([1.0, -(2.0 - 4.0 * y), 1.0])
        zeros.append(z[np.argmin(np.abs(z))])
    h = np.array([1.0])
    for _ in range(n):
        h = np.convolve(h, [1.0, 1.0])
    for z in zeros:
        h = np.convolve(h, [1.0, -z])
    h = np.real(h)
    h *= math.sqrt(2.0) / h.sum()
    L = h.size
    rec_lo = h
    rec_hi = np.array([(-1) ** k * h[L - 1 - k] for k in range(L)])
    return Wavelet(f"db{order}", rec_lo[::-1].copy(), rec_hi[::-1].copy(), rec_lo, rec_hi)


def max_levels(window_frames: int, filter_length: int) -> int:
    """Deepest decomposition that still leaves a useful coefficient count."""
    if window_frames < filter_length:
        raise WindowShorterThanFilterError(
            f"window of {window_frames} frames is shorter than the {filter_length}-tap filter"
        )
    if filter_length < 2:
        raise ValueError("filter_length must be >= 2")
    # floor(log2(window / (filter_length - 1))) without float rounding
    level = 0
    while (filter_length - 1) << (level + 1) <= window_frames:
        level += 1
    return level


def _reflect(idx: np.ndarray, n: int) -> np.ndarray:
    """Map indices onto [0, n) by half-sample symmetric extension."""
    idx = np.mod(idx, 2 * n)
    return np.where(idx >= n, 2 * n - 1 - idx, idx)


def _analysis(x: np.ndarray, lo: np.ndarray, hi: np.ndarray, mode: str):
    n = x.shape[-1]
    L = lo.size
    if mode == "symmetric":
        K = (n + L - 1) // 2
        index = _reflect(2 * np.arange(K)[:, None] + 1 - np.arange(L), n)
    else:
        if n % 2:
            raise ValueError("periodization mode needs an even-length signal")
        K = n // 2
        index = np.mod(2 * np.arange(K)[:, None] + 1 - np.arange(L), n)
    a, d = _filter_pair(x.reshape(-1, n), index, lo, hi)
    return a.reshape(x.shape[:-1] + (K,)), d.reshape(x.shape[:-1] + (K,))


@numba.njit(cache=True)
def _filter_pair(x, index, lo, hi):
    rows = x.shape[0]
    K, L = index.shape
    a = np.zeros((rows, K))
    d = np.zeros((rows, K))
    for r in range(rows):
        for k in range(K):
            sa = 0.0
            sd = 0.0
            for j in range(L):
                v = x[r, index[k, j]]
                sa += lo[j] * v
                sd += hi[j] * v
            a[r, k] = sa
            d[r, k] = sd
    return a, d


def _synthesis(a: np.ndarray, d: np.ndarray, w: Wavelet, n_out: int, mode: str) -> np.ndarray:
    K = a.shape[-1]
    L = w.filter_length
    k = np.arange(K)
    x = np.zeros(a.shape[:-1] + (n_out,))
    if mode == "symmetric":
        for j in range(L):
            pos = 2 * k - L + 2 + j
            ok = (pos >= 0) & (pos < n_out)
            x[..., pos[ok]] += w.rec_lo[j] * a[..., ok] + w.rec_hi[j] * d[..., ok]
    else:
        # transpose of the orthogonal periodic analysis operator
        for j in range(L):
            pos = np.mod(2 * k + 1 - j, n_out)
            np.add.at(x, (..., pos), w.dec_lo[j] * a + w.dec_hi[j] * d)
    return x


@dataclass
class WaveletDecomposition:
    """Detail bands ``details[0]`` (finest, d1) ... ``details[-1]`` (dL) plus the approximation aL."""

    details: list[np.ndarray]
    approximation: np.ndarray
    lengths: list[int]
    wavelet: Wavelet
    mode: str = "symmetric"

    @property
    def levels(self) -> int:
        return len(self.details)

    def bands(self) -> list[np.ndarray]:
        return [*self.details, self.approximation]


def dwt(signal, levels: int, wavelet: Wavelet | None = None, mode: str = "symmetric") -> WaveletDecomposition:
    """Cascade filter-bank decomposition along the last axis."""
    wavelet = wavelet or daubechies()
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    x = np.asarray(signal, dtype=float)
    if levels < 1:
        raise ValueError("levels must be >= 1")
    allowed = max_levels(x.shape[-1], wavelet.filter_length)
    if levels > allowed:
        raise TooManyLevelsError(
            f"{levels} levels requested, at most {allowed} for {x.shape[-1]} samples and {wavelet.name}"
        )
    details, lengths = [], []
    a = x
    for _ in range(levels):
        lengths.append(a.shape[-1])
        a, d = _analysis(a, wavelet.dec_lo, wavelet.dec_hi, mode)
        details.append(d)
    return WaveletDecomposition(details, a, lengths, wavelet, mode)


def idwt(decomp: WaveletDecomposition) -> np.ndarray:
    """Inverse of :func:`dwt`."""
    a = decomp.approximation
    w = decomp.wavelet
    for d, n in zip(reversed(decomp.details), reversed(decomp.lengths)):
        if decomp.mode == "symmetric":
            full = 2 * a.shape[-1] - w.filter_length + 2
            a = _synthesis(a, d, w, full, "symmetric")[..., :n]
        else:
            a = _synthesis(a, d, w, n, "periodization")
    return a


def band_features(decomp: WaveletDecomposition) -> np.ndarray:
    """min/max/mean/std/rms per band, ordered d1..dL then aL, along the last axis."""
    out = []
    for band in decomp.bands():
        out.extend(
            [
                band.min(axis=-1),
                band.max(axis=-1),
                band.mean(axis=-1),
                band.std(axis=-1),
                np.sqrt(np.mean(band**2, axis=-1)),
            ]
        )
    return np.stack(out, axis=-1)


def band_feature_names(levels: int) -> list[str]:
    bands = [f"d{i}" for i in range(1, levels + 1)] + [f"a{levels}"]
    return [f"{b}_{s}" for b in bands for s in BAND_STATS]
