"""Pure-Python/numpy implementations of the hot loops.

Used when the compiled extension is unavailable or ``EVIB_PURE_PYTHON`` is set.
Results match ``_ckernels`` to floating-point round-off.
"""

import numpy as np


def sosfilt(sos, x):
    y = np.array(x, dtype=float)
    for b0, b1, b2, _, a1, a2 in np.asarray(sos, dtype=float):
        z1 = z2 = 0.0
        for i in range(y.size):
            xi = y[i]
            yi = b0 * xi + z1
            z1 = b1 * xi - a1 * yi + z2
            z2 = b2 * xi - a2 * yi
            y[i] = yi
    return y


def moving_average(x, width):
    x = np.asarray(x, dtype=float)
    n = x.size
    half = width // 2
    csum = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(n)
    lo = np.clip(idx - half, 0, n - 1)
    hi = np.clip(idx + half, 0, n - 1)
    return (csum[hi + 1] - csum[lo]) / (hi - lo + 1)


def runs_above(x, threshold, min_len):
    above = np.asarray(x) > threshold
    edges = np.diff(np.concatenate(([False], above, [False])).astype(np.int8))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    return [(int(a), int(b) - 1) for a, b in zip(starts, stops) if b - a >= min_len]


def dft_bin(x, k):
    x = np.asarray(x, dtype=float)
    n = np.arange(x.size)
    return complex(np.dot(x, np.exp(-2j * np.pi * k * n / x.size)))
