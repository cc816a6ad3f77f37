"""Hot inner loops with a compiled backend and a pure-Python fallback.

The compiled module ``_ckernels`` is built from ``_ckernels.pyx`` by
``setup.py``.  If it cannot be imported, or the environment variable
``EVIB_PURE_PYTHON`` is set to a non-empty value other than ``0``, the
equivalent routines from ``_pykernels`` are used instead.

Functions
---------
sosfilt(sos, x)
    Cascade of direct-form-II-transposed biquads; ``sos`` rows are
    ``[b0, b1, b2, 1, a1, a2]``.
moving_average(x, width)
    Centred running mean with the window clipped at the record edges.
runs_above(x, threshold, min_len)
    Inclusive ``(start, end)`` index pairs of runs strictly above threshold.
dft_bin(x, k)
    Unnormalised DFT sum at (possibly fractional) bin ``k``.
"""

import os

import numpy as np

from . import _pykernels

BACKEND = "python"

if os.environ.get("EVIB_PURE_PYTHON", "0") in ("", "0"):
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
else:
    _impl = _pykernels


def sosfilt(sos, x):
    sos = np.ascontiguousarray(sos, dtype=np.float64)
    if sos.ndim != 2 or sos.shape[1] != 6:
        raise ValueError("sos must have shape (n_sections, 6)")
    if not np.allclose(sos[:, 3], 1.0):
        raise ValueError("sos sections must be normalised so a0 == 1")
    return _impl.sosfilt(sos, np.ascontiguousarray(x, dtype=np.float64))


def moving_average(x, width):
    width = int(width)
    if width < 1:
        raise ValueError("width must be >= 1")
    return _impl.moving_average(np.ascontiguousarray(x, dtype=np.float64), width)


def runs_above(x, threshold, min_len=1):
    return _impl.runs_above(np.ascontiguousarray(x, dtype=np.float64),
                            float(threshold), int(min_len))


def dft_bin(x, k):
    return _impl.dft_bin(np.ascontiguousarray(x, dtype=np.float64), float(k))


__all__ = ["BACKEND", "sosfilt", "moving_average", "runs_above", "dft_bin"]
