"""Continuous-time transfer functions realised on sampled data.

Polynomials are numpy-style coefficient sequences in descending powers of
``s``.  Two realisations are offered:

* ``bilinear``: the transfer function is factored into real second-order
  sections, each mapped to ``z`` with ``s = 2 fs (z - 1) / (z + 1)`` (no
  prewarping), and run as a biquad cascade through :mod:`evib.kernels`.
* ``spectral``: the record is treated as one period of a periodic signal and
  every rFFT bin is multiplied by the exact ``H(j 2 pi f)``.  This is the
  periodic steady-state response of the continuous system and carries neither
  warping nor start-up transients.
"""

import numpy as np

from . import kernels
from .errors import InstabilityError


def _trim(p):
    p = np.atleast_1d(np.asarray(p, dtype=float))
    nz = np.flatnonzero(p)
    if nz.size == 0:
        raise ValueError("polynomial is identically zero")
    return p[nz[0]:]


def freqresp(num, den, freqs):
    """Evaluate ``num(s) / den(s)`` at ``s = j 2 pi f``."""
    s = 2j * np.pi * np.asarray(freqs, dtype=float)
    return np.polyval(num, s) / np.polyval(den, s)


def _root_sections(roots):
    """Group roots into monic real quadratics, then at most one linear factor."""
    roots = np.asarray(roots, dtype=complex)
    scale = np.maximum(np.abs(roots), 1.0)
    is_cplx = np.abs(roots.imag) > 1e-9 * scale
    upper = roots[is_cplx & (roots.imag > 0)]
    reals = np.sort(roots[~is_cplx].real)
    quads = [np.array([1.0, -2.0 * r.real, abs(r) ** 2]) for r in upper]
    for i in range(0, reals.size - 1, 2):
        a, b = reals[i], reals[i + 1]
        quads.append(np.array([1.0, -(a + b), a * b]))
    lin = []
    if reals.size % 2:
        lin.append(np.array([0.0, 1.0, -reals[-1]]))
    return quads + lin


def s_sections(num, den):
    """Factor a proper rational function into real second-order s-sections.

    Returns
    -------
    list of (b, a) pairs
        Each ``b`` and ``a`` is a length-3 array ``[c2, c1, c0]``.  The
        overall gain is folded into the first section.
    """
    num, den = _trim(num), _trim(den)
    if num.size > den.size:
        raise ValueError("transfer function must be proper (deg num <= deg den)")
    gain = num[0] / den[0]
    pole_secs = _root_sections(np.roots(den))
    zero_secs = _root_sections(np.roots(num)) if num.size > 1 else []
    if not pole_secs:
        pole_secs = [np.array([0.0, 0.0, 1.0])]
    if len(zero_secs) > len(pole_secs):
        raise ValueError("cannot pair zeros with poles")
    zero_secs = zero_secs + [np.array([0.0, 0.0, 1.0])] * (len(pole_secs) - len(zero_secs))
    sections = [(b.copy(), a.copy()) for b, a in zip(zero_secs, pole_secs)]
    sections[0] = (sections[0][0] * gain, sections[0][1])
    return sections


def bilinear_section(b, a, rate):
    """Map one s-domain biquad to z with ``s = 2 rate (z-1)/(z+1)``.

    Returns a normalised sos row ``[b0, b1, b2, 1, a1, a2]``.
    """
    c = 2.0 * rate
    c2 = c * c

    def _map(p):
        p2, p1, p0 = p
        return np.array([p2 * c2 + p1 * c + p0,
                         2.0 * (p0 - p2 * c2),
                         p2 * c2 - p1 * c + p0])

    def _map1(p):
        # first-order section: keep it first order instead of adding a (z + 1) pair
        _, p1, p0 = p
        return np.array([p1 * c + p0, p0 - p1 * c, 0.0])

    if not (b[0] or b[1] or a[0] or a[1]):
        bz, az = np.array([b[2], 0.0, 0.0]), np.array([a[2], 0.0, 0.0])
    elif b[0] == 0 and a[0] == 0:
        bz, az = _map1(b), _map1(a)
    else:
        bz, az = _map(b), _map(a)
    return np.concatenate((bz / az[0], az / az[0]))


def check_continuous_stable(den):
    poles = np.roots(_trim(den))
    if poles.size and np.any(poles.real >= 0):
        raise InstabilityError(f"continuous poles not in the open left half-plane: {poles}")


def to_sos(num, den, rate):
    """Bilinear-discretised second-order sections for ``num/den``."""
    check_continuous_stable(den)
    sos = np.array([bilinear_section(b, a, rate) for b, a in s_sections(num, den)])
    for row in sos:
        if np.any(np.abs(np.roots(row[3:])) >= 1.0):
            raise InstabilityError("discretised pole on or outside the unit circle")
    return sos


def sos_filter(sos, x):
    return kernels.sosfilt(sos, x)


def sos_filtfilt(sos, x, padlen=None, mode="odd"):
    """Zero-phase forward-backward filtering with edge extension.

    ``mode="odd"`` reflects about the end values (good for smooth trends);
    ``mode="even"`` mirrors the samples, which keeps the local mean of
    rapidly oscillating non-negative signals such as a squared carrier.
    """
    x = np.asarray(x, dtype=float)
    if padlen is None:
        padlen = 3 * 2 * len(sos)
    padlen = int(min(padlen, x.size - 1))
    if padlen > 0:
        left = x[padlen:0:-1]
        right = x[-2:-padlen - 2:-1]
        if mode == "odd":
            left = 2 * x[0] - left
            right = 2 * x[-1] - right
        elif mode != "even":
            raise ValueError("mode must be 'odd' or 'even'")
        ext = np.concatenate((left, x, right))
    else:
        ext = x
    y = kernels.sosfilt(sos, ext)
    y = kernels.sosfilt(sos, y[::-1])[::-1]
    return y[padlen:padlen + x.size] if padlen > 0 else y


def butter_lowpass(order, cutoff, rate):
    """Butterworth low-pass as bilinear biquads, cutoff prewarped to ``cutoff`` Hz."""
    if not 0 < cutoff < rate / 2:
        raise ValueError("cutoff must lie strictly between 0 and Nyquist")
    wc = 2.0 * rate * np.tan(np.pi * cutoff / rate)
    k = np.arange(1, order + 1)
    poles = wc * np.exp(1j * np.pi * (2 * k + order - 1) / (2 * order))
    den = np.real(np.poly(poles))
    return to_sos([wc ** order], den, rate)


def settling_samples(order, cutoff, rate, n_tau=2.0):
    """Samples spanning ``n_tau`` dominant time-constants of a Butterworth low-pass.

    The slowest pole of an order-N Butterworth sits closest to the imaginary
    axis with real part ``wc sin(pi / 2N)``.
    """
    sigma = 2 * np.pi * cutoff * np.sin(np.pi / (2 * order))
    return int(np.ceil(n_tau * rate / sigma))


def spectral_apply(x, rate, response):
    """Periodic steady-state filtering: multiply every rFFT bin by ``response(f)``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    spec = np.fft.rfft(x)
    f = np.fft.rfftfreq(n, 1.0 / rate)
    h = np.asarray(response(f), dtype=complex)
    if n % 2 == 0:
        # the Nyquist bin of a real signal must stay real
        h[-1] = h[-1].real
    return np.fft.irfft(spec * h, n)
