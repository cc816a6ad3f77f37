"""Transfer-function fitting on frequency-response point clouds.

All fits minimise the complex-log misfit

    cost(theta) = sum_i |log(H_model(j w_i; theta) / H_i)|^2

with unit weights, i.e. squared log-magnitude error plus squared phase error
(principal branch of the ratio, so no unwrapping is needed inside the cost).
Parameters are searched in log space inside box bounds: a grid of starts is
polished with Nelder-Mead and the best candidates are refined with a
bounded trust-region least-squares solve.
"""

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import DroppedPointWarning, InsufficientDataError
from .models import (TWO_PI, FirstOrderFrictionModel, LateralSetup, NormalSetup,
                     SkinModel)

DEFAULT_BAND = 750.0
DEFAULT_TOL = 0.1


@dataclass
class FitResult:
    """Outcome of one model fit.

    ``residual`` is the RMS complex-log misfit per point at the optimum;
    ``cost`` is the summed squared misfit.  ``converged`` requires optimizer
    success, ``residual <= tol`` and no parameter pinned on a bound.
    """

    params: object
    residual: float
    cost: float
    iterations: int
    converged: bool
    band: tuple
    n_points: int
    flags: tuple = ()
    start_costs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    theta: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_dict(self):
        p = self.params
        if isinstance(p, FirstOrderFrictionModel):
            params = {"K": p.K, "f_o_hz": p.f_o}
        elif isinstance(p, SkinModel):
            params = {"m": p.m, "b": p.b, "k": p.k}
        elif isinstance(p, NormalSetup):
            params = {"K_snd": p.K_snd, "f_n_hz": p.omega_n / TWO_PI, "zeta": p.zeta}
        else:
            params = {k: getattr(p, k) for k in
                      ("gain", "omega_n", "zeta", "b3", "b2", "b1", "a3", "a2", "a1")}
            params["peaks_hz"] = list(resonance_peaks(p))
        return {"params": params, "residual": self.residual, "band": list(self.band),
                "converged": bool(self.converged), "iterations": int(self.iterations),
                "n_points": int(self.n_points), "flags": list(self.flags)}


def log_ratio(model, data):
    """Principal-branch ``log(model / data)``."""
    return np.log(model / data)


def unwrap_phase(freqs, responses):
    """Frequency-sorted responses with phase unwrapped from the lowest frequency."""
    freqs = np.asarray(freqs, dtype=float)
    order = np.argsort(freqs, kind="stable")
    r = np.asarray(responses, dtype=complex)[order]
    return freqs[order], np.abs(r), np.unwrap(np.angle(r))


def _peak_reference(lateral):
    f = np.logspace(0, 4, 2001)
    return float(np.max(np.abs(lateral.response(f))))


def remove_setup(points, setup, position="output"):
    """Take the lateral rig response out of measured points.

    ``position="output"`` divides by ``H_sld`` (the rig sits after the
    quantity of interest, as for friction / message).  ``"input"``
    multiplies, for ratios that have the measured force in the denominator
    (skin velocity / force).  Points where ``|H_sld|`` is below 1e-6 of its
    peak are dropped with a warning.
    """
    if len(points) == 0:
        return points
    lateral = getattr(setup, "lateral", setup)
    h = lateral.response(points.freq)
    keep = np.abs(h) >= 1e-6 * _peak_reference(lateral)
    if not np.all(keep):
        warnings.warn(f"dropped {int((~keep).sum())} points where the rig response vanishes",
                      DroppedPointWarning, stacklevel=2)
    if position not in ("output", "input"):
        raise ValueError("position must be 'output' or 'input'")
    kept, h = points.take(keep), h[keep]
    r = kept.response / h if position == "output" else kept.response * h
    return kept.with_response(r)


def _refine(resid, theta0, lb, ub, max_nfev):
    sol = optimize.least_squares(resid, theta0, bounds=(lb, ub), method="trf",
                                 x_scale=1.0, xtol=1e-14, ftol=1e-14, gtol=1e-14,
                                 max_nfev=max_nfev)
    return sol


def multistart_fit(resid_c, starts, lb, ub, n_refine=3, max_nfev=2000):
    """Minimise ``sum |resid_c(theta)|^2`` from several starts.

    Returns (theta, cost, iterations, success, start_costs).
    """
    lb, ub = np.asarray(lb, float), np.asarray(ub, float)

    def resid(theta):
        r = resid_c(theta)
        return np.concatenate((r.real, r.imag))

    def cost(theta):
        r = resid(theta)
        c = float(r @ r)
        return c if np.isfinite(c) else 1e300

    starts = np.clip(np.asarray(starts, float), lb, ub)
    start_costs = np.array([cost(s) for s in starts])
    candidates = []
    iters = 0
    for s in starts:
        nm = optimize.minimize(cost, s, method="Nelder-Mead", bounds=list(zip(lb, ub)),
                               options={"xatol": 1e-8, "fatol": 1e-14,
                                        "maxiter": 400 * len(s)})
        iters += nm.nit
        candidates.append((nm.fun, nm.x))
    candidates.sort(key=lambda c: c[0])
    best = None
    for _, x in candidates[:n_refine]:
        sol = _refine(resid, x, lb, ub, max_nfev)
        iters += sol.nfev
        c = cost(sol.x)
        if best is None or c < best[1]:
            best = (sol.x, c, sol.status > 0)
    # never report worse than the best simplex point
    if candidates[0][0] < best[1]:
        best = (candidates[0][1], candidates[0][0], True)
    return best[0], best[1], iters, best[2], start_costs


def _distinct(points, band_max, need, band_min=0.0):
    pts = points.band(band_max, band_min)
    nf = np.unique(pts.freq).size
    if nf < need:
        raise InsufficientDataError(
            f"need >= {need} distinct frequencies in band, got {nf}")
    return pts


def _bound_flags(theta, lb, ub, names, tol=1e-3):
    flags = []
    for t, lo, hi, name in zip(theta, lb, ub, names):
        if t - lo < tol or hi - t < tol:
            flags.append(f"at_bound:{name}")
    return flags


def _rank_flags(resid_c, theta, names):
    """Flag parameter directions the data cannot resolve."""
    eps = 1e-6
    r0 = resid_c(theta)
    cols = []
    for i in range(theta.size):
        d = np.zeros_like(theta)
        d[i] = eps
        cols.append((resid_c(theta + d) - r0) / eps)
    J = np.vstack([np.concatenate((c.real, c.imag)) for c in cols]).T
    sv = np.linalg.svd(J, compute_uv=False)
    if sv[0] == 0 or sv[-1] / sv[0] < 1e-6:
        _, _, vt = np.linalg.svd(J)
        weak = [names[i] for i in np.flatnonzero(np.abs(vt[-1]) > 0.3)]
        return ["unidentifiable:" + ",".join(weak)]
    return []


def _finish(model, theta, cost, iters, ok, start_costs, pts, band, tol, extra_flags, lb, ub,
            names, resid_c):
    n = len(pts)
    rms = float(np.sqrt(cost / max(n, 1)))
    flags = _bound_flags(theta, lb, ub, names) + _rank_flags(resid_c, theta, names) + extra_flags
    converged = bool(ok and np.isfinite(rms) and rms <= tol
                     and not any(f.startswith("at_bound") for f in flags))
    return FitResult(model, rms, float(cost), int(iters), converged, band, n, tuple(flags),
                     start_costs, np.asarray(theta))


def fit_first_order(points, band_max=DEFAULT_BAND, tol=DEFAULT_TOL):
    """Fit ``K w_o / (s + w_o)`` with K in [1e-5, 1] N/V and f_o in [50, 5000] Hz."""
    pts = _distinct(points, band_max, 4)
    s = 1j * TWO_PI * pts.freq
    data = pts.response
    lb = np.log([1e-5, 50.0])
    ub = np.log([1.0, 5000.0])

    def resid_c(theta):
        K, fo = map(float, np.exp(theta))
        w = TWO_PI * fo
        return log_ratio(K * w / (s + w), data)

    starts = [np.log([10 ** lk, fo]) for lk in (-3.75, -2.5, -1.25) for fo in (158.0, 500.0, 1581.0)]
    theta, cost, iters, ok, sc = multistart_fit(resid_c, starts, lb, ub)
    K, fo = map(float, np.exp(theta))
    return _finish(FirstOrderFrictionModel.from_hz(K, fo), theta, cost, iters, ok, sc, pts,
                   (float(pts.freq.min()), float(band_max)), tol, [], lb, ub,
                   ("K", "f_o"), resid_c)


def fit_second_order(points, band_max=DEFAULT_BAND, tol=DEFAULT_TOL):
    """Fit ``s / (m s^2 + b s + k)`` inside m in [1e-4, 0.1], b in [0.05, 50], k in [10, 1e5]."""
    pts = _distinct(points, band_max, 5)
    s = 1j * TWO_PI * pts.freq
    data = pts.response
    lb = np.log([1e-4, 0.05, 10.0])
    ub = np.log([1e-1, 50.0, 1e5])

    def resid_c(theta):
        m, b, k = map(float, np.exp(theta))
        return log_ratio(s / (m * s * s + b * s + k), data)

    grid = [np.linspace(lo, hi, 5)[1:4] for lo, hi in zip(lb, ub)]
    starts = [np.array(p) for p in itertools.product(*grid)]
    theta, cost, iters, ok, sc = multistart_fit(resid_c, starts, lb, ub)
    flags = []
    fu = np.unique(pts.freq)
    mag = np.array([np.median(np.abs(data[pts.freq == f])) for f in fu])
    if np.argmax(mag) in (0, fu.size - 1):
        flags.append("resonance_not_bracketed")
    m, b, k = map(float, np.exp(theta))
    return _finish(SkinModel(m, b, k), theta, cost, iters, ok, sc, pts,
                   (float(pts.freq.min()), float(band_max)), tol, flags, lb, ub,
                   ("m", "b", "k"), resid_c)


def _median_by_freq(pts):
    fu = np.unique(pts.freq)
    return fu, np.array([np.median(pts.response[pts.freq == f].real)
                         + 1j * np.median(pts.response[pts.freq == f].imag) for f in fu])


def fit_setup_normal(points, band=(0.0, np.inf), tol=DEFAULT_TOL):
    """Fit ``K s w_n^2 / (s^2 + 2 zeta w_n s + w_n^2)`` to impact data."""
    pts = _distinct(points, band[1], 4, band[0])
    s = 1j * TWO_PI * pts.freq
    data = pts.response
    lb = np.log([1e-4, TWO_PI * 20.0, 1e-4])
    ub = np.log([1e4, TWO_PI * 20000.0, 0.99])

    def resid_c(theta):
        K, w, z = map(float, np.exp(theta))
        return log_ratio(K * s * w * w / (s * s + 2 * z * w * s + w * w), data)

    fu, hu = _median_by_freq(pts)
    fpk = fu[np.argmax(np.abs(hu))]
    low = fu <= max(0.3 * fpk, fu[0])
    k0 = float(np.median(np.abs(hu[low]) / (TWO_PI * fu[low])))
    starts = [np.log([max(k0, 1e-4), TWO_PI * fpk * r, z])
              for r in (0.95, 1.0, 1.05) for z in (0.005, 0.03, 0.2)]
    theta, cost, iters, ok, sc = multistart_fit(resid_c, starts, lb, ub)
    K, w, z = map(float, np.exp(theta))
    return _finish(NormalSetup(K, w, z), theta, cost, iters, ok, sc, pts,
                   (float(pts.freq.min()), float(pts.freq.max())), tol, [], lb, ub,
                   ("K_snd", "omega_n", "zeta"), resid_c)


def resonance_peaks(lateral, f_lo=50.0, f_hi=5000.0, n=200001):
    """Frequencies (Hz) of local magnitude maxima, strongest first."""
    f = np.linspace(f_lo, f_hi, n)
    mag = np.abs(lateral.response(f))
    i = np.flatnonzero((mag[1:-1] > mag[:-2]) & (mag[1:-1] >= mag[2:])) + 1
    i = i[np.argsort(mag[i])[::-1]]
    return tuple(float(v) for v in f[i])


def fit_setup_lateral(points, band=(0.0, np.inf), tol=DEFAULT_TOL):
    """Fit the sensor resonance times mounting biquad, with ``a3 = b3 = 1``.

    Parameters fitted: gain, w_n, zeta, b2, b1, a2, a1.
    """
    pts = _distinct(points, band[1], 7, band[0])
    s = 1j * TWO_PI * pts.freq
    data = pts.response
    names = ("gain", "omega_n", "zeta", "b2", "b1", "a2", "a1")
    lb = np.log([1e-10, TWO_PI * 50.0, 1e-4, 1e-6, (TWO_PI * 20.0) ** 2, 1e-6, (TWO_PI * 20.0) ** 2])
    ub = np.log([1e4, TWO_PI * 20000.0, 0.99, 1e6, (TWO_PI * 20000.0) ** 2, 1e6,
                 (TWO_PI * 20000.0) ** 2])

    def model(theta):
        g, w, z, b2, b1, a2, a1 = map(float, np.exp(theta))
        return (g * s * w * w / (s * s + 2 * z * w * s + w * w)
                * (s * s + b2 * s + b1) / (s * s + a2 * s + a1))

    def resid_c(theta):
        return log_ratio(model(theta), data)

    fu, hu = _median_by_freq(pts)
    mag = np.abs(hu)
    imax = np.flatnonzero((mag[1:-1] > mag[:-2]) & (mag[1:-1] >= mag[2:])) + 1
    imax = imax[np.argsort(mag[imax])[::-1]][:2]
    if imax.size == 2:
        f_sensor, f_mount = fu[max(imax, key=lambda i: fu[i])], fu[min(imax, key=lambda i: fu[i])]
        lo_i, hi_i = sorted(imax)
        f_zero = fu[lo_i + np.argmin(mag[lo_i:hi_i + 1])]
    else:
        f_sensor = fu[np.argmax(mag)]
        f_mount = f_zero = 0.5 * f_sensor
    # low-frequency asymptote: g * w * b1 / a1
    ratio = (f_zero / f_mount) ** 2
    g0 = float(np.median(mag[:3] / (TWO_PI * fu[:3]))) / ratio
    starts = []
    for z in (0.02, 0.06, 0.2):
        for b2 in (10.0, 300.0):
            for a2 in (1e-2, 30.0):
                starts.append(np.log([max(g0, 1e-10), TWO_PI * f_sensor, z, b2,
                                      (TWO_PI * f_zero) ** 2, a2, (TWO_PI * f_mount) ** 2]))
    theta, cost, iters, ok, sc = multistart_fit(resid_c, starts, lb, ub, n_refine=4)
    g, w, z, b2, b1, a2, a1 = map(float, np.exp(theta))
    lat = LateralSetup(w, z, 1.0, b2, b1, 1.0, a2, a1, g)
    flags = []
    if abs(b1 / a1 - 1) < 0.05 and abs(np.log(b2 / a2)) < np.log(1.5):
        flags.append("mounting_degenerate")
    # a2 is often unresolvable on a finite grid; only bound flags carry meaning here
    return _finish(lat, theta, cost, iters, ok, sc, pts,
                   (float(pts.freq.min()), float(pts.freq.max())), tol, flags, lb, ub,
                   names, resid_c)
