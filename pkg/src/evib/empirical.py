"""Regression of fitted parameters on speed and force, and the speed model."""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import (ExtrapolationWarning, InsufficientDataError, RankDeficiencyError,
                     ZeroVarianceError)
from .models import TWO_PI, EmpiricalSpeedModel, in_range

__all__ = ["ParameterSample", "LinearFit", "EmpiricalSpeedModel", "ols_fit", "pearson",
           "build_empirical_model", "evaluate_model"]


@dataclass(frozen=True)
class ParameterSample:
    speed: float
    force: float
    participant: str
    value: float
    parameter: str = ""

    def __post_init__(self):
        if not (self.speed > 0 and self.force > 0):
            raise ValueError("speed and force must be positive")
        if not math.isfinite(self.value):
            raise ValueError("value must be finite")


@dataclass(frozen=True)
class LinearFit:
    """``value = b0 + b1 force + b2 speed + b3 force*speed``."""

    intercept: float
    coef_force: float
    coef_speed: float
    coef_interaction: float
    stderr: tuple
    r2: float
    n: int
    residuals: np.ndarray = None

    @property
    def coefs(self):
        return np.array([self.intercept, self.coef_force, self.coef_speed,
                         self.coef_interaction])


def design_matrix(speed, force):
    speed = np.asarray(speed, dtype=float)
    force = np.asarray(force, dtype=float)
    return np.column_stack((np.ones_like(speed), force, speed, force * speed))


def ols_fit(samples):
    """Ordinary least squares via a thin QR factorisation.

    Raises
    ------
    InsufficientDataError
        Fewer than 8 samples.
    RankDeficiencyError
        The design matrix is rank deficient (for example a single speed level).
    """
    samples = list(samples)
    n = len(samples)
    if n < 8:
        raise InsufficientDataError(f"need at least 8 samples, got {n}")
    X = design_matrix([s.speed for s in samples], [s.force for s in samples])
    y = np.array([s.value for s in samples], dtype=float)
    # scale columns so the rank test is unit independent
    scale = np.linalg.norm(X, axis=0)
    Q, R = np.linalg.qr(X / scale)
    d = np.abs(np.diag(R))
    if d.min() <= 1e-10 * d.max():
        raise RankDeficiencyError("design matrix is rank deficient")
    beta = np.linalg.solve(R, Q.T @ y) / scale
    resid = y - X @ beta
    p = X.shape[1]
    dof = n - p
    sigma2 = float(resid @ resid) / dof
    Rinv = np.linalg.inv(R)
    cov = sigma2 * (Rinv @ Rinv.T) / np.outer(scale, scale)
    se = tuple(float(v) for v in np.sqrt(np.diag(cov)))
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if tss == 0 else max(0.0, min(1.0, 1.0 - float(resid @ resid) / tss))
    return LinearFit(*(float(b) for b in beta), se, r2, n, resid)


def t_two_sided_p(t, dof):
    """Two-sided Student-t tail probability via the regularized incomplete beta."""
    t = abs(float(t))
    if math.isinf(t):
        return 0.0
    return float(special.betainc(dof / 2.0, 0.5, dof / (dof + t * t)))


def pearson(xs, ys):
    """Sample correlation and its two-sided p-value.

    Returns
    -------
    dict with keys ``r``, ``p`` and ``n``.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be 1-D of equal length")
    n = x.size
    if n < 3:
        raise InsufficientDataError("need at least 3 pairs")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise ZeroVarianceError("both inputs need non-zero variance")
    r = float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))
    if abs(r) >= 1.0 - 1e-15:
        return {"r": r, "p": 0.0, "n": n}
    t = r * math.sqrt((n - 2) / (1 - r * r))
    return {"r": r, "p": t_two_sided_p(t, n - 2), "n": n}


def build_empirical_model(K_samples, omega_samples):
    """Average gain plus the speed law of an OLS fit of the cutoff (Hz).

    Force and interaction terms are estimated, then the speed law is read
    off at the mean sampled force, so force effects do not leak into the
    intercept or slope through the interaction term.
    """
    K_samples, omega_samples = list(K_samples), list(omega_samples)
    if not K_samples or not omega_samples:
        raise InsufficientDataError("both sample sets must be non-empty")
    fit = ols_fit(omega_samples)
    K_bar = float(np.mean([s.value for s in K_samples]))
    f_bar = float(np.mean([s.force for s in omega_samples]))
    return EmpiricalSpeedModel(K_bar, fit.intercept + fit.coef_force * f_bar,
                               fit.coef_speed + fit.coef_interaction * f_bar)


def evaluate_model(model, freq, speed):
    """``K w_o(v) / (j 2 pi f + w_o(v))``; warns outside the validity range."""
    freq = np.asarray(freq, dtype=float)
    if np.any(freq <= 0):
        raise ValueError("freq must be positive")
    if not in_range(speed, model.speed_range):
        warnings.warn(f"speed {speed} mm/s outside {model.speed_range}",
                      ExtrapolationWarning, stacklevel=2)
    w = TWO_PI * model.cutoff_hz(speed, warn=False)
    out = model.K_bar * w / (1j * TWO_PI * freq + w)
    return complex(out) if out.ndim == 0 else out
