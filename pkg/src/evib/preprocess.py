"""From raw trial channels to per-sweep frequency-response points.

Steps: collapse the two lateral force axes to one, find the sweeps, cut a
4000-sample window centred on each, demodulate the drive voltage and divide
spectra at the message frequency.
"""

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (DemodulationError, FormatError, InsufficientDataError,
                     SkippedSweepWarning)
from .plantsim import ALIGNMENT, GRAVITY, REFERENCE_VPP, drive_gain
from .signalcore import (CARRIER, WINDOW, Unit, Waveform, am_demodulate_sideband,
                         fft_coefficient, integrate_to_velocity)

LEFT = WINDOW // 2 - 1   # 1999 samples before the middle
RIGHT = WINDOW // 2      # 2000 samples after
SMOOTH_S = 0.05
FRF_COLUMNS = ("freq_hz", "re", "im", "sweep", "speed_mm_s", "force_n", "participant")


@dataclass(frozen=True)
class SweepSegment:
    start_index: int
    end_index: int
    middle_index: int
    left_to_right: bool = True

    def __post_init__(self):
        if not self.start_index < self.middle_index < self.end_index:
            raise ValueError("need start < middle < end")

    @property
    def window(self):
        return self.middle_index - LEFT, self.middle_index + RIGHT


@dataclass(frozen=True)
class SweepWindow:
    voltage: Waveform
    friction_1d: Waveform
    velocity: Waveform
    sweep: int
    meta: dict
    start: int = 0


class FrfPointSet:
    """Column store of complex frequency-response samples.

    Sets concatenate with ``+``; :meth:`sorted` gives a canonical order so
    merging is order independent.
    """

    def __init__(self, freq=(), response=(), sweep=1, speed=np.nan, force=np.nan, participant=""):
        self.freq = np.asarray(freq, dtype=float).ravel()
        self.response = np.asarray(response, dtype=complex).ravel()
        n = self.freq.size
        self.sweep = np.broadcast_to(np.asarray(sweep, dtype=int), (n,)).copy() if n else np.zeros(0, int)
        self.speed = np.broadcast_to(np.asarray(speed, dtype=float), (n,)).copy() if n else np.zeros(0)
        self.force = np.broadcast_to(np.asarray(force, dtype=float), (n,)).copy() if n else np.zeros(0)
        part = np.asarray(participant, dtype=object)
        self.participant = np.broadcast_to(part, (n,)).copy() if n else np.zeros(0, object)
        if self.response.size != n:
            raise ValueError("freq and response lengths differ")
        if not np.all(np.isfinite(self.response)):
            raise ValueError("responses must be finite")

    def __len__(self):
        return self.freq.size

    def __add__(self, other):
        return FrfPointSet(*(np.concatenate((a, b)) for a, b in zip(self._cols(), other._cols())))

    def __eq__(self, other):
        if not isinstance(other, FrfPointSet):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self._cols(), other._cols()))

    __hash__ = None

    def _cols(self):
        return (self.freq, self.response, self.sweep, self.speed, self.force, self.participant)

    def take(self, idx):
        return FrfPointSet(*(c[idx] for c in self._cols()))

    def with_response(self, response):
        return FrfPointSet(self.freq, response, self.sweep, self.speed, self.force,
                           self.participant)

    def sorted(self):
        order = np.lexsort((self.sweep, self.freq, self.force, self.speed,
                            self.participant.astype(str)))
        return self.take(order)

    def band(self, f_max, f_min=0.0):
        return self.take((self.freq <= f_max) & (self.freq >= f_min))

    @classmethod
    def concat(cls, sets):
        out = cls()
        for s in sets:
            out = out + s
        return out

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(FRF_COLUMNS)
            for f, r, s, v, F, p in zip(*self._cols()):
                w.writerow([repr(float(f)), repr(float(r.real)), repr(float(r.imag)), int(s),
                            repr(float(v)), repr(float(F)), str(p)])

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or tuple(rows[0]) != FRF_COLUMNS:
            raise FormatError(f"{path}: header must be {','.join(FRF_COLUMNS)}")
        try:
            cols = list(zip(*rows[1:])) or [()] * 7
            return cls(np.array(cols[0], float),
                       np.array(cols[1], float) + 1j * np.array(cols[2], float),
                       np.array(cols[3], int), np.array(cols[4], float),
                       np.array(cols[5], float), np.array(cols[6], object))
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from exc


def _orient(u, mean):
    p = float(u @ mean)
    if abs(p) > 1e-12 * (np.linalg.norm(mean) + 1e-300):
        return u if p > 0 else -u
    k = 0 if abs(u[0]) > abs(u[1]) * (1 + 1e-12) else 1
    return u if u[k] > 0 else -u


def reduce_lateral_to_1d(fx, fy):
    """Collapse two force axes into one signal without losing spectral power.

    A single real direction ``u`` is taken as the dominant eigenvector of
    the 2x2 second-moment matrix of the samples, oriented so the mean force
    projects positively (so a positive friction force stays positive).  In
    every rFFT bin the output magnitude is ``sqrt(|FX|^2 + |FY|^2)`` and the
    phase is that of the projection ``u . (FX, FY)``.
    """
    if len(fx) != len(fy) or fx.rate != fy.rate:
        raise ValueError("axes must share length and rate")
    x, y = fx.samples, fy.samples
    n = x.size
    xy = np.vstack((x, y))
    moment = xy @ xy.T / n
    evals, evecs = np.linalg.eigh(moment)
    if np.isclose(evals[0], evals[1], rtol=1e-12, atol=0.0):
        u = np.array([0.0, 1.0])
    else:
        u = evecs[:, 1]
    u = _orient(u, xy.mean(axis=1))
    FX, FY = np.fft.rfft(x), np.fft.rfft(y)
    mag = np.sqrt(np.abs(FX) ** 2 + np.abs(FY) ** 2)
    proj = u[0] * FX + u[1] * FY
    dom = FX * np.sign(u[0]) if abs(u[0]) > abs(u[1]) else FY * np.sign(u[1] or 1.0)
    weak = np.abs(proj) <= 1e-9 * mag
    ref = np.where(weak, dom, proj)
    out = mag * np.exp(1j * np.angle(ref))
    # DC and Nyquist must stay real
    out[0] = mag[0] * (1.0 if ref[0].real >= 0 else -1.0)
    if n % 2 == 0:
        out[-1] = mag[-1] * (1.0 if ref[-1].real >= 0 else -1.0)
    return Waveform(np.fft.irfft(out, n), fx.rate, fx.unit)


def align_accelerometer(ax, ay, az):
    """Rotate raw accelerometer readings (g) into the force-sensor frame, in m/s^2."""
    raw = np.vstack((ax.samples, ay.samples, az.samples))
    out = GRAVITY * (ALIGNMENT @ raw)
    return tuple(Waveform(row, ax.rate, Unit.ACCEL) for row in out)


def smoothing_width(rate, seconds=SMOOTH_S):
    w = int(round(seconds * rate))
    return w + 1 if w % 2 == 0 else w


def detect_sweeps(friction_1d, position=None, min_len=WINDOW):
    """Sweeps are runs where the smoothed friction stays strictly above its mean.

    Parameters
    ----------
    friction_1d : Waveform
    position : (times_s, mm) arrays, optional
        Used to mark each sweep's direction.
    min_len : int
        Shorter runs are discarded.
    """
    x = friction_1d.samples
    smooth = kernels.moving_average(x, smoothing_width(friction_1d.rate))
    segs = []
    for s, e in kernels.runs_above(smooth, float(np.mean(x)), min_len):
        mid = (s + e + 1) // 2
        ltr = True
        if position is not None:
            ltr = _moving_right(position, s / friction_1d.rate, e / friction_1d.rate)
        segs.append(SweepSegment(int(s), int(e), int(mid), ltr))
    return segs


def _moving_right(position, t0, t1):
    t, xmm = (np.asarray(a, dtype=float) for a in position)
    sel = (t >= t0) & (t <= t1)
    if sel.sum() < 2:
        return True
    return float(np.polyfit(t[sel], xmm[sel], 1)[0]) >= 0


def extract_windows(trial, sweeps, left_to_right_only=False):
    """Cut aligned 4000-sample windows around each sweep middle.

    Windows that run past either end of the record are skipped with a
    :class:`SkippedSweepWarning`.  Sweep ordinals count from 1 over ``sweeps``.
    """
    n = len(trial.voltage)
    ax, _, _ = align_accelerometer(trial.accel_x, trial.accel_y, trial.accel_z)
    out = []
    for i, seg in enumerate(sweeps, start=1):
        if left_to_right_only and not seg.left_to_right:
            continue
        a, b = seg.window
        if a < 0 or b >= n:
            warnings.warn(f"sweep {i}: window [{a}, {b}] outside record of {n} samples",
                          SkippedSweepWarning, stacklevel=2)
            continue
        sl = slice(a, b + 1)
        fric = reduce_lateral_to_1d(trial.force_x.slice(a, b + 1), trial.force_y.slice(a, b + 1))
        vel = integrate_to_velocity(Waveform(ax.samples[sl], ax.rate, Unit.ACCEL))
        out.append(SweepWindow(trial.voltage.slice(a, b + 1), fric, vel, i, trial.meta, a))
    return out


def demodulated_message(window, message_freq, carrier=CARRIER, reference_vpp=REFERENCE_VPP):
    """Complex message phasor recovered from the drive-voltage window.

    The voltage is first divided by the drive gain of ``reference_vpp``, so a
    full-scale drive gives a unit-amplitude message.
    """
    v = window.voltage
    unit_v = Waveform(v.samples / drive_gain(reference_vpp), v.rate)
    est = am_demodulate_sideband(unit_v, carrier, message_freq)
    return est.phasor


def frf_point(window, message_freq, carrier=CARRIER, kind="friction"):
    """One frequency-response sample from a sweep window.

    ``kind="friction"`` gives friction / message (N per unit message);
    ``kind="skin"`` gives skin velocity / measured friction.
    """
    f_c = fft_coefficient(window.friction_1d, message_freq)
    if kind == "friction":
        den = demodulated_message(window, message_freq, carrier)
        num = f_c
        full_scale = 1.0
    elif kind == "skin":
        num = fft_coefficient(window.velocity, message_freq)
        den = f_c
        full_scale = max(np.max(np.abs(window.friction_1d.samples)), 1e-300)
    else:
        raise ValueError("kind must be 'friction' or 'skin'")
    if abs(den) < 1e-9 * full_scale:
        raise DemodulationError(f"input coefficient at {message_freq} Hz is ~0")
    meta = window.meta["protocol"]
    return FrfPointSet([message_freq], [num / den], [window.sweep], [meta["speed"]],
                       [meta["force"]], [meta["participant"]])


def estimate_speed(position_t, position_mm, intervals=None):
    """Median per-sweep finger speed (mm/s) from the 60 Hz position track.

    ``intervals`` lists (t0, t1) sweep spans in seconds; by default every
    run of strictly increasing position is used.  Each span contributes the
    least-squares slope of position against time.
    """
    t = np.asarray(position_t, dtype=float)
    x = np.asarray(position_mm, dtype=float)
    if t.size < 2:
        raise InsufficientDataError("need at least two position samples")
    if intervals is None:
        rising = np.diff(x) > 0
        runs = kernels.runs_above(rising.astype(float), 0.5, 2)
        spans = [(t[s], t[e + 1]) for s, e in runs]
        if not spans:
            return 0.0
    else:
        spans = intervals
    slopes = []
    for t0, t1 in spans:
        sel = (t >= t0) & (t <= t1)
        if sel.sum() >= 2:
            slopes.append(abs(np.polyfit(t[sel], x[sel], 1)[0]))
    if not slopes:
        return 0.0
    return float(np.median(slopes))
