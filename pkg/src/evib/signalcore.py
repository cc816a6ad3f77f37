"""Sampled signals, tone synthesis, FFT helpers and sqrt-envelope AM.

All analysis uses bin-centred tones: a 4000-sample window at 20 kHz has a
5 Hz bin spacing, and every protocol frequency is snapped onto that grid so
no apodization is needed.
"""

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import filters, kernels
from .errors import AliasingError, BinAlignmentError, CarrierWarning, DemodulationError

DEFAULT_RATE = 20000.0
WINDOW = 4000
CARRIER = 7000.0
MIN_CARRIER = 7000.0


class Unit(str, enum.Enum):
    VOLT = "V"
    NEWTON = "N"
    VELOCITY = "m/s"
    ACCEL = "m/s^2"
    GRAVITY = "g"
    MILLIMETRE = "mm"
    NONE = "1"


@dataclass(frozen=True)
class Waveform:
    """Uniformly sampled real signal.

    The sample array is copied to float64 and made read-only, so instances can
    be shared freely between threads or processes.
    """

    samples: np.ndarray
    rate: float
    unit: Unit = Unit.NONE

    def __post_init__(self):
        x = np.array(self.samples, dtype=float, copy=True).ravel()
        if x.size == 0:
            raise ValueError("waveform must contain at least one sample")
        if not np.all(np.isfinite(x)):
            raise ValueError("waveform samples must be finite")
        rate = float(self.rate)
        if not rate > 0:
            raise ValueError("sample rate must be positive")
        x.flags.writeable = False
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "rate", rate)
        object.__setattr__(self, "unit", Unit(self.unit))

    def __len__(self):
        return self.samples.size

    def __eq__(self, other):
        if not isinstance(other, Waveform):
            return NotImplemented
        return (self.rate == other.rate and self.unit == other.unit
                and np.array_equal(self.samples, other.samples))

    __hash__ = None

    @property
    def duration(self):
        return self.samples.size / self.rate

    @property
    def time(self):
        return np.arange(self.samples.size) / self.rate

    def replace(self, samples=None, unit=None):
        return Waveform(self.samples if samples is None else samples, self.rate,
                        self.unit if unit is None else unit)

    def slice(self, start, stop):
        return Waveform(self.samples[start:stop], self.rate, self.unit)


def wrap_phase(phase):
    """Wrap angles into (-pi, pi]."""
    w = np.mod(np.asarray(phase, dtype=float) + np.pi, 2 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


@dataclass(frozen=True)
class SinusoidEstimate:
    frequency: float
    amplitude: float
    phase: float

    def __post_init__(self):
        if not self.frequency > 0:
            raise ValueError("frequency must be positive")
        if not self.amplitude >= 0:
            raise ValueError("amplitude must be non-negative")
        object.__setattr__(self, "phase", wrap_phase(self.phase))

    @property
    def phasor(self):
        return self.amplitude * np.exp(1j * self.phase)


@dataclass(frozen=True)
class Spectrum:
    """One-sided spectrum scaled so a unit bin-centred cosine reads 1."""

    freqs: np.ndarray
    coeffs: np.ndarray
    rate: float = field(default=DEFAULT_RATE)
    n: int = 0

    @property
    def df(self):
        return self.rate / self.n


def _check_nyquist(freq, rate):
    if freq >= rate / 2:
        raise AliasingError(f"{freq} Hz is at or above Nyquist ({rate / 2} Hz)")


def make_sine(freq, amplitude=1.0, phase=0.0, duration=WINDOW / DEFAULT_RATE,
              rate=DEFAULT_RATE, unit=Unit.NONE):
    """Sampled cosine ``amplitude * cos(2 pi freq n / rate + phase)``."""
    _check_nyquist(freq, rate)
    n = duration * rate
    count = int(round(n))
    if count < 1 or abs(n - count) > 1e-6 * max(n, 1.0):
        raise ValueError("duration * rate must be a positive integer sample count")
    t = np.arange(count) / rate
    return Waveform(amplitude * np.cos(2 * np.pi * freq * t + phase), rate, unit)


def log_spaced_frequencies(f_min, f_max, n, rate=DEFAULT_RATE, window=WINDOW, snap=True):
    """Geometric frequency ladder, optionally snapped to FFT bins.

    Examples
    --------
    >>> log_spaced_frequencies(30, 2000, 15)[[0, -1]]
    array([  30., 2000.])
    """
    if not 0 < f_min < f_max:
        raise ValueError("need 0 < f_min < f_max")
    if n < 2:
        raise ValueError("need at least two frequencies")
    raw = np.geomspace(f_min, f_max, int(n))
    if not snap:
        return raw
    df = rate / window
    return np.maximum(np.round(raw / df), 1) * df


def bin_index(freq, n, rate, tol=1e-6):
    """FFT bin index of ``freq``; raises if it is not bin-centred."""
    k = freq * n / rate
    kr = int(round(k))
    if abs(k - kr) > tol * max(abs(k), 1.0):
        raise BinAlignmentError(
            f"{freq} Hz is not bin-centred for {n} samples at {rate} Hz")
    return kr


def fft_coefficient(w, freq):
    """Complex amplitude of the bin at ``freq``.

    Scaled by 2/N (1/N at DC and Nyquist) so ``cos(2 pi f t + p)`` returns
    ``exp(j p)``.
    """
    n = len(w)
    k = bin_index(freq, n, w.rate)
    if k < 0 or k > n // 2:
        raise AliasingError(f"{freq} Hz is outside 0..Nyquist")
    scale = 1.0 / n if (k == 0 or 2 * k == n) else 2.0 / n
    return kernels.dft_bin(w.samples, k) * scale


def spectrum(w):
    n = len(w)
    c = np.fft.rfft(w.samples) * (2.0 / n)
    c[0] *= 0.5
    if n % 2 == 0:
        c[-1] *= 0.5
    return Spectrum(np.fft.rfftfreq(n, 1.0 / w.rate), c, w.rate, n)


def _apply_jw(w, power):
    n = len(w)
    spec = np.fft.rfft(w.samples)
    jw = 2j * np.pi * np.fft.rfftfreq(n, 1.0 / w.rate)
    out = np.zeros_like(spec)
    keep = slice(1, n // 2 if n % 2 == 0 else None)
    out[keep] = spec[keep] * jw[keep] ** power
    return np.fft.irfft(out, n)


def integrate_to_velocity(accel, unit=Unit.VELOCITY):
    """Frequency-domain integration; the DC (and Nyquist) bins are zeroed."""
    return Waveform(_apply_jw(accel, -1), accel.rate, unit)


def differentiate(w, unit=Unit.NONE):
    """Frequency-domain derivative; inverse of :func:`integrate_to_velocity` up to the mean."""
    return Waveform(_apply_jw(w, 1), w.rate, unit)


def envelope_shift(message):
    return abs(float(np.min(message)))


def am_modulate(message, carrier_freq=CARRIER, shift=None, phase=0.0):
    """Sqrt-envelope AM: ``sqrt(m + shift) * cos(2 pi fc t + phase)``.

    ``shift`` defaults to ``|min(m)|``.  A larger shift is allowed; anything
    that would leave a negative radicand is rejected.
    """
    _check_nyquist(carrier_freq, message.rate)
    if carrier_freq < MIN_CARRIER:
        warnings.warn(f"carrier {carrier_freq} Hz below {MIN_CARRIER} Hz: the envelope "
                      "may be perceived directly", CarrierWarning, stacklevel=2)
    m = message.samples
    if shift is None:
        shift = envelope_shift(m)
    rad = m + shift
    if np.min(rad) < 0:
        if np.min(rad) < -1e-12 * max(shift, 1.0):
            raise ValueError("shift too small: negative radicand")
        rad = np.maximum(rad, 0.0)
    t = np.arange(m.size) / message.rate
    out = np.sqrt(rad) * np.cos(2 * np.pi * carrier_freq * t + phase)
    return Waveform(out, message.rate, Unit.VOLT)


def _unit_am_window(n, rate, fc, fm, phi_m, phi_c):
    t = np.arange(n) / rate
    m = np.cos(2 * np.pi * fm * t + phi_m)
    # same sampled-minimum shift as am_modulate, so the true phases are a fixed point
    rad = np.maximum(m + envelope_shift(m), 0.0)
    return np.sqrt(rad) * np.cos(2 * np.pi * fc * t + phi_c)


def _sideband_coeffs(x, n, rate, fc, fm):
    scale = 2.0 / n
    k_sb = bin_index(fc + fm, n, rate)
    k_c = bin_index(fc, n, rate)
    return kernels.dft_bin(x, k_sb) * scale, kernels.dft_bin(x, k_c) * scale


def _calibration(n=WINDOW, rate=DEFAULT_RATE, fc=CARRIER, fm=100.0):
    x = _unit_am_window(n, rate, fc, fm, 0.0, 0.0)
    c_sb, _ = _sideband_coeffs(x, n, rate, fc, fm)
    return 1.0 / abs(c_sb)


#: Scalar that maps the upper-sideband magnitude of a unit tone back to 1.
SIDEBAND_CAL = _calibration()


def am_demodulate_sideband(modulated, carrier_freq=CARRIER, message_freq=None,
                           carrier_phase=None, alias_correction=True, max_iter=50):
    """Recover a single-tone message from its upper sideband at ``fc + fm``.

    The magnitude of the ``fc + fm`` line, times a fixed calibration
    constant and squared, gives the amplitude; its phase minus the carrier phase gives the
    message phase.  The carrier phase is read from the ``fc`` line unless
    supplied.

    With ``alias_correction`` (default) the estimate is refined against an
    exact synthetic sqrt-AM window.  The sqrt envelope has harmonics at every
    multiple of ``fm`` and, for high ``fm``, some fold back onto the ``fc + fm``
    and ``fc`` bins.  The refinement re-synthesizes the unit-amplitude window
    at the current phase estimates and divides the observed lines by the
    modelled ones until the phases settle.

    Parameters
    ----------
    modulated : Waveform
        Window holding an integer number of cycles of both tones.
    carrier_freq, message_freq : float
        Hz.  ``fc + fm`` must be below Nyquist and bin-centred.
    carrier_phase : float, optional
        Known carrier phase in radians.
    alias_correction : bool
        Refine the estimate with the exact modulator model.

    Returns
    -------
    SinusoidEstimate
        Message amplitude and cosine phase.  The envelope is the square root
        of the shifted message, so the amplitude grows with the square of the
        modulated signal's scale.
    """
    if message_freq is None or message_freq <= 0:
        raise ValueError("message_freq must be positive")
    rate, n = modulated.rate, len(modulated)
    _check_nyquist(carrier_freq + message_freq, rate)
    x = modulated.samples
    c_sb, c_c = _sideband_coeffs(x, n, rate, carrier_freq, message_freq)
    if abs(c_sb) == 0.0:
        return SinusoidEstimate(message_freq, 0.0, 0.0)
    fixed_carrier = carrier_phase is not None
    if fixed_carrier:
        phi_c = float(carrier_phase)
    elif abs(c_c) > 0:
        phi_c = float(np.angle(c_c))
    else:
        raise DemodulationError("no carrier line to reference the message phase")
    phi_m = float(np.angle(c_sb)) - phi_c
    if not alias_correction:
        return SinusoidEstimate(message_freq, (abs(c_sb) * SIDEBAND_CAL) ** 2, phi_m)

    amp = abs(c_sb) * SIDEBAND_CAL
    for _ in range(max_iter):
        model = _unit_am_window(n, rate, carrier_freq, message_freq, phi_m, phi_c)
        m_sb, m_c = _sideband_coeffs(model, n, rate, carrier_freq, message_freq)
        d_m = float(np.angle(c_sb / m_sb))
        d_c = 0.0 if fixed_carrier else float(np.angle(c_c / m_c))
        amp = abs(c_sb) / abs(m_sb)
        phi_c += d_c
        phi_m += d_m - d_c
        if abs(d_m) < 1e-12 and abs(d_c) < 1e-12:
            break
    return SinusoidEstimate(message_freq, amp ** 2, phi_m)


def am_demodulate_square(modulated, lp_cutoff=2000.0, order=4, shift=None):
    """Invert the sqrt-envelope AM by squaring and low-passing.

    ``out = 2 * LP(w**2) - shift``.  The low-pass is a zero-phase
    forward-backward Butterworth cascade, so the message phase is kept.
    ``shift=None`` subtracts the mean of ``2 * LP(w**2)``, which for an
    integer number of message cycles equals the modulator's DC shift.

    Notes
    -----
    The effective magnitude response is the Butterworth magnitude squared.
    Pick ``lp_cutoff`` comfortably above the message band and below the
    image lines near ``2 fc`` (folded to ``rate - 2 fc``).
    """
    w = modulated.samples
    sos = filters.butter_lowpass(order, lp_cutoff, modulated.rate)
    pad = filters.settling_samples(order, lp_cutoff, modulated.rate, n_tau=8.0)
    env = 2.0 * filters.sos_filtfilt(sos, w * w, padlen=pad, mode="even")
    if shift is None:
        shift = float(np.mean(env))
    return Waveform(env - shift, modulated.rate, modulated.unit)
