"""Speed-adaptive compensation of the friction low-pass.

The friction response to the message voltage rolls off above a cutoff that
rises with sliding speed.  ``inverse_filter`` pre-emphasizes a target
friction waveform by the inverse of that first-order law, ``render_voltage``
turns the resulting message into a sqrt-AM drive, and ``verify_render``
pushes the drive through the simulated plant to measure how well the
achieved friction spectrum tracks the target.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import CeilingWarning, ExtrapolationWarning
from .models import TWO_PI, EmpiricalSpeedModel, in_range
from .plantsim import REFERENCE_VPP, drive_gain, simulate_drive
from .preprocess import reduce_lateral_to_1d
from .signalcore import CARRIER, WINDOW, Unit, Waveform, envelope_shift


@dataclass(frozen=True)
class RenderConfig:
    carrier: float = CARRIER
    v_limit: float = REFERENCE_VPP
    ceiling_db: float = 20.0
    block: int = WINDOW
    band: tuple = (30.0, 1000.0)

    def __post_init__(self):
        if not self.ceiling_db > 0:
            raise ValueError("ceiling must be positive")
        if not 0 < self.band[0] < self.band[1] <= 1000.0:
            raise ValueError("band must satisfy 0 < lo < hi <= 1000 Hz")
        if self.block < 2:
            raise ValueError("block must hold at least two samples")

    @property
    def ceiling(self):
        return 10.0 ** (self.ceiling_db / 20.0)


@dataclass(frozen=True)
class RenderedDrive:
    voltage: Waveform
    saturation: float


@dataclass(frozen=True)
class SpectralMatchReport:
    band_centers: np.ndarray
    band_error_db: np.ndarray
    worst_db: float
    band: tuple
    saturation: float
    achieved_peak: float = 0.0
    ceiling_fraction: float = 0.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.saturation <= 1.0:
            raise ValueError("saturation fraction must lie in [0, 1]")

    def to_dict(self):
        return {"band_hz": list(self.band), "worst_error_db": self.worst_db,
                "saturation_fraction": self.saturation,
                "ceiling_fraction": self.ceiling_fraction,
                "achieved_peak_n": self.achieved_peak,
                "bands": [{"center_hz": float(c), "error_db": float(e)}
                          for c, e in zip(self.band_centers, self.band_error_db)],
                **self.extra}


def required_boost(freq, cutoff_hz):
    """Magnitude of the first-order inverse relative to DC, ``|1 + j f / f_o|``."""
    return np.abs(1.0 + 1j * np.asarray(freq, dtype=float) / cutoff_hz)


def _blocks(n, size):
    return [(s, min(s + size, n)) for s in range(0, n, size)]


def inverse_filter(target, speed, model, cfg=RenderConfig(), return_info=False):
    """Message voltage that drives the friction law to ``target`` (N).

    Each block of ``cfg.block`` samples is transformed, multiplied by
    ``(j w + w_o) / (K w_o)`` with the boost magnitude ``|1 + j w / w_o|``
    capped at ``cfg.ceiling`` (phase kept), and transformed back.  The DC
    bin is zeroed: static friction comes from the contact force, not the
    drive.

    Returns the message as a Waveform (unit V, unit amplitude = full drive),
    plus a dict with the fraction of bins clamped when ``return_info``.
    """
    if not in_range(speed, model.speed_range):
        warnings.warn(f"speed {speed} mm/s outside {model.speed_range}",
                      ExtrapolationWarning, stacklevel=2)
    f_o = model.cutoff_hz(speed, warn=False)
    x = target.samples
    out = np.zeros_like(x)
    clamped = total = 0
    for a, b in _blocks(x.size, cfg.block):
        n = b - a
        spec = np.fft.rfft(x[a:b])
        f = np.fft.rfftfreq(n, 1.0 / target.rate)
        boost = required_boost(f, f_o)
        hit = boost > cfg.ceiling
        gain = np.where(hit, cfg.ceiling / boost, 1.0)
        h = (1.0 + 1j * f / f_o) * gain / model.K_bar
        h[0] = 0.0
        if n % 2 == 0:
            h[-1] = h[-1].real
        out[a:b] = np.fft.irfft(spec * h, n)
        active = np.abs(spec) > 1e-12 * max(np.abs(spec).max(), 1e-300)
        clamped += int(np.sum(hit & active))
        total += int(np.sum(active))
    frac = clamped / total if total else 0.0
    if clamped:
        warnings.warn(f"inverse gain ceiling engaged on {clamped} of {total} active bins",
                      CeilingWarning, stacklevel=2)
    wave = Waveform(out, target.rate, Unit.VOLT)
    if return_info:
        return wave, {"ceiling_fraction": frac, "cutoff_hz": f_o}
    return wave


def render_voltage(message, cfg=RenderConfig()):
    """Sqrt-AM drive at the reference gain, clipped to ``+-v_limit/2``.

    The envelope shift is the block minimum, block by block.  Returns the
    drive and the fraction of samples that hit the limiter.
    """
    g = drive_gain(REFERENCE_VPP)
    m = message.samples
    out = np.empty_like(m)
    t = np.arange(m.size) / message.rate
    for a, b in _blocks(m.size, cfg.block):
        seg = m[a:b]
        env = np.sqrt(np.maximum(seg + envelope_shift(seg), 0.0))
        out[a:b] = g * env * np.cos(TWO_PI * cfg.carrier * t[a:b])
    half = cfg.v_limit / 2.0
    sat = float(np.mean(np.abs(out) > half))
    return RenderedDrive(Waveform(np.clip(out, -half, half), message.rate, Unit.VOLT), sat)


def third_octave_centers(lo, hi):
    k = np.arange(np.floor(3 * np.log2(lo / 1000.0)), np.ceil(3 * np.log2(hi / 1000.0)) + 1)
    return 1000.0 * 2.0 ** (k / 3.0)


def band_errors(freqs, target_spec, achieved_spec, band, rel_floor=1e-6):
    """Per third-octave error ``10 log10(sum|A|^2 / sum|T|^2)`` over bins with target content."""
    centers = third_octave_centers(*band)
    t2 = np.abs(target_spec) ** 2
    a2 = np.abs(achieved_spec) ** 2
    live = t2 > rel_floor ** 2 * max(t2.max(), 1e-300)
    out_c, out_e = [], []
    for c in centers:
        lo, hi = c * 2 ** (-1 / 6), c * 2 ** (1 / 6)
        sel = live & (freqs >= max(lo, band[0])) & (freqs < min(hi, band[1] + 1e-9))
        if sel.any() and t2[sel].sum() > 0:
            out_c.append(c)
            out_e.append(10.0 * np.log10(a2[sel].sum() / t2[sel].sum()))
    return np.array(out_c), np.array(out_e)


def verify_render(target, speed, cfg, plant, model=None, design_speed=None, force=0.4, seed=0):
    """Closed-loop check of the compensation against the simulated plant.

    The drive designed with ``model`` at ``design_speed`` (default
    ``speed``) is applied to ``plant`` sliding at ``speed``.  The measured
    lateral force is reduced to one axis, the rig response is divided out of
    every bin, and the achieved spectrum is compared with the target.
    """
    if model is None:
        if not isinstance(plant.friction, EmpiricalSpeedModel):
            raise ValueError("pass a model when the plant friction law is fixed")
        model = plant.friction
    design_speed = speed if design_speed is None else design_speed
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CeilingWarning)
        message, info = inverse_filter(target, design_speed, model, cfg, return_info=True)
    drive = render_voltage(message, cfg)
    rec = simulate_drive(plant, drive.voltage, speed, force, seed=seed, carrier=cfg.carrier)
    f1 = reduce_lateral_to_1d(rec.force_x, rec.force_y)
    n = len(f1)
    freqs = np.fft.rfftfreq(n, 1.0 / target.rate)
    achieved = np.fft.rfft(f1.samples)
    if plant.setup is not None:
        h = plant.setup.lateral.response(freqs[1:])
        achieved[1:] = achieved[1:] / h
    tspec = np.fft.rfft(target.samples)
    tspec[0] = 0.0
    achieved[0] = 0.0
    centers, errs = band_errors(freqs, tspec, achieved, cfg.band)
    inband = (freqs >= cfg.band[0]) & (freqs <= cfg.band[1])
    peak = float(np.abs(achieved[inband]).max() * 2.0 / n) if inband.any() else 0.0
    worst = float(np.max(np.abs(errs))) if errs.size else 0.0
    return SpectralMatchReport(centers, errs, worst, tuple(cfg.band), drive.saturation,
                               peak, info["ceiling_fraction"])


def mismatch_db(model, freq, design_speed, run_speed):
    """Closed-form error when the inverse for one speed meets the plant at another."""
    fd = model.cutoff_hz(design_speed, warn=False)
    fr = model.cutoff_hz(run_speed, warn=False)
    return float(20.0 * np.log10(required_boost(freq, fd) / required_boost(freq, fr)))
