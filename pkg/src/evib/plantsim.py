"""Synthetic finger / electrovibration / force-sensor chain.

The simulator produces the same channels a bench rig records, from known
parameters, so every analysis step can be checked against ground truth.

Signal path for one trial::

    unit tone m(t) -> sqrt-AM drive V(t)
        linear:   F_ev = H_fe * (2 LP(V^2) / g_150^2)   (shifted message, 150 Vpp scale)
        physical: F_ev = mu * LP_fe(k_e V^2)
    baseline:  F_b = mu * F_n * gate(t)        (1 on sweeps, 0.5 between)
    measured:  F   = F_b + H_sld * F_ev + noise  -> split on a 155 deg azimuth
    skin:      a   = s H_f * F_ev                -> rotated into sensor axes, in g

Every LTI stage is applied in the frequency domain over the whole record
(periodic steady state), because the lightly damped mounting pole of the
lateral rig never settles inside a 10 s trial.
"""

import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Union

import numpy as np

from . import filters
from .errors import ExtrapolationWarning, InsufficientDataError
from .models import (FORCE_RANGE, SPEED_RANGE, EmpiricalSpeedModel,
                     FirstOrderFrictionModel, SetupModel, SkinModel, TWO_PI)
from .signalcore import (CARRIER, DEFAULT_RATE, WINDOW, Unit, Waveform, am_modulate,
                         bin_index, log_spaced_frequencies)

PROTOCOL_FREQS = log_spaced_frequencies(30.0, 2000.0, 15)
PROTOCOL_SPEEDS = (20.0, 40.0, 60.0, 80.0, 100.0)
PROTOCOL_FORCES = (0.2, 0.3, 0.4, 0.5, 0.6)
REFERENCE_VPP = 150.0
AZIMUTH_DEG = 155.0
GRAVITY = 9.8
POSITION_RATE = 60.0
POSITION_STEP_MM = 0.1
SWIPE_LENGTH_MM = 37.5
RAMP_S = 0.01


def drive_gain(vpp):
    """Scale that turns a unit-amplitude sqrt-AM waveform into ``vpp`` peak-to-peak."""
    return vpp / (2.0 * np.sqrt(2.0))


@dataclass(frozen=True)
class SkinSpeedLaw:
    """Skin parameters that drift linearly with sliding speed around a reference."""

    base: SkinModel = field(default_factory=SkinModel)
    ref_speed: float = 40.0
    slope_m: float = 3.5e-5
    slope_k: float = 4.036
    slope_b: float = 0.0

    def at(self, speed):
        d = speed - self.ref_speed
        return SkinModel(self.base.m + self.slope_m * d, self.base.b + self.slope_b * d,
                         self.base.k + self.slope_k * d)


@dataclass(frozen=True)
class PlantConfig:
    """Ground-truth plant.

    ``noise_rms`` (N) fixes the total force-noise RMS across both lateral
    axes.  When it is ``None`` the level follows ``snr_db`` relative to the
    RMS of the measured electrovibration force, and acceleration noise is set
    the same way relative to the skin acceleration.  ``snr_db=None`` with
    ``noise_rms=None`` is noise free.
    """

    friction: Union[EmpiricalSpeedModel, FirstOrderFrictionModel] = field(
        default_factory=EmpiricalSpeedModel)
    skin: Union[SkinModel, SkinSpeedLaw] = field(default_factory=SkinModel)
    setup: Optional[SetupModel] = field(default_factory=SetupModel)
    mu: float = 0.5
    k_e: Optional[float] = None
    noise_rms: Optional[float] = None
    snr_db: Optional[float] = 30.0
    mode: str = "linear"

    def __post_init__(self):
        if not 0 < self.mu <= 2:
            raise ValueError("mu must lie in (0, 2]")
        if self.noise_rms is not None and self.noise_rms < 0:
            raise ValueError("noise_rms must be non-negative")
        if self.mode not in ("linear", "physical"):
            raise ValueError("mode must be 'linear' or 'physical'")
        if self.k_e is not None and not self.k_e > 0:
            raise ValueError("k_e must be positive")

    def friction_model(self, speed, warn=True):
        if isinstance(self.friction, EmpiricalSpeedModel):
            return self.friction.first_order(speed, warn=warn)
        return self.friction

    def skin_model(self, speed):
        if isinstance(self.skin, SkinSpeedLaw):
            return self.skin.at(speed)
        return self.skin

    def electrostatic_gain(self, speed):
        """``k_e`` such that identification recovers the configured K at 150 Vpp."""
        if self.k_e is not None:
            return self.k_e
        K = self.friction_model(speed, warn=False).K
        return 2.0 * K / (self.mu * drive_gain(REFERENCE_VPP) ** 2)

    def noiseless(self):
        return replace(self, noise_rms=None, snr_db=None)

    def to_dict(self):
        fr = self.friction
        d = {"mode": self.mode, "mu": self.mu, "k_e": self.k_e,
             "noise_rms": self.noise_rms, "snr_db": self.snr_db,
             "setup": None if self.setup is None else self.setup.to_dict()}
        if isinstance(fr, EmpiricalSpeedModel):
            d["friction"] = {"kind": "empirical", **fr.to_dict()}
        else:
            d["friction"] = {"kind": "first_order", "K": fr.K, "f_o_hz": fr.f_o}
        if isinstance(self.skin, SkinSpeedLaw):
            d["skin"] = {"kind": "speed_law", "base": asdict(self.skin.base),
                         "ref_speed": self.skin.ref_speed, "slope_m": self.skin.slope_m,
                         "slope_k": self.skin.slope_k, "slope_b": self.skin.slope_b}
        else:
            d["skin"] = {"kind": "fixed", **asdict(self.skin)}
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        fr = dict(d.pop("friction"))
        kind = fr.pop("kind")
        if kind == "empirical":
            friction = EmpiricalSpeedModel.from_dict(fr)
        else:
            friction = FirstOrderFrictionModel.from_hz(fr["K"], fr["f_o_hz"])
        sk = dict(d.pop("skin"))
        if sk.pop("kind") == "speed_law":
            skin = SkinSpeedLaw(SkinModel(**sk.pop("base")), **sk)
        else:
            skin = SkinModel(**sk)
        setup = d.pop("setup")
        setup = None if setup is None else SetupModel.from_dict(setup)
        return cls(friction=friction, skin=skin, setup=setup, **d)


@dataclass(frozen=True)
class TrialProtocol:
    message_freq: float
    speed: float
    force: float
    carrier: float = CARRIER
    amplitude: float = REFERENCE_VPP
    duration: float = 10.0
    sweeps: int = 6
    rate: float = DEFAULT_RATE
    participant: str = "P1"

    def __post_init__(self):
        if not (self.speed > 0 and self.force > 0):
            raise ValueError("speed and force must be positive")
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")
        if self.message_freq <= 0 or self.carrier + self.message_freq >= self.rate / 2:
            raise ValueError("carrier + message must stay below Nyquist")
        bin_index(self.message_freq, WINDOW, self.rate)

    @property
    def n_samples(self):
        return int(round(self.duration * self.rate))

    def check_grid(self):
        if not np.any(np.isclose(self.message_freq, PROTOCOL_FREQS)):
            warnings.warn(f"{self.message_freq} Hz is not a protocol frequency",
                          ExtrapolationWarning, stacklevel=3)
        lo, hi = SPEED_RANGE
        flo, fhi = FORCE_RANGE
        if not (lo <= self.speed <= hi and flo <= self.force <= fhi):
            warnings.warn(f"({self.speed} mm/s, {self.force} N) outside the tested grid",
                          ExtrapolationWarning, stacklevel=3)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class TrialRecord:
    """Synchronized channels of one trial.

    ``accel_*`` hold raw accelerometer readings in g, in the sensor frame.
    ``position_t`` (s) and ``position_mm`` sample the finger position at 60 Hz.
    """

    voltage: Waveform
    force_x: Waveform
    force_y: Waveform
    force_normal: Waveform
    accel_x: Waveform
    accel_y: Waveform
    accel_z: Waveform
    position_t: np.ndarray
    position_mm: np.ndarray
    meta: dict

    def __post_init__(self):
        chans = self.channels()
        n, r = len(self.voltage), self.voltage.rate
        if any(len(w) != n or w.rate != r for w in chans.values()):
            raise ValueError("high-rate channels must share rate and length")
        t = np.asarray(self.position_t, dtype=float)
        if t.size != np.asarray(self.position_mm).size:
            raise ValueError("position time and value arrays differ in length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("position timestamps must increase")

    def channels(self):
        return {k: getattr(self, k) for k in
                ("voltage", "force_x", "force_y", "force_normal",
                 "accel_x", "accel_y", "accel_z")}

    @property
    def protocol(self):
        return TrialProtocol(**self.meta["protocol"])


# --- elementary blocks ------------------------------------------------------

def cutoff_for_speed(model, speed):
    """Cutoff in Hz of the speed-dependent friction law."""
    return model.cutoff_hz(speed)


def electrostatic_force(v_i, k_e):
    """``k_e * v**2``."""
    return Waveform(k_e * v_i.samples ** 2, v_i.rate, Unit.NEWTON)


def apply_lti(num, den, w, method="bilinear", unit=None):
    """Filter a waveform through ``num(s)/den(s)``.

    ``method="bilinear"`` runs the bilinear-discretised biquad cascade from
    rest.  ``method="spectral"`` returns the periodic steady-state response,
    treating the record as one period.
    """
    unit = w.unit if unit is None else unit
    if method == "bilinear":
        y = filters.sos_filter(filters.to_sos(num, den, w.rate), w.samples)
    elif method == "spectral":
        filters.check_continuous_stable(den)
        y = filters.spectral_apply(w.samples, w.rate, lambda f: filters.freqresp(num, den, f))
    else:
        raise ValueError("method must be 'bilinear' or 'spectral'")
    return Waveform(y, w.rate, unit)


def setup_lateral_response(setup, freq):
    lateral = setup.lateral if isinstance(setup, SetupModel) else setup
    return lateral.response(freq)


def setup_normal_response(setup, freq):
    normal = setup.normal if isinstance(setup, SetupModel) else setup
    return normal.response(freq)


def skin_velocity(friction, skin, method="bilinear"):
    """Skin velocity (m/s) for a friction force record (N)."""
    return apply_lti(skin.num, skin.den, friction, method=method, unit=Unit.VELOCITY)


def rotation_x(deg):
    c, s = np.cos(np.radians(deg)), np.sin(np.radians(deg))
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_y(deg):
    c, s = np.cos(np.radians(deg)), np.sin(np.radians(deg))
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


#: maps accelerometer axes into the force-sensor frame
ALIGNMENT = rotation_y(180.0) @ rotation_x(AZIMUTH_DEG)


# --- trial synthesis ---------------------------------------------------------

def sweep_layout(proto):
    """(start, stop) sample ranges of the sweep plateaus, one per cycle."""
    n = proto.n_samples
    cycle = n // proto.sweeps
    plateau = min(int(round(SWIPE_LENGTH_MM / proto.speed * proto.rate)), int(0.7 * cycle))
    ramp = int(round(RAMP_S * proto.rate))
    if proto.sweeps * WINDOW > n or plateau < WINDOW + 2 * ramp:
        raise InsufficientDataError(
            f"{proto.sweeps} sweeps of >= {WINDOW} samples do not fit in {n} samples")
    starts = [i * cycle + (cycle - plateau) // 2 for i in range(proto.sweeps)]
    return [(s, s + plateau) for s in starts]


def _gate(n, layout, ramp):
    """0.5 between sweeps, 1 on plateaus, raised-cosine ramps outside the plateau."""
    g = np.full(n, 0.5)
    r = 0.5 - 0.5 * np.cos(np.pi * np.arange(1, ramp + 1) / (ramp + 1))
    for s, e in layout:
        g[s:e] = 1.0
        lo = max(s - ramp, 0)
        g[lo:s] = 0.5 + 0.5 * r[ramp - (s - lo):]
        hi = min(e + ramp, n)
        g[e:hi] = 0.5 + 0.5 * r[::-1][:hi - e]
    return g


def _position(proto, layout):
    """Finger position at 60 Hz: linear swipes on plateaus, linear return between."""
    n = proto.n_samples
    t = np.arange(int(np.floor(proto.duration * POSITION_RATE))) / POSITION_RATE
    idx_t = [0.0]
    idx_x = [0.0]
    for s, e in layout:
        span = proto.speed * (e - s) / proto.rate
        idx_t += [s / proto.rate, e / proto.rate]
        idx_x += [0.0, span]
    idx_t.append(n / proto.rate)
    idx_x.append(0.0)
    x = np.interp(t, idx_t, idx_x)
    return t, np.round(x / POSITION_STEP_MM) * POSITION_STEP_MM


def _rms(x):
    return float(np.sqrt(np.mean(np.square(x))))


def baseband_cutoff(carrier, rate):
    """Split frequency between the squared-drive baseband and its carrier image.

    ``V^2`` carries the shifted message at baseband and a copy around
    ``2 fc``, which folds to ``|2 fc|`` reduced into ``[0, rate/2]``.
    """
    image = abs(((2.0 * carrier + rate / 2.0) % rate) - rate / 2.0)
    return image / 2.0


def drive_message(voltage, carrier=CARRIER):
    """Shifted message ``2 LP(V^2) / g^2`` seen by a square-law plant at 150 Vpp scale."""
    g = drive_gain(REFERENCE_VPP)
    cut = baseband_cutoff(carrier, voltage.rate)
    sq = 2.0 * voltage.samples ** 2 / g ** 2
    return filters.spectral_apply(sq, voltage.rate, lambda f: (f < cut).astype(float))


def electrovibration_force(cfg, voltage, speed, carrier=CARRIER):
    """Friction added by the drive voltage, before the rig and without baseline.

    Linear mode applies the first-order friction law to the square-law
    message; physical mode squares the voltage through ``k_e``, low-passes
    with the same corner and scales by ``mu``.  Both agree at baseband.
    """
    fe = cfg.friction_model(speed)
    rate = voltage.rate
    if cfg.mode == "linear":
        return filters.spectral_apply(drive_message(voltage, carrier), rate, fe.response)
    f_e = electrostatic_force(voltage, cfg.electrostatic_gain(speed)).samples
    lp = FirstOrderFrictionModel(1.0, fe.omega_o)
    return cfg.mu * filters.spectral_apply(f_e, rate, lp.response)


def _noise_levels(cfg, f_meas, accel):
    if cfg.noise_rms is not None:
        return cfg.noise_rms, 0.0
    if cfg.snr_db is not None:
        ratio = 10.0 ** (-cfg.snr_db / 20.0)
        return _rms(f_meas - np.mean(f_meas)) * ratio, _rms(accel) * ratio
    return 0.0, 0.0


def _measure(cfg, voltage, speed, force, gate, rng, carrier):
    """Force, normal-force and accelerometer channels for a drive voltage."""
    n, rate = len(voltage), voltage.rate
    skin = cfg.skin_model(speed)
    f_ev = electrovibration_force(cfg, voltage, speed, carrier)
    normal = force * gate
    baseline = cfg.mu * normal
    if cfg.setup is not None:
        f_meas = filters.spectral_apply(f_ev, rate, cfg.setup.lateral.response)
    else:
        f_meas = f_ev
    accel = filters.spectral_apply(f_ev, rate, lambda f: 2j * np.pi * f * skin.response(f))
    sigma_f, sigma_a = _noise_levels(cfg, f_meas, accel)

    friction = baseline + f_meas
    th = np.radians(AZIMUTH_DEG)
    fx = friction * np.cos(th) + rng.normal(0.0, sigma_f / np.sqrt(2), n)
    fy = friction * np.sin(th) + rng.normal(0.0, sigma_f / np.sqrt(2), n)
    fn = normal + rng.normal(0.0, sigma_f / np.sqrt(2), n)

    aligned = np.zeros((3, n))
    aligned[0] = accel
    raw = ALIGNMENT.T @ aligned / GRAVITY
    raw += rng.normal(0.0, sigma_a / np.sqrt(3) / GRAVITY, raw.shape)
    N = Unit.NEWTON
    return dict(voltage=voltage,
                force_x=Waveform(fx, rate, N), force_y=Waveform(fy, rate, N),
                force_normal=Waveform(fn, rate, N),
                accel_x=Waveform(raw[0], rate, Unit.GRAVITY),
                accel_y=Waveform(raw[1], rate, Unit.GRAVITY),
                accel_z=Waveform(raw[2], rate, Unit.GRAVITY))


def simulate_trial(cfg, proto, seed=0):
    """Generate one synthetic :class:`TrialRecord`.

    Identical ``(cfg, proto, seed)`` give bit-identical records.
    """
    proto.check_grid()
    n, rate = proto.n_samples, proto.rate
    layout = sweep_layout(proto)
    rng = np.random.default_rng(seed)
    t = np.arange(n) / rate
    fe = cfg.friction_model(proto.speed, warn=False)
    skin = cfg.skin_model(proto.speed)

    message = Waveform(np.cos(TWO_PI * proto.message_freq * t), rate)
    g = drive_gain(proto.amplitude)
    voltage = Waveform(g * am_modulate(message, proto.carrier).samples, rate, Unit.VOLT)
    gate = _gate(n, layout, int(round(RAMP_S * rate)))
    chans = _measure(cfg, voltage, proto.speed, proto.force, gate, rng, proto.carrier)

    pos_t, pos_x = _position(proto, layout)
    meta = {
        "format_version": 1,
        "protocol": proto.to_dict(),
        "participant": proto.participant,
        "seed": int(seed),
        "plant": cfg.to_dict(),
        "truth": {"K": fe.K, "f_o_hz": fe.f_o, "m": skin.m, "b": skin.b, "k": skin.k,
                  "sweeps": [list(map(int, s)) for s in layout]},
    }
    return TrialRecord(position_t=pos_t, position_mm=pos_x, meta=meta, **chans)


def simulate_drive(cfg, voltage, speed, force, seed=0, carrier=CARRIER):
    """Record the plant under an arbitrary drive voltage with constant contact.

    The finger slides at ``speed`` for the whole record; there is no sweep
    structure.  Used to close the loop on rendered drive signals.
    """
    rng = np.random.default_rng(seed)
    n = len(voltage)
    chans = _measure(cfg, voltage, speed, force, np.ones(n), rng, carrier)
    t = np.arange(int(np.floor(voltage.duration * POSITION_RATE))) / POSITION_RATE
    x = np.round(speed * t / POSITION_STEP_MM) * POSITION_STEP_MM
    meta = {"format_version": 1, "seed": int(seed), "plant": cfg.to_dict(),
            "protocol": {"speed": speed, "force": force, "carrier": carrier,
                         "participant": "render"}}
    return TrialRecord(position_t=t, position_mm=x, meta=meta, **chans)
