"""Parameter records and transfer functions for the friction chain.

Frequencies handed to ``response`` methods are in Hz; stored natural and
corner frequencies are in rad/s unless the attribute name ends in ``_hz``.
"""

import json
import warnings
from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np

from .errors import ExtrapolationWarning, FormatError

TWO_PI = 2.0 * np.pi

# speed-dependent friction law used as the simulator's ground truth
DEFAULT_K = 0.0123
DEFAULT_INTERCEPT_HZ = 385.68
DEFAULT_SLOPE_HZ = 13.811
SPEED_RANGE = (20.0, 100.0)
FORCE_RANGE = (0.2, 0.6)


def _s(freqs):
    return 1j * TWO_PI * np.asarray(freqs, dtype=float)


@dataclass(frozen=True)
class FirstOrderFrictionModel:
    """``H(s) = K w_o / (s + w_o)`` from message voltage to friction force."""

    K: float
    omega_o: float

    def __post_init__(self):
        if not (self.K > 0 and self.omega_o > 0):
            raise ValueError("K and omega_o must be positive")

    @classmethod
    def from_hz(cls, K, f_o):
        return cls(float(K), TWO_PI * float(f_o))

    @property
    def f_o(self):
        return self.omega_o / TWO_PI

    @property
    def num(self):
        return np.array([self.K * self.omega_o])

    @property
    def den(self):
        return np.array([1.0, self.omega_o])

    def response(self, freqs):
        return self.K * self.omega_o / (_s(freqs) + self.omega_o)


@dataclass(frozen=True)
class SkinModel:
    """Mass-spring-damper from friction force to skin velocity, ``s / (m s^2 + b s + k)``."""

    m: float = 0.0015
    b: float = 1.3
    k: float = 444.0

    def __post_init__(self):
        if not (self.m > 0 and self.b > 0 and self.k > 0):
            raise ValueError("m, b and k must be positive")

    @property
    def num(self):
        return np.array([1.0, 0.0])

    @property
    def den(self):
        return np.array([self.m, self.b, self.k])

    @property
    def natural_hz(self):
        return np.sqrt(self.k / self.m) / TWO_PI

    @property
    def damping_ratio(self):
        return self.b / (2.0 * np.sqrt(self.k * self.m))

    def response(self, freqs):
        s = _s(freqs)
        return s / (self.m * s * s + self.b * s + self.k)


@dataclass(frozen=True)
class NormalSetup:
    """``K s w_n^2 / (s^2 + 2 zeta w_n s + w_n^2)``."""

    K_snd: float = 0.58
    omega_n: float = TWO_PI * 1454.0
    zeta: float = 0.011

    def __post_init__(self):
        if not self.K_snd > 0:
            raise ValueError("K_snd must be positive")
        _check_resonance(self.omega_n, self.zeta)

    @property
    def num(self):
        return np.array([self.K_snd * self.omega_n ** 2, 0.0])

    @property
    def den(self):
        return np.array([1.0, 2 * self.zeta * self.omega_n, self.omega_n ** 2])

    def response(self, freqs):
        s = _s(freqs)
        w2 = self.omega_n ** 2
        return self.K_snd * s * w2 / (s * s + 2 * self.zeta * self.omega_n * s + w2)


@dataclass(frozen=True)
class LateralSetup:
    """Resonant sensor stage times a mounting biquad.

    ``gain * s w_n^2 / (s^2 + 2 zeta w_n s + w_n^2) * (b3 s^2 + b2 s + b1) / (a3 s^2 + a2 s + a1)``

    ``gain`` defaults to ``1 / w_n`` of the stock rig so the cascade has
    order-unity magnitude in the tactile band.
    """

    omega_n: float = TWO_PI * 1714.0
    zeta: float = 0.06
    b3: float = 1.0
    b2: float = 92.0
    b1: float = (TWO_PI * 922.0) ** 2
    a3: float = 1.0
    a2: float = 1e-4
    a1: float = (TWO_PI * 856.0) ** 2
    gain: float = 1.0 / (TWO_PI * 1714.0)

    def __post_init__(self):
        _check_resonance(self.omega_n, self.zeta)
        if not (self.a3 > 0 and self.a2 > 0 and self.a1 > 0):
            raise ValueError("mounting denominator must be stable (a3, a2, a1 > 0)")
        if not self.gain > 0:
            raise ValueError("gain must be positive")

    @property
    def num(self):
        return self.gain * self.omega_n ** 2 * np.array([self.b3, self.b2, self.b1, 0.0])

    @property
    def den(self):
        return np.polymul([1.0, 2 * self.zeta * self.omega_n, self.omega_n ** 2],
                          [self.a3, self.a2, self.a1])

    def response(self, freqs):
        s = _s(freqs)
        w2 = self.omega_n ** 2
        sensor = self.gain * s * w2 / (s * s + 2 * self.zeta * self.omega_n * s + w2)
        mount = (self.b3 * s * s + self.b2 * s + self.b1) / (self.a3 * s * s + self.a2 * s + self.a1)
        return sensor * mount


def _check_resonance(omega_n, zeta):
    if not omega_n > 0:
        raise ValueError("natural frequency must be positive")
    if not 0 < zeta < 1:
        raise ValueError("damping ratio must lie in (0, 1)")


@dataclass(frozen=True)
class SetupModel:
    normal: NormalSetup = field(default_factory=NormalSetup)
    lateral: LateralSetup = field(default_factory=LateralSetup)

    def to_dict(self):
        return {"version": 1, "normal": asdict(self.normal), "lateral": asdict(self.lateral)}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.pop("version", 1) != 1:
            raise FormatError("unsupported setup file version")
        unknown = set(d) - {"normal", "lateral"}
        if unknown:
            raise FormatError(f"unknown setup fields: {sorted(unknown)}")
        try:
            return cls(NormalSetup(**d.get("normal", {})), LateralSetup(**d.get("lateral", {})))
        except TypeError as exc:
            raise FormatError(str(exc)) from exc

    @classmethod
    def load(cls, path=None):
        """Read a setup JSON file; ``None`` loads the shipped baseline."""
        if path is None:
            text = resources.files("evib.data").joinpath("setup_default.json").read_text()
        else:
            with open(path) as fh:
                text = fh.read()
        return cls.from_dict(json.loads(text))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def in_range(x, lo_hi):
    return lo_hi[0] <= x <= lo_hi[1]


@dataclass(frozen=True)
class EmpiricalSpeedModel:
    """Average gain plus a cutoff that grows linearly with sliding speed."""

    K_bar: float = DEFAULT_K
    intercept: float = DEFAULT_INTERCEPT_HZ
    slope: float = DEFAULT_SLOPE_HZ
    speed_range: tuple = SPEED_RANGE
    force_range: tuple = FORCE_RANGE
    amplitude_vpp: float = 150.0

    def __post_init__(self):
        if not self.intercept > 0:
            raise ValueError("intercept must be positive")
        if not (np.isfinite(self.slope) and self.K_bar > 0):
            raise ValueError("K_bar must be positive and slope finite")
        object.__setattr__(self, "speed_range", tuple(float(v) for v in self.speed_range))
        object.__setattr__(self, "force_range", tuple(float(v) for v in self.force_range))

    def cutoff_hz(self, speed, warn=True):
        if speed < 0:
            raise ValueError("speed must be non-negative")
        if warn and not in_range(speed, self.speed_range):
            warnings.warn(f"speed {speed} mm/s outside {self.speed_range}",
                          ExtrapolationWarning, stacklevel=3)
        f = self.intercept + self.slope * speed
        if f <= 0:
            raise ValueError("cutoff law gives a non-positive frequency")
        return f

    def first_order(self, speed, warn=True):
        return FirstOrderFrictionModel.from_hz(self.K_bar, self.cutoff_hz(speed, warn))

    def to_dict(self):
        return {"K_bar": self.K_bar, "intercept_hz": self.intercept,
                "slope_hz_per_mm_s": self.slope,
                "validity": {"speed_mm_s": list(self.speed_range),
                             "force_n": list(self.force_range),
                             "amplitude_vpp": self.amplitude_vpp}}

    @classmethod
    def from_dict(cls, d):
        try:
            v = d.get("validity", {})
            return cls(float(d["K_bar"]), float(d["intercept_hz"]),
                       float(d["slope_hz_per_mm_s"]),
                       tuple(v.get("speed_mm_s", SPEED_RANGE)),
                       tuple(v.get("force_n", FORCE_RANGE)),
                       float(v.get("amplitude_vpp", 150.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad empirical model: {exc}") from exc
