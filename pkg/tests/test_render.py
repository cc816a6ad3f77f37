import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evib.errors import CeilingWarning, ExtrapolationWarning
from evib.filters import spectral_apply
from evib.models import EmpiricalSpeedModel
from evib.plantsim import PlantConfig
from evib.render import (RenderConfig, SpectralMatchReport, band_errors, inverse_filter,
                         mismatch_db, render_voltage, required_boost, third_octave_centers,
                         verify_render)
from evib.signalcore import Unit, Waveform, make_sine

RATE = 20000.0
MODEL = EmpiricalSpeedModel()
CLEAN = PlantConfig(snr_db=None)


def _tones(freqs, amps, n=4000, phase_seed=0):
    rng = np.random.default_rng(phase_seed)
    t = np.arange(n) / RATE
    x = sum(a * np.cos(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi)) for f, a in zip(freqs, amps))
    return Waveform(np.asarray(x, float), RATE, Unit.NEWTON)


def test_required_boost_examples():
    assert required_boost(800.0, 661.9) == pytest.approx(np.sqrt(1 + (800 / 661.9) ** 2), rel=1e-12)
    assert required_boost(800.0, 661.9) == pytest.approx(1.5687, abs=1e-4)
    assert required_boost(0.0, 500.0) == 1.0


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 5000), st.floats(0, 5000), st.floats(100, 3000))
def test_boost_monotone(f1, f2, fo):
    lo, hi = sorted((f1, f2))
    assert required_boost(lo, fo) <= required_boost(hi, fo)
    assert required_boost(hi, fo) >= required_boost(hi, fo * 1.5)


def test_inverse_undoes_forward():
    msg = _tones([60.0, 245.0, 600.0, 985.0], [0.3, 0.2, 0.2, 0.1])
    h = MODEL.first_order(40.0)
    target = Waveform(spectral_apply(msg.samples, RATE, h.response), RATE, Unit.NEWTON)
    back = inverse_filter(target, 40.0, MODEL)
    err = np.sqrt(np.mean((back.samples - msg.samples) ** 2)) / np.sqrt(np.mean(msg.samples ** 2))
    assert err < 0.02
    assert back.unit is Unit.VOLT


def test_inverse_drops_dc():
    out = inverse_filter(Waveform(np.full(4000, 0.3), RATE, Unit.NEWTON), 40.0, MODEL)
    assert np.all(np.abs(out.samples) < 1e-12)


def test_inverse_linear(rng):
    x = Waveform(rng.normal(size=8000), RATE)
    y = Waveform(rng.normal(size=8000), RATE)
    cfg = RenderConfig(ceiling_db=60.0)
    combo = inverse_filter(Waveform(2 * x.samples - 0.5 * y.samples, RATE), 60.0, MODEL, cfg)
    parts = (2 * inverse_filter(x, 60.0, MODEL, cfg).samples
             - 0.5 * inverse_filter(y, 60.0, MODEL, cfg).samples)
    np.testing.assert_allclose(combo.samples, parts, atol=1e-9)


def test_inverse_ceiling():
    target = _tones([8000.0], [0.001])
    with pytest.warns(CeilingWarning):
        _, info = inverse_filter(target, 20.0, MODEL, return_info=True)
    assert info["ceiling_fraction"] == 1.0
    assert info["cutoff_hz"] == pytest.approx(661.90)
    with pytest.warns(ExtrapolationWarning):
        inverse_filter(_tones([100.0], [0.001]), 150.0, MODEL)


def test_config_validation():
    with pytest.raises(ValueError):
        RenderConfig(ceiling_db=0.0)
    with pytest.raises(ValueError):
        RenderConfig(band=(30.0, 2000.0))
    with pytest.raises(ValueError):
        SpectralMatchReport(np.zeros(0), np.zeros(0), 0.0, (30, 1000), 1.5)
    assert RenderConfig().ceiling == pytest.approx(10.0)


def test_render_voltage_full_scale():
    drive = render_voltage(make_sine(100.0))
    assert drive.saturation == 0.0
    assert np.max(np.abs(drive.voltage.samples)) <= 75.0
    assert np.ptp(drive.voltage.samples) > 148.0


def test_render_voltage_saturates():
    drive = render_voltage(make_sine(100.0, amplitude=10.0))
    assert drive.saturation > 0
    assert np.max(np.abs(drive.voltage.samples)) == pytest.approx(75.0)


def test_render_voltage_zero():
    drive = render_voltage(Waveform(np.zeros(4000), RATE))
    assert drive.saturation == 0.0 and np.all(drive.voltage.samples == 0)


def test_third_octave_centers():
    c = third_octave_centers(30.0, 1000.0)
    assert c[-1] == pytest.approx(1000.0)
    assert c[0] <= 30.0 * 2 ** (1 / 6)
    np.testing.assert_allclose(np.diff(np.log2(c)), 1 / 3)


def test_band_errors_unit_gain():
    f = np.fft.rfftfreq(4000, 1 / RATE)
    t = np.zeros(f.size, complex)
    t[[20, 100]] = 1.0
    c, e = band_errors(f, t, 2 * t, (30.0, 1000.0))
    assert c.size == 2
    np.testing.assert_allclose(e, 10 * np.log10(4.0))


@pytest.mark.parametrize("speed", [20.0, 60.0, 100.0])
def test_verify_render_single_tone(speed):
    rep = verify_render(_tones([500.0], [0.004], n=8000), speed, RenderConfig(), CLEAN)
    assert rep.worst_db <= 0.5
    assert rep.saturation == 0.0
    assert rep.achieved_peak == pytest.approx(0.004, rel=0.06)
    assert set(rep.to_dict()) >= {"band_hz", "worst_error_db", "saturation_fraction", "bands"}


def test_verify_render_mismatch_matches_closed_form():
    expect = mismatch_db(MODEL, 800.0, 20.0, 100.0)
    assert expect == pytest.approx(3.100, abs=1e-3)
    rep = verify_render(_tones([800.0], [0.004], n=8000), 100.0, RenderConfig(), CLEAN,
                        model=MODEL, design_speed=20.0)
    assert abs(abs(rep.worst_db) - expect) <= 0.3


def test_verify_render_zero_target():
    rep = verify_render(Waveform(np.zeros(8000), RATE, Unit.NEWTON), 60.0, RenderConfig(), CLEAN)
    assert rep.worst_db == 0.0 and rep.band_centers.size == 0
    assert rep.achieved_peak < 1e-12


def test_verify_render_needs_model():
    from evib.models import FirstOrderFrictionModel
    plant = PlantConfig(friction=FirstOrderFrictionModel.from_hz(0.0123, 900.0), snr_db=None)
    with pytest.raises(ValueError):
        verify_render(_tones([100.0], [0.001]), 60.0, RenderConfig(), plant)
