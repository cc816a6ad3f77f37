import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from evib.errors import DemodulationError, FormatError, SkippedSweepWarning
from evib.models import SetupModel, SkinModel
from evib.plantsim import (ALIGNMENT, PROTOCOL_FREQS, PlantConfig, TrialProtocol, drive_gain,
                           simulate_trial)
from evib.preprocess import (LEFT, RIGHT, FrfPointSet, SweepSegment, SweepWindow,
                             align_accelerometer, detect_sweeps, estimate_speed,
                             extract_windows, frf_point, reduce_lateral_to_1d)
from evib.signalcore import Unit, Waveform, am_modulate, make_sine

RATE = 20000.0


def _w(x, unit=Unit.NEWTON):
    return Waveform(np.asarray(x, float), RATE, unit)


# --- reduce_lateral_to_1d --------------------------------------------------

def test_reduce_single_axis_passthrough():
    fx = make_sine(100.0, unit=Unit.NEWTON)
    out = reduce_lateral_to_1d(fx, _w(np.zeros(len(fx))))
    np.testing.assert_allclose(out.samples, fx.samples, atol=1e-12)
    fy = _w(0.3 + 0.1 * fx.samples)
    out = reduce_lateral_to_1d(_w(np.zeros(len(fx))), fy)
    np.testing.assert_allclose(out.samples, fy.samples, atol=1e-12)


@pytest.mark.parametrize("theta", [0.3, 1.2, 2.5, -2.0])
def test_reduce_recovers_signal_along_angle(theta):
    f = 0.2 + 0.05 * make_sine(245.0, phase=0.4).samples
    out = reduce_lateral_to_1d(_w(f * np.cos(theta)), _w(f * np.sin(theta)))
    # orientation follows the mean force, so the positive friction comes back
    np.testing.assert_allclose(out.samples, f, atol=1e-12)


def test_reduce_preserves_noise_power(rng):
    fx, fy = rng.normal(0, 1, 4000), rng.normal(0, 2, 4000)
    out = reduce_lateral_to_1d(_w(fx), _w(fy))
    assert np.sum(out.samples ** 2) == pytest.approx(np.sum(fx ** 2 + fy ** 2), rel=0.02)


@settings(max_examples=30, deadline=None)
@given(arrays(float, 64, elements=st.floats(-10, 10)), arrays(float, 64, elements=st.floats(-10, 10)))
def test_reduce_per_bin_power(fx, fy):
    out = reduce_lateral_to_1d(_w(fx), _w(fy))
    p_out = np.abs(np.fft.rfft(out.samples)) ** 2
    p_in = np.abs(np.fft.rfft(fx)) ** 2 + np.abs(np.fft.rfft(fy)) ** 2
    np.testing.assert_allclose(p_out, p_in, rtol=1e-9, atol=1e-9 * (p_in.max() + 1e-30))


def test_reduce_rejects_mismatch():
    with pytest.raises(ValueError):
        reduce_lateral_to_1d(_w(np.zeros(10)), _w(np.zeros(11)))


# --- align_accelerometer ---------------------------------------------------

def test_align_examples():
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = 1.0
        raw = ALIGNMENT.T @ e / 9.8
        out = align_accelerometer(*(_w([r], Unit.GRAVITY) for r in raw))
        np.testing.assert_allclose([o.samples[0] for o in out], e, atol=1e-12)
        assert out[0].unit is Unit.ACCEL


def test_align_round_trip(rng):
    true = rng.normal(size=(3, 500))
    raw = ALIGNMENT.T @ true / 9.8
    out = align_accelerometer(*(_w(r, Unit.GRAVITY) for r in raw))
    np.testing.assert_allclose(np.vstack([o.samples for o in out]), true, rtol=1e-3, atol=1e-12)
    np.testing.assert_allclose(ALIGNMENT @ ALIGNMENT.T, np.eye(3), atol=1e-12)


# --- detect_sweeps ---------------------------------------------------------

def test_detect_six_sweeps(clean_trial):
    f1 = reduce_lateral_to_1d(clean_trial.force_x, clean_trial.force_y)
    segs = detect_sweeps(f1, (clean_trial.position_t, clean_trial.position_mm))
    truth = clean_trial.meta["truth"]["sweeps"]
    assert len(segs) == 6
    for seg, (s, e) in zip(segs, truth):
        assert s - 600 <= seg.start_index and seg.end_index <= e + 600
        assert abs(seg.middle_index - (s + e) / 2) < 50
        assert seg.left_to_right


def test_detect_constant_gives_nothing():
    assert detect_sweeps(_w(np.full(40000, 0.4))) == []


def test_detect_square_wave_middles():
    k = np.arange(40000)
    x = ((k // 4000) % 2 == 1).astype(float)
    segs = detect_sweeps(_w(x))
    # high runs [4000, 7999], [12000, 15999], ...; middle rounds half up
    assert [(s.start_index, s.end_index) for s in segs] == [
        (4000, 7999), (12000, 15999), (20000, 23999), (28000, 31999), (36000, 39999)]
    assert [s.middle_index for s in segs] == [6000, 14000, 22000, 30000, 38000]


@settings(max_examples=20, deadline=None)
@given(st.lists(st.tuples(st.integers(5000, 9000), st.integers(2000, 6000)), min_size=1, max_size=5),
       st.integers(0, 2 ** 32 - 1))
def test_detect_segments_sorted_disjoint(runs, seed):
    rng = np.random.default_rng(seed)
    parts = [np.zeros(3000)]
    for on, off in runs:
        parts += [np.ones(on), np.zeros(off)]
    x = np.concatenate(parts) + rng.normal(0, 0.05, sum(p.size for p in parts))
    segs = detect_sweeps(_w(x))
    assert len(segs) == len(runs)
    for a, b in zip(segs, segs[1:]):
        assert a.end_index < b.start_index
    for s in segs:
        assert s.start_index < s.middle_index < s.end_index


# --- extract_windows -------------------------------------------------------

def test_window_bounds(clean_trial):
    seg = SweepSegment(4000, 6000, 5000)
    assert seg.window == (3001, 7000)
    (w,) = extract_windows(clean_trial, [seg])
    assert w.start == 3001 and len(w.voltage) == 4000 == len(w.friction_1d) == len(w.velocity)
    np.testing.assert_array_equal(w.voltage.samples, clean_trial.voltage.samples[3001:7001])
    assert LEFT + RIGHT + 1 == 4000


def test_window_out_of_range_skipped(clean_trial):
    segs = [SweepSegment(500, 1500, 1000), SweepSegment(4000, 6000, 5000),
            SweepSegment(199000, 199990, 199500)]
    with pytest.warns(SkippedSweepWarning):
        out = extract_windows(clean_trial, segs)
    assert [w.sweep for w in out] == [2]


def test_window_ordinals_and_direction(clean_trial):
    f1 = reduce_lateral_to_1d(clean_trial.force_x, clean_trial.force_y)
    segs = detect_sweeps(f1)
    out = extract_windows(clean_trial, segs)
    assert [w.sweep for w in out] == [1, 2, 3, 4, 5, 6]
    flipped = [SweepSegment(s.start_index, s.end_index, s.middle_index, i % 2 == 0)
               for i, s in enumerate(segs)]
    assert [w.sweep for w in extract_windows(clean_trial, flipped, True)] == [1, 3, 5]


def test_window_translation(clean_trial):
    a = extract_windows(clean_trial, [SweepSegment(40000, 60000, 50000)])[0]
    b = extract_windows(clean_trial, [SweepSegment(40100, 60100, 50100)])[0]
    np.testing.assert_array_equal(a.voltage.samples[100:], b.voltage.samples[:-100])


# --- frf_point ---------------------------------------------------------

def _identity_window(fm, gain=1.0, phase=0.0):
    t = np.arange(4000) / RATE
    msg = _w(np.cos(2 * np.pi * fm * t), Unit.NONE)
    v = Waveform(drive_gain(150.0) * am_modulate(msg).samples, RATE, Unit.VOLT)
    fric = _w(0.2 + gain * np.cos(2 * np.pi * fm * t + phase))
    meta = {"protocol": {"speed": 40.0, "force": 0.3, "participant": "P1"}}
    return SweepWindow(v, fric, _w(np.zeros(4000), Unit.VELOCITY), 1, meta)


@pytest.mark.parametrize("fm", [30.0, 330.0, 2000.0])
def test_frf_identity_plant(fm):
    pts = frf_point(_identity_window(fm), fm)
    assert len(pts) == 1 and pts.sweep[0] == 1 and pts.participant[0] == "P1"
    assert abs(pts.response[0] - 1.0) < 0.005


def test_frf_gain_and_phase():
    pts = frf_point(_identity_window(135.0, 0.5, -0.7), 135.0)
    assert pts.response[0] == pytest.approx(0.5 * np.exp(-0.7j), rel=0.005)


def test_frf_zero_input_raises():
    w = _identity_window(100.0)
    zero = SweepWindow(Waveform(np.zeros(4000), RATE, Unit.VOLT), w.friction_1d, w.velocity, 1, w.meta)
    with pytest.raises(DemodulationError):
        frf_point(zero, 100.0)
    with pytest.raises(ValueError):
        frf_point(w, 100.0, kind="other")


def _trial_points(fm, kind, speed=40.0):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rec = simulate_trial(PlantConfig(snr_db=None), TrialProtocol(fm, speed, 0.3), 1)
    f1 = reduce_lateral_to_1d(rec.force_x, rec.force_y)
    wins = extract_windows(rec, detect_sweeps(f1))
    return FrfPointSet.concat(frf_point(w, fm, kind=kind) for w in wins)


@pytest.mark.parametrize("fm", PROTOCOL_FREQS)
def test_frf_friction_matches_analytic(fm):
    pts = _trial_points(fm, "friction")
    lat = SetupModel().lateral
    expect = PlantConfig().friction.first_order(40.0).response(fm) * lat.response(fm)
    assert len(pts) == 6
    assert np.all(np.abs(np.abs(pts.response) / abs(expect) - 1) < 0.02)
    assert np.all(np.abs(np.angle(pts.response / expect)) < 0.05)


@pytest.mark.parametrize("fm", [55.0, 100.0, 445.0])
def test_frf_skin_matches_analytic(fm):
    pts = _trial_points(fm, "skin")
    expect = SkinModel().response(fm) / SetupModel().lateral.response(fm)
    assert np.all(np.abs(pts.response / expect - 1) < 0.02)


# --- estimate_speed ----------------------------------------------------

@pytest.mark.parametrize("speed", [20.0, 40.0, 60.0, 100.0])
def test_speed_from_trial(speed):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rec = simulate_trial(PlantConfig(snr_db=None), TrialProtocol(100.0, speed, 0.3))
    assert estimate_speed(rec.position_t, rec.position_mm) == pytest.approx(speed, abs=1.0)


def test_speed_examples():
    t = np.arange(120) / 60.0
    assert estimate_speed(t, np.round(40 * t, 1)) == pytest.approx(40.0, abs=1.0)
    assert estimate_speed(t, np.full(t.size, 12.3)) == 0.0
    assert estimate_speed(t, 60 * t, intervals=[(0.0, 1.0)]) == pytest.approx(60.0)


# --- FrfPointSet -------------------------------------------------------

def _points(rng, n, part="P1"):
    return FrfPointSet(rng.choice(PROTOCOL_FREQS, n), rng.normal(size=n) + 1j * rng.normal(size=n),
                       rng.integers(1, 7, n), rng.choice([20.0, 60.0], n), 0.3, part)


def test_points_csv_round_trip(tmp_path, rng):
    pts = _points(rng, 25)
    p = tmp_path / "frf_points.csv"
    pts.write_csv(p)
    assert FrfPointSet.read_csv(p) == pts
    FrfPointSet().write_csv(p)
    assert len(FrfPointSet.read_csv(p)) == 0
    p.write_text("freq,re\n1,2\n")
    with pytest.raises(FormatError):
        FrfPointSet.read_csv(p)


def test_points_merge_order_independent(rng):
    a, b, c = _points(rng, 10, "P1"), _points(rng, 7, "P2"), _points(rng, 4, "P3")
    assert ((a + b) + c).sorted() == (c + (b + a)).sorted()
    assert len(a + b) == 17


def test_points_reject_nonfinite():
    with pytest.raises(ValueError):
        FrfPointSet([30.0], [np.nan])
