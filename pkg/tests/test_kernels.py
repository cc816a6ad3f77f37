import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import signal

from evib import kernels
from evib.kernels import _pykernels

try:
    from evib.kernels import _ckernels
except ImportError:  # pragma: no cover - extension not built
    _ckernels = None

BACKENDS = [pytest.param(_pykernels, id="python")]
if _ckernels is not None:
    BACKENDS.append(pytest.param(_ckernels, id="cython"))

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_compiled_backend_is_selected():
    if _ckernels is None:
        pytest.skip("extension not built")
    assert kernels.BACKEND == "cython"


@pytest.mark.parametrize("impl", BACKENDS)
def test_sosfilt_matches_scipy(impl, rng):
    sos = signal.butter(6, 0.13, output="sos")
    x = rng.standard_normal(3000)
    np.testing.assert_allclose(impl.sosfilt(sos, x), signal.sosfilt(sos, x), rtol=1e-10, atol=1e-13)


@pytest.mark.parametrize("impl", BACKENDS)
def test_moving_average_edges(impl):
    x = np.arange(6, dtype=float)
    # width 3: interior is the centred mean, edges use the clipped window
    np.testing.assert_allclose(impl.moving_average(x, 3), [0.5, 1, 2, 3, 4, 4.5])


@pytest.mark.parametrize("impl", BACKENDS)
def test_runs_above(impl):
    x = np.array([0, 1, 1, 0, 1, 1, 1, 0, 1], dtype=float)
    assert impl.runs_above(x, 0.5, 1) == [(1, 2), (4, 6), (8, 8)]
    assert impl.runs_above(x, 0.5, 3) == [(4, 6)]
    assert impl.runs_above(x, 1.0, 1) == []


@pytest.mark.parametrize("impl", BACKENDS)
def test_dft_bin_matches_fft(impl, rng):
    x = rng.standard_normal(400)
    ref = np.fft.fft(x)
    for k in (0, 1, 17, 200):
        assert abs(impl.dft_bin(x, float(k)) - ref[k]) < 1e-9 * np.abs(ref).max()


@pytest.mark.skipif(_ckernels is None, reason="extension not built")
@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.integers(1, 300), elements=finite), st.integers(1, 31),
       finite)
def test_backends_agree(x, width, thr):
    sos = np.array([[0.2, 0.3, 0.1, 1.0, -0.4, 0.2], [1.0, -1.0, 0.5, 1.0, 0.1, 0.05]])
    np.testing.assert_allclose(_ckernels.sosfilt(sos, x), _pykernels.sosfilt(sos, x),
                               rtol=1e-12, atol=1e-9)
    np.testing.assert_allclose(_ckernels.moving_average(x, width),
                               _pykernels.moving_average(x, width), rtol=1e-9, atol=1e-9)
    assert _ckernels.runs_above(x, thr, 2) == _pykernels.runs_above(x, thr, 2)
    k = float(len(x) // 3)
    assert abs(_ckernels.dft_bin(x, k) - _pykernels.dft_bin(x, k)) <= 1e-9 * (np.abs(x).sum() + 1)


def test_wrapper_validates_sos():
    with pytest.raises(ValueError):
        kernels.sosfilt(np.ones((1, 5)), np.zeros(3))
    with pytest.raises(ValueError):
        kernels.sosfilt(np.array([[1, 0, 0, 2.0, 0, 0]]), np.zeros(3))
    with pytest.raises(ValueError):
        kernels.moving_average(np.zeros(3), 0)


def test_read_only_input_accepted():
    x = np.ones(10)
    x.flags.writeable = False
    assert kernels.moving_average(x, 3).shape == (10,)
    assert kernels.dft_bin(x, 0.0) == pytest.approx(10.0)
