import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gaitseq.exceptions import InsufficientData, InvalidCutoff, InvalidTimestamps
from gaitseq.signal import (
    TimedSeries,
    UniformSeries,
    align,
    estimate_delay,
    lowpass,
    parse_label,
    resample,
    rms,
)


def irregular_times(rng, duration, mean_rate=100.0, jitter=0.3):
    n = int(duration * mean_rate * 1.3) + 2
    dt = rng.uniform(1 - jitter, 1 + jitter, n) / mean_rate
    t = np.concatenate([[0.0], np.cumsum(dt)])
    return t[t <= duration]


class TestResample:
    def test_constant(self):
        t = irregular_times(np.random.default_rng(0), 2.0)
        out = resample(TimedSeries(t, np.full(t.size, 5.0)), 200.0)
        assert out.sample_rate == 200.0
        np.testing.assert_array_equal(out.values, 5.0)

    def test_ramp_is_exact(self):
        t = np.array([0.0, 0.013, 0.021, 0.05])
        out = resample(TimedSeries(t, 2 * t), 200.0)
        grid = out.timestamps
        np.testing.assert_allclose(grid, [0.0, 0.005, 0.01, 0.015, 0.02, 0.025, 0.03, 0.035, 0.04, 0.045, 0.05])
        np.testing.assert_allclose(out.values[:, 0], 2 * grid, rtol=0, atol=1e-15)

    def test_sine(self):
        # linear interpolation error is bounded by w^2 h^2 / 8 for the widest gap h
        w = 2 * np.pi * 5
        rng = np.random.default_rng(1)
        t = irregular_times(rng, 3.0)
        out = resample(TimedSeries(t, np.sin(w * t)), 200.0)
        err = np.abs(out.values[:, 0] - np.sin(w * out.timestamps))
        assert err.max() <= w ** 2 * np.diff(t).max() ** 2 / 8
        assert err.max() < 2.5e-2

    def test_sine_dense_input(self):
        t = irregular_times(np.random.default_rng(2), 3.0, mean_rate=150.0, jitter=0.1)
        out = resample(TimedSeries(t, np.sin(2 * np.pi * 5 * t)), 200.0)
        assert np.abs(out.values[:, 0] - np.sin(2 * np.pi * 5 * out.timestamps)).max() < 1e-2

    def test_no_extrapolation(self):
        t = np.array([0.1, 0.2, 0.3333])
        out = resample(TimedSeries(t, t), 200.0)
        assert out.timestamps[0] == pytest.approx(0.1)
        assert out.timestamps[-1] <= 0.3333

    def test_errors(self):
        with pytest.raises(InsufficientData):
            resample(TimedSeries([0.0], [1.0]))
        with pytest.raises(InvalidTimestamps):
            TimedSeries([0.0, 0.2, 0.1], [1.0, 2.0, 3.0])

    @settings(max_examples=25, deadline=None)
    @given(st.integers(20, 400), st.integers(0, 10_000))
    def test_idempotent_on_uniform_input(self, n, seed):
        rng = np.random.default_rng(seed)
        t = 0.37 + np.arange(n) / 200.0
        v = rng.normal(size=(n, 2))
        out = resample(TimedSeries(t, v), 200.0)
        assert len(out) == n
        assert np.max(np.abs(out.values - v)) < 1e-12


class TestLowpass:
    fs = 200.0

    def series(self, x):
        return UniformSeries(self.fs, 0.0, x)

    def test_dc(self):
        out = lowpass(self.series(np.full(1000, 3.0)), 40.0)
        np.testing.assert_allclose(out.values, 3.0, rtol=0, atol=1e-9)

    def test_stopband_tone(self):
        t = np.arange(2000) / self.fs
        x = np.sin(2 * np.pi * 80 * t)
        out = lowpass(self.series(x), 40.0).values[:, 0]
        assert rms(out) < 0.01 * rms(x)

    def test_keeps_passband(self):
        t = np.arange(2000) / self.fs
        slow = np.sin(2 * np.pi * 2 * t)
        out = lowpass(self.series(slow + np.sin(2 * np.pi * 90 * t)), 40.0).values[:, 0]
        assert np.corrcoef(out, slow)[0, 1] > 0.999

    def test_second_pass_changes_little(self):
        # a second pass only acts on the transition band, so use noise already below it
        x = lowpass(self.series(np.random.default_rng(0).normal(size=4000)), 15.0)
        once = lowpass(x, 40.0)
        twice = lowpass(once, 40.0)
        assert abs(rms(twice.values) - rms(once.values)) < 0.01 * rms(once.values)

    def test_second_pass_attenuates_transition_band(self):
        x = np.random.default_rng(0).normal(size=4000)
        once = lowpass(self.series(x), 40.0)
        twice = lowpass(once, 40.0)
        assert rms(twice.values) < rms(once.values)

    @pytest.mark.parametrize("cutoff", [0.0, -1.0, 100.0, 150.0])
    def test_invalid_cutoff(self, cutoff):
        with pytest.raises(InvalidCutoff):
            lowpass(self.series(np.zeros(500)), cutoff)

    def test_too_short(self):
        with pytest.raises(InsufficientData):
            lowpass(self.series(np.zeros(10)), 40.0)


def smooth_noise(n, seed):
    # low-passed noise has a single clear autocorrelation peak
    x = np.random.default_rng(seed).normal(size=n)
    return lowpass(UniformSeries(200.0, 0.0, x), 20.0).values[:, 0]


class TestDelay:
    def test_shift_17(self):
        x = smooth_noise(1200, 0)
        a = UniformSeries(200.0, 0.0, x[100:1100])
        b = UniformSeries(200.0, 0.0, x[100 - 17:1100 - 17])
        assert estimate_delay(a, b, 40) == 17

    def test_identical(self):
        a = UniformSeries(200.0, 0.0, smooth_noise(800, 1))
        assert estimate_delay(a, a, 40) == 0

    def test_noise_is_deterministic(self):
        rng = np.random.default_rng(5)
        a = UniformSeries(200.0, 0.0, rng.normal(size=600))
        b = UniformSeries(200.0, 0.0, rng.normal(size=600))
        first = estimate_delay(a, b, 50)
        assert -50 <= first <= 50
        assert estimate_delay(a, b, 50) == first

    @settings(max_examples=30, deadline=None)
    @given(st.integers(-30, 30), st.integers(0, 1000))
    def test_recovers_any_shift(self, k, seed):
        x = smooth_noise(1000, seed)
        a = UniformSeries(200.0, 0.0, x[100:900])
        b = UniformSeries(200.0, 0.0, x[100 - k:900 - k])
        assert estimate_delay(a, b, 30) == k


def three_streams(n_acc=1000, n_gyr=1000, n_ang=1000, delay=0, seed=0):
    x = smooth_noise(max(n_acc, n_gyr, n_ang) + 100, seed)
    acc = UniformSeries(200.0, 0.0, np.column_stack([x[:n_acc] * 0.1, x[:n_acc] * 0.2, x[:n_acc]]))
    gyr = UniformSeries(200.0, 0.0, np.tile(np.arange(n_gyr, dtype=float)[:, None], 3))
    ang_src = np.concatenate([np.zeros(delay), x])[:n_ang]
    ang = UniformSeries(200.0, 0.0, np.column_stack([ang_src, ang_src, -ang_src]))
    return acc, gyr, ang


class TestAlign:
    def test_already_aligned(self):
        acc, gyr, ang = three_streams()
        tr = align(acc, gyr, ang)
        np.testing.assert_array_equal(tr.accel.values, acc.values)
        np.testing.assert_array_equal(tr.gyro.values, gyr.values)
        np.testing.assert_array_equal(tr.angles.values, ang.values)

    def test_delayed_angles(self):
        acc, gyr, ang = three_streams(delay=10)
        tr = align(acc, gyr, ang)
        assert tr.meta["video_lag"] == 10
        assert len(tr) == 990
        # angle row m now sits next to accel row m: the delay is undone
        np.testing.assert_array_equal(tr.angles.values[:, 1], tr.accel.values[:, 2])

    def test_unequal_lengths(self):
        acc, gyr, ang = three_streams(1000, 1000, 980)
        tr = align(acc, gyr, ang)
        assert len(tr.accel) == len(tr.gyro) == len(tr.angles) <= 980

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 25), st.integers(900, 1000), st.integers(0, 100))
    def test_outputs_share_grid(self, delay, n_ang, seed):
        tr = align(*three_streams(1000, 970, n_ang, delay, seed))
        streams = (tr.accel, tr.gyro, tr.angles)
        assert len({len(s) for s in streams}) == 1
        assert len({s.sample_rate for s in streams}) == 1
        assert len({s.start_time for s in streams}) == 1


def test_parse_label():
    assert parse_label("Normal") == 0
    assert parse_label("anomalous") == 1
    assert parse_label(1) == 1
    with pytest.raises(ValueError):
        parse_label("limping")
