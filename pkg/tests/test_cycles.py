import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from gaitseq.cycles import (
    CycleStandardizer,
    GaitCycle,
    GaitEvents,
    NormStats,
    apply_norm,
    detect_events,
    detrend_cycle,
    extract_cycles,
    fit_norm_stats,
    local_extrema,
    normalize_length,
    slice_cycles,
)
from gaitseq.exceptions import DegenerateChannel, NoGaitDetected
from gaitseq.signal import MultiModalTrace, UniformSeries, align, condition
from gaitseq.synth import SynthConfig, synth_walk

FS = 200.0


def bumps(duration=10.0, minima=None, spikes=()):
    """Vertical acceleration with sharp dips at ``minima`` on a 1 Hz carrier."""
    t = np.arange(int(duration * FS)) / FS
    if minima is None:
        minima = np.arange(0.5, duration, 1.0)
    x = 9.81 - 0.5 * np.cos(2 * np.pi * (t - 0.5))
    for m in minima:
        x -= 3.0 * np.exp(-0.5 * ((t - m) / 0.02) ** 2)
    for m, a in spikes:
        x -= a * np.exp(-0.5 * ((t - m) / 0.01) ** 2)
    return x


def flat_walk(walk):
    streams = [condition(s) for s in (walk.accel, walk.gyro, walk.angles)]
    return align(*streams, label=walk.label, walk_id=walk.walk_id)


class TestDetectEvents:
    def test_bumps(self):
        minima = np.arange(0.5, 10.0, 1.0)
        ev = detect_events(bumps(), FS)
        truth = np.round(minima * FS).astype(int)
        assert ev.ic.size == truth.size
        assert np.abs(ev.ic - truth).max() <= 5
        assert ev.fc.size == ev.ic.size - 1
        assert np.all((ev.fc > ev.ic[:-1]) & (ev.fc < ev.ic[1:]))

    def test_constant(self):
        with pytest.raises(NoGaitDetected):
            detect_events(np.full(2000, 9.81), FS)

    def test_too_short(self):
        with pytest.raises(NoGaitDetected):
            detect_events(bumps(duration=1.5), FS)

    def test_spike_after_contact_rejected(self):
        clean = detect_events(bumps(), FS)
        spiky = detect_events(bumps(spikes=[(3.6, 2.5)]), FS)
        # the spike is not reported; the smoothed contact next to it may move a little
        assert spiky.ic.size == clean.ic.size
        assert np.abs(spiky.ic - clean.ic).max() <= 5

    def test_time_reversal(self):
        x = bumps()
        ic = detect_events(x, FS).ic
        ic_rev = detect_events(x[::-1], FS).ic
        np.testing.assert_allclose(np.sort(x.size - 1 - ic_rev), ic, atol=1)

    def test_series_input(self):
        x = bumps()
        series = UniformSeries(FS, 0.0, np.column_stack([np.zeros_like(x), np.zeros_like(x), x]))
        np.testing.assert_array_equal(detect_events(series).ic, detect_events(x, FS).ic)

    @pytest.mark.parametrize("seed", range(5))
    def test_synthetic_normal_walk(self, seed):
        walk = synth_walk("normal", seed=seed)
        tr = flat_walk(walk)
        ev = detect_events(tr.accel)
        truth = np.round((walk.ic_times - tr.accel.start_time) * FS).astype(int)
        assert ev.ic.size == 12
        assert np.abs(ev.ic - truth).max() <= 5


def test_local_extrema_plateau():
    x = np.array([3.0, 1.0, 1.0, 1.0, 2.0, 0.0, 0.0, 5.0])
    np.testing.assert_array_equal(local_extrema(x, "min"), [2, 5])
    np.testing.assert_array_equal(local_extrema(-x, "max"), [2, 5])


def make_trace(n=400):
    data = np.arange(9 * n, dtype=float).reshape(9, n)
    s = [UniformSeries(FS, 0.0, data[3 * k:3 * k + 3].T) for k in range(3)]
    return MultiModalTrace(*s, label="anomalous", walk_id="w")


class TestSlice:
    def test_four_contacts(self):
        tr = make_trace()
        cycles = slice_cycles(tr, GaitEvents([0, 100, 200, 300], []))
        assert len(cycles) == 2
        np.testing.assert_array_equal(cycles[0].data, tr.stack()[:, 0:200])
        np.testing.assert_array_equal(cycles[1].data, tr.stack()[:, 100:300])
        assert cycles[1].start == 100 and cycles[1].label == 1

    def test_three_contacts(self):
        assert len(slice_cycles(make_trace(), GaitEvents([0, 150, 300], []))) == 1

    def test_two_contacts(self):
        with pytest.raises(NoGaitDetected):
            slice_cycles(make_trace(), GaitEvents([0, 150], []))

    @given(st.sets(st.integers(0, 399), min_size=3, max_size=40))
    def test_count(self, ics):
        ic = sorted(ics)
        assert len(slice_cycles(make_trace(), GaitEvents(ic, []))) == len(ic) - 2

    def test_synthetic_ten_steps(self):
        walk = synth_walk("normal", seed=3, config=SynthConfig(n_steps=10))
        cycles = extract_cycles(flat_walk(walk))
        assert len(cycles) == 8
        assert all(c.data.shape == (9, 200) and np.all(np.isfinite(c.data)) for c in cycles)


class TestDetrend:
    def test_ramp(self):
        np.testing.assert_allclose(detrend_cycle([[0.0, 1.0, 2.0, 3.0]]), [[1.5] * 4], atol=1e-15)

    def test_flat_unchanged(self):
        x = np.array([[1.0, -1.0, -1.0, 1.0]])
        np.testing.assert_allclose(detrend_cycle(x), x, atol=1e-15)

    def test_ramp_plus_periodic(self):
        # a whole-period wave that is even about the cycle midpoint has no linear component
        L = 200
        c = np.arange(L) - (L - 1) / 2
        wave = np.cos(2 * np.pi * 3 * c / L)
        out = detrend_cycle(np.vstack([wave + 0.7 * c + 4.0]))
        np.testing.assert_allclose(out[0], wave + 4.0, atol=1e-9)

    @given(arrays(float, (9, 50), elements=st.floats(-1e3, 1e3)))
    def test_slope_removed_mean_kept(self, x):
        out = detrend_cycle(x)
        t = np.arange(50) - 24.5
        assert np.abs(out @ t / np.dot(t, t)).max() < 1e-9
        np.testing.assert_allclose(out.mean(axis=1), x.mean(axis=1), atol=1e-9)


class TestNormalizeLength:
    def test_identity(self):
        x = np.random.default_rng(0).normal(size=(9, 200))
        np.testing.assert_array_equal(normalize_length(x), x)

    def test_constant(self):
        np.testing.assert_array_equal(normalize_length(np.full((9, 57), 2.5)), 2.5)

    def test_ramp_137(self):
        x = np.linspace(-1.0, 3.0, 137)[None]
        out = normalize_length(x)
        np.testing.assert_allclose(out[0], np.linspace(-1.0, 3.0, 200), atol=1e-12)
        assert out[0, 0] == -1.0 and out[0, -1] == 3.0


class TestNorm:
    def test_constant_channel(self):
        x = np.random.default_rng(0).normal(size=(1, 9, 200))
        x[0, 4] = 2.0
        with pytest.raises(DegenerateChannel):
            fit_norm_stats(x)

    def test_plus_minus_one(self):
        x = np.stack([np.ones((9, 200)), -np.ones((9, 200))])
        stats = fit_norm_stats(x)
        np.testing.assert_array_equal(stats.mean, 0.0)
        np.testing.assert_array_equal(stats.std, 1.0)

    def test_standardized_fixed_point(self):
        x = np.random.default_rng(1).normal(3.0, 2.0, size=(5, 9, 200))
        z = apply_norm(x, fit_norm_stats(x))
        stats = fit_norm_stats(z)
        np.testing.assert_allclose(stats.mean, 0.0, atol=1e-9)
        np.testing.assert_allclose(stats.std, 1.0, atol=1e-9)

    def test_means_map_to_zero(self):
        stats = NormStats(np.arange(9.0), np.full(9, 2.0))
        cycle = GaitCycle(np.repeat(np.arange(9.0)[:, None], 200, axis=1))
        np.testing.assert_array_equal(apply_norm(cycle, stats).data, 0.0)

    def test_unit_stats_identity(self):
        x = np.random.default_rng(2).normal(size=(9, 200))
        np.testing.assert_array_equal(apply_norm(x, NormStats(np.zeros(9), np.ones(9))), x)

    @settings(deadline=None)
    @given(st.integers(0, 10_000))
    def test_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(rng.normal(size=9)[None, :, None], rng.uniform(0.1, 5, 9)[None, :, None], (3, 9, 200))
        sc = CycleStandardizer().fit(x)
        np.testing.assert_allclose(sc.inverse_transform(sc.transform(x)), x, rtol=0, atol=1e-12)
        z = sc.transform(x)
        np.testing.assert_allclose(z.mean(axis=(0, 2)), 0.0, atol=1e-9)
        np.testing.assert_allclose(z.std(axis=(0, 2)), 1.0, atol=1e-9)


class TestGaitCycle:
    def test_shape(self):
        with pytest.raises(ValueError):
            GaitCycle(np.zeros((9, 199)))

    def test_finite(self):
        x = np.zeros((9, 200))
        x[0, 0] = np.nan
        with pytest.raises(ValueError):
            GaitCycle(x)

    def test_record_round_trip(self):
        c = GaitCycle(np.random.default_rng(0).normal(size=(9, 200)), "anomalous", "w3", 17)
        back = GaitCycle.from_record(c.to_record())
        np.testing.assert_array_equal(back.data, c.data)
        assert (back.label, back.walk, back.start) == (1, "w3", 17)
