import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import signal

from gazepipe import dsp
from gazepipe.dsp import FilterSpec, Waveform
from gazepipe.errors import ConfigError, DegenerateInputError, SegmentEdgeError, ValidationError
from gazepipe.pipeline import _by_subject

from conftest import fit_amplitude


def sine(freq, rate, dur, amp=1.0, phase=0.0):
    t = np.arange(int(round(dur * rate))) / rate
    return Waveform(amp * np.sin(2 * np.pi * freq * t + phase), rate, 0.0)


def steady(x, rate, edge_s=1.0):
    k = int(edge_s * rate)
    return x[k:-k]


class TestWaveform:
    def test_rejects_non_finite(self):
        with pytest.raises(ValidationError):
            Waveform(np.array([0.0, np.nan]), 10.0)

    def test_rejects_bad_rate(self):
        with pytest.raises(ValidationError):
            Waveform(np.zeros(3), 0.0)

    def test_times_start_at_t0(self):
        w = Waveform(np.zeros(4), 2.0, -0.5)
        np.testing.assert_allclose(w.times, [-0.5, 0.0, 0.5, 1.0])
        assert w.duration_s == 2.0


class TestFilterSpec:
    def test_corner_at_nyquist_rejected(self):
        with pytest.raises(ConfigError):
            dsp.apply_filter(Waveform(np.zeros(100), 20.0), FilterSpec("lowpass", (10.0,)))

    def test_bandpass_order(self):
        with pytest.raises(ConfigError):
            FilterSpec("bandpass", (250.0, 40.0))

    def test_odd_order_rejected(self):
        with pytest.raises(ConfigError):
            FilterSpec("lowpass", (10.0,), order=3)


class TestApplyFilter:
    def test_stopband_sine_matches_analytic_response(self):
        rate = 64.0
        out = dsp.apply_filter(sine(25.0, rate, 20.0), dsp.HEOG_LOWPASS)
        measured = fit_amplitude(steady(out.samples, rate), rate, 25.0)
        _, h = signal.sosfreqz(dsp.HEOG_LOWPASS.sos(rate), worN=[25.0], fs=rate)
        # forward-backward filtering squares the magnitude response
        expected = abs(h[0]) ** 2
        assert measured <= 0.01
        assert measured == pytest.approx(expected, rel=0.05, abs=1e-6)

    def test_passband_sine_within_one_db(self):
        rate = 64.0
        out = dsp.apply_filter(sine(1.0, rate, 20.0), dsp.HEOG_LOWPASS)
        amp = fit_amplitude(steady(out.samples, rate), rate, 1.0)
        assert abs(20 * np.log10(amp)) < 1.0

    def test_constant_passes(self):
        w = Waveform(np.full(320, 3.5), 64.0)
        y = dsp.apply_filter(w, dsp.HEOG_LOWPASS).samples
        k = int(0.25 * 64)
        np.testing.assert_allclose(y[k:-k], 3.5, rtol=1e-9)

    def test_shape_preserved(self):
        w = Waveform(np.random.default_rng(0).standard_normal(700), 1000.0, -0.5)
        y = dsp.apply_filter(w, dsp.NEMG_BANDPASS)
        assert len(y) == len(w) and y.rate_hz == w.rate_hz and y.t0_s == w.t0_s

    @pytest.mark.parametrize("center", [100, 160, 201])
    def test_symmetric_pulse_keeps_argmax(self, center):
        x = np.zeros(320)
        x[center - 10 : center + 11] = 10 - np.abs(np.arange(-10, 11))
        y = dsp.apply_filter(Waveform(x, 64.0), dsp.HEOG_LOWPASS).samples
        assert abs(int(np.argmax(y)) - center) <= 1

    @settings(max_examples=25, deadline=None)
    @given(
        a=st.floats(-5, 5),
        b=st.floats(-5, 5),
        seed=st.integers(0, 2**31 - 1),
    )
    def test_linearity(self, a, b, seed):
        r = np.random.default_rng(seed)
        x, y = r.standard_normal(500), r.standard_normal(500)
        f = lambda v: dsp.apply_filter(Waveform(v, 1000.0), dsp.NEMG_BANDPASS).samples
        lhs = f(a * x + b * y)
        rhs = a * f(x) + b * f(y)
        scale = max(1.0, np.max(np.abs(lhs)))
        assert np.max(np.abs(lhs - rhs)) <= 1e-9 * scale


class TestResample:
    def test_integer_factor_halves(self):
        w = Waveform(np.zeros(2500), 1000.0)
        assert len(dsp.resample(w, 500.0)) == 1250

    def test_five_seconds_to_64hz(self):
        w = Waveform(np.zeros(5000), 1000.0, -0.5)
        out = dsp.resample(w, 64.0)
        assert len(out) == 320 and out.t0_s == -0.5 and out.rate_hz == 64.0

    def test_low_frequency_amplitude(self):
        out = dsp.resample(sine(5.0, 1000.0, 5.0), 64.0)
        k = 64
        amp = fit_amplitude(out.samples[k:-k], 64.0, 5.0)
        assert amp == pytest.approx(1.0, abs=0.02)

    def test_duration_preserved(self):
        for rate, target in [(1000.0, 64.0), (250.0, 64.0), (30.0, 64.0), (1000.0, 500.0)]:
            w = Waveform(np.zeros(int(5 * rate)), rate)
            out = dsp.resample(w, target)
            assert abs(out.duration_s - w.duration_s) <= 1.0 / target

    def test_cascade_matches_direct(self):
        t = np.arange(5000) / 1000.0
        x = np.sin(2 * np.pi * 3 * t) + 0.5 * np.sin(2 * np.pi * 7 * t + 1)
        w = Waveform(x, 1000.0)
        direct = dsp.resample(w, 64.0).samples
        cascade = dsp.resample(dsp.resample(w, 500.0), 64.0).samples
        k = 32
        assert np.max(np.abs(direct[k:-k] - cascade[k:-k])) <= 0.02 * np.max(np.abs(direct))

    def test_invalid_target(self):
        with pytest.raises(ConfigError):
            dsp.resample(Waveform(np.zeros(10), 10.0), 0.0)


class TestClipSegments:
    def test_trial_of_twenty_switches(self):
        rate = 250.0
        rec = Waveform(np.arange(int(105 * rate), dtype=float), rate, 0.0)
        triggers = 2.0 + 5.0 * np.arange(20)
        segs = dsp.clip_segments(rec, triggers)
        assert len(segs) == 20
        for trig, seg in zip(triggers, segs):
            assert len(seg) == 1250 and seg.t0_s == -0.5
            assert seg.samples[0] == pytest.approx((trig - 0.5) * rate)

    def test_no_triggers(self):
        assert dsp.clip_segments(Waveform(np.zeros(100), 10.0), []) == []

    def test_edge_error_names_indices(self):
        rec = Waveform(np.zeros(2500), 250.0)
        with pytest.raises(SegmentEdgeError) as err:
            dsp.clip_segments(rec, [0.2, 2.0, 8.0])
        assert err.value.indices == [0, 2]


class TestNormalizeSubject:
    def test_scaled_by_group_max(self):
        a = Waveform(np.array([0.0, 120.0, -240.0]), 1.0)
        b = Waveform(np.array([60.0, -30.0]), 1.0)
        out = dsp.normalize_subject([a, b])
        np.testing.assert_array_equal(out[0].samples, [0.0, 0.5, -1.0])
        np.testing.assert_array_equal(out[1].samples, [0.25, -0.125])

    def test_idempotent(self, rng):
        segs = [Waveform(rng.standard_normal(50), 64.0) for _ in range(3)]
        once = dsp.normalize_subject(segs)
        twice = dsp.normalize_subject(once)
        for u, v in zip(once, twice):
            np.testing.assert_array_equal(u.samples, v.samples)

    @settings(max_examples=30, deadline=None)
    @given(c=st.floats(1e-3, 1e3), seed=st.integers(0, 2**31 - 1))
    def test_degree_zero_homogeneous(self, c, seed):
        r = np.random.default_rng(seed)
        raw = [r.standard_normal(20) for _ in range(3)]
        base = dsp.normalize_subject([Waveform(x, 1.0) for x in raw])
        scaled = dsp.normalize_subject([Waveform(c * x, 1.0) for x in raw])
        for u, v in zip(base, scaled):
            np.testing.assert_allclose(u.samples, v.samples, rtol=1e-12, atol=1e-15)

    def test_subjects_are_independent(self):
        segs = [Waveform(np.array([1.0, -2.0]), 1.0), Waveform(np.array([10.0, 40.0]), 1.0)]
        out = _by_subject(segs, [0, 1])
        np.testing.assert_array_equal(out[0].samples, [0.5, -1.0])
        np.testing.assert_array_equal(out[1].samples, [0.25, 1.0])
        # raw peak ratio 40/2 is not kept across subjects
        assert np.max(np.abs(out[1].samples)) == np.max(np.abs(out[0].samples)) == 1.0

    def test_all_zero_group(self):
        with pytest.raises(DegenerateInputError):
            dsp.normalize_subject([Waveform(np.zeros(4), 1.0)])

    def test_empty_group(self):
        with pytest.raises(DegenerateInputError):
            dsp.normalize_subject([])
