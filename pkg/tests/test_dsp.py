"""Signal-path tests: framing, filterbank, DCT, liftering, pooling, DKF."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diarkit.corpus import AlignedWord, Speaker
from diarkit.dsp import (
    FrameMatrix,
    MfccConfig,
    dct_matrix,
    frame_count,
    hz_to_mel,
    lifter_weights,
    mel_filterbank,
    mel_to_hz,
    mfcc,
    pool_dialogue,
    pool_word,
    read_dkf,
    standardize_rows,
    write_dkf,
)
from diarkit.errors import SignalTooShortError, UnsupportedRateError

from oracles import oracle_mfcc

FS = 8000


def tone(freq=400.0, amp=0.5, seconds=1.0, fs=FS):
    t = np.arange(int(seconds * fs)) / fs
    return amp * np.sin(2 * np.pi * freq * t)


class TestFraming:
    def test_frame_count_formula(self):
        cfg = MfccConfig()
        # floor((n - flen)/fshift) + 1 with 25 ms / 10 ms at 8 kHz
        assert frame_count(200, cfg) == 1
        assert frame_count(279, cfg) == 1
        assert frame_count(280, cfg) == 2
        assert frame_count(8000, cfg) == 98

    @given(n=st.integers(min_value=200, max_value=24000))
    @settings(max_examples=40, deadline=None)
    def test_frame_count_matches_output(self, n):
        rng = np.random.default_rng(n)
        x = rng.normal(0, 0.1, n)
        fm = mfcc(x, FS)
        assert fm.n_frames == frame_count(n, MfccConfig())

    def test_too_short_signal_raises(self):
        with pytest.raises(SignalTooShortError):
            mfcc(np.zeros(199), FS)

    def test_wrong_rate_raises(self):
        with pytest.raises(UnsupportedRateError):
            mfcc(tone(), 16000)

    def test_frame_centers(self):
        fm = FrameMatrix(frames=np.zeros((3, 13)))
        np.testing.assert_allclose(fm.frame_centers(), [0.0125, 0.0225, 0.0325])


class TestMelScale:
    def test_mel_round_trip(self):
        f = np.linspace(0.0, 4000.0, 41)
        np.testing.assert_allclose(mel_to_hz(hz_to_mel(f)), f, atol=1e-9)

    def test_filterbank_shape_and_support(self):
        cfg = MfccConfig()
        fb = mel_filterbank(cfg)
        assert fb.shape == (cfg.n_filters, cfg.fft_size // 2 + 1)
        assert np.all(fb >= 0)
        # every filter has some mass, and mass is concentrated low->high
        assert np.all(fb.sum(axis=1) > 0)
        peaks = fb.argmax(axis=1)
        assert np.all(np.diff(peaks) > 0)


class TestDctAndLifter:
    def test_dct_rows_orthonormal(self):
        d = dct_matrix(13, 26)
        gram = d @ d.T
        np.testing.assert_allclose(gram, np.eye(13), atol=1e-12)

    def test_lifter_shape_and_first_weight(self):
        w = lifter_weights(13, 22)
        assert w.shape == (13,)
        assert w[0] == pytest.approx(1.0)
        assert np.all(w >= 1.0)

    def test_lifter_disabled(self):
        np.testing.assert_allclose(lifter_weights(13, 0), np.ones(13))


class TestMfccAgainstOracle:
    def test_sine_matches_brute_force(self):
        x = tone(400.0, 0.5, 1.0)
        fast = mfcc(x, FS).frames
        slow = oracle_mfcc(x)
        assert fast.shape == slow.shape
        denom = np.maximum(np.abs(slow), 1e-8)
        assert np.max(np.abs(fast - slow) / denom) <= 1e-6

    def test_noise_matches_brute_force(self):
        rng = np.random.default_rng(7)
        x = rng.normal(0.0, 0.2, 2400)
        fast = mfcc(x, FS).frames
        slow = oracle_mfcc(x)
        denom = np.maximum(np.abs(slow), 1e-8)
        assert np.max(np.abs(fast - slow) / denom) <= 1e-6

    def test_silence_is_finite(self):
        fm = mfcc(np.zeros(4000), FS)
        assert np.all(np.isfinite(fm.frames))


class TestPooling:
    def test_pool_word_averages_covered_frames(self):
        frames = FrameMatrix(frames=np.arange(100, dtype=float).reshape(-1, 1) * np.ones((1, 13)))
        w = AlignedWord("x", 0.10, 0.20, Speaker.A)
        # centers 0.0125 + 0.01*i in [0.10, 0.20): indices 9..18
        expected = np.mean(np.arange(9, 19))
        np.testing.assert_allclose(pool_word(frames, w), expected * np.ones(13))

    def test_pool_word_empty_span_uses_nearest_frame(self):
        frames = FrameMatrix(frames=np.arange(10, dtype=float).reshape(-1, 1) * np.ones((1, 13)))
        w = AlignedWord("x", 5.0, 5.2, Speaker.A)  # far past the last frame
        np.testing.assert_allclose(pool_word(frames, w), 9.0 * np.ones(13))

    def test_pool_dialogue_shape(self):
        x = tone(seconds=2.0)
        fm = mfcc(x, FS)
        words = [
            AlignedWord("a", 0.0, 0.5, Speaker.A),
            AlignedWord("b", 0.5, 1.0, Speaker.B),
            AlignedWord("c", 1.0, 2.0, Speaker.A),
        ]
        pooled = pool_dialogue(fm, words)
        assert pooled.shape == (3, 13)
        assert np.all(np.isfinite(pooled))


class TestStandardize:
    def test_zero_mean_unit_variance(self):
        rng = np.random.default_rng(0)
        m = rng.normal(3.0, 5.0, (200, 13))
        z = standardize_rows(m)
        np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-12)

    def test_constant_column_maps_to_zero(self):
        m = np.ones((50, 3))
        z = standardize_rows(m)
        np.testing.assert_allclose(z, 0.0)


class TestDkfRoundTrip:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        fm = FrameMatrix(frames=rng.normal(size=(57, 13)), frame_shift=0.010,
                         frame_length=0.025, t0=0.0)
        p = tmp_path / "x.dkf"
        write_dkf(str(p), fm)
        back = read_dkf(str(p))
        assert back.frames.dtype == np.float64
        np.testing.assert_array_equal(back.frames, fm.frames)
        assert back.frame_shift == fm.frame_shift
        assert back.frame_length == fm.frame_length
        assert back.t0 == fm.t0

    def test_truncated_file_raises(self, tmp_path):
        rng = np.random.default_rng(4)
        fm = FrameMatrix(frames=rng.normal(size=(5, 13)))
        p = tmp_path / "x.dkf"
        write_dkf(str(p), fm)
        data = p.read_bytes()
        p.write_bytes(data[:-8])
        with pytest.raises(Exception):
            read_dkf(str(p))
