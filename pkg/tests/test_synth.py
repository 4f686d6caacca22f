"""Deterministic dialogue/waveform generator and WAV I/O."""

import numpy as np
import pytest

from diarkit.corpus import Speaker
from diarkit.errors import ConfigError, UnsupportedRateError
from diarkit.synth import (
    SAMPLE_RATE,
    PersonaProfile,
    SynthConfig,
    pcm_to_float,
    read_wav,
    synth_corpus,
    write_wav,
)

SMALL = SynthConfig(n_dialogues=2, words_per_dialogue=60, seed=9)


class TestDeterminism:
    def test_same_seed_same_corpus(self):
        d1, w1 = synth_corpus(SMALL)
        d2, w2 = synth_corpus(SMALL)
        for a, b in zip(d1, d2):
            assert a.words == b.words
        for a, b in zip(w1, w2):
            np.testing.assert_array_equal(a, b)

    def test_different_seed_differs(self):
        d1, _ = synth_corpus(SMALL)
        d2, _ = synth_corpus(SynthConfig(n_dialogues=2, words_per_dialogue=60, seed=10))
        assert any(a.words != b.words for a, b in zip(d1, d2))


class TestDialogueShape:
    def test_counts_and_ids(self):
        dlgs, waves = synth_corpus(SMALL, id_prefix="syn")
        assert len(dlgs) == len(waves) == 2
        assert [d.id for d in dlgs] == ["syn0000", "syn0001"]
        assert all(d.n_words == 60 for d in dlgs)

    def test_words_fully_labeled_and_sorted(self):
        dlgs, _ = synth_corpus(SMALL)
        for d in dlgs:
            assert d.has_speaker_labels()
            starts = [w.t_start for w in d.words]
            assert starts == sorted(starts)

    def test_same_speaker_words_never_overlap(self):
        dlgs, _ = synth_corpus(SMALL)
        for d in dlgs:
            last_end = {Speaker.A: 0.0, Speaker.B: 0.0}
            for w in d.words:
                assert w.t_start >= last_end[w.speaker] - 1e-9
                last_end[w.speaker] = w.t_end

    def test_both_speakers_present(self):
        dlgs, _ = synth_corpus(SMALL)
        for d in dlgs:
            spk = set(d.speakers())
            assert spk == {Speaker.A, Speaker.B}

    def test_no_overlap_by_default(self):
        dlgs, _ = synth_corpus(SMALL)
        for d in dlgs:
            end = 0.0
            for w in d.words:
                assert w.t_start >= end - 1e-9
                end = max(end, w.t_end)

    def test_overlap_fraction_produces_cross_speaker_overlap(self):
        cfg = SynthConfig(
            n_dialogues=2, words_per_dialogue=200, overlap_fraction=0.2, seed=3
        )
        dlgs, _ = synth_corpus(cfg)
        overlapped = 0
        for d in dlgs:
            for i, w in enumerate(d.words[1:], start=1):
                prev = d.words[i - 1]
                if prev.speaker is not w.speaker and w.t_start < prev.t_end:
                    overlapped += 1
        assert overlapped > 0


class TestLexicon:
    def test_exclusive_words_stay_exclusive(self):
        cfg = SynthConfig(n_dialogues=4, words_per_dialogue=300, seed=1)
        dlgs, _ = synth_corpus(cfg)
        by_speaker: dict[Speaker, set[str]] = {Speaker.A: set(), Speaker.B: set()}
        for d in dlgs:
            for w in d.words:
                by_speaker[w.speaker].add(w.surface)
        n_surfaces = cfg.vocab_size - 6
        n_excl = int(n_surfaces * cfg.exclusive_vocab_fraction)
        excl_a = {f"w{i:03d}" for i in range(n_surfaces - 2 * n_excl, n_surfaces - n_excl)}
        excl_b = {f"w{i:03d}" for i in range(n_surfaces - n_excl, n_surfaces)}
        assert not (by_speaker[Speaker.B] & excl_a)
        assert not (by_speaker[Speaker.A] & excl_b)

    def test_vocab_bound_respected(self):
        dlgs, _ = synth_corpus(SMALL)
        surfaces = {w.surface for d in dlgs for w in d.words}
        assert len(surfaces) <= SMALL.vocab_size - 6


class TestConfigValidation:
    def test_tiny_vocab_rejected(self):
        with pytest.raises(ConfigError):
            SynthConfig(vocab_size=6)

    def test_bad_turn_mean_rejected(self):
        with pytest.raises(ConfigError):
            SynthConfig(turn_mean=0.5)

    def test_bad_overlap_rejected(self):
        with pytest.raises(ConfigError):
            SynthConfig(overlap_fraction=1.5)


class TestWaveform:
    def test_waveform_is_int16_and_bounded(self):
        _, waves = synth_corpus(SMALL)
        for w in waves:
            assert w.dtype == np.int16
            assert np.abs(pcm_to_float(w)).max() <= 1.0

    def test_waveform_covers_dialogue(self):
        dlgs, waves = synth_corpus(SMALL)
        for d, w in zip(dlgs, waves):
            assert len(w) / SAMPLE_RATE == pytest.approx(d.duration, abs=0.02)

    def test_speech_present_in_word_spans(self):
        dlgs, waves = synth_corpus(SMALL)
        d, w = dlgs[0], pcm_to_float(waves[0])
        word = d.words[0]
        lo = int(word.t_start * SAMPLE_RATE)
        hi = int(word.t_end * SAMPLE_RATE)
        inside = np.sqrt(np.mean(w[lo:hi] ** 2))
        assert inside > 3 * SMALL.noise_level

    def test_distinct_personas_differ_spectrally(self):
        quiet = SynthConfig(
            n_dialogues=1,
            words_per_dialogue=60,
            seed=2,
            noise_level=0.0,
            freq_jitter=0.0,
            amp_jitter=0.0,
        )
        dlgs, waves = synth_corpus(quiet)
        d, w = dlgs[0], pcm_to_float(waves[0])

        def peak_freq(word):
            lo = int(word.t_start * SAMPLE_RATE)
            hi = int(word.t_end * SAMPLE_RATE)
            spec = np.abs(np.fft.rfft(w[lo:hi]))
            return np.argmax(spec) * SAMPLE_RATE / (hi - lo)

        freqs = {Speaker.A: [], Speaker.B: []}
        for word in d.words:
            freqs[word.speaker].append(peak_freq(word))
        assert abs(np.median(freqs[Speaker.A]) - np.median(freqs[Speaker.B])) > 10.0


class TestWavIo:
    def test_round_trip(self, tmp_path):
        _, waves = synth_corpus(SMALL)
        p = tmp_path / "x.wav"
        write_wav(str(p), waves[0])
        back, fs = read_wav(str(p))
        assert fs == SAMPLE_RATE
        np.testing.assert_array_equal(back, waves[0])

    def test_rate_passes_through_and_dsp_rejects_it(self, tmp_path):
        from diarkit.dsp import mfcc

        _, waves = synth_corpus(SMALL)
        p = tmp_path / "x.wav"
        write_wav(str(p), waves[0], fs=16000)
        back, fs = read_wav(str(p))
        assert fs == 16000
        with pytest.raises(UnsupportedRateError):
            mfcc(pcm_to_float(back), fs)


class TestPersonaProfile:
    def test_profile_requires_partials(self):
        with pytest.raises(ConfigError):
            PersonaProfile(partials=())
