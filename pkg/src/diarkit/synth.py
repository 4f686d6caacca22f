"""Seeded synthetic dyadic-dialogue generator and WAV I/O.

Two personas speak in alternating turns. Each persona has its own
unigram distribution over a shared vocabulary plus a few exclusive
filler words (the lexical cue) and its own set of sinusoidal partials
(the acoustic cue). All timing sits on a 1 ms grid so 3-decimal text
formats round-trip exactly, and every draw comes from one seeded
generator, so output is a pure function of the config.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np

from .corpus import AlignedWord, Dialogue, N_RESERVED, Speaker
from .errors import ConfigError, UnsupportedRateError

SAMPLE_RATE = 8000
TURN_GAP_S = 0.050
WORD_DUR_RANGE_MS = (200, 600)


@dataclass(frozen=True)
class PersonaProfile:
    """Acoustic identity: synthesis partials as (frequency Hz, amplitude)."""

    partials: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.partials:
            raise ConfigError("a persona needs at least one partial")


# The two voices are deliberately close (10% apart) relative to the
# per-word detune below, so single words are acoustically ambiguous
# while pooled turns remain separable.
DEFAULT_PROFILE_A = PersonaProfile(partials=((300.0, 1.0), (600.0, 0.5), (1200.0, 0.3)))
DEFAULT_PROFILE_B = PersonaProfile(partials=((330.0, 1.0), (660.0, 0.5), (1320.0, 0.3)))


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_dialogues: int = 10
    words_per_dialogue: int = 500
    turn_mean: float = 6.0  # geometric mean turn length, words
    vocab_size: int = 80  # includes the 6 reserved ids
    zipf_exponent: float = 0.5
    exclusive_vocab_fraction: float = 0.10  # per persona, of the word surfaces
    exclusive_rate: float = 0.30  # chance a token is persona-exclusive
    profile_a: PersonaProfile = DEFAULT_PROFILE_A
    profile_b: PersonaProfile = DEFAULT_PROFILE_B
    freq_jitter: float = 0.06  # per-word relative detune
    amp_jitter: float = 0.40  # per-partial relative amplitude spread
    noise_level: float = 0.01  # additive white noise, full-scale units
    overlap_fraction: float = 0.0  # chance a turn starts inside the previous one

    def __post_init__(self):
        if self.vocab_size < N_RESERVED + 2:
            raise ConfigError(
                f"vocab_size {self.vocab_size} leaves no room for words "
                f"(need at least {N_RESERVED + 2})"
            )
        if self.turn_mean < 1.0:
            raise ConfigError("turn_mean must be at least 1 word")
        if not 0.0 <= self.overlap_fraction <= 1.0:
            raise ConfigError("overlap_fraction must lie in [0, 1]")


def _persona_lexicons(cfg: SynthConfig, rng: np.random.Generator):
    """Split the surface inventory into shared + per-persona exclusive words."""
    n_surfaces = cfg.vocab_size - N_RESERVED
    surfaces = [f"w{i:03d}" for i in range(n_surfaces)]
    n_excl = min(int(n_surfaces * cfg.exclusive_vocab_fraction), (n_surfaces - 2) // 2)
    shared = surfaces[: n_surfaces - 2 * n_excl]
    excl_a = surfaces[n_surfaces - 2 * n_excl : n_surfaces - n_excl]
    excl_b = surfaces[n_surfaces - n_excl :]

    ranks = np.arange(1, len(shared) + 1, dtype=np.float64)
    zipf = ranks ** -cfg.zipf_exponent
    # Distinct unigram profiles over the same shared words.
    perm_a = rng.permutation(len(shared))
    perm_b = rng.permutation(len(shared))
    p_a = zipf[perm_a] / zipf.sum()
    p_b = zipf[perm_b] / zipf.sum()
    return shared, (excl_a, excl_b), (p_a, p_b)


def synth_corpus(cfg: SynthConfig,
                 id_prefix: str = "syn") -> tuple[list[Dialogue], list[np.ndarray]]:
    """Generate dialogues and their 8 kHz int16 waveforms, deterministically."""
    rng = np.random.default_rng(cfg.seed)
    shared, (excl_a, excl_b), (p_a, p_b) = _persona_lexicons(cfg, rng)
    exclusive = {Speaker.A: excl_a, Speaker.B: excl_b}
    shared_p = {Speaker.A: p_a, Speaker.B: p_b}
    profile = {Speaker.A: cfg.profile_a, Speaker.B: cfg.profile_b}

    dialogues: list[Dialogue] = []
    waveforms: list[np.ndarray] = []
    for di in range(cfg.n_dialogues):
        words, wave_f = _one_dialogue(cfg, rng, shared, exclusive, shared_p, profile)
        duration = len(wave_f) / SAMPLE_RATE
        dialogues.append(
            Dialogue(id=f"{id_prefix}{di:04d}", words=tuple(words), duration=duration)
        )
        peak = np.max(np.abs(wave_f))
        if peak > 0.999:
            wave_f = wave_f * (0.999 / peak)
        waveforms.append(np.round(wave_f * 32767.0).astype(np.int16))
    return dialogues, waveforms


def _one_dialogue(cfg, rng, shared, exclusive, shared_p, profile):
    n_target = cfg.words_per_dialogue
    q_cont = 1.0 - 1.0 / cfg.turn_mean

    # Lay out turns first (speaker, word count), then timing, then audio.
    turns: list[tuple[Speaker, int]] = []
    total = 0
    spk = Speaker.A
    while total < n_target:
        k = int(rng.geometric(1.0 - q_cont)) if cfg.turn_mean > 1.0 else 1
        k = min(k, n_target - total)
        turns.append((spk, k))
        total += k
        spk = spk.flipped()

    words: list[AlignedWord] = []
    events: list[tuple[int, int, Speaker]] = []  # (start sample, n samples, speaker)
    cursor_ms = 0
    prev_turn_span: tuple[int, int] | None = None  # ms
    last_end_ms = {Speaker.A: 0, Speaker.B: 0}
    for ti, (spk, k) in enumerate(turns):
        start_ms = cursor_ms
        if ti > 0:
            start_ms = cursor_ms + round(TURN_GAP_S * 1000)
            if cfg.overlap_fraction > 0.0 and rng.random() < cfg.overlap_fraction:
                prev_start, prev_end = prev_turn_span
                # Deep enough that scoring collars cannot hide every
                # overlap: a no-score collar shadows half a second
                # around each reference boundary.
                max_back = min(1500, (prev_end - prev_start) // 2)
                if max_back >= 100:
                    start_ms = prev_end - int(rng.integers(100, max_back + 1))
            # One speaker's own words must never overlap each other.
            start_ms = max(start_ms, last_end_ms[spk] + 10)
        t_ms = start_ms
        turn_word_ms: list[tuple[int, int, str]] = []
        for _ in range(k):
            dur_ms = int(rng.integers(WORD_DUR_RANGE_MS[0], WORD_DUR_RANGE_MS[1] + 1))
            if rng.random() < cfg.exclusive_rate:
                surf = exclusive[spk][int(rng.integers(0, len(exclusive[spk])))]
            else:
                surf = shared[int(rng.choice(len(shared), p=shared_p[spk]))]
            turn_word_ms.append((t_ms, dur_ms, surf))
            t_ms += dur_ms
        for w_start, w_dur, surf in turn_word_ms:
            words.append(
                AlignedWord(
                    surface=surf,
                    t_start=w_start / 1000.0,
                    t_end=(w_start + w_dur) / 1000.0,
                    speaker=spk,
                )
            )
            events.append((w_start * SAMPLE_RATE // 1000, w_dur * SAMPLE_RATE // 1000, spk))
        prev_turn_span = (start_ms, t_ms)
        last_end_ms[spk] = t_ms
        cursor_ms = max(cursor_ms, t_ms)

    n_samples = cursor_ms * SAMPLE_RATE // 1000 + int(0.05 * SAMPLE_RATE)
    buf = np.zeros(n_samples, dtype=np.float64)
    for start, n, spk in events:
        buf[start : start + n] += _render_word(n, profile[spk], cfg, rng)
    buf += rng.normal(0.0, cfg.noise_level, size=n_samples)

    words.sort(key=lambda w: (w.t_start, w.speaker.value))
    return words, buf


def _render_word(n: int, prof: PersonaProfile, cfg: SynthConfig, rng) -> np.ndarray:
    t = np.arange(n, dtype=np.float64) / SAMPLE_RATE
    detune = 1.0 + rng.uniform(-cfg.freq_jitter, cfg.freq_jitter)
    gain = 0.25 * rng.uniform(0.5, 1.0)
    out = np.zeros(n, dtype=np.float64)
    for freq, amp in prof.partials:
        a = amp * (1.0 + rng.uniform(-cfg.amp_jitter, cfg.amp_jitter))
        phase = rng.uniform(0.0, 2.0 * np.pi)
        out += a * np.sin(2.0 * np.pi * freq * detune * t + phase)
    ramp = min(int(0.020 * SAMPLE_RATE), n // 4)
    env = np.ones(n, dtype=np.float64)
    if ramp > 0:
        edge = 0.5 * (1.0 - np.cos(np.pi * np.arange(ramp) / ramp))
        env[:ramp] = edge
        env[-ramp:] = edge[::-1]
    return gain * env * out


# ---------------------------------------------------------------------------
# WAV I/O: PCM 16-bit little-endian mono
# ---------------------------------------------------------------------------


def write_wav(path: str, samples: np.ndarray, fs: int = SAMPLE_RATE) -> None:
    if samples.dtype != np.int16:
        raise ValueError("write_wav expects int16 samples")
    with wave.open(path, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(fs)
        w.writeframes(samples.tobytes())


def read_wav(path: str) -> tuple[np.ndarray, int]:
    """Read mono 16-bit PCM; returns (int16 samples, sample rate)."""
    with wave.open(path, "rb") as w:
        if w.getnchannels() != 1:
            raise UnsupportedRateError(f"{path}: only mono audio is supported")
        if w.getsampwidth() != 2:
            raise UnsupportedRateError(f"{path}: only 16-bit PCM is supported")
        fs = w.getframerate()
        data = w.readframes(w.getnframes())
    return np.frombuffer(data, dtype="<i2").astype(np.int16), fs


def pcm_to_float(samples: np.ndarray) -> np.ndarray:
    """Map int16 PCM to float64 in [-1, 1)."""
    return samples.astype(np.float64) / 32768.0
