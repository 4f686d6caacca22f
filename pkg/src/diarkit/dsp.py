"""MFCC front end and word-level pooling.

13 cepstra from 25 ms frames at a 10 ms shift over 8 kHz audio. The
exact recipe is pinned so results are bit-stable: signal-level
pre-emphasis 0.97, symmetric Hamming window, magnitude-squared
spectrum from a 512-point transform, 26 triangular mel filters with
integer-bin edges, natural log with a 1e-30 floor, orthonormal DCT-II,
sinusoidal liftering with L=22, and coefficient 0 replaced by the log
of the windowed frame's total energy.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .corpus import AlignedWord
from .errors import ParseError, SignalTooShortError, UnsupportedRateError

SAMPLE_RATE = 8000


@dataclass(frozen=True)
class MfccConfig:
    n_cepstra: int = 13
    n_filters: int = 26
    fft_size: int = 512
    pre_emphasis: float = 0.97
    lifter: int = 22
    low_freq: float = 0.0
    high_freq: float = SAMPLE_RATE / 2.0
    replace_c0_with_log_energy: bool = True
    energy_floor: float = 1e-30
    frame_length: float = 0.025
    frame_shift: float = 0.010
    mean_normalize: bool = False  # per-signal cepstral mean subtraction

    def __post_init__(self):
        if self.n_cepstra > self.n_filters:
            raise ValueError("n_cepstra must not exceed n_filters")
        if self.fft_size < int(round(self.frame_length * SAMPLE_RATE)):
            raise ValueError("fft_size smaller than the analysis frame")


@dataclass(frozen=True)
class FrameMatrix:
    """Per-frame cepstra plus the timing needed to map frames to words."""

    frames: np.ndarray  # (T, n_cepstra) float64
    frame_shift: float = 0.010
    frame_length: float = 0.025
    t0: float = 0.0

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def frame_centers(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_frames) * self.frame_shift + self.frame_length / 2.0


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: MfccConfig) -> np.ndarray:
    """Triangular filters on integer FFT bins, edges uniform in mel."""
    pts = np.linspace(hz_to_mel(cfg.low_freq), hz_to_mel(cfg.high_freq), cfg.n_filters + 2)
    bins = np.floor((cfg.fft_size + 1) * mel_to_hz(pts) / SAMPLE_RATE).astype(int)
    fb = np.zeros((cfg.n_filters, cfg.fft_size // 2 + 1), dtype=np.float64)
    for j in range(cfg.n_filters):
        lo, mid, hi = bins[j], bins[j + 1], bins[j + 2]
        for k in range(lo, mid):
            fb[j, k] = (k - lo) / (mid - lo)
        for k in range(mid, hi):
            fb[j, k] = (hi - k) / (hi - mid)
    return fb


def dct_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Orthonormal type-II DCT rows 0..n_out-1."""
    k = np.arange(n_out, dtype=np.float64)[:, None]
    n = np.arange(n_in, dtype=np.float64)[None, :]
    mat = np.cos(np.pi * k * (2.0 * n + 1.0) / (2.0 * n_in))
    mat *= np.sqrt(2.0 / n_in)
    mat[0] *= np.sqrt(0.5)
    return mat


def lifter_weights(n_cepstra: int, lifter: int) -> np.ndarray:
    if lifter <= 0:
        return np.ones(n_cepstra, dtype=np.float64)
    n = np.arange(n_cepstra, dtype=np.float64)
    return 1.0 + (lifter / 2.0) * np.sin(np.pi * n / lifter)


def frame_count(n_samples: int, cfg: MfccConfig) -> int:
    flen = int(round(cfg.frame_length * SAMPLE_RATE))
    fshift = int(round(cfg.frame_shift * SAMPLE_RATE))
    return (n_samples - flen) // fshift + 1


def mfcc(samples: np.ndarray, fs: int, cfg: MfccConfig = MfccConfig()) -> FrameMatrix:
    """Extract the cepstral frame matrix from a float waveform."""
    if fs != SAMPLE_RATE:
        raise UnsupportedRateError(f"got {fs} Hz audio, front end requires {SAMPLE_RATE} Hz")
    x = np.asarray(samples, dtype=np.float64)
    flen = int(round(cfg.frame_length * SAMPLE_RATE))
    fshift = int(round(cfg.frame_shift * SAMPLE_RATE))
    if x.size < flen:
        raise SignalTooShortError(f"{x.size} samples; one frame needs {flen}")

    emph = np.empty_like(x)
    emph[0] = x[0]
    emph[1:] = x[1:] - cfg.pre_emphasis * x[:-1]

    n_frames = (x.size - flen) // fshift + 1
    idx = np.arange(flen)[None, :] + fshift * np.arange(n_frames)[:, None]
    frames = emph[idx] * np.hamming(flen)[None, :]

    energy = np.maximum(np.sum(frames * frames, axis=1), cfg.energy_floor)
    spec = np.abs(np.fft.rfft(frames, n=cfg.fft_size, axis=1)) ** 2
    fbank = np.maximum(spec @ mel_filterbank(cfg).T, cfg.energy_floor)
    ceps = np.log(fbank) @ dct_matrix(cfg.n_cepstra, cfg.n_filters).T
    ceps *= lifter_weights(cfg.n_cepstra, cfg.lifter)[None, :]
    if cfg.replace_c0_with_log_energy:
        ceps[:, 0] = np.log(energy)
    if cfg.mean_normalize:
        ceps = ceps - ceps.mean(axis=0, keepdims=True)
    if not np.all(np.isfinite(ceps)):
        raise FloatingPointError("non-finite cepstra")
    return FrameMatrix(
        frames=ceps, frame_shift=cfg.frame_shift, frame_length=cfg.frame_length, t0=0.0
    )


def pool_word(frames: FrameMatrix, word: AlignedWord) -> np.ndarray:
    """Mean cepstrum over frames whose center lies inside the word.

    Words too short to contain a frame center fall back to the single
    frame nearest the word midpoint.
    """
    centers = frames.frame_centers()
    inside = (centers >= word.t_start) & (centers < word.t_end)
    if np.any(inside):
        return frames.frames[inside].mean(axis=0)
    nearest = int(np.argmin(np.abs(centers - word.midpoint)))
    return frames.frames[nearest].copy()


def pool_dialogue(frames: FrameMatrix, words) -> np.ndarray:
    """Stack pool_word over a word sequence: row i belongs to word i."""
    if len(words) == 0:
        return np.zeros((0, frames.frames.shape[1]), dtype=np.float64)
    return np.stack([pool_word(frames, w) for w in words])


def standardize_rows(matrix: np.ndarray) -> np.ndarray:
    """Zero-mean, unit-variance per column over the rows.

    Applied to a dialogue's pooled per-word vectors before they feed
    the sequence model, so the acoustic stream enters at the same scale
    as the learned embeddings regardless of recording level. Constant
    columns come out as zeros.
    """
    mu = matrix.mean(axis=0, keepdims=True)
    sd = matrix.std(axis=0, keepdims=True)
    return (matrix - mu) / np.maximum(sd, 1e-12)


# ---------------------------------------------------------------------------
# Debug dump: magic DKF1, u32 dims, little-endian f64 payload
# ---------------------------------------------------------------------------

_DKF_MAGIC = b"DKF1"


def write_dkf(path: str, frames: FrameMatrix) -> None:
    t, d = frames.frames.shape
    with open(path, "wb") as fh:
        fh.write(_DKF_MAGIC)
        fh.write(struct.pack("<II", t, d))
        fh.write(struct.pack("<ddd", frames.frame_shift, frames.frame_length, frames.t0))
        fh.write(frames.frames.astype("<f8").tobytes())


def read_dkf(path: str) -> FrameMatrix:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _DKF_MAGIC:
            raise ParseError(f"{path}: bad magic {magic!r}")
        t, d = struct.unpack("<II", fh.read(8))
        shift, length, t0 = struct.unpack("<ddd", fh.read(24))
        data = np.frombuffer(fh.read(t * d * 8), dtype="<f8").reshape(t, d)
    return FrameMatrix(frames=data.copy(), frame_shift=shift, frame_length=length, t0=t0)
