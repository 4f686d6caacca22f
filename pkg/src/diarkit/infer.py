"""Turn recovery from overlapping window decodes.

Every 32-word window is decoded independently, its token sequence is
reduced to a per-word speaker vector, and the vectors vote on the final
labels. Window orientation is arbitrary (the loss treats a speaker swap
as equivalent), so each new vector is flipped, if that agrees better,
against the votes accumulated so far before it is added.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .corpus import TURN_A_ID, TURN_B_ID, WINDOW_LENGTH, Speaker, WindowSample
from .model import HyperParams, ModelParams, Seq2Seq

DecodeFn = Callable[[Sequence[WindowSample]], list[list[int]]]


def extract_turn_vector(decoded_ids: Sequence[int],
                        window_length: int = WINDOW_LENGTH) -> np.ndarray:
    """Per-word speaker labels (0/1) implied by one decoded sequence.

    A turn token closes the run of words before it, so each word takes
    the speaker of the next turn token at or after it. Words after the
    final token belong to the other speaker (turns alternate). With no
    tokens at all the window is single-speaker; label it all zeros and
    let vote alignment fix the orientation. Decoded word k corresponds
    to source position k: extra words are dropped, missing trailing
    words repeat the last label.
    """
    labels: list[int] = []
    pending = 0
    last_token: int | None = None
    for t in decoded_ids:
        if t in (TURN_A_ID, TURN_B_ID):
            lab = 0 if t == TURN_A_ID else 1
            labels.extend([lab] * pending)
            pending = 0
            last_token = lab
        else:
            pending += 1
    if pending:
        tail = 0 if last_token is None else 1 - last_token
        labels.extend([tail] * pending)

    out = np.zeros(window_length, dtype=np.int64)
    take = min(len(labels), window_length)
    out[:take] = labels[:take]
    if 0 < take < window_length:
        out[take:] = labels[take - 1]
    return out


@dataclass
class VoteMatrix:
    """Per-word vote tallies plus the stored per-window label vectors."""

    counts: np.ndarray  # (n_words, 2) int64
    history: list[tuple[int, np.ndarray]] = dataclasses.field(default_factory=list)

    @classmethod
    def empty(cls, n_words: int) -> "VoteMatrix":
        return cls(counts=np.zeros((n_words, 2), dtype=np.int64))

    def add(self, offset: int, labels: np.ndarray):
        idx = np.arange(offset, offset + labels.size)
        np.add.at(self.counts, (idx, labels), 1)
        self.history.append((offset, labels.copy()))

    def coverage(self, position: int) -> int:
        return int(self.counts[position].sum())

    def majority(self) -> np.ndarray:
        """Per-word winner; ties copy the previous word (position 0: A)."""
        out = np.zeros(self.counts.shape[0], dtype=np.int64)
        prev = 0
        for i, (a_votes, b_votes) in enumerate(self.counts):
            if a_votes > b_votes:
                prev = 0
            elif b_votes > a_votes:
                prev = 1
            out[i] = prev
        return out


def align_or_flip(labels: np.ndarray, tally: VoteMatrix, offset: int) -> np.ndarray:
    """Flip the window's labels when that disagrees less with prior votes.

    Disagreement is the number of already-stored votes on the covered
    positions that contradict the candidate labeling; the flip must be
    strictly better to win, so the first window keeps its orientation.
    """
    span = tally.counts[offset : offset + labels.size]
    idx = np.arange(labels.size)
    d_orig = int(span[idx, 1 - labels].sum())
    d_flip = int(span[idx, labels].sum())
    return (1 - labels) if d_flip < d_orig else labels


def estimate_turns(
    n_words: int,
    windows: Sequence[WindowSample],
    decode_fn: DecodeFn,
    batch_size: int = 64,
) -> tuple[list[Speaker], VoteMatrix]:
    """Decode all windows, align their votes, and take the majority.

    ``decode_fn`` maps a list of windows to decoded token-id sequences;
    injection keeps this testable without a trained model. Windows are
    processed in offset order so alignment propagates left to right.
    """
    ordered = sorted(windows, key=lambda w: w.word_offset)
    decoded: list[list[int]] = []
    for start in range(0, len(ordered), batch_size):
        decoded.extend(decode_fn(ordered[start : start + batch_size]))

    tally = VoteMatrix.empty(n_words)
    for window, ids in zip(ordered, decoded):
        vec = extract_turn_vector(ids)
        vec = align_or_flip(vec, tally, window.word_offset)
        tally.add(window.word_offset, vec)
    majority = tally.majority()
    labels = [Speaker.A if m == 0 else Speaker.B for m in majority]
    return labels, tally


def model_decode_fn(params: ModelParams, hyper: HyperParams) -> DecodeFn:
    """Greedy decoding with a trained model, ready for estimate_turns."""
    model = Seq2Seq(params, hyper)

    def decode(windows: Sequence[WindowSample]) -> list[list[int]]:
        src = np.asarray([w.source_ids for w in windows], dtype=np.int64)
        acoustic = None
        if hyper.feature_mode == "WM":
            acoustic = np.stack([w.acoustic for w in windows])
        return model.greedy_decode_batch(src, acoustic)

    return decode


def window_coverage(n_words: int, position: int,
                    window_length: int = WINDOW_LENGTH) -> int:
    """How many stride-one windows cover a given word position."""
    if not 0 <= position < n_words:
        raise IndexError(f"position {position} outside 0..{n_words - 1}")
    if n_words < window_length:
        return 0
    first = max(0, position - window_length + 1)
    last = min(position, n_words - window_length)
    return last - first + 1
