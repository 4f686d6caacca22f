"""Data model and text formats: aligned words, dialogues, vocabulary, windows.

The word is the atom of everything downstream: windows are runs of 32
words, turn labels are per word, and segments are spans of words.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DialogueTooShortError,
    ParseError,
    UnsupportedSpeakerCountError,
)

WINDOW_LENGTH = 32

# Reserved vocabulary slots, in fixed id order.
PAD_ID = 0
SOS_ID = 1
EOS_ID = 2
UNK_ID = 3
TURN_A_ID = 4
TURN_B_ID = 5
RESERVED_SURFACES = ("<pad>", "<s>", "</s>", "<unk>", "♯A", "♯B")
N_RESERVED = len(RESERVED_SURFACES)


class Speaker(enum.Enum):
    A = "A"
    B = "B"

    def flipped(self) -> "Speaker":
        return Speaker.B if self is Speaker.A else Speaker.A


TURN_ID_FOR = {Speaker.A: TURN_A_ID, Speaker.B: TURN_B_ID}
SPEAKER_FOR_TURN_ID = {TURN_A_ID: Speaker.A, TURN_B_ID: Speaker.B}


@dataclass(frozen=True)
class AlignedWord:
    """One word token with timing and (optionally) a speaker label.

    ``word_id`` is -1 until a Vocabulary has been applied.
    """

    surface: str
    t_start: float
    t_end: float
    speaker: Speaker | None
    word_id: int = -1

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError(
                f"word {self.surface!r}: t_end {self.t_end} must exceed t_start {self.t_start}"
            )

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.t_start + self.t_end)

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class Dialogue:
    """An ordered word stream for one two-party session.

    Words are sorted by start time (ties by speaker); words of one
    speaker never overlap each other, but cross-speaker overlap is
    allowed and preserved.
    """

    id: str
    words: tuple[AlignedWord, ...]
    duration: float
    audio_path: str | None = None

    def __post_init__(self):
        if not self.words:
            raise ValueError(f"dialogue {self.id}: needs at least one word")
        for w in self.words:
            if w.t_start < 0 or w.t_end > self.duration + 1e-9:
                raise ValueError(
                    f"dialogue {self.id}: word {w.surface!r} [{w.t_start}, {w.t_end}] "
                    f"outside [0, {self.duration}]"
                )

    @property
    def n_words(self) -> int:
        return len(self.words)

    def speakers(self) -> list[Speaker | None]:
        return [w.speaker for w in self.words]

    def has_speaker_labels(self) -> bool:
        return all(w.speaker is not None for w in self.words)


@dataclass(frozen=True)
class SpeakerSegment:
    """A time interval carrying a speaker name or cluster id."""

    t_start: float
    t_end: float
    label: str

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError(f"segment {self.label}: t_end must exceed t_start")

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


class Vocabulary:
    """Bidirectional surface<->id map with fixed reserved ids 0..5."""

    def __init__(self, surfaces: list[str] | None = None):
        self._id_to_surface: list[str] = list(RESERVED_SURFACES)
        self._surface_to_id: dict[str, int] = {
            s: i for i, s in enumerate(RESERVED_SURFACES)
        }
        if surfaces:
            for s in surfaces:
                self.add(s)

    def add(self, surface: str) -> int:
        existing = self._surface_to_id.get(surface)
        if existing is not None:
            return existing
        new_id = len(self._id_to_surface)
        self._id_to_surface.append(surface)
        self._surface_to_id[surface] = new_id
        return new_id

    def id_of(self, surface: str) -> int:
        """Look up a surface; unseen words map to the unknown id."""
        return self._surface_to_id.get(surface, UNK_ID)

    def surface_of(self, word_id: int) -> str:
        return self._id_to_surface[word_id]

    def __len__(self) -> int:
        return len(self._id_to_surface)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Vocabulary)
            and self._id_to_surface == other._id_to_surface
        )

    @property
    def surfaces(self) -> list[str]:
        return list(self._id_to_surface)

    @classmethod
    def from_surfaces(cls, all_surfaces: list[str]) -> "Vocabulary":
        """Restore from a full id-ordered surface list (checkpoint load)."""
        if list(all_surfaces[:N_RESERVED]) != list(RESERVED_SURFACES):
            raise ValueError("surface list does not start with the reserved tokens")
        v = cls()
        for s in all_surfaces[N_RESERVED:]:
            v.add(s)
        return v

    @classmethod
    def build(cls, dialogues: list[Dialogue]) -> "Vocabulary":
        """Collect surfaces by first appearance over the given dialogues."""
        v = cls()
        for d in dialogues:
            for w in d.words:
                v.add(w.surface)
        return v

    def encode_dialogue(self, dialogue: Dialogue) -> Dialogue:
        """Return a copy whose words carry vocabulary ids."""
        words = tuple(
            replace(w, word_id=self.id_of(w.surface)) for w in dialogue.words
        )
        return replace(dialogue, words=words)


@dataclass(frozen=True)
class WindowSample:
    """One 32-word source window with pooled acoustics and the target ids.

    ``target_ids`` is None when the window's words carry no speaker
    labels (hypothesis transcripts); such windows are inference-only.
    Sequence start/end markers are *not* included here.
    """

    dialogue_id: str
    word_offset: int
    source_ids: tuple[int, ...]
    acoustic: np.ndarray  # (32, 13) float64
    target_ids: tuple[int, ...] | None

    def __post_init__(self):
        if len(self.source_ids) != WINDOW_LENGTH:
            raise ValueError("source window must hold exactly 32 word ids")
        if self.acoustic.shape != (WINDOW_LENGTH, 13):
            raise ValueError(f"acoustic block has shape {self.acoustic.shape}")


def build_target(words: list[AlignedWord] | tuple[AlignedWord, ...]) -> tuple[int, ...]:
    """Interleave turn tokens into a 32-word id sequence.

    At every speaker change between word i and i+1, the turn token of
    word i's speaker is appended after word i; the window's final turn
    gets no trailing token.
    """
    if len(words) != WINDOW_LENGTH:
        raise ValueError(f"build_target needs exactly {WINDOW_LENGTH} words")
    out: list[int] = []
    for i, w in enumerate(words):
        if w.speaker is None:
            raise ValueError("build_target requires speaker labels on every word")
        out.append(w.word_id)
        if i + 1 < len(words) and words[i + 1].speaker is not w.speaker:
            out.append(TURN_ID_FOR[w.speaker])
    return tuple(out)


def strip_turn_tokens(ids) -> tuple[int, ...]:
    return tuple(t for t in ids if t not in (TURN_A_ID, TURN_B_ID))


def make_windows(dialogue: Dialogue, acoustic_per_word: np.ndarray) -> list[WindowSample]:
    """Slide a 32-word window over the dialogue with stride one.

    Row i of ``acoustic_per_word`` is word i's pooled feature vector.
    Raises DialogueTooShortError below 32 words.
    """
    n = dialogue.n_words
    if n < WINDOW_LENGTH:
        raise DialogueTooShortError(
            f"dialogue {dialogue.id}: {n} words, need at least {WINDOW_LENGTH}"
        )
    if acoustic_per_word.shape != (n, 13):
        raise ValueError(
            f"acoustic matrix shape {acoustic_per_word.shape}, expected ({n}, 13)"
        )
    labeled = dialogue.has_speaker_labels()
    windows = []
    for off in range(n - WINDOW_LENGTH + 1):
        chunk = dialogue.words[off : off + WINDOW_LENGTH]
        windows.append(
            WindowSample(
                dialogue_id=dialogue.id,
                word_offset=off,
                source_ids=tuple(w.word_id for w in chunk),
                acoustic=np.ascontiguousarray(
                    acoustic_per_word[off : off + WINDOW_LENGTH], dtype=np.float64
                ),
                target_ids=build_target(chunk) if labeled else None,
            )
        )
    return windows


# ---------------------------------------------------------------------------
# CTM-like word files: `<dialogue-id> <channel> <t_start> <dur> <word> <speaker>`
# ---------------------------------------------------------------------------

_MISSING_SPEAKER = {"<NA>", "-"}


def parse_ctm(stream: str) -> Dialogue:
    """Parse one dialogue's word alignment from CTM-like text.

    Speakers are renamed to A/B by first appearance. A missing or
    placeholder 6th column (``<NA>``/``-``) leaves all words unlabeled,
    which is the shape of ASR hypothesis transcripts.
    """
    words: list[tuple[float, float, str, str | None]] = []
    dialogue_id: str | None = None
    speaker_order: list[str] = []
    any_labeled = False
    any_unlabeled = False

    for line_no, raw in enumerate(stream.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) not in (5, 6):
            raise ParseError(f"expected 5 or 6 fields, got {len(fields)}", line_no)
        rec_id, _channel, t_start_s, dur_s, surface = fields[:5]
        if dialogue_id is None:
            dialogue_id = rec_id
        elif rec_id != dialogue_id:
            raise ParseError(
                f"multiple dialogue ids in one stream ({dialogue_id!r}, {rec_id!r})",
                line_no,
            )
        try:
            t_start = float(t_start_s)
            dur = float(dur_s)
        except ValueError:
            raise ParseError(f"bad time fields {t_start_s!r} {dur_s!r}", line_no) from None
        if dur <= 0:
            raise ParseError(f"non-positive duration {dur}", line_no)
        if t_start < 0:
            raise ParseError(f"negative start time {t_start}", line_no)

        speaker_name: str | None = None
        if len(fields) == 6 and fields[5] not in _MISSING_SPEAKER:
            speaker_name = fields[5]
            any_labeled = True
            if speaker_name not in speaker_order:
                speaker_order.append(speaker_name)
                if len(speaker_order) > 2:
                    raise UnsupportedSpeakerCountError(
                        f"line {line_no}: third speaker {speaker_name!r}; "
                        "only dyadic dialogues are supported"
                    )
        else:
            any_unlabeled = True
        words.append((t_start, t_start + dur, surface, speaker_name))

    if not words:
        raise ParseError("no word records found")
    if any_labeled and any_unlabeled:
        raise ParseError("mix of labeled and unlabeled speaker fields")

    name_map = {name: spk for name, spk in zip(speaker_order, (Speaker.A, Speaker.B))}
    aligned = [
        AlignedWord(
            surface=surf,
            t_start=ts,
            t_end=te,
            speaker=name_map[spk] if spk is not None else None,
        )
        for ts, te, surf, spk in words
    ]
    aligned.sort(key=lambda w: (w.t_start, w.speaker.value if w.speaker else ""))
    duration = max(w.t_end for w in aligned)
    return Dialogue(id=dialogue_id, words=tuple(aligned), duration=duration)


def format_ctm(dialogue: Dialogue, labels: list[Speaker] | None = None) -> str:
    """Render a dialogue as CTM text, optionally with replacement labels."""
    if labels is not None and len(labels) != dialogue.n_words:
        raise ValueError("one label per word required")
    lines = []
    for i, w in enumerate(dialogue.words):
        spk = labels[i] if labels is not None else w.speaker
        spk_field = spk.value if spk is not None else "<NA>"
        lines.append(
            f"{dialogue.id} 1 {w.t_start:.3f} {w.duration:.3f} {w.surface} {spk_field}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# RTTM speaker segments
# ---------------------------------------------------------------------------


def write_rttm(dialogue_id: str, segments: list[SpeakerSegment]) -> str:
    """Render segments as RTTM SPEAKER lines with 3-decimal times."""
    if not segments:
        raise ValueError("write_rttm needs at least one segment")
    lines = [
        f"SPEAKER {dialogue_id} 1 {s.t_start:.3f} {s.duration:.3f} "
        f"<NA> <NA> {s.label} <NA> <NA>"
        for s in segments
    ]
    return "\n".join(lines) + "\n"


def parse_rttm(text: str) -> dict[str, list[SpeakerSegment]]:
    """Parse RTTM SPEAKER lines, grouped by dialogue id."""
    out: dict[str, list[SpeakerSegment]] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 10 or fields[0] != "SPEAKER":
            raise ParseError("expected 10-field SPEAKER record", line_no)
        try:
            t_start = float(fields[3])
            dur = float(fields[4])
        except ValueError:
            raise ParseError(f"bad time fields {fields[3]!r} {fields[4]!r}", line_no) from None
        if dur <= 0:
            raise ParseError(f"non-positive duration {dur}", line_no)
        out.setdefault(fields[1], []).append(
            SpeakerSegment(t_start=t_start, t_end=t_start + dur, label=fields[7])
        )
    return out
