"""Dyadic speaker diarization from word alignments and audio.

The toolkit fuses lexical and acoustic evidence in a sequence model
that marks speaker turns, recovers per-word labels by overlapping-
window voting, assigns identities by Gaussian BIC clustering, and
scores itself with collar-based time errors and word-level errors.
"""

from .config import RunConfig
from .corpus import (
    AlignedWord,
    Dialogue,
    Speaker,
    SpeakerSegment,
    Vocabulary,
    WindowSample,
)
from .errors import DiarkitError

__version__ = "0.1.0"

__all__ = [
    "AlignedWord",
    "Dialogue",
    "DiarkitError",
    "RunConfig",
    "Speaker",
    "SpeakerSegment",
    "Vocabulary",
    "WindowSample",
    "__version__",
]
