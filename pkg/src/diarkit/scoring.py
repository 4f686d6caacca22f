"""Time-weighted diarization scoring.

All interval arithmetic happens on an integer grid of 0.1 ms ticks, so
region splitting is exact and results are reproducible to the bit. The
error rate follows the usual convention: a no-score collar around every
reference boundary, an optimal one-to-one speaker mapping, and time
charged as miss, false alarm, or confusion against total reference time.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .corpus import AlignedWord, Speaker, SpeakerSegment
from .errors import UndefinedMetricError

TICKS_PER_SECOND = 10_000  # 0.1 ms resolution

Interval = tuple[int, int]
Timeline = dict[str, list[Interval]]


def _ticks(t: float) -> int:
    return int(round(t * TICKS_PER_SECOND))


def _merge(intervals: list[Interval]) -> list[Interval]:
    """Union of possibly overlapping intervals, as a sorted disjoint list."""
    out: list[Interval] = []
    for s, e in sorted(intervals):
        if e <= s:
            continue
        if out and s <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], e))
        else:
            out.append((s, e))
    return out


def timeline_from_segments(segments: list[SpeakerSegment]) -> Timeline:
    """Per-label union of segment spans, on the tick grid."""
    raw: dict[str, list[Interval]] = {}
    for seg in segments:
        raw.setdefault(seg.label, []).append((_ticks(seg.t_start), _ticks(seg.t_end)))
    return {label: _merge(ivs) for label, ivs in raw.items()}


def reference_timeline(words: tuple[AlignedWord, ...] | list[AlignedWord]) -> Timeline:
    """True speech regions per speaker: the union of their word spans.

    Consecutive words of one speaker usually touch or nearly touch, so
    their union forms turn-level intervals; both speakers stay active
    through genuinely overlapped speech.
    """
    raw: dict[str, list[Interval]] = {}
    for w in words:
        if w.speaker is None:
            raise ValueError("reference timeline needs speaker labels")
        raw.setdefault(w.speaker.value, []).append((_ticks(w.t_start), _ticks(w.t_end)))
    return {label: _merge(ivs) for label, ivs in raw.items()}


def _active(timeline_starts, timeline_ends, x: int) -> bool:
    i = bisect_right(timeline_starts, x) - 1
    return i >= 0 and timeline_ends[i] > x


@dataclass(frozen=True)
class DerResult:
    """Additive components of the diarization error, in seconds."""

    missed: float
    false_alarm: float
    confusion: float
    scored: float

    @property
    def der(self) -> float:
        return (self.missed + self.false_alarm + self.confusion) / self.scored

    def summary(self) -> str:
        return (
            f"DER {self.der:.4f} "
            f"(miss {self.missed:.2f}s, fa {self.false_alarm:.2f}s, "
            f"conf {self.confusion:.2f}s / scored {self.scored:.2f}s)"
        )


def der(ref: Timeline, hyp: Timeline, collar: float = 0.25) -> DerResult:
    """Diarization error rate with a symmetric no-score collar.

    ``ref`` and ``hyp`` map speaker labels to merged tick intervals
    (see the timeline builders). Raises UndefinedMetricError when no
    reference time survives the collar.
    """
    ref = {k: _merge(v) for k, v in ref.items() if v}
    hyp = {k: _merge(v) for k, v in hyp.items() if v}
    if not ref:
        raise UndefinedMetricError("reference timeline is empty")

    collar_t = _ticks(collar)
    zones: list[Interval] = []
    for ivs in ref.values():
        for s, e in ivs:
            zones.append((s - collar_t, s + collar_t))
            zones.append((e - collar_t, e + collar_t))
    zones = _merge(zones)

    points: set[int] = set()
    for source in (ref, hyp):
        for ivs in source.values():
            for s, e in ivs:
                points.update((s, e))
    for s, e in zones:
        points.update((s, e))
    grid = sorted(points)

    ref_keys = sorted(ref)
    hyp_keys = sorted(hyp)
    ref_se = {k: ([s for s, _ in ref[k]], [e for _, e in ref[k]]) for k in ref_keys}
    hyp_se = {k: ([s for s, _ in hyp[k]], [e for _, e in hyp[k]]) for k in hyp_keys}
    zone_starts = [s for s, _ in zones]
    zone_ends = [e for _, e in zones]

    # Pass one: scored co-occurrence time for the speaker mapping.
    spans: list[tuple[int, tuple[int, ...], tuple[int, ...]]] = []
    for a, b in zip(grid, grid[1:]):
        if b <= a or _active(zone_starts, zone_ends, a):
            continue
        r_act = tuple(
            i for i, k in enumerate(ref_keys) if _active(*ref_se[k], a)
        )
        h_act = tuple(
            j for j, k in enumerate(hyp_keys) if _active(*hyp_se[k], a)
        )
        if r_act or h_act:
            spans.append((b - a, r_act, h_act))

    overlap = np.zeros((len(ref_keys), len(hyp_keys)))
    for d, r_act, h_act in spans:
        for i in r_act:
            for j in h_act:
                overlap[i, j] += d
    if overlap.size:
        rows, cols = linear_sum_assignment(-overlap)
        mapping = {(int(i), int(j)) for i, j in zip(rows, cols) if overlap[i, j] > 0}
    else:
        mapping = set()

    missed = false_alarm = confusion = scored = 0
    for d, r_act, h_act in spans:
        nr, nh = len(r_act), len(h_act)
        matched = sum(
            1 for i in r_act for j in h_act if (i, j) in mapping
        )
        missed += d * max(0, nr - nh)
        false_alarm += d * max(0, nh - nr)
        confusion += d * (min(nr, nh) - matched)
        scored += d * nr

    if scored == 0:
        raise UndefinedMetricError("no reference time outside the collar")
    to_s = 1.0 / TICKS_PER_SECOND
    return DerResult(
        missed=missed * to_s,
        false_alarm=false_alarm * to_s,
        confusion=confusion * to_s,
        scored=scored * to_s,
    )


def wder(ref_labels: list[Speaker], hyp_labels: list[Speaker]) -> float:
    """Word-level error: misassigned fraction under the better identity map.

    With two speakers the only global maps are identity and swap, and
    the hypothesis orientation is arbitrary, so the better one counts.
    """
    if len(ref_labels) != len(hyp_labels):
        raise ValueError("label sequences differ in length")
    if not ref_labels:
        raise UndefinedMetricError("no words to score")
    direct = sum(1 for r, h in zip(ref_labels, hyp_labels) if r is not h)
    swapped = len(ref_labels) - direct
    return min(direct, swapped) / len(ref_labels)


def true_labels(words: tuple[AlignedWord, ...] | list[AlignedWord]) -> list[Speaker]:
    labels = []
    for w in words:
        if w.speaker is None:
            raise ValueError("words are unlabeled")
        labels.append(w.speaker)
    return labels
