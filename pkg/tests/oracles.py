"""Independent brute-force reference implementations for the tests.

Each oracle recomputes a quantity straight from its mathematical
definition with the plainest possible code — explicit sums, no helpers
shared with the package — so agreement between the two is evidence of
correctness rather than of a shared bug.
"""

from __future__ import annotations

import itertools

import numpy as np

SAMPLE_RATE = 8000


# ---------------------------------------------------------------------------
# Cepstral front end, from the definitions
# ---------------------------------------------------------------------------


def oracle_mfcc(
    signal: np.ndarray,
    n_cepstra: int = 13,
    n_filters: int = 26,
    fft_size: int = 512,
    pre_emphasis: float = 0.97,
    lifter: int = 22,
    low_freq: float = 0.0,
    high_freq: float = SAMPLE_RATE / 2.0,
    energy_floor: float = 1e-30,
    frame_length: float = 0.025,
    frame_shift: float = 0.010,
) -> np.ndarray:
    """Frame-by-frame cepstra via a direct transform and explicit sums.

    The recipe: signal-level pre-emphasis (first sample kept), symmetric
    Hamming window, magnitude-squared spectrum from the discrete-Fourier
    definition, triangular mel filters with integer-bin edges spaced
    uniformly in mel, natural log with a floor, orthonormal type-II
    cosine transform, sinusoidal liftering, and coefficient 0 replaced
    by the log energy of the windowed frame.
    """
    x = np.asarray(signal, dtype=np.float64)
    flen = int(round(frame_length * SAMPLE_RATE))
    fshift = int(round(frame_shift * SAMPLE_RATE))

    emph = np.concatenate([[x[0]], x[1:] - pre_emphasis * x[:-1]])
    n_frames = (x.size - flen) // fshift + 1

    n = np.arange(flen, dtype=np.float64)
    window = 0.54 - 0.46 * np.cos(2.0 * np.pi * n / (flen - 1))

    def mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def inv_mel(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    edges = np.linspace(mel(low_freq), mel(high_freq), n_filters + 2)
    bins = [int(np.floor((fft_size + 1) * inv_mel(m) / SAMPLE_RATE)) for m in edges]

    n_bins = fft_size // 2 + 1
    sample_idx = np.arange(fft_size, dtype=np.float64)

    out = np.zeros((n_frames, n_cepstra))
    for fi in range(n_frames):
        frame = emph[fi * fshift : fi * fshift + flen] * window
        energy = max(float(np.sum(frame * frame)), energy_floor)

        padded = np.zeros(fft_size)
        padded[:flen] = frame
        power = np.zeros(n_bins)
        for k in range(n_bins):
            angle = -2.0 * np.pi * k * sample_idx / fft_size
            re = float(np.sum(padded * np.cos(angle)))
            im = float(np.sum(padded * np.sin(angle)))
            power[k] = re * re + im * im

        log_mel = np.zeros(n_filters)
        for j in range(n_filters):
            lo, mid, hi = bins[j], bins[j + 1], bins[j + 2]
            acc = 0.0
            for k in range(lo, mid):
                acc += (k - lo) / (mid - lo) * power[k]
            for k in range(mid, hi):
                acc += (hi - k) / (hi - mid) * power[k]
            log_mel[j] = np.log(max(acc, energy_floor))

        for ci in range(n_cepstra):
            acc = 0.0
            for j in range(n_filters):
                acc += log_mel[j] * np.cos(np.pi * ci * (2 * j + 1) / (2 * n_filters))
            scale = np.sqrt(2.0 / n_filters) * (np.sqrt(0.5) if ci == 0 else 1.0)
            weight = 1.0 + (lifter / 2.0) * np.sin(np.pi * ci / lifter)
            out[fi, ci] = weight * scale * acc
        out[fi, 0] = np.log(energy)
    return out


# ---------------------------------------------------------------------------
# Frame-sampled diarization scoring
# ---------------------------------------------------------------------------


def _merge_intervals(intervals):
    merged = []
    for t0, t1 in sorted(intervals):
        if merged and t0 <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], t1))
        else:
            merged.append((t0, t1))
    return merged


def oracle_der(
    ref: dict[str, list[tuple[float, float]]],
    hyp: dict[str, list[tuple[float, float]]],
    collar: float = 0.25,
    dt: float = 0.010,
):
    """Diarization error by sampling time on a fixed grid.

    ``ref``/``hyp`` map speaker labels to interval lists. Every grid
    cell is judged at its midpoint: cells inside a +/-collar zone around
    any reference boundary are skipped, and the rest contribute miss,
    false-alarm, and confusion counts under the label mapping that
    maximizes matched time. Returns ``None`` for the rate when no
    reference speech is scored.
    """
    ref = {lab: _merge_intervals(iv) for lab, iv in ref.items() if iv}
    hyp = {lab: _merge_intervals(iv) for lab, iv in hyp.items() if iv}

    edges = [t for iv in ref.values() for seg in iv for t in seg]
    zones = _merge_intervals([(e - collar, e + collar) for e in edges])

    horizon = max(
        (seg[1] for iv in list(ref.values()) + list(hyp.values()) for seg in iv),
        default=0.0,
    )
    n_cells = int(np.ceil(horizon / dt)) + 1

    def active(iv_map, t):
        return frozenset(
            lab for lab, iv in iv_map.items() if any(a <= t < b for a, b in iv)
        )

    samples = []
    for i in range(n_cells):
        t = (i + 0.5) * dt
        if any(a <= t < b for a, b in zones):
            continue
        ra, ha = active(ref, t), active(hyp, t)
        if ra or ha:
            samples.append((ra, ha))

    miss = sum(max(0, len(ra) - len(ha)) for ra, ha in samples)
    fa = sum(max(0, len(ha) - len(ra)) for ra, ha in samples)
    scored = sum(len(ra) for ra, ha in samples)

    ref_labels = sorted(ref)
    hyp_labels = sorted(hyp)
    padded = ref_labels + [None] * max(0, len(hyp_labels) - len(ref_labels))
    best_matched = 0
    for perm in itertools.permutations(padded, len(hyp_labels)):
        mapping = {h: r for h, r in zip(hyp_labels, perm) if r is not None}
        matched = sum(
            sum(1 for h in ha if mapping.get(h) in ra) for ra, ha in samples
        )
        best_matched = max(best_matched, matched)
    conf = sum(min(len(ra), len(ha)) for ra, ha in samples) - best_matched

    rate = (miss + fa + conf) / scored if scored else None
    return {
        "missed": miss * dt,
        "false_alarm": fa * dt,
        "confusion": conf * dt,
        "scored": scored * dt,
        "der": rate,
    }


# ---------------------------------------------------------------------------
# Sequence model forward pass, with plain loops
# ---------------------------------------------------------------------------


def oracle_forward(params, hidden_size, src_ids, acoustic, prev_tokens):
    """Single-window forward pass from the published layout conventions.

    Gate columns are packed ``[update | reset | candidate]`` with state
    update ``h' = (1 - z) * h + z * tanh(...)``; the decoder starts from
    the encoder's final state and consumes ``[embedding ; context]``;
    logits come from ``[embedding ; context ; new state]``. Returns
    (encoder states including the initial zero state, attention weights
    per step, logits per step).
    """
    t = params.tensors
    h_dim = hidden_size

    def sigmoid(v):
        return 1.0 / (1.0 + np.exp(-v))

    def gru_step(x, h, wx, uh, b):
        pre = x @ wx + b
        z = sigmoid(pre[:h_dim] + h @ uh[:, :h_dim])
        r = sigmoid(pre[h_dim : 2 * h_dim] + h @ uh[:, h_dim : 2 * h_dim])
        c = np.tanh(pre[2 * h_dim :] + (r * h) @ uh[:, 2 * h_dim :])
        return (1.0 - z) * h + z * c

    states = [np.zeros(h_dim)]
    for i, tok in enumerate(src_ids):
        x = t["emb"][tok]
        if params.feature_mode == "WM":
            x = np.concatenate([x, acoustic[i] @ t["ac_w"] + t["ac_b"]])
        states.append(gru_step(x, states[-1], t["enc_wx"], t["enc_uh"], t["enc_b"]))
    keys = np.stack(states[1:])

    s = states[-1]
    alphas, logit_rows = [], []
    for tok in prev_tokens:
        p = t["emb"][tok]
        scores = np.array(
            [
                np.tanh(s @ t["att_wq"] + k @ t["att_wk"] + t["att_b"]) @ t["att_v"]
                for k in keys
            ]
        )
        w = np.exp(scores - scores.max())
        alpha = w / w.sum()
        ctx = alpha @ keys
        s = gru_step(
            np.concatenate([p, ctx]), s, t["dec_wx"], t["dec_uh"], t["dec_b"]
        )
        logit_rows.append(np.concatenate([p, ctx, s]) @ t["out_w"] + t["out_b"])
        alphas.append(alpha)
    return np.stack(states), np.stack(alphas), np.stack(logit_rows)
