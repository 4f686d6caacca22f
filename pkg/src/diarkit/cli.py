"""Command-line entry points.

Run-directory commands (synth/featurize/train/infer/score/pipeline)
share one configuration tree; single-file commands (diarize/baseline)
work on a CTM + WAV pair with a trained checkpoint.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import cluster as _cluster
from .checkpoint import load_checkpoint
from .config import RunConfig
from .corpus import (
    WINDOW_LENGTH,
    SpeakerSegment,
    format_ctm,
    make_windows,
    parse_ctm,
    parse_rttm,
    write_rttm,
)
from .dsp import MfccConfig, mfcc, pool_dialogue, standardize_rows
from .errors import DiarkitError
from .infer import model_decode_fn
from .model import HyperParams, grad_check, init_params, spread_params
from .pipeline import (
    RunPaths,
    diarize_dialogue,
    format_report,
    run_pipeline,
    stage_featurize,
    stage_infer,
    stage_score,
    stage_synth,
    stage_train,
)
from .scoring import der, reference_timeline, timeline_from_segments
from .synth import pcm_to_float, read_wav


def _add_config_args(p: argparse.ArgumentParser):
    p.add_argument("--config", type=str, default=None,
                   help="JSON config file (defaults apply when omitted)")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="dotted config override, repeatable")


def _load_config(args) -> RunConfig:
    cfg = (RunConfig.from_json_file(args.config) if args.config else RunConfig())
    return cfg.with_overrides(args.overrides)


def _stage_command(stage_fn):
    def run(args) -> int:
        cfg = _load_config(args)
        paths = RunPaths(Path(args.out))
        paths.root.mkdir(parents=True, exist_ok=True)
        stage_fn(cfg, paths, progress=print)
        return 0

    return run


def _cmd_pipeline(args) -> int:
    cfg = _load_config(args)
    report = run_pipeline(cfg, args.out, force=args.force, progress=print)
    if report:
        print(format_report(report), end="")
    return 0


def _cmd_score(args) -> int:
    if args.out:
        cfg = _load_config(args)
        paths = RunPaths(Path(args.out))
        report = stage_score(cfg, paths, progress=print)
        print(format_report(report), end="")
        return 0
    if not (args.ref_ctm and args.hyp_rttm):
        print("score: need --out, or --ref-ctm with --hyp-rttm", file=sys.stderr)
        return 2
    ref = parse_ctm(Path(args.ref_ctm).read_text())
    segments = parse_rttm(Path(args.hyp_rttm).read_text())
    if ref.id not in segments:
        print(f"score: no segments for dialogue {ref.id!r}", file=sys.stderr)
        return 2
    result = der(
        reference_timeline(ref.words),
        timeline_from_segments(segments[ref.id]),
        collar=args.collar,
    )
    print(result.summary())
    return 0


def _load_audio_features(wav_path: str):
    pcm, fs = read_wav(wav_path)
    return mfcc(pcm_to_float(pcm), fs, MfccConfig())


def _cmd_diarize(args) -> int:
    params, hyper, vocab, _meta = load_checkpoint(args.model)
    dialogue = parse_ctm(Path(args.ctm).read_text())
    frames = _load_audio_features(args.wav)
    encoded = vocab.encode_dialogue(dialogue)
    acoustic = standardize_rows(pool_dialogue(frames, encoded.words))
    windows = make_windows(encoded, acoustic)
    raw, final, votes = diarize_dialogue(
        dialogue, windows, frames, model_decode_fn(params, hyper),
        bic_lambda=args.bic_lambda,
    )
    rttm = write_rttm(dialogue.id, _cluster.labels_to_segments(dialogue.words, final))
    Path(args.rttm).write_text(rttm)
    if args.turns_ctm:
        Path(args.turns_ctm).write_text(format_ctm(dialogue, labels=raw))
    if args.votes:
        dump = "".join(
            f"{off} {''.join('AB'[v] for v in vec)}\n"
            for off, vec in votes.history
        )
        Path(args.votes).write_text(dump)
    n_turns = 1 + sum(1 for a, b in zip(final, final[1:]) if a is not b)
    print(f"{dialogue.id}: {dialogue.n_words} words -> {n_turns} turns ({args.rttm})")
    return 0


def _cmd_baseline(args) -> int:
    frames = _load_audio_features(args.wav)
    target_k = args.target_k if args.target_k > 0 else None
    if args.kind == "ws":
        dialogue = parse_ctm(Path(args.ctm).read_text())
        spans = [(w.t_start, w.t_end) for w in dialogue.words]
        ids = _cluster.cluster_spans(frames, spans, lam=args.bic_lambda,
                                     target_k=target_k)
        segments = [
            SpeakerSegment(
                t_start=dialogue.words[lo].t_start,
                t_end=max(w.t_end for w in dialogue.words[lo:hi]),
                label=f"spk{ids[lo]}",
            )
            for lo, hi in _cluster.label_runs(ids)
        ]
        dialogue_id = dialogue.id
    else:  # bic changepoint scan, words not needed
        segments = _cluster.changepoint_baseline(frames, lam=args.bic_lambda,
                                                 target_k=target_k)
        dialogue_id = args.dialogue_id or Path(args.wav).stem
    Path(args.rttm).write_text(write_rttm(dialogue_id, segments))
    print(f"{dialogue_id}: {len(segments)} segments ({args.rttm})")
    return 0


def _cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    hyper = HyperParams(
        hidden_size=args.hidden, word_embed_size=8, acoustic_embed_size=8,
        attention_size=args.hidden, feature_mode=args.mode, seed=args.seed,
    )
    vocab_size = 12
    params = init_params(hyper, vocab_size, rng)
    spread_params(params, rng)
    window = _random_window(rng, vocab_size)
    max_err, errs = grad_check(params, hyper, window)
    for name in sorted(errs):
        print(f"{name:<10} {errs[name]:.3e}")
    print(f"max relative error {max_err:.3e}")
    ok = max_err <= args.tolerance
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def _random_window(rng: np.random.Generator, vocab_size: int):
    from .corpus import EOS_ID, N_RESERVED, TURN_A_ID, TURN_B_ID, WindowSample

    src = tuple(int(x) for x in rng.integers(N_RESERVED, vocab_size, WINDOW_LENGTH))
    target: list[int] = []
    turn = TURN_A_ID
    for i, s in enumerate(src):
        target.append(s)
        if i + 1 < WINDOW_LENGTH and rng.random() < 0.2:
            target.append(turn)
            turn = TURN_B_ID if turn == TURN_A_ID else TURN_A_ID
    return WindowSample(
        dialogue_id="gradcheck",
        word_offset=0,
        source_ids=src,
        acoustic=rng.normal(size=(WINDOW_LENGTH, 13)),
        target_ids=tuple(target),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diarkit",
        description="Dyadic diarization: synthesis, training, inference, scoring",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn, doc in (
        ("synth", stage_synth, "generate the synthetic corpus splits"),
        ("featurize", stage_featurize, "compute cepstral features for all audio"),
        ("train", stage_train, "train the lexical and fused models"),
        ("infer", stage_infer, "diarize the test split with every system"),
    ):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--out", required=True, help="run directory")
        _add_config_args(p)
        p.set_defaults(fn=_stage_command(fn))

    p = sub.add_parser("pipeline", help="run all stages (cached by config hash)")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--force", action="store_true", help="ignore cached stages")
    _add_config_args(p)
    p.set_defaults(fn=_cmd_pipeline)

    p = sub.add_parser("score", help="score a run directory or one RTTM file")
    p.add_argument("--out", default=None, help="run directory to score")
    p.add_argument("--ref-ctm", default=None, help="reference words (CTM)")
    p.add_argument("--hyp-rttm", default=None, help="hypothesis segments (RTTM)")
    p.add_argument("--collar", type=float, default=0.25)
    _add_config_args(p)
    p.set_defaults(fn=_cmd_score)

    p = sub.add_parser("diarize", help="diarize one dialogue with a checkpoint")
    p.add_argument("--model", required=True, help="trained .dkm checkpoint")
    p.add_argument("--ctm", required=True, help="word alignment (speakers optional)")
    p.add_argument("--wav", required=True, help="8 kHz mono 16-bit audio")
    p.add_argument("--rttm", required=True, help="output segments path")
    p.add_argument("--turns-ctm", default=None,
                   help="also write pre-clustering word labels here")
    p.add_argument("--votes", default=None,
                   help="debug dump of per-window turn vectors")
    p.add_argument("--bic-lambda", type=float, default=1.0)
    p.set_defaults(fn=_cmd_diarize)

    p = sub.add_parser("baseline", help="run a clustering-only baseline")
    p.add_argument("kind", choices=("ws", "bic"))
    p.add_argument("--wav", required=True)
    p.add_argument("--ctm", default=None, help="words (required for ws)")
    p.add_argument("--rttm", required=True)
    p.add_argument("--dialogue-id", default=None)
    p.add_argument("--bic-lambda", type=float, default=1.0)
    p.add_argument("--target-k", type=int, default=2,
                   help="cluster count; 0 keeps merging only while it helps")
    p.set_defaults(fn=_cmd_baseline)

    p = sub.add_parser("gradcheck", help="verify analytic gradients on a tiny model")
    p.add_argument("--mode", choices=("W", "WM"), default="WM")
    p.add_argument("--hidden", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.set_defaults(fn=_cmd_gradcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "baseline" and args.kind == "ws" and not args.ctm:
        parser.error("baseline ws requires --ctm")
    try:
        return args.fn(args)
    except DiarkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
