"""End-to-end run orchestration with cached, resumable stages.

A run directory is laid out as:

    config.json                   the resolved configuration
    corpus/{train,dev,test}/      <id>.ctm + <id>.wav + manifest.json
    features/<id>.dkf             cepstral frame dumps
    models/{W,WM}.dkm             trained checkpoints + train_log.json
    hyps/<system>/<id>.rttm       diarization output per system
    hyps/{W,WM}/<id>.turns.ctm    pre-clustering word labels
    report.json / report.txt      aggregate metrics
    stamps/<stage>.json           completion markers with the config hash

Each stage is skipped when its stamp matches the current configuration,
so a finished run re-runs as a no-op and a broken one resumes where it
stopped. All randomness is derived from the run seed and the stage name.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import cluster as _cluster
from . import scoring as _scoring
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, stage_seed
from .corpus import (
    Dialogue,
    Speaker,
    Vocabulary,
    format_ctm,
    make_windows,
    parse_ctm,
    parse_rttm,
    write_rttm,
)
from .dsp import MfccConfig, mfcc, pool_dialogue, read_dkf, standardize_rows, write_dkf
from .infer import VoteMatrix, estimate_turns, model_decode_fn
from .model import HyperParams
from .synth import SynthConfig, pcm_to_float, read_wav, synth_corpus, write_wav
from .train import train_model

SPLITS = ("train", "dev", "test")
MODES = ("W", "WM")
SYSTEMS = ("W", "WM", "WS", "bic", "oracle")
STAGES = ("synth", "featurize", "train", "infer", "score")

Progress = Callable[[str], None]


def _silent(_: str) -> None:
    pass


@dataclass(frozen=True)
class RunPaths:
    root: Path

    def corpus_dir(self, split: str) -> Path:
        return self.root / "corpus" / split

    @property
    def features_dir(self) -> Path:
        return self.root / "features"

    @property
    def models_dir(self) -> Path:
        return self.root / "models"

    def hyp_dir(self, system: str) -> Path:
        return self.root / "hyps" / system

    @property
    def report_json(self) -> Path:
        return self.root / "report.json"

    @property
    def report_txt(self) -> Path:
        return self.root / "report.txt"

    def stamp(self, stage: str) -> Path:
        return self.root / "stamps" / f"{stage}.json"


def _stamp_current(paths: RunPaths, stage: str, cfg: RunConfig) -> bool:
    p = paths.stamp(stage)
    if not p.exists():
        return False
    try:
        return json.loads(p.read_text()).get("config") == cfg.config_hash()
    except json.JSONDecodeError:
        return False


def _write_stamp(paths: RunPaths, stage: str, cfg: RunConfig):
    p = paths.stamp(stage)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps({"config": cfg.config_hash(), "stage": stage},
                            sort_keys=True) + "\n")


def split_sizes(cfg: RunConfig) -> dict[str, int]:
    return {
        "train": cfg.splits.n_train,
        "dev": cfg.splits.n_dev,
        "test": cfg.splits.n_test,
    }


def synth_config_for_split(cfg: RunConfig, split: str) -> SynthConfig:
    c = cfg.corpus
    return SynthConfig(
        seed=stage_seed(cfg.seed, f"synth:{split}"),
        n_dialogues=split_sizes(cfg)[split],
        words_per_dialogue=c.words_per_dialogue,
        turn_mean=c.turn_mean,
        vocab_size=c.vocab_size,
        zipf_exponent=c.zipf_exponent,
        exclusive_vocab_fraction=c.exclusive_vocab_fraction,
        exclusive_rate=c.exclusive_rate,
        freq_jitter=c.freq_jitter,
        amp_jitter=c.amp_jitter,
        noise_level=c.noise_level,
        overlap_fraction=c.overlap_fraction,
    )


def write_corpus_split(out_dir: Path, dialogues, waveforms) -> list[str]:
    """Write CTM + WAV pairs plus a manifest; returns the dialogue ids."""
    out_dir.mkdir(parents=True, exist_ok=True)
    ids = []
    for d, wave in zip(dialogues, waveforms):
        (out_dir / f"{d.id}.ctm").write_text(format_ctm(d))
        write_wav(str(out_dir / f"{d.id}.wav"), wave)
        ids.append(d.id)
    (out_dir / "manifest.json").write_text(
        json.dumps({"ids": ids}, sort_keys=True) + "\n"
    )
    return ids


def load_corpus_split(paths: RunPaths, split: str) -> list[Dialogue]:
    cdir = paths.corpus_dir(split)
    manifest = json.loads((cdir / "manifest.json").read_text())
    dialogues = []
    for did in manifest["ids"]:
        d = parse_ctm((cdir / f"{did}.ctm").read_text())
        dialogues.append(d)
    return dialogues


def stage_synth(cfg: RunConfig, paths: RunPaths, progress: Progress = _silent):
    for split in SPLITS:
        scfg = synth_config_for_split(cfg, split)
        dialogues, waves = synth_corpus(scfg, id_prefix=f"{split}-")
        ids = write_corpus_split(paths.corpus_dir(split), dialogues, waves)
        progress(f"synth: {split}: {len(ids)} dialogues")


def stage_featurize(cfg: RunConfig, paths: RunPaths, progress: Progress = _silent):
    paths.features_dir.mkdir(parents=True, exist_ok=True)
    mcfg = MfccConfig()
    n = 0
    for split in SPLITS:
        cdir = paths.corpus_dir(split)
        manifest = json.loads((cdir / "manifest.json").read_text())
        for did in manifest["ids"]:
            pcm, fs = read_wav(str(cdir / f"{did}.wav"))
            frames = mfcc(pcm_to_float(pcm), fs, mcfg)
            write_dkf(str(paths.features_dir / f"{did}.dkf"), frames)
            n += 1
    progress(f"featurize: {n} dialogues -> {paths.features_dir}")


def _strided_offsets(n_windows: int, stride: int) -> list[int]:
    """Window offsets at the given stride, always covering the tail."""
    offsets = list(range(0, n_windows, stride))
    if offsets[-1] != n_windows - 1:
        offsets.append(n_windows - 1)
    return offsets


def _windows_for(paths: RunPaths, dialogue: Dialogue, vocab: Vocabulary,
                 stride: int = 1):
    frames = read_dkf(str(paths.features_dir / f"{dialogue.id}.dkf"))
    encoded = vocab.encode_dialogue(dialogue)
    acoustic = standardize_rows(pool_dialogue(frames, encoded.words))
    windows = make_windows(encoded, acoustic)
    if stride > 1:
        windows = [windows[i] for i in _strided_offsets(len(windows), stride)]
    return windows, frames


def _hyper_for_mode(cfg: RunConfig, mode: str) -> HyperParams:
    n = cfg.net
    return HyperParams(
        hidden_size=n.hidden_size,
        word_embed_size=n.embed_size,
        acoustic_embed_size=n.embed_size,
        attention_size=n.attention_size,
        teacher_forcing_ratio=n.teacher_forcing_ratio,
        epochs=n.epochs,
        learning_rate=n.learning_rate,
        batch_size=n.batch_size,
        max_decode_length=n.max_decode_length,
        feature_mode=mode,
        seed=stage_seed(cfg.seed, f"train:{mode}"),
        grad_clip=n.grad_clip,
    )


def stage_train(cfg: RunConfig, paths: RunPaths, progress: Progress = _silent):
    train_dialogues = load_corpus_split(paths, "train")
    dev_dialogues = load_corpus_split(paths, "dev")
    vocab = Vocabulary.build(train_dialogues)
    stride = cfg.net.train_stride

    train_windows = []
    for d in train_dialogues:
        w, _ = _windows_for(paths, d, vocab, stride=stride)
        train_windows.extend(w)
    dev_windows = []
    for d in dev_dialogues:
        w, _ = _windows_for(paths, d, vocab, stride=stride)
        dev_windows.extend(w)
    progress(
        f"train: {len(train_windows)} train windows, {len(dev_windows)} dev, "
        f"vocab {len(vocab)}"
    )

    paths.models_dir.mkdir(parents=True, exist_ok=True)
    log: dict = {}
    for mode in MODES:
        hyper = _hyper_for_mode(cfg, mode)
        t0 = time.monotonic()
        params, report = train_model(
            train_windows, dev_windows, hyper, len(vocab),
            progress=lambda msg, m=mode: progress(f"train[{m}]: {msg}"),
        )
        wall = time.monotonic() - t0
        save_checkpoint(
            paths.models_dir / f"{mode}.dkm", params, hyper, vocab,
            metadata={
                "config": cfg.config_hash(),
                "best_epoch": report.best_epoch,
                "best_dev_accuracy": report.best_dev_accuracy,
            },
        )
        log[mode] = {
            "epoch_losses": report.epoch_losses,
            "dev_accuracies": report.dev_accuracies,
            "best_epoch": report.best_epoch,
            "best_dev_accuracy": report.best_dev_accuracy,
            "wall_seconds": round(wall, 3),
        }
        progress(f"train[{mode}]: done in {wall:.1f}s")
    (paths.models_dir / "train_log.json").write_text(
        json.dumps(log, indent=2, sort_keys=True) + "\n"
    )


def diarize_dialogue(
    dialogue: Dialogue,
    windows,
    frames,
    decode_fn,
    bic_lambda: float,
) -> tuple[list[Speaker], list[Speaker], VoteMatrix]:
    """Turn labels before and after acoustic identity clustering."""
    raw_labels, votes = estimate_turns(dialogue.n_words, windows, decode_fn)
    final = _cluster.relabel_words_by_cluster(
        dialogue.words, raw_labels, frames, lam=bic_lambda
    )
    return raw_labels, final, votes


def stage_infer(cfg: RunConfig, paths: RunPaths, progress: Progress = _silent):
    test_dialogues = load_corpus_split(paths, "test")
    lam = cfg.cluster.bic_lambda

    checkpoints = {}
    for mode in MODES:
        params, hyper, vocab, _meta = load_checkpoint(paths.models_dir / f"{mode}.dkm")
        checkpoints[mode] = (params, hyper, vocab)

    for system in SYSTEMS:
        paths.hyp_dir(system).mkdir(parents=True, exist_ok=True)

    for d in test_dialogues:
        for mode in MODES:
            params, hyper, vocab = checkpoints[mode]
            windows, frames = _windows_for(paths, d, vocab, stride=1)
            raw, final, _votes = diarize_dialogue(
                d, windows, frames, model_decode_fn(params, hyper), lam
            )
            (paths.hyp_dir(mode) / f"{d.id}.turns.ctm").write_text(
                format_ctm(d, labels=raw)
            )
            segs = _cluster.labels_to_segments(d.words, final)
            (paths.hyp_dir(mode) / f"{d.id}.rttm").write_text(
                write_rttm(d.id, segs)
            )

        frames = read_dkf(str(paths.features_dir / f"{d.id}.dkf"))
        ws_labels = _cluster.word_cluster_baseline(d.words, frames, lam=lam)
        (paths.hyp_dir("WS") / f"{d.id}.turns.ctm").write_text(
            format_ctm(d, labels=ws_labels)
        )
        ws_segs = _cluster.labels_to_segments(d.words, ws_labels)
        (paths.hyp_dir("WS") / f"{d.id}.rttm").write_text(write_rttm(d.id, ws_segs))

        bic_segs = _cluster.changepoint_baseline(frames, lam=lam)
        (paths.hyp_dir("bic") / f"{d.id}.rttm").write_text(write_rttm(d.id, bic_segs))

        oracle_segs = _cluster.labels_to_segments(d.words, _scoring.true_labels(d.words))
        (paths.hyp_dir("oracle") / f"{d.id}.rttm").write_text(
            write_rttm(d.id, oracle_segs)
        )
        progress(f"infer: {d.id} done")


def stage_score(cfg: RunConfig, paths: RunPaths, progress: Progress = _silent) -> dict:
    test_dialogues = load_corpus_split(paths, "test")
    collar = cfg.scoring.collar

    der_totals = {s: np.zeros(4) for s in SYSTEMS}  # miss, fa, conf, scored
    wder_counts = {s: [0, 0] for s in ("W", "WM", "WS")}  # errors, words
    per_dialogue: dict[str, dict] = {}

    for d in test_dialogues:
        ref = _scoring.reference_timeline(d.words)
        row: dict = {"der": {}, "wder": {}}
        for system in SYSTEMS:
            rttm = (paths.hyp_dir(system) / f"{d.id}.rttm").read_text()
            segs = parse_rttm(rttm)[d.id]
            res = _scoring.der(ref, _scoring.timeline_from_segments(segs), collar)
            der_totals[system] += np.array(
                [res.missed, res.false_alarm, res.confusion, res.scored]
            )
            row["der"][system] = {
                "missed": float(res.missed),
                "false_alarm": float(res.false_alarm),
                "confusion": float(res.confusion),
                "scored": float(res.scored),
                "der": res.der,
            }
        for system in ("W", "WM", "WS"):
            hyp_d = parse_ctm(
                (paths.hyp_dir(system) / f"{d.id}.turns.ctm").read_text()
            )
            errors = _word_errors(d, hyp_d)
            wder_counts[system][0] += errors
            wder_counts[system][1] += d.n_words
            row["wder"][system] = errors / d.n_words
        per_dialogue[d.id] = row
        progress(f"score: {d.id} done")

    report = {
        "config_hash": cfg.config_hash(),
        "collar": collar,
        "der": {},
        "wder": {},
        "per_dialogue": per_dialogue,
    }
    for system in SYSTEMS:
        miss, fa, conf, scored = (float(x) for x in der_totals[system])
        report["der"][system] = {
            "missed": miss,
            "false_alarm": fa,
            "confusion": conf,
            "scored": scored,
            "der": (miss + fa + conf) / scored,
        }
    for system, (errors, words) in wder_counts.items():
        report["wder"][system] = errors / words

    paths.report_json.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    paths.report_txt.write_text(format_report(report))
    return report


def _word_errors(ref: Dialogue, hyp: Dialogue) -> int:
    """Misassigned words under the better of the two global identity maps.

    Words are paired by (start time, surface) so that label-dependent
    tie-breaking in the stored word order cannot skew the pairing.
    """
    if ref.n_words != hyp.n_words:
        raise ValueError("hypothesis word count differs from the reference")

    def key(w):
        return (w.t_start, w.surface)

    rws = sorted(ref.words, key=key)
    hws = sorted(hyp.words, key=key)
    for r, h in zip(rws, hws):
        if r.surface != h.surface or abs(r.t_start - h.t_start) > 1e-6:
            raise ValueError("hypothesis word stream differs from the reference")
    direct = sum(1 for r, h in zip(rws, hws) if r.speaker is not h.speaker)
    return min(direct, ref.n_words - direct)


def format_report(report: dict) -> str:
    lines = [
        f"run {report['config_hash']}  (collar {report['collar']:.2f}s)",
        "",
        f"{'system':<8} {'DER':>8} {'miss':>8} {'fa':>8} {'conf':>8}",
    ]
    for system in SYSTEMS:
        r = report["der"][system]
        lines.append(
            f"{system:<8} {r['der']:>8.4f} {r['missed']:>8.2f} "
            f"{r['false_alarm']:>8.2f} {r['confusion']:>8.2f}"
        )
    lines.append("")
    for system in sorted(report["wder"]):
        lines.append(f"WDER {system:<4} {report['wder'][system]:.4f}")
    lines.append("")
    for did in sorted(report["per_dialogue"]):
        for system in SYSTEMS:
            r = report["per_dialogue"][did]["der"][system]
            lines.append(
                f"file {did} {system} {r['missed']:.3f} "
                f"{r['false_alarm']:.3f} {r['confusion']:.3f} {r['der']:.4f}"
            )
    lines.append("")
    return "\n".join(lines)


def run_pipeline(cfg: RunConfig, out_dir: str | Path, force: bool = False,
                 progress: Progress = _silent) -> dict:
    """Run every stage, skipping those already stamped for this config."""
    paths = RunPaths(Path(out_dir))
    paths.root.mkdir(parents=True, exist_ok=True)
    (paths.root / "config.json").write_text(cfg.to_json())

    stage_fns = {
        "synth": stage_synth,
        "featurize": stage_featurize,
        "train": stage_train,
        "infer": stage_infer,
        "score": stage_score,
    }
    result: dict = {}
    for stage in STAGES:
        if not force and _stamp_current(paths, stage, cfg) and stage != "score":
            progress(f"{stage}: cached, skipping")
            continue
        t0 = time.monotonic()
        out = stage_fns[stage](cfg, paths, progress)
        if stage == "score":
            result = out
        _write_stamp(paths, stage, cfg)
        progress(f"{stage}: finished in {time.monotonic() - t0:.1f}s")
    if not result and paths.report_json.exists():
        result = json.loads(paths.report_json.read_text())
    return result
