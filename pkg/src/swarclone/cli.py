"""Command-line entry point wiring all modules.

Exit codes: 0 success, 1 module error (message on stderr), 2 usage.
Structured progress logs go to stderr as JSON lines; artifacts land at
the paths given by flags. Every subcommand is deterministic given its
seed, so re-running on unchanged inputs reproduces artifacts byte for
byte.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import corpus, dsp, textnorm
from . import eval as evalmod
from .config import CONFIG_ENV_VAR, PipelineConfig, load_config
from .errors import SwarcloneError


def _log(event: dict) -> None:
    sys.stderr.write(json.dumps(event, ensure_ascii=False) + "\n")


def _emit(payload) -> None:
    json.dump(payload, sys.stdout, ensure_ascii=False, indent=2)
    sys.stdout.write("\n")


def _write_metrics(path, metrics) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in metrics:
            fh.write(json.dumps(record) + "\n")


def _tiled_for_embedding(clip: dsp.AudioClip, frontend: dsp.EncoderFrontendConfig,
                         tile_short: bool) -> dsp.AudioClip:
    if clip.sample_rate_hz != frontend.sampling_rate_hz:
        clip = dsp.resample(clip, frontend.sampling_rate_hz)
    if tile_short and 0 < len(clip) < frontend.chunk_samples:
        reps = -(-frontend.chunk_samples // len(clip))
        clip = dsp.AudioClip(
            np.tile(clip.samples, reps)[:frontend.chunk_samples],
            frontend.sampling_rate_hz, clip.source_id,
        )
    return clip


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_preprocess(args, cfg: PipelineConfig) -> int:
    target_rate = (
        cfg.encoder_frontend.sampling_rate_hz if args.kind == "encoder"
        else cfg.dsp.sampling_rate_hz
    )
    policy = dsp.SilencePolicy()
    in_root, out_root = Path(args.input), Path(args.output)
    sentences = []
    for speaker_dir in sorted(p for p in in_root.iterdir() if p.is_dir()):
        out_speaker = out_root / speaker_dir.name
        out_speaker.mkdir(parents=True, exist_ok=True)
        for wav in sorted(speaker_dir.glob("*.wav")):
            clip = dsp.load_wav(wav)
            clip = dsp.resample(clip, target_rate)
            clip = dsp.truncate_silence(clip, policy)
            clip = dsp.normalize_amplitude(clip)
            parts = dsp.split_long(clip, args.max_clip_seconds)
            text = None
            transcript = wav.with_suffix(".txt")
            if args.kind == "synth":
                if not transcript.exists():
                    _log({"event": "skip", "reason": "missing transcript", "file": str(wav)})
                    continue
                normalized = textnorm.normalize(transcript.read_text(encoding="utf-8"))
                text = " ".join(normalized)
                sentences.extend(normalized)
            for i, part in enumerate(parts):
                stem = wav.stem if len(parts) == 1 else f"{wav.stem}_part{i}"
                dsp.write_wav(out_speaker / f"{stem}.wav", part)
                if text is not None:
                    (out_speaker / f"{stem}.txt").write_text(text, encoding="utf-8")
            _log({"event": "preprocessed", "file": str(wav), "parts": len(parts)})
    speakers_json = in_root / "speakers.json"
    if speakers_json.exists():
        (out_root / "speakers.json").write_text(speakers_json.read_text(encoding="utf-8"))
    manifest = corpus.build_manifest(out_root, kind=args.kind)
    corpus.write_manifest(out_root / "manifest.jsonl", manifest)
    for issue in manifest.issues:
        _log({"event": "issue", "detail": issue})
    if args.kind == "synth" and sentences:
        textnorm.CharVocabulary.from_sentences(sentences).save(out_root / "vocab.txt")
    _log({"event": "manifest", "entries": len(manifest), "path": str(out_root / "manifest.jsonl")})
    return 0


def cmd_normalize(args, cfg: PipelineConfig) -> int:
    text = sys.stdin.read()
    for sentence in textnorm.normalize(text):
        sys.stdout.write(sentence + "\n")
    return 0


def cmd_train_encoder(args, cfg: PipelineConfig) -> int:
    from . import encoder as enc
    manifest = corpus.read_manifest(args.manifest)
    model, metrics = enc.train_encoder(
        cfg.encoder, manifest, steps=args.steps, seed=args.seed if args.seed is not None else cfg.seed,
        frontend=cfg.encoder_frontend, holdout_fraction=args.holdout_fraction,
        eer_interval=args.eer_interval, workers=args.workers,
    )
    enc.save_encoder(args.out, model, cfg.encoder_frontend)
    _write_metrics(args.metrics or f"{args.out}.metrics.jsonl", metrics)
    for record in metrics[-3:]:
        _log({"event": "metric", **record})
    _log({"event": "checkpoint", "path": str(args.out)})
    return 0


def cmd_train_synth(args, cfg: PipelineConfig) -> int:
    from . import synth as syn
    manifest = corpus.read_manifest(args.manifest)
    vocab = textnorm.CharVocabulary.load(args.vocab) if args.vocab else None
    model, vocab, metrics = syn.train_synth(
        cfg.synth, manifest, args.encoder, steps=args.steps,
        seed=args.seed if args.seed is not None else cfg.seed,
        dsp_cfg=cfg.dsp, vocab=vocab,
    )
    syn.save_synth(args.out, model, vocab)
    _write_metrics(args.metrics or f"{args.out}.metrics.jsonl", metrics)
    _log({"event": "checkpoint", "path": str(args.out)})
    return 0


def cmd_train_vocoder(args, cfg: PipelineConfig) -> int:
    from . import vocoder as voc
    manifest = corpus.read_manifest(args.manifest)

    def prepare(entry):
        clip = dsp.load_wav(entry.audio_path)
        if clip.sample_rate_hz != cfg.dsp.sampling_rate_hz:
            clip = dsp.resample(clip, cfg.dsp.sampling_rate_hz)
        return voc.make_vocoder_pair(clip, cfg.dsp)

    if args.workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            pairs = list(pool.map(prepare, manifest))
    else:
        pairs = [prepare(e) for e in manifest]
    model, metrics = voc.train_vocoder(
        cfg.vocoder, pairs, steps=args.steps,
        seed=args.seed if args.seed is not None else cfg.seed,
    )
    voc.save_vocoder(args.out, model)
    _write_metrics(args.metrics or f"{args.out}.metrics.jsonl", metrics)
    _log({"event": "checkpoint", "path": str(args.out)})
    return 0


def cmd_embed(args, cfg: PipelineConfig) -> int:
    from . import encoder as enc
    model, frontend = enc.load_encoder(args.encoder)
    clip = _tiled_for_embedding(dsp.load_wav(args.wav), frontend, args.tile_short)
    embedding = enc.embed_utterance(model, clip, frontend)
    payload = {"speaker_id": args.speaker_id or clip.source_id,
               "vector": [float(v) for v in embedding.vector]}
    if args.out:
        Path(args.out).write_text(json.dumps(payload))
        _log({"event": "embedding", "path": args.out})
    else:
        _emit(payload)
    return 0


def cmd_clone(args, cfg: PipelineConfig) -> int:
    from . import encoder as enc
    from . import synth as syn
    from . import vocoder as voc
    encoder_model, frontend = enc.load_encoder(args.encoder)
    synth_model, vocab = syn.load_synth(args.synth)
    vocoder_model = voc.load_vocoder(args.vocoder)

    ref = dsp.load_wav(args.ref)
    ref16 = dsp.resample(ref, frontend.sampling_rate_hz)
    speaker = enc.embed_utterance(encoder_model, ref16, frontend)
    sentences = textnorm.normalize(args.text)
    if not sentences:
        raise SwarcloneError("no sentences left after normalization")
    mels, first_alignment = [], None
    for sentence in sentences:
        output = syn.infer(synth_model, vocab.encode(sentence), speaker)
        if output.truncated:
            _log({"event": "truncated", "sentence": sentence})
        mels.append(output.mel)
        if first_alignment is None:
            first_alignment = output.alignment
    mel = dsp.MelSpectrogram(np.concatenate(mels, axis=0), cfg.dsp.config_ref)
    clip = voc.generate(vocoder_model, mel, seed=args.seed if args.seed is not None else cfg.seed, mode=args.mode)
    dsp.write_wav(args.out, clip)
    _log({"event": "cloned", "path": str(args.out), "frames": mel.n_frames,
          "samples": len(clip)})
    if args.bundle:
        ref22 = dsp.resample(ref, cfg.dsp.sampling_rate_hz)
        cloned16 = _tiled_for_embedding(clip, frontend, tile_short=True)
        cloned_embedding = enc.embed_utterance(encoder_model, cloned16, frontend)
        evalmod.comparison_bundle(
            ref22, clip, first_alignment, args.bundle, cfg.dsp,
            original_embedding=speaker, cloned_embedding=cloned_embedding,
        )
        _log({"event": "bundle", "path": str(args.bundle)})
    return 0


def cmd_eval_eer(args, cfg: PipelineConfig) -> int:
    genuine, impostor = [], []
    with open(args.scores, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            (genuine if row["label"] == "genuine" else impostor).append(float(row["score"]))
    eer, threshold = evalmod.compute_eer(evalmod.ScoreSet(tuple(genuine), tuple(impostor)))
    _emit({"eer": eer, "threshold": threshold,
           "genuine": len(genuine), "impostor": len(impostor)})
    return 0


def cmd_eval_sim(args, cfg: PipelineConfig) -> int:
    from . import encoder as enc
    model, frontend = enc.load_encoder(args.encoder)
    pairs = {}
    with open(args.pairs, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            embeddings = []
            for key in ("original", "cloned"):
                clip = _tiled_for_embedding(dsp.load_wav(row[key]), frontend, tile_short=True)
                embeddings.append(enc.embed_utterance(model, clip, frontend))
            pairs[row["speaker_id"]] = tuple(embeddings)
    report = evalmod.similarity_report(pairs)
    _emit({"per_speaker": report.per_speaker, "mean_score": report.mean_score})
    return 0


def cmd_project(args, cfg: PipelineConfig) -> int:
    labels, vectors = [], []
    with open(args.embeddings, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            labels.append(row["speaker_id"])
            vectors.append(row["vector"])
    projection = evalmod.project_embeddings(
        np.asarray(vectors), labels, method=args.method,
        seed=args.seed if args.seed is not None else cfg.seed,
    )
    if args.svg:
        _scatter_svg(projection, args.svg)
        _log({"event": "svg", "path": args.svg})
    _emit({
        "method": projection.method,
        "labels": list(projection.labels),
        "points": [[float(x), float(y)] for x, y in projection.points],
    })
    return 0


def cmd_snr(args, cfg: PipelineConfig) -> int:
    manifest = corpus.read_manifest(args.manifest)
    report = evalmod.snr_report(manifest)
    if args.svg:
        _snr_svg(report, args.svg)
        _log({"event": "svg", "path": args.svg})
    _emit(report)
    return 0


def cmd_stats(args, cfg: PipelineConfig) -> int:
    manifest = corpus.read_manifest(args.manifest)
    _emit(asdict(corpus.compute_stats(manifest)))
    return 0


def cmd_serve_mos(args, cfg: PipelineConfig) -> int:
    import uvicorn
    from .mos import create_app
    app = create_app(args.study, args.log, audio_root=args.audio_root, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def _scatter_svg(projection, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    figure, axis = plt.subplots(figsize=(6, 5))
    unique = sorted(set(projection.labels))
    colors = plt.cm.tab20(np.linspace(0, 1, max(len(unique), 2)))
    for color, label in zip(colors, unique):
        mask = [l == label for l in projection.labels]
        axis.scatter(projection.points[mask, 0], projection.points[mask, 1],
                     s=18, color=color, label=label)
    axis.set_title(f"speaker embeddings ({projection.method})")
    if len(unique) <= 20:
        axis.legend(fontsize=6, markerscale=0.7)
    figure.tight_layout()
    figure.savefig(path, format="svg")
    plt.close(figure)


def _snr_svg(report, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    figure, axis = plt.subplots(figsize=(7, 4))
    speakers = list(report["per_speaker_mean_db"])
    values = [report["per_speaker_mean_db"][s] for s in speakers]
    axis.bar(range(len(speakers)), values, color="#4878a8")
    axis.axhline(report["mean_snr_db"], color="red", linestyle="--", label="mean")
    axis.axhline(report["band_low_db"], color="orange", linestyle="--", label="±1 std")
    axis.axhline(report["band_high_db"], color="orange", linestyle="--")
    axis.set_xticks(range(len(speakers)))
    axis.set_xticklabels(speakers, rotation=45, fontsize=6)
    axis.set_ylabel("SNR (dB)")
    axis.legend(fontsize=7)
    figure.tight_layout()
    figure.savefig(path, format="svg")
    plt.close(figure)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarclone",
        description="Few-shot Nepali voice cloning toolkit",
    )
    parser.add_argument("--config", help=f"config file (default: ${CONFIG_ENV_VAR})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="resample/denoise/split a raw corpus tree")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--kind", choices=("encoder", "synth"), default="encoder")
    p.add_argument("--max-clip-seconds", type=float, default=15.0)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("normalize", help="normalize Devanagari text on stdin")
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("train-encoder", help="train the speaker encoder with GE2E")
    p.add_argument("--manifest", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--metrics")
    p.add_argument("--holdout-fraction", type=float, default=0.2)
    p.add_argument("--eer-interval", type=int)
    p.add_argument("--workers", type=int, default=0,
                   help="cap on data-loading threads (0 = sequential)")
    p.set_defaults(func=cmd_train_encoder)

    p = sub.add_parser("train-synth", help="train the mel synthesizer")
    p.add_argument("--manifest", required=True)
    p.add_argument("--encoder", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--metrics")
    p.add_argument("--vocab")
    p.set_defaults(func=cmd_train_synth)

    p = sub.add_parser("train-vocoder", help="train the vocoder")
    p.add_argument("--manifest", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--metrics")
    p.add_argument("--workers", type=int, default=0,
                   help="cap on data-loading threads (0 = sequential)")
    p.set_defaults(func=cmd_train_vocoder)

    p = sub.add_parser("embed", help="embed a reference utterance")
    p.add_argument("--encoder", required=True)
    p.add_argument("--wav", required=True)
    p.add_argument("--out")
    p.add_argument("--speaker-id")
    p.add_argument("--tile-short", action="store_true",
                   help="tile clips shorter than one chunk instead of failing")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("clone", help="clone a voice onto new text")
    p.add_argument("--encoder", required=True)
    p.add_argument("--synth", required=True)
    p.add_argument("--vocoder", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=("argmax", "sample"), default="argmax")
    p.add_argument("--bundle", help="also emit a comparison bundle directory")
    p.set_defaults(func=cmd_clone)

    p = sub.add_parser("eval-eer", help="EER from a score file")
    p.add_argument("--scores", required=True)
    p.set_defaults(func=cmd_eval_eer)

    p = sub.add_parser("eval-sim", help="cosine similarity report over clip pairs")
    p.add_argument("--encoder", required=True)
    p.add_argument("--pairs", required=True)
    p.set_defaults(func=cmd_eval_sim)

    p = sub.add_parser("project", help="2-D projection of embeddings")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--method", choices=("pca", "neighbor-embed"), default="pca")
    p.add_argument("--seed", type=int)
    p.add_argument("--svg")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("snr", help="SNR report over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--svg")
    p.set_defaults(func=cmd_snr)

    p = sub.add_parser("stats", help="corpus statistics from a manifest")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("serve-mos", help="serve the MOS rating API (and UI if built)")
    p.add_argument("--study", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--audio-root")
    p.add_argument("--ui")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.set_defaults(func=cmd_serve_mos)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except (SwarcloneError, ValueError, OSError) as exc:
        sys.stderr.write(f"swarclone: error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
