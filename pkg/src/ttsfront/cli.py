"""``ttsfront`` command line: one subcommand per pipeline stage.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import corpus as corpus_mod
from . import g2p, pitch, prosody, vocoder_bridge
from .config import (PipelineConfig, build_config, config_text, default_config_path, load_config,
                     parse_overrides)
from .errors import DataError, NumericError, TTSFrontError

log = logging.getLogger("ttsfront")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# helpers


def _cfg(args) -> PipelineConfig:
    return load_config(args.config or default_config_path())


def _map_jobs(fn, items: Sequence, jobs: int) -> List:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _load_corpus(cfg: PipelineConfig, manifest: Optional[str] = None):
    path = Path(manifest) if manifest else cfg.path("manifest")
    return corpus_mod.load_corpus(path, expected_rate=cfg.mel.sample_rate)


def _pitch_job(payload):
    audio_path, out_path, pcfg = payload
    audio, rate = corpus_mod.read_wav(audio_path)
    track = pitch.extract_pitch(audio, rate, pcfg)
    pitch.write_pitch(out_path, track)
    return int(track.voiced.sum()), len(track)


def _mel_job(payload):
    audio_path, out_path, mcfg = payload
    audio, _ = corpus_mod.read_wav(audio_path)
    mel = vocoder_bridge.mel_spectrogram(audio, mcfg)
    np.save(out_path, mel, allow_pickle=False)
    return len(mel)


def _word_map(graphemes: Sequence[str], labels: Sequence[str]):
    """Decoded tokens plus the word index of each (-1 for punctuation and spaces)."""
    tokens, owner, words = [], [], []
    in_word = False
    for g, label in zip(graphemes, labels):
        if g2p.is_punctuation(g):
            in_word = False
        elif not in_word:
            words.append("")
            in_word = True
        if not g2p.is_punctuation(g):
            words[-1] += g
        for tok in g2p.decode_labels([label]):
            tokens.append(tok)
            owner.append(len(words) - 1 if in_word else prosody.NO_WORD)
    return tokens, owner, words


# --------------------------------------------------------------------------
# subcommands


def cmd_init(args) -> int:
    path = Path(args.config or default_config_path())
    cfg = build_config(parse_overrides(args.set or []), path.parent)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(config_text(cfg), encoding="utf-8")
    return EXIT_OK


def cmd_import(args) -> int:
    cfg = _cfg(args)
    corpus = _load_corpus(cfg, args.manifest)
    work = cfg.path("work_dir")
    work.mkdir(parents=True, exist_ok=True)
    corpus_mod.dump_corpus(corpus, work / "corpus.jsonl", hop_s=cfg.pitch.hop_s)
    print(f"imported {len(corpus)} utterances, speakers: {', '.join(corpus.speakers)}")
    return EXIT_OK


def cmd_extract_pitch(args) -> int:
    cfg = _cfg(args)
    corpus = _load_corpus(cfg, args.manifest)
    out = Path(args.out_dir) if args.out_dir else cfg.path("pitch_dir")
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(u.audio_path, out / f"{u.id}.ptk", cfg.pitch) for u in corpus.utterances]
    results = _map_jobs(_pitch_job, jobs, args.jobs or cfg.run.jobs)
    voiced = sum(v for v, _ in results)
    total = sum(n for _, n in results)
    print(f"pitch: {len(results)} files, {voiced}/{total} voiced frames")
    return EXIT_OK


def cmd_extract_mel(args) -> int:
    cfg = _cfg(args)
    corpus = _load_corpus(cfg, args.manifest)
    out = Path(args.out_dir) if args.out_dir else cfg.path("mel_dir")
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(u.audio_path, out / f"{u.id}.npy", cfg.mel) for u in corpus.utterances]
    frames = _map_jobs(_mel_job, jobs, args.jobs or cfg.run.jobs)
    print(f"mel: {len(frames)} files, {sum(frames)} frames")
    return EXIT_OK


def _split_items(items: Sequence, fraction: float, seed: int):
    n_valid = max(1, min(len(items) - 1, int(np.floor(len(items) * fraction + 0.5))))
    perm = np.random.default_rng(seed).permutation(len(items))
    valid = set(perm[:n_valid].tolist())
    return ([x for i, x in enumerate(items) if i not in valid],
            [x for i, x in enumerate(items) if i in valid])


def cmd_g2p_train(args) -> int:
    cfg = _cfg(args)
    data = g2p.read_g2p_tsv(args.data or cfg.path("g2p_data"))
    if args.valid_data:
        train, valid = data, g2p.read_g2p_tsv(args.valid_data)
    else:
        if len(data) < 2:
            raise DataError("need at least two sentences to split train/valid")
        train, valid = _split_items(data, cfg.run.valid_fraction, cfg.run.seed)
    gcfg = cfg.g2p
    if args.epochs is not None:
        gcfg = g2p.G2PConfig(**{**gcfg.__dict__, "max_epochs": args.epochs})
    model, history = g2p.g2p_train(train, valid, gcfg)
    ckpt_dir = cfg.path("checkpoint_dir")
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    out = Path(args.out) if args.out else ckpt_dir / "g2p.nnc"
    g2p.save_g2p(model, out)
    with open(ckpt_dir / "g2p_log.tsv", "w", encoding="utf-8") as fh:
        fh.write("epoch\tloss\tpar\tsar\n")
        for e in history:
            fh.write(f"{e.epoch}\t{e.loss:.6f}\t{e.par:.6f}\t{e.sar:.6f}\n")
    best = max(e.sar for e in history)
    print(f"g2p: {len(history)} epochs, best valid SAR {best:.4f}, saved {out}")
    return EXIT_OK


def cmd_g2p_eval(args) -> int:
    cfg = _cfg(args)
    model = g2p.load_g2p(args.model or cfg.path("checkpoint_dir") / "g2p.nnc")
    report = g2p.evaluate_par_sar(model, g2p.read_g2p_tsv(args.data or cfg.path("g2p_data")))
    print(f"PAR {report.par:.6f} ({report.correct_labels}/{report.n_labels})\t"
          f"SAR {report.sar:.6f} ({report.perfect_sentences}/{report.n_sentences})")
    return EXIT_OK


def cmd_g2p_run(args) -> int:
    cfg = _cfg(args)
    model = g2p.load_g2p(args.model or cfg.path("checkpoint_dir") / "g2p.nnc")
    print(" ".join(g2p.transcribe(model, args.text)))
    return EXIT_OK


def cmd_prosody_train(args) -> int:
    cfg = _cfg(args)
    corpus = _load_corpus(cfg, args.manifest)
    hop_s = cfg.pitch.hop_s
    pitch_dir, mel_dir = cfg.path("pitch_dir"), cfg.path("mel_dir")
    emb_dir = cfg.path("embeddings_dir") if cfg.paths.embeddings_dir else None
    tracks, mels, embs = {}, {}, {}
    for u in corpus.utterances:
        ptk = pitch_dir / f"{u.id}.ptk"
        if not ptk.exists():
            raise DataError(f"missing pitch cache: {ptk}")
        tracks[u.id] = pitch.read_pitch(ptk, hop_s)
        mel_path = mel_dir / f"{u.id}.npy"
        if not mel_path.exists():
            raise DataError(f"missing mel cache: {mel_path}")
        mels[u.id] = np.load(mel_path, allow_pickle=False)
        if emb_dir is not None:
            web = emb_dir / f"{u.id}.web"
            if not web.exists():
                raise DataError(f"missing word embeddings: {web}")
            embs[u.id] = prosody.read_word_embeddings(web)
    stats = {}
    for spk in corpus.speakers:
        stats[spk] = pitch.f0_statistics([tracks[u.id] for u in corpus.utterances if u.speaker == spk])
    phonemes = sorted({p for u in corpus.utterances for p in u.phonemes})
    model = prosody.ProsodyModel(phonemes, corpus.speakers, cfg.prosody)
    data = [prosody.build_batch(model, u, tracks[u.id], mels[u.id], stats[u.speaker], hop_s, embs.get(u.id))
            for u in corpus.utterances]
    tcfg = cfg.train
    if args.steps is not None:
        tcfg = prosody.TrainConfig(**{**tcfg.__dict__, "max_steps": args.steps})
    ckpt_dir = cfg.path("checkpoint_dir")
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    model, history = prosody.train(model, data, tcfg, log_path=ckpt_dir / "prosody_log.tsv")
    out = Path(args.out) if args.out else ckpt_dir / "prosody.nnc"
    prosody.save_prosody(model, out, stats, {"hop_s": hop_s})
    last = history[-1]
    print(f"prosody: {len(history)} steps, final loss {last.total:.4f} "
          f"(dur {last.dur:.4f} f0 {last.f0:.4f} vuv {last.vuv:.4f} cond {last.cond:.4f}), saved {out}")
    return EXIT_OK


def _write_wav(path, f0, voiced, cond, cfg: PipelineConfig, seed: int) -> int:
    wave = vocoder_bridge.debug_synthesize(f0, voiced, vocoder_bridge.frame_energy(cond), cfg.mel, seed=seed)
    peak = float(np.max(np.abs(wave))) if len(wave) else 0.0
    if peak > 0:
        wave = wave * (0.9 / peak)
    corpus_mod.write_wav(path, wave, cfg.mel.sample_rate)
    return len(wave)


def cmd_synth(args) -> int:
    cfg = _cfg(args)
    ckpt_dir = cfg.path("checkpoint_dir")
    g2p_model = g2p.load_g2p(args.g2p_model or ckpt_dir / "g2p.nnc")
    model, stats, _ = prosody.load_prosody(args.model or ckpt_dir / "prosody.nnc")
    speaker = model.speaker_id(args.speaker)
    graphemes = list(args.text)
    labels = g2p.predict_labels(g2p_model, graphemes)
    tokens, owner, words = _word_map(graphemes, labels)
    if not tokens:
        raise DataError("text produced no phonemes")
    if args.embeddings:
        vecs = prosody.read_word_embeddings(args.embeddings)
        if vecs.shape != (len(words), model.cfg.word_dim):
            raise DataError(f"{args.embeddings}: shape {vecs.shape}, expected ({len(words)}, {model.cfg.word_dim})")
    else:
        vecs = np.zeros((len(words), model.cfg.word_dim), dtype=np.float32)
    out, durations = prosody.infer(model, model.phoneme_ids(tokens), owner, vecs, speaker)
    voiced = out.voiced
    f0 = pitch.denormalize_f0(out.f0_norm, voiced, stats[args.speaker])
    out_dir = Path(args.out_dir) if args.out_dir else cfg.path("output_dir")
    out_dir.mkdir(parents=True, exist_ok=True)
    vocoder_bridge.export_conditioning(out.cond, out_dir / f"{args.name}.cnd")
    pitch.write_pitch(out_dir / f"{args.name}.ptk", pitch.PitchTrack(f0, voiced, cfg.pitch.hop_s))
    if not args.no_audio:
        _write_wav(out_dir / f"{args.name}.wav", f0, voiced, out.cond, cfg, args.seed)
    T = out.n_frames
    print("phonemes\t" + " ".join(tokens))
    print("durations\t" + " ".join(str(int(d)) for d in durations))
    print(f"frames\t{T}")
    print(f"voiced_fraction\t{(voiced.mean() if T else 0.0):.4f}")
    return EXIT_OK


def cmd_debug_vocode(args) -> int:
    cfg = _cfg(args)
    cond = vocoder_bridge.import_conditioning(args.cnd)
    track = pitch.read_pitch(args.ptk, cfg.pitch.hop_s)
    if len(track) != len(cond):
        raise DataError(f"{args.ptk} has {len(track)} frames, {args.cnd} has {len(cond)}")
    n = _write_wav(args.out, track.f0_hz, track.voiced, cond, cfg, args.seed)
    print(f"wrote {n} samples to {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="config file (default: $TTSFRONT_CONFIG or ./ttsfront.ini)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = _Parser(prog="ttsfront", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("init", parents=[common], help="write a config file with all defaults")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a default")
    p.set_defaults(fn=cmd_init)

    p = sub.add_parser("import", parents=[common], help="validate the manifest and dump the corpus")
    p.add_argument("--manifest")
    p.set_defaults(fn=cmd_import)

    for name, fn, what in (("extract-pitch", cmd_extract_pitch, "PTK1 pitch caches"),
                           ("extract-mel", cmd_extract_mel, "log-mel caches (.npy)")):
        p = sub.add_parser(name, parents=[common], help=f"write {what}")
        p.add_argument("--manifest")
        p.add_argument("--out-dir")
        p.add_argument("--jobs", type=int, help="worker processes")
        p.set_defaults(fn=fn)

    p = sub.add_parser("g2p-train", parents=[common], help="train the g2p tagger")
    p.add_argument("--data", help="TSV of graphemes<TAB>labels")
    p.add_argument("--valid-data", help="separate validation TSV (default: seeded split of --data)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_g2p_train)

    p = sub.add_parser("g2p-eval", parents=[common], help="report PAR and SAR")
    p.add_argument("--data")
    p.add_argument("--model")
    p.set_defaults(fn=cmd_g2p_eval)

    p = sub.add_parser("g2p-run", parents=[common], help="transcribe one sentence")
    p.add_argument("--text", required=True)
    p.add_argument("--model")
    p.set_defaults(fn=cmd_g2p_run)

    p = sub.add_parser("prosody-train", parents=[common], help="train the prosody network")
    p.add_argument("--manifest")
    p.add_argument("--steps", type=int)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_prosody_train)

    p = sub.add_parser("synth", parents=[common], help="text to conditioning features and debug audio")
    p.add_argument("--text", required=True)
    p.add_argument("--speaker", required=True)
    p.add_argument("--name", default="synth", help="output file stem")
    p.add_argument("--out-dir")
    p.add_argument("--embeddings", help="WEB1/WES1 word-embedding file for the text")
    p.add_argument("--model")
    p.add_argument("--g2p-model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-audio", action="store_true")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("debug-vocode", parents=[common], help="render CND1 + PTK1 files to WAV")
    p.add_argument("--cnd", required=True)
    p.add_argument("--ptk", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_debug_vocode)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.fn(args)
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except TTSFrontError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
