"""Overfit the prosody network on a 3-utterance synthetic corpus and report accuracies.

Durations come from the per-phoneme table used to render the audio, pitch
from the matching f0 table, and mel targets from the rendered audio.

    python3 scripts/overfit_prosody.py --steps 2000 --hidden 64
"""

import argparse
import tempfile
import time

import numpy as np

from ttsfront import corpus, pitch, prosody, vocoder_bridge as vb
from ttsfront.synthetic import make_sentences, table_pitch, utterance_layout, write_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--hidden", type=int, default=64)
    ap.add_argument("--channels", type=int, default=64)
    ap.add_argument("--word-dim", type=int, default=16)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    texts = make_sentences(3, seed=args.seed, fixed=["Bonjour!"])
    with tempfile.TemporaryDirectory() as tmp:
        write_corpus(tmp, texts)
        c = corpus.load_corpus(f"{tmp}/manifest.tsv", expected_rate=24000)
        tracks = [table_pitch(utterance_layout(u.id, t)) for u, t in zip(c.utterances, texts)]
        stats = pitch.f0_statistics(tracks)
        cfg = prosody.ProsodyConfig(hidden=args.hidden, conv_channels=args.channels, word_dim=args.word_dim)
        model = prosody.ProsodyModel(sorted({p for u in c.utterances for p in u.phonemes}), ["neb"], cfg)
        data = [prosody.build_batch(model, u, tr, vb.mel_spectrogram(corpus.read_wav(u.audio_path)[0]), stats, 0.010)
                for u, tr in zip(c.utterances, tracks)]

    t0 = time.perf_counter()
    model, history = prosody.train(model, data, prosody.TrainConfig(max_steps=args.steps, batch_size=16))
    print(f"trained {len(history)} steps in {time.perf_counter() - t0:.0f}s")
    shown = history[::max(1, len(history) // 8)]
    for h in shown + history[len(history) - 1:] * (shown[-1] is not history[-1]):
        print(f"step {h.step:5d}  total {h.total:.4f}  dur {h.dur:.4f}  f0 {h.f0:.4f}  vuv {h.vuv:.4f}  cond {h.cond:.4f}")
    for text, b in zip(texts, data):
        out = prosody.forward_forced(model, b)
        dur_acc = np.mean(out.dur_logits.argmax(axis=1) == b.durations)
        vuv_acc = np.mean(out.voiced == b.voiced)
        print(f"{text!r}: duration acc {dur_acc:.3f}, voiced acc {vuv_acc:.3f}")


if __name__ == "__main__":
    main()
