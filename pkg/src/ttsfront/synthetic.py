"""Synthetic lexicon and aligned audio corpus for overfit checks and demos.

The spelling rules are deliberately context-dependent (final ``e`` is silent,
``ou`` is one vowel) so the tagger has to use its neighbours.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .corpus import Interval, IntervalTier, serialize_textgrid, write_wav
from .pitch import PitchTrack
from .g2p import (SPACE, LabelSequence, encode_alignment, is_punctuation, label_phonemes,
                  literal_token, write_g2p_tsv)

ONSETS = ["b", "d", "k", "l", "m", "n", "p", "r", "s", "t", "x", "ch", "j", "h"]
VOWELS = ["a", "e", "i", "o", "u", "ou"]
_SIMPLE = {c: c for c in "abdiklmnoprstu"}
_SIMPLE.update({"j": "ʒ", "e": "ə"})


def spell(word: str) -> List[List[str]]:
    """Per-letter phoneme lists for a word under the toy rules (case-insensitive)."""
    word = word.lower()
    out: List[List[str]] = []
    i = 0
    while i < len(word):
        ch = word[i]
        nxt = word[i + 1] if i + 1 < len(word) else ""
        if ch == "x":
            out.append(["k", "s"])
        elif ch == "h":
            out.append([])
        elif ch == "c" and nxt == "h":
            out += [["ʃ"], []]
            i += 1
        elif ch == "o" and nxt == "u":
            out += [["u"], []]
            i += 1
        elif ch == "e" and i == len(word) - 1 and len(word) > 1:
            out.append([])
        else:
            out.append([_SIMPLE[ch]])
        i += 1
    return out


def sentence_alignment(text: str) -> LabelSequence:
    spans: List[List[str]] = []
    for token in _split_keep(text):
        if len(token) == 1 and is_punctuation(token):
            spans.append([])
        else:
            spans += spell(token)
    return encode_alignment(list(text), spans)


def _split_keep(text: str) -> List[str]:
    tokens, word = [], ""
    for ch in text:
        if is_punctuation(ch):
            if word:
                tokens.append(word)
                word = ""
            tokens.append(ch)
        else:
            word += ch
    if word:
        tokens.append(word)
    return tokens


def random_word(rng: np.random.Generator) -> str:
    n_syl = int(rng.integers(1, 4))
    word = "".join(ONSETS[rng.integers(len(ONSETS))] + VOWELS[rng.integers(len(VOWELS))]
                   for _ in range(n_syl))
    if rng.random() < 0.3:
        word += "e"
    return word


def make_sentences(n: int = 50, seed: int = 0, fixed: Sequence[str] = ()) -> List[str]:
    rng = np.random.default_rng(seed)
    out = list(fixed)
    while len(out) < n:
        words = [random_word(rng) for _ in range(int(rng.integers(2, 5)))]
        text = words[0]
        for w in words[1:]:
            text += ("," if rng.random() < 0.25 else "") + " " + w
        text += str(rng.choice([".", "?", "!"]))
        if text not in out:
            out.append(text)
    return out


def make_lexicon(n: int = 50, seed: int = 0, fixed: Sequence[str] = ()) -> List[LabelSequence]:
    return [sentence_alignment(s) for s in make_sentences(n, seed, fixed)]


# --------------------------------------------------------------------------
# Acoustic rendering

VOICED_F0 = {"a": 120.0, "ə": 135.0, "i": 170.0, "o": 110.0, "u": 150.0,
             "b": 100.0, "d": 115.0, "l": 125.0, "m": 105.0, "n": 118.0,
             "r": 140.0, "ʒ": 130.0}
NOISY = {"k", "p", "s", "t", "ʃ"}


def phoneme_duration_frames(phoneme: str) -> int:
    """Fixed frame count per phoneme symbol, between 3 and 8."""
    if phoneme == SPACE:
        return 3
    if is_punctuation(phoneme):
        return 8
    return 3 + sum(ord(c) for c in phoneme) % 6


@dataclass(frozen=True)
class SyntheticUtterance:
    id: str
    text: str
    phonemes: List[str]
    word_of_phoneme: List[int]
    words: List[str]


def utterance_layout(utt_id: str, text: str) -> SyntheticUtterance:
    seq = sentence_alignment(text)
    phonemes: List[str] = []
    owner: List[int] = []
    words: List[str] = []
    in_word = False
    for g, label in zip(seq.graphemes, seq.labels):
        if is_punctuation(g):
            in_word = False
            phonemes.append(literal_token(g))
            owner.append(-1)
            continue
        if not in_word:
            words.append("")
            in_word = True
        words[-1] += g
        for p in label_phonemes(label):
            phonemes.append(p)
            owner.append(len(words) - 1)
    return SyntheticUtterance(utt_id, text, phonemes, owner, words)


def render(layout: SyntheticUtterance, sample_rate: int = 24000, hop_s: float = 0.010,
           seed: int = 0) -> Tuple[np.ndarray, List[IntervalTier]]:
    """Audio plus word/phone tiers; sine for voiced phonemes, noise for obstruents."""
    rng = np.random.default_rng(seed)
    hop = int(round(hop_s * sample_rate))
    chunks, phones, t = [], [], 0
    phase = 0.0
    for p in layout.phonemes:
        n = phoneme_duration_frames(p) * hop
        if p in VOICED_F0:
            inc = 2 * np.pi * VOICED_F0[p] / sample_rate
            chunks.append(0.5 * np.sin(phase + inc * np.arange(n)))
            phase = (phase + inc * n) % (2 * np.pi)
        elif p in NOISY:
            chunks.append(0.1 * rng.standard_normal(n))
        else:
            chunks.append(np.zeros(n))
        phones.append((t, t + n, p))
        t += n
    audio = np.concatenate(chunks)
    sec = lambda k: round(k / sample_rate, 6)  # noqa: E731
    phone_tier = IntervalTier("phones", 0.0, sec(t),
                              [Interval(sec(a), sec(b), p) for a, b, p in phones])
    word_iv = []
    for w, word in enumerate(layout.words):
        idx = [i for i, o in enumerate(layout.word_of_phoneme) if o == w]
        word_iv.append(Interval(sec(phones[idx[0]][0]), sec(phones[idx[-1]][1]), word))
    word_tier = IntervalTier("words", 0.0, sec(t), word_iv)
    return audio, [word_tier, phone_tier]


def write_corpus(out_dir, texts: Sequence[str], speaker: str = "neb",
                 sample_rate: int = 24000, g2p_sentences: Sequence[LabelSequence] = (),
                 seed: int = 0) -> Dict[str, Path]:
    """Render ``texts`` to WAV + TextGrid, write a manifest and a g2p TSV."""
    out = Path(out_dir)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    (out / "textgrid").mkdir(parents=True, exist_ok=True)
    lines = []
    for k, text in enumerate(texts):
        utt_id = f"{speaker}_{k:04d}"
        audio, tiers = render(utterance_layout(utt_id, text), sample_rate, seed=seed + k)
        write_wav(out / "wav" / f"{utt_id}.wav", audio, sample_rate)
        (out / "textgrid" / f"{utt_id}.TextGrid").write_text(serialize_textgrid(tiers), encoding="utf-8")
        lines.append(f"{utt_id}\t{speaker}\ttextgrid/{utt_id}.TextGrid\twav/{utt_id}.wav")
    manifest = out / "manifest.tsv"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    g2p_path = out / "g2p.tsv"
    lexicon = list(g2p_sentences) or [sentence_alignment(t) for t in texts]
    write_g2p_tsv(g2p_path, lexicon)
    (out / "texts.txt").write_text("\n".join(texts) + "\n", encoding="utf-8")
    return {"manifest": manifest, "g2p": g2p_path, "root": out}


def table_pitch(layout: SyntheticUtterance, hop_s: float = 0.010) -> PitchTrack:
    """Gold pitch straight from the per-phoneme table, one value per frame."""
    durations = [phoneme_duration_frames(p) for p in layout.phonemes]
    f0 = np.repeat([VOICED_F0.get(p, 0.0) for p in layout.phonemes], durations)
    return PitchTrack(f0, f0 > 0, hop_s)
