"""Aligned corpus: Praat TextGrids, WAV metadata and frame-level durations.

Manifest lines are ``id<TAB>speaker<TAB>textgrid_path<TAB>audio_path``;
relative paths resolve against the manifest's directory.
"""

from __future__ import annotations

import json
import math
import re
import wave
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import DataError, FormatError, TextGridError
from .frames import frames_for_duration, round_half_up

SILENCE = "sil"
_TIME_EPS = 1e-9


class Interval(NamedTuple):
    start: float
    end: float
    label: str


@dataclass
class IntervalTier:
    name: str
    xmin: float
    xmax: float
    intervals: List[Interval] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    def __getitem__(self, i):
        return self.intervals[i]


@dataclass(frozen=True)
class PhonemeSegment:
    phoneme: str
    start_s: float
    end_s: float


@dataclass(frozen=True)
class WordSpan:
    word: str
    first_phoneme_idx: int
    last_phoneme_idx: int


@dataclass(frozen=True)
class Utterance:
    id: str
    speaker: str
    segments: Tuple[PhonemeSegment, ...]
    words: Tuple[WordSpan, ...]
    sample_rate: int
    n_samples: int
    audio_path: Optional[str] = None

    @property
    def phonemes(self) -> List[str]:
        return [s.phoneme for s in self.segments]

    def word_of_phoneme(self) -> List[Optional[int]]:
        owner: List[Optional[int]] = [None] * len(self.segments)
        for w, span in enumerate(self.words):
            for i in range(span.first_phoneme_idx, span.last_phoneme_idx + 1):
                owner[i] = w
        return owner


@dataclass(frozen=True)
class AlignedCorpus:
    utterances: Tuple[Utterance, ...]
    speakers: Tuple[str, ...]

    def __post_init__(self):
        ids = [u.id for u in self.utterances]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate utterance ids")
        missing = {u.speaker for u in self.utterances} - set(self.speakers)
        if missing:
            raise DataError(f"speakers not declared: {sorted(missing)}")

    def __len__(self) -> int:
        return len(self.utterances)

    def by_id(self, utt_id: str) -> Utterance:
        for u in self.utterances:
            if u.id == utt_id:
                return u
        raise KeyError(utt_id)


# --------------------------------------------------------------------------
# TextGrid text, long and short forms

_TOKEN = re.compile(
    r'"(?P<str>(?:[^"]|"")*)"'
    r"|(?P<flag><exists>|<absent>)"
    r"|\[[^\]\n]*\]"
    r"|(?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"
    r"|[A-Za-z_][\w?]*"
    r"|[=:\s]+"
)


class _Tokens:
    """Praat's text reader: a stream of values, ignoring ``key =`` labels."""

    def __init__(self, text: str):
        self.items: List[Tuple[str, object, int]] = []
        pos, line = 0, 1
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                raise TextGridError(f"unexpected character {text[pos]!r}", line)
            if m.group("str") is not None:
                self.items.append(("str", m.group("str").replace('""', '"'), line))
            elif m.group("flag") is not None:
                self.items.append(("flag", m.group("flag"), line))
            elif m.group("num") is not None:
                self.items.append(("num", m.group("num"), line))
            line += text.count("\n", pos, m.end())
            pos = m.end()
        self.i = 0
        self.last_line = line

    def _next(self, kind: str, what: str):
        if self.i >= len(self.items):
            raise TextGridError(f"unexpected end of file, expected {what}", self.last_line)
        got_kind, value, line = self.items[self.i]
        if got_kind != kind:
            raise TextGridError(f"expected {what}, got {value!r}", line)
        self.i += 1
        return value, line

    def string(self, what: str) -> Tuple[str, int]:
        return self._next("str", what)

    def number(self, what: str) -> Tuple[float, int]:
        value, line = self._next("num", what)
        return float(value), line

    def count(self, what: str) -> Tuple[int, int]:
        value, line = self._next("num", what)
        try:
            n = int(value)
        except ValueError:
            raise TextGridError(f"{what} must be an integer, got {value}", line) from None
        if n < 0:
            raise TextGridError(f"{what} must be nonnegative", line)
        return n, line

    def flag(self, what: str) -> Tuple[str, int]:
        return self._next("flag", what)


def parse_textgrid(text: str) -> List[IntervalTier]:
    """Parse a Praat TextGrid (long or short text form) into interval tiers.

    Raises:
        TextGridError: malformed header, non-monotone intervals, or a point tier.
    """
    text = text.lstrip("\ufeff")
    first = text.split("\n", 1)[0]
    if not re.match(r'\s*File type\s*=\s*"ooTextFile"', first):
        raise TextGridError("not a TextGrid header", 1)
    toks = _Tokens(text)
    toks.string("file type")
    cls, line = toks.string("object class")
    if cls != "TextGrid":
        raise TextGridError(f"object class {cls!r} is not TextGrid", line)
    toks.number("xmin")
    toks.number("xmax")
    flag, line = toks.flag("<exists>")
    if flag != "<exists>":
        return []
    n_tiers, _ = toks.count("tier count")
    tiers = []
    for _ in range(n_tiers):
        kind, line = toks.string("tier class")
        if kind == "TextTier":
            raise TextGridError("point tiers are not supported", line)
        if kind != "IntervalTier":
            raise TextGridError(f"unknown tier class {kind!r}", line)
        name, _ = toks.string("tier name")
        xmin, _ = toks.number("tier xmin")
        xmax, _ = toks.number("tier xmax")
        size, _ = toks.count("interval count")
        tier = IntervalTier(name, xmin, xmax)
        prev_end = -math.inf
        for _ in range(size):
            start, line = toks.number("interval xmin")
            end, _ = toks.number("interval xmax")
            label, _ = toks.string("interval text")
            if end <= start:
                raise TextGridError(f"interval end {end} not after start {start}", line)
            if start < prev_end - _TIME_EPS:
                raise TextGridError(f"interval starting at {start} overlaps previous end {prev_end}", line)
            prev_end = end
            tier.intervals.append(Interval(start, end, label))
        tiers.append(tier)
    return tiers


def _quote(s: str) -> str:
    return '"' + s.replace('"', '""') + '"'


def serialize_textgrid(tiers: Sequence[IntervalTier]) -> str:
    """Long-form TextGrid text; ``repr`` floats keep times exact on re-parse."""
    xmin = min((t.xmin for t in tiers), default=0.0)
    xmax = max((t.xmax for t in tiers), default=0.0)
    out = [
        'File type = "ooTextFile"',
        'Object class = "TextGrid"',
        "",
        f"xmin = {xmin!r} ",
        f"xmax = {xmax!r} ",
        "tiers? <exists> ",
        f"size = {len(tiers)} ",
        "item []: ",
    ]
    for k, tier in enumerate(tiers, 1):
        out += [
            f"    item [{k}]:",
            '        class = "IntervalTier" ',
            f"        name = {_quote(tier.name)} ",
            f"        xmin = {tier.xmin!r} ",
            f"        xmax = {tier.xmax!r} ",
            f"        intervals: size = {len(tier.intervals)} ",
        ]
        for j, iv in enumerate(tier.intervals, 1):
            out += [
                f"        intervals [{j}]:",
                f"            xmin = {iv.start!r} ",
                f"            xmax = {iv.end!r} ",
                f"            text = {_quote(iv.label)} ",
            ]
    return "\n".join(out) + "\n"


def read_textgrid(path) -> List[IntervalTier]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise DataError(f"missing file: {path}") from exc
    try:
        return parse_textgrid(text)
    except TextGridError as exc:
        raise TextGridError(exc.message, exc.line, path) from None


# --------------------------------------------------------------------------
# Utterances


def build_utterance(
    phone_tier: Iterable,
    word_tier: Iterable,
    speaker: str,
    sample_rate: int,
    n_samples: int,
    utt_id: str = "",
    slack_s: float = 0.010,
    audio_path: Optional[str] = None,
) -> Utterance:
    """Assemble an utterance, assigning phonemes to words by midpoint containment.

    Empty phone labels become ``"sil"``; empty word labels are not words.
    """
    segments = tuple(
        PhonemeSegment(label.strip() or SILENCE, float(start), float(end))
        for start, end, label in phone_tier
    )
    words_iv = [(float(s), float(e), lab.strip()) for s, e, lab in word_tier if lab.strip()]
    owner: List[Optional[int]] = []
    for i, seg in enumerate(segments):
        mid = 0.5 * (seg.start_s + seg.end_s)
        hits = [w for w, (s, e, _) in enumerate(words_iv) if s <= mid < e]
        if len(hits) > 1:
            raise DataError(f"{utt_id}: phoneme {i} ({seg.phoneme}) lies in overlapping words {hits}")
        owner.append(hits[0] if hits else None)
    spans = []
    for w, (_, _, word) in enumerate(words_iv):
        members = [i for i, o in enumerate(owner) if o == w]
        if members:
            spans.append(WordSpan(word, members[0], members[-1]))
    if segments and segments[-1].end_s > n_samples / sample_rate + slack_s + _TIME_EPS:
        raise DataError(
            f"{utt_id}: alignment ends at {segments[-1].end_s}s, audio is {n_samples / sample_rate}s"
        )
    return Utterance(utt_id, speaker, segments, tuple(spans), int(sample_rate), int(n_samples), audio_path)


def durations_in_frames(utt: Utterance, hop_s: float) -> np.ndarray:
    """Integer frame counts per segment summing to ``round(span / hop)`` exactly.

    Floors of the raw lengths are topped up by largest remainder; equal
    remainders go to the earliest segment.
    """
    if hop_s <= 0:
        raise ValueError("hop must be positive")
    segs = utt.segments
    if not segs:
        raise DataError(f"{utt.id}: no segments")
    total = frames_for_duration(segs[-1].end_s - segs[0].start_s, hop_s)
    raw = np.array([round((s.end_s - s.start_s) / hop_s, 9) for s in segs])
    counts = np.floor(raw).astype(np.int64)
    deficit = total - int(counts.sum())
    if deficit > 0:
        remainders = np.round(raw - counts, 9)
        # stable sort on -remainder keeps earlier segments first among ties
        order = np.argsort(-remainders, kind="stable")
        counts[order[:deficit]] += 1
    elif deficit < 0:
        # gaps between segments can make the floors overshoot the span
        order = np.argsort(np.round(raw - counts, 9), kind="stable")
        for i in order:
            if deficit == 0:
                break
            if counts[i] > 0:
                counts[i] -= 1
                deficit += 1
    return counts


# --------------------------------------------------------------------------
# Audio and manifests


def read_wav(path) -> Tuple[np.ndarray, int]:
    """Read 16-bit PCM mono WAV as float64 in [-1, 1)."""
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getnchannels() != 1:
                raise FormatError(f"{path}: expected mono audio, got {wf.getnchannels()} channels")
            if wf.getsampwidth() != 2:
                raise FormatError(f"{path}: expected 16-bit PCM")
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except FileNotFoundError as exc:
        raise DataError(f"missing file: {path}") from exc
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0, rate


def wav_info(path) -> Tuple[int, int]:
    """(sample_rate, n_samples) without decoding samples."""
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getnchannels() != 1 or wf.getsampwidth() != 2:
                raise FormatError(f"{path}: expected 16-bit PCM mono")
            return wf.getframerate(), wf.getnframes()
    except FileNotFoundError as exc:
        raise DataError(f"missing file: {path}") from exc
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_wav(path, signal: np.ndarray, sample_rate: int) -> None:
    pcm = np.clip(np.round(np.asarray(signal) * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(int(sample_rate))
        wf.writeframes(pcm.tobytes())


def _pick_tiers(tiers: List[IntervalTier], path) -> Tuple[IntervalTier, IntervalTier]:
    by_name = {t.name.lower(): t for t in tiers}
    phones = by_name.get("phones") or by_name.get("phonemes")
    words = by_name.get("words")
    if phones is None or words is None:
        if len(tiers) < 2:
            raise DataError(f"{path}: need a word tier and a phone tier")
        # Montreal Forced Aligner order: words then phones
        words, phones = tiers[0], tiers[1]
    return phones, words


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    speaker: str
    textgrid: Path
    audio: Path


def read_manifest(manifest_path) -> List[ManifestEntry]:
    manifest_path = Path(manifest_path)
    try:
        lines = manifest_path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError as exc:
        raise DataError(f"missing file: {manifest_path}") from exc
    base = manifest_path.parent
    entries, seen = [], set()
    for n, line in enumerate(lines, 1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise DataError(f"{manifest_path}:{n}: expected 4 tab-separated fields")
        utt_id, speaker, tg, audio = fields
        if utt_id in seen:
            raise DataError(f"{manifest_path}:{n}: duplicate id {utt_id}")
        seen.add(utt_id)
        entries.append(ManifestEntry(utt_id, speaker, base / tg, base / audio))
    return entries


def load_utterance(entry: ManifestEntry, expected_rate: Optional[int] = None) -> Utterance:
    rate, n_samples = wav_info(entry.audio)
    if expected_rate is not None and rate != expected_rate:
        raise DataError(f"{entry.audio}: sample rate {rate} != {expected_rate}; resample offline")
    phones, words = _pick_tiers(read_textgrid(entry.textgrid), entry.textgrid)
    return build_utterance(phones, words, entry.speaker, rate, n_samples,
                           utt_id=entry.id, audio_path=str(entry.audio))


def load_corpus(manifest_path, expected_rate: Optional[int] = None) -> AlignedCorpus:
    entries = read_manifest(manifest_path)
    utts = tuple(load_utterance(e, expected_rate) for e in entries)
    speakers = tuple(dict.fromkeys(u.speaker for u in utts))
    return AlignedCorpus(utts, speakers)


def split_corpus(corpus: AlignedCorpus, valid_fraction: float = 0.1,
                 seed: int = 0) -> Tuple[AlignedCorpus, AlignedCorpus]:
    """Seeded train/valid partition; depends only on the utterance ids and seed."""
    if not 0.0 < valid_fraction < 1.0:
        raise ValueError("valid_fraction must be in (0, 1)")
    ids = sorted(u.id for u in corpus.utterances)
    n_valid = round_half_up(len(ids) * valid_fraction)
    perm = np.random.default_rng(seed).permutation(len(ids))
    valid_ids = {ids[i] for i in perm[:n_valid]}
    train = tuple(u for u in corpus.utterances if u.id not in valid_ids)
    valid = tuple(u for u in corpus.utterances if u.id in valid_ids)
    return AlignedCorpus(train, corpus.speakers), AlignedCorpus(valid, corpus.speakers)


def dump_corpus(corpus: AlignedCorpus, path, hop_s: Optional[float] = None) -> None:
    """One JSON object per utterance, for eyeballing imports."""
    with open(path, "w", encoding="utf-8") as fh:
        for u in corpus.utterances:
            record = {
                "id": u.id,
                "speaker": u.speaker,
                "sample_rate": u.sample_rate,
                "n_samples": u.n_samples,
                "segments": [[s.phoneme, s.start_s, s.end_s] for s in u.segments],
                "words": [[w.word, w.first_phoneme_idx, w.last_phoneme_idx] for w in u.words],
            }
            if hop_s is not None:
                record["durations"] = durations_in_frames(u, hop_s).tolist()
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
