"""Prosody network: shared conv+BiLSTM backbone, word vectors, three BiLSTM heads.

Phoneme embeddings (plus a speaker embedding) run through the backbone; its
output is joined with the vector of the word each phoneme belongs to. The
duration head reads that phoneme-level sequence directly, while the pitch and
conditioning heads read it after length regulation to frames, using gold
durations in training and predicted ones at inference.

Word-embedding files:

* ``WEB1``: u32 n_words, u32 D, then f32 rows (one per word).
* ``WES1``: u32 S, u32 D, f32 rows (one per subtoken), u32 n_words, then per
  word a u32 count followed by that many u32 subtoken indices.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import binio, nn
from .corpus import Utterance, durations_in_frames
from .errors import DataError, FormatError, NumericError
from .frames import frames_for_duration
from .pitch import F0Stats, PitchTrack, normalize_f0

log = logging.getLogger(__name__)

UNK = "<unk>"
NO_WORD = -1


@dataclass
class ProsodyConfig:
    phoneme_dim: int = 64
    speaker_dim: int = 32
    conv_channels: int = 128
    kernel_size: int = 5
    n_conv: int = 3
    hidden: int = 128
    word_dim: int = 768
    d_max: int = 100
    cond_dim: int = 80
    seed: int = 0


@dataclass
class TrainConfig:
    max_steps: int = 20000
    batch_size: int = 16
    seed: int = 0
    lr0: float = 2e-4
    decay: float = 1e-5
    w_dur: float = 1.0
    w_f0: float = 1.0
    w_vuv: float = 1.0
    w_cond: float = 1.0
    preflight: bool = True
    log_every: int = 1


# --------------------------------------------------------------------------
# Non-uniform upsampling


def reduce_subtokens(raw: np.ndarray, subtoken_map: Sequence[Sequence[int]]) -> np.ndarray:
    """One row per word: the vector of its first subtoken."""
    raw = np.asarray(raw)
    firsts = []
    for w, toks in enumerate(subtoken_map):
        if len(toks) == 0:
            raise DataError(f"word {w} has no subtokens")
        if toks[0] >= len(raw) or toks[0] < 0:
            raise DataError(f"word {w}: subtoken {toks[0]} out of range for {len(raw)} rows")
        firsts.append(int(toks[0]))
    return raw[np.array(firsts, dtype=np.int64)] if firsts else raw[:0]


def upsample_words_to_phonemes(word_vecs: np.ndarray, word_of_phoneme: Sequence[Optional[int]]) -> np.ndarray:
    """Per-phoneme copy of its word's vector; phonemes outside words get zeros."""
    word_vecs = np.asarray(word_vecs)
    owner = np.array([NO_WORD if w is None else w for w in word_of_phoneme], dtype=np.int64)
    out = np.zeros((len(owner), word_vecs.shape[1]), dtype=word_vecs.dtype)
    inside = owner >= 0
    out[inside] = word_vecs[owner[inside]]
    return out


def build_index(durations: Sequence[int]) -> np.ndarray:
    """Frame-to-phoneme index: phoneme i owns ``durations[i]`` consecutive frames."""
    durations = np.asarray(durations, dtype=np.int64)
    if np.any(durations < 0):
        raise ValueError("durations must be nonnegative")
    return np.repeat(np.arange(len(durations)), durations)


def regulate_length(phoneme_vecs: np.ndarray, index: np.ndarray) -> np.ndarray:
    """Gather phoneme rows into frames (``phoneme_vecs[index]``)."""
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= len(phoneme_vecs)):
        raise IndexError("frame index refers to a missing phoneme")
    return phoneme_vecs[index]


def regulate_length_backward(dframes: np.ndarray, index: np.ndarray, n_phonemes: int) -> np.ndarray:
    out = np.zeros((n_phonemes, dframes.shape[1]), dtype=dframes.dtype)
    np.add.at(out, index, dframes)
    return out


# --------------------------------------------------------------------------
# Data containers


@dataclass
class ProsodyBatch:
    phoneme_ids: np.ndarray
    word_of_phoneme: np.ndarray
    word_vecs: np.ndarray
    speaker: int
    durations: np.ndarray
    f0_norm: np.ndarray
    voiced: np.ndarray
    mel: np.ndarray
    utt_id: str = ""

    def __post_init__(self):
        self.phoneme_ids = np.asarray(self.phoneme_ids, dtype=np.int64)
        self.word_of_phoneme = np.asarray(self.word_of_phoneme, dtype=np.int64)
        self.durations = np.asarray(self.durations, dtype=np.int64)
        self.f0_norm = np.asarray(self.f0_norm, dtype=np.float32)
        self.voiced = np.asarray(self.voiced, dtype=bool)
        self.mel = np.asarray(self.mel, dtype=np.float32)
        self.word_vecs = np.asarray(self.word_vecs, dtype=np.float32)
        n = len(self.phoneme_ids)
        if len(self.durations) != n or len(self.word_of_phoneme) != n:
            raise DataError(f"{self.utt_id}: per-phoneme arrays differ in length")
        T = int(self.durations.sum())
        if not len(self.f0_norm) == len(self.voiced) == len(self.mel) == T:
            raise DataError(
                f"{self.utt_id}: sum of durations {T} vs pitch {len(self.f0_norm)} / mel {len(self.mel)} frames"
            )
        if self.word_of_phoneme.size and self.word_of_phoneme.max() >= len(self.word_vecs):
            raise DataError(f"{self.utt_id}: word index beyond {len(self.word_vecs)} word vectors")

    @property
    def n_frames(self) -> int:
        return int(self.durations.sum())

    def word_features(self) -> np.ndarray:
        return upsample_words_to_phonemes(self.word_vecs, self.word_of_phoneme)


@dataclass
class ProsodyOutput:
    dur_logits: np.ndarray
    pitch: np.ndarray
    cond: np.ndarray
    durations: np.ndarray

    @property
    def dur_probs(self) -> np.ndarray:
        return nn.softmax(self.dur_logits.astype(np.float64))

    @property
    def f0_norm(self) -> np.ndarray:
        return self.pitch[:, 0]

    @property
    def voiced_prob(self) -> np.ndarray:
        return nn.sigmoid(self.pitch[:, 1].astype(np.float64))

    @property
    def voiced(self) -> np.ndarray:
        # exactly 0.5 counts as unvoiced
        return self.voiced_prob > 0.5

    @property
    def n_frames(self) -> int:
        return len(self.cond)


@dataclass
class ProsodyLosses:
    dur: float
    f0: float
    vuv: float
    cond: float
    total: float


# --------------------------------------------------------------------------
# Model


class ProsodyModel(nn.Module):
    def __init__(self, phonemes: Sequence[str], speakers: Sequence[str],
                 cfg: ProsodyConfig = ProsodyConfig()):
        rng = np.random.default_rng(cfg.seed)
        self.cfg = cfg
        self.phonemes = [UNK] + [p for p in phonemes if p != UNK]
        self.speakers = list(speakers)
        self._phoneme_index = {p: i for i, p in enumerate(self.phonemes)}
        self.phoneme_emb = nn.Embedding(len(self.phonemes), cfg.phoneme_dim, rng)
        self.speaker_emb = nn.Embedding(max(1, len(self.speakers)), cfg.speaker_dim, rng)
        self.backbone_conv = nn.conv_stack(cfg.phoneme_dim + cfg.speaker_dim, cfg.conv_channels,
                                           cfg.kernel_size, cfg.n_conv, rng)
        self.backbone_lstm = nn.BiLSTM(cfg.conv_channels, cfg.hidden, rng)
        joined = 2 * cfg.hidden + cfg.word_dim
        self.dur_lstm = nn.BiLSTM(joined, cfg.hidden, rng)
        self.dur_proj = nn.Linear(2 * cfg.hidden, cfg.d_max + 1, rng)
        self.pitch_lstm = nn.BiLSTM(joined, cfg.hidden, rng)
        self.pitch_proj = nn.Linear(2 * cfg.hidden, 2, rng)
        self.cond_lstm = nn.BiLSTM(joined, cfg.hidden, rng)
        self.cond_proj = nn.Linear(2 * cfg.hidden, cfg.cond_dim, rng)
        self._cache = None

    def phoneme_ids(self, phonemes: Sequence[str]) -> np.ndarray:
        return np.array([self._phoneme_index.get(p, 0) for p in phonemes], dtype=np.int64)

    def speaker_id(self, speaker: str) -> int:
        try:
            return self.speakers.index(speaker)
        except ValueError:
            raise DataError(f"unknown speaker {speaker!r}; model knows {self.speakers}") from None

    def components(self) -> Dict[str, nn.Module]:
        return {name: m for name, m in vars(self).items() if isinstance(m, nn.Module)}

    def encode(self, phoneme_ids: np.ndarray, speaker: int, word_feats: np.ndarray):
        """Phoneme-level joined features and duration logits."""
        n = len(phoneme_ids)
        ph = self.phoneme_emb.forward(phoneme_ids)
        spk = self.speaker_emb.forward(np.array([speaker]))
        x = np.concatenate([ph, np.repeat(spk, n, axis=0)], axis=1)
        h = self.backbone_lstm.forward(self.backbone_conv.forward(x))
        joined = np.concatenate([h, word_feats.astype(h.dtype)], axis=1)
        logits = self.dur_proj.forward(self.dur_lstm.forward(joined))
        return joined, logits

    def forward(self, phoneme_ids, speaker: int, word_feats: np.ndarray,
                durations: np.ndarray) -> ProsodyOutput:
        """Run every head; frame-level heads follow ``durations``."""
        phoneme_ids = np.asarray(phoneme_ids, dtype=np.int64)
        if len(phoneme_ids) == 0:
            raise ValueError("empty phoneme sequence")
        if word_feats.shape != (len(phoneme_ids), self.cfg.word_dim):
            raise ValueError(f"word features {word_feats.shape}, expected ({len(phoneme_ids)}, {self.cfg.word_dim})")
        joined, logits = self.encode(phoneme_ids, speaker, word_feats)
        index = build_index(durations)
        frames = regulate_length(joined, index)
        pitch = self.pitch_proj.forward(self.pitch_lstm.forward(frames))
        cond = self.cond_proj.forward(self.cond_lstm.forward(frames))
        self._cache = (index, len(phoneme_ids))
        return ProsodyOutput(logits, pitch, cond, np.asarray(durations, dtype=np.int64))

    def backward(self, d_logits, d_pitch, d_cond):
        index, n = self._cache
        width = 2 * self.cfg.hidden
        d_frames = self.pitch_lstm.backward(self.pitch_proj.backward(d_pitch))
        d_frames = d_frames + self.cond_lstm.backward(self.cond_proj.backward(d_cond))
        d_joined = self.dur_lstm.backward(self.dur_proj.backward(d_logits))
        d_joined = d_joined + regulate_length_backward(d_frames, index, n)
        dx = self.backbone_conv.backward(self.backbone_lstm.backward(d_joined[:, :width]))
        self.phoneme_emb.backward(dx[:, :self.cfg.phoneme_dim])
        self.speaker_emb.backward(dx[:, self.cfg.phoneme_dim:].sum(axis=0, keepdims=True))


def forward_forced(model: ProsodyModel, batch: ProsodyBatch) -> ProsodyOutput:
    return model.forward(batch.phoneme_ids, batch.speaker, batch.word_features(), batch.durations)


def _losses_and_grads(out: ProsodyOutput, batch: ProsodyBatch, cfg: TrainConfig):
    targets = np.minimum(batch.durations, out.dur_logits.shape[1] - 1)
    l_dur, g_logits = nn.softmax_cross_entropy(out.dur_logits, targets)
    g_pitch = np.zeros_like(out.pitch)
    voiced = batch.voiced
    if voiced.any():
        l_f0, g_f0 = nn.mse(out.pitch[voiced, 0], batch.f0_norm[voiced].astype(out.pitch.dtype))
        g_pitch[voiced, 0] = g_f0
    else:
        l_f0 = 0.0
    l_vuv, g_vuv = nn.sigmoid_bce(out.pitch[:, 1], voiced)
    g_pitch[:, 1] = g_vuv
    l_cond, g_cond = nn.l1(out.cond, batch.mel.astype(out.cond.dtype))
    total = cfg.w_dur * l_dur + cfg.w_f0 * l_f0 + cfg.w_vuv * l_vuv + cfg.w_cond * l_cond
    g_pitch[:, 0] *= cfg.w_f0
    g_pitch[:, 1] *= cfg.w_vuv
    losses = ProsodyLosses(l_dur, l_f0, l_vuv, l_cond, total)
    return losses, (g_logits * cfg.w_dur, g_pitch, g_cond * cfg.w_cond)


def compute_losses(out: ProsodyOutput, batch: ProsodyBatch, cfg: TrainConfig = TrainConfig()) -> ProsodyLosses:
    """Duration CE, voiced-only f0 MSE, voicing BCE and conditioning L1."""
    return _losses_and_grads(out, batch, cfg)[0]


def loss_and_backward(model: ProsodyModel, batch: ProsodyBatch, cfg: TrainConfig = TrainConfig(),
                      scale: float = 1.0) -> ProsodyLosses:
    """Forward, losses and gradient accumulation (scaled by ``scale``) for one utterance."""
    out = forward_forced(model, batch)
    losses, (g_logits, g_pitch, g_cond) = _losses_and_grads(out, batch, cfg)
    if not np.isfinite(losses.total):
        raise NumericError(f"non-finite loss on {batch.utt_id}")
    dt = out.pitch.dtype
    model.backward((g_logits * scale).astype(dt), (g_pitch * scale).astype(dt),
                   (g_cond * scale).astype(dt))
    return losses


def infer(model: ProsodyModel, phoneme_ids, word_of_phoneme, word_vecs: np.ndarray,
          speaker: int) -> Tuple[ProsodyOutput, np.ndarray]:
    """Predict durations (argmax, ties to the shorter one) then decode frames."""
    phoneme_ids = np.asarray(phoneme_ids, dtype=np.int64)
    if len(phoneme_ids) == 0:
        raise ValueError("empty phoneme sequence")
    feats = upsample_words_to_phonemes(np.asarray(word_vecs, dtype=np.float32), word_of_phoneme)
    _, logits = model.encode(phoneme_ids, speaker, feats)
    durations = np.argmax(logits, axis=1).astype(np.int64)
    return model.forward(phoneme_ids, speaker, feats, durations), durations


# --------------------------------------------------------------------------
# Gradient pre-flight and training


def preflight_check(model: ProsodyModel, tolerance: float = 1e-4, max_entries: int = 6,
                    seed: int = 0) -> Dict[str, nn.GradCheckReport]:
    """Finite-difference spot check of every component on a short random input."""
    rng = np.random.default_rng(seed)
    reports = {}
    for name, module in model.components().items():
        if isinstance(module, nn.Embedding):
            x = rng.integers(0, module.weight.shape[0], size=4)
        elif isinstance(module, nn.Linear):
            x = rng.standard_normal((3, module.weight.shape[0]))
        elif isinstance(module, nn.BiLSTM):
            x = rng.standard_normal((3, module.fwd.w_x.shape[0])) * 0.5
        else:
            x = rng.standard_normal((4, module.layers[0].weight.shape[1])) * 0.5
        reports[name] = nn.gradient_check(module, x, tolerance, max_entries=max_entries, seed=seed)
    return reports


@dataclass
class StepLog:
    step: int
    lr: float
    dur: float
    f0: float
    vuv: float
    cond: float
    total: float


def train(model: ProsodyModel, data: Sequence[ProsodyBatch], cfg: TrainConfig = TrainConfig(),
          log_path=None) -> Tuple[ProsodyModel, List[StepLog]]:
    """Adam under the decaying schedule for ``max_steps``; the last state is returned."""
    if not data:
        raise DataError("no training utterances")
    if cfg.preflight:
        failed = {k: r for k, r in preflight_check(model).items() if not r.passed}
        if failed:
            raise NumericError("gradient pre-flight failed: " + "; ".join(f"{k}: {r}" for k, r in failed.items()))
    schedule = nn.LrSchedule(cfg.lr0, cfg.decay)
    opt = nn.Adam(model.params())
    rng = np.random.default_rng(cfg.seed)
    batch_size = min(cfg.batch_size, len(data))
    order, cursor = rng.permutation(len(data)), 0
    history: List[StepLog] = []
    fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        if fh:
            fh.write("step\tlr\tdur\tf0\tvuv\tcond\ttotal\n")
        for step in range(cfg.max_steps):
            picks = []
            while len(picks) < batch_size:
                if cursor == len(order):
                    order, cursor = rng.permutation(len(data)), 0
                picks.append(order[cursor])
                cursor += 1
            opt.zero_grad()
            acc = np.zeros(5)
            for i in picks:
                l = loss_and_backward(model, data[i], cfg, scale=1.0 / batch_size)
                acc += [l.dur, l.f0, l.vuv, l.cond, l.total]
            acc /= batch_size
            lr = nn.lr_at(schedule, step)
            opt.step(lr)
            entry = StepLog(step, lr, *acc.tolist())
            history.append(entry)
            if fh and step % cfg.log_every == 0:
                fh.write("\t".join([str(step), f"{lr:.6e}"] + [f"{v:.6f}" for v in acc]) + "\n")
    finally:
        if fh:
            fh.close()
    return model, history


# --------------------------------------------------------------------------
# Feature assembly


def fit_frames(array: np.ndarray, offset: int, n: int, fill) -> np.ndarray:
    """Rows ``offset .. offset+n`` of ``array``, padded with ``fill`` past its end."""
    part = array[offset:offset + n]
    if len(part) < n:
        pad_shape = (n - len(part),) + array.shape[1:]
        part = np.concatenate([part, np.full(pad_shape, fill, dtype=array.dtype)])
    return part


def build_batch(model: ProsodyModel, utt: Utterance, track: PitchTrack, mel: np.ndarray,
                stats: F0Stats, hop_s: float, word_vecs: Optional[np.ndarray] = None) -> ProsodyBatch:
    durations = durations_in_frames(utt, hop_s)
    T = int(durations.sum())
    offset = frames_for_duration(utt.segments[0].start_s, hop_s)
    f0n = fit_frames(normalize_f0(track, stats), offset, T, 0.0)
    voiced = fit_frames(track.voiced, offset, T, False)
    mel = fit_frames(np.asarray(mel, dtype=np.float32), offset, T, float(np.min(mel)) if len(mel) else 0.0)
    n_words = len(utt.words)
    if word_vecs is None:
        word_vecs = np.zeros((n_words, model.cfg.word_dim), dtype=np.float32)
    if word_vecs.shape != (n_words, model.cfg.word_dim):
        raise DataError(f"{utt.id}: word embeddings {word_vecs.shape}, expected ({n_words}, {model.cfg.word_dim})")
    owner = [NO_WORD if w is None else w for w in utt.word_of_phoneme()]
    return ProsodyBatch(model.phoneme_ids(utt.phonemes), owner, word_vecs, model.speaker_id(utt.speaker),
                        durations, f0n, voiced, mel, utt.id)


# --------------------------------------------------------------------------
# Files


def word_embedding_bytes(vecs: np.ndarray) -> bytes:
    vecs = np.asarray(vecs, dtype=np.float32)
    return b"WEB1" + binio.u32(vecs.shape[0]) + binio.u32(vecs.shape[1]) + binio.f32_rows(vecs)


def subtoken_embedding_bytes(raw: np.ndarray, subtoken_map: Sequence[Sequence[int]]) -> bytes:
    raw = np.asarray(raw, dtype=np.float32)
    parts = [b"WES1", binio.u32(raw.shape[0]), binio.u32(raw.shape[1]), binio.f32_rows(raw),
             binio.u32(len(subtoken_map))]
    for toks in subtoken_map:
        parts.append(binio.u32(len(toks)))
        parts += [binio.u32(t) for t in toks]
    return b"".join(parts)


def write_word_embeddings(path, vecs: np.ndarray) -> None:
    Path(path).write_bytes(word_embedding_bytes(vecs))


def parse_word_embeddings(reader: binio.Reader) -> np.ndarray:
    head = reader.data[:4]
    if head == b"WES1":
        reader.magic(b"WES1")
        S, D = reader.u32("row count"), reader.u32("dimension")
        raw = reader.array("<f4", S * D, "subtoken rows").reshape(S, D)
        smap = []
        for _ in range(reader.u32("word count")):
            k = reader.u32("subtoken count")
            smap.append([int(v) for v in reader.array("<u4", k, "subtoken indices")])
        reader.finish()
        return reduce_subtokens(raw, smap).astype(np.float32)
    reader.magic(b"WEB1")
    n, D = reader.u32("word count"), reader.u32("dimension")
    out = reader.array("<f4", n * D, "rows").reshape(n, D)
    reader.finish()
    return out.astype(np.float32)


def read_word_embeddings(path) -> np.ndarray:
    return parse_word_embeddings(binio.read_file(path))


def _sidecar(path) -> Path:
    return Path(str(path) + ".json")


def save_prosody(model: ProsodyModel, path, f0_stats: Dict[str, F0Stats], extra: Optional[dict] = None) -> None:
    nn.save_checkpoint(model.state_dict(), path)
    meta = {"kind": "prosody", "phonemes": model.phonemes[1:], "speakers": model.speakers,
            "config": asdict(model.cfg),
            "f0_stats": {k: [v.mean, v.std] for k, v in f0_stats.items()}}
    meta.update(extra or {})
    _sidecar(path).write_text(json.dumps(meta, ensure_ascii=False, indent=1), encoding="utf-8")


def load_prosody(path) -> Tuple[ProsodyModel, Dict[str, F0Stats], dict]:
    try:
        meta = json.loads(_sidecar(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DataError(f"missing file: {_sidecar(path)}") from exc
    model = ProsodyModel(meta["phonemes"], meta["speakers"], ProsodyConfig(**meta["config"]))
    try:
        model.load_state_dict(nn.load_checkpoint(path))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    stats = {k: F0Stats(*v) for k, v in meta["f0_stats"].items()}
    return model, stats, meta
