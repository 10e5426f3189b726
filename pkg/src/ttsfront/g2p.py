"""Grapheme-to-phoneme conversion as 1:1 sequence labelling.

Every grapheme receives exactly one label: a phoneme, several phonemes joined
with ``+``, the void label ``-`` for silent letters, or a literal punctuation
token (spaces are written ``␣``). A conv + BiLSTM tagger predicts the labels
for a whole sentence at once.

Training files are TSV lines ``graphemes<TAB>space separated labels``.
"""

from __future__ import annotations

import copy
import json
import logging
import unicodedata
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import nn
from .errors import DataError, FormatError, NumericError

log = logging.getLogger(__name__)

VOID = "-"
JOIN = "+"
SPACE = "␣"
UNK = "<unk>"


def is_punctuation(ch: str) -> bool:
    return ch.isspace() or unicodedata.category(ch).startswith("P")


def literal_token(ch: str) -> str:
    return SPACE if ch.isspace() else ch


@dataclass
class LabelSequence:
    graphemes: List[str]
    labels: List[str]

    def __post_init__(self):
        self.graphemes = list(self.graphemes)
        self.labels = list(self.labels)
        if len(self.graphemes) != len(self.labels):
            raise DataError(
                f"{len(self.graphemes)} graphemes but {len(self.labels)} labels"
            )

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def text(self) -> str:
        return "".join(self.graphemes)


def label_phonemes(label: str) -> List[str]:
    """Phonemes carried by one label (empty for the void label)."""
    if label == VOID:
        return []
    return label.split(JOIN) if JOIN in label and label != JOIN else [label]


def encode_alignment(graphemes: Sequence[str], phoneme_spans: Sequence[Sequence[str]]) -> LabelSequence:
    if len(graphemes) != len(phoneme_spans):
        raise DataError(f"{len(graphemes)} graphemes but {len(phoneme_spans)} phoneme lists")
    labels = []
    for g, phones in zip(graphemes, phoneme_spans):
        phones = list(phones)
        if any(JOIN in p or p == VOID for p in phones):
            raise DataError(f"phoneme symbols may not contain {JOIN!r} or equal {VOID!r}: {phones}")
        if not phones:
            labels.append(literal_token(g) if is_punctuation(g) else VOID)
        else:
            labels.append(JOIN.join(phones))
    return LabelSequence(list(graphemes), labels)


def decode_labels(seq) -> List[str]:
    """Flatten labels to phonemes and punctuation, dropping the void label."""
    labels = seq.labels if isinstance(seq, LabelSequence) else seq
    out: List[str] = []
    for label in labels:
        if label.isspace():
            out.append(SPACE)
        else:
            out.extend(label_phonemes(label))
    return out


# --------------------------------------------------------------------------
# Data files


def read_g2p_tsv(path) -> List[LabelSequence]:
    out = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except FileNotFoundError as exc:
        raise DataError(f"missing file: {path}") from exc
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        if "\t" not in line:
            raise FormatError(f"{path}:{n}: expected graphemes<TAB>labels")
        text, labels = line.split("\t", 1)
        try:
            out.append(LabelSequence(list(text), labels.split(" ")))
        except DataError as exc:
            raise FormatError(f"{path}:{n}: {exc}") from None
    return out


def write_g2p_tsv(path, data: Sequence[LabelSequence]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for seq in data:
            fh.write(seq.text + "\t" + " ".join(seq.labels) + "\n")


# --------------------------------------------------------------------------
# Model


@dataclass
class G2PConfig:
    emb_dim: int = 64
    conv_channels: int = 128
    kernel_size: int = 5
    n_conv: int = 3
    lstm_hidden: int = 128
    lstm_layers: int = 1
    lr: float = 1e-3
    batch_size: int = 16
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0


class G2PModel(nn.Module):
    def __init__(self, chars: Sequence[str], labels: Sequence[str], cfg: G2PConfig = G2PConfig()):
        rng = np.random.default_rng(cfg.seed)
        self.cfg = cfg
        self.chars = [UNK] + [c for c in chars if c != UNK]
        self.labels = list(labels)
        self._char_index = {c: i for i, c in enumerate(self.chars)}
        self._label_index = {lab: i for i, lab in enumerate(self.labels)}
        self.embedding = nn.Embedding(len(self.chars), cfg.emb_dim, rng)
        self.convs = nn.conv_stack(cfg.emb_dim, cfg.conv_channels, cfg.kernel_size, cfg.n_conv, rng)
        width = cfg.conv_channels
        self.lstms = []
        for _ in range(cfg.lstm_layers):
            self.lstms.append(nn.BiLSTM(width, cfg.lstm_hidden, rng))
            width = 2 * cfg.lstm_hidden
        # near-zero projection: a fresh model predicts close to uniform
        self.proj = nn.Linear(width, len(self.labels), rng, scale=1e-3)

    @classmethod
    def from_data(cls, data: Sequence[LabelSequence], cfg: G2PConfig = G2PConfig()) -> "G2PModel":
        chars = sorted({g for seq in data for g in seq.graphemes})
        labels = sorted({lab for seq in data for lab in seq.labels})
        return cls(chars, labels, cfg)

    def char_ids(self, graphemes: Sequence[str]) -> np.ndarray:
        return np.array([self._char_index.get(g, 0) for g in graphemes], dtype=np.int64)

    def label_ids(self, labels: Sequence[str]) -> np.ndarray:
        try:
            return np.array([self._label_index[lab] for lab in labels], dtype=np.int64)
        except KeyError as exc:
            raise DataError(f"label {exc.args[0]!r} not in the model's alphabet") from None

    def forward(self, ids):
        x = self.embedding.forward(ids)
        x = self.convs.forward(x)
        for lstm in self.lstms:
            x = lstm.forward(x)
        return self.proj.forward(x)

    def backward(self, dlogits):
        d = self.proj.backward(dlogits)
        for lstm in reversed(self.lstms):
            d = lstm.backward(d)
        d = self.convs.backward(d)
        self.embedding.backward(d)
        return None


def g2p_forward(model: G2PModel, graphemes: Sequence[str]) -> np.ndarray:
    """Per-grapheme label distributions, shape ``(n, |alphabet|)``."""
    if len(graphemes) == 0:
        raise ValueError("empty grapheme sequence")
    return nn.softmax(model.forward(model.char_ids(graphemes)).astype(np.float64))


def predict_labels(model: G2PModel, graphemes: Sequence[str]) -> List[str]:
    if len(graphemes) == 0:
        return []
    # argmax returns the lowest index among ties
    return [model.labels[i] for i in np.argmax(g2p_forward(model, graphemes), axis=1)]


def transcribe(model: G2PModel, sentence: str) -> List[str]:
    return decode_labels(predict_labels(model, list(sentence)))


# --------------------------------------------------------------------------
# Evaluation and training


@dataclass(frozen=True)
class G2PEvalReport:
    correct_labels: int
    n_labels: int
    perfect_sentences: int
    n_sentences: int

    @property
    def par(self) -> float:
        return self.correct_labels / self.n_labels if self.n_labels else 0.0

    @property
    def sar(self) -> float:
        return self.perfect_sentences / self.n_sentences

    @property
    def par_exact(self) -> Fraction:
        return Fraction(self.correct_labels, self.n_labels)

    @property
    def sar_exact(self) -> Fraction:
        return Fraction(self.perfect_sentences, self.n_sentences)


def score_predictions(predicted: Sequence[Sequence[str]], gold: Sequence[Sequence[str]]) -> G2PEvalReport:
    if not gold:
        raise ValueError("empty dataset")
    correct = total = perfect = 0
    for p, g in zip(predicted, gold, strict=True):
        if len(p) != len(g):
            raise ValueError("prediction and gold lengths differ")
        hits = sum(a == b for a, b in zip(p, g))
        correct += hits
        total += len(g)
        perfect += hits == len(g)
    return G2PEvalReport(correct, total, perfect, len(gold))


def evaluate_par_sar(model: G2PModel, dataset: Sequence[LabelSequence]) -> G2PEvalReport:
    if not dataset:
        raise ValueError("empty dataset")
    preds = [predict_labels(model, seq.graphemes) for seq in dataset]
    return score_predictions(preds, [seq.labels for seq in dataset])


class EarlyStopping:
    """Tracks the best score; ``stop`` once ``patience`` epochs bring no strict gain."""

    def __init__(self, patience: int = 20):
        self.patience = patience
        self.best_score = -np.inf
        self.best_epoch = -1
        self.bad_epochs = 0
        self.epoch = -1

    def update(self, score: float) -> bool:
        """Record one epoch's score; returns True when it is a new best."""
        self.epoch += 1
        if score > self.best_score:
            self.best_score = score
            self.best_epoch = self.epoch
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def stop(self) -> bool:
        return self.bad_epochs >= self.patience


def replay_early_stopping(trace: Sequence[float], patience: int = 20) -> Tuple[int, int]:
    """(0-based index of the checkpoint kept, number of epochs run) for a score trace."""
    es = EarlyStopping(patience)
    for score in trace:
        es.update(score)
        if es.stop:
            break
    return es.best_epoch, es.epoch + 1


@dataclass
class EpochLog:
    epoch: int
    loss: float
    par: float
    sar: float


def _batch_step(model: G2PModel, batch: Sequence[LabelSequence]) -> float:
    total = 0.0
    for seq in batch:
        logits = model.forward(model.char_ids(seq.graphemes))
        loss, dlogits = nn.softmax_cross_entropy(logits, model.label_ids(seq.labels))
        if not np.isfinite(loss):
            raise NumericError(f"non-finite g2p loss on {seq.text!r}")
        model.backward((dlogits / len(batch)).astype(logits.dtype))
        total += loss
    return total / len(batch)


def g2p_train(train: Sequence[LabelSequence], valid: Sequence[LabelSequence],
              cfg: G2PConfig = G2PConfig(), model: Optional[G2PModel] = None
              ) -> Tuple[G2PModel, List[EpochLog]]:
    """Train with per-epoch validation SAR; returns the best-SAR checkpoint.

    Ties keep the earlier epoch. Training ends after ``patience`` epochs
    without a strict SAR gain, at ``max_epochs``, or as soon as SAR is perfect
    (nothing later could replace that checkpoint).
    """
    if not train or not valid:
        raise DataError("train and valid sets must be non-empty")
    model = model or G2PModel.from_data(train, cfg)
    # validation labels outside the alphabet simply never match
    params = model.params()
    opt = nn.Adam(params)
    rng = np.random.default_rng(cfg.seed)
    stopper = EarlyStopping(cfg.patience)
    best_state = model.state_dict()
    history: List[EpochLog] = []
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(train))
        losses = []
        for k in range(0, len(order), cfg.batch_size):
            batch = [train[i] for i in order[k:k + cfg.batch_size]]
            opt.zero_grad()
            losses.append(_batch_step(model, batch))
            opt.step(cfg.lr)
        report = evaluate_par_sar(model, valid)
        history.append(EpochLog(epoch + 1, float(np.mean(losses)), report.par, report.sar))
        log.info("g2p epoch %d loss %.4f par %.4f sar %.4f", epoch + 1, history[-1].loss,
                 report.par, report.sar)
        if stopper.update(report.sar):
            best_state = model.state_dict()
        if stopper.stop or report.sar == 1.0:
            break
    model.load_state_dict(best_state)
    return model, history


# --------------------------------------------------------------------------
# Checkpoints: NNC1 tensors plus a JSON sidecar with vocabularies and dims


def _sidecar(path) -> Path:
    return Path(str(path) + ".json")


def save_g2p(model: G2PModel, path) -> None:
    nn.save_checkpoint(model.state_dict(), path)
    meta = {"kind": "g2p", "chars": model.chars[1:], "labels": model.labels,
            "config": asdict(model.cfg)}
    _sidecar(path).write_text(json.dumps(meta, ensure_ascii=False, indent=1), encoding="utf-8")


def load_g2p(path) -> G2PModel:
    try:
        meta = json.loads(_sidecar(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DataError(f"missing file: {_sidecar(path)}") from exc
    model = G2PModel(meta["chars"], meta["labels"], G2PConfig(**meta["config"]))
    try:
        model.load_state_dict(nn.load_checkpoint(path))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from None
    return model
