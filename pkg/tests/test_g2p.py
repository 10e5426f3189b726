from fractions import Fraction
from itertools import chain

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ttsfront import g2p
from ttsfront.errors import DataError, FormatError
from ttsfront.g2p import SPACE, VOID, G2PConfig, G2PModel, LabelSequence
from ttsfront.synthetic import make_lexicon, sentence_alignment


def test_encode_taxi():
    seq = g2p.encode_alignment(list("taxi"), [["t"], ["a"], ["k", "s"], ["i"]])
    assert seq.labels == ["t", "a", "k+s", "i"]
    assert g2p.decode_labels(seq) == ["t", "a", "k", "s", "i"]


def test_encode_void_letters():
    seq = g2p.encode_alignment(list("beau"), [["b"], ["o"], [], []])
    assert seq.labels == ["b", "o", VOID, VOID]
    assert g2p.decode_labels(seq) == ["b", "o"]


def test_punctuation_is_literal():
    assert g2p.encode_alignment(list("a,"), [["a"], []]).labels == ["a", ","]
    assert g2p.encode_alignment(list("a "), [["a"], []]).labels == ["a", SPACE]
    assert g2p.decode_labels(["a", ",", " "]) == ["a", ",", SPACE]


def test_encode_errors():
    with pytest.raises(DataError):
        g2p.encode_alignment(list("ab"), [["a"]])
    with pytest.raises(DataError):
        LabelSequence(list("ab"), ["a"])


_phone = st.sampled_from(["a", "b", "k", "s", "ʃ", "ə", "tʃ"])
_grapheme = st.sampled_from(list("abcxyz ,.!?"))


@given(st.lists(st.tuples(_grapheme, st.lists(_phone, max_size=3)), max_size=15))
def test_decode_inverts_encode(pairs):
    graphemes = [g for g, _ in pairs]
    spans = [[] if g2p.is_punctuation(g) else p for g, p in pairs]
    seq = g2p.encode_alignment(graphemes, spans)
    assert len(seq.labels) == len(graphemes)
    expected = []
    for g, p in zip(graphemes, spans):
        expected += p if p else ([g2p.literal_token(g)] if g2p.is_punctuation(g) else [])
    assert g2p.decode_labels(seq) == expected
    literal = {g2p.literal_token(g) for g in graphemes if g2p.is_punctuation(g)}
    n_phonemes = sum(len(g2p.label_phonemes(l)) for l in seq.labels if l not in literal)
    assert n_phonemes == sum(len(p) for p in spans)


def test_tsv_round_trip(tmp_path):
    data = make_lexicon(10, seed=4)
    g2p.write_g2p_tsv(tmp_path / "x.tsv", data)
    assert g2p.read_g2p_tsv(tmp_path / "x.tsv") == data
    (tmp_path / "bad.tsv").write_text("abc\ta b\n", encoding="utf-8")
    with pytest.raises(FormatError, match="bad.tsv:1"):
        g2p.read_g2p_tsv(tmp_path / "bad.tsv")


# -- scoring ------------------------------------------------------------------


def _brute(pred, gold):
    labels = list(chain.from_iterable(gold))
    hits = [a == b for p, g in zip(pred, gold) for a, b in zip(p, g)]
    perfect = [all(a == b for a, b in zip(p, g)) for p, g in zip(pred, gold)]
    return Fraction(sum(hits), len(labels)), Fraction(sum(perfect), len(gold))


def test_par_sar_hand_example():
    gold = [["a", "b", "c"], ["d", "e"]]
    report = g2p.score_predictions([["a", "b", "c"], ["d", "x"]], gold)
    assert (report.par, report.sar) == (0.8, 0.5)
    assert (report.par_exact, report.sar_exact) == (Fraction(4, 5), Fraction(1, 2))


def test_par_sar_extremes():
    gold = [["a", "b"], ["c"]]
    assert g2p.score_predictions(gold, gold).sar == 1.0
    wrong = g2p.score_predictions([["x", "x"], ["x"]], gold)
    assert (wrong.par, wrong.sar) == (0.0, 0.0)
    with pytest.raises(ValueError):
        g2p.score_predictions([], [])


@given(st.lists(st.lists(st.tuples(st.sampled_from("ab"), st.sampled_from("ab")), min_size=1, max_size=6),
                min_size=1, max_size=8))
def test_par_sar_equal_brute_force(sentences):
    pred = [[p for p, _ in s] for s in sentences]
    gold = [[g for _, g in s] for s in sentences]
    r = g2p.score_predictions(pred, gold)
    assert (r.par_exact, r.sar_exact) == _brute(pred, gold)


# -- early stopping -------------------------------------------------------------


def test_early_stopping_plateau_then_late_spike():
    trace = [0.2, 0.5] + [0.5] * 20 + [0.9]
    best, epochs = g2p.replay_early_stopping(trace, patience=20)
    assert (best, epochs) == (1, 22)


def test_early_stopping_monotone_runs_to_cap():
    assert g2p.replay_early_stopping([0.1 * i for i in range(30)], patience=20) == (29, 30)


@given(st.lists(st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]), min_size=1, max_size=60),
       st.integers(1, 25))
def test_early_stopping_keeps_first_argmax(trace, patience):
    best, epochs = g2p.replay_early_stopping(trace, patience)
    seen = trace[:epochs]
    assert best == int(np.argmax(seen))
    # stopping happened exactly when patience ran out, or the trace ended
    assert epochs == len(trace) or epochs - 1 - best == patience


def test_g2p_train_returns_best_checkpoint(monkeypatch):
    """Drive training with a fixed SAR trace and check which weights come back."""
    trace = [0.1, 0.6, 0.3, 0.6, 0.2, 0.5]
    snapshots = []

    def fake_eval(model, data):
        snapshots.append(model.state_dict())
        k = len(snapshots) - 1
        return g2p.G2PEvalReport(0, 1, int(trace[k] * 10), 10)

    monkeypatch.setattr(g2p, "evaluate_par_sar", fake_eval)
    data = make_lexicon(4, seed=0)
    cfg = G2PConfig(emb_dim=8, conv_channels=8, lstm_hidden=8, max_epochs=len(trace), patience=3, lr=1e-2)
    model, history = g2p.g2p_train(data, data, cfg)
    assert len(history) == 5  # epochs 3, 4, 5 bring no strict gain over epoch 2
    for name, value in model.state_dict().items():
        np.testing.assert_array_equal(value, snapshots[1][name])
    assert not all(np.array_equal(snapshots[1][k], snapshots[4][k]) for k in snapshots[1])


# -- model ------------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_model():
    data = make_lexicon(8, seed=2)
    return G2PModel.from_data(data, G2PConfig(emb_dim=16, conv_channels=16, lstm_hidden=16)), data


def test_fresh_model_is_near_uniform(small_model):
    model, data = small_model
    probs = g2p.g2p_forward(model, data[0].graphemes)
    k = len(model.labels)
    assert probs.shape == (len(data[0]), k)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)
    np.testing.assert_allclose(probs, 1.0 / k, atol=0.05 / k)


def test_single_grapheme_and_unknown_chars(small_model):
    model, _ = small_model
    assert g2p.g2p_forward(model, ["a"]).shape == (1, len(model.labels))
    assert g2p.g2p_forward(model, ["Ω", "a"]).shape[0] == 2
    with pytest.raises(ValueError):
        g2p.g2p_forward(model, [])


@settings(max_examples=20, deadline=None)
@given(st.text(alphabet="abcdehijklmnoprstux ,.!?", max_size=20))
def test_transcribe_is_decode_of_argmax(small_model, text):
    model, _ = small_model
    if not text:
        assert g2p.transcribe(model, text) == []
        return
    probs = g2p.g2p_forward(model, list(text))
    labels = [model.labels[i] for i in probs.argmax(axis=1)]
    assert g2p.transcribe(model, text) == g2p.decode_labels(labels)


def test_spaces_only_sentence():
    model = G2PModel.from_data([LabelSequence([" ", "a"], [SPACE, "a"])], G2PConfig(emb_dim=4, conv_channels=4, lstm_hidden=4))
    model.proj.weight.data[:] = 0
    model.proj.bias.data[:] = 0
    model.proj.bias.data[model.labels.index(SPACE)] = 5.0
    assert g2p.transcribe(model, "   ") == [SPACE] * 3


def test_overfit_single_pair():
    seq = sentence_alignment("taxi")
    cfg = G2PConfig(emb_dim=16, conv_channels=16, lstm_hidden=16, lr=1e-2, max_epochs=150, patience=150)
    model, history = g2p.g2p_train([seq], [seq], cfg)
    assert history[-1].sar == 1.0 or max(h.sar for h in history) == 1.0
    assert g2p.predict_labels(model, seq.graphemes) == ["t", "a", "k+s", "i"]
    assert g2p.transcribe(model, "taxi") == ["t", "a", "k", "s", "i"]


def test_save_load_round_trip(tmp_path, small_model):
    model, data = small_model
    g2p.save_g2p(model, tmp_path / "g.nnc")
    back = g2p.load_g2p(tmp_path / "g.nnc")
    assert back.labels == model.labels and back.chars == model.chars
    np.testing.assert_array_equal(g2p.g2p_forward(back, data[1].graphemes),
                                  g2p.g2p_forward(model, data[1].graphemes))


def test_g2p_train_stops_at_perfect_sar(monkeypatch):
    trace = iter([0.0, 0.5, 1.0, 0.9, 0.9])
    monkeypatch.setattr(g2p, "evaluate_par_sar", lambda m, d: g2p.G2PEvalReport(0, 1, int(next(trace) * 10), 10))
    data = make_lexicon(3, seed=1)
    cfg = G2PConfig(emb_dim=4, conv_channels=4, lstm_hidden=4, max_epochs=5, patience=5)
    _, history = g2p.g2p_train(data, data, cfg)
    assert [h.sar for h in history] == [0.0, 0.5, 1.0]
