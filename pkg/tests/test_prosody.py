import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ttsfront import prosody
from ttsfront.errors import DataError, FormatError
from ttsfront.prosody import ProsodyBatch, ProsodyConfig, ProsodyModel, TrainConfig

SMALL = ProsodyConfig(phoneme_dim=6, speaker_dim=3, conv_channels=5, kernel_size=3, hidden=4,
                      word_dim=5, d_max=10, cond_dim=7)


def naive_regulate(vecs, durations):
    rows = []
    for v, d in zip(vecs, durations):
        rows.extend([v] * d)
    return np.array(rows).reshape(-1, vecs.shape[1])


# -- upsampling --------------------------------------------------------------


def test_reduce_subtokens_first_token_rule():
    raw = np.arange(14.0).reshape(7, 2)
    np.testing.assert_array_equal(prosody.reduce_subtokens(raw, [[4, 5, 6]]), raw[[4]])
    np.testing.assert_array_equal(prosody.reduce_subtokens(raw[:3], [[0], [1, 2]]), raw[[0, 1]])
    np.testing.assert_array_equal(prosody.reduce_subtokens(raw[:1], [[0]]), raw[:1])
    with pytest.raises(DataError):
        prosody.reduce_subtokens(raw, [[]])


def test_upsample_words():
    w = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(prosody.upsample_words_to_phonemes(w, [0, 0, 1]), w[[0, 0, 1]])
    out = prosody.upsample_words_to_phonemes(w, [0, None, -1])
    np.testing.assert_array_equal(out, [[1.0, 2.0], [0.0, 0.0], [0.0, 0.0]])
    np.testing.assert_array_equal(prosody.upsample_words_to_phonemes(w[:1], [0]), w[:1])


@pytest.mark.parametrize("durations, expected", [
    ([2, 1, 3], [0, 0, 1, 2, 2, 2]),
    ([1, 1], [0, 1]),
    ([0, 2], [1, 1]),
    ([0, 0], []),
])
def test_build_index_examples(durations, expected):
    assert prosody.build_index(durations).tolist() == expected


def test_regulate_length_examples():
    v = np.array([[1.0], [2.0], [3.0]])
    out = prosody.regulate_length(v, prosody.build_index([2, 1, 3]))
    assert out[:, 0].tolist() == [1, 1, 2, 3, 3, 3]
    assert prosody.regulate_length(v, prosody.build_index([0, 0, 0])).shape == (0, 1)
    with pytest.raises(IndexError):
        prosody.regulate_length(v, np.array([3]))


def random_regulation_case(rng):
    n = int(rng.integers(1, 9))
    durations = rng.integers(0, 6, size=n)
    vecs = rng.standard_normal((n, int(rng.integers(1, 5)))).astype(np.float32)
    return vecs, durations


def test_regulate_matches_naive_on_1000_cases():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        vecs, durations = random_regulation_case(rng)
        index = prosody.build_index(durations)
        got = prosody.regulate_length(vecs, index)
        assert got.tobytes() == naive_regulate(vecs, durations).tobytes()
        assert len(index) == durations.sum()
        assert np.all(np.diff(index) >= 0)
        assert set(index.tolist()) == set(np.nonzero(durations)[0].tolist())


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=1, max_size=8))
def test_regulate_backward_is_adjoint(durations):
    rng = np.random.default_rng(len(durations))
    v = rng.standard_normal((len(durations), 3))
    index = prosody.build_index(durations)
    g = rng.standard_normal((len(index), 3))
    # <regulate(v), g> == <v, regulate_backward(g)>
    lhs = float(np.sum(prosody.regulate_length(v, index) * g))
    rhs = float(np.sum(v * prosody.regulate_length_backward(g, index, len(durations))))
    assert lhs == pytest.approx(rhs, abs=1e-9)


# -- model -------------------------------------------------------------------


def make_batch(model, rng, n=5, n_words=2, voiced=None, d_hi=4):
    durations = rng.integers(1, d_hi, size=n)
    T = int(durations.sum())
    v = rng.random(T) < 0.5 if voiced is None else np.full(T, voiced)
    owner = rng.integers(-1, n_words, size=n)
    return ProsodyBatch(rng.integers(1, len(model.phonemes), size=n), owner,
                        rng.standard_normal((n_words, model.cfg.word_dim)), 0, durations,
                        np.where(v, rng.standard_normal(T), 0.0), v,
                        rng.standard_normal((T, model.cfg.cond_dim)))


@pytest.fixture
def model():
    return ProsodyModel(["a", "b", "c", "ʃ"], ["neb", "x"], SMALL)


def test_output_shapes(model):
    batch = make_batch(model, np.random.default_rng(0))
    out = prosody.forward_forced(model, batch)
    n, T = len(batch.phoneme_ids), batch.n_frames
    assert out.dur_logits.shape == (n, SMALL.d_max + 1)
    assert out.pitch.shape == (T, 2)
    assert out.cond.shape == (T, SMALL.cond_dim)
    np.testing.assert_allclose(out.dur_probs.sum(axis=1), 1.0, atol=1e-6)
    assert np.all((out.voiced_prob >= 0) & (out.voiced_prob <= 1))


def test_uniform_durations_give_log_101():
    m = ProsodyModel(["a"], ["s"], ProsodyConfig(phoneme_dim=4, speaker_dim=2, conv_channels=4,
                                                 hidden=3, word_dim=2))
    m.dur_proj.weight.data[:] = 0
    batch = make_batch(m, np.random.default_rng(1))
    losses = prosody.compute_losses(prosody.forward_forced(m, batch), batch)
    assert losses.dur == pytest.approx(math.log(101), rel=1e-6)


def test_all_unvoiced_f0_loss_is_zero(model):
    batch = make_batch(model, np.random.default_rng(2), voiced=False)
    assert prosody.compute_losses(prosody.forward_forced(model, batch), batch).f0 == 0.0


def test_total_is_sum_and_weights_apply(model):
    batch = make_batch(model, np.random.default_rng(3))
    out = prosody.forward_forced(model, batch)
    l = prosody.compute_losses(out, batch)
    assert l.total == pytest.approx(l.dur + l.f0 + l.vuv + l.cond)
    w = prosody.compute_losses(out, batch, TrainConfig(w_cond=0.0, w_dur=2.0))
    assert w.total == pytest.approx(2 * l.dur + l.f0 + l.vuv)


def test_duration_target_is_capped(model):
    rng = np.random.default_rng(4)
    batch = make_batch(model, rng, n=2, d_hi=2)
    long = ProsodyBatch(batch.phoneme_ids, batch.word_of_phoneme, batch.word_vecs, 0,
                        [1, 25], *[np.resize(a, (26,) + a.shape[1:]) for a in (batch.f0_norm, batch.voiced, batch.mel)])
    out = prosody.forward_forced(model, long)
    logp = np.log(out.dur_probs)
    expected = -(logp[0, 1] + logp[1, SMALL.d_max]) / 2
    assert prosody.compute_losses(out, long).dur == pytest.approx(expected, rel=1e-5)


def test_batch_invariants_enforced(model):
    with pytest.raises(DataError):
        ProsodyBatch([1, 2], [0, 0], np.zeros((1, 5)), 0, [1, 1], np.zeros(3), np.zeros(3), np.zeros((3, 7)))


def test_whole_model_gradient_matches_finite_differences(model):
    """Total loss against a few entries of every parameter tensor, float64."""
    m = model.astype(np.float64)
    rng = np.random.default_rng(5)
    batch = make_batch(m, rng)
    m.zero_grad()
    prosody.loss_and_backward(m, batch)
    eps = 1e-5
    for name, p in m.named_params():
        flat = p.data.reshape(-1)
        picks = rng.choice(flat.size, size=min(3, flat.size), replace=False)
        for i in picks:
            if name.startswith("phoneme_emb") and p.grad.reshape(-1)[i] == 0:
                continue  # unused embedding rows
            orig = flat[i]
            flat[i] = orig + eps
            plus = prosody.compute_losses(prosody.forward_forced(m, batch), batch).total
            flat[i] = orig - eps
            minus = prosody.compute_losses(prosody.forward_forced(m, batch), batch).total
            flat[i] = orig
            num = (plus - minus) / (2 * eps)
            ana = p.grad.reshape(-1)[i]
            assert abs(ana - num) <= 1e-4 * max(abs(ana), abs(num), 1e-6), (name, ana, num)


def test_every_head_reaches_the_backbone(model):
    rng = np.random.default_rng(6)
    batch = make_batch(model, rng)
    for weights in (dict(w_f0=0, w_vuv=0, w_cond=0), dict(w_dur=0, w_cond=0), dict(w_dur=0, w_f0=0, w_vuv=0)):
        model.zero_grad()
        prosody.loss_and_backward(model, batch, TrainConfig(**weights))
        assert np.abs(model.backbone_conv.layers[0].weight.grad).max() > 0, weights


def test_preflight_passes(model):
    reports = prosody.preflight_check(model)
    assert set(reports) == set(model.components())
    assert all(r.passed for r in reports.values()), {k: str(r) for k, r in reports.items()}


def test_infer_frame_count_matches_durations(model):
    rng = np.random.default_rng(7)
    out, durations = prosody.infer(model, [1, 2, 3], [0, -1, 0], rng.standard_normal((1, 5)), 1)
    assert out.n_frames == durations.sum() == len(out.pitch)
    with pytest.raises(ValueError):
        prosody.infer(model, [], [], np.zeros((0, 5)), 0)


def test_infer_tie_breaks_to_shorter(model):
    model.dur_proj.weight.data[:] = 0
    model.dur_proj.bias.data[:] = 0
    model.dur_proj.bias.data[[2, 5]] = 3.0
    _, durations = prosody.infer(model, [1, 2], [0, 0], np.zeros((1, 5)), 0)
    assert durations.tolist() == [2, 2]


def test_voiced_probability_half_is_unvoiced():
    out = prosody.ProsodyOutput(np.zeros((1, 3)), np.array([[0.3, 0.0], [0.3, 1e-3]]), np.zeros((2, 1)), np.array([2]))
    assert out.voiced.tolist() == [False, True]


def test_unknown_speaker(model):
    with pytest.raises(DataError, match="unknown speaker"):
        model.speaker_id("zz")
    assert model.phoneme_ids(["a", "never-seen"]).tolist() == [model.phonemes.index("a"), 0]


def test_training_is_deterministic_and_logs(model, tmp_path):
    rng = np.random.default_rng(8)
    data = [make_batch(model, rng) for _ in range(3)]
    cfg = TrainConfig(max_steps=4, batch_size=2, preflight=False)
    a = ProsodyModel(model.phonemes[1:], model.speakers, SMALL)
    b = ProsodyModel(model.phonemes[1:], model.speakers, SMALL)
    _, ha = prosody.train(a, data, cfg, log_path=tmp_path / "log.tsv")
    _, hb = prosody.train(b, data, cfg)
    assert [s.total for s in ha] == [s.total for s in hb]
    assert ha[0].lr == 2.0e-4
    lines = (tmp_path / "log.tsv").read_text().splitlines()
    assert lines[0].split("\t") == ["step", "lr", "dur", "f0", "vuv", "cond", "total"]
    assert len(lines) == 5
    for k, v in a.state_dict().items():
        np.testing.assert_array_equal(v, b.state_dict()[k])


def test_save_load(model, tmp_path):
    from ttsfront.pitch import F0Stats
    stats = {"neb": F0Stats(4.9, 0.2)}
    prosody.save_prosody(model, tmp_path / "p.nnc", stats, {"hop_s": 0.01})
    back, back_stats, meta = prosody.load_prosody(tmp_path / "p.nnc")
    assert back_stats == stats and meta["hop_s"] == 0.01
    assert back.phonemes == model.phonemes and back.speakers == model.speakers
    for k, v in model.state_dict().items():
        assert back.state_dict()[k].tobytes() == v.tobytes()


# -- word embedding files -------------------------------------------------------


def test_web1_round_trip(tmp_path):
    vecs = np.random.default_rng(9).standard_normal((4, 6)).astype(np.float32)
    prosody.write_word_embeddings(tmp_path / "a.web", vecs)
    blob = (tmp_path / "a.web").read_bytes()
    assert blob[:4] == b"WEB1"
    back = prosody.read_word_embeddings(tmp_path / "a.web")
    assert back.tobytes() == vecs.tobytes()
    (tmp_path / "b.web").write_bytes(blob[:-2])
    with pytest.raises(FormatError, match="truncated"):
        prosody.read_word_embeddings(tmp_path / "b.web")
    (tmp_path / "c.web").write_bytes(b"WEBX" + blob[4:])
    with pytest.raises(FormatError, match="magic"):
        prosody.read_word_embeddings(tmp_path / "c.web")


def test_wes1_reduces_to_first_subtokens(tmp_path):
    raw = np.arange(12, dtype=np.float32).reshape(6, 2)
    (tmp_path / "s.wes").write_bytes(prosody.subtoken_embedding_bytes(raw, [[0], [1, 2, 3], [4, 5]]))
    np.testing.assert_array_equal(prosody.read_word_embeddings(tmp_path / "s.wes"), raw[[0, 1, 4]])
