from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ttsfront import corpus
from ttsfront.corpus import Interval, IntervalTier, PhonemeSegment, Utterance
from ttsfront.errors import DataError, TextGridError

DATA = Path(__file__).parent / "data"


def _utt(bounds, utt_id="u"):
    segs = tuple(PhonemeSegment(f"p{i}", a, b) for i, (a, b) in enumerate(bounds))
    return Utterance(utt_id, "spk", segs, (), 24000, int(bounds[-1][1] * 24000) + 1)


def _largest_remainder_oracle(ms_lengths, hop_ms):
    """Exact rational version of the rounding rule on millisecond grids."""
    raw = [Fraction(n, hop_ms) for n in ms_lengths]
    total = int(Fraction(sum(ms_lengths), hop_ms) + Fraction(1, 2))
    floors = [r.numerator // r.denominator for r in raw]
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - floors[i]), i))
    for i in order[:total - sum(floors)]:
        floors[i] += 1
    return floors


# -- TextGrid -------------------------------------------------------------


def test_long_form_fixture():
    tiers = corpus.read_textgrid(DATA / "bo_long.TextGrid")
    assert len(tiers) == 1
    assert tiers[0].name == "phones"
    assert tiers[0].intervals == [Interval(0.0, 0.1, "b"), Interval(0.1, 0.3, "o")]


def test_short_form_matches_long_form():
    short = corpus.read_textgrid(DATA / "bo_short.TextGrid")
    assert [t.name for t in short] == ["words", "phones"]
    assert short[1].intervals == corpus.read_textgrid(DATA / "bo_long.TextGrid")[0].intervals


def test_empty_tier():
    (tier,) = corpus.read_textgrid(DATA / "empty_tier.TextGrid")
    assert tier.intervals == []


def test_bad_header_is_line_1():
    with pytest.raises(TextGridError) as err:
        corpus.parse_textgrid("hello\nworld\n")
    assert err.value.line == 1


def test_point_tier_rejected_with_line():
    with pytest.raises(TextGridError, match="point tier") as err:
        corpus.read_textgrid(DATA / "point_tier.TextGrid")
    assert err.value.line == 10
    assert "point_tier.TextGrid: line 10" in str(err.value)


def test_overlapping_intervals_rejected_at_offending_line():
    with pytest.raises(TextGridError, match="overlaps") as err:
        corpus.read_textgrid(DATA / "overlap.TextGrid")
    assert err.value.line == 20


def test_quoted_quotes_and_unicode_labels():
    tier = IntervalTier("phones", 0.0, 1.0, [Interval(0.0, 0.5, 'say "hi"'), Interval(0.5, 1.0, "ʃ")])
    (back,) = corpus.parse_textgrid(corpus.serialize_textgrid([tier]))
    assert back.intervals == tier.intervals


_labels = st.text(alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\r\n\x00"), max_size=6)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(1e-3, 2.0), _labels), max_size=8), st.text("abc ", max_size=5))
def test_serialize_parse_round_trip(parts, name):
    t, intervals = 0.0, []
    for length, label in parts:
        intervals.append(Interval(t, t + length, label))
        t += length
    tier = IntervalTier(name, 0.0, t, intervals)
    (back,) = corpus.parse_textgrid(corpus.serialize_textgrid([tier]))
    assert (back.name, back.intervals) == (name, intervals)
    again = corpus.parse_textgrid(corpus.serialize_textgrid([back]))
    assert again[0].intervals == back.intervals


# -- utterances -------------------------------------------------------------


def test_single_word_span():
    utt = corpus.build_utterance([(0.0, 0.1, "b"), (0.1, 0.3, "o")], [(0.0, 0.3, "bo")], "s", 24000, 7200)
    assert [(w.word, w.first_phoneme_idx, w.last_phoneme_idx) for w in utt.words] == [("bo", 0, 1)]


def test_silence_belongs_to_no_word():
    phones = [(0.0, 0.1, "sil"), (0.1, 0.2, "b"), (0.2, 0.3, "o"), (0.3, 0.4, "")]
    utt = corpus.build_utterance(phones, [(0.0, 0.1, ""), (0.1, 0.3, "bo")], "s", 24000, 9600)
    assert utt.phonemes == ["sil", "b", "o", "sil"]
    assert utt.word_of_phoneme() == [None, 0, 0, None]


def test_two_words_disjoint_spans():
    phones = [(0.0, 0.1, "b"), (0.1, 0.2, "o"), (0.2, 0.3, "t"), (0.3, 0.4, "a")]
    utt = corpus.build_utterance(phones, [(0.0, 0.2, "bo"), (0.2, 0.4, "ta")], "s", 24000, 9600)
    assert [(w.first_phoneme_idx, w.last_phoneme_idx) for w in utt.words] == [(0, 1), (2, 3)]


def test_overlapping_words_error():
    with pytest.raises(DataError, match="overlapping"):
        corpus.build_utterance([(0.0, 0.2, "a")], [(0.0, 0.2, "x"), (0.05, 0.2, "y")], "s", 24000, 4800)


def test_alignment_past_audio_end():
    with pytest.raises(DataError):
        corpus.build_utterance([(0.0, 0.5, "a")], [], "s", 24000, 2400)


def test_duplicate_ids_rejected():
    u = _utt([(0.0, 0.1)])
    with pytest.raises(DataError):
        corpus.AlignedCorpus((u, u), ("spk",))


# -- durations -------------------------------------------------------------


@pytest.mark.parametrize("bounds, expected", [
    ([(0.0, 0.025), (0.025, 0.040)], [3, 1]),
    ([(0.0, 0.100)], [10]),
    ([(0.0, 0.012), (0.012, 0.024), (0.024, 0.040)], [1, 1, 2]),
])
def test_duration_hand_cases(bounds, expected):
    assert corpus.durations_in_frames(_utt(bounds), 0.010).tolist() == expected


def test_durations_require_segments():
    with pytest.raises(DataError):
        corpus.durations_in_frames(Utterance("e", "s", (), (), 24000, 0), 0.01)


def random_ms_utterance(rng):
    n = int(rng.integers(1, 30))
    ms = rng.integers(1, 400, size=n).tolist()
    edges = np.concatenate([[0], np.cumsum(ms)]) / 1000.0
    return ms, _utt(list(zip(edges[:-1], edges[1:])))


def test_durations_match_exact_oracle_on_1000_utterances():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        ms, utt = random_ms_utterance(rng)
        got = corpus.durations_in_frames(utt, 0.010)
        assert got.tolist() == _largest_remainder_oracle(ms, 10)
        assert got.sum() == int(Fraction(sum(ms), 10) + Fraction(1, 2))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(1e-4, 0.5), min_size=1, max_size=20), st.sampled_from([0.005, 0.01, 0.0125]))
def test_durations_sum_and_stay_within_one_frame(lengths, hop):
    edges = np.concatenate([[0.0], np.cumsum(lengths)])
    utt = _utt(list(zip(edges[:-1], edges[1:])))
    got = corpus.durations_in_frames(utt, hop)
    assert got.sum() == int(np.floor(round((edges[-1] - edges[0]) / hop, 9) + 0.5))
    raw = np.diff(edges) / hop
    assert np.all(got >= 0)
    assert np.all(np.abs(got - raw) < 1 + 1e-6)


# -- manifests and splits -----------------------------------------------------


def _write_item(root, utt_id, speaker="s"):
    tier_p = IntervalTier("phones", 0.0, 0.2, [Interval(0.0, 0.1, "b"), Interval(0.1, 0.2, "o")])
    tier_w = IntervalTier("words", 0.0, 0.2, [Interval(0.0, 0.2, "bo")])
    (root / f"{utt_id}.TextGrid").write_text(corpus.serialize_textgrid([tier_w, tier_p]), encoding="utf-8")
    corpus.write_wav(root / f"{utt_id}.wav", np.zeros(4800), 24000)
    return f"{utt_id}\t{speaker}\t{utt_id}.TextGrid\t{utt_id}.wav"


def test_load_corpus(tmp_path):
    lines = [_write_item(tmp_path, f"u{i}", "ab"[i % 2]) for i in range(4)]
    (tmp_path / "m.tsv").write_text("\n".join(lines) + "\n")
    c = corpus.load_corpus(tmp_path / "m.tsv", expected_rate=24000)
    assert [u.id for u in c.utterances] == ["u0", "u1", "u2", "u3"]
    assert c.speakers == ("a", "b")
    assert c.by_id("u2").phonemes == ["b", "o"]
    assert corpus.durations_in_frames(c.by_id("u0"), 0.01).tolist() == [10, 10]


def test_manifest_errors(tmp_path):
    line = _write_item(tmp_path, "u0")
    (tmp_path / "dup.tsv").write_text(line + "\n" + line + "\n")
    with pytest.raises(DataError, match="duplicate"):
        corpus.load_corpus(tmp_path / "dup.tsv")
    (tmp_path / "missing.tsv").write_text("u9\ts\tnope.TextGrid\tnope.wav\n")
    with pytest.raises(DataError, match="nope"):
        corpus.load_corpus(tmp_path / "missing.tsv")
    (tmp_path / "short.tsv").write_text("u0\ts\n")
    with pytest.raises(DataError, match="4 tab"):
        corpus.load_corpus(tmp_path / "short.tsv")
    (tmp_path / "ok.tsv").write_text(line + "\n")
    with pytest.raises(DataError, match="sample rate"):
        corpus.load_corpus(tmp_path / "ok.tsv", expected_rate=16000)


def test_wav_round_trip(tmp_path):
    x = np.sin(np.arange(1000) / 7.0) * 0.5
    corpus.write_wav(tmp_path / "x.wav", x, 24000)
    y, rate = corpus.read_wav(tmp_path / "x.wav")
    assert rate == 24000
    assert np.max(np.abs(x - y)) < 1.0 / 32767
    assert corpus.wav_info(tmp_path / "x.wav") == (24000, 1000)


def _corpus(n):
    return corpus.AlignedCorpus(tuple(_utt([(0.0, 0.1)], f"u{i:02d}") for i in range(n)), ("spk",))


def test_split_ten_percent():
    for seed in range(5):
        train, valid = corpus.split_corpus(_corpus(10), 0.1, seed)
        assert (len(train), len(valid)) == (9, 1)
        assert not {u.id for u in train.utterances} & {u.id for u in valid.utterances}


def test_split_half_and_determinism():
    a = corpus.split_corpus(_corpus(4), 0.5, seed=3)
    b = corpus.split_corpus(_corpus(4), 0.5, seed=3)
    assert (len(a[0]), len(a[1])) == (2, 2)
    assert a == b


@given(st.integers(1, 40), st.floats(0.01, 0.99), st.integers(0, 2**32 - 1))
def test_split_partitions(n, fraction, seed):
    c = _corpus(n)
    train, valid = corpus.split_corpus(c, fraction, seed)
    ids = lambda x: [u.id for u in x.utterances]  # noqa: E731
    assert sorted(ids(train) + ids(valid)) == ids(c)
    assert len(valid) == int(np.floor(n * fraction + 0.5))


def test_split_ignores_manifest_order():
    c = _corpus(10)
    reversed_c = corpus.AlignedCorpus(c.utterances[::-1], c.speakers)
    assert ({u.id for u in corpus.split_corpus(c, 0.3, 1)[1].utterances}
            == {u.id for u in corpus.split_corpus(reversed_c, 0.3, 1)[1].utterances})
