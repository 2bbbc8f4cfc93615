import random

import pytest
from hypothesis import given, strategies as st

from csrqa import dataio
from csrqa.dataio import QAPair, compute_stats, load_canonical_tsv, load_wikiqa_tsv
from csrqa.errors import FormatError, ParseError


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_canonical_two_pairs(tmp_path):
    p = write(tmp_path, "a.tsv", "q1\twho?\ta1\thim.\t1\nq1\twho?\ta2\ther.\t0\n")
    pairs = load_canonical_tsv(p)
    assert pairs == [QAPair("q1", "a1", "who?", "him.", 1), QAPair("q1", "a2", "who?", "her.", 0)]
    assert compute_stats(pairs).n_questions == 1


def test_canonical_empty(tmp_path):
    assert load_canonical_tsv(write(tmp_path, "e.tsv", "")) == []


def test_canonical_field_count(tmp_path):
    with pytest.raises(ParseError) as exc:
        load_canonical_tsv(write(tmp_path, "b.tsv", "q1\twho?\ta1\thim.\n"))
    assert exc.value.lineno == 1


def test_canonical_bad_label(tmp_path):
    with pytest.raises(ParseError) as exc:
        load_canonical_tsv(write(tmp_path, "b.tsv", "q1\tx\ta1\ty\t1\nq1\tx\ta2\ty\t2\n"))
    assert exc.value.lineno == 2


def test_duplicate_pair_rejected(tmp_path):
    with pytest.raises(ParseError):
        load_canonical_tsv(write(tmp_path, "d.tsv", "q1\tx\ta1\ty\t1\nq1\tx\ta1\tz\t0\n"))


def test_question_text_mismatch_rejected(tmp_path):
    with pytest.raises(ParseError) as exc:
        load_canonical_tsv(write(tmp_path, "m.tsv", "q1\tx\ta1\ty\t1\nq1\tother\ta2\tz\t0\n"))
    assert exc.value.lineno == 2


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_canonical_tsv(tmp_path / "nope.tsv")


HEADER = "QuestionID\tQuestion\tDocumentID\tDocumentTitle\tSentenceID\tSentence\tLabel\n"


def test_wikiqa_mapping(tmp_path):
    p = write(
        tmp_path,
        "w.tsv",
        HEADER
        + "Q1\thow are glacier caves formed?\tD1\tGlacier cave\tD1-0\tA partly submerged glacier cave.\t0\n"
        + "Q1\thow are glacier caves formed?\tD1\tGlacier cave\tD1-1\tThe ice facade is approximately 60 m high\t1\n",
    )
    pairs = load_wikiqa_tsv(p)
    assert pairs[1] == QAPair("Q1", "D1-1", "how are glacier caves formed?", "The ice facade is approximately 60 m high", 1)
    assert compute_stats(pairs).n_pairs == 2


def test_wikiqa_header_missing_column(tmp_path):
    bad = HEADER.replace("\tSentenceID", "")
    with pytest.raises(FormatError, match="SentenceID"):
        load_wikiqa_tsv(write(tmp_path, "w.tsv", bad + "Q1\tq\tD1\tt\ts\t0\n"))


def test_wikiqa_field_count(tmp_path):
    with pytest.raises(ParseError) as exc:
        load_wikiqa_tsv(write(tmp_path, "w.tsv", HEADER + "Q1\tq\tD1\tt\tD1-0\n"))
    assert exc.value.lineno == 2


def test_stats_same_question():
    pairs = [QAPair("q", "a", "x", "y", 1), QAPair("q", "b", "x", "z", 0)]
    s = compute_stats(pairs)
    assert (s.n_questions, s.n_pairs, s.pct_correct) == (1, 2, 0.5)


def test_stats_empty():
    assert compute_stats([]).pct_correct == 0.0


def test_stats_matches_table_rounding():
    # 1040 / 20360 = 5.108% prints as 5.11%
    s = dataio.SplitStats(2118, 20360, 1040 / 20360)
    assert s.matches(*dataio.PUBLISHED_STATS[("wikiqa", "train")])
    assert s.format(2) == "2118 20360 5.11%"
    assert not dataio.SplitStats(2118, 20360, 1050 / 20360).matches(*dataio.PUBLISHED_STATS[("wikiqa", "train")])


text = st.text(alphabet=st.characters(blacklist_characters="\t\n\r", blacklist_categories=("Cs",)), min_size=1, max_size=20)


@st.composite
def pair_lists(draw):
    n = draw(st.integers(0, 12))
    out = []
    questions = {}
    for i in range(n):
        qid = f"q{draw(st.integers(0, 3))}"
        q = questions.setdefault(qid, draw(text))
        out.append(QAPair(qid, f"a{i}", q, draw(text), draw(st.integers(0, 1))))
    return out


@given(pair_lists())
def test_stats_permutation_invariant(pairs):
    shuffled = list(pairs)
    random.Random(0).shuffle(shuffled)
    assert compute_stats(shuffled) == compute_stats(pairs)


@given(pair_lists())
def test_canonical_round_trip(pairs):
    import tempfile, os

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "rt.tsv")
        dataio.write_canonical_tsv(pairs, path)
        assert load_canonical_tsv(path) == pairs
