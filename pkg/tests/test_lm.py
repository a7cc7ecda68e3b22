import itertools
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from accent_asr.errors import EmptyCorpus, UnknownSymbol
from accent_asr.lm import BOUNDARY, LmFormatError, NgramModel, train_ngram


def test_single_observation_k0():
    assert train_ngram(["ab"], order=2, k=0).prob("a", "b") == 1.0


def test_symmetric_counts_k0():
    model = train_ngram(["ab", "ac"], order=2, k=0)
    assert model.prob("a", "b") == model.prob("a", "c") == 0.5


def test_add_k_hand_value():
    model = train_ngram(["ab"], order=2, k=0.5)
    assert len(model.vocab) == 3
    assert model.prob("a", "b") == pytest.approx(1.5 / 2.5)


def test_score_hand_value():
    model = train_ngram(["ab"], order=2, k=0.5)
    # P(a | start) = (1 + .5) / (1 + 1.5); P(b | a) = 0.6
    expected = math.log(1.5 / 2.5) + math.log(0.6)
    assert model.score("ab") == pytest.approx(expected, abs=1e-12)
    assert model.score("") == 0.0


def test_unknown_symbol():
    model = train_ngram(["ab"], order=2)
    with pytest.raises(UnknownSymbol):
        model.score("az")
    with pytest.raises(UnknownSymbol):
        model.score(BOUNDARY)


def test_empty_corpus():
    with pytest.raises(EmptyCorpus):
        train_ngram([])


corpus = st.lists(st.text(alphabet="ab c'", min_size=0, max_size=8), min_size=1, max_size=6)


@settings(max_examples=40, deadline=None)
@given(corpus, st.integers(1, 4), st.sampled_from([0.0, 0.1, 0.5, 1.0]))
def test_conditionals_normalize(lines, order, k):
    model = train_ngram(lines, order=order, k=k, symbols="ab c'")
    histories = {""} | {"".join(p) for n in range(1, order) for p in
                        itertools.product("ab", repeat=n)}
    for ctx in model.contexts():
        histories.add(ctx.replace(BOUNDARY, ""))
    for hist in histories:
        total = sum(model.prob(hist, s) for s in model.vocab)
        assert total == pytest.approx(1.0, abs=1e-9)
        if k > 0:
            assert all(model.prob(hist, s) > 0 for s in model.vocab)


@settings(max_examples=30, deadline=None)
@given(corpus, st.integers(1, 5))
def test_shuffling_corpus_does_not_change_scores(lines, order):
    shuffled = lines[:]
    random.Random(0).shuffle(shuffled)
    a = train_ngram(lines, order=order, symbols="ab c'")
    b = train_ngram(shuffled, order=order, symbols="ab c'")
    assert a.to_text() == b.to_text()


def test_text_round_trip(tmp_path):
    model = train_ngram(["it's a cab", "a bad cab"], order=3, k=0.25)
    path = tmp_path / "lm.txt"
    model.save(path)
    text = path.read_text(encoding="utf-8")
    assert text.startswith("#ngram ")
    body = text.splitlines()[1:]
    assert body == sorted(body)
    assert all(len(line.split("\t")) == 3 for line in body)
    back = NgramModel.load(path)
    assert back.to_text() == text
    assert back.score("a cab") == model.score("a cab")


def test_bad_file():
    with pytest.raises(LmFormatError):
        NgramModel.from_text("no header\n")
    with pytest.raises(LmFormatError):
        NgramModel.from_text('#ngram {"order": 2, "k": 0.5, "vocab": ["a", "^"]}\nbroken\n')


def test_unigram_ignores_history():
    model = train_ngram(["aab"], order=1, k=0)
    assert model.prob("", "a") == model.prob("b", "a") == pytest.approx(2 / 4)
