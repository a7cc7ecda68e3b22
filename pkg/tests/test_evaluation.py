import csv
import json
import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from accent_asr.evaluation import (
    EmptyReference, EvalRecord, build_report, char_error_rate, edit_distance, evaluate,
    format_records, rank_records, score_pair, word_error_rate,
)
from accent_asr.model import ModelConfig
from accent_asr.train import TrainConfig, run_training


@pytest.mark.parametrize("a,b,d", [
    ("abc", "abc", 0), ("kitten", "sitting", 3), ("", "ab", 2), ("ab", "", 2),
    ("flaw", "lawn", 2), (["the", "cat"], ["a", "cat"], 1),
])
def test_edit_distance_examples(a, b, d):
    assert edit_distance(a, b) == d


def test_error_rate_examples():
    assert word_error_rate("the cat sat on the mat", "the cat sat on mat") == pytest.approx(1 / 6)
    assert word_error_rate("a b", "a b") == 0.0
    assert char_error_rate("ab", "ab") == 0.0
    assert word_error_rate("a", "b c") == 2.0
    assert char_error_rate("ab", "abc d") == 1.5
    with pytest.raises(EmptyReference):
        word_error_rate("", "x")
    with pytest.raises(EmptyReference):
        char_error_rate("", "x")


words = st.text(alphabet="ab ", min_size=1, max_size=20).map(lambda s: " ".join(s.split()))


@given(words.filter(bool), words)
def test_error_rate_bounds(ref, hyp):
    cer = char_error_rate(ref, hyp)
    assert 0 <= cer <= max(len(ref), len(hyp)) / len(ref)
    assert (cer == 0) == (ref == hyp)
    wer = word_error_rate(ref, hyp)
    n_ref, n_hyp = len(ref.split()), len(hyp.split())
    assert 0 <= wer <= max(n_ref, n_hyp) / n_ref
    assert (wer == 0) == (ref.split() == hyp.split())


def test_score_pair_normalizes_both_sides():
    record = score_pair("x.wav", "Hello, World!", "hello   world", 1.0)
    assert (record.reference, record.hypothesis, record.wer, record.cer) == (
        "hello world", "hello world", 0.0, 0.0)


def rec(name, wer, cer=0.0, loss=1.0):
    return EvalRecord(name, "r", "h", wer, cer, loss)


def test_single_row_report():
    only = rec("a.wav", 0.5)
    report = build_report([only])
    assert report.best == report.median == report.worst == only
    assert report.count == 1


def test_two_row_median_is_lower():
    report = build_report([rec("b.wav", 1.0), rec("a.wav", 0.0)])
    assert report.mean_wer == 0.5
    assert report.median.wer == 0.0


def test_ranking_tie_breaks():
    records = [rec("c.wav", 0.5, 0.2), rec("b.wav", 0.5, 0.1), rec("a.wav", 0.5, 0.1)]
    assert [r.wav_filename for r in rank_records(records)] == ["a.wav", "b.wav", "c.wav"]


def test_report_is_order_independent():
    rnd = random.Random(1)
    records = [rec(f"{i}.wav", rnd.random(), rnd.random(), rnd.random() * 10) for i in range(30)]
    first = build_report(records)
    for _ in range(5):
        rnd.shuffle(records)
        assert build_report(records).to_json() == first.to_json()
    assert first.best.wer <= first.median.wer <= first.worst.wer


def test_infeasible_losses_are_excluded_from_mean():
    report = build_report([rec("a.wav", 0, loss=2.0), rec("b.wav", 0, loss=math.inf)])
    assert report.mean_loss == 2.0


def test_json_keys():
    doc = json.loads(build_report([rec("a.wav", 0.25)]).to_json())
    assert {"mean_wer", "mean_cer", "mean_loss", "best", "median", "worst", "count"} <= set(doc)
    assert doc["best"]["wav_filename"] == "a.wav"


def test_records_csv():
    text = format_records([EvalRecord("a.wav", "x, y", "x", 0.5, 0.25, 3.0)])
    rows = list(csv.reader(text.splitlines()))
    assert rows[0] == ["wav_filename", "wer", "cer", "loss", "reference", "hypothesis"]
    assert rows[1] == ["a.wav", "0.500000", "0.250000", "3.000000", "x, y", "x"]


def test_evaluate_writes_outputs(mini_manifest, tmp_path):
    result = run_training(mini_manifest, None, ModelConfig(n_hidden=8),
                          TrainConfig(epochs=1, checkpoint_dir=str(tmp_path / "ckpt")))
    report, records = evaluate(mini_manifest, result.checkpoint_path, out_dir=tmp_path / "eval")
    assert report.count == 5 and len(records) == 5
    assert report.decoder == "greedy"
    assert all(math.isfinite(r.loss) and r.loss > 0 for r in records)
    for name in ("records.csv", "report.txt", "report.json"):
        assert (tmp_path / "eval" / name).is_file()
    text = (tmp_path / "eval" / "report.txt").read_text()
    assert f"mean WER {report.mean_wer:.6f}" in text
