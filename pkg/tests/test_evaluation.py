import json
import math

import numpy as np
import pytest

from seedtyper.evaluation import EvalReport, GoldSample, read_gold_jsonl, score, z_test


def gold_of(labels):
    return [
        GoldSample(doc_id="d", sent_id=i, span=(0, 1), surface=f"m{i}", gold_type=label)
        for i, label in enumerate(labels)
    ]


def preds_of(gold, predicted):
    return [(g.sample_id, p) for g, p in zip(gold, predicted)]


class TestScore:
    def test_perfect_predictions(self):
        gold = gold_of(["A", "B", "A"])
        report = score(preds_of(gold, ["A", "B", "A"]), gold, ["A", "B"])
        assert report.micro_f1 == 1.0
        assert report.macro_f1 == 1.0
        assert report.sample_count == 3

    def test_hand_computed_confusion(self):
        # gold (A,A,B,B), predicted (A,B,B,B):
        # A: tp=1 fp=0 fn=1 -> P=1, R=1/2, F1=2/3
        # B: tp=2 fp=1 fn=0 -> P=2/3, R=1, F1=4/5
        gold = gold_of(["A", "A", "B", "B"])
        report = score(preds_of(gold, ["A", "B", "B", "B"]), gold, ["A", "B"])
        assert report.micro_f1 == pytest.approx(0.75, abs=1e-12)
        assert report.per_type["A"]["f1"] == pytest.approx(2 / 3, abs=1e-12)
        assert report.per_type["B"]["f1"] == pytest.approx(0.8, abs=1e-12)
        assert report.macro_f1 == pytest.approx((2 / 3 + 0.8) / 2, abs=1e-12)
        assert report.confusion == {"A": {"A": 1, "B": 1}, "B": {"A": 0, "B": 2}}

    def test_zero_support_never_predicted_excluded_from_macro(self):
        gold = gold_of(["A", "B"])
        report = score(preds_of(gold, ["A", "B"]), gold, ["A", "B", "C"])
        assert report.macro_f1 == 1.0
        assert report.per_type["C"]["support"] == 0

    def test_zero_support_but_predicted_counts_as_zero(self):
        gold = gold_of(["A", "B"])
        report = score(preds_of(gold, ["A", "C"]), gold, ["A", "B", "C"])
        # A: F1 1.0; B: predicted never, support 1 -> F1 0; C: predicted once,
        # support 0 -> included as 0
        assert report.macro_f1 == pytest.approx(1.0 / 3, abs=1e-12)

    def test_missing_prediction_errors(self):
        gold = gold_of(["A", "B"])
        with pytest.raises(ValueError, match="missing predictions"):
            score(preds_of(gold, ["A", "B"])[:1], gold, ["A", "B"])

    def test_unknown_prediction_id_errors(self):
        gold = gold_of(["A"])
        preds = preds_of(gold, ["A"]) + [(("x", 1, 0, 1), "A")]
        with pytest.raises(ValueError, match="unknown ids"):
            score(preds, gold, ["A"])

    def test_label_outside_space_errors(self):
        gold = gold_of(["A", "Z"])
        with pytest.raises(ValueError, match="outside the type space"):
            score(preds_of(gold, ["A", "A"]), gold, ["A", "B"])

    def test_micro_equals_accuracy_and_permutation_invariant(self):
        rng = np.random.default_rng(0)
        types = ["A", "B", "C", "D"]
        labels = [types[i] for i in rng.integers(0, 4, size=40)]
        predicted = [types[i] for i in rng.integers(0, 4, size=40)]
        gold = gold_of(labels)
        report = score(preds_of(gold, predicted), gold, types)
        accuracy = sum(a == b for a, b in zip(labels, predicted)) / 40
        assert report.micro_f1 == pytest.approx(accuracy, abs=1e-12)
        perm = rng.permutation(40)
        permuted = score(
            [preds_of(gold, predicted)[i] for i in perm],
            [gold[i] for i in perm],
            types,
        )
        assert permuted.micro_f1 == report.micro_f1
        assert permuted.macro_f1 == report.macro_f1
        assert permuted.confusion == report.confusion

    def test_confusion_row_and_column_sums(self):
        rng = np.random.default_rng(5)
        types = ["A", "B", "C"]
        labels = [types[i] for i in rng.integers(0, 3, size=30)]
        predicted = [types[i] for i in rng.integers(0, 3, size=30)]
        gold = gold_of(labels)
        report = score(preds_of(gold, predicted), gold, types)
        for t in types:
            assert sum(report.confusion[t].values()) == labels.count(t)
            assert sum(report.confusion[g][t] for g in types) == predicted.count(t)
            assert report.per_type[t]["support"] == labels.count(t)

    def test_report_json_round_trip(self):
        gold = gold_of(["A", "B"])
        report = score(preds_of(gold, ["A", "B"]), gold, ["A", "B"])
        loaded = EvalReport.from_json(report.to_json())
        assert loaded.micro_f1 == report.micro_f1
        assert loaded.confusion == report.confusion


class TestZTest:
    def test_equal_counts(self):
        result = z_test(500, 500, 1000)
        assert result.z == 0.0
        assert result.p == 1.0

    def test_direct_formula_evaluation(self):
        # a=0.6, b=0.5, n=1000: pooled 0.55, z = 0.1/sqrt(0.2475 * 0.002)
        result = z_test(600, 500, 1000)
        expected_z = 0.1 / math.sqrt(0.55 * 0.45 * (2 / 1000))
        assert result.z == pytest.approx(expected_z, rel=1e-12)
        assert result.z == pytest.approx(4.4946657, abs=1e-6)
        assert result.p < 0.01
        assert not result.low_power

    def test_sign(self):
        assert z_test(400, 500, 1000).z < 0

    def test_degenerate_n_flagged_low_power(self):
        result = z_test(1, 0, 1)
        assert result.low_power
        assert math.isfinite(result.z)

    def test_bounds_validated(self):
        with pytest.raises(ValueError):
            z_test(5, 2, 4)
        with pytest.raises(ValueError):
            z_test(0, 0, 0)

    def test_symmetric_two_tailed(self):
        a = z_test(600, 500, 1000)
        b = z_test(500, 600, 1000)
        assert a.p == pytest.approx(b.p, rel=1e-12)
        assert a.z == pytest.approx(-b.z, rel=1e-12)


class TestGoldJsonl:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "gold.jsonl"
        record = {"doc_id": "d", "sent_id": 3, "span": [1, 2], "mention": "Mac", "label": "Device"}
        path.write_text(json.dumps(record) + "\n", encoding="utf-8")
        samples = read_gold_jsonl(path)
        assert samples == [GoldSample("d", 3, (1, 2), "Mac", "Device")]
        assert samples[0].sample_id == ("d", 3, 1, 2)

    def test_malformed(self, tmp_path):
        path = tmp_path / "gold.jsonl"
        path.write_text('{"doc_id": "d"}\n', encoding="utf-8")
        with pytest.raises(ValueError, match=":1"):
            read_gold_jsonl(path)
