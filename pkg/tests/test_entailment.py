import math

import numpy as np
import pytest

from seedtyper.enrichment import SeenType, TypeInventory
from seedtyper.entailment import (
    TemplateSpec,
    TrainConfig,
    TrainingDivergedError,
    closed_set_micro_f1,
    contrastive_loss,
    find_surface_char_span,
    linear_schedule,
    load_checkpoint,
    render_hypothesis,
    save_checkpoint,
    train,
)
from seedtyper.pseudolabel import PseudoSample
from seedtyper.scorers import ToyScorer

PREMISE = "Visual Studio 17.6.2 for Mac not running with breakpoints"


class TestTemplates:
    def test_contextual_golden(self):
        _, hyp = render_hypothesis(TemplateSpec("contextual"), "Mac", "Device", PREMISE)
        assert hyp == "In this context, Mac is referring to Device."

    def test_taxonomic_golden(self):
        _, hyp = render_hypothesis(TemplateSpec("taxonomic"), "Mac", "Device", PREMISE)
        assert hyp == "Mac is a Device."

    def test_substitution_golden(self):
        start = PREMISE.index("Mac")
        premise, hyp = render_hypothesis(
            TemplateSpec("substitution"), "Mac", "Device", PREMISE, span=(start, start + 3)
        )
        assert premise == PREMISE
        assert hyp == "Visual Studio 17.6.2 for Device not running with breakpoints"

    def test_contextual_leaves_premise_unchanged(self):
        premise, _ = render_hypothesis(TemplateSpec("contextual"), "Mac", "Device", PREMISE)
        assert premise == PREMISE

    def test_substitution_resolves_span_by_search(self):
        _, hyp = render_hypothesis(TemplateSpec("substitution"), "mac", "Device", PREMISE)
        assert hyp == "Visual Studio 17.6.2 for Device not running with breakpoints"

    def test_substitution_unresolvable_errors(self):
        with pytest.raises(ValueError, match="not found"):
            render_hypothesis(TemplateSpec("substitution"), "Linux", "Device", PREMISE)

    def test_unknown_style_rejected(self):
        with pytest.raises(ValueError, match="style"):
            TemplateSpec("freeform")

    def test_find_surface_char_span_multi_token(self):
        span = find_surface_char_span("uses a Hash Map here", "hash map")
        assert span is not None
        assert "uses a Hash Map here"[span[0] : span[1]] == "Hash Map"


class TestContrastiveLoss:
    def test_symmetric_pair_is_ln2(self):
        assert contrastive_loss([0.0], [[0.0]]) == pytest.approx(math.log(2), abs=1e-12)

    def test_two_zero_margin(self):
        assert contrastive_loss([2.0], [[0.0]]) == pytest.approx(math.log(1 + math.exp(-2)), abs=1e-12)

    def test_additivity_over_negatives(self):
        assert contrastive_loss([1.5], [[1.5, 1.5, 1.5]]) == pytest.approx(3 * math.log(2), abs=1e-12)

    def test_non_negative_and_vanishing(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            pos = rng.normal(size=3)
            negs = rng.normal(size=(3, 2))
            assert contrastive_loss(pos, negs) >= 0.0
        assert contrastive_loss([1000.0], [[0.0]]) == pytest.approx(0.0, abs=1e-12)

    def test_shift_invariance_per_pair(self):
        base = contrastive_loss([0.7], [[-0.2]])
        shifted = contrastive_loss([0.7 + 123.0], [[-0.2 + 123.0]])
        assert shifted == pytest.approx(base, rel=1e-12)

    def test_stable_for_large_scores(self):
        assert math.isfinite(contrastive_loss([-1e6], [[1e6]]))

    def test_requires_negatives(self):
        with pytest.raises(ValueError, match="negative"):
            contrastive_loss([0.0], [[]])


def random_pairs(rng, n, n_neg, alphabet):
    def text():
        return " ".join(rng.choice(alphabet) for _ in range(rng.integers(2, 6)))

    pos = [(text(), text()) for _ in range(n)]
    negs = [[(p, text()) for _ in range(n_neg)] for p, _ in pos]
    return pos, negs


class TestToyScorerGradients:
    def test_matches_central_finite_differences(self):
        rng = np.random.default_rng(7)
        alphabet = [f"w{i}" for i in range(12)]
        for _ in range(3):
            scorer = ToyScorer(feature_dim=12, seed=1)
            scorer.u = rng.normal(size=12) * 0.1
            scorer.v = rng.normal(size=12) * 0.1
            scorer.W = rng.normal(size=(12, 12)) * 0.1
            pos, negs = random_pairs(rng, n=3, n_neg=2, alphabet=alphabet)
            _, grads = scorer.loss_and_gradients(pos, negs)
            h = 1e-6
            for name in ("u", "v", "W"):
                param = getattr(scorer, name)
                fd = np.zeros_like(param)
                it = np.nditer(param, flags=["multi_index"])
                for _ in it:
                    idx = it.multi_index
                    original = param[idx]
                    param[idx] = original + h
                    up = scorer.batch_loss(pos, negs)
                    param[idx] = original - h
                    down = scorer.batch_loss(pos, negs)
                    param[idx] = original
                    fd[idx] = (up - down) / (2 * h)
                denom = max(np.linalg.norm(fd), 1e-12)
                assert np.linalg.norm(grads[name] - fd) / denom < 1e-4


def make_samples(n_per_type, tag=""):
    """Linearly separable synthetic set: each type's premises carry a unique
    indicator token matching nothing else."""
    samples = []
    for t, token in (("devices", "gizmo"), ("tools", "wrench")):
        for i in range(n_per_type):
            samples.append(
                PseudoSample(
                    surface=f"ent{t}{i}",
                    doc_id=f"{tag}doc{t}{i}",
                    sent_id=0,
                    span=(0, 1),
                    premise=f"ent{t}{i} with {token} and {token} number {i}.",
                    type_name=t,
                    provenance="seed",
                )
            )
    return samples


INVENTORY = TypeInventory(seen=(SeenType("devices", ("x",)), SeenType("tools", ("y",))))


class TestTrain:
    def test_separable_data_loss_decreases_and_generalizes(self):
        train_set = make_samples(8)
        held_out = make_samples(4, tag="held")
        scorer = ToyScorer(feature_dim=64, seed=0)
        config = TrainConfig(
            learning_rate=0.5, warmup_steps=0, weight_decay=0.0, batch_size=16,
            epochs=12, eval_every=8, seed=3,
        )
        scorer, report = train(
            scorer, train_set, held_out, INVENTORY, TemplateSpec("contextual"), config
        )
        losses = report.loss_per_step
        assert len(losses) >= 10
        assert all(losses[i + 1] < losses[i] for i in range(9)), losses[:10]
        accuracy = closed_set_micro_f1(scorer, TemplateSpec("contextual"), INVENTORY, held_out)
        assert accuracy == 1.0

    def test_zero_steps_is_noop_with_initial_eval(self):
        scorer = ToyScorer(feature_dim=16, seed=0)
        before = scorer.snapshot()
        config = TrainConfig(learning_rate=0.1, epochs=0, batch_size=2)
        scorer, report = train(
            scorer, make_samples(2), make_samples(1, tag="v"), INVENTORY,
            TemplateSpec("contextual"), config,
        )
        np.testing.assert_array_equal(scorer.W, before["W"])
        assert report.loss_per_step == []
        assert report.selected_step == 0
        assert len(report.validation_micro_f1) == 1
        assert report.validation_micro_f1[0][0] == 0

    def test_single_type_rejected(self):
        inventory = TypeInventory(seen=(SeenType("only", ("x",)),))
        sample = make_samples(1)[0]
        only = PseudoSample(
            surface=sample.surface, doc_id=sample.doc_id, sent_id=0, span=(0, 1),
            premise=sample.premise, type_name="only", provenance="seed",
        )
        with pytest.raises(ValueError, match="2 seen types"):
            train(ToyScorer(), [only], [], inventory, TemplateSpec("contextual"), TrainConfig())

    def test_empty_train_rejected(self):
        with pytest.raises(ValueError, match="non-empty"):
            train(ToyScorer(), [], [], INVENTORY, TemplateSpec("contextual"), TrainConfig())

    def test_unknown_sample_type_rejected(self):
        bad = PseudoSample("e", "d", 0, (0, 1), "text here", "mystery", "seed")
        with pytest.raises(ValueError, match="mystery"):
            train(ToyScorer(), [bad], [], INVENTORY, TemplateSpec("contextual"), TrainConfig())

    def test_reproducible_for_fixed_seed(self):
        def run():
            scorer = ToyScorer(feature_dim=32, seed=2)
            config = TrainConfig(learning_rate=0.3, warmup_steps=2, batch_size=3, epochs=2, seed=11)
            scorer, _ = train(
                scorer, make_samples(5), [], INVENTORY, TemplateSpec("contextual"), config
            )
            return scorer

        a, b = run(), run()
        np.testing.assert_array_equal(a.W, b.W)
        np.testing.assert_array_equal(a.u, b.u)
        np.testing.assert_array_equal(a.v, b.v)

    def test_divergence_guard(self):
        class ExplodingScorer(ToyScorer):
            def training_step(self, pos_pairs, neg_pairs, lr):
                return float("nan")

        with pytest.raises(TrainingDivergedError, match="step 1"):
            train(
                ExplodingScorer(feature_dim=8), make_samples(2), [], INVENTORY,
                TemplateSpec("contextual"), TrainConfig(learning_rate=1.0, batch_size=2, epochs=1),
            )

    def test_best_checkpoint_selected(self):
        train_set = make_samples(6)
        val_set = make_samples(2, tag="v")
        scorer = ToyScorer(feature_dim=64, seed=0)
        config = TrainConfig(
            learning_rate=0.5, warmup_steps=0, batch_size=4, epochs=4, eval_every=3, seed=0
        )
        scorer, report = train(
            scorer, train_set, val_set, INVENTORY, TemplateSpec("contextual"), config
        )
        best = max(f1 for _, f1 in report.validation_micro_f1)
        selected = [f1 for step, f1 in report.validation_micro_f1 if step == report.selected_step]
        assert selected and selected[0] == best

    def test_substitution_template_trains(self):
        scorer = ToyScorer(feature_dim=64, seed=0)
        config = TrainConfig(learning_rate=0.5, warmup_steps=0, batch_size=8, epochs=4, seed=0)
        scorer, report = train(
            scorer, make_samples(4), [], INVENTORY, TemplateSpec("substitution"), config
        )
        assert all(math.isfinite(loss) for loss in report.loss_per_step)


class TestSchedule:
    def test_warmup_then_linear_decay(self):
        config = TrainConfig(learning_rate=1.0, warmup_steps=4)
        total = 10
        values = [linear_schedule(s, total, config) for s in range(1, total + 1)]
        assert values[:4] == [0.25, 0.5, 0.75, 1.0]
        assert values[4] < 1.0
        assert values[-1] == 0.0
        diffs = np.diff(values[3:])
        assert np.allclose(diffs, diffs[0])

    def test_short_runs_stay_in_warmup(self):
        config = TrainConfig(learning_rate=1.0, warmup_steps=100)
        assert linear_schedule(5, 10, config) == 0.5


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        scorer = ToyScorer(feature_dim=32, seed=5)
        config = TrainConfig(learning_rate=0.4, warmup_steps=0, batch_size=4, epochs=2)
        scorer, report = train(
            scorer, make_samples(4), [], INVENTORY, TemplateSpec("taxonomic"), config
        )
        save_checkpoint(scorer, tmp_path / "ck", TemplateSpec("taxonomic"), config, report, "fp123")
        loaded, meta = load_checkpoint(tmp_path / "ck")
        assert meta["template"] == "taxonomic"
        assert meta["fingerprint"] == "fp123"
        assert meta["selected_step"] == report.selected_step
        pair = ("some premise words", "entity is a devices.")
        assert loaded.score(*pair) == pytest.approx(scorer.score(*pair), abs=1e-12)
