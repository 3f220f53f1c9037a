"""Neural backend checks against a tiny randomly initialized transformer.

No pretrained weights are downloaded; only determinism, shape, and training
plumbing are asserted (semantic quality requires a real backbone).
"""

import numpy as np
import pytest

torch = pytest.importorskip("torch")
transformers = pytest.importorskip("transformers")

from seedtyper.corpus import OccurrenceIndex, Sentence
from seedtyper.encoders import NeuralAdapter, build_table, content_embedding, context_embedding
from seedtyper.enrichment import SeenType, TypeInventory
from seedtyper.entailment import TemplateSpec, TrainConfig, train
from seedtyper.pseudolabel import PseudoSample
from seedtyper.scorers import NeuralScorer

from conftest import corpus_from_texts

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "the", "hash", "map", "java", "##script", "run", "##ning", "stores",
    "pairs", "is", "a", "in", "this", "context", "referring", "to",
    "language", "structure", ".", ",",
]


@pytest.fixture(scope="module")
def tiny_model():
    config = transformers.BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=128,
    )
    torch.manual_seed(0)
    model = transformers.BertModel(config)
    tokenizer = transformers.BertTokenizerFast(
        vocab={t: i for i, t in enumerate(VOCAB)}, do_lower_case=True
    )
    return model, tokenizer


class TestNeuralAdapter:
    def test_shape_one_vector_per_token(self, tiny_model):
        adapter = NeuralAdapter(*tiny_model)
        out = adapter.encode(["java", "##script", "run"])
        assert out.shape == (3, adapter.dimension)

    def test_deterministic(self, tiny_model):
        adapter = NeuralAdapter(*tiny_model)
        a = adapter.encode(["hash", "map"])
        b = adapter.encode(["hash", "map"])
        np.testing.assert_array_equal(a, b)

    def test_subtokenize_wordpiece(self, tiny_model):
        adapter = NeuralAdapter(*tiny_model)
        assert adapter.subtokenize("javascript") == ["java", "##script"]
        assert adapter.subtokenize(adapter.mask_token) == [adapter.mask_token]

    def test_content_and_context_shapes(self, tiny_model):
        adapter = NeuralAdapter(*tiny_model)
        sentence = Sentence.from_text("d", 0, "the hash map stores pairs.")
        content = content_embedding(adapter, sentence, (1, 3))
        context = context_embedding(adapter, sentence, (1, 3))
        assert content.shape == context.shape == (adapter.dimension,)
        assert np.isfinite(content).all() and np.isfinite(context).all()
        # context embedding must differ from content (mask substitution)
        assert not np.allclose(content, context)

    def test_build_table_with_neural_backend(self, tiny_model):
        adapter = NeuralAdapter(*tiny_model)
        corpus = corpus_from_texts({"d": ["the hash map stores pairs.", "java is a language."]})
        index = OccurrenceIndex.build(corpus, ["hash map", "java"])
        table, skipped = build_table(adapter, corpus, index, ["hash map", "java"])
        assert skipped == []
        assert table.vector("hash map").shape == (2 * adapter.dimension,)
        assert table.fingerprint.startswith("neural:")


INVENTORY = TypeInventory(
    seen=(SeenType("language", ("java",)), SeenType("structure", ("map",)))
)


def neural_samples(n=4):
    samples = []
    for t, token in (("language", "java"), ("structure", "map")):
        for i in range(n):
            samples.append(
                PseudoSample(
                    surface=token,
                    doc_id=f"d{t}{i}",
                    sent_id=0,
                    span=(0, 1),
                    premise=f"{token} stores pairs in this context .",
                    type_name=t,
                    provenance="seed",
                )
            )
    return samples


class TestNeuralScorer:
    def test_eval_mode_deterministic_and_finite(self, tiny_model):
        scorer = NeuralScorer(*tiny_model, seed=0)
        pair = ("the hash map stores pairs", "hash map is a structure")
        a = scorer.score(*pair)
        b = scorer.score(*pair)
        assert a == b
        assert np.isfinite(a)

    def test_score_pairs_batch_matches_single(self, tiny_model):
        scorer = NeuralScorer(*tiny_model, seed=0)
        pairs = [
            ("the hash map", "map is a structure"),
            ("java running", "java is a language"),
        ]
        batch = scorer.score_pairs(pairs)
        singles = [scorer.score(*p) for p in pairs]
        np.testing.assert_allclose(batch, singles, atol=1e-5)

    def test_training_step_updates_parameters(self, tiny_model):
        torch.manual_seed(1)
        scorer = NeuralScorer(*tiny_model, seed=1)
        before = scorer.snapshot()
        scorer.begin_training(weight_decay=0.01, epsilon=1e-8)
        pos = [("java running", "java is a language")]
        negs = [[("java running", "java is a structure")]]
        loss = scorer.training_step(pos, negs, lr=1e-3)
        assert np.isfinite(loss)
        changed = any(
            not torch.equal(before["model"][k], v)
            for k, v in scorer.model.state_dict().items()
        )
        assert changed

    def test_full_train_loop_runs(self, tiny_model):
        scorer = NeuralScorer(*tiny_model, seed=0)
        config = TrainConfig(
            learning_rate=1e-4, warmup_steps=2, batch_size=4, epochs=1, eval_every=2
        )
        scorer, report = train(
            scorer, neural_samples(4), neural_samples(1), INVENTORY,
            TemplateSpec("contextual"), config,
        )
        assert len(report.loss_per_step) == 2
        assert all(np.isfinite(l) for l in report.loss_per_step)

    def test_snapshot_restore_round_trip(self, tiny_model):
        scorer = NeuralScorer(*tiny_model, seed=0)
        pair = ("the hash map", "map is a structure")
        before = scorer.score(*pair)
        snap = scorer.snapshot()
        scorer.begin_training(weight_decay=0.0, epsilon=1e-8)
        scorer.training_step([pair], [[("the hash map", "map is a language")]], lr=0.01)
        assert scorer.score(*pair) != before
        scorer.restore(snap)
        assert scorer.score(*pair) == before

    def test_save_load_params(self, tiny_model, tmp_path):
        scorer = NeuralScorer(*tiny_model, seed=0)
        pair = ("java running", "java is a language")
        expected = scorer.score(*pair)
        scorer.save_params(tmp_path / "params.pt")
        other = NeuralScorer(*tiny_model, seed=999)
        assert other.score(*pair) != expected  # different head init
        other.load_params(tmp_path / "params.pt")
        assert other.score(*pair) == pytest.approx(expected, abs=1e-6)

    def test_premise_truncated_to_budget(self, tiny_model):
        scorer = NeuralScorer(*tiny_model, seed=0, max_premise_tokens=4, max_hypothesis_tokens=3)
        long_premise = "the hash map stores pairs " * 30
        value = scorer.score(long_premise, "map is a structure")
        assert np.isfinite(value)
        ids, attention = scorer._encode_batch([(long_premise, "map is a structure")])
        assert ids.shape[1] <= 4 + 3 + 3
