"""Scikit-learn style estimator facade.

Wraps entity enrichment and entailment training/prediction behind
``fit``/``predict`` with ``get_params``/``set_params`` so the pipeline
composes with model-selection tooling from the wider ecosystem.
"""

from __future__ import annotations

from typing import Sequence

from sklearn.base import BaseEstimator

from .corpus import CandidatePool
from .encoders import EmbeddingTable
from .enrichment import EnrichmentState, TypeInventory, enrich
from .entailment import TemplateSpec, TrainConfig, train
from .inference import TypingQuery, TypingResult, type_batch
from .pseudolabel import PseudoSample
from .scorers import ScorerInterface, ToyScorer

__all__ = ["EntityEnricher", "EntailmentEntityTyper"]


class EntityEnricher(BaseEstimator):
    """Expands seed entity sets from a candidate pool under mutual exclusivity."""

    def __init__(
        self,
        target_size_per_type: int = 50,
        batch_per_iteration: int = 5,
        min_sentence_frequency: int = 3,
    ):
        self.target_size_per_type = target_size_per_type
        self.batch_per_iteration = batch_per_iteration
        self.min_sentence_frequency = min_sentence_frequency

    def fit(
        self,
        table: EmbeddingTable,
        inventory: TypeInventory,
        pool: CandidatePool | None = None,
    ) -> "EntityEnricher":
        """Run the expansion; the result lands in ``state_``.

        When no pool is given, every table surface with its stored sentence
        frequency acts as the candidate pool.
        """
        if pool is None:
            pool = CandidatePool(
                entries={s: table[s].sentence_frequency for s in table.surfaces}
            )
        self.state_: EnrichmentState = enrich(
            inventory,
            pool,
            table,
            target_size_per_type=self.target_size_per_type,
            batch_per_iteration=self.batch_per_iteration,
            min_sf=self.min_sentence_frequency,
        )
        self.expanded_sets_ = {
            t.name: [e.surface for e in t.expanded] for t in self.state_.types
        }
        return self

    def transform(self, table: EmbeddingTable) -> dict[str, list[str]]:
        """Full member sets (seeds + expansions) after fitting."""
        if not hasattr(self, "state_"):
            raise RuntimeError("EntityEnricher is not fitted yet")
        return {t.name: t.members for t in self.state_.types}


class EntailmentEntityTyper(BaseEstimator):
    """Trainable mention typer: fit on pseudo-labeled samples, predict types.

    ``scorer`` defaults to a fresh hashed bag-of-tokens backend; pass a
    configured ``NeuralScorer`` for transformer-based runs.
    """

    def __init__(
        self,
        scorer: ScorerInterface | None = None,
        template: str = "contextual",
        learning_rate: float = 5e-5,
        warmup_steps: int = 100,
        weight_decay: float = 0.01,
        epsilon: float = 1e-8,
        batch_size: int = 4,
        epochs: int = 3,
        max_steps: int | None = None,
        eval_every: int = 500,
        checkpoint_policy: str = "best_val",
        random_state: int = 0,
    ):
        self.scorer = scorer
        self.template = template
        self.learning_rate = learning_rate
        self.warmup_steps = warmup_steps
        self.weight_decay = weight_decay
        self.epsilon = epsilon
        self.batch_size = batch_size
        self.epochs = epochs
        self.max_steps = max_steps
        self.eval_every = eval_every
        self.checkpoint_policy = checkpoint_policy
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            warmup_steps=self.warmup_steps,
            weight_decay=self.weight_decay,
            epsilon=self.epsilon,
            batch_size=self.batch_size,
            epochs=self.epochs,
            max_steps=self.max_steps,
            seed=self.random_state,
            eval_every=self.eval_every,
            checkpoint_policy=self.checkpoint_policy,
        )

    def fit(
        self,
        samples: Sequence[PseudoSample],
        inventory: TypeInventory,
        validation_samples: Sequence[PseudoSample] = (),
    ) -> "EntailmentEntityTyper":
        self.scorer_ = self.scorer if self.scorer is not None else ToyScorer(seed=self.random_state)
        self.template_ = TemplateSpec(style=self.template)
        self.inventory_ = inventory
        _, self.report_ = train(
            self.scorer_, samples, validation_samples, inventory, self.template_, self._train_config()
        )
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "scorer_"):
            raise RuntimeError("EntailmentEntityTyper is not fitted yet")

    def predict(self, queries: Sequence[TypingQuery]) -> list[str]:
        return [r.predicted_type for r in self.predict_ranking(queries)]

    def predict_ranking(self, queries: Sequence[TypingQuery]) -> list[TypingResult]:
        self._check_fitted()
        return type_batch(self.scorer_, self.template_, self.inventory_, queries)

    def score(self, queries: Sequence[TypingQuery], labels: Sequence[str]) -> float:
        """Accuracy (= micro-F1 for single-label typing) on labeled queries."""
        if len(queries) != len(labels):
            raise ValueError("queries and labels must align")
        if not queries:
            raise ValueError("queries must be non-empty")
        predictions = self.predict(queries)
        return sum(p == y for p, y in zip(predictions, labels)) / len(labels)
