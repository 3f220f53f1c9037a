"""Seed-guided fine-grained entity typing.

Expands a handful of seed entities per type into enriched entity sets from an
unlabeled corpus, pseudo-labels mentions, trains an entailment scorer, and
classifies entity mentions into both seen and unseen types.
"""

__version__ = "0.1.0"

from .corpus import (
    CandidatePool,
    Corpus,
    OccurrenceIndex,
    Sentence,
    ingest,
    import_candidates,
    load_corpus_jsonl,
    mine_candidates,
)
from .encoders import (
    EmbeddingTable,
    EncoderAdapter,
    EntityEmbedding,
    ToyDeterministicAdapter,
    build_table,
    content_embedding,
    context_embedding,
    load_table,
    save_table,
)
from .enrichment import (
    EnrichmentState,
    SeenType,
    TypeInventory,
    enrich,
    exclusive_scores,
    type_score,
)
from .entailment import (
    TemplateSpec,
    TrainConfig,
    TrainingReport,
    contrastive_loss,
    render_hypothesis,
    train,
)
from .estimator import EntailmentEntityTyper, EntityEnricher
from .evaluation import EvalReport, GoldSample, ZTestResult, score, z_test
from .inference import TypingQuery, TypingResult, type_batch, type_mention
from .pseudolabel import PseudoSample, build_premise, generate, split_samples
from .scorers import ScorerInterface, ToyScorer

__all__ = [
    "CandidatePool",
    "Corpus",
    "EmbeddingTable",
    "EncoderAdapter",
    "EnrichmentState",
    "EntailmentEntityTyper",
    "EntityEmbedding",
    "EntityEnricher",
    "EvalReport",
    "GoldSample",
    "OccurrenceIndex",
    "PseudoSample",
    "ScorerInterface",
    "SeenType",
    "Sentence",
    "TemplateSpec",
    "ToyDeterministicAdapter",
    "ToyScorer",
    "TrainConfig",
    "TrainingReport",
    "TypeInventory",
    "TypingQuery",
    "TypingResult",
    "ZTestResult",
    "build_premise",
    "build_table",
    "content_embedding",
    "context_embedding",
    "contrastive_loss",
    "enrich",
    "exclusive_scores",
    "generate",
    "import_candidates",
    "ingest",
    "load_corpus_jsonl",
    "load_table",
    "mine_candidates",
    "render_hypothesis",
    "save_table",
    "score",
    "split_samples",
    "train",
    "type_batch",
    "type_mention",
    "type_score",
    "z_test",
]
