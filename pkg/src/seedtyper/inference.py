"""Mention typing by argmax entailment score over the candidate type space."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .enrichment import TypeInventory
from .entailment import TemplateSpec, render_hypothesis
from .scorers import ScorerInterface
from .validation import check_choice, check_non_empty

__all__ = ["TypingQuery", "TypingResult", "type_mention", "type_batch"]


@dataclass(frozen=True)
class TypingQuery:
    """A mention to type: surface plus its already-windowed premise.

    ``span`` is an optional character range of the mention inside the
    premise, needed only by substitution templates (when omitted, the first
    token-level occurrence of the surface is used).
    """

    surface: str
    premise: str
    span: tuple[int, int] | None = None
    mode: str = "closed"

    def __post_init__(self):
        check_choice(self.mode, ("closed", "open"), "mode")
        check_non_empty(self.premise, "premise")


@dataclass(frozen=True)
class TypingResult:
    predicted_type: str
    ranking: tuple[tuple[str, float], ...]

    def score_of(self, type_name: str) -> float:
        for name, value in self.ranking:
            if name == type_name:
                return value
        raise KeyError(type_name)


def type_mention(
    scorer: ScorerInterface,
    template: TemplateSpec,
    inventory: TypeInventory,
    query: TypingQuery,
) -> TypingResult:
    """Score every candidate type's hypothesis against the premise and return
    the full ranking; ties break by type order."""
    candidates = inventory.type_names(query.mode)
    if not candidates:
        raise ValueError("empty candidate type space")
    pairs = [
        render_hypothesis(template, query.surface, name, query.premise, query.span)
        for name in candidates
    ]
    scores = scorer.score_pairs(pairs)
    order = sorted(range(len(candidates)), key=lambda i: (-scores[i], i))
    ranking = tuple((candidates[i], float(scores[i])) for i in order)
    return TypingResult(predicted_type=ranking[0][0], ranking=ranking)


def type_batch(
    scorer: ScorerInterface,
    template: TemplateSpec,
    inventory: TypeInventory,
    queries: Sequence[TypingQuery],
) -> list[TypingResult]:
    """Element-wise ``type_mention``; per-query failures name the index."""
    results = []
    for i, query in enumerate(queries):
        try:
            results.append(type_mention(scorer, template, inventory, query))
        except ValueError as exc:
            raise ValueError(f"query {i}: {exc}") from exc
    return results
