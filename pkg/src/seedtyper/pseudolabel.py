"""Pseudo-labeled training sample generation.

Matches each type's (seed + expanded) entities against the unlabeled corpus;
every used occurrence yields one (entity, premise, type) sample where the
premise is the mention sentence joined with its +/- c context sentences.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corpus import Corpus, Occurrence, OccurrenceIndex, token_spans
from .enrichment import EnrichmentState, TypeInventory
from .validation import check_non_negative_int, check_open_fraction, check_positive_int

logger = logging.getLogger(__name__)

__all__ = [
    "PseudoSample",
    "build_premise",
    "premise_with_char_span",
    "generate",
    "split_samples",
    "write_samples_jsonl",
    "read_samples_jsonl",
]


@dataclass(frozen=True)
class PseudoSample:
    """One training unit: an entity mention in its windowed context, typed."""

    surface: str
    doc_id: str
    sent_id: int
    span: tuple[int, int]
    premise: str
    type_name: str
    provenance: str  # "seed" | "expanded"


def build_premise(corpus: Corpus, doc_id: str, sent_id: int, c: int) -> str:
    """Mention sentence with up to ``c`` predecessors and successors, joined
    by single spaces in document order and clipped at document boundaries."""
    check_non_negative_int(c, "c")
    window = corpus.window(doc_id, sent_id, c, c)
    return " ".join(sentence.text for sentence in window)


def premise_with_char_span(
    corpus: Corpus, doc_id: str, sent_id: int, span: tuple[int, int], c: int
) -> tuple[str, tuple[int, int]]:
    """Premise plus the character range of the mention's token span in it."""
    check_non_negative_int(c, "c")
    window = corpus.window(doc_id, sent_id, c, c)
    premise = " ".join(sentence.text for sentence in window)
    prefix = 0
    mention = None
    for sentence in window:
        if sentence.sent_id == sent_id:
            mention = sentence
            break
        prefix += len(sentence.text) + 1
    assert mention is not None
    spans = token_spans(mention.text)
    start, end = span
    if not (0 <= start < end <= len(spans)):
        raise ValueError(
            f"span {span!r} invalid for sentence ({doc_id!r}, {sent_id}) with {len(spans)} tokens"
        )
    return premise, (prefix + spans[start][1], prefix + spans[end - 1][2])


def _resolve_overlaps(matches: list[tuple[int, int, str]]) -> list[tuple[int, int, str]]:
    """Longest-match-first, then left-to-right; each token joins <= 1 match."""
    ordered = sorted(matches, key=lambda m: (-(m[1] - m[0]), m[0], m[2]))
    taken: set[int] = set()
    kept = []
    for start, end, surface in ordered:
        positions = range(start, end)
        if any(p in taken for p in positions):
            continue
        taken.update(positions)
        kept.append((start, end, surface))
    kept.sort()
    return kept


def _cap_sample(items: list, cap: int, seed: int, surface: str) -> list:
    if len(items) <= cap:
        return items
    digest = hashlib.blake2b(f"{seed}:{surface}".encode("utf-8"), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    chosen = sorted(rng.choice(len(items), size=cap, replace=False))
    return [items[i] for i in chosen]


def generate(
    corpus: Corpus,
    index: OccurrenceIndex,
    enrichment: EnrichmentState,
    inventory: TypeInventory,
    c: int = 1,
    cap_per_entity: int = 100,
    seed: int = 0,
) -> list[PseudoSample]:
    """Emit one pseudo-labeled sample per used entity occurrence.

    Overlapping matches inside a sentence resolve longest-match-first; exact
    (surface, premise) duplicates are dropped; occurrences beyond
    ``cap_per_entity`` are removed by a seeded deterministic sample.  Output
    order is canonical (doc_id, sent_id, token_start).
    """
    check_non_negative_int(c, "c")
    check_positive_int(cap_per_entity, "cap_per_entity")

    seen_names = set(inventory.seen_names)
    seed_sets = {t.name: set(t.seeds) for t in enrichment.types}
    entity_type: dict[str, str] = {}
    for expansion in enrichment.types:
        if expansion.name not in seen_names:
            raise ValueError(f"enrichment type {expansion.name!r} is not a seen type")
        for member in expansion.members:
            if member in entity_type:
                raise ValueError(
                    f"entity {member!r} belongs to more than one type; "
                    "enrichment sets must be mutually exclusive"
                )
            entity_type[member] = expansion.name

    # group every member occurrence by sentence for overlap resolution
    by_sentence: dict[tuple[str, int], list[tuple[int, int, str]]] = {}
    for surface in entity_type:
        for occ in index.lookup(surface):
            by_sentence.setdefault((occ.doc_id, occ.sent_id), []).append(
                (occ.token_start, occ.token_end, surface)
            )

    accepted: dict[str, list[Occurrence]] = {}
    for (doc_id, sent_id), matches in sorted(by_sentence.items()):
        for start, end, surface in _resolve_overlaps(matches):
            accepted.setdefault(surface, []).append(Occurrence(doc_id, sent_id, start, end))

    samples: list[PseudoSample] = []
    for surface in sorted(accepted):
        type_name = entity_type[surface]
        provenance = "seed" if surface in seed_sets[type_name] else "expanded"
        occurrences = sorted(accepted[surface])
        seen_pairs: set[str] = set()
        deduped: list[tuple[Occurrence, str]] = []
        for occ in occurrences:
            premise = build_premise(corpus, occ.doc_id, occ.sent_id, c)
            if premise in seen_pairs:
                continue
            seen_pairs.add(premise)
            deduped.append((occ, premise))
        for occ, premise in _cap_sample(deduped, cap_per_entity, seed, surface):
            samples.append(
                PseudoSample(
                    surface=surface,
                    doc_id=occ.doc_id,
                    sent_id=occ.sent_id,
                    span=(occ.token_start, occ.token_end),
                    premise=premise,
                    type_name=type_name,
                    provenance=provenance,
                )
            )
    samples.sort(key=lambda s: (s.doc_id, s.sent_id, s.span[0], s.surface))
    return samples


def split_samples(
    samples: Sequence[PseudoSample], validation_fraction: float, seed: int = 0
) -> tuple[list[PseudoSample], list[PseudoSample]]:
    """Document-level train/validation split: all samples from one doc_id
    land on the same side.  Deterministic for a fixed seed."""
    check_open_fraction(validation_fraction, "validation_fraction")
    doc_ids = sorted({s.doc_id for s in samples})
    if len(doc_ids) < 2:
        raise ValueError("document-level split needs samples from at least 2 documents")
    rng = random.Random(seed)
    rng.shuffle(doc_ids)
    n_val = round(validation_fraction * len(doc_ids))
    n_val = min(max(n_val, 1), len(doc_ids) - 1)
    val_docs = set(doc_ids[:n_val])
    train = [s for s in samples if s.doc_id not in val_docs]
    val = [s for s in samples if s.doc_id in val_docs]
    return train, val


def write_samples_jsonl(samples: Iterable[PseudoSample], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for s in samples:
            record = {
                "surface": s.surface,
                "doc_id": s.doc_id,
                "sent_id": s.sent_id,
                "span": [s.span[0], s.span[1]],
                "premise": s.premise,
                "type": s.type_name,
                "provenance": s.provenance,
            }
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_samples_jsonl(path) -> list[PseudoSample]:
    samples = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                samples.append(
                    PseudoSample(
                        surface=rec["surface"],
                        doc_id=rec["doc_id"],
                        sent_id=int(rec["sent_id"]),
                        span=(int(rec["span"][0]), int(rec["span"][1])),
                        premise=rec["premise"],
                        type_name=rec["type"],
                        provenance=rec.get("provenance", "expanded"),
                    )
                )
            except (json.JSONDecodeError, KeyError, IndexError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed sample record ({exc})") from None
    return samples
