"""Iterative multi-type entity set expansion under mutual exclusivity.

Each iteration scores every remaining candidate against every type's current
member set by average cosine similarity, zeroes all but the candidate's
argmax type, and admits the top-ranked candidates per type.  No entity ever
belongs to more than one type's (seed + expanded) set.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import CandidatePool, normalize
from .encoders import EmbeddingTable
from .validation import check_positive_int

logger = logging.getLogger(__name__)

__all__ = [
    "SeenType",
    "TypeInventory",
    "ExpandedEntity",
    "TypeExpansion",
    "EnrichmentState",
    "type_score",
    "exclusive_scores",
    "enrich",
]


@dataclass(frozen=True)
class SeenType:
    name: str
    seeds: tuple[str, ...]


@dataclass(frozen=True)
class TypeInventory:
    """Seen types with seed entities plus unseen types known only by name.

    Seed surfaces are normalized on construction; seed sets must be pairwise
    disjoint across types and every seen type needs at least one seed.
    """

    seen: tuple[SeenType, ...]
    unseen: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.seen:
            raise ValueError("inventory needs at least one seen type")
        normalized = tuple(
            SeenType(name=t.name, seeds=tuple(normalize(s) for s in t.seeds)) for t in self.seen
        )
        object.__setattr__(self, "seen", normalized)
        object.__setattr__(self, "unseen", tuple(self.unseen))
        names = [t.name for t in self.seen] + list(self.unseen)
        if len(set(names)) != len(names):
            raise ValueError("type names must be unique")
        claimed: dict[str, str] = {}
        for t in self.seen:
            if not t.seeds:
                raise ValueError(f"seen type {t.name!r} has no seeds")
            for seed in t.seeds:
                if seed in claimed:
                    raise ValueError(
                        f"seed {seed!r} appears in both {claimed[seed]!r} and {t.name!r}"
                    )
                claimed[seed] = t.name

    @property
    def seen_names(self) -> list[str]:
        return [t.name for t in self.seen]

    def type_names(self, mode: str = "closed") -> list[str]:
        if mode == "closed":
            return self.seen_names
        if mode == "open":
            return self.seen_names + list(self.unseen)
        raise ValueError(f"mode must be 'closed' or 'open', got {mode!r}")

    @classmethod
    def from_dict(cls, payload: Mapping) -> "TypeInventory":
        seen = tuple(
            SeenType(name=entry["name"], seeds=tuple(entry["seeds"]))
            for entry in payload["seen"]
        )
        return cls(seen=seen, unseen=tuple(payload.get("unseen", ())))

    @classmethod
    def from_json_file(cls, path) -> "TypeInventory":
        with open(path, encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))


@dataclass(frozen=True)
class ExpandedEntity:
    surface: str
    iteration: int
    score: float


@dataclass(frozen=True)
class TypeExpansion:
    name: str
    seeds: tuple[str, ...]
    expanded: tuple[ExpandedEntity, ...]

    @property
    def members(self) -> list[str]:
        return list(self.seeds) + [e.surface for e in self.expanded]


@dataclass(frozen=True)
class EnrichmentState:
    """Result of the expansion run; serializes deterministically to JSON."""

    types: tuple[TypeExpansion, ...]
    iterations: int
    shortfall: dict[str, int] = field(default_factory=dict)

    def members(self, name: str) -> list[str]:
        for t in self.types:
            if t.name == name:
                return t.members
        raise KeyError(name)

    def to_json(self) -> str:
        payload = {
            "types": [
                {
                    "name": t.name,
                    "seeds": list(t.seeds),
                    "expanded": [
                        {"surface": e.surface, "iteration": e.iteration, "score": e.score}
                        for e in t.expanded
                    ],
                }
                for t in self.types
            ]
        }
        return json.dumps(payload, indent=2, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "EnrichmentState":
        payload = json.loads(text)
        types = tuple(
            TypeExpansion(
                name=entry["name"],
                seeds=tuple(entry["seeds"]),
                expanded=tuple(
                    ExpandedEntity(e["surface"], int(e["iteration"]), float(e["score"]))
                    for e in entry["expanded"]
                ),
            )
            for entry in payload["types"]
        )
        iterations = max((e.iteration for t in types for e in t.expanded), default=0)
        return cls(types=types, iterations=iterations)


def _unit(vector: np.ndarray, surface: str) -> np.ndarray:
    v = np.asarray(vector, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm == 0.0 or not np.isfinite(norm):
        raise ValueError(f"zero-norm or non-finite vector for {surface!r}")
    return v / norm


def type_score(candidate_vector: np.ndarray, member_vectors: Sequence[np.ndarray]) -> float:
    """Average cosine similarity between a candidate and a type's members."""
    if len(member_vectors) == 0:
        raise ValueError("member_vectors must be non-empty")
    cand = _unit(candidate_vector, "<candidate>")
    total = 0.0
    for i, member in enumerate(member_vectors):
        total += float(np.dot(cand, _unit(member, f"<member {i}>")))
    return total / len(member_vectors)


def exclusive_scores(scores_per_type: Mapping[str, float]) -> dict[str, float]:
    """Keep the score of the argmax type, zero the rest.

    Ties resolve to the first type in mapping order, so callers must pass
    types in inventory order.
    """
    if not scores_per_type:
        raise ValueError("scores_per_type must be non-empty")
    best = max(scores_per_type, key=lambda name: scores_per_type[name])
    # max() already returns the first maximal key in iteration order
    return {name: (score if name == best else 0.0) for name, score in scores_per_type.items()}


def enrich(
    inventory: TypeInventory,
    pool: CandidatePool,
    table: EmbeddingTable,
    target_size_per_type: int,
    batch_per_iteration: int = 5,
    min_sf: int = 3,
) -> EnrichmentState:
    """Expand every seen type's entity set from the candidate pool.

    Runs iterations until every type holds ``target_size_per_type`` expanded
    entities or no admissible candidates remain (a shortfall, reported but
    not an error).  Per iteration, candidate scores are recomputed against
    the grown member sets, exclusivity zeroes all but each candidate's best
    type, and up to ``batch_per_iteration`` top candidates join each type.
    Ranking ties break by (type order, lexicographic surface).
    """
    check_positive_int(target_size_per_type, "target_size_per_type")
    check_positive_int(batch_per_iteration, "batch_per_iteration")
    check_positive_int(min_sf, "min_sf")

    seeds_in_table: list[list[str]] = []
    for seen in inventory.seen:
        surviving = [s for s in seen.seeds if s in table]
        missing = [s for s in seen.seeds if s not in table]
        if missing:
            logger.warning(
                "type %r: %d seed(s) missing from the embedding table: %s",
                seen.name, len(missing), ", ".join(missing),
            )
        if not surviving:
            raise ValueError(f"no seeds of type {seen.name!r} are present in the embedding table")
        seeds_in_table.append(surviving)

    claimed: set[str] = {s for seeds in seeds_in_table for s in seeds}
    eligible = sorted(
        surface
        for surface, sf in pool.entries.items()
        if sf >= min_sf and surface in table and surface not in claimed
    )
    cand_matrix = (
        np.stack([_unit(table.vector(s), s) for s in eligible])
        if eligible
        else np.zeros((0, 2 * table.dimension))
    )

    expanded: list[list[ExpandedEntity]] = [[] for _ in inventory.seen]
    iteration = 0
    while True:
        open_types = [
            i for i in range(len(inventory.seen)) if len(expanded[i]) < target_size_per_type
        ]
        if not open_types or not eligible:
            break
        iteration += 1
        member_units = [
            np.stack([_unit(table.vector(m), m) for m in seeds_in_table[i]]
                     + [_unit(table.vector(e.surface), e.surface) for e in expanded[i]])
            for i in range(len(inventory.seen))
        ]
        # scores[c, t] = mean cosine between candidate c and members of type t
        scores = np.stack(
            [(cand_matrix @ units.T).mean(axis=1) for units in member_units], axis=1
        )
        argmax = np.argmax(scores, axis=1)  # first max wins: tie-break by type order
        admitted_this_iteration: set[str] = set()
        for i in open_types:
            room = min(batch_per_iteration, target_size_per_type - len(expanded[i]))
            owned = [
                (-scores[c, i], eligible[c], c) for c in range(len(eligible)) if argmax[c] == i
            ]
            owned.sort()
            for neg_score, surface, _ in owned[:room]:
                score = float(np.clip(-neg_score, -1.0, 1.0))
                expanded[i].append(ExpandedEntity(surface=surface, iteration=iteration, score=score))
                admitted_this_iteration.add(surface)
        if not admitted_this_iteration:
            break
        keep = [c for c, surface in enumerate(eligible) if surface not in admitted_this_iteration]
        eligible = [eligible[c] for c in keep]
        cand_matrix = cand_matrix[keep]

    shortfall = {
        seen.name: target_size_per_type - len(expanded[i])
        for i, seen in enumerate(inventory.seen)
        if len(expanded[i]) < target_size_per_type
    }
    if shortfall:
        logger.warning("pool exhausted before target: shortfall per type: %s", shortfall)
    types = tuple(
        TypeExpansion(
            name=seen.name, seeds=tuple(seeds_in_table[i]), expanded=tuple(expanded[i])
        )
        for i, seen in enumerate(inventory.seen)
    )
    return EnrichmentState(types=types, iterations=iteration, shortfall=shortfall)
