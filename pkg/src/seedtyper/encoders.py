"""Corpus-level contextualized entity representations.

Every entity (seed or candidate) gets one vector: the average over its corpus
occurrences of [content || context], where the content half is the mean
encoder output over the entity's own (sub-)tokens and the context half is the
encoder output at a single mask token substituted for the whole span.
"""

from __future__ import annotations

import hashlib
import logging
import struct
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Corpus, OccurrenceIndex, Sentence

logger = logging.getLogger(__name__)

__all__ = [
    "EncoderAdapter",
    "ToyDeterministicAdapter",
    "NeuralAdapter",
    "EntityEmbedding",
    "EmbeddingTable",
    "content_embedding",
    "context_embedding",
    "build_table",
    "save_table",
    "load_table",
    "TableFormatError",
    "TableCompatibilityError",
]

MAGIC = b"SETYEMB1"


class TableFormatError(ValueError):
    """Raised when an embedding cache file is malformed or truncated."""


class TableCompatibilityError(ValueError):
    """Raised when a cache file does not match the expected encoder setup."""


class EncoderAdapter(ABC):
    """Token encoder contract used for entity representation extraction.

    ``encode`` must return exactly one vector of length ``dimension`` per
    input token position and must be deterministic.  ``subtokenize`` maps one
    pipeline token to the adapter's own (sub-)token pieces.
    """

    dimension: int
    mask_token: str
    max_input_tokens: int

    @property
    @abstractmethod
    def fingerprint(self) -> str:
        """Identifies backend + configuration for cache compatibility checks."""

    def subtokenize(self, token: str) -> list[str]:
        return [token]

    @abstractmethod
    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        """Encode a token sequence; shape (len(tokens), dimension)."""


class ToyDeterministicAdapter(EncoderAdapter):
    """Fully specified deterministic adapter for exact tests and CPU runs.

    The vector at a content position is a seeded hash-projection of the token
    string (context-independent).  The vector at a mask position is the mean
    of the hash-projections of the other, non-mask tokens in the input; a
    mask with no context falls back to the projection of the mask token
    itself.
    """

    def __init__(
        self,
        dimension: int = 64,
        seed: int = 0,
        mask_token: str = "[MASK]",
        max_input_tokens: int = 256,
        subtoken_chunk: int | None = None,
    ):
        self.dimension = dimension
        self.seed = seed
        self.mask_token = mask_token
        self.max_input_tokens = max_input_tokens
        self.subtoken_chunk = subtoken_chunk
        self._cache: dict[str, np.ndarray] = {}

    @property
    def fingerprint(self) -> str:
        return f"toy:d={self.dimension}:seed={self.seed}:chunk={self.subtoken_chunk}"

    def projection(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            digest = hashlib.blake2b(
                f"{self.seed}:{token}".encode("utf-8"), digest_size=8
            ).digest()
            rng = np.random.default_rng(int.from_bytes(digest, "little"))
            vec = rng.standard_normal(self.dimension)
            self._cache[token] = vec
        return vec

    def subtokenize(self, token: str) -> list[str]:
        if token == self.mask_token or not self.subtoken_chunk:
            return [token]
        chunk = self.subtoken_chunk
        return [token[i : i + chunk] for i in range(0, len(token), chunk)] or [token]

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        out = np.empty((len(tokens), self.dimension), dtype=np.float64)
        others = [t for t in tokens if t != self.mask_token]
        if others:
            context = np.mean([self.projection(t) for t in others], axis=0)
        else:
            context = self.projection(self.mask_token)
        for i, token in enumerate(tokens):
            out[i] = context if token == self.mask_token else self.projection(token)
        return out


class NeuralAdapter(EncoderAdapter):
    """Wraps a pretrained transformer encoder (wordpiece-style tokenizer).

    Only determinism and shape invariants are guaranteed; the semantic
    quality depends entirely on the chosen backbone.
    """

    def __init__(self, model, tokenizer, device: str = "cpu", max_input_tokens: int = 510):
        import torch  # deferred; neural extra

        self._torch = torch
        self.model = model.to(device).eval()
        self.tokenizer = tokenizer
        self.device = device
        self.dimension = int(self.model.config.hidden_size)
        self.mask_token = tokenizer.mask_token or "[MASK]"
        self.max_input_tokens = max_input_tokens
        name = getattr(self.model.config, "name_or_path", "") or "local"
        self.model_name = name

    @classmethod
    def from_pretrained(cls, model_name: str, device: str = "cpu") -> "NeuralAdapter":
        from transformers import AutoModel, AutoTokenizer  # deferred; neural extra

        model = AutoModel.from_pretrained(model_name)
        tokenizer = AutoTokenizer.from_pretrained(model_name)
        adapter = cls(model, tokenizer, device=device)
        adapter.model_name = model_name
        return adapter

    @property
    def fingerprint(self) -> str:
        return f"neural:{self.model_name}:d={self.dimension}"

    def subtokenize(self, token: str) -> list[str]:
        if token == self.mask_token:
            return [token]
        pieces = self.tokenizer.tokenize(token)
        return pieces if pieces else [self.tokenizer.unk_token or token]

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        # BERT-style framing: [CLS] payload [SEP]; payload positions known
        torch = self._torch
        ids = self.tokenizer.convert_tokens_to_ids(list(tokens))
        cls_id = self.tokenizer.cls_token_id
        sep_id = self.tokenizer.sep_token_id
        framed = ([cls_id] if cls_id is not None else []) + ids + (
            [sep_id] if sep_id is not None else []
        )
        offset = 1 if cls_id is not None else 0
        input_ids = torch.tensor([framed], device=self.device)
        with torch.no_grad():
            hidden = self.model(input_ids=input_ids).last_hidden_state[0]
        return hidden[offset : offset + len(ids)].double().cpu().numpy()


def _flatten_with_spans(
    adapter: EncoderAdapter, tokens: Sequence[str], span: tuple[int, int]
) -> tuple[list[str], int, int]:
    """Sub-tokenize a sentence; return (pieces, span_piece_start, span_piece_end)."""
    pieces: list[str] = []
    span_start = span_end = 0
    for idx, token in enumerate(tokens):
        if idx == span[0]:
            span_start = len(pieces)
        pieces.extend(adapter.subtokenize(token))
        if idx == span[1] - 1:
            span_end = len(pieces)
    return pieces, span_start, span_end


def _truncate_around(
    pieces: list[str], start: int, end: int, budget: int
) -> tuple[list[str], int, int]:
    """Symmetric truncation around [start, end); span pieces are never dropped."""
    span_len = end - start
    if span_len > budget:
        raise ValueError(f"span of {span_len} sub-tokens exceeds encoder budget {budget}")
    if len(pieces) <= budget:
        return pieces, start, end
    remaining = budget - span_len
    left = min(start, (remaining + 1) // 2)
    right = min(len(pieces) - end, remaining - left)
    left = min(start, remaining - right)
    lo, hi = start - left, end + right
    return pieces[lo:hi], start - lo, end - lo


def _check_span(sentence: Sentence, span: tuple[int, int]) -> None:
    start, end = span
    if not (0 <= start < end <= len(sentence.tokens)):
        raise ValueError(
            f"invalid span {span!r} for sentence ({sentence.doc_id!r}, {sentence.sent_id}) "
            f"with {len(sentence.tokens)} tokens"
        )


def content_embedding(
    adapter: EncoderAdapter, sentence: Sentence, span: tuple[int, int]
) -> np.ndarray:
    """Mean encoder output over the sub-token positions of the span."""
    _check_span(sentence, span)
    pieces, p_start, p_end = _flatten_with_spans(adapter, sentence.tokens, span)
    pieces, p_start, p_end = _truncate_around(pieces, p_start, p_end, adapter.max_input_tokens)
    vectors = np.asarray(adapter.encode(pieces), dtype=np.float64)
    return vectors[p_start:p_end].mean(axis=0)


def context_embedding(
    adapter: EncoderAdapter, sentence: Sentence, span: tuple[int, int]
) -> np.ndarray:
    """Encoder output at a single mask token substituted for the whole span."""
    _check_span(sentence, span)
    start, end = span
    masked = list(sentence.tokens[:start]) + [adapter.mask_token] + list(sentence.tokens[end:])
    pieces, p_start, p_end = _flatten_with_spans(adapter, masked, (start, start + 1))
    pieces, p_start, p_end = _truncate_around(pieces, p_start, p_end, adapter.max_input_tokens)
    vectors = np.asarray(adapter.encode(pieces), dtype=np.float64)
    return vectors[p_start]


@dataclass(frozen=True)
class EntityEmbedding:
    """Corpus-level entity vector: [content || context], float32."""

    surface: str
    vector: np.ndarray
    sentence_frequency: int


class EmbeddingTable:
    """Immutable map from normalized surface to its EntityEmbedding."""

    def __init__(self, embeddings: Iterable[EntityEmbedding], fingerprint: str, dimension: int):
        self._embeddings = {e.surface: e for e in embeddings}
        self.fingerprint = fingerprint
        self.dimension = dimension
        for emb in self._embeddings.values():
            if emb.vector.shape != (2 * dimension,):
                raise ValueError(
                    f"vector for {emb.surface!r} has shape {emb.vector.shape}, "
                    f"expected ({2 * dimension},)"
                )

    def __contains__(self, surface: str) -> bool:
        return surface in self._embeddings

    def __len__(self) -> int:
        return len(self._embeddings)

    def __getitem__(self, surface: str) -> EntityEmbedding:
        return self._embeddings[surface]

    def vector(self, surface: str) -> np.ndarray:
        return self._embeddings[surface].vector

    @property
    def surfaces(self) -> list[str]:
        return sorted(self._embeddings)


def _occurrence_sample(occurrences, cap: int, seed: int, surface: str):
    if cap >= len(occurrences):
        return occurrences
    digest = hashlib.blake2b(f"{seed}:{surface}".encode("utf-8"), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    chosen = sorted(rng.choice(len(occurrences), size=cap, replace=False))
    return [occurrences[i] for i in chosen]


def build_table(
    adapter: EncoderAdapter,
    corpus: Corpus,
    index: OccurrenceIndex,
    surfaces: Iterable[str],
    max_occurrences_per_entity: int = 64,
    seed: int = 0,
) -> tuple[EmbeddingTable, list[str]]:
    """Average [content || context] over each surface's occurrences.

    At most ``max_occurrences_per_entity`` occurrences per surface are used,
    chosen by a per-surface seeded deterministic sample and averaged in
    canonical occurrence order; ``sentence_frequency`` stays the true count of
    distinct sentences.  Surfaces without occurrences are excluded and
    returned in the second element.
    """
    if max_occurrences_per_entity < 1:
        raise ValueError("max_occurrences_per_entity must be >= 1")
    embeddings: list[EntityEmbedding] = []
    skipped: list[str] = []
    for surface in sorted(set(surfaces)):
        occurrences = index.lookup(surface)
        if not occurrences:
            skipped.append(surface)
            continue
        sf = len({(o.doc_id, o.sent_id) for o in occurrences})
        used = _occurrence_sample(occurrences, max_occurrences_per_entity, seed, surface)
        total = np.zeros(2 * adapter.dimension, dtype=np.float64)
        for occ in used:
            sentence = corpus.sentence(occ.doc_id, occ.sent_id)
            span = (occ.token_start, occ.token_end)
            total[: adapter.dimension] += content_embedding(adapter, sentence, span)
            total[adapter.dimension :] += context_embedding(adapter, sentence, span)
        vector = (total / len(used)).astype(np.float32)
        embeddings.append(EntityEmbedding(surface=surface, vector=vector, sentence_frequency=sf))
    if skipped:
        logger.warning("excluded %d surfaces with no corpus occurrences", len(skipped))
    return EmbeddingTable(embeddings, adapter.fingerprint, adapter.dimension), skipped


def _write_str(handle, text: str) -> None:
    payload = text.encode("utf-8")
    handle.write(struct.pack("<I", len(payload)))
    handle.write(payload)


def _read_exact(handle, size: int) -> bytes:
    data = handle.read(size)
    if len(data) != size:
        raise TableFormatError("truncated embedding cache file")
    return data


def _read_str(handle) -> str:
    (length,) = struct.unpack("<I", _read_exact(handle, 4))
    return _read_exact(handle, length).decode("utf-8")


def save_table(table: EmbeddingTable, path: str | Path) -> None:
    """Binary cache: magic, fingerprint, dimension, count, then records of
    (surface, sentence_frequency, 2*dimension float32 little-endian)."""
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        _write_str(handle, table.fingerprint)
        handle.write(struct.pack("<II", table.dimension, len(table)))
        for surface in table.surfaces:
            emb = table[surface]
            _write_str(handle, surface)
            handle.write(struct.pack("<I", emb.sentence_frequency))
            handle.write(emb.vector.astype("<f4").tobytes())


def load_table(
    path: str | Path,
    expected_fingerprint: str | None = None,
    expected_dimension: int | None = None,
) -> EmbeddingTable:
    with open(path, "rb") as handle:
        if _read_exact(handle, len(MAGIC)) != MAGIC:
            raise TableFormatError(f"{path}: not an embedding cache (bad magic)")
        fingerprint = _read_str(handle)
        dimension, count = struct.unpack("<II", _read_exact(handle, 8))
        if expected_fingerprint is not None and fingerprint != expected_fingerprint:
            raise TableCompatibilityError(
                f"{path}: cache fingerprint {fingerprint!r} does not match "
                f"expected {expected_fingerprint!r}"
            )
        if expected_dimension is not None and dimension != expected_dimension:
            raise TableCompatibilityError(
                f"{path}: cache dimension {dimension} does not match expected {expected_dimension}"
            )
        embeddings = []
        for _ in range(count):
            surface = _read_str(handle)
            (sf,) = struct.unpack("<I", _read_exact(handle, 4))
            raw = _read_exact(handle, 2 * dimension * 4)
            vector = np.frombuffer(raw, dtype="<f4").astype(np.float32)
            embeddings.append(EntityEmbedding(surface=surface, vector=vector, sentence_frequency=sf))
        if handle.read(1):
            raise TableFormatError(f"{path}: trailing bytes after {count} records")
    return EmbeddingTable(embeddings, fingerprint, dimension)
