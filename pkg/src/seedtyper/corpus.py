"""Sentence-indexed corpus, candidate entity mining, and occurrence lookups.

The tokenizer and normalizer defined here are the single source of truth for
the whole pipeline: candidate mining, embedding extraction, pseudo-label
matching, and inference all tokenize text the same way, so an entity surface
matched in one stage can always be found again in another.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

from .validation import check_positive_int

logger = logging.getLogger(__name__)

__all__ = [
    "Sentence",
    "Corpus",
    "CandidatePool",
    "Occurrence",
    "OccurrenceIndex",
    "tokenize",
    "token_spans",
    "normalize",
    "normalize_tokens",
    "split_sentences",
    "ingest",
    "load_corpus_jsonl",
    "load_raw_documents",
    "mine_candidates",
    "import_candidates",
    "default_stop_filter",
    "make_stop_filter",
    "STOPWORDS",
]


# Identifier-ish tokens keep punctuation that is meaningful in software text:
# internal ".", "_", "-", "+", "#" ("17.6.2", "c++", "c#", "asp.net-core"),
# a trailing "()" for method names ("getCheckedItemPositions()"), and trailing
# "+"/"#" runs.  Everything else splits into single-character tokens.
_TOKEN_RE = re.compile(r"\w+(?:[.+#_\-]\w+)*(?:\(\))?[+#]*|\S")

# Words that may precede a period without ending the sentence.
_ABBREVIATIONS = frozenset(
    {
        "e.g", "i.e", "etc", "cf", "vs", "al", "fig", "eq", "sec", "no",
        "mr", "mrs", "ms", "dr", "prof", "jr", "sr", "st", "inc", "ltd", "co",
    }
)

_SENT_BOUNDARY_RE = re.compile(r"[.!?]+(?=\s)")

# Small English stop list used by the default candidate boundary filter.
STOPWORDS = frozenset(
    """
    a about above after again all also am an and any are as at be because been
    before being below between both but by can could did do does doing down
    during each few for from further had has have having he her here hers him
    his how i if in into is it its itself just me more most my no nor not of
    off on once only or other our ours out over own same she should so some
    such than that the their theirs them then there these they this those
    through to too under until up very was we were what when where which while
    who whom why will with would you your yours
    """.split()
)


def tokenize(text: str) -> list[str]:
    """Deterministic whitespace + punctuation tokenization."""
    return _TOKEN_RE.findall(text)


def token_spans(text: str) -> list[tuple[str, int, int]]:
    """Tokens with their (start, end) character offsets in ``text``."""
    return [(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def normalize(surface: str) -> str:
    """Canonical form of a surface: collapsed whitespace, case-folded."""
    return " ".join(surface.split()).casefold()


def normalize_tokens(tokens: Sequence[str]) -> str:
    return " ".join(t.casefold() for t in tokens)


def split_sentences(text: str) -> list[str]:
    """Rule-based sentence splitter on terminal punctuation.

    Splits after runs of ``.!?`` followed by whitespace unless the word in
    front of the period is a known abbreviation.  Intra-token periods
    ("17.6.2") never trigger a split because they are not followed by
    whitespace.
    """
    sentences = []
    start = 0
    for match in _SENT_BOUNDARY_RE.finditer(text):
        if "." in match.group():
            preceding = text[start : match.start()].rsplit(None, 1)
            last_word = preceding[-1] if preceding else ""
            if last_word.casefold().lstrip("(\"'([{") in _ABBREVIATIONS:
                continue
        piece = text[start : match.end()].strip()
        if piece:
            sentences.append(piece)
        start = match.end()
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


@dataclass(frozen=True)
class Sentence:
    """One corpus sentence; ``tokens`` is the canonical tokenization of ``text``."""

    doc_id: str
    sent_id: int
    text: str
    tokens: tuple[str, ...]

    @classmethod
    def from_text(cls, doc_id: str, sent_id: int, text: str) -> "Sentence":
        return cls(doc_id=doc_id, sent_id=sent_id, text=text, tokens=tuple(tokenize(text)))


class Corpus:
    """Immutable ordered collection of sentences with per-document adjacency.

    Context neighbors never cross document boundaries; within a document the
    predecessor/successor chain follows ascending ``sent_id``.
    """

    def __init__(self, sentences: Iterable[Sentence], skipped_documents: int = 0):
        self.sentences: tuple[Sentence, ...] = tuple(sentences)
        self.skipped_documents = skipped_documents
        self._by_key: dict[tuple[str, int], int] = {}
        self._doc_chain: dict[str, list[int]] = {}
        for idx, sent in enumerate(self.sentences):
            key = (sent.doc_id, sent.sent_id)
            if key in self._by_key:
                raise ValueError(f"duplicate sentence key {key!r}")
            self._by_key[key] = idx
            self._doc_chain.setdefault(sent.doc_id, []).append(idx)
        self._chain_pos: dict[int, int] = {}
        for chain in self._doc_chain.values():
            chain.sort(key=lambda i: self.sentences[i].sent_id)
            for pos, idx in enumerate(chain):
                self._chain_pos[idx] = pos

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self) -> Iterator[Sentence]:
        return iter(self.sentences)

    def __contains__(self, key: tuple[str, int]) -> bool:
        return key in self._by_key

    @property
    def doc_ids(self) -> list[str]:
        return sorted(self._doc_chain)

    def sentence(self, doc_id: str, sent_id: int) -> Sentence:
        try:
            return self.sentences[self._by_key[(doc_id, sent_id)]]
        except KeyError:
            raise KeyError(f"unknown sentence ({doc_id!r}, {sent_id})") from None

    def document(self, doc_id: str) -> list[Sentence]:
        return [self.sentences[i] for i in self._doc_chain.get(doc_id, [])]

    def window(self, doc_id: str, sent_id: int, before: int, after: int) -> list[Sentence]:
        """The sentence plus up to ``before``/``after`` neighbors, clipped at
        document boundaries, in document order."""
        chain = self._doc_chain.get(doc_id)
        if chain is None:
            raise KeyError(f"unknown document {doc_id!r}")
        idx = self._by_key.get((doc_id, sent_id))
        if idx is None:
            raise KeyError(f"unknown sentence ({doc_id!r}, {sent_id})")
        pos = self._chain_pos[idx]
        lo = max(0, pos - before)
        hi = min(len(chain), pos + after + 1)
        return [self.sentences[i] for i in chain[lo:hi]]

    def predecessor(self, doc_id: str, sent_id: int) -> Sentence | None:
        window = self.window(doc_id, sent_id, 1, 0)
        return window[0] if len(window) == 2 else None

    def successor(self, doc_id: str, sent_id: int) -> Sentence | None:
        window = self.window(doc_id, sent_id, 0, 1)
        return window[-1] if len(window) == 2 else None


def ingest(raw_documents: Iterable[tuple[str, str]]) -> Corpus:
    """Split raw documents into a sentence-indexed corpus.

    Duplicate doc_ids are rejected; documents that produce no sentences are
    skipped with a warning and counted in ``Corpus.skipped_documents``.
    """
    sentences: list[Sentence] = []
    seen_docs: set[str] = set()
    skipped = 0
    for doc_id, text in raw_documents:
        if doc_id in seen_docs:
            raise ValueError(f"duplicate doc_id {doc_id!r}")
        seen_docs.add(doc_id)
        pieces = split_sentences(text) if text else []
        if not pieces:
            logger.warning("document %r is empty; skipped", doc_id)
            skipped += 1
            continue
        for sent_id, piece in enumerate(pieces):
            sentences.append(Sentence.from_text(doc_id, sent_id, piece))
    return Corpus(sentences, skipped_documents=skipped)


def load_corpus_jsonl(paths: Sequence[str | Path]) -> Corpus:
    """Load a corpus from JSON-lines files of {"doc_id", "sent_id", "text"}."""
    sentences: list[Sentence] = []
    for path in paths:
        with open(path, encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                    doc_id = record["doc_id"]
                    sent_id = int(record["sent_id"])
                    text = record["text"]
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise ValueError(f"{path}:{lineno}: malformed sentence record ({exc})") from None
                sentences.append(Sentence.from_text(str(doc_id), sent_id, text))
    return Corpus(sentences)


def load_raw_documents(paths: Sequence[str | Path]) -> Corpus:
    """Raw-text mode: each file is one document, doc_id = file stem."""
    docs = []
    for path in paths:
        path = Path(path)
        docs.append((path.stem, path.read_text(encoding="utf-8")))
    return ingest(docs)


@dataclass(frozen=True)
class CandidatePool:
    """Normalized candidate surfaces with their sentence frequencies."""

    entries: dict[str, int] = field(default_factory=dict)

    def __contains__(self, surface: str) -> bool:
        return surface in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def sentence_frequency(self, surface: str) -> int:
        return self.entries[surface]

    @property
    def surfaces(self) -> list[str]:
        return sorted(self.entries)

    def to_json(self) -> str:
        payload = {"entries": [{"surface": s, "sf": self.entries[s]} for s in self.surfaces]}
        return json.dumps(payload, indent=2, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "CandidatePool":
        payload = json.loads(text)
        return cls(entries={rec["surface"]: int(rec["sf"]) for rec in payload["entries"]})


def make_stop_filter(extra_stopwords: Iterable[str] = ()) -> Callable[[Sequence[str]], bool]:
    """Boundary filter: candidates may not begin or end with a stop word or
    bare punctuation.  ``extra_stopwords`` extends the built-in list, e.g.
    with corpus-specific boilerplate terms."""
    stopwords = STOPWORDS | {normalize(w) for w in extra_stopwords}

    def stop_filter(tokens: Sequence[str]) -> bool:
        first, last = tokens[0].casefold(), tokens[-1].casefold()
        if first in stopwords or last in stopwords:
            return False
        if not any(ch.isalnum() for ch in first) or not any(ch.isalnum() for ch in last):
            return False
        return True

    return stop_filter


default_stop_filter = make_stop_filter()


def _sentence_ngrams(tokens: Sequence[str], max_ngram: int) -> Iterator[tuple[int, int]]:
    n_tokens = len(tokens)
    for n in range(1, max_ngram + 1):
        for start in range(0, n_tokens - n + 1):
            yield start, start + n


def mine_candidates(
    corpus: Corpus,
    max_ngram: int = 4,
    min_sentence_freq: int = 3,
    stop_filter: Callable[[Sequence[str]], bool] = default_stop_filter,
) -> CandidatePool:
    """Frequency-thresholded n-gram miner.

    Counts sentence frequencies (distinct sentences containing the normalized
    form, not token frequencies) and keeps forms passing the boundary stop
    filter with sf >= ``min_sentence_freq``.  Deterministic for a fixed corpus
    and parameters.
    """
    check_positive_int(max_ngram, "max_ngram")
    check_positive_int(min_sentence_freq, "min_sentence_freq")
    sentence_sets: dict[str, set[tuple[str, int]]] = {}
    for sent in corpus:
        seen_here: set[str] = set()
        for start, end in _sentence_ngrams(sent.tokens, max_ngram):
            window = sent.tokens[start:end]
            if not stop_filter(window):
                continue
            form = normalize_tokens(window)
            if form in seen_here:
                continue
            seen_here.add(form)
            sentence_sets.setdefault(form, set()).add((sent.doc_id, sent.sent_id))
    entries = {
        form: len(sents)
        for form, sents in sorted(sentence_sets.items())
        if len(sents) >= min_sentence_freq
    }
    return CandidatePool(entries=entries)


def import_candidates(path: str | Path, corpus: Corpus) -> tuple[CandidatePool, int]:
    """Import an externally mined phrase list (one phrase per line).

    Lines starting with "#" are ignored.  Entries are normalized and
    deduplicated; sentence frequencies are recomputed against the corpus and
    phrases absent from it are dropped.  Returns (pool, dropped_count).
    """
    path = Path(path)
    raw_forms: list[str] = []
    with open(path, "rb") as handle:
        for lineno, raw in enumerate(handle, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: undecodable line ({exc})") from None
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            form = normalize(line)
            if not form:
                raise ValueError(f"{path}:{lineno}: blank phrase after normalization")
            raw_forms.append(form)
    forms = sorted(set(raw_forms))
    index = OccurrenceIndex.build(corpus, forms)
    entries: dict[str, int] = {}
    dropped = 0
    for form in forms:
        occurrences = index.lookup(form)
        if not occurrences:
            dropped += 1
            continue
        entries[form] = len({(o.doc_id, o.sent_id) for o in occurrences})
    if dropped:
        logger.warning("dropped %d imported candidates absent from the corpus", dropped)
    return CandidatePool(entries=entries), dropped


@dataclass(frozen=True, order=True)
class Occurrence:
    doc_id: str
    sent_id: int
    token_start: int
    token_end: int


class OccurrenceIndex:
    """Inverted index from normalized surface form to corpus occurrences."""

    def __init__(self, occurrences: dict[str, tuple[Occurrence, ...]]):
        self._occurrences = occurrences

    @classmethod
    def build(cls, corpus: Corpus, surfaces: Iterable[str]) -> "OccurrenceIndex":
        wanted = {normalize(s) for s in surfaces}
        lengths = sorted({len(tokenize(s)) for s in wanted if s})
        found: dict[str, list[Occurrence]] = {form: [] for form in wanted}
        for sent in corpus:
            n_tokens = len(sent.tokens)
            for n in lengths:
                if n < 1 or n > n_tokens:
                    continue
                for start in range(0, n_tokens - n + 1):
                    form = normalize_tokens(sent.tokens[start : start + n])
                    if form in found:
                        found[form].append(Occurrence(sent.doc_id, sent.sent_id, start, start + n))
        return cls({form: tuple(sorted(occ)) for form, occ in found.items() if occ})

    def lookup(self, surface: str) -> tuple[Occurrence, ...]:
        """All occurrences of the normalized surface, in (doc_id, sent_id,
        token_start) order; unknown surfaces yield an empty tuple."""
        return self._occurrences.get(normalize(surface), ())

    def surfaces(self) -> list[str]:
        return sorted(self._occurrences)

    def sentence_frequency(self, surface: str) -> int:
        return len({(o.doc_id, o.sent_id) for o in self.lookup(surface)})
