import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seedtyper.corpus import (
    Corpus,
    OccurrenceIndex,
    default_stop_filter,
    import_candidates,
    ingest,
    load_corpus_jsonl,
    make_stop_filter,
    mine_candidates,
    normalize,
    normalize_tokens,
    split_sentences,
    token_spans,
    tokenize,
)

from conftest import corpus_from_texts


class TestTokenizer:
    def test_software_entities_stay_whole(self):
        text = "Visual Studio 17.6.2 for Mac (c++, c#) with getCheckedItemPositions()."
        assert tokenize(text) == [
            "Visual", "Studio", "17.6.2", "for", "Mac", "(", "c++", ",",
            "c#", ")", "with", "getCheckedItemPositions()", ".",
        ]

    def test_underscore_and_dash(self):
        assert tokenize("my_var asp.net-core x") == ["my_var", "asp.net-core", "x"]

    def test_token_spans_align(self):
        text = "the hash map."
        spans = token_spans(text)
        assert [t for t, _, _ in spans] == tokenize(text)
        assert all(text[s:e] == tok for tok, s, e in spans)

    @given(st.text(max_size=80))
    @settings(max_examples=300)
    def test_round_trip_idempotent(self, text):
        tokens = tokenize(text)
        assert tokenize(" ".join(tokens)) == tokens


class TestSentenceSplitter:
    def test_two_sentences(self):
        assert split_sentences("A. B.") == ["A.", "B."]

    def test_abbreviation_guard(self):
        assert split_sentences("Use e.g. java here. Done now!") == [
            "Use e.g. java here.",
            "Done now!",
        ]

    def test_version_number_not_split(self):
        assert split_sentences("Upgrade to 17.6.2 today. Then restart.") == [
            "Upgrade to 17.6.2 today.",
            "Then restart.",
        ]

    def test_no_terminal_punctuation(self):
        assert split_sentences("no punctuation at all") == ["no punctuation at all"]


class TestNormalize:
    def test_collapse_and_casefold(self):
        assert normalize("  Hash   Map ") == "hash map"
        assert normalize("Java") == "java"

    def test_tokens_join(self):
        assert normalize_tokens(["Hash", "Map"]) == "hash map"


class TestIngest:
    def test_singleton_document(self):
        corpus = ingest([("d", "One sentence only")])
        assert len(corpus) == 1
        assert corpus.predecessor("d", 0) is None
        assert corpus.successor("d", 0) is None

    def test_adjacency_within_document(self):
        corpus = ingest([("d", "A. B.")])
        assert len(corpus) == 2
        assert corpus.successor("d", 0).sent_id == 1
        assert corpus.predecessor("d", 1).sent_id == 0

    def test_no_cross_document_adjacency(self):
        corpus = ingest([("d1", "First."), ("d2", "Second.")])
        assert corpus.successor("d1", 0) is None
        assert corpus.predecessor("d2", 0) is None

    def test_duplicate_doc_id_rejected(self):
        with pytest.raises(ValueError, match="dup"):
            ingest([("dup", "A."), ("dup", "B.")])

    def test_empty_document_skipped_with_count(self):
        corpus = ingest([("a", "Text."), ("b", "   "), ("c", "")])
        assert len(corpus) == 1
        assert corpus.skipped_documents == 2


class TestMineCandidates:
    def test_sentence_frequency_threshold(self):
        docs = {"d": [f"the hash map number {i}." for i in range(5)] + ["another one."]}
        pool = mine_candidates(corpus_from_texts(docs), max_ngram=2, min_sentence_freq=3)
        assert "hash map" in pool
        assert pool.sentence_frequency("hash map") == 5

    def test_stopword_filtered(self):
        docs = {"d": ["the the the cat." for _ in range(4)]}
        pool = mine_candidates(corpus_from_texts(docs), max_ngram=1, min_sentence_freq=3)
        assert "the" not in pool
        assert "cat" in pool

    def test_repeat_in_one_sentence_counts_once(self):
        # brute-force sentence-set oracle over a 10-sentence toy corpus
        texts = [
            "java java twice.",
            "java once more.",
            "java again here.",
            "nothing relevant.",
            "java java java thrice.",
            "still nothing.",
            "java present.",
            "absent word.",
            "java speaking.",
            "last filler line.",
        ]
        corpus = corpus_from_texts({"d": texts})
        oracle_sf = sum(1 for t in texts if "java" in tokenize(t))
        pool = mine_candidates(corpus, max_ngram=1, min_sentence_freq=1)
        assert pool.sentence_frequency("java") == oracle_sf == 6

    def test_empty_corpus(self):
        assert len(mine_candidates(Corpus([]), max_ngram=2, min_sentence_freq=1)) == 0

    def test_deterministic(self, toy_corpus):
        a = mine_candidates(toy_corpus, max_ngram=3, min_sentence_freq=1)
        b = mine_candidates(toy_corpus, max_ngram=3, min_sentence_freq=1)
        assert a.entries == b.entries

    def test_substring_entries_retained(self, toy_corpus):
        pool = mine_candidates(toy_corpus, max_ngram=2, min_sentence_freq=2)
        assert "hash map" in pool and "map" in pool

    def test_extra_stopwords(self, toy_corpus):
        pool = mine_candidates(
            toy_corpus, max_ngram=1, min_sentence_freq=1,
            stop_filter=make_stop_filter(["Java"]),
        )
        assert "java" not in pool
        assert default_stop_filter(["java"])


class TestImportCandidates(object):
    def test_absent_dropped_and_reported(self, toy_corpus, tmp_path):
        path = tmp_path / "phrases.txt"
        path.write_text("java\nzzz-nonexistent\n", encoding="utf-8")
        pool, dropped = import_candidates(path, toy_corpus)
        assert set(pool.entries) == {"java"}
        assert dropped == 1

    def test_duplicates_merge(self, toy_corpus, tmp_path):
        path = tmp_path / "phrases.txt"
        path.write_text("java\njava\n", encoding="utf-8")
        pool, _ = import_candidates(path, toy_corpus)
        assert list(pool.entries) == ["java"]

    def test_normalization(self, toy_corpus, tmp_path):
        path = tmp_path / "phrases.txt"
        path.write_text("Java\n# a comment\n\n", encoding="utf-8")
        pool, _ = import_candidates(path, toy_corpus)
        assert "java" in pool

    def test_sentence_frequency_recomputed(self, toy_corpus, tmp_path):
        path = tmp_path / "phrases.txt"
        path.write_text("java\nhash map\n", encoding="utf-8")
        pool, _ = import_candidates(path, toy_corpus)
        assert pool.sentence_frequency("java") == 3
        assert pool.sentence_frequency("hash map") == 2

    def test_undecodable_line_errors_with_number(self, toy_corpus, tmp_path):
        path = tmp_path / "phrases.txt"
        path.write_bytes(b"java\n\xff\xfe broken\n")
        with pytest.raises(ValueError, match=":2"):
            import_candidates(path, toy_corpus)


class TestOccurrenceIndex:
    def test_single_occurrence(self, toy_corpus):
        index = OccurrenceIndex.build(toy_corpus, ["python"])
        occs = index.lookup("python")
        assert len(occs) == 1
        assert (occs[0].doc_id, occs[0].sent_id) == ("d1", 2)

    def test_unknown_surface_empty(self, toy_corpus):
        index = OccurrenceIndex.build(toy_corpus, ["python"])
        assert index.lookup("not there") == ()

    def test_multi_token_span_against_scan_oracle(self, toy_corpus):
        index = OccurrenceIndex.build(toy_corpus, ["hash map"])
        # independent scan oracle
        expected = []
        for sent in toy_corpus:
            for start in range(len(sent.tokens) - 1):
                if normalize_tokens(sent.tokens[start : start + 2]) == "hash map":
                    expected.append((sent.doc_id, sent.sent_id, start, start + 2))
        got = [(o.doc_id, o.sent_id, o.token_start, o.token_end) for o in index.lookup("hash map")]
        assert got == sorted(expected)
        assert got[0][2:] == (1, 3)  # "the hash map stores pairs." -> tokens 1..3

    def test_span_reconstruction_invariant(self, toy_corpus):
        pool = mine_candidates(toy_corpus, max_ngram=3, min_sentence_freq=1)
        index = OccurrenceIndex.build(toy_corpus, pool.entries)
        for surface in pool.surfaces:
            occs = index.lookup(surface)
            assert occs, surface
            distinct = {(o.doc_id, o.sent_id) for o in occs}
            assert len(distinct) == pool.sentence_frequency(surface)
            for occ in occs:
                sent = toy_corpus.sentence(occ.doc_id, occ.sent_id)
                assert normalize_tokens(sent.tokens[occ.token_start : occ.token_end]) == surface

    def test_lookup_order_canonical(self):
        corpus = corpus_from_texts({"b": ["x y x y."], "a": ["y x."]})
        index = OccurrenceIndex.build(corpus, ["x"])
        keys = [(o.doc_id, o.sent_id, o.token_start) for o in index.lookup("x")]
        assert keys == sorted(keys)


class TestJsonlLoading:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text(
            '{"doc_id": "d", "sent_id": 0, "text": "First one."}\n'
            '{"doc_id": "d", "sent_id": 1, "text": "Second one."}\n',
            encoding="utf-8",
        )
        corpus = load_corpus_jsonl([path])
        assert len(corpus) == 2
        assert corpus.successor("d", 0).text == "Second one."

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"doc_id": "d"}\n', encoding="utf-8")
        with pytest.raises(ValueError, match=":1"):
            load_corpus_jsonl([path])
