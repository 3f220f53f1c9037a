import pytest

from seedtyper.corpus import Corpus, Sentence


def corpus_from_texts(docs: dict[str, list[str]]) -> Corpus:
    """Corpus from explicit per-document sentence lists (no splitting)."""
    sentences = [
        Sentence.from_text(doc_id, sent_id, text)
        for doc_id, texts in docs.items()
        for sent_id, text in enumerate(texts)
    ]
    return Corpus(sentences)


@pytest.fixture
def toy_corpus() -> Corpus:
    return corpus_from_texts(
        {
            "d1": [
                "java is a language.",
                "the hash map stores pairs.",
                "python and java differ.",
            ],
            "d2": [
                "a linked list is not a hash map.",
                "java java appears twice here.",
            ],
        }
    )
