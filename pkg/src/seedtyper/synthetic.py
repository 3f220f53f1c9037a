"""Synthetic corpus generator for end-to-end pipeline checks.

Builds a corpus of short single-topic documents where each type owns a
disjoint vocabulary of indicator tokens and entity surfaces. Seen types carry
seed entities; unseen types appear only in the test split.

Unseen types are named with combinations of seen type name tokens and their
sentences blend the corresponding seen indicator vocabularies.  This keeps
the open-set task solvable for a purely lexical scorer: ranking an unseen
hypothesis requires features that training could actually reach, namely the
name tokens of seen types.  A transformer backend has no such constraint,
but the bundled CPU pipeline does.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import tokenize

__all__ = ["SyntheticDataset", "generate_dataset", "default_pipeline_config"]

_SEEN = ("alpha", "beta", "gamma")
# unseen type name -> seen name tokens whose vocabularies its contexts blend
_UNSEEN = {"alpha gamma": ("alpha", "gamma"), "beta gamma": ("beta", "gamma")}
# entity surface stems, all exactly 8 characters so that the toy encoder's
# sub-token chunking (chunk=8) splits every surface into [stem, 2 digits];
# same-type entities then share a content sub-token
_ENTITY_STEMS = {
    "alpha": "alphaent",
    "beta": "betaxent",
    "gamma": "gammaent",
    "alpha gamma": "agmixent",
    "beta gamma": "bgmixent",
}


@dataclass
class SyntheticDataset:
    out_dir: Path
    corpus_path: Path
    test_corpus_path: Path
    seeds_path: Path
    gold_closed_path: Path
    gold_open_path: Path
    config_path: Path
    entities: dict[str, list[str]] = field(default_factory=dict)
    vocabularies: dict[str, list[str]] = field(default_factory=dict)


def _vocabulary(name: str, size: int) -> list[str]:
    stem = name.replace(" ", "")
    return [f"{stem}term{i}" for i in range(size)]


def _entities(name: str, count: int) -> list[str]:
    stem = _ENTITY_STEMS[name]
    return [f"{stem}{i:02d}" for i in range(count)]


def _sentence(
    entity: str,
    vocab_groups: list[list[str]],
    background: list[str],
    rng: random.Random,
    noise_rate: float,
) -> str:
    # indicator slots cycle through the type's vocabulary groups (one group
    # for seen types, one per parent for blended unseen types) so blended
    # contexts stay balanced; a small background rate adds cross-type noise
    k = rng.randint(4, 6)
    groups = list(vocab_groups)
    rng.shuffle(groups)
    words = [
        rng.choice(background) if rng.random() < noise_rate else rng.choice(groups[i % len(groups)])
        for i in range(k)
    ]
    words.insert(rng.randrange(len(words) + 1), entity)
    return "the " + " ".join(words) + "."


def _write_jsonl(path: Path, records) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def generate_dataset(
    out_dir: str | Path,
    seed: int = 0,
    entities_per_type: int = 30,
    sentences_per_entity: int = 6,
    test_sentences_per_entity: int = 2,
    indicators_per_type: int = 8,
    sentences_per_doc: int = 10,
    seeds_per_type: int = 3,
    noise_rate: float = 0.08,
) -> SyntheticDataset:
    """Write corpus, test corpus, gold files, seeds file, and a ready-to-run
    pipeline config under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)

    vocabularies = {name: _vocabulary(name, indicators_per_type) for name in _SEEN}
    groups = {name: [vocabularies[name]] for name in _SEEN}
    for name, parents in _UNSEEN.items():
        groups[name] = [vocabularies[parent] for parent in parents]
        vocabularies[name] = [w for parent in parents for w in vocabularies[parent]]
    background = [w for name in _SEEN for w in vocabularies[name]]
    entities = {name: _entities(name, entities_per_type) for name in list(_SEEN) + list(_UNSEEN)}

    def build_split(tag: str, per_entity: int):
        sentences = []
        for type_name in list(_SEEN) + list(_UNSEEN):
            for entity in entities[type_name]:
                for _ in range(per_entity):
                    sentences.append(
                        (
                            type_name,
                            entity,
                            _sentence(entity, groups[type_name], background, rng, noise_rate),
                        )
                    )
        # group sentences of one type into single-topic documents
        records, gold = [], []
        doc_counters: dict[str, int] = {}
        doc_fill: dict[str, list] = {}
        by_type: dict[str, list] = {}
        for type_name, entity, text in sentences:
            by_type.setdefault(type_name, []).append((entity, text))
        for type_name, items in by_type.items():
            rng.shuffle(items)
            for entity, text in items:
                doc_key = type_name.replace(" ", "-")
                fill = doc_fill.setdefault(doc_key, [])
                if len(fill) >= sentences_per_doc:
                    doc_counters[doc_key] = doc_counters.get(doc_key, 0) + 1
                    fill = doc_fill[doc_key] = []
                doc_id = f"{tag}-{doc_key}-{doc_counters.get(doc_key, 0):03d}"
                sent_id = len(fill)
                fill.append(text)
                records.append({"doc_id": doc_id, "sent_id": sent_id, "text": text})
                tokens = tokenize(text)
                token_start = tokens.index(entity)
                span_end = token_start + 1
                gold.append(
                    {
                        "doc_id": doc_id,
                        "sent_id": sent_id,
                        "span": [token_start, span_end],
                        "mention": entity,
                        "label": type_name,
                    }
                )
        return records, gold

    corpus_records, _ = build_split("train", sentences_per_entity)
    test_records, test_gold = build_split("test", test_sentences_per_entity)

    dataset = SyntheticDataset(
        out_dir=out_dir,
        corpus_path=out_dir / "corpus.jsonl",
        test_corpus_path=out_dir / "test_corpus.jsonl",
        seeds_path=out_dir / "seeds.json",
        gold_closed_path=out_dir / "gold_closed.jsonl",
        gold_open_path=out_dir / "gold_open.jsonl",
        config_path=out_dir / "config.json",
        entities=entities,
        vocabularies=vocabularies,
    )
    _write_jsonl(dataset.corpus_path, corpus_records)
    _write_jsonl(dataset.test_corpus_path, test_records)
    _write_jsonl(dataset.gold_open_path, test_gold)
    _write_jsonl(
        dataset.gold_closed_path, [g for g in test_gold if g["label"] in _SEEN]
    )
    seeds_payload = {
        "seen": [
            {"name": name, "seeds": entities[name][:seeds_per_type]} for name in _SEEN
        ],
        "unseen": list(_UNSEEN),
    }
    dataset.seeds_path.write_text(
        json.dumps(seeds_payload, indent=2, ensure_ascii=False), encoding="utf-8"
    )
    dataset.config_path.write_text(
        json.dumps(default_pipeline_config(indicators_per_type), indent=2), encoding="utf-8"
    )
    return dataset


def default_pipeline_config(indicators_per_type: int = 8) -> dict:
    """Pipeline configuration tuned for the synthetic corpus: toy encoder and
    toy scorer, CPU-only, deterministic.  Paths are relative to the config
    file location."""
    indicator_terms = [w for name in _SEEN for w in _vocabulary(name, indicators_per_type)]
    return {
        "workdir": "artifacts",
        "seed": 7,
        "mode": "closed",
        "corpus": {"unlabeled": ["corpus.jsonl"], "test": "test_corpus.jsonl"},
        "seeds_file": "seeds.json",
        "miner": {
            "max_ngram": 1,
            "min_sentence_freq": 3,
            # indicator terms are context vocabulary, not entities
            "extra_stopwords": indicator_terms,
        },
        "encoder": {
            "backend": "toy",
            "dimension": 192,
            "max_occurrences_per_entity": 64,
            "subtoken_chunk": 8,
        },
        "enrichment": {
            "target_size_per_type": 15,
            "batch_per_iteration": 5,
            "min_sf": 3,
        },
        "pseudolabel": {
            "context_window": 1,
            "cap_per_entity": 12,
            "validation_fraction": 0.2,
        },
        "template": "contextual",
        "train": {
            "backend": "toy",
            "feature_dim": 1024,
            "learning_rate": 0.2,
            "warmup_steps": 20,
            "weight_decay": 0.0,
            "epsilon": 1e-8,
            "batch_size": 8,
            "epochs": 3,
            "eval_every": 50,
            "checkpoint_policy": "best_val",
        },
        "evaluation": {
            "test_gold": {"closed": "gold_closed.jsonl", "open": "gold_open.jsonl"}
        },
    }
