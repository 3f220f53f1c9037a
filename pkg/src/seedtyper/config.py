"""Pipeline configuration: one JSON file with a section per stage.

Relative paths are resolved against the directory containing the config
file.  All randomness flows from the single top-level ``seed``; stages that
use randomness derive their own sub-seed from it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .validation import check_choice, check_non_negative_int, check_open_fraction, check_positive_int

__all__ = ["PipelineConfig", "canonical_json", "fingerprint_of", "file_digest"]

_DEFAULTS: dict[str, dict[str, Any]] = {
    "miner": {
        "max_ngram": 4,
        "min_sentence_freq": 3,
        "import_path": None,
        "extra_stopwords": [],
    },
    "encoder": {
        "backend": "toy",
        "dimension": 64,
        "max_occurrences_per_entity": 64,
        "model_name": None,
        "subtoken_chunk": None,
        "max_input_tokens": 256,
    },
    "enrichment": {"target_size_per_type": 50, "batch_per_iteration": 5, "min_sf": 3},
    "pseudolabel": {"context_window": 1, "cap_per_entity": 100, "validation_fraction": 0.1},
    "train": {
        "backend": "toy",
        "feature_dim": 256,
        "learning_rate": 5e-5,
        "warmup_steps": 100,
        "weight_decay": 0.01,
        "epsilon": 1e-8,
        "batch_size": 4,
        "epochs": 3,
        "max_steps": None,
        "eval_every": 500,
        "checkpoint_policy": "best_val",
        "model_name": None,
        "max_premise_tokens": 462,
        "max_hypothesis_tokens": 50,
    },
}


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def fingerprint_of(payload: Any) -> str:
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()[:16]


def file_digest(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _merged(section: str, overrides: Mapping | None) -> dict:
    merged = dict(_DEFAULTS[section])
    for key, value in (overrides or {}).items():
        if key not in merged:
            raise ValueError(f"unknown key {key!r} in config section {section!r}")
        merged[key] = value
    return merged


@dataclass
class PipelineConfig:
    workdir: Path
    corpus_unlabeled: list[Path]
    seeds_file: Path
    corpus_test: Path | None = None
    test_gold: dict[str, Path] = field(default_factory=dict)
    mode: str = "closed"
    seed: int = 42
    template: str = "contextual"
    miner: dict = field(default_factory=lambda: _merged("miner", None))
    encoder: dict = field(default_factory=lambda: _merged("encoder", None))
    enrichment: dict = field(default_factory=lambda: _merged("enrichment", None))
    pseudolabel: dict = field(default_factory=lambda: _merged("pseudolabel", None))
    train: dict = field(default_factory=lambda: _merged("train", None))

    def __post_init__(self):
        check_choice(self.mode, ("closed", "open"), "mode")
        check_choice(self.template, ("contextual", "taxonomic", "substitution"), "template")
        check_positive_int(self.miner["max_ngram"], "miner.max_ngram")
        check_positive_int(self.miner["min_sentence_freq"], "miner.min_sentence_freq")
        check_positive_int(self.encoder["dimension"], "encoder.dimension")
        check_positive_int(
            self.encoder["max_occurrences_per_entity"], "encoder.max_occurrences_per_entity"
        )
        check_choice(self.encoder["backend"], ("toy", "neural"), "encoder.backend")
        check_positive_int(self.enrichment["target_size_per_type"], "enrichment.target_size_per_type")
        check_positive_int(self.enrichment["batch_per_iteration"], "enrichment.batch_per_iteration")
        check_positive_int(self.enrichment["min_sf"], "enrichment.min_sf")
        check_non_negative_int(self.pseudolabel["context_window"], "pseudolabel.context_window")
        check_positive_int(self.pseudolabel["cap_per_entity"], "pseudolabel.cap_per_entity")
        check_open_fraction(
            self.pseudolabel["validation_fraction"], "pseudolabel.validation_fraction"
        )
        check_choice(self.train["backend"], ("toy", "neural"), "train.backend")
        if not self.corpus_unlabeled:
            raise ValueError("corpus.unlabeled must list at least one file")

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        payload = json.loads(path.read_text(encoding="utf-8"))
        return cls.from_dict(payload, base_dir=path.parent)

    @classmethod
    def from_dict(cls, payload: Mapping, base_dir: str | Path = ".") -> "PipelineConfig":
        base = Path(base_dir)

        def resolve(p) -> Path:
            p = Path(p)
            return p if p.is_absolute() else base / p

        corpus = payload.get("corpus", {})
        gold_raw = payload.get("evaluation", {}).get("test_gold", {})
        if isinstance(gold_raw, (str, Path)):
            gold = {"closed": resolve(gold_raw), "open": resolve(gold_raw)}
        else:
            gold = {mode: resolve(p) for mode, p in gold_raw.items()}
        return cls(
            workdir=resolve(payload.get("workdir", "artifacts")),
            corpus_unlabeled=[resolve(p) for p in corpus.get("unlabeled", [])],
            corpus_test=resolve(corpus["test"]) if corpus.get("test") else None,
            seeds_file=resolve(payload["seeds_file"]),
            test_gold=gold,
            mode=payload.get("mode", "closed"),
            seed=int(payload.get("seed", 42)),
            template=payload.get("template", "contextual"),
            miner=_merged("miner", payload.get("miner")),
            encoder=_merged("encoder", payload.get("encoder")),
            enrichment=_merged("enrichment", payload.get("enrichment")),
            pseudolabel=_merged("pseudolabel", payload.get("pseudolabel")),
            train=_merged("train", payload.get("train")),
        )

    def stage_seed(self, stage: str) -> int:
        digest = hashlib.blake2b(f"{self.seed}:{stage}".encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little") % (2**31)

    def gold_path(self, mode: str) -> Path:
        if mode not in self.test_gold:
            raise ValueError(f"no test_gold path configured for mode {mode!r}")
        return self.test_gold[mode]
