"""Command-line pipeline: per-stage subcommands with cached artifacts.

Every stage writes its output under ``workdir/<stage>/<fingerprint>/`` where
the fingerprint hashes the stage's own configuration slice plus the upstream
fingerprints.  Re-running a stage whose artifact already exists is a no-op
(``--force`` overrides); running a stage whose upstream artifact is missing
or stale fails with an explanation instead of recomputing silently.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import shutil
import sys
from pathlib import Path

from .config import PipelineConfig, file_digest, fingerprint_of
from .corpus import (
    CandidatePool,
    Corpus,
    OccurrenceIndex,
    import_candidates,
    load_corpus_jsonl,
    load_raw_documents,
    make_stop_filter,
    mine_candidates,
)
from .encoders import NeuralAdapter, ToyDeterministicAdapter, build_table, load_table, save_table
from .enrichment import EnrichmentState, TypeInventory, enrich
from .entailment import TemplateSpec, TrainConfig, load_checkpoint, save_checkpoint, train
from .evaluation import read_gold_jsonl, score
from .inference import TypingQuery, type_batch
from .pseudolabel import (
    generate,
    premise_with_char_span,
    read_samples_jsonl,
    split_samples,
    write_samples_jsonl,
)
from .scorers import NeuralScorer, ToyScorer

logger = logging.getLogger(__name__)

STAGES = ("mine", "embed", "enrich", "pseudolabel", "train", "predict", "evaluate")
SWEEPABLE = ("c", "target_size_per_type", "template")


class PipelineError(RuntimeError):
    pass


def _load_mixed_corpus(paths) -> Corpus:
    jsonl = [p for p in paths if str(p).endswith(".jsonl")]
    raw = [p for p in paths if not str(p).endswith(".jsonl")]
    sentences = []
    if jsonl:
        sentences.extend(load_corpus_jsonl(jsonl).sentences)
    if raw:
        sentences.extend(load_raw_documents(raw).sentences)
    return Corpus(sentences)


class Pipeline:
    """Executes stages against a single PipelineConfig."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self._corpus: Corpus | None = None
        self._test_corpus: Corpus | None = None
        self._inventory: TypeInventory | None = None
        self._digests: dict[str, str] = {}
        self._fingerprints: dict[str, str] = {}

    # ------------------------------------------------------------------ data

    @property
    def corpus(self) -> Corpus:
        if self._corpus is None:
            self._corpus = _load_mixed_corpus(self.config.corpus_unlabeled)
            logger.info("loaded unlabeled corpus: %d sentences", len(self._corpus))
        return self._corpus

    @property
    def test_corpus(self) -> Corpus:
        if self._test_corpus is None:
            if self.config.corpus_test is None:
                raise PipelineError("config has no corpus.test path; predict needs one")
            self._test_corpus = _load_mixed_corpus([self.config.corpus_test])
        return self._test_corpus

    @property
    def inventory(self) -> TypeInventory:
        if self._inventory is None:
            self._inventory = TypeInventory.from_json_file(self.config.seeds_file)
        return self._inventory

    def _digest(self, path) -> str:
        key = str(path)
        if key not in self._digests:
            self._digests[key] = file_digest(path)
        return self._digests[key]

    def _adapter(self):
        enc = self.config.encoder
        if enc["backend"] == "toy":
            return ToyDeterministicAdapter(
                dimension=enc["dimension"],
                seed=self.config.stage_seed("encoder"),
                subtoken_chunk=enc["subtoken_chunk"],
                max_input_tokens=enc["max_input_tokens"],
            )
        if not enc["model_name"]:
            raise PipelineError("encoder.backend 'neural' requires encoder.model_name")
        return NeuralAdapter.from_pretrained(enc["model_name"])

    def _scorer(self):
        tr = self.config.train
        if tr["backend"] == "toy":
            return ToyScorer(
                feature_dim=tr["feature_dim"],
                seed=self.config.stage_seed("scorer"),
                max_premise_tokens=tr["max_premise_tokens"],
                max_hypothesis_tokens=tr["max_hypothesis_tokens"],
            )
        if not tr["model_name"]:
            raise PipelineError("train.backend 'neural' requires train.model_name")
        return NeuralScorer.from_pretrained(
            tr["model_name"],
            seed=self.config.stage_seed("scorer"),
            max_premise_tokens=tr["max_premise_tokens"],
            max_hypothesis_tokens=tr["max_hypothesis_tokens"],
        )

    def _train_config(self) -> TrainConfig:
        tr = self.config.train
        return TrainConfig(
            learning_rate=tr["learning_rate"],
            warmup_steps=tr["warmup_steps"],
            weight_decay=tr["weight_decay"],
            epsilon=tr["epsilon"],
            batch_size=tr["batch_size"],
            epochs=tr["epochs"],
            max_steps=tr["max_steps"],
            seed=self.config.stage_seed("train"),
            eval_every=tr["eval_every"],
            checkpoint_policy=tr["checkpoint_policy"],
        )

    # ---------------------------------------------------------- fingerprints

    def _slice(self, stage: str) -> dict:
        cfg = self.config
        if stage == "mine":
            miner = dict(cfg.miner)
            if miner.get("import_path"):
                miner["import_path"] = self._digest(miner["import_path"])
            return {
                "corpus": [self._digest(p) for p in cfg.corpus_unlabeled],
                "miner": miner,
            }
        if stage == "embed":
            return {
                "upstream": {"mine": self.fingerprint("mine")},
                "encoder": cfg.encoder,
                "seeds_file": self._digest(cfg.seeds_file),
                "stage_seed": cfg.stage_seed("encoder"),
                "subsample_seed": cfg.stage_seed("embed"),
            }
        if stage == "enrich":
            return {
                "upstream": {"embed": self.fingerprint("embed")},
                "enrichment": cfg.enrichment,
                "seeds_file": self._digest(cfg.seeds_file),
            }
        if stage == "pseudolabel":
            return {
                "upstream": {"enrich": self.fingerprint("enrich")},
                "pseudolabel": cfg.pseudolabel,
                "stage_seed": cfg.stage_seed("pseudolabel"),
                "split_seed": cfg.stage_seed("split"),
            }
        if stage == "train":
            return {
                "upstream": {"pseudolabel": self.fingerprint("pseudolabel")},
                "template": cfg.template,
                "train": cfg.train,
                "stage_seed": cfg.stage_seed("train"),
                "scorer_seed": cfg.stage_seed("scorer"),
            }
        if stage == "predict":
            return {
                "upstream": {"train": self.fingerprint("train")},
                "mode": cfg.mode,
                "test_corpus": self._digest(cfg.corpus_test) if cfg.corpus_test else None,
                "gold": self._digest(cfg.gold_path(cfg.mode)),
                "context_window": cfg.pseudolabel["context_window"],
            }
        if stage == "evaluate":
            return {
                "upstream": {"predict": self.fingerprint("predict")},
                "mode": cfg.mode,
                "gold": self._digest(cfg.gold_path(cfg.mode)),
            }
        raise ValueError(f"unknown stage {stage!r}")

    def fingerprint(self, stage: str) -> str:
        if stage not in self._fingerprints:
            self._fingerprints[stage] = fingerprint_of({"stage": stage, **self._slice(stage)})
        return self._fingerprints[stage]

    def stage_dir(self, stage: str) -> Path:
        return self.config.workdir / stage / self.fingerprint(stage)

    def _require_upstream(self, stage: str, upstream: str) -> Path:
        directory = self.stage_dir(upstream)
        if (directory / "meta.json").exists():
            meta = json.loads((directory / "meta.json").read_text(encoding="utf-8"))
            if meta.get("fingerprint") != self.fingerprint(upstream):
                raise PipelineError(
                    f"stage '{stage}': artifact at {directory} carries fingerprint "
                    f"{meta.get('fingerprint')!r} but the current config requires "
                    f"{self.fingerprint(upstream)!r}; rerun '{upstream}'"
                )
            return directory
        parent = directory.parent
        stale = [p.name for p in parent.iterdir() if p.is_dir()] if parent.exists() else []
        hint = (
            f"; found {len(stale)} stale build(s) of '{upstream}' from a different "
            f"configuration — rerun '{upstream}'"
            if stale
            else f"; run '{upstream}' first"
        )
        raise PipelineError(
            f"stage '{stage}' needs the '{upstream}' artifact "
            f"{self.fingerprint(upstream)} which does not exist{hint}"
        )

    def _finish(self, stage: str, directory: Path, extra: dict | None = None) -> Path:
        meta = {
            "stage": stage,
            "fingerprint": self.fingerprint(stage),
            "slice": self._slice(stage),
        }
        if extra:
            meta.update(extra)
        (directory / "meta.json").write_text(
            json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8"
        )
        logger.info("stage %s -> %s", stage, directory)
        return directory

    def _fresh_dir(self, stage: str) -> Path:
        directory = self.stage_dir(stage)
        if directory.exists():
            shutil.rmtree(directory)
        directory.mkdir(parents=True)
        return directory

    # ---------------------------------------------------------------- stages

    def run(self, stage: str, force: bool = False) -> Path:
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        directory = self.stage_dir(stage)
        if (directory / "meta.json").exists() and not force:
            logger.info("stage %s up to date (%s); skipping", stage, self.fingerprint(stage))
            return directory
        return getattr(self, f"_run_{stage}")()

    def run_all(self, force: bool = False) -> Path:
        result = None
        for stage in STAGES:
            result = self.run(stage, force=force)
        return result

    def _run_mine(self) -> Path:
        cfg = self.config
        if cfg.miner.get("import_path"):
            pool, dropped = import_candidates(cfg.miner["import_path"], self.corpus)
            extra = {"imported": True, "dropped": dropped}
        else:
            pool = mine_candidates(
                self.corpus,
                max_ngram=cfg.miner["max_ngram"],
                min_sentence_freq=cfg.miner["min_sentence_freq"],
                stop_filter=make_stop_filter(cfg.miner["extra_stopwords"]),
            )
            extra = {"imported": False}
        directory = self._fresh_dir("mine")
        (directory / "pool.json").write_text(pool.to_json(), encoding="utf-8")
        extra["pool_size"] = len(pool)
        return self._finish("mine", directory, extra)

    def _load_pool(self) -> CandidatePool:
        directory = self._require_upstream("embed", "mine")
        return CandidatePool.from_json((directory / "pool.json").read_text(encoding="utf-8"))

    def _run_embed(self) -> Path:
        pool = self._load_pool()
        adapter = self._adapter()
        surfaces = set(pool.entries)
        for seen in self.inventory.seen:
            surfaces.update(seen.seeds)
        index = OccurrenceIndex.build(self.corpus, surfaces)
        table, skipped = build_table(
            adapter,
            self.corpus,
            index,
            surfaces,
            max_occurrences_per_entity=self.config.encoder["max_occurrences_per_entity"],
            seed=self.config.stage_seed("embed"),
        )
        directory = self._fresh_dir("embed")
        save_table(table, directory / "embeddings.bin")
        return self._finish(
            "embed",
            directory,
            {"encoder_fingerprint": adapter.fingerprint, "entities": len(table), "skipped": skipped},
        )

    def _run_enrich(self) -> Path:
        embed_dir = self._require_upstream("enrich", "embed")
        mine_dir = self._require_upstream("enrich", "mine")
        table = load_table(embed_dir / "embeddings.bin")
        pool = CandidatePool.from_json((mine_dir / "pool.json").read_text(encoding="utf-8"))
        state = enrich(
            self.inventory,
            pool,
            table,
            target_size_per_type=self.config.enrichment["target_size_per_type"],
            batch_per_iteration=self.config.enrichment["batch_per_iteration"],
            min_sf=self.config.enrichment["min_sf"],
        )
        directory = self._fresh_dir("enrich")
        (directory / "enrichment.json").write_text(state.to_json(), encoding="utf-8")
        return self._finish(
            "enrich", directory, {"iterations": state.iterations, "shortfall": state.shortfall}
        )

    def _run_pseudolabel(self) -> Path:
        enrich_dir = self._require_upstream("pseudolabel", "enrich")
        state = EnrichmentState.from_json(
            (enrich_dir / "enrichment.json").read_text(encoding="utf-8")
        )
        members = [m for t in state.types for m in t.members]
        index = OccurrenceIndex.build(self.corpus, members)
        samples = generate(
            self.corpus,
            index,
            state,
            self.inventory,
            c=self.config.pseudolabel["context_window"],
            cap_per_entity=self.config.pseudolabel["cap_per_entity"],
            seed=self.config.stage_seed("pseudolabel"),
        )
        train_set, val_set = split_samples(
            samples,
            self.config.pseudolabel["validation_fraction"],
            seed=self.config.stage_seed("split"),
        )
        directory = self._fresh_dir("pseudolabel")
        write_samples_jsonl(train_set, directory / "train.jsonl")
        write_samples_jsonl(val_set, directory / "val.jsonl")
        return self._finish(
            "pseudolabel", directory, {"train_samples": len(train_set), "val_samples": len(val_set)}
        )

    def _run_train(self) -> Path:
        sample_dir = self._require_upstream("train", "pseudolabel")
        train_set = read_samples_jsonl(sample_dir / "train.jsonl")
        val_set = read_samples_jsonl(sample_dir / "val.jsonl")
        scorer = self._scorer()
        template = TemplateSpec(style=self.config.template)
        scorer, report = train(
            scorer, train_set, val_set, self.inventory, template, self._train_config()
        )
        directory = self._fresh_dir("train")
        save_checkpoint(
            scorer,
            directory / "checkpoint",
            template,
            self._train_config(),
            report,
            fingerprint=self.fingerprint("train"),
        )
        (directory / "training_report.json").write_text(report.to_json(), encoding="utf-8")
        return self._finish("train", directory, {"selected_step": report.selected_step})

    def _run_predict(self) -> Path:
        train_dir = self._require_upstream("predict", "train")
        scorer, meta = load_checkpoint(train_dir / "checkpoint")
        template = TemplateSpec(style=meta["template"])
        gold = read_gold_jsonl(self.config.gold_path(self.config.mode))
        c = self.config.pseudolabel["context_window"]
        queries = []
        for g in gold:
            premise, char_span = premise_with_char_span(
                self.test_corpus, g.doc_id, g.sent_id, g.span, c
            )
            queries.append(
                TypingQuery(surface=g.surface, premise=premise, span=char_span, mode=self.config.mode)
            )
        results = type_batch(scorer, template, self.inventory, queries)
        type_order = self.inventory.type_names(self.config.mode)
        directory = self._fresh_dir("predict")
        with open(directory / "predictions.jsonl", "w", encoding="utf-8") as handle:
            for g, result in zip(gold, results):
                scores = {name: result.score_of(name) for name in type_order}
                record = {
                    "surface": g.surface,
                    "doc_id": g.doc_id,
                    "sent_id": g.sent_id,
                    "span": [g.span[0], g.span[1]],
                    "predicted": result.predicted_type,
                    "scores": scores,
                }
                handle.write(json.dumps(record, ensure_ascii=False) + "\n")
        return self._finish("predict", directory, {"queries": len(queries)})

    def _run_evaluate(self) -> Path:
        predict_dir = self._require_upstream("evaluate", "predict")
        gold = read_gold_jsonl(self.config.gold_path(self.config.mode))
        predictions = []
        with open(predict_dir / "predictions.jsonl", encoding="utf-8") as handle:
            for line in handle:
                rec = json.loads(line)
                sample_id = (rec["doc_id"], rec["sent_id"], rec["span"][0], rec["span"][1])
                predictions.append((sample_id, rec["predicted"]))
        report = score(predictions, gold, self.inventory.type_names(self.config.mode))
        directory = self._fresh_dir("evaluate")
        (directory / "report.json").write_text(report.to_json(), encoding="utf-8")
        logger.info(
            "evaluation (%s): micro-F1 %.4f macro-F1 %.4f on %d samples",
            self.config.mode, report.micro_f1, report.macro_f1, report.sample_count,
        )
        return self._finish(
            "evaluate", directory, {"micro_f1": report.micro_f1, "macro_f1": report.macro_f1}
        )


def _set_sweep_value(config: PipelineConfig, parameter: str, value) -> PipelineConfig:
    if parameter == "c":
        section = dict(config.pseudolabel)
        section["context_window"] = int(value)
        return dataclasses.replace(config, pseudolabel=section)
    if parameter == "target_size_per_type":
        section = dict(config.enrichment)
        section["target_size_per_type"] = int(value)
        return dataclasses.replace(config, enrichment=section)
    if parameter == "template":
        return dataclasses.replace(config, template=str(value))
    raise ValueError(f"unsupported sweep parameter {parameter!r}")


def sweep(config: PipelineConfig, parameter: str, values, force: bool = False) -> list[dict]:
    """Run the pipeline once per value, reusing cached artifacts of stages the
    parameter does not affect; failures are recorded and the sweep continues."""
    if not values:
        raise ValueError("sweep needs at least one value")
    rows = []
    for value in values:
        row = {"value": value}
        try:
            run_config = _set_sweep_value(config, parameter, value)
            evaluate_dir = Pipeline(run_config).run_all(force=force)
            payload = json.loads((evaluate_dir / "report.json").read_text(encoding="utf-8"))
            row.update(
                micro_f1=payload["micro_f1"],
                macro_f1=payload["macro_f1"],
                report=str(evaluate_dir / "report.json"),
            )
        except Exception as exc:  # keep sweeping remaining values
            logger.error("sweep value %r failed: %s", value, exc)
            row["error"] = str(exc)
        rows.append(row)
    out_path = config.workdir / f"sweep_{parameter}.json"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(
        json.dumps({"parameter": parameter, "rows": rows}, indent=2), encoding="utf-8"
    )
    header = f"{parameter:>24} | micro-F1 | macro-F1"
    print(header)
    print("-" * len(header))
    for row in rows:
        if "error" in row:
            print(f"{str(row['value']):>24} | failed: {row['error']}")
        else:
            print(f"{str(row['value']):>24} | {row['micro_f1']:8.4f} | {row['macro_f1']:8.4f}")
    return rows


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seedtyper",
        description="Seed-guided entity typing pipeline: mine, embed, enrich, "
        "pseudolabel, train, predict, evaluate.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="path to the pipeline config JSON")
    common.add_argument("--force", action="store_true", help="rebuild even if artifacts exist")
    common.add_argument("--seed", type=int, default=None, help="override the top-level seed")
    common.add_argument("--mode", choices=["closed", "open"], default=None, help="override mode")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        sub.add_parser(stage, parents=[common], help=f"run the {stage} stage")
    sub.add_parser("run-all", parents=[common], help="run every stage in order")
    sweep_parser = sub.add_parser("sweep", parents=[common], help="compare hyperparameter values")
    sweep_parser.add_argument("--parameter", required=True, choices=SWEEPABLE)
    sweep_parser.add_argument(
        "--values", required=True, help="comma-separated values, e.g. 0,1,2 or contextual,taxonomic"
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    config = PipelineConfig.from_file(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    if args.mode is not None:
        config = dataclasses.replace(config, mode=args.mode)
    try:
        if args.command == "run-all":
            evaluate_dir = Pipeline(config).run_all(force=args.force)
            print(f"report: {evaluate_dir / 'report.json'}")
        elif args.command == "sweep":
            raw_values = [v.strip() for v in args.values.split(",") if v.strip()]
            values = [int(v) if args.parameter != "template" else v for v in raw_values]
            sweep(config, args.parameter, values, force=args.force)
        else:
            directory = Pipeline(config).run(args.command, force=args.force)
            print(f"artifact: {directory}")
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
