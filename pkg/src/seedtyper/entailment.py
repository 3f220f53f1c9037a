"""Hypothesis templates, contrastive loss, and scorer training.

A pseudo-labeled sample's premise should entail the hypothesis built from its
own type and none of the hypotheses built from the other seen types; training
minimizes the summed pairwise log-loss between the correct type's score and
every other seen type's score.
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import token_spans, tokenize
from .enrichment import TypeInventory
from .pseudolabel import PseudoSample
from .scorers import ScorerInterface, load_scorer, scorer_params_filename
from .validation import check_choice, check_non_negative_int, check_positive, check_positive_int

logger = logging.getLogger(__name__)

__all__ = [
    "TEMPLATE_STYLES",
    "TemplateSpec",
    "render_hypothesis",
    "find_surface_char_span",
    "contrastive_loss",
    "TrainConfig",
    "TrainingReport",
    "TrainingDivergedError",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]

TEMPLATE_STYLES = ("contextual", "taxonomic", "substitution")


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TemplateSpec:
    """Hypothesis construction style.

    contextual and taxonomic produce a standalone hypothesis sentence;
    substitution rewrites the premise itself, replacing the entity span with
    the type name, and the scorer compares original against rewritten.
    """

    style: str = "contextual"

    def __post_init__(self):
        check_choice(self.style, TEMPLATE_STYLES, "template style")


def find_surface_char_span(premise: str, surface: str) -> tuple[int, int] | None:
    """Character span of the first token-level match of ``surface`` in
    ``premise``, or None if the surface does not occur."""
    target = [t.casefold() for t in tokenize(surface)]
    if not target:
        return None
    spans = token_spans(premise)
    folded = [tok.casefold() for tok, _, _ in spans]
    n = len(target)
    for start in range(0, len(folded) - n + 1):
        if folded[start : start + n] == target:
            return spans[start][1], spans[start + n - 1][2]
    return None


def render_hypothesis(
    template: TemplateSpec,
    surface: str,
    type_name: str,
    premise: str,
    span: tuple[int, int] | None = None,
) -> tuple[str, str]:
    """Build the (premise, hypothesis) pair the scorer will see.

    For the substitution style, ``span`` is a character range into the
    premise; when omitted it is resolved to the first token-level occurrence
    of the surface.
    """
    if template.style == "contextual":
        return premise, f"In this context, {surface} is referring to {type_name}."
    if template.style == "taxonomic":
        return premise, f"{surface} is a {type_name}."
    if span is None:
        span = find_surface_char_span(premise, surface)
        if span is None:
            raise ValueError(
                f"substitution template: surface {surface!r} not found in premise"
            )
    start, end = span
    if not (0 <= start < end <= len(premise)):
        raise ValueError(f"substitution template: span {span!r} outside premise")
    return premise, premise[:start] + type_name + premise[end:]


def contrastive_loss(
    scores_correct: Sequence[float], scores_negatives: Sequence[Sequence[float]]
) -> float:
    """Pairwise binary log-loss summed over all (sample, negative) pairs,
    computed in the numerically stable form log(1 + exp(s_neg - s_pos))."""
    if len(scores_correct) != len(scores_negatives):
        raise ValueError("scores_correct and scores_negatives must align")
    total = 0.0
    for s_pos, negs in zip(scores_correct, scores_negatives):
        if len(negs) == 0:
            raise ValueError("every sample needs at least one negative score")
        for s_neg in negs:
            total += float(np.logaddexp(0.0, s_neg - s_pos))
    return total


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-5
    warmup_steps: int = 100
    weight_decay: float = 0.01
    epsilon: float = 1e-8
    batch_size: int = 4
    epochs: int = 3
    max_steps: int | None = None
    seed: int = 0
    eval_every: int = 500
    checkpoint_policy: str = "best_val"

    def __post_init__(self):
        check_positive(self.learning_rate, "learning_rate")
        check_non_negative_int(self.warmup_steps, "warmup_steps")
        check_positive_int(self.batch_size, "batch_size")
        check_non_negative_int(self.epochs, "epochs")
        if self.max_steps is not None:
            check_non_negative_int(self.max_steps, "max_steps")
        check_positive_int(self.eval_every, "eval_every")
        check_choice(self.checkpoint_policy, ("best_val", "last"), "checkpoint_policy")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "warmup_steps": self.warmup_steps,
            "weight_decay": self.weight_decay,
            "epsilon": self.epsilon,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "max_steps": self.max_steps,
            "seed": self.seed,
            "eval_every": self.eval_every,
            "checkpoint_policy": self.checkpoint_policy,
        }


def linear_schedule(step: int, total_steps: int, config: TrainConfig) -> float:
    """Linear warmup to the base rate, then linear decay to zero."""
    base = config.learning_rate
    warmup = min(config.warmup_steps, total_steps)
    if warmup and step <= warmup:
        return base * step / warmup
    if total_steps <= warmup:
        return base
    return base * (total_steps - step) / (total_steps - warmup)


@dataclass
class TrainingReport:
    loss_per_step: list[float] = field(default_factory=list)
    validation_micro_f1: list[tuple[int, float]] = field(default_factory=list)
    selected_step: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "loss_per_step": self.loss_per_step,
                "validation_micro_f1": [[step, f1] for step, f1 in self.validation_micro_f1],
                "selected_step": self.selected_step,
            },
            indent=2,
        )


def _render_sample_pairs(
    sample: PseudoSample, inventory: TypeInventory, template: TemplateSpec
) -> tuple[tuple[str, str], list[tuple[str, str]]]:
    pos = render_hypothesis(template, sample.surface, sample.type_name, sample.premise)
    negatives = [
        render_hypothesis(template, sample.surface, other, sample.premise)
        for other in inventory.seen_names
        if other != sample.type_name
    ]
    return pos, negatives


def closed_set_micro_f1(
    scorer: ScorerInterface,
    template: TemplateSpec,
    inventory: TypeInventory,
    samples: Sequence[PseudoSample],
) -> float:
    """Accuracy of argmax-over-seen-types prediction (micro-F1 equals
    accuracy for single-label prediction)."""
    if not samples:
        return 0.0
    names = inventory.seen_names
    correct = 0
    for sample in samples:
        pairs = [
            render_hypothesis(template, sample.surface, name, sample.premise) for name in names
        ]
        scores = scorer.score_pairs(pairs)
        if names[int(np.argmax(scores))] == sample.type_name:
            correct += 1
    return correct / len(samples)


def train(
    scorer: ScorerInterface,
    train_samples: Sequence[PseudoSample],
    val_samples: Sequence[PseudoSample],
    inventory: TypeInventory,
    template: TemplateSpec,
    config: TrainConfig,
) -> tuple[ScorerInterface, TrainingReport]:
    """Mini-batch AdamW training of the contrastive objective.

    For every sample the negatives are all other seen types (full
    enumeration).  The checkpoint with the best validation micro-F1 under
    closed-set inference is selected unless checkpoint_policy is "last".
    """
    if not train_samples:
        raise ValueError("train_samples must be non-empty")
    seen = set(inventory.seen_names)
    if len(seen) < 2:
        raise ValueError(
            "training needs at least 2 seen types; with a single type no negatives exist"
        )
    for sample in list(train_samples) + list(val_samples):
        if sample.type_name not in seen:
            raise ValueError(f"sample type {sample.type_name!r} is not a seen type")

    rendered = [_render_sample_pairs(s, inventory, template) for s in train_samples]
    n = len(rendered)
    steps_per_epoch = math.ceil(n / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    if config.max_steps is not None:
        total_steps = min(total_steps, config.max_steps)

    report = TrainingReport()
    best_f1 = -1.0
    best_step = 0
    best_snapshot = None

    def evaluate(step: int) -> None:
        nonlocal best_f1, best_step, best_snapshot
        if not val_samples:
            return
        f1 = closed_set_micro_f1(scorer, template, inventory, val_samples)
        report.validation_micro_f1.append((step, f1))
        if f1 > best_f1:
            best_f1 = f1
            best_step = step
            best_snapshot = scorer.snapshot()

    evaluate(0)
    scorer.begin_training(weight_decay=config.weight_decay, epsilon=config.epsilon)
    step = 0
    epoch = 0
    while step < total_steps:
        order = list(range(n))
        random.Random(config.seed * 1_000_003 + epoch).shuffle(order)
        for batch_start in range(0, n, config.batch_size):
            if step >= total_steps:
                break
            batch = [rendered[i] for i in order[batch_start : batch_start + config.batch_size]]
            pos_pairs = [pos for pos, _ in batch]
            neg_pairs = [negs for _, negs in batch]
            step += 1
            loss = scorer.training_step(pos_pairs, neg_pairs, linear_schedule(step, total_steps, config))
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss {loss!r} at step {step}/{total_steps} "
                    f"(lr={linear_schedule(step, total_steps, config):.3g})"
                )
            report.loss_per_step.append(loss)
            if step % config.eval_every == 0 and step < total_steps:
                evaluate(step)
        epoch += 1
    if total_steps > 0:
        evaluate(total_steps)

    if config.checkpoint_policy == "best_val" and best_snapshot is not None:
        scorer.restore(best_snapshot)
        report.selected_step = best_step
    else:
        report.selected_step = total_steps
    logger.info(
        "training finished: %d steps, selected step %d (val micro-F1 %.4f)",
        total_steps, report.selected_step, best_f1 if best_f1 >= 0 else float("nan"),
    )
    return scorer, report


def save_checkpoint(
    scorer: ScorerInterface,
    directory: str | Path,
    template: TemplateSpec,
    config: TrainConfig,
    report: TrainingReport,
    fingerprint: str = "",
) -> None:
    """Checkpoint layout: config snapshot, backend parameters, fingerprint,
    and selected-step metadata."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "scorer": scorer.config_dict(),
        "template": template.style,
        "train_config": config.to_dict(),
        "fingerprint": fingerprint,
        "selected_step": report.selected_step,
    }
    (directory / "config.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
    scorer.save_params(directory / scorer_params_filename(scorer.backend))


def load_checkpoint(directory: str | Path) -> tuple[ScorerInterface, dict]:
    directory = Path(directory)
    meta = json.loads((directory / "config.json").read_text(encoding="utf-8"))
    scorer = load_scorer(meta["scorer"])
    scorer.load_params(directory / scorer_params_filename(scorer.backend))
    return scorer, meta
