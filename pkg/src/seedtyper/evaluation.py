"""Micro/Macro-F1 scoring against gold labels and pairwise significance tests.

Metrics are computed from an explicit confusion matrix rather than delegated
to a metrics library because the macro average here follows a specific
zero-support convention: a type with no gold samples contributes F1 = 0 to
the macro mean unless it is also never predicted, in which case it is
excluded entirely.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Hashable, NamedTuple, Sequence

import numpy as np

__all__ = ["GoldSample", "EvalReport", "ZTestResult", "score", "z_test", "read_gold_jsonl"]


@dataclass(frozen=True)
class GoldSample:
    doc_id: str
    sent_id: int
    span: tuple[int, int]
    surface: str
    gold_type: str

    @property
    def sample_id(self) -> tuple:
        return (self.doc_id, self.sent_id, self.span[0], self.span[1])


def read_gold_jsonl(path) -> list[GoldSample]:
    """Gold file: JSON-lines of {"doc_id", "sent_id", "span", "mention", "label"}."""
    samples = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                samples.append(
                    GoldSample(
                        doc_id=rec["doc_id"],
                        sent_id=int(rec["sent_id"]),
                        span=(int(rec["span"][0]), int(rec["span"][1])),
                        surface=rec["mention"],
                        gold_type=rec["label"],
                    )
                )
            except (json.JSONDecodeError, KeyError, IndexError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed gold record ({exc})") from None
    return samples


@dataclass
class EvalReport:
    micro_f1: float
    macro_f1: float
    per_type: dict[str, dict[str, float]]
    confusion: dict[str, dict[str, int]]
    sample_count: int
    type_space: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "micro_f1": self.micro_f1,
                "macro_f1": self.macro_f1,
                "per_type": self.per_type,
                "confusion": self.confusion,
                "sample_count": self.sample_count,
                "type_space": self.type_space,
            },
            indent=2,
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        payload = json.loads(text)
        return cls(
            micro_f1=payload["micro_f1"],
            macro_f1=payload["macro_f1"],
            per_type=payload["per_type"],
            confusion=payload["confusion"],
            sample_count=payload["sample_count"],
            type_space=payload.get("type_space", []),
        )


def _f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def score(
    predictions: Sequence[tuple[Hashable, str]],
    gold: Sequence[GoldSample],
    type_space: Sequence[str],
) -> EvalReport:
    """Single-label multi-class metrics over the given type space.

    Prediction ids must be bijective with gold sample ids.  Micro-F1 comes
    from pooled TP/FP/FN and therefore equals accuracy; this identity is
    asserted on every call.
    """
    if not gold:
        raise ValueError("gold is empty")
    types = list(type_space)
    type_set = set(types)
    gold_by_id = {}
    for g in gold:
        if g.sample_id in gold_by_id:
            raise ValueError(f"duplicate gold sample id {g.sample_id!r}")
        if g.gold_type not in type_set:
            raise ValueError(f"gold type {g.gold_type!r} outside the type space")
        gold_by_id[g.sample_id] = g
    pred_by_id = {}
    for sample_id, predicted in predictions:
        if sample_id in pred_by_id:
            raise ValueError(f"duplicate prediction id {sample_id!r}")
        if predicted not in type_set:
            raise ValueError(f"predicted type {predicted!r} outside the type space")
        pred_by_id[sample_id] = predicted
    missing = set(gold_by_id) - set(pred_by_id)
    if missing:
        raise ValueError(f"missing predictions for {len(missing)} gold ids, e.g. {sorted(missing)[0]!r}")
    extra = set(pred_by_id) - set(gold_by_id)
    if extra:
        raise ValueError(f"predictions for {len(extra)} unknown ids, e.g. {sorted(extra)[0]!r}")

    index = {name: i for i, name in enumerate(types)}
    matrix = np.zeros((len(types), len(types)), dtype=np.int64)
    for sample_id, g in gold_by_id.items():
        matrix[index[g.gold_type], index[pred_by_id[sample_id]]] += 1

    n = len(gold)
    per_type = {}
    macro_terms = []
    total_tp = 0
    for i, name in enumerate(types):
        tp = int(matrix[i, i])
        support = int(matrix[i, :].sum())
        predicted_count = int(matrix[:, i].sum())
        fp = predicted_count - tp
        fn = support - tp
        precision, recall, f1 = _f1(tp, fp, fn)
        per_type[name] = {
            "precision": precision,
            "recall": recall,
            "f1": f1,
            "support": support,
        }
        total_tp += tp
        if support == 0 and predicted_count == 0:
            continue  # never annotated and never predicted: excluded from macro
        macro_terms.append(f1)

    micro = total_tp / n
    accuracy = sum(
        1 for sid, g in gold_by_id.items() if pred_by_id[sid] == g.gold_type
    ) / n
    assert abs(micro - accuracy) < 1e-12, "micro-F1 must equal accuracy for single-label typing"
    macro = sum(macro_terms) / len(macro_terms) if macro_terms else 0.0
    confusion = {
        g_name: {p_name: int(matrix[i, j]) for j, p_name in enumerate(types)}
        for i, g_name in enumerate(types)
    }
    return EvalReport(
        micro_f1=micro,
        macro_f1=macro,
        per_type=per_type,
        confusion=confusion,
        sample_count=n,
        type_space=types,
    )


class ZTestResult(NamedTuple):
    z: float
    p: float
    low_power: bool


def z_test(system_a_correct: int, system_b_correct: int, n: int) -> ZTestResult:
    """Unpaired two-proportion z-test with pooled variance on accuracies.

    Returns the z statistic and the two-tailed normal tail probability.
    ``low_power`` flags instances where the normal approximation is shaky
    (pooled n*p*(1-p) < 5).
    """
    if n <= 0:
        raise ValueError("n must be positive")
    for name, correct in (("system_a_correct", system_a_correct), ("system_b_correct", system_b_correct)):
        if not 0 <= correct <= n:
            raise ValueError(f"{name} must lie in [0, n]")
    a = system_a_correct / n
    b = system_b_correct / n
    pooled = (system_a_correct + system_b_correct) / (2 * n)
    low_power = n * pooled * (1 - pooled) < 5
    if system_a_correct == system_b_correct:
        return ZTestResult(z=0.0, p=1.0, low_power=low_power)
    variance = pooled * (1 - pooled) * (2 / n)
    z = (a - b) / math.sqrt(variance)
    p = math.erfc(abs(z) / math.sqrt(2))
    return ZTestResult(z=z, p=p, low_power=low_power)
