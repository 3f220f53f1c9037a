"""Trainable premise/hypothesis scorers.

Two backends implement the same contract: a fully specified hashed
bag-of-tokens bilinear model for exact, CPU-only tests and pipelines, and a
transformer cross-encoder with a scalar head for full-scale runs.
"""

from __future__ import annotations

import hashlib
from abc import ABC, abstractmethod
from typing import Sequence

import numpy as np

from .corpus import tokenize

__all__ = ["ScorerInterface", "ToyScorer", "NeuralScorer", "load_scorer"]

Pair = tuple[str, str]


class ScorerInterface(ABC):
    """Scalar premise/hypothesis scorer with a gradient-training contract.

    ``score`` must be finite and deterministic in evaluation mode.  Training
    happens through ``training_step``, which consumes one batch of positive
    pairs plus the per-sample negative pairs, applies one AdamW update at the
    given learning rate, and returns the batch loss.
    """

    backend: str
    max_premise_tokens: int
    max_hypothesis_tokens: int

    @abstractmethod
    def score(self, premise: str, hypothesis: str) -> float: ...

    def score_pairs(self, pairs: Sequence[Pair]) -> np.ndarray:
        return np.array([self.score(p, h) for p, h in pairs], dtype=np.float64)

    @abstractmethod
    def begin_training(self, weight_decay: float, epsilon: float) -> None: ...

    @abstractmethod
    def training_step(
        self, pos_pairs: Sequence[Pair], neg_pairs: Sequence[Sequence[Pair]], lr: float
    ) -> float: ...

    @abstractmethod
    def snapshot(self): ...

    @abstractmethod
    def restore(self, snapshot) -> None: ...

    @abstractmethod
    def save_params(self, path) -> None: ...

    @abstractmethod
    def load_params(self, path) -> None: ...

    def config_dict(self) -> dict:
        return {"backend": self.backend}


def _pairwise_loss_grads(
    s_pos: np.ndarray, s_neg: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Summed pairwise log-loss and its gradients w.r.t. the scores.

    s_pos has shape (B,), s_neg shape (B, k).  Uses the stable form
    log(1 + exp(s_neg - s_pos)).
    """
    delta = s_neg - s_pos[:, None]
    loss = float(np.logaddexp(0.0, delta).sum())
    sig = 1.0 / (1.0 + np.exp(-delta))
    d_neg = sig
    d_pos = -sig.sum(axis=1)
    return loss, d_pos, d_neg


class ToyScorer(ScorerInterface):
    """Hashed bag-of-tokens bilinear scorer, fully specified for exact tests.

    score(p, h) = u . f(p) + v . f(h) + f(p)^T W f(h) where f maps text to
    token-count features over ``feature_dim`` hash buckets (tokens are
    case-folded before hashing).  Parameters start at zero, so an untrained
    scorer gives every pair score 0.

    Training updates are plain mini-batch gradient descent with decoupled
    weight decay.  Adaptive per-coordinate optimizers are deliberately
    avoided here: they normalize away the asymmetry between same-type
    reinforcement and cross-type suppression in the bilinear weights, and
    that asymmetry is the only signal this model has for ranking type names
    it never saw during training.
    """

    backend = "toy"

    def __init__(self, feature_dim: int = 256, seed: int = 0,
                 max_premise_tokens: int = 462, max_hypothesis_tokens: int = 50):
        self.feature_dim = feature_dim
        self.seed = seed
        self.max_premise_tokens = max_premise_tokens
        self.max_hypothesis_tokens = max_hypothesis_tokens
        self.u = np.zeros(feature_dim)
        self.v = np.zeros(feature_dim)
        self.W = np.zeros((feature_dim, feature_dim))
        self._weight_decay: float | None = None
        self._feature_cache: dict[tuple[str, int], np.ndarray] = {}

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(
            f"{self.seed}:{token}".encode("utf-8"), digest_size=8
        ).digest()
        return int.from_bytes(digest, "little") % self.feature_dim

    def features(self, text: str, max_tokens: int) -> np.ndarray:
        key = (text, max_tokens)
        cached = self._feature_cache.get(key)
        if cached is not None:
            return cached
        vec = np.zeros(self.feature_dim)
        for token in tokenize(text)[:max_tokens]:
            vec[self._bucket(token.casefold())] += 1.0
        if len(self._feature_cache) > 100_000:
            self._feature_cache.clear()
        self._feature_cache[key] = vec
        return vec

    def _pair_features(self, pair: Pair) -> tuple[np.ndarray, np.ndarray]:
        premise, hypothesis = pair
        return (
            self.features(premise, self.max_premise_tokens),
            self.features(hypothesis, self.max_hypothesis_tokens),
        )

    def score(self, premise: str, hypothesis: str) -> float:
        fp, fh = self._pair_features((premise, hypothesis))
        return float(self.u @ fp + self.v @ fh + fp @ self.W @ fh)

    def loss_and_gradients(
        self, pos_pairs: Sequence[Pair], neg_pairs: Sequence[Sequence[Pair]]
    ) -> tuple[float, dict[str, np.ndarray]]:
        """Mean-per-batch contrastive loss and analytic parameter gradients."""
        batch = len(pos_pairs)
        s_pos = np.empty(batch)
        pos_feats = []
        neg_feats: list[list[tuple[np.ndarray, np.ndarray]]] = []
        n_neg = len(neg_pairs[0])
        s_neg = np.empty((batch, n_neg))
        for b, pair in enumerate(pos_pairs):
            fp, fh = self._pair_features(pair)
            pos_feats.append((fp, fh))
            s_pos[b] = self.u @ fp + self.v @ fh + fp @ self.W @ fh
            row = []
            for j, neg in enumerate(neg_pairs[b]):
                nfp, nfh = self._pair_features(neg)
                row.append((nfp, nfh))
                s_neg[b, j] = self.u @ nfp + self.v @ nfh + nfp @ self.W @ nfh
            neg_feats.append(row)
        loss_sum, d_pos, d_neg = _pairwise_loss_grads(s_pos, s_neg)
        du = np.zeros_like(self.u)
        dv = np.zeros_like(self.v)
        dW = np.zeros_like(self.W)
        for b in range(batch):
            fp, fh = pos_feats[b]
            du += d_pos[b] * fp
            dv += d_pos[b] * fh
            dW += np.outer(d_pos[b] * fp, fh)
            for j, (nfp, nfh) in enumerate(neg_feats[b]):
                du += d_neg[b, j] * nfp
                dv += d_neg[b, j] * nfh
                dW += np.outer(d_neg[b, j] * nfp, nfh)
        scale = 1.0 / batch
        grads = {"u": du * scale, "v": dv * scale, "W": dW * scale}
        return loss_sum * scale, grads

    def batch_loss(self, pos_pairs, neg_pairs) -> float:
        loss, _ = self.loss_and_gradients(pos_pairs, neg_pairs)
        return loss

    def begin_training(self, weight_decay: float, epsilon: float) -> None:
        # epsilon only matters for adaptive optimizers; unused by plain SGD
        self._weight_decay = weight_decay

    def _params(self) -> dict[str, np.ndarray]:
        return {"u": self.u, "v": self.v, "W": self.W}

    def training_step(self, pos_pairs, neg_pairs, lr: float) -> float:
        if self._weight_decay is None:
            raise RuntimeError("call begin_training() before training_step()")
        loss, grads = self.loss_and_gradients(pos_pairs, neg_pairs)
        for name, param in self._params().items():
            param -= lr * (grads[name] + self._weight_decay * param)
        return loss

    def snapshot(self):
        return {"u": self.u.copy(), "v": self.v.copy(), "W": self.W.copy()}

    def restore(self, snapshot) -> None:
        self.u = snapshot["u"].copy()
        self.v = snapshot["v"].copy()
        self.W = snapshot["W"].copy()

    def save_params(self, path) -> None:
        np.savez(path, u=self.u, v=self.v, W=self.W)

    def load_params(self, path) -> None:
        data = np.load(path)
        self.u, self.v, self.W = data["u"].copy(), data["v"].copy(), data["W"].copy()
        if self.u.shape != (self.feature_dim,):
            raise ValueError(
                f"checkpoint feature dimension {self.u.shape[0]} does not match "
                f"configured {self.feature_dim}"
            )

    def config_dict(self) -> dict:
        return {
            "backend": self.backend,
            "feature_dim": self.feature_dim,
            "seed": self.seed,
            "max_premise_tokens": self.max_premise_tokens,
            "max_hypothesis_tokens": self.max_hypothesis_tokens,
        }


class NeuralScorer(ScorerInterface):
    """Cross-encoder: [CLS] premise [SEP] hypothesis [SEP] through a
    transformer, scored by a linear layer on the [CLS] representation."""

    backend = "neural"

    def __init__(self, model, tokenizer, device: str = "cpu", seed: int = 0,
                 max_premise_tokens: int = 462, max_hypothesis_tokens: int = 50):
        import torch

        self._torch = torch
        self.model = model.to(device)
        self.tokenizer = tokenizer
        self.device = device
        self.seed = seed
        self.max_premise_tokens = max_premise_tokens
        self.max_hypothesis_tokens = max_hypothesis_tokens
        generator = torch.Generator().manual_seed(seed)
        hidden = int(model.config.hidden_size)
        self.head = torch.nn.Linear(hidden, 1, bias=False)
        with torch.no_grad():
            self.head.weight.normal_(0.0, 0.02, generator=generator)
        self.head.to(device)
        self._optimizer = None
        name = getattr(model.config, "name_or_path", "") or "local"
        self.model_name = name

    @classmethod
    def from_pretrained(cls, model_name: str, device: str = "cpu", **kwargs) -> "NeuralScorer":
        from transformers import AutoModel, AutoTokenizer

        scorer = cls(
            AutoModel.from_pretrained(model_name),
            AutoTokenizer.from_pretrained(model_name),
            device=device,
            **kwargs,
        )
        scorer.model_name = model_name
        return scorer

    def _encode_batch(self, pairs: Sequence[Pair]):
        # [CLS] premise [SEP] hypothesis [SEP], each segment truncated to its
        # own token budget
        torch = self._torch
        cls_id = self.tokenizer.cls_token_id
        sep_id = self.tokenizer.sep_token_id
        all_ids = []
        for premise, hypothesis in pairs:
            p_ids = self.tokenizer(
                premise, add_special_tokens=False, truncation=True,
                max_length=self.max_premise_tokens,
            )["input_ids"]
            h_ids = self.tokenizer(
                hypothesis, add_special_tokens=False, truncation=True,
                max_length=self.max_hypothesis_tokens,
            )["input_ids"]
            framed = ([cls_id] if cls_id is not None else []) + p_ids
            if sep_id is not None:
                framed = framed + [sep_id]
            framed = framed + h_ids + ([sep_id] if sep_id is not None else [])
            all_ids.append(framed)
        width = max(len(ids) for ids in all_ids)
        pad_id = self.tokenizer.pad_token_id or 0
        input_ids = torch.full((len(all_ids), width), pad_id, dtype=torch.long)
        attention = torch.zeros((len(all_ids), width), dtype=torch.long)
        for i, ids in enumerate(all_ids):
            input_ids[i, : len(ids)] = torch.tensor(ids)
            attention[i, : len(ids)] = 1
        return input_ids.to(self.device), attention.to(self.device)

    def _forward(self, pairs: Sequence[Pair]):
        input_ids, attention = self._encode_batch(pairs)
        hidden = self.model(input_ids=input_ids, attention_mask=attention).last_hidden_state
        return self.head(hidden[:, 0]).squeeze(-1)

    def score(self, premise: str, hypothesis: str) -> float:
        return float(self.score_pairs([(premise, hypothesis)])[0])

    def score_pairs(self, pairs: Sequence[Pair]) -> np.ndarray:
        torch = self._torch
        self.model.eval()
        self.head.eval()
        with torch.no_grad():
            scores = self._forward(pairs)
        return scores.double().cpu().numpy()

    def begin_training(self, weight_decay: float, epsilon: float) -> None:
        torch = self._torch
        self._optimizer = torch.optim.AdamW(
            list(self.model.parameters()) + list(self.head.parameters()),
            lr=1.0,  # overwritten per step by the schedule
            weight_decay=weight_decay,
            eps=epsilon,
        )

    def training_step(self, pos_pairs, neg_pairs, lr: float) -> float:
        torch = self._torch
        if self._optimizer is None:
            raise RuntimeError("call begin_training() before training_step()")
        self.model.train()
        self.head.train()
        batch = len(pos_pairs)
        n_neg = len(neg_pairs[0])
        flat = list(pos_pairs) + [pair for row in neg_pairs for pair in row]
        scores = self._forward(flat)
        s_pos = scores[:batch]
        s_neg = scores[batch:].reshape(batch, n_neg)
        loss = torch.nn.functional.softplus(s_neg - s_pos[:, None]).sum() / batch
        for group in self._optimizer.param_groups:
            group["lr"] = lr
        self._optimizer.zero_grad()
        loss.backward()
        self._optimizer.step()
        return float(loss.detach().cpu())

    def snapshot(self):
        torch = self._torch
        return {
            "model": {k: v.detach().clone() for k, v in self.model.state_dict().items()},
            "head": {k: v.detach().clone() for k, v in self.head.state_dict().items()},
        }

    def restore(self, snapshot) -> None:
        self.model.load_state_dict(snapshot["model"])
        self.head.load_state_dict(snapshot["head"])

    def save_params(self, path) -> None:
        self._torch.save(self.snapshot(), path)

    def load_params(self, path) -> None:
        self.restore(self._torch.load(path, weights_only=True))

    def config_dict(self) -> dict:
        return {
            "backend": self.backend,
            "model_name": self.model_name,
            "seed": self.seed,
            "max_premise_tokens": self.max_premise_tokens,
            "max_hypothesis_tokens": self.max_hypothesis_tokens,
        }


def load_scorer(config: dict) -> ScorerInterface:
    """Instantiate a scorer from a checkpoint/config dictionary."""
    backend = config.get("backend")
    if backend == "toy":
        return ToyScorer(
            feature_dim=int(config.get("feature_dim", 256)),
            seed=int(config.get("seed", 0)),
            max_premise_tokens=int(config.get("max_premise_tokens", 462)),
            max_hypothesis_tokens=int(config.get("max_hypothesis_tokens", 50)),
        )
    if backend == "neural":
        return NeuralScorer.from_pretrained(
            config["model_name"],
            seed=int(config.get("seed", 0)),
            max_premise_tokens=int(config.get("max_premise_tokens", 462)),
            max_hypothesis_tokens=int(config.get("max_hypothesis_tokens", 50)),
        )
    raise ValueError(f"unknown scorer backend {backend!r}")


def scorer_params_filename(backend: str) -> str:
    return "params.npz" if backend == "toy" else "params.pt"
