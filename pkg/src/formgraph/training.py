"""From-scratch training loop: full-corpus Adam on the summed pair loss with
greedy-decode validation F1 driving checkpoint selection and early stopping.
Deterministic under a fixed seed."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ingest import AnnotatedDocument, DatasetSplit
from .metrics import relation_prf
from .model import (
    ModelConfig,
    ModelParams,
    PreparedDocument,
    forward,
    init_params,
    loss_and_gradients,
    pack_documents,
    predict_greedy,
    prepare_annotated,
    zeros_like_params,
)

_PACK_CHUNK = 32  # documents packed per vectorized forward/backward


class TrainingDivergedError(RuntimeError):
    pass


class Adam:
    """Adaptive moment estimation over a dict of parameter arrays."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: ModelParams, grads: ModelParams) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k in sorted(params):
            g = grads[k]
            if k not in self.m:
                self.m[k] = np.zeros_like(params[k])
                self.v[k] = np.zeros_like(params[k])
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)


@dataclass(frozen=True)
class IterationLog:
    iteration: int
    loss: float
    validation_f1: float
    best: bool


@dataclass
class TrainResult:
    params: ModelParams
    config: ModelConfig
    log: list[IterationLog]
    best_iteration: int
    best_f1: float
    uncovered_gold: int = 0

    def log_as_dicts(self) -> list[dict]:
        return [vars(entry) for entry in self.log]


def _validation_f1(val_preps: Sequence[PreparedDocument],
                   val_docs: Sequence[AnnotatedDocument],
                   params: ModelParams, cfg: ModelConfig) -> float:
    preds = [predict_greedy(forward(prep, params, cfg), prep.n_words)
             for prep in val_preps]
    return relation_prf(preds, [a.gold_wrg for a in val_docs]).f1


def train(split: DatasetSplit, cfg: ModelConfig) -> TrainResult:
    """Adam on the pooled pair losses of all training documents; after each
    iteration the validation set is greedy-decoded and the best-F1 checkpoint
    is retained.  Stops early when the best F1 has not improved for
    ``cfg.patience`` iterations."""
    if not split.train or not split.validation:
        raise ValueError("training requires non-empty train and validation sets")

    train_preps = [prepare_annotated(a, cfg.k) for a in split.train]
    uncovered = sum(p.uncovered_gold for p in train_preps)
    full_batch = not cfg.batch_size
    chunk_size = cfg.batch_size or _PACK_CHUNK
    chunks = [pack_documents(train_preps[i:i + chunk_size])
              for i in range(0, len(train_preps), chunk_size)]
    val_preps = [prepare_annotated(a, cfg.k) for a in split.validation]

    params = init_params(cfg)
    adam = Adam(lr=cfg.learning_rate)
    best_params = {k: v.copy() for k, v in params.items()}
    best_f1 = -np.inf
    best_iteration = 0
    since_best = 0
    log: list[IterationLog] = []

    for iteration in range(1, cfg.max_iterations + 1):
        total_loss = 0.0
        if full_batch:
            # one optimizer step over the pooled corpus loss; chunks only
            # bound the packed-batch memory
            grads = zeros_like_params(params)
            for chunk in chunks:
                lb, g = loss_and_gradients(chunk, params, cfg)
                total_loss += lb.total
                for k in grads:
                    grads[k] += g[k]
            if not np.isfinite(total_loss):
                raise TrainingDivergedError(
                    f"non-finite loss {total_loss} at iteration {iteration}")
            adam.step(params, grads)
        else:
            # one iteration = one pass over the corpus in batch_size steps
            for chunk in chunks:
                lb, g = loss_and_gradients(chunk, params, cfg)
                total_loss += lb.total
                if not np.isfinite(lb.total):
                    raise TrainingDivergedError(
                        f"non-finite loss at iteration {iteration}")
                adam.step(params, g)

        f1 = _validation_f1(val_preps, split.validation, params, cfg)
        improved = f1 > best_f1
        if improved:
            best_f1 = f1
            best_iteration = iteration
            best_params = {k: v.copy() for k, v in params.items()}
            since_best = 0
        else:
            since_best += 1
        log.append(IterationLog(iteration=iteration, loss=total_loss,
                                validation_f1=f1, best=improved))
        if since_best >= cfg.patience:
            break

    return TrainResult(params=best_params, config=cfg, log=log,
                       best_iteration=best_iteration, best_f1=float(best_f1),
                       uncovered_gold=uncovered)
