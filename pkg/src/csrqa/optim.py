"""Loss, AdaDelta, the training loop with early stopping, and gradient checking."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import model as model_mod
from .charvocab import encode_many
from .config import RunConfig
from .errors import ConfigError, NumericError, ShapeError
from .features import IdfTable, build_idf, pair_features
from .model import ModelParams, init_model
from .nn_ops import TRAIN
from .rankeval import EvalReport, evaluate, filter_questions, rank_queries

log = logging.getLogger("csrqa")


# --------------------------------------------------------------------- data

@dataclass
class EncodedSplit:
    """Pairs turned into model inputs: index arrays, join features and labels."""

    qids: list[str]
    aids: list[str]
    Q: np.ndarray
    A: np.ndarray
    feats: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, idx) -> "EncodedSplit":
        return EncodedSplit(
            [self.qids[i] for i in idx],
            [self.aids[i] for i in idx],
            self.Q[idx],
            self.A[idx],
            self.feats[idx],
            self.labels[idx],
        )

    def scored(self, scores) -> list[tuple[str, str, float, int]]:
        return [(q, a, float(s), int(l)) for q, a, s, l in zip(self.qids, self.aids, scores, self.labels)]


def encode_split(pairs, config: RunConfig, idf: IdfTable | None) -> EncodedSplit:
    if config.n_features == 2:
        if idf is None:
            raise ConfigError("overlap features need an IDF table")
        feats = np.array([pair_features(p.question, p.answer, idf) for p in pairs]).reshape(-1, 2)
    elif config.n_features == 0:
        feats = np.zeros((len(pairs), 0))
    else:
        raise ConfigError(f"n_features must be 0 or 2, got {config.n_features}")
    return EncodedSplit(
        qids=[p.qid for p in pairs],
        aids=[p.aid for p in pairs],
        Q=encode_many([p.question for p in pairs], config.max_len_q),
        A=encode_many([p.answer for p in pairs], config.max_len_a),
        feats=feats,
        labels=np.array([p.label for p in pairs], dtype=np.int64),
    )


# --------------------------------------------------------------------- loss

def l2_penalty(params: ModelParams) -> float:
    """Sum of squared entries of every conv filter bank."""
    return float(sum(np.sum(blk.F * blk.F) for blk in params.blocks))


def loss(probs_batch, labels, lam: float, params: ModelParams | None = None):
    """Mean cross-entropy plus ``lam * ||F||^2``.

    Returns (value, dloss/dprobs).  The regularizer's parameter gradient is
    added separately by :func:`l2_gradient`.
    """
    probs = np.asarray(probs_batch, dtype=np.float64)
    if probs.ndim == 1:
        probs = probs[None]
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    n = len(labels)
    if n < 1 or probs.shape != (n, 2):
        raise ShapeError(f"expected probs of shape ({n}, 2), got {probs.shape}")
    target = probs[np.arange(n), labels]
    if np.any(target <= 0.0):
        raise NumericError("cross-entropy of a non-positive probability")
    value = -np.mean(np.log(target))
    dprobs = np.zeros_like(probs)
    dprobs[np.arange(n), labels] = -1.0 / (n * target)
    if lam and params is not None:
        value += lam * l2_penalty(params)
    return float(value), dprobs


def l2_gradient(params: ModelParams, lam: float) -> dict[str, np.ndarray]:
    return {f"blocks.{k}.F": 2.0 * lam * blk.F for k, blk in enumerate(params.blocks)}


def batch_gradients(params: ModelParams, Q, A, feats, labels, rng=None):
    """Train-mode forward, loss and backward. Returns (loss, grads, cache)."""
    probs, cache = model_mod.forward_batch(params, Q, A, feats, TRAIN, rng)
    value, dprobs = loss(probs, labels, params.config.lam, params)
    grads = model_mod.backward_batch(params, cache, dprobs)
    if params.config.lam:
        for key, g in l2_gradient(params, params.config.lam).items():
            grads[key] = grads[key] + g
    return value, grads, cache


def batch_loss(params: ModelParams, Q, A, feats, labels, rng=None, mode: str = TRAIN) -> float:
    probs, _ = model_mod.forward_batch(params, Q, A, feats, mode, rng)
    return loss(probs, labels, params.config.lam, params)[0]


# ----------------------------------------------------------------- AdaDelta

@dataclass
class AdaDeltaState:
    acc_grad_sq: dict[str, np.ndarray]
    acc_update_sq: dict[str, np.ndarray]
    rho: float = 0.95
    eps: float = 1e-6

    @classmethod
    def zeros_like(cls, arrays: dict[str, np.ndarray], rho: float = 0.95, eps: float = 1e-6):
        return cls(
            {k: np.zeros_like(v) for k, v in arrays.items()},
            {k: np.zeros_like(v) for k, v in arrays.items()},
            rho,
            eps,
        )


def adadelta_step(params, grads: dict[str, np.ndarray], state: AdaDeltaState):
    """One AdaDelta update, applied in place to the parameter arrays.

    ``params`` is a ModelParams or a name -> array dict.  Returns ``state``.
    """
    arrays = params.trainable() if isinstance(params, ModelParams) else params
    rho, eps = state.rho, state.eps
    for key, x in arrays.items():
        g = grads[key]
        if g.shape != x.shape:
            raise ShapeError(f"gradient for {key} has shape {g.shape}, parameter {x.shape}")
        eg = state.acc_grad_sq[key]
        ex = state.acc_update_sq[key]
        eg *= rho
        eg += (1.0 - rho) * g * g
        dx = -(np.sqrt(ex + eps) / np.sqrt(eg + eps)) * g
        ex *= rho
        ex += (1.0 - rho) * dx * dx
        x += dx
    return state


# ----------------------------------------------------------- training loop

class EarlyStopping:
    """Stop after ``patience`` consecutive epochs without a strictly better metric."""

    def __init__(self, patience: int = 5):
        self.patience = patience
        self.best = None
        self.best_epoch = 0
        self.counter = 0

    def step(self, metric: float, epoch: int) -> bool:
        """Record an epoch's metric; returns True when it is a new best."""
        if self.best is None or metric > self.best:
            self.best, self.best_epoch, self.counter = metric, epoch, 0
            return True
        self.counter += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.counter >= self.patience


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_map: float
    dev_mrr: float

    def log_line(self) -> str:
        return f"epoch {self.epoch} loss {self.train_loss:.6f} dev_map {self.dev_map:.6f} dev_mrr {self.dev_mrr:.6f}"


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    batch_losses: list[float] = field(default_factory=list)

    def log_lines(self) -> list[str]:
        return [e.log_line() for e in self.epochs]


def evaluate_split(params: ModelParams, split: EncodedSplit) -> EvalReport:
    scores = model_mod.score_batch(params, split.Q, split.A, split.feats)
    return evaluate(split.scored(scores))


def train(
    train_pairs,
    dev_pairs,
    config: RunConfig,
    rng: np.random.Generator,
    *,
    idf: IdfTable | None = None,
    params: ModelParams | None = None,
    log_fn: Callable[[str], None] | None = None,
    on_epoch: Callable[[int, ModelParams], bool] | None = None,
):
    """Pointwise training with AdaDelta and dev-MAP early stopping.

    Returns (parameters of the best dev-MAP epoch, TrainHistory).
    ``on_epoch(epoch, params)`` may return True to stop early.
    """
    config.validate()
    if not train_pairs or not dev_pairs:
        raise ConfigError("train and dev splits must be non-empty")
    evaluable, _ = filter_questions(rank_queries((p.qid, p.aid, 0.0, p.label) for p in dev_pairs))
    if not evaluable:
        raise ConfigError("dev split has no question with both correct and incorrect answers")
    log_fn = log_fn or log.info
    if config.n_features and idf is None:
        idf = build_idf(train_pairs)
    train_split = encode_split(train_pairs, config, idf)
    dev_split = encode_split(dev_pairs, config, idf)

    if params is None:
        params = init_model(config, rng)
    state = AdaDeltaState.zeros_like(params.trainable(), config.adadelta_rho, config.adadelta_eps)
    stopper = EarlyStopping(config.patience)
    history = TrainHistory()
    best = params.copy()
    n = len(train_split)

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            value, grads, cache = batch_gradients(
                params, train_split.Q[idx], train_split.A[idx], train_split.feats[idx],
                train_split.labels[idx], rng,
            )
            adadelta_step(params, grads, state)
            model_mod.apply_running_stats(params, cache)
            history.batch_losses.append(value)
            total += value * len(idx)
        report = evaluate_split(params, dev_split)
        record = EpochRecord(epoch, total / n, report.map, report.mrr)
        history.epochs.append(record)
        log_fn(record.log_line())
        if stopper.step(report.map, epoch):
            best = params.copy()
            history.best_epoch = epoch
        if on_epoch is not None and on_epoch(epoch, params):
            break
        if stopper.should_stop:
            break
    return best, history


# ----------------------------------------------------------- gradient check

def tiny_config(**overrides) -> RunConfig:
    """Small network for finite-difference checks (a few hundred parameters)."""
    base = dict(
        embed_dim=4,
        conv_blocks=[(2, 3)],
        hidden_dim=5,
        max_len_q=8,
        max_len_a=8,
        batch_size=4,
        init_scale=0.5,
    )
    base.update(overrides)
    return RunConfig(**base)


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst: str
    n_checked: int
    per_param: dict[str, float]


def relative_error(ga, gn, floor: float = 1e-8):
    return np.abs(ga - gn) / np.maximum(np.maximum(np.abs(ga), np.abs(gn)), floor)


def grad_check_detailed(config: RunConfig, rng: np.random.Generator, h: float = 1e-5, n_pairs: int = 4) -> GradCheckResult:
    """Compare the analytic gradient with central differences for every parameter."""
    config.validate()
    params = init_model(config, rng)
    Q = rng.integers(0, 71, size=(n_pairs, config.max_len_q))
    A = rng.integers(0, 71, size=(n_pairs, config.max_len_a))
    feats = rng.uniform(0.0, 1.0, size=(n_pairs, config.n_features))
    labels = np.arange(n_pairs) % 2
    seed = int(rng.integers(2**32))

    def fresh():
        # identical dropout masks on every evaluation
        return np.random.default_rng(seed)

    _, grads, _ = batch_gradients(params, Q, A, feats, labels, fresh())
    per_param = {}
    worst, worst_err, count = "", 0.0, 0
    for name, x in params.trainable().items():
        numeric = np.zeros_like(x)
        flat = x.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = batch_loss(params, Q, A, feats, labels, fresh())
            flat[i] = orig - h
            down = batch_loss(params, Q, A, feats, labels, fresh())
            flat[i] = orig
            numeric.reshape(-1)[i] = (up - down) / (2.0 * h)
        err = float(np.max(relative_error(grads[name], numeric))) if x.size else 0.0
        per_param[name] = err
        count += x.size
        if err >= worst_err:
            worst, worst_err = name, err
    return GradCheckResult(worst_err, worst, count, per_param)


def grad_check(config_small: RunConfig | None = None, rng=None, h: float = 1e-5) -> float:
    """Maximum relative error between analytic and finite-difference gradients."""
    config_small = config_small or tiny_config()
    rng = rng if rng is not None else np.random.default_rng(0)
    return grad_check_detailed(config_small, rng, h).max_rel_error
