"""Siamese CSR network: shared embedding and conv stack, joint classifier head."""
from __future__ import annotations

import copy
import io
import json
import zipfile
from dataclasses import dataclass, field

import numpy as np

from . import nn_ops
from .charvocab import CharAlphabet, EncodedSentence, build_alphabet
from .config import RunConfig, min_length
from .errors import CheckpointError, ConfigError, ContractError, ShapeError
from .nn_ops import INFER, TRAIN, ConvBlockParams

CHECKPOINT_FORMAT = "csrqa-checkpoint-1"


@dataclass
class ModelParams:
    """All network parameters. ``W`` and ``blocks`` are used by both branches."""

    config: RunConfig
    W: np.ndarray
    blocks: list[ConvBlockParams]
    Wh: np.ndarray
    bh: np.ndarray
    Wo: np.ndarray
    bo: np.ndarray

    def trainable(self) -> dict[str, np.ndarray]:
        """Name -> array for every learned parameter (the arrays themselves, not copies)."""
        out = {"W": self.W}
        for k, blk in enumerate(self.blocks):
            out[f"blocks.{k}.F"] = blk.F
            if self.config.use_bn:
                # BN subtracts the batch mean, so a conv bias has no effect; it stays 0
                out[f"blocks.{k}.gamma"] = blk.gamma
                out[f"blocks.{k}.beta"] = blk.beta
            else:
                out[f"blocks.{k}.b"] = blk.b
        out.update(Wh=self.Wh, bh=self.bh, Wo=self.Wo, bo=self.bo)
        return out

    def state(self) -> dict[str, np.ndarray]:
        """Trainable arrays plus BN running statistics."""
        out = self.trainable()
        for k, blk in enumerate(self.blocks):
            out[f"blocks.{k}.b"] = blk.b
            out[f"blocks.{k}.gamma"] = blk.gamma
            out[f"blocks.{k}.beta"] = blk.beta
            out[f"blocks.{k}.running_mean"] = blk.running_mean
            out[f"blocks.{k}.running_var"] = blk.running_var
        return out

    def copy(self) -> "ModelParams":
        return copy.deepcopy(self)

    def n_parameters(self) -> int:
        return sum(a.size for a in self.trainable().values())


def _check_chain(config: RunConfig) -> None:
    config.validate()


def init_model(config: RunConfig, rng: np.random.Generator) -> ModelParams:
    """Uniform(-s, s) weights, zero biases, identity BN."""
    _check_chain(config)
    s = config.init_scale
    n_chars = 71
    W = rng.uniform(-s, s, size=(config.embed_dim, n_chars))
    blocks = []
    c = config.embed_dim
    for w, n in config.conv_blocks:
        F = rng.uniform(-s, s, size=(n, c, w))
        blocks.append(
            ConvBlockParams(
                F=F,
                b=np.zeros(n),
                gamma=np.ones(n),
                beta=np.zeros(n),
                running_mean=np.zeros(n),
                running_var=np.ones(n),
            )
        )
        c = n
    Wh = rng.uniform(-s, s, size=(config.hidden_dim, config.join_dim))
    Wo = rng.uniform(-s, s, size=(2, config.hidden_dim))
    return ModelParams(
        config=config,
        W=W,
        blocks=blocks,
        Wh=Wh,
        bh=np.zeros(config.hidden_dim),
        Wo=Wo,
        bo=np.zeros(2),
    )


def zero_model(config: RunConfig) -> ModelParams:
    """All weights zero (scores are exactly 0.5)."""
    params = init_model(config, np.random.default_rng(0))
    for arr in (params.W, params.Wh, params.Wo):
        arr[...] = 0.0
    for blk in params.blocks:
        blk.F[...] = 0.0
    return params


# ------------------------------------------------------------------ forward

@dataclass
class BranchCache:
    indices: np.ndarray
    layers: list = field(default_factory=list)
    argmax: np.ndarray | None = None
    last_len: int = 0


def _as_batch(x) -> np.ndarray:
    idx = np.asarray(getattr(x, "indices", x))
    return idx[None] if idx.ndim == 1 else idx


def encode_branch(params: ModelParams, X: np.ndarray, mode: str):
    """embedding -> [conv -> BN -> activation]+ -> max-pool for a (batch, L) index array.

    Returns (pooled of shape (batch, n_last), cache).
    """
    cfg = params.config
    X = _as_batch(X)
    if cfg.conv_mode == nn_ops.NARROW and X.shape[1] < min_length(cfg):
        raise ShapeError(
            f"sentence length {X.shape[1]} is shorter than the conv stack needs ({min_length(cfg)})"
        )
    act, _ = nn_ops.ACTIVATIONS[cfg.activation]
    h = nn_ops.embedding_lookup(params.W, X)
    cache = BranchCache(indices=X)
    for blk in params.blocks:
        t, conv_cache = nn_ops.conv1d_forward(blk.F, blk.b, h, cfg.conv_mode)
        if cfg.use_bn:
            z, bn_cache = nn_ops.batchnorm_forward(
                t, blk.gamma, blk.beta, mode, cfg.bn_eps, blk.running_mean, blk.running_var
            )
        else:
            z, bn_cache = t, None
        h = act(z)
        cache.layers.append((conv_cache, bn_cache, z))
    pooled, cache.argmax = nn_ops.maxpool_time(h)
    cache.last_len = h.shape[2]
    return pooled, cache


def encode_branch_backward(params: ModelParams, dpooled: np.ndarray, cache: BranchCache) -> dict:
    cfg = params.config
    _, act_back = nn_ops.ACTIVATIONS[cfg.activation]
    grads = {}
    dh = nn_ops.maxpool_backward(dpooled, cache.argmax, cache.last_len)
    for k in reversed(range(len(params.blocks))):
        conv_cache, bn_cache, z = cache.layers[k]
        dz = act_back(dh, z)
        if bn_cache is not None:
            dt, grads[f"blocks.{k}.gamma"], grads[f"blocks.{k}.beta"] = nn_ops.batchnorm_backward(
                dz, bn_cache
            )
        else:
            dt = dz
        grads[f"blocks.{k}.F"], grads[f"blocks.{k}.b"], dh = nn_ops.conv1d_backward(dt, conv_cache)
    grads["W"] = nn_ops.embedding_backward(dh, cache.indices, params.W.shape[1])
    return grads


@dataclass
class PairCache:
    mode: str
    q: BranchCache
    a: BranchCache
    join: np.ndarray
    hidden_pre: np.ndarray
    hidden: np.ndarray
    dropout_mask: np.ndarray | None
    probs: np.ndarray
    shape_key: tuple


def _shape_key(params: ModelParams) -> tuple:
    return tuple((k, a.shape) for k, a in params.trainable().items())


def forward_batch(params: ModelParams, Q, A, feats, mode: str = INFER, rng=None):
    """Score a batch of pairs. Returns (probs of shape (batch, 2), cache)."""
    cfg = params.config
    Q, A = _as_batch(Q), _as_batch(A)
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim == 1:
        feats = feats[None]
    if feats.shape != (Q.shape[0], cfg.n_features) or A.shape[0] != Q.shape[0]:
        raise ShapeError(
            f"batch mismatch: q {Q.shape}, a {A.shape}, feats {feats.shape} "
            f"(expected {cfg.n_features} features)"
        )
    act, _ = nn_ops.ACTIVATIONS[cfg.activation]
    pq, qcache = encode_branch(params, Q, mode)
    pa, acache = encode_branch(params, A, mode)
    join = np.concatenate([pq, pa, feats], axis=1)
    hidden_pre = nn_ops.dense(params.Wh, params.bh, join)
    hidden, mask = nn_ops.dropout(act(hidden_pre), cfg.dropout_rate, mode, rng)
    probs = nn_ops.softmax(nn_ops.dense(params.Wo, params.bo, hidden))
    cache = PairCache(mode, qcache, acache, join, hidden_pre, hidden, mask, probs, _shape_key(params))
    return probs, cache


def backward_batch(params: ModelParams, cache: PairCache, dprobs: np.ndarray) -> dict:
    """Gradients of a scalar w.r.t. every trainable array, keyed like ``params.trainable()``.

    Shared parameters receive the sum of question- and answer-branch contributions.
    """
    if cache.mode != TRAIN:
        raise ContractError("backward needs the cache of a train-mode forward")
    if cache.shape_key != _shape_key(params):
        raise ContractError("cache was produced by parameters of a different shape")
    cfg = params.config
    _, act_back = nn_ops.ACTIVATIONS[cfg.activation]
    dprobs = np.asarray(dprobs, dtype=np.float64).reshape(cache.probs.shape)
    dlogits = nn_ops.softmax_backward(dprobs, cache.probs)
    grads = {}
    grads["Wo"], grads["bo"], dhidden = nn_ops.dense_backward(dlogits, params.Wo, cache.hidden)
    dhidden = nn_ops.dropout_backward(dhidden, cache.dropout_mask)
    dpre = act_back(dhidden, cache.hidden_pre)
    grads["Wh"], grads["bh"], djoin = nn_ops.dense_backward(dpre, params.Wh, cache.join)
    n_last = params.blocks[-1].n_filters
    gq = encode_branch_backward(params, djoin[:, :n_last], cache.q)
    ga = encode_branch_backward(params, djoin[:, n_last : 2 * n_last], cache.a)
    for key in gq:
        grads[key] = gq[key] + ga[key]
    return {k: grads[k] for k in params.trainable()}


def forward_pair(params, q: EncodedSentence, a: EncodedSentence, feats, mode=INFER, rng=None):
    """Single-pair forward; returns (probs of length 2, cache)."""
    probs, cache = forward_batch(params, q, a, feats, mode, rng)
    return probs[0], cache


def backward_pair(params, cache, dloss_dprobs) -> dict:
    return backward_batch(params, cache, np.asarray(dloss_dprobs)[None] if np.ndim(dloss_dprobs) == 1 else dloss_dprobs)


def score(params: ModelParams, q, a, feats) -> float:
    """Probability that ``a`` answers ``q`` (infer mode)."""
    probs, _ = forward_batch(params, q, a, feats, INFER)
    return float(probs[0, 1])


def score_batch(params: ModelParams, Q, A, feats, batch_size: int = 256) -> np.ndarray:
    out = []
    for start in range(0, len(Q), batch_size):
        sl = slice(start, start + batch_size)
        probs, _ = forward_batch(params, Q[sl], A[sl], feats[sl], INFER)
        out.append(probs[:, 1])
    return np.concatenate(out) if out else np.zeros(0)


def apply_running_stats(params: ModelParams, cache: PairCache) -> None:
    """Fold a train-mode batch's BN statistics into the running averages (question branch first)."""
    if not params.config.use_bn:
        return
    for branch in (cache.q, cache.a):
        for blk, (_, bn_cache, _) in zip(params.blocks, branch.layers):
            mean, var = nn_ops.batchnorm_batch_stats(bn_cache)
            blk.running_mean, blk.running_var = nn_ops.update_running_stats(
                blk.running_mean, blk.running_var, mean, var, params.config.bn_momentum
            )


def recompute_bn_stats(params: ModelParams, sentences: list[np.ndarray], batch_size: int = 256) -> None:
    """Replace running statistics with exact population statistics.

    ``sentences`` is a list of (N, L) index arrays (e.g. all training
    questions and all training answers).  Blocks are processed in order,
    each normalized with the already-recomputed statistics of earlier blocks.
    """
    cfg = params.config
    if not cfg.use_bn:
        return
    act, _ = nn_ops.ACTIVATIONS[cfg.activation]
    for k, blk in enumerate(params.blocks):
        total = np.zeros(blk.n_filters)
        total_sq = np.zeros(blk.n_filters)
        count = 0
        for X in sentences:
            for start in range(0, len(X), batch_size):
                h = nn_ops.embedding_lookup(params.W, X[start : start + batch_size])
                for j in range(k + 1):
                    b = params.blocks[j]
                    t = nn_ops.conv1d(b.F, b.b, h, cfg.conv_mode)
                    if j < k:
                        h = act(nn_ops.batchnorm(t, b.gamma, b.beta, INFER, cfg.bn_eps, b.running_mean, b.running_var))
                total += t.sum(axis=(0, 2))
                total_sq += (t * t).sum(axis=(0, 2))
                count += t.shape[0] * t.shape[2]
        if count < 2:
            raise ContractError("need at least two activations to estimate statistics")
        mean = total / count
        var = np.maximum(total_sq / count - mean * mean, 0.0) * count / (count - 1)
        blk.running_mean, blk.running_var = mean, var


# -------------------------------------------------------------- checkpoints

def save_checkpoint(path, params: ModelParams, alphabet: CharAlphabet | None = None, extra: dict | None = None) -> None:
    """Write an .npz container: parameter arrays plus a JSON ``meta`` entry."""
    alphabet = alphabet or build_alphabet()
    meta = {
        "format": CHECKPOINT_FORMAT,
        "config": params.config.to_dict(),
        "alphabet_sha256": alphabet.digest(),
        "extra": extra or {},
    }
    arrays = {k: np.ascontiguousarray(v) for k, v in params.state().items()}
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    buf = io.BytesIO()
    # fixed timestamps so identical parameters give identical bytes
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            arr_buf = io.BytesIO()
            np.lib.format.write_array(arr_buf, arrays[name], allow_pickle=False)
            zf.writestr(info, arr_buf.getvalue())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path, alphabet: CharAlphabet | None = None):
    """Returns (params, extra). Raises CheckpointError on format or alphabet mismatch."""
    alphabet = alphabet or build_alphabet()
    try:
        with np.load(path, allow_pickle=False) as data:
            arrays = {k: data[k] for k in data.files}
    except (OSError, ValueError, zipfile.BadZipFile) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if "meta" not in arrays:
        raise CheckpointError(f"{path}: missing metadata")
    meta = json.loads(arrays.pop("meta").tobytes().decode("utf-8"))
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: unsupported format {meta.get('format')!r}")
    if meta["alphabet_sha256"] != alphabet.digest():
        raise CheckpointError(f"{path}: checkpoint was trained with a different character alphabet")
    try:
        config = RunConfig.from_dict(meta["config"])
        params = init_model(config, np.random.default_rng(0))
    except ConfigError as exc:
        raise CheckpointError(f"{path}: bad stored config: {exc}") from exc
    expected = params.state()
    if set(expected) != set(arrays):
        raise CheckpointError(f"{path}: parameter names do not match the stored config")
    for name, arr in arrays.items():
        if arr.shape != expected[name].shape:
            raise CheckpointError(f"{path}: {name} has shape {arr.shape}, expected {expected[name].shape}")
    params.W = arrays["W"]
    params.Wh, params.bh, params.Wo, params.bo = arrays["Wh"], arrays["bh"], arrays["Wo"], arrays["bo"]
    params.blocks = [
        ConvBlockParams(
            **{f: arrays[f"blocks.{k}.{f}"] for f in ("F", "b", "gamma", "beta", "running_mean", "running_var")}
        )
        for k in range(len(params.blocks))
    ]
    return params, meta.get("extra", {})
