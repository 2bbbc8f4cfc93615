"""Forward/backward kernels for the CSR network.

Sequence tensors are batched as ``(batch, channels, length)``, so a single
sentence matrix S (d x L) is ``S[None]``.  Vectors are ``(batch, features)``.
All kernels are pure: they never modify their inputs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, NumericError, ShapeError

TRAIN = "train"
INFER = "infer"
NARROW = "narrow"
WIDE = "wide"


def _finite(x: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite values in {what}")
    return x


def _check_mode(mode: str, allowed=(TRAIN, INFER)) -> None:
    if mode not in allowed:
        raise ValueError(f"mode must be one of {allowed}, got {mode!r}")


@dataclass
class ConvBlockParams:
    F: np.ndarray
    b: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray

    def __post_init__(self):
        n = self.F.shape[0]
        if self.F.ndim != 3:
            raise ShapeError(f"filter bank must be n x c x w, got shape {self.F.shape}")
        for name in ("b", "gamma", "beta", "running_mean", "running_var"):
            if getattr(self, name).shape != (n,):
                raise ShapeError(f"{name} must have shape ({n},), got {getattr(self, name).shape}")
        if np.any(self.running_var < 0):
            raise ContractError("running_var must be non-negative")

    @property
    def n_filters(self) -> int:
        return self.F.shape[0]

    @property
    def in_channels(self) -> int:
        return self.F.shape[1]

    @property
    def width(self) -> int:
        return self.F.shape[2]


# ----------------------------------------------------------------- embedding

def embedding_lookup(W: np.ndarray, indices) -> np.ndarray:
    """Gather columns of ``W`` (d x |C|).

    ``indices`` may be an EncodedSentence, a 1-D index vector (returns
    d x L) or a (batch, L) array (returns batch x d x L).
    """
    idx = np.asarray(getattr(indices, "indices", indices))
    if idx.size and (idx.min() < 0 or idx.max() >= W.shape[1]):
        raise ContractError(f"character index out of range for embedding with {W.shape[1]} columns")
    out = W[:, idx]
    if idx.ndim == 2:
        out = out.transpose(1, 0, 2)
    return out


def embedding_backward(dout: np.ndarray, indices, vocab_size: int) -> np.ndarray:
    """Scatter-add output-gradient columns into a d x |C| gradient."""
    idx = np.asarray(getattr(indices, "indices", indices))
    if idx.ndim == 1:
        dout = dout[None]
        idx = idx[None]
    d = dout.shape[1]
    dW_t = np.zeros((vocab_size, d))
    np.add.at(dW_t, idx.reshape(-1), dout.transpose(0, 2, 1).reshape(-1, d))
    return dW_t.T.copy()


# -------------------------------------------------------------- convolution

def conv_output_length(length: int, width: int, mode: str = NARROW) -> int:
    return length - width + 1 if mode == NARROW else length + width - 1


def conv1d_forward(F: np.ndarray, b: np.ndarray, S: np.ndarray, mode: str = NARROW):
    """t[i, j] = <vec(F_i), vec(S[:, j-w+1 : j+1])> + b_i over every window.

    Wide mode zero-pads w-1 columns on both sides first.
    """
    _check_mode(mode, (NARROW, WIDE))
    single = S.ndim == 2
    if single:
        S = S[None]
    n, c, w = F.shape
    B, c_in, L = S.shape
    if c_in != c:
        raise ShapeError(f"input has {c_in} channels, filter bank expects {c}")
    if b.shape != (n,):
        raise ShapeError(f"bias must have shape ({n},), got {b.shape}")
    if mode == WIDE:
        S = np.pad(S, ((0, 0), (0, 0), (w - 1, w - 1)))
    elif L < w:
        raise ShapeError(f"narrow convolution needs length >= width ({L} < {w})")
    Lp = S.shape[2] - w + 1
    # (B, c, L', w) -> (B*L', c*w); ordering matches F.reshape(n, c*w)
    cols = sliding_window_view(S, w, axis=2).transpose(0, 2, 1, 3).reshape(B * Lp, c * w)
    out = cols @ F.reshape(n, c * w).T + b
    out = out.reshape(B, Lp, n).transpose(0, 2, 1)
    _finite(out, "conv1d output")
    cache = (cols, F, (B, c, L), mode)
    return (out[0] if single else out), cache


def conv1d(F, b, S, mode=NARROW):
    return conv1d_forward(F, b, S, mode)[0]


def conv1d_backward(dout: np.ndarray, cache):
    """Returns (dF, db, dS)."""
    cols, F, (B, c, L), mode = cache
    single = dout.ndim == 2
    if single:
        dout = dout[None]
    n, _, w = F.shape
    Lp = dout.shape[2]
    d2 = dout.transpose(0, 2, 1).reshape(B * Lp, n)
    db = d2.sum(axis=0)
    dF = (d2.T @ cols).reshape(n, c, w)
    dcols = (d2 @ F.reshape(n, c * w)).reshape(B, Lp, c, w)
    padded_len = Lp + w - 1
    dS = np.zeros((B, c, padded_len))
    for k in range(w):
        dS[:, :, k : k + Lp] += dcols[:, :, :, k].transpose(0, 2, 1)
    if mode == WIDE and w > 1:
        dS = dS[:, :, w - 1 : w - 1 + L]
    return dF, db, (dS[0] if single else dS)


# ------------------------------------------------------- batch normalization

def _bn_axes(X: np.ndarray) -> tuple[int, ...]:
    return tuple(i for i in range(X.ndim) if i != 1)


def _bcast(v: np.ndarray, ndim: int) -> np.ndarray:
    return v.reshape((1, -1) + (1,) * (ndim - 2))


def batchnorm_forward(
    X: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    mode: str = TRAIN,
    eps: float = 1e-5,
    running_mean: np.ndarray | None = None,
    running_var: np.ndarray | None = None,
):
    """Per-feature normalization over every axis except axis 1.

    Train mode uses the batch mean and population variance (pooled over batch
    and time for conv outputs).  The cache carries the batch mean and the
    unbiased batch variance for the caller's running-statistics update.
    """
    _check_mode(mode)
    if X.ndim < 2:
        raise ShapeError("batchnorm expects at least (batch, features)")
    n = X.shape[1]
    if gamma.shape != (n,) or beta.shape != (n,):
        raise ShapeError(f"gamma/beta must have shape ({n},)")
    axes = _bn_axes(X)
    m = X.size // n
    g = _bcast(gamma, X.ndim)
    if mode == TRAIN:
        if m < 2:
            raise ContractError(f"train-mode batchnorm needs >= 2 values per feature, got {m}")
        mean = X.mean(axis=axes)
        centered = X - _bcast(mean, X.ndim)
        var = np.mean(centered * centered, axis=axes)
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = centered * _bcast(inv_std, X.ndim)
        stats = (mean, var * m / (m - 1))
    else:
        if running_mean is None or running_var is None:
            raise ContractError("infer-mode batchnorm needs running statistics")
        inv_std = 1.0 / np.sqrt(running_var + eps)
        xhat = (X - _bcast(running_mean, X.ndim)) * _bcast(inv_std, X.ndim)
        stats = None
    out = g * xhat + _bcast(beta, X.ndim)
    _finite(out, "batchnorm output")
    cache = (xhat, inv_std, gamma, axes, m, mode, stats)
    return out, cache


def batchnorm(X, gamma, beta, mode=TRAIN, eps=1e-5, running_mean=None, running_var=None):
    return batchnorm_forward(X, gamma, beta, mode, eps, running_mean, running_var)[0]


def batchnorm_batch_stats(cache):
    """(batch mean, unbiased batch variance) of a train-mode forward."""
    return cache[6]


def batchnorm_backward(dout: np.ndarray, cache):
    """Returns (dX, dgamma, dbeta); train mode differentiates through the batch statistics."""
    xhat, inv_std, gamma, axes, m, mode, _ = cache
    nd = dout.ndim
    dgamma = np.sum(dout * xhat, axis=axes)
    dbeta = np.sum(dout, axis=axes)
    dxhat = dout * _bcast(gamma, nd)
    if mode == TRAIN:
        s1 = _bcast(np.sum(dxhat, axis=axes), nd)
        s2 = _bcast(np.sum(dxhat * xhat, axis=axes), nd)
        dX = _bcast(inv_std, nd) / m * (m * dxhat - s1 - xhat * s2)
    else:
        dX = dxhat * _bcast(inv_std, nd)
    return dX, dgamma, dbeta


def update_running_stats(running_mean, running_var, batch_mean, batch_var, momentum=0.1):
    """Exponential moving average; returns new arrays."""
    new_mean = (1.0 - momentum) * running_mean + momentum * batch_mean
    new_var = (1.0 - momentum) * running_var + momentum * batch_var
    return new_mean, new_var


# ------------------------------------------------------------------ pooling

def maxpool_time(T: np.ndarray):
    """Max over the last (time) axis; ties go to the earliest position.

    Returns (values, argmax).  Accepts n x L or batch x n x L.
    """
    if T.shape[-1] == 0:
        raise ShapeError("cannot max-pool an empty sequence")
    arg = np.argmax(T, axis=-1)
    vals = np.take_along_axis(T, arg[..., None], axis=-1)[..., 0]
    return vals, arg


def maxpool_backward(dout: np.ndarray, argmax: np.ndarray, length: int) -> np.ndarray:
    dT = np.zeros(dout.shape + (length,))
    np.put_along_axis(dT, argmax[..., None], dout[..., None], axis=-1)
    return dT


# ----------------------------------------------------- dense and activations

def dense(Wd: np.ndarray, bd: np.ndarray, x: np.ndarray) -> np.ndarray:
    if x.shape[-1] != Wd.shape[1] or bd.shape != (Wd.shape[0],):
        raise ShapeError(f"dense: weight {Wd.shape}, bias {bd.shape}, input {x.shape}")
    return _finite(x @ Wd.T + bd, "dense output")


def dense_backward(dout: np.ndarray, Wd: np.ndarray, x: np.ndarray):
    """Returns (dWd, dbd, dx) for batched x of shape (batch, in)."""
    if x.ndim == 1:
        return np.outer(dout, x), dout.copy(), dout @ Wd
    return dout.T @ x, dout.sum(axis=0), dout @ Wd


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(dout: np.ndarray, x: np.ndarray) -> np.ndarray:
    return dout * (x > 0)


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def tanh_backward(dout: np.ndarray, x: np.ndarray) -> np.ndarray:
    y = np.tanh(x)
    return dout * (1.0 - y * y)


ACTIVATIONS = {
    "relu": (relu, relu_backward),
    "tanh": (tanh, tanh_backward),
}


def softmax(x: np.ndarray) -> np.ndarray:
    z = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(z)
    return _finite(e / np.sum(e, axis=-1, keepdims=True), "softmax output")


def softmax_backward(dprobs: np.ndarray, probs: np.ndarray) -> np.ndarray:
    return probs * (dprobs - np.sum(dprobs * probs, axis=-1, keepdims=True))


def dropout(x: np.ndarray, rate: float, mode: str = TRAIN, rng: np.random.Generator | None = None):
    """Inverted dropout. Returns (y, mask); mask is None when it is the identity."""
    _check_mode(mode)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode == INFER or rate == 0.0:
        return x, None
    if rng is None:
        raise ContractError("train-mode dropout with rate > 0 needs an rng")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(dout: np.ndarray, mask) -> np.ndarray:
    return dout if mask is None else dout * mask
