"""Differentiable operations over the kernel backend, with contract checks.

Shapes follow the pipeline's conventions: batches are (B, T, C) tensors with
T = 1 after preprocessing, recurrent states are (B, U). Backward functions
take the cached forward values they need and return gradients for every
input.
"""

import numpy as np

from ..errors import ConfigError, DataError, ShapeError
from . import backend

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


def _as_f64(a, name, ndim=None):
    arr = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    if ndim is not None and arr.ndim != ndim:
        raise ShapeError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    return arr


def conv1d(x, kernel, bias):
    """Pointwise 1-D convolution (kernel size 1): per-timestep affine map.

    x (B, T, C), kernel (1, C, F), bias (F) -> (B, T, F). Kernel sizes above 1
    are rejected: the model input has a single timestep.
    """
    x = _as_f64(x, "input", 3)
    kernel = _as_f64(kernel, "kernel", 3)
    bias = _as_f64(bias, "bias", 1)
    k, c, f = kernel.shape
    if k != 1:
        raise ConfigError(f"conv kernel size must be 1, got {k}")
    if x.shape[2] != c or bias.shape[0] != f:
        raise ShapeError(
            f"conv1d shapes disagree: input {x.shape}, kernel {kernel.shape}, bias {bias.shape}")
    b, t, _ = x.shape
    flat = backend.active().affine_fwd(x.reshape(b * t, c), kernel[0], bias)
    return flat.reshape(b, t, f)


def conv1d_bwd(x, kernel, dy):
    x = _as_f64(x, "input", 3)
    dy = _as_f64(dy, "dy", 3)
    b, t, c = x.shape
    f = kernel.shape[2]
    dx_flat, dw, db = backend.active().affine_bwd(
        x.reshape(b * t, c), kernel[0], dy.reshape(b * t, f))
    return dx_flat.reshape(b, t, c), dw[None, :, :], db


def dense(x, w, b):
    """Affine layer x @ w + b on (B, D) input."""
    x = _as_f64(x, "input", 2)
    w = _as_f64(w, "weights", 2)
    b = _as_f64(b, "bias", 1)
    if x.shape[1] != w.shape[0] or w.shape[1] != b.shape[0]:
        raise ShapeError(f"dense shapes disagree: {x.shape} @ {w.shape} + {b.shape}")
    return backend.active().affine_fwd(x, w, b)


def dense_bwd(x, w, dy):
    return backend.active().affine_bwd(
        _as_f64(x, "input", 2), _as_f64(w, "weights", 2), _as_f64(dy, "dy", 2))


def relu(x):
    return backend.active().relu_fwd(_as_f64(x, "input", 2))


def relu_bwd(y, dy):
    return backend.active().relu_bwd(y, _as_f64(dy, "dy", 2))


def batchnorm_train(x, gamma, beta, running_mean, running_var, *,
                    momentum=BN_MOMENTUM, eps=BN_EPS, allow_single=False):
    """Batch-statistics normalization plus a running-statistics update.

    Returns (y, cache, new_running_mean, new_running_var). A train-mode batch
    of one has no batch variance: that's an error unless ``allow_single``
    (then the layer is an identity and running stats are left untouched).
    """
    x = _as_f64(x, "input", 2)
    if x.shape[0] < 2:
        if not allow_single:
            raise DataError(
                "batch normalization needs a batch of at least 2 in training mode; "
                "use batch_size >= 2 or enable the bn_identity_fallback config flag")
        return x.copy(), None, running_mean, running_var
    y, mean, var, xhat = backend.active().bn_train_fwd(x, gamma, beta, eps)
    new_rm = momentum * running_mean + (1.0 - momentum) * mean
    new_rv = momentum * running_var + (1.0 - momentum) * var
    return y, (xhat, var, gamma), new_rm, new_rv


def batchnorm_train_bwd(cache, dy):
    if cache is None:  # identity fallback
        return _as_f64(dy, "dy", 2).copy(), None, None
    xhat, var, gamma = cache
    return backend.active().bn_train_bwd(xhat, var, gamma, _as_f64(dy, "dy", 2), BN_EPS)


def batchnorm_infer(x, gamma, beta, running_mean, running_var, *, eps=BN_EPS):
    return backend.active().bn_infer_fwd(_as_f64(x, "input", 2), gamma, beta,
                                         running_mean, running_var, eps)


def gru_step(x, h, params: dict):
    """One GRU update: z/r gates, candidate state, convex combination.

    params holds wz, wr, wh (C, U), uz, ur, uh (U, U), bz, br, bh (U).
    Returns (h_new, cache).
    """
    x = _as_f64(x, "input", 2)
    h = _as_f64(h, "state", 2)
    if params["wz"].shape != (x.shape[1], h.shape[1]):
        raise ShapeError(
            f"gru shapes disagree: input {x.shape}, state {h.shape}, wz {params['wz'].shape}")
    h_new, z, r, cand = backend.active().gru_fwd(
        x, h, params["wz"], params["wr"], params["wh"],
        params["uz"], params["ur"], params["uh"],
        params["bz"], params["br"], params["bh"])
    return h_new, (x, h, z, r, cand)


def gru_step_bwd(cache, params: dict, dh_new):
    x, h, z, r, cand = cache
    out = backend.active().gru_bwd(
        x, h, z, r, cand, params["wz"], params["wr"], params["wh"],
        params["uz"], params["ur"], params["uh"], _as_f64(dh_new, "dh", 2))
    names = ("dx", "dh", "wz", "wr", "wh", "uz", "ur", "uh", "bz", "br", "bh")
    return dict(zip(names, out))


def lstm_step(x, h, c, params: dict):
    """One LSTM update. params holds wi..wg, ui..ug, bi..bg.

    Returns (h_new, c_new, cache).
    """
    x = _as_f64(x, "input", 2)
    h = _as_f64(h, "state", 2)
    c = _as_f64(c, "cell", 2)
    if params["wi"].shape != (x.shape[1], h.shape[1]):
        raise ShapeError(
            f"lstm shapes disagree: input {x.shape}, state {h.shape}, wi {params['wi'].shape}")
    h_new, c_new, gi, gf, go, gg, tc = backend.active().lstm_fwd(
        x, h, c, params["wi"], params["wf"], params["wo"], params["wg"],
        params["ui"], params["uf"], params["uo"], params["ug"],
        params["bi"], params["bf"], params["bo"], params["bg"])
    return h_new, c_new, (x, h, c, gi, gf, go, gg, tc)


def lstm_step_bwd(cache, params: dict, dh_new, dc_new=None):
    x, h, c, gi, gf, go, gg, tc = cache
    if dc_new is None:
        dc_new = np.zeros_like(dh_new)
    out = backend.active().lstm_bwd(
        x, h, c, gi, gf, go, gg, tc,
        params["wi"], params["wf"], params["wo"], params["wg"],
        params["ui"], params["uf"], params["uo"], params["ug"],
        _as_f64(dh_new, "dh", 2), _as_f64(dc_new, "dc", 2))
    names = ("dx", "dh", "dc", "wi", "wf", "wo", "wg", "ui", "uf", "uo", "ug",
             "bi", "bf", "bo", "bg")
    return dict(zip(names, out))


def check_onehot(labels):
    labels = _as_f64(labels, "labels", 2)
    ok = np.all((labels == 0.0) | (labels == 1.0)) and np.all(labels.sum(axis=1) == 1.0)
    if not ok:
        raise DataError("labels must be one-hot rows")
    return labels


def dense_softmax_xent(features, w, b, onehot):
    """Dense head + softmax + categorical cross-entropy.

    Returns (loss, probs, cache). The combined gradient at the logits is
    (probs - onehot) / B.
    """
    onehot = check_onehot(onehot)
    logits = dense(features, w, b)
    probs = backend.active().softmax_fwd(logits)
    loss = backend.active().xent_fwd(probs, onehot)
    return loss, probs, (features, w, probs, onehot)


def dense_softmax_xent_bwd(cache):
    features, w, probs, onehot = cache
    dlogits = backend.active().softmax_xent_bwd(probs, onehot)
    dfeat, dw, db = backend.active().affine_bwd(features, w, dlogits)
    return dfeat, dw, db


def softmax(logits):
    return backend.active().softmax_fwd(_as_f64(logits, "logits", 2))


def dropout(x, rate, train: bool, rng=None, mask=None):
    """Inverted dropout. Train mode zeroes units w.p. rate and rescales
    survivors by 1/(1-rate); inference is the identity.

    Returns (y, (mask, scale)); mask is None when the layer was an identity.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    x = _as_f64(x, "input", 2)
    if not train or rate == 0.0:
        return x.copy(), (None, 1.0)
    if mask is None:
        if rng is None:
            raise ConfigError("train-mode dropout needs an rng or a mask")
        mask = (rng.random(x.shape) >= rate).astype(np.float64)
    scale = 1.0 / (1.0 - rate)
    return backend.active().dropout_fwd(x, mask, scale), (mask, scale)


def dropout_bwd(cache, dy):
    mask, scale = cache
    dy = _as_f64(dy, "dy", 2)
    if mask is None:
        return dy.copy()
    return backend.active().dropout_bwd(dy, mask, scale)
