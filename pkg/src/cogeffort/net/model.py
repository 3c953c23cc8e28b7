"""Model configuration, parameter initialization, and forward/backward passes.

Shared pipeline for every architecture: pointwise conv -> batch norm + ReLU ->
recurrent stage -> dropout -> dense(ReLU) -> softmax head. The recurrent stage
is a GRU, an LSTM, a BiLSTM (concatenated directions), or the identity for the
plain CNN. `bn_position` moves the norm/activation block after the recurrent
stage instead.
"""

from dataclasses import dataclass, fields, replace

import numpy as np

from ..errors import ConfigError, ShapeError, TrainingError
from ..util import DOMAIN_INIT, substream
from . import ops

ARCHITECTURES = ("cnn_gru", "cnn", "lstm", "bilstm")
BN_POSITIONS = ("pre_gru", "post_gru")

_GRU_GATES = ("z", "r", "h")
_LSTM_GATES = ("i", "f", "o", "g")


@dataclass
class ModelConfig:
    """Hyperparameters; defaults are the tuned single-model values."""

    conv_filters: int = 32
    conv_kernel: int = 1
    gru_units: int = 8
    dropout_rate: float = 0.1
    dense_units: int = 64
    classes: int = 2
    learning_rate: float = 0.003
    batch_size: int = 4
    max_epochs: int = 150
    patience: int = 8
    seed: int = 0
    architecture: str = "cnn_gru"
    input_features: int = 12
    bn_position: str = "pre_gru"
    bn_identity_fallback: bool = False

    def validate(self) -> None:
        for name in ("conv_filters", "gru_units", "dense_units", "classes",
                     "batch_size", "max_epochs", "patience", "input_features"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive count")
        if self.conv_kernel != 1:
            raise ConfigError("conv_kernel is fixed at 1 (single-timestep input)")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must lie in [0, 1)")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"architecture must be one of {ARCHITECTURES}")
        if self.bn_position not in BN_POSITIONS:
            raise ConfigError(f"bn_position must be one of {BN_POSITIONS}")

    def with_overrides(self, **kwargs) -> "ModelConfig":
        known = {f.name for f in fields(self)}
        unknown = set(kwargs) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        return replace(self, **kwargs)


def recurrent_width(config: ModelConfig) -> int:
    """Width of the dropout input (the extracted latent features)."""
    if config.architecture == "cnn_gru" or config.architecture == "lstm":
        return config.gru_units
    if config.architecture == "bilstm":
        return 2 * config.gru_units
    return config.conv_filters  # cnn: conv features go straight to the head


def _bn_width(config: ModelConfig) -> int:
    if config.bn_position == "pre_gru":
        return config.conv_filters
    return recurrent_width(config)


def _weight_shapes(config: ModelConfig) -> list[tuple[str, tuple[int, int]]]:
    c, f, u = config.input_features, config.conv_filters, config.gru_units
    shapes: list[tuple[str, tuple[int, int]]] = [("conv.w", (c, f))]
    if config.architecture == "cnn_gru":
        for g in _GRU_GATES:
            shapes.append((f"gru.w{g}", (f, u)))
        for g in _GRU_GATES:
            shapes.append((f"gru.u{g}", (u, u)))
    elif config.architecture == "lstm":
        for g in _LSTM_GATES:
            shapes.append((f"lstm.w{g}", (f, u)))
        for g in _LSTM_GATES:
            shapes.append((f"lstm.u{g}", (u, u)))
    elif config.architecture == "bilstm":
        for d in ("f", "b"):
            for g in _LSTM_GATES:
                shapes.append((f"lstm_{d}.w{g}", (f, u)))
            for g in _LSTM_GATES:
                shapes.append((f"lstm_{d}.u{g}", (u, u)))
    shapes.append(("dense.w", (recurrent_width(config), config.dense_units)))
    shapes.append(("out.w", (config.dense_units, config.classes)))
    return shapes


def init_params(config: ModelConfig):
    """Seeded Glorot-uniform weights, zero biases, unit batch-norm scale.

    Returns (params, state); state carries the batch-norm running statistics.
    Weight tensors are drawn in the documented `_weight_shapes` order, so the
    initialization is a pure function of the config.
    """
    config.validate()
    rng = substream(config.seed, DOMAIN_INIT)
    params: dict[str, np.ndarray] = {}
    for name, (fan_in, fan_out) in _weight_shapes(config):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, (fan_in, fan_out))
        params[name] = w[None, :, :] if name == "conv.w" else w
        prefix = name[:-2]  # strip ".w" / final letter pair
        if name == "conv.w":
            params["conv.b"] = np.zeros(config.conv_filters)
        elif name == "dense.w":
            params["dense.b"] = np.zeros(config.dense_units)
        elif name == "out.w":
            params["out.b"] = np.zeros(config.classes)
        elif ".w" in name:  # recurrent input weight: matching bias
            gate = name[-1]
            params[f"{prefix}b{gate}"] = np.zeros(config.gru_units)
    width = _bn_width(config)
    params["bn.gamma"] = np.ones(width)
    params["bn.beta"] = np.zeros(width)
    state = {"bn.mean": np.zeros(width), "bn.var": np.ones(width)}
    return params, state


def _gate_params(params: dict, prefix: str, gates) -> dict:
    out = {}
    for g in gates:
        out[f"w{g}"] = params[f"{prefix}.w{g}"]
        out[f"u{g}"] = params[f"{prefix}.u{g}"]
        out[f"b{g}"] = params[f"{prefix}.b{g}"]
    return out


def _check_batch(config: ModelConfig, x) -> np.ndarray:
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    if x.ndim != 3 or x.shape[1] != 1 or x.shape[2] != config.input_features:
        raise ShapeError(
            f"expected batch of shape (B, 1, {config.input_features}), got {x.shape}")
    return x


def _norm_block(config, params, state, feat, train, update_stats):
    """Batch norm + ReLU. Returns (activated, caches, new_state)."""
    if train:
        y, bn_cache, rm, rv = ops.batchnorm_train(
            feat, params["bn.gamma"], params["bn.beta"],
            state["bn.mean"], state["bn.var"],
            allow_single=config.bn_identity_fallback)
        new_state = {"bn.mean": rm, "bn.var": rv} if update_stats else dict(state)
    else:
        y = ops.batchnorm_infer(feat, params["bn.gamma"], params["bn.beta"],
                                state["bn.mean"], state["bn.var"])
        bn_cache, new_state = "infer", dict(state)
    act = ops.relu(y)
    return act, (bn_cache, y), new_state


def _recurrent(config, params, rec_in):
    """Recurrent stage from zero initial state. Returns (out, cache)."""
    b = rec_in.shape[0]
    u = config.gru_units
    zeros = np.zeros((b, u))
    arch = config.architecture
    if arch == "cnn_gru":
        h, cache = ops.gru_step(rec_in, zeros, _gate_params(params, "gru", _GRU_GATES))
        return h, ("gru", cache)
    if arch == "lstm":
        h, _, cache = ops.lstm_step(rec_in, zeros, zeros,
                                    _gate_params(params, "lstm", _LSTM_GATES))
        return h, ("lstm", cache)
    if arch == "bilstm":
        hf, _, cf = ops.lstm_step(rec_in, zeros, zeros,
                                  _gate_params(params, "lstm_f", _LSTM_GATES))
        hb, _, cb = ops.lstm_step(rec_in, zeros, zeros,
                                  _gate_params(params, "lstm_b", _LSTM_GATES))
        return np.concatenate([hf, hb], axis=1), ("bilstm", (cf, cb))
    return rec_in, ("identity", None)


def _recurrent_bwd(config, params, rec_cache, d_out):
    kind, cache = rec_cache
    grads: dict[str, np.ndarray] = {}
    if kind == "gru":
        g = ops.gru_step_bwd(cache, _gate_params(params, "gru", _GRU_GATES), d_out)
        for name, val in g.items():
            if name not in ("dx", "dh"):
                grads[f"gru.{name}"] = val
        return g["dx"], grads
    if kind == "lstm":
        g = ops.lstm_step_bwd(cache, _gate_params(params, "lstm", _LSTM_GATES), d_out)
        for name, val in g.items():
            if name not in ("dx", "dh", "dc"):
                grads[f"lstm.{name}"] = val
        return g["dx"], grads
    if kind == "bilstm":
        u = config.gru_units
        cf, cb = cache
        gf = ops.lstm_step_bwd(cf, _gate_params(params, "lstm_f", _LSTM_GATES), d_out[:, :u])
        gb = ops.lstm_step_bwd(cb, _gate_params(params, "lstm_b", _LSTM_GATES), d_out[:, u:])
        dx = gf.pop("dx") + gb.pop("dx")
        for side, g in (("f", gf), ("b", gb)):
            for name, val in g.items():
                if name not in ("dh", "dc"):
                    grads[f"lstm_{side}.{name}"] = val
        return dx, grads
    return d_out, grads


def _trunk(config, params, state, x, *, train, dropout_mask=None, rng=None,
           update_stats=True):
    """Everything before the dense head. Returns
    (head_in, latent, caches, new_state)."""
    x = _check_batch(config, x)
    b = x.shape[0]
    conv_out = ops.conv1d(x, params["conv.w"], params["conv.b"])
    feat = conv_out.reshape(b, config.conv_filters)
    caches: dict = {"x": x, "feat": feat}

    if config.bn_position == "pre_gru":
        act, caches["norm"], new_state = _norm_block(
            config, params, state, feat, train, update_stats)
        rec_out, caches["rec"] = _recurrent(config, params, act)
        caches["rec_in"] = act
        latent = rec_out
    else:
        rec_out, caches["rec"] = _recurrent(config, params, feat)
        caches["rec_in"] = feat
        latent, caches["norm"], new_state = _norm_block(
            config, params, state, rec_out, train, update_stats)
        caches["rec_out"] = rec_out

    drop_y, caches["drop"] = ops.dropout(latent, config.dropout_rate, train,
                                         rng=rng, mask=dropout_mask)
    return drop_y, latent, caches, new_state


def head_logits(params, head_in):
    hidden = ops.dense(head_in, params["dense.w"], params["dense.b"])
    act = ops.relu(hidden)
    return ops.dense(act, params["out.w"], params["out.b"]), (hidden, act)


def model_forward(config, params, state, x, mode: str = "infer", *,
                  dropout_mask=None, rng=None, update_stats=True):
    """Class probabilities for a batch; rows sum to 1.

    Inference is deterministic (running-stat normalization, no dropout) and
    accepts batches of any size including 1.
    """
    if mode not in ("infer", "train"):
        raise ConfigError(f"mode must be 'infer' or 'train', got {mode!r}")
    train = mode == "train"
    head_in, _, _, new_state = _trunk(config, params, state, x, train=train,
                                      dropout_mask=dropout_mask, rng=rng,
                                      update_stats=update_stats)
    logits, _ = head_logits(params, head_in)
    probs = ops.softmax(logits)
    return probs, new_state


def loss_and_grads(config, params, state, x, onehot, *, train=True,
                   dropout_mask=None, rng=None, update_stats=True):
    """Cross-entropy loss plus gradients for every parameter.

    Gradient-check callers pass train=True with update_stats=False and no
    dropout so the loss is a pure, differentiable function of the parameters.
    """
    head_in, latent, caches, new_state = _trunk(
        config, params, state, x, train=train, dropout_mask=dropout_mask,
        rng=rng, update_stats=update_stats)
    hidden = ops.dense(head_in, params["dense.w"], params["dense.b"])
    act = ops.relu(hidden)
    loss, probs, xcache = ops.dense_softmax_xent(act, params["out.w"],
                                                 params["out.b"], onehot)
    if not np.isfinite(loss):
        raise TrainingError("non-finite loss")

    grads: dict[str, np.ndarray] = {}
    dact, grads["out.w"], grads["out.b"] = ops.dense_softmax_xent_bwd(xcache)
    dhidden = ops.relu_bwd(act, dact)
    dhead_in, grads["dense.w"], grads["dense.b"] = ops.dense_bwd(
        head_in, params["dense.w"], dhidden)
    dlatent = ops.dropout_bwd(caches["drop"], dhead_in)

    if config.bn_position == "pre_gru":
        d_rec_out = dlatent
        d_rec_in, rec_grads = _recurrent_bwd(config, params, caches["rec"], d_rec_out)
        grads.update(rec_grads)
        dfeat = _norm_block_bwd(caches["norm"], d_rec_in, grads)
    else:
        d_rec_out = _norm_block_bwd(caches["norm"], dlatent, grads)
        d_rec_in, rec_grads = _recurrent_bwd(config, params, caches["rec"], d_rec_out)
        grads.update(rec_grads)
        dfeat = d_rec_in

    dconv = dfeat.reshape(caches["x"].shape[0], 1, config.conv_filters)
    _, dw, db = ops.conv1d_bwd(caches["x"], params["conv.w"], dconv)
    grads["conv.w"], grads["conv.b"] = dw, db
    return loss, probs, grads, new_state


def _norm_block_bwd(norm_cache, d_act, grads):
    bn_cache, bn_y = norm_cache
    if bn_cache == "infer":
        raise TrainingError("backward through inference-mode batch norm is unsupported")
    d_bn = ops.relu_bwd(bn_y, d_act)
    dx, dgamma, dbeta = ops.batchnorm_train_bwd(bn_cache, d_bn)
    if dgamma is None:  # identity fallback: scale/shift unused
        grads["bn.gamma"] = np.zeros(d_bn.shape[1])
        grads["bn.beta"] = np.zeros(d_bn.shape[1])
    else:
        grads["bn.gamma"], grads["bn.beta"] = dgamma, dbeta
    return dx


def extract_latent(config, params, state, x) -> np.ndarray:
    """Dropout-input features (the recurrent hidden state in the default
    layout), inference mode."""
    _, latent, _, _ = _trunk(config, params, state, x, train=False)
    return latent


def head_predictor(params):
    """Class-1 probability of the dense head as a function of latent rows."""

    def predict(latents: np.ndarray) -> np.ndarray:
        logits, _ = head_logits(params, np.asarray(latents, dtype=np.float64))
        return ops.softmax(logits)[:, 1]

    return predict
