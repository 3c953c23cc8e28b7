"""Training loop with Adam, early stopping, best-checkpoint tracking, and
grid search over the documented hyperparameter space."""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DataError, TrainingError
from ..util import DOMAIN_DROPOUT, DOMAIN_GRID, DOMAIN_SHUFFLE, derive_seed, substream
from . import backend, model
from .model import ModelConfig

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    first_moment: dict[str, np.ndarray]
    second_moment: dict[str, np.ndarray]
    step: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    epsilon: float = ADAM_EPS

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(first_moment={k: np.zeros_like(v) for k, v in params.items()},
                   second_moment={k: np.zeros_like(v) for k, v in params.items()})


def adam_step(params: dict, grads: dict, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place, deterministic key order."""
    state.step += 1
    kern = backend.active()
    for name in sorted(params):
        g = grads[name]
        p = params[name]
        if g.shape != p.shape:
            raise ConfigError(f"gradient shape {g.shape} != parameter shape "
                              f"{p.shape} for {name!r}")
        kern.adam_update(p.reshape(-1), np.ascontiguousarray(g, dtype=np.float64).reshape(-1),
                         state.first_moment[name].reshape(-1),
                         state.second_moment[name].reshape(-1),
                         state.step, lr, state.beta1, state.beta2, state.epsilon)


@dataclass
class EpochRecord:
    epoch: int  # 1-based
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    param_digest: str


@dataclass
class TrainedModel:
    config: ModelConfig
    params: dict[str, np.ndarray]
    state: dict[str, np.ndarray]
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0


def _onehot(labels, classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise DataError("labels must be a 1-D integer vector")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise DataError(f"labels must lie in 0..{classes - 1}")
    out = np.zeros((labels.size, classes))
    out[np.arange(labels.size), labels.astype(int)] = 1.0
    return out


def param_digest(params: dict, state: dict) -> str:
    """SHA-256 over all tensors in sorted key order."""
    h = hashlib.sha256()
    for name in sorted(params):
        h.update(name.encode())
        h.update(np.ascontiguousarray(params[name], dtype="<f8").tobytes())
    for name in sorted(state):
        h.update(name.encode())
        h.update(np.ascontiguousarray(state[name], dtype="<f8").tobytes())
    return h.hexdigest()


class Trainer:
    """Deterministic mini-batch trainer for one configuration.

    Shuffling, dropout, and initialization draw from substreams of the config
    seed, so two runs with the same config and data produce bit-identical
    histories and parameters. Early stopping watches validation loss with the
    configured patience; the returned parameters come from the epoch with the
    highest validation accuracy (earliest on ties).
    """

    def __init__(self, config: ModelConfig):
        config.validate()
        self.config = config

    def evaluate(self, params, state, x, labels):
        """Inference-mode loss and accuracy."""
        probs, _ = model.model_forward(self.config, params, state, x, mode="infer")
        onehot = _onehot(labels, self.config.classes)
        loss = backend.active().xent_fwd(probs, onehot)
        acc = float((np.argmax(probs, axis=1) == np.asarray(labels)).mean())
        return loss, acc

    def train(self, train_x, train_y, val_x, val_y) -> TrainedModel:
        cfg = self.config
        train_x = np.asarray(train_x, dtype=np.float64)
        train_y = np.asarray(train_y)
        if train_x.shape[0] == 0 or np.asarray(val_x).shape[0] == 0:
            raise DataError("training and validation sets must be non-empty")
        onehot_all = _onehot(train_y, cfg.classes)

        params, state = model.init_params(cfg)
        opt = AdamState.for_params(params)
        history: list[EpochRecord] = []
        best_acc, best_epoch = -np.inf, 0
        best_snapshot = None
        best_val_loss, stale = np.inf, 0

        n = train_x.shape[0]
        for epoch in range(1, cfg.max_epochs + 1):
            order = substream(cfg.seed, DOMAIN_SHUFFLE, epoch).permutation(n)
            drop_rng = substream(cfg.seed, DOMAIN_DROPOUT, epoch)
            loss_sum, hit_sum = 0.0, 0.0
            for b_idx, start in enumerate(range(0, n, cfg.batch_size)):
                idx = order[start:start + cfg.batch_size]
                xb, yb = train_x[idx], onehot_all[idx]
                try:
                    loss, probs, grads, state = model.loss_and_grads(
                        cfg, params, state, xb, yb, train=True, rng=drop_rng)
                except TrainingError as err:
                    raise TrainingError(
                        f"{err} (epoch {epoch}, batch {b_idx})") from None
                adam_step(params, grads, opt, cfg.learning_rate)
                loss_sum += loss * len(idx)
                hit_sum += float((np.argmax(probs, axis=1) == train_y[idx]).sum())

            val_loss, val_acc = self.evaluate(params, state, val_x, val_y)
            record = EpochRecord(epoch=epoch,
                                 train_loss=loss_sum / n,
                                 train_acc=hit_sum / n,
                                 val_loss=val_loss,
                                 val_acc=val_acc,
                                 param_digest=param_digest(params, state))
            history.append(record)

            if val_acc > best_acc:
                best_acc, best_epoch = val_acc, epoch
                best_snapshot = ({k: v.copy() for k, v in params.items()},
                                 {k: v.copy() for k, v in state.items()})
            if val_loss < best_val_loss:
                best_val_loss, stale = val_loss, 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break

        params, state = best_snapshot
        return TrainedModel(config=cfg, params=params, state=state,
                            history=history, best_epoch=best_epoch)


def train(config: ModelConfig, train_x, train_y, val_x, val_y) -> TrainedModel:
    return Trainer(config).train(train_x, train_y, val_x, val_y)


def predict_proba(trained: TrainedModel, x) -> np.ndarray:
    probs, _ = model.model_forward(trained.config, trained.params, trained.state,
                                   x, mode="infer")
    return probs


def predict(trained: TrainedModel, x) -> np.ndarray:
    """Argmax labels; ties resolve to the lower class index."""
    return np.argmax(predict_proba(trained, x), axis=1)


def extract_latent(trained: TrainedModel, x) -> np.ndarray:
    return model.extract_latent(trained.config, trained.params, trained.state, x)


@dataclass(frozen=True)
class GridSpace:
    """Search-space value sets, enumerated units -> dropout -> lr -> batch."""

    gru_units: tuple = (8, 16)
    dropout_rates: tuple = (0.1, 0.2, 0.4)
    learning_rates: tuple = (0.0005, 0.001, 0.003)
    batch_sizes: tuple = (1, 4, 8, 16, 32)

    def size(self) -> int:
        return (len(self.gru_units) * len(self.dropout_rates)
                * len(self.learning_rates) * len(self.batch_sizes))

    def enumerate(self):
        """Cartesian product in the documented nesting order."""
        index = 0
        for units in self.gru_units:
            for rate in self.dropout_rates:
                for lr in self.learning_rates:
                    for batch in self.batch_sizes:
                        yield index, {"gru_units": units, "dropout_rate": rate,
                                      "learning_rate": lr, "batch_size": batch}
                        index += 1


# Externally declared size of the default search space; the enumerated
# Cartesian product above disagrees (90), and reports flag the mismatch.
DECLARED_GRID_SIZE = 72


@dataclass
class GridEntry:
    index: int
    gru_units: int
    dropout_rate: float
    learning_rate: float
    batch_size: int
    val_acc: float
    val_loss: float
    best_epoch: int
    epochs_run: int
    bn_fallback: bool


@dataclass
class GridResult:
    entries: list[GridEntry]
    leaderboard: list[GridEntry]
    enumerated_count: int
    declared_count: int = DECLARED_GRID_SIZE

    @property
    def count_mismatch(self) -> bool:
        return self.enumerated_count != self.declared_count

    def best(self) -> GridEntry:
        return self.leaderboard[0]


def grid_search(base: ModelConfig, space: GridSpace, train_x, train_y,
                val_x, val_y, *, master_seed: int | None = None,
                keep_models: bool = False) -> GridResult:
    """Train every configuration in the space; rank by validation accuracy.

    Ties break toward the smaller enumeration index. Each configuration gets
    an independent seed derived from (master_seed, index), so the leaderboard
    does not depend on execution order. Batch-size-1 configurations enable
    the batch-norm identity fallback automatically (flagged per entry).
    """
    if space.size() == 0:
        raise ConfigError("grid search space is empty")
    if master_seed is None:
        master_seed = base.seed
    entries: list[GridEntry] = []
    models: list[TrainedModel] = []
    for index, overrides in space.enumerate():
        fallback = overrides["batch_size"] == 1
        cfg = base.with_overrides(seed=derive_seed(master_seed, DOMAIN_GRID, index),
                                  bn_identity_fallback=base.bn_identity_fallback or fallback,
                                  **overrides)
        trained = Trainer(cfg).train(train_x, train_y, val_x, val_y)
        best = trained.history[trained.best_epoch - 1]
        entries.append(GridEntry(index=index, val_acc=best.val_acc,
                                 val_loss=best.val_loss,
                                 best_epoch=trained.best_epoch,
                                 epochs_run=len(trained.history),
                                 bn_fallback=fallback, **overrides))
        if keep_models:
            models.append(trained)
    leaderboard = sorted(entries, key=lambda e: (-e.val_acc, e.index))
    result = GridResult(entries=entries, leaderboard=leaderboard,
                        enumerated_count=space.size())
    if keep_models:
        result.models = models  # type: ignore[attr-defined]
    return result
