"""Seeded training loop: mini-batches, schedule, early stopping, history.

Per epoch the loop records train loss/accuracy and validation
loss/balanced-accuracy, and keeps a snapshot of the best epoch under the
configured selection metric (validation loss, or validation balanced
accuracy). Early stopping watches validation loss with a patience
counter; patience 0 stops at the first epoch that fails to improve.
Gaussian feature noise and dropout apply in train mode only.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingError, ValidationError
from ..metrics import balanced_accuracy
from ..resample import class_balance_weights
from . import losses
from .model import MlpModel, backward, forward, positive_probs
from .optim import AdamConfig, AdamState, StepDecay, adam_step

LOSS_WEIGHTED_CE = "weighted_ce"
LOSS_BCE_POS = "bce_pos"


@dataclass(frozen=True)
class TrainConfig:
    loss: str = LOSS_WEIGHTED_CE
    class_weights: tuple[float, float] | None = None  # None: inverse-frequency
    pos_weight: float | None = None  # None: n_negative / n_positive
    lr: float = 1e-3
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    scheduler_step: int = 20
    scheduler_gamma: float = 0.5
    epochs: int = 50
    batch_size: int = 32
    early_stopping_patience: int | None = None
    sampler: str = "plain"  # plain | balanced
    feature_noise_sigma: float = 0.0
    selection: str = "val_loss"  # val_loss | val_balanced_accuracy
    seed: int = 0

    def __post_init__(self):
        if self.loss not in (LOSS_WEIGHTED_CE, LOSS_BCE_POS):
            raise ValidationError(f"unknown loss {self.loss!r}")
        if self.epochs < 1:
            raise ValidationError(f"epochs must be positive, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be positive, got {self.batch_size}")
        if self.lr <= 0:
            raise ValidationError(f"lr must be positive, got {self.lr}")
        if self.sampler not in ("plain", "balanced"):
            raise ValidationError(f"unknown sampler {self.sampler!r}")
        if self.selection not in ("val_loss", "val_balanced_accuracy"):
            raise ValidationError(f"unknown selection metric {self.selection!r}")
        if self.feature_noise_sigma < 0:
            raise ValidationError("feature_noise_sigma must be >= 0")
        if self.pos_weight is not None and self.pos_weight <= 0:
            raise ValidationError(f"pos_weight must be positive, got {self.pos_weight}")

    def as_dict(self) -> dict:
        return {
            "loss": self.loss,
            "class_weights": list(self.class_weights) if self.class_weights else None,
            "pos_weight": self.pos_weight,
            "lr": self.lr,
            "weight_decay": self.weight_decay,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "scheduler_step": self.scheduler_step,
            "scheduler_gamma": self.scheduler_gamma,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "early_stopping_patience": self.early_stopping_patience,
            "sampler": self.sampler,
            "feature_noise_sigma": self.feature_noise_sigma,
            "selection": self.selection,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_bal_acc: float


@dataclass
class TrainResult:
    model: MlpModel  # best-epoch snapshot, eval mode
    history: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    best_val_bal_acc: float = 0.0
    loss_meta: dict = field(default_factory=dict)

    def history_csv(self) -> str:
        lines = ["epoch,train_loss,train_acc,val_loss,val_bal_acc"]
        for s in self.history:
            lines.append(
                f"{s.epoch},{s.train_loss!r},{s.train_acc!r},{s.val_loss!r},{s.val_bal_acc!r}"
            )
        return "\n".join(lines) + "\n"


def _resolve_loss(cfg: TrainConfig, y_train: np.ndarray):
    """Bind the loss to its class-balance constants from the train fold."""
    n_pos = int((y_train == 1).sum())
    n_neg = int((y_train == 0).sum())
    if cfg.loss == LOSS_BCE_POS:
        pw = cfg.pos_weight
        if pw is None:
            if n_pos == 0:
                raise ValidationError("cannot derive pos_weight without positives")
            pw = n_neg / n_pos

        def fn(probs, labels, smoothing):
            return losses.bce_pos_weight(probs, labels, pos_weight=pw)

        return fn, {"pos_weight": pw}
    weights = cfg.class_weights
    if weights is None:
        if n_pos == 0 or n_neg == 0:
            raise ValidationError("cannot derive class weights from a single class")
        n = n_pos + n_neg
        weights = (n / (2.0 * n_neg), n / (2.0 * n_pos))

    def fn(probs, labels, smoothing):
        return losses.weighted_cross_entropy(
            probs, labels, class_weights=weights, label_smoothing=smoothing
        )

    return fn, {"class_weights": list(weights)}


def _batches(order: np.ndarray, batch_size: int, fold_singletons: bool):
    """Consecutive chunks; optionally fold a trailing 1-row chunk into the
    previous batch (batch norm cannot normalize a single row)."""
    chunks = [order[i : i + batch_size] for i in range(0, order.size, batch_size)]
    if fold_singletons and len(chunks) > 1 and chunks[-1].size == 1:
        chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
        chunks.pop()
    return chunks


def train(
    model: MlpModel,
    X_train,
    y_train,
    X_val,
    y_val,
    cfg: TrainConfig,
) -> TrainResult:
    """Train in place and return the best-validation-epoch snapshot."""
    X_train = np.asarray(X_train, dtype=np.float64)
    y_train = np.asarray(y_train).astype(np.int64)
    X_val = np.asarray(X_val, dtype=np.float64)
    y_val = np.asarray(y_val).astype(np.int64)
    if X_train.shape[0] == 0 or X_val.shape[0] == 0:
        raise ValidationError("train and validation splits must be non-empty")
    if X_train.shape[0] != y_train.size or X_val.shape[0] != y_val.size:
        raise ValidationError("features and labels do not align")

    loss_fn, loss_meta = _resolve_loss(cfg, y_train)
    smoothing = model.spec.label_smoothing
    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    state = AdamState.for_params(params)
    adam_cfg = AdamConfig(
        lr=cfg.lr, weight_decay=cfg.weight_decay,
        beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps,
    )
    schedule = StepDecay(step_size=cfg.scheduler_step, gamma=cfg.scheduler_gamma)
    has_bn = any(model.spec.batch_norm)
    n = X_train.shape[0]
    if cfg.sampler == "balanced":
        w = class_balance_weights(y_train)
        sample_p = w / w.sum()

    result = TrainResult(model=model.copy())
    best_metric = None
    es_best = float("inf")
    es_bad = 0

    for epoch in range(cfg.epochs):
        lr = schedule.lr_at(epoch, cfg.lr)
        if cfg.sampler == "balanced":
            order = rng.choice(n, size=n, replace=True, p=sample_p)
        else:
            order = rng.permutation(n)
        model.train_mode()
        total_loss = 0.0
        total_correct = 0
        total_seen = 0
        for batch_idx in _batches(order, cfg.batch_size, fold_singletons=has_bn):
            Xb = X_train[batch_idx]
            yb = y_train[batch_idx]
            if cfg.feature_noise_sigma > 0:
                Xb = Xb + rng.normal(0.0, cfg.feature_noise_sigma, size=Xb.shape)
            probs, cache = forward(model, Xb, rng=rng)
            loss, dlogits = loss_fn(probs, yb, smoothing)
            grads = backward(model, cache, dlogits)
            adam_step(params, grads, state, adam_cfg, lr=lr)
            total_loss += loss * batch_idx.size
            pos = positive_probs(model, probs)
            total_correct += int(((pos >= 0.5).astype(np.int64) == yb).sum())
            total_seen += batch_idx.size
        train_loss = total_loss / total_seen
        train_acc = total_correct / total_seen

        model.eval_mode()
        val_probs, _ = forward(model, X_val)
        val_loss, _ = loss_fn(val_probs, y_val, smoothing)
        val_pos = positive_probs(model, val_probs)
        val_bal_acc = balanced_accuracy(y_val, (val_pos >= 0.5).astype(np.int64))

        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise TrainingError(
                f"training diverged at epoch {epoch} "
                f"(train_loss={train_loss}, val_loss={val_loss})",
                epoch=epoch,
            )
        result.history.append(
            EpochStats(
                epoch=epoch,
                train_loss=float(train_loss),
                train_acc=float(train_acc),
                val_loss=float(val_loss),
                val_bal_acc=float(val_bal_acc),
            )
        )

        if cfg.selection == "val_loss":
            metric, better = val_loss, (best_metric is None or val_loss < best_metric)
        else:
            metric, better = val_bal_acc, (best_metric is None or val_bal_acc > best_metric)
        if better:
            best_metric = metric
            result.model = model.copy().eval_mode()
            result.best_epoch = epoch
            result.best_val_loss = float(val_loss)
            result.best_val_bal_acc = float(val_bal_acc)

        if cfg.early_stopping_patience is not None:
            if val_loss < es_best:
                es_best = val_loss
                es_bad = 0
            else:
                es_bad += 1
                if es_bad > cfg.early_stopping_patience:
                    break
    result.loss_meta = loss_meta
    return result
