"""Minibatch SGD with Nesterov momentum and a stepped learning-rate schedule."""

from dataclasses import dataclass

import numpy as np

from ..errors import TrainingDivergenceError


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 128
    lr: float = 0.05
    momentum: float = 0.9
    lr_drop_points: tuple = (0.3, 0.6, 0.8)
    lr_drop_factor: float = 5.0
    loss: str = "sce"
    seed: int = 0
    divergence_limit: float = 1e6
    log_every: int = 0  # epochs between progress prints, 0 for silent

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        points = tuple(self.lr_drop_points)
        if any(not 0.0 < p < 1.0 for p in points):
            raise ValueError("lr_drop_points must lie strictly inside (0, 1)")
        if any(b <= a for a, b in zip(points, points[1:])):
            raise ValueError("lr_drop_points must be strictly increasing")


def _drop_epochs(cfg):
    return {int(f * cfg.epochs) for f in cfg.lr_drop_points}


def train(model, x, y, cfg, val=None):
    """Train `model` in place. Returns a per-epoch history list.

    val: optional (x_val, y_val) pair scored after each epoch.
    Raises TrainingDivergenceError when the batch loss goes non-finite or
    exceeds cfg.divergence_limit.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    rng = np.random.default_rng(cfg.seed)
    velocity = [{k: np.zeros_like(v) for k, v in p.items()} for p in model.params]
    lr = cfg.lr
    drops = _drop_epochs(cfg)
    n = x.shape[0]
    history = []
    for epoch in range(cfg.epochs):
        if epoch in drops and epoch > 0:
            lr /= cfg.lr_drop_factor
        order = rng.permutation(n)
        epoch_loss = 0.0
        batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = model.loss_param_grads(x[idx], y[idx], cfg.loss)
            if not np.isfinite(loss) or loss > cfg.divergence_limit:
                raise TrainingDivergenceError(
                    f"batch loss {loss:.4g} at epoch {epoch}, batch {batches}",
                    epoch=epoch,
                    batch=batches,
                )
            for p, v, g in zip(model.params, velocity, grads):
                for name in p:
                    v[name] = cfg.momentum * v[name] + g[name]
                    p[name] -= lr * (g[name] + cfg.momentum * v[name])
            epoch_loss += loss
            batches += 1
        record = {"epoch": epoch, "lr": lr, "loss": epoch_loss / max(batches, 1)}
        if val is not None:
            record["val_accuracy"] = accuracy(model, val[0], val[1])
        history.append(record)
        if cfg.log_every and (epoch + 1) % cfg.log_every == 0:
            extra = f" val_acc={record['val_accuracy']:.4f}" if val is not None else ""
            print(f"epoch {epoch + 1}/{cfg.epochs} loss={record['loss']:.4f}{extra}")
    return history


def accuracy(model, x, y, batch_size=256):
    y = np.asarray(y, dtype=np.int64)
    hits = 0
    for start in range(0, len(y), batch_size):
        pred = model.predict(x[start : start + batch_size])
        hits += int((pred == y[start : start + batch_size]).sum())
    return hits / len(y)
