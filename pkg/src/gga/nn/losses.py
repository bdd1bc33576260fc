"""Classification losses on raw logits.

Both losses route through a numerically stable log-softmax and return
per-sample values together with the gradient with respect to the logits.
"""

import numpy as np

LOSS_KINDS = ("sce", "mse")


def log_softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits):
    return np.exp(log_softmax(logits))


def loss_and_grad(logits, targets, kind="sce"):
    """Per-sample loss values and d(loss)/d(logits).

    logits: (n, C) float array
    targets: (n,) integer class indices
    kind: "sce" for softmax cross-entropy, "mse" for the mean squared
          difference between the softmax output and the one-hot target.
    """
    n, c = logits.shape
    rows = np.arange(n)
    if kind == "sce":
        logp = log_softmax(logits)
        losses = -logp[rows, targets]
        grad = np.exp(logp)
        grad[rows, targets] -= 1.0
        return losses, grad
    if kind == "mse":
        p = softmax(logits)
        diff = p.copy()
        diff[rows, targets] -= 1.0
        losses = (diff * diff).mean(axis=1)
        # chain through softmax: dL/dz = p * (dL/dp - <dL/dp, p>)
        dldp = 2.0 * diff / c
        grad = p * (dldp - (dldp * p).sum(axis=1, keepdims=True))
        return losses, grad
    raise ValueError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")
