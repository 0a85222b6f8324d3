"""Loss functions over the network's probability heads.

Each returns ``(scalar_loss, gradient_wrt_output_logits)``. Probabilities
are clamped at 1e-12 inside the logs so a saturated prediction yields a
large finite loss, never NaN. Class weighting is unnormalized: doubling
every weight doubles the loss and leaves the argmin unchanged.
"""

import numpy as np

from ..errors import ValidationError

EPS = 1e-12


def _check_labels(labels, n: int) -> np.ndarray:
    y = np.asarray(labels).astype(np.int64).ravel()
    if y.size != n:
        raise ValidationError(f"{y.size} labels for {n} predictions")
    if not np.isin(y, (0, 1)).all():
        raise ValidationError("labels must be 0/1")
    return y


def weighted_cross_entropy(probs, labels, class_weights=(1.0, 1.0), label_smoothing=0.0):
    """Per-true-class weighted CE over a 2-unit softmax head.

    loss = mean_i w[y_i] * sum_c -q_ic log p_ic, where q is the one-hot
    target smoothed by ``label_smoothing`` (q = (1-s)*onehot + s/2).
    Gradient w.r.t. the two logits: w[y_i] * (p_i - q_i) / n.
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 2:
        raise ValidationError(f"expected (n, 2) softmax probabilities, got {p.shape}")
    y = _check_labels(labels, p.shape[0])
    w0, w1 = float(class_weights[0]), float(class_weights[1])
    if w0 <= 0 or w1 <= 0:
        raise ValidationError(f"class weights must be positive, got {class_weights}")
    if not 0.0 <= label_smoothing < 0.5:
        raise ValidationError(f"label_smoothing must lie in [0, 0.5), got {label_smoothing}")
    n = p.shape[0]
    q = np.full((n, 2), label_smoothing / 2.0)
    q[np.arange(n), y] = 1.0 - label_smoothing / 2.0
    w = np.where(y == 1, w1, w0).astype(np.float64)
    loss = float(np.mean(w * -(q * np.log(np.clip(p, EPS, 1.0))).sum(axis=1)))
    dlogits = w[:, None] * (p - q) / n
    return loss, dlogits


def bce_pos_weight(probs, labels, pos_weight=1.0):
    """Binary cross-entropy over a sigmoid head, positive term scaled.

    loss = mean_i [ -pos_weight * y_i log p_i - (1 - y_i) log(1 - p_i) ];
    pos_weight = 1 is plain BCE. Gradient w.r.t. the logit:
    (-pos_weight * y * (1 - p) + (1 - y) * p) / n.
    """
    p = np.asarray(probs, dtype=np.float64)
    flat = p.ravel()
    y = _check_labels(labels, flat.size)
    pw = float(pos_weight)
    if pw <= 0:
        raise ValidationError(f"pos_weight must be positive, got {pos_weight}")
    pc = np.clip(flat, EPS, 1.0 - EPS)
    n = flat.size
    loss = float(np.mean(-pw * y * np.log(pc) - (1 - y) * np.log(1.0 - pc)))
    dlogit = (-pw * y * (1.0 - flat) + (1 - y) * flat) / n
    return loss, dlogit.reshape(p.shape)
