"""From-scratch feed-forward network: spec, parameters, forward/backward.

Layer stack per hidden layer: linear -> (batch norm) -> ReLU -> (dropout).
The output layer is linear into either a 1-unit sigmoid head or a 2-unit
softmax head. Batch norm normalizes with biased batch statistics in train
mode (running stats updated with unbiased variance, momentum 0.1) and
with the running statistics in eval mode; dropout is inverted (survivors
scaled by 1/(1-p)) and is the identity in eval mode.

``forward`` returns the cache needed for an exact ``backward`` pass given
the loss gradient with respect to the output logits.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from ..io import atomic_write_bytes

BN_EPS = 1e-5
BN_MOMENTUM = 0.1

MODEL_FORMAT = "modfuse-model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple[int, ...]  # input, hidden..., output
    dropout: tuple[float, ...] = ()  # per hidden layer
    batch_norm: tuple[bool, ...] = ()  # per hidden layer
    output: str = "sigmoid"  # sigmoid | softmax
    label_smoothing: float = 0.0

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 3:
            raise ValidationError(
                f"need input, >=1 hidden and output sizes, got {sizes}"
            )
        if min(sizes) < 1:
            raise ValidationError(f"layer sizes must be positive, got {sizes}")
        n_hidden = len(sizes) - 2
        dropout = tuple(float(p) for p in self.dropout) or (0.0,) * n_hidden
        batch_norm = tuple(bool(b) for b in self.batch_norm) or (False,) * n_hidden
        if len(dropout) != n_hidden:
            raise ValidationError(
                f"dropout list length {len(dropout)} != hidden layer count {n_hidden}"
            )
        if len(batch_norm) != n_hidden:
            raise ValidationError(
                f"batch_norm list length {len(batch_norm)} != hidden layer count {n_hidden}"
            )
        if any(not 0.0 <= p < 1.0 for p in dropout):
            raise ValidationError(f"dropout rates must lie in [0, 1), got {dropout}")
        object.__setattr__(self, "dropout", dropout)
        object.__setattr__(self, "batch_norm", batch_norm)
        if self.output not in ("sigmoid", "softmax"):
            raise ValidationError(f"unknown output head {self.output!r}")
        if self.output == "sigmoid" and sizes[-1] != 1:
            raise ValidationError("sigmoid head requires output size 1")
        if self.output == "softmax" and sizes[-1] != 2:
            raise ValidationError("softmax head requires output size 2")
        if not 0.0 <= self.label_smoothing < 0.5:
            raise ValidationError(
                f"label_smoothing must lie in [0, 0.5), got {self.label_smoothing}"
            )

    @property
    def n_hidden(self) -> int:
        return len(self.layer_sizes) - 2

    @property
    def input_width(self) -> int:
        return self.layer_sizes[0]

    def as_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "dropout": list(self.dropout),
            "batch_norm": list(self.batch_norm),
            "output": self.output,
            "label_smoothing": self.label_smoothing,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        return cls(
            layer_sizes=tuple(d["layer_sizes"]),
            dropout=tuple(d["dropout"]),
            batch_norm=tuple(d["batch_norm"]),
            output=d["output"],
            label_smoothing=d["label_smoothing"],
        )


class MlpModel:
    """Parameter container; exclusively owned while training."""

    def __init__(self, spec: MlpSpec, weights, biases, bn_gamma, bn_beta, bn_mean, bn_var):
        self.spec = spec
        self.weights = weights
        self.biases = biases
        self.bn_gamma = bn_gamma
        self.bn_beta = bn_beta
        self.bn_mean = bn_mean
        self.bn_var = bn_var
        self.training = False

    @classmethod
    def init(cls, spec: MlpSpec, seed: int = 0) -> "MlpModel":
        """Seeded uniform fan-in init: U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
        rng = np.random.default_rng(seed)
        sizes = spec.layer_sizes
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        bn_gamma, bn_beta, bn_mean, bn_var = [], [], [], []
        for i in range(spec.n_hidden):
            width = sizes[i + 1]
            if spec.batch_norm[i]:
                bn_gamma.append(np.ones(width))
                bn_beta.append(np.zeros(width))
                bn_mean.append(np.zeros(width))
                bn_var.append(np.ones(width))
            else:
                bn_gamma.append(None)
                bn_beta.append(None)
                bn_mean.append(None)
                bn_var.append(None)
        return cls(spec, weights, biases, bn_gamma, bn_beta, bn_mean, bn_var)

    # -- mode -----------------------------------------------------------
    def train_mode(self) -> "MlpModel":
        self.training = True
        return self

    def eval_mode(self) -> "MlpModel":
        self.training = False
        return self

    # -- parameter access -------------------------------------------------
    def parameters(self) -> dict[str, np.ndarray]:
        """Trainable tensors by name (weights, biases, bn scale/shift)."""
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"w{i}"] = w
            out[f"b{i}"] = b
        for i in range(self.spec.n_hidden):
            if self.bn_gamma[i] is not None:
                out[f"bn{i}_gamma"] = self.bn_gamma[i]
                out[f"bn{i}_beta"] = self.bn_beta[i]
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        """Non-trainable state (batch-norm running statistics)."""
        out = {}
        for i in range(self.spec.n_hidden):
            if self.bn_mean[i] is not None:
                out[f"bn{i}_mean"] = self.bn_mean[i]
                out[f"bn{i}_var"] = self.bn_var[i]
        return out

    def set_parameters(self, params: dict[str, np.ndarray]) -> None:
        own = self.parameters()
        for name, arr in params.items():
            own[name][...] = arr

    def copy(self) -> "MlpModel":
        clone = MlpModel(
            self.spec,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            [g.copy() if g is not None else None for g in self.bn_gamma],
            [b.copy() if b is not None else None for b in self.bn_beta],
            [m.copy() if m is not None else None for m in self.bn_mean],
            [v.copy() if v is not None else None for v in self.bn_var],
        )
        clone.training = self.training
        return clone


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    ez = np.exp(shifted)
    return ez / ez.sum(axis=1, keepdims=True)


def forward(model: MlpModel, batch: np.ndarray, rng=None, dropout_masks=None):
    """Run the network; returns (probabilities, cache for backward).

    Train mode draws dropout masks from ``rng`` unless explicit
    ``dropout_masks`` (one per hidden layer, or None entries) are given,
    and requires batches of at least 2 rows wherever batch norm is active.
    Eval mode is deterministic.
    """
    X = np.asarray(batch, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.spec.input_width:
        raise ValidationError(
            f"batch shape {X.shape} incompatible with input width "
            f"{model.spec.input_width}"
        )
    spec = model.spec
    training = model.training
    cache = {"input": X, "layers": [], "training": training}
    a = X
    for i in range(spec.n_hidden):
        layer: dict = {"a_in": a}
        z = a @ model.weights[i] + model.biases[i]
        layer["z"] = z
        if spec.batch_norm[i]:
            if training:
                if X.shape[0] < 2:
                    raise ValidationError(
                        "batch norm in train mode needs batches of >= 2 rows"
                    )
                mean = z.mean(axis=0)
                var = z.var(axis=0)
                inv_std = 1.0 / np.sqrt(var + BN_EPS)
                xhat = (z - mean) * inv_std
                nb = z.shape[0]
                model.bn_mean[i][...] = (1 - BN_MOMENTUM) * model.bn_mean[i] + BN_MOMENTUM * mean
                model.bn_var[i][...] = (
                    (1 - BN_MOMENTUM) * model.bn_var[i]
                    + BN_MOMENTUM * var * nb / (nb - 1)
                )
            else:
                inv_std = 1.0 / np.sqrt(model.bn_var[i] + BN_EPS)
                xhat = (z - model.bn_mean[i]) * inv_std
            layer["xhat"] = xhat
            layer["inv_std"] = inv_std
            h = model.bn_gamma[i] * xhat + model.bn_beta[i]
        else:
            h = z
        pre_act = h
        layer["pre_act"] = pre_act
        h = np.maximum(pre_act, 0.0)
        p = spec.dropout[i]
        if training and p > 0.0:
            if dropout_masks is not None and dropout_masks[i] is not None:
                mask = dropout_masks[i]
            else:
                if rng is None:
                    raise ValidationError(
                        "train-mode forward with dropout needs an rng or explicit masks"
                    )
                mask = (rng.random(h.shape) >= p) / (1.0 - p)
            layer["mask"] = mask
            h = h * mask
        else:
            layer["mask"] = None
        layer["a_out"] = h
        cache["layers"].append(layer)
        a = h
    z_out = a @ model.weights[-1] + model.biases[-1]
    cache["a_last"] = a
    cache["z_out"] = z_out
    probs = _sigmoid(z_out) if spec.output == "sigmoid" else _softmax(z_out)
    return probs, cache


def backward(model: MlpModel, cache: dict, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    """Exact gradients of the loss w.r.t. every trainable tensor.

    ``dlogits`` is the loss gradient at the output-layer logits, as
    returned by the loss functions.
    """
    spec = model.spec
    grads: dict[str, np.ndarray] = {}
    n_lin = len(model.weights)
    a_last = cache["a_last"]
    grads[f"w{n_lin - 1}"] = a_last.T @ dlogits
    grads[f"b{n_lin - 1}"] = dlogits.sum(axis=0)
    da = dlogits @ model.weights[-1].T
    training = cache["training"]
    for i in reversed(range(spec.n_hidden)):
        layer = cache["layers"][i]
        if layer["mask"] is not None:
            da = da * layer["mask"]
        dpre = da * (layer["pre_act"] > 0)
        if spec.batch_norm[i]:
            xhat = layer["xhat"]
            inv_std = layer["inv_std"]
            grads[f"bn{i}_gamma"] = (dpre * xhat).sum(axis=0)
            grads[f"bn{i}_beta"] = dpre.sum(axis=0)
            dxhat = dpre * model.bn_gamma[i]
            if training:
                nb = xhat.shape[0]
                dz = (
                    dxhat
                    - dxhat.mean(axis=0)
                    - xhat * (dxhat * xhat).mean(axis=0)
                ) * inv_std
            else:
                dz = dxhat * inv_std
        else:
            dz = dpre
        grads[f"w{i}"] = layer["a_in"].T @ dz
        grads[f"b{i}"] = dz.sum(axis=0)
        da = dz @ model.weights[i].T
    return grads


def positive_probs(model_or_spec, probs: np.ndarray) -> np.ndarray:
    """Positive-class probability as a flat vector, whatever the head."""
    spec = model_or_spec.spec if isinstance(model_or_spec, MlpModel) else model_or_spec
    if spec.output == "sigmoid":
        return probs[:, 0]
    return probs[:, 1]


def predict_probs(model: MlpModel, X: np.ndarray) -> np.ndarray:
    """Eval-mode positive-class probabilities."""
    was_training = model.training
    model.eval_mode()
    try:
        probs, _ = forward(model, X)
    finally:
        model.training = was_training
    return positive_probs(model, probs)


def extract_embedding(model: MlpModel, batch: np.ndarray, layer_index: int) -> np.ndarray:
    """Post-activation values of one hidden layer, eval mode.

    ``layer_index`` is 0-based over hidden layers; the returned width is
    that layer's size.
    """
    spec = model.spec
    if not 0 <= layer_index < spec.n_hidden:
        raise ValidationError(
            f"layer_index {layer_index} out of range for {spec.n_hidden} hidden layers"
        )
    was_training = model.training
    model.eval_mode()
    try:
        _, cache = forward(model, batch)
    finally:
        model.training = was_training
    return cache["layers"][layer_index]["a_out"].copy()


# ---------------------------------------------------------------------------
# persistence: JSON header + little-endian float64 tensors
# ---------------------------------------------------------------------------

def _tensor_entries(model: MlpModel):
    entries = list(model.parameters().items()) + list(model.buffers().items())
    return entries


def save_model(model: MlpModel, path, meta: dict | None = None) -> None:
    """Versioned binary container: u64-LE header length, JSON header,
    float64-LE tensors in the header's declared order."""
    entries = _tensor_entries(model)
    header = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "spec": model.spec.as_dict(),
        "tensors": [{"name": n, "shape": list(t.shape)} for n, t in entries],
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [struct.pack("<Q", len(blob)), blob]
    for _, tensor in entries:
        parts.append(np.ascontiguousarray(tensor, dtype="<f8").tobytes())
    atomic_write_bytes(path, b"".join(parts))


def load_model(path) -> tuple[MlpModel, dict]:
    """Inverse of ``save_model``; returns (model in eval mode, meta)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise ValidationError(f"{path}: truncated model file")
    (hlen,) = struct.unpack("<Q", raw[:8])
    try:
        header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{path}: corrupt model header: {exc}") from exc
    if header.get("format") != MODEL_FORMAT:
        raise ValidationError(f"{path}: not a model file (format {header.get('format')!r})")
    if header.get("version") != MODEL_VERSION:
        raise ValidationError(
            f"{path}: unsupported model version {header.get('version')!r}"
        )
    spec = MlpSpec.from_dict(header["spec"])
    model = MlpModel.init(spec, seed=0)
    offset = 8 + hlen
    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + count * 8
        if end > len(raw):
            raise ValidationError(f"{path}: truncated tensor {entry['name']!r}")
        tensors[entry["name"]] = (
            np.frombuffer(raw[offset:end], dtype="<f8").reshape(shape).astype(np.float64)
        )
        offset = end
    own = dict(model.parameters(), **model.buffers())
    if set(own) != set(tensors):
        raise ValidationError(
            f"{path}: tensor names {sorted(tensors)} do not match spec {sorted(own)}"
        )
    for name, arr in tensors.items():
        own[name][...] = arr
    model.eval_mode()
    return model, header.get("meta", {})
