"""Adam with decoupled weight decay, and a step-decay learning schedule."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import OptimizerError


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise OptimizerError(f"learning rate must be positive, got {self.lr}")
        if self.weight_decay < 0:
            raise OptimizerError(f"weight decay must be >= 0, got {self.weight_decay}")


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            t=0,
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    cfg: AdamConfig,
    lr: float | None = None,
) -> None:
    """One in-place update; decay is applied before the Adam delta
    (params *= 1 - lr*wd, then the bias-corrected moment update)."""
    step_lr = cfg.lr if lr is None else lr
    state.t += 1
    b1t = 1.0 - cfg.beta1**state.t
    b2t = 1.0 - cfg.beta2**state.t
    for name, p in params.items():
        g = grads[name]
        if not np.isfinite(g).all():
            raise OptimizerError(f"non-finite gradient in tensor {name!r}")
        if cfg.weight_decay:
            p *= 1.0 - step_lr * cfg.weight_decay
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        p -= step_lr * (m / b1t) / (np.sqrt(v / b2t) + cfg.eps)


@dataclass(frozen=True)
class StepDecay:
    """lr(epoch) = base * gamma ** (epoch // step_size)."""

    step_size: int = 20
    gamma: float = 0.5

    def lr_at(self, epoch: int, base_lr: float) -> float:
        if self.step_size <= 0:
            return base_lr
        return base_lr * self.gamma ** (epoch // self.step_size)
