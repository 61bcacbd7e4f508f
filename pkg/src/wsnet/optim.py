"""Adam with a fixed learning rate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class TrainHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch: int = 64
    init_std: float = 0.01
    iters: int = 1000
    seed: int = 0
    eval_every: int = 100
    holdout: float = 0.2
    fast: bool = False

    def validate(self) -> None:
        if not self.lr >= 0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0 < b < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {b}")
        if self.eps <= 0 or self.init_std < 0:
            raise ValueError("eps must be > 0 and init_std >= 0")
        if self.batch < 1 or self.iters < 0 or self.eval_every < 1:
            raise ValueError("batch and eval_every must be >= 1, iters >= 0")
        if not 0 <= self.holdout < 1:
            raise ValueError(f"holdout must lie in [0, 1), got {self.holdout}")


@dataclass
class AdamState:
    step: int
    m: dict
    v: dict


def adam_init(params: dict) -> AdamState:
    return AdamState(step=0,
                     m={k: np.zeros_like(p) for k, p in params.items()},
                     v={k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict, grads: dict, state: AdamState, hyper: TrainHyper) -> None:
    """Update ``params`` and ``state`` in place.

    Raises FloatingPointError before touching anything if a gradient is not
    finite.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in {name} at step {state.step + 1}")
    state.step += 1
    t = state.step
    c1 = 1.0 - hyper.beta1 ** t
    c2 = 1.0 - hyper.beta2 ** t
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= hyper.beta1
        m += (1.0 - hyper.beta1) * g
        v *= hyper.beta2
        v += (1.0 - hyper.beta2) * g * g
        params[name] -= hyper.lr * (m / c1) / (np.sqrt(v / c2) + hyper.eps)
