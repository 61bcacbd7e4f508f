"""Mini-batch training with Adam and periodic held-out evaluation."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, DatasetError
from .network import Network, backward_network, forward_network, predict
from .optim import TrainHyper, adam_init, adam_step


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, reason: str):
        super().__init__(f"training diverged at iteration {iteration}: {reason}")
        self.iteration = iteration


@dataclass
class TrainResult:
    losses: list[float] = field(default_factory=list)     # one per iteration
    log: list[str] = field(default_factory=list)
    eval_acc: list[tuple[int, float]] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def final_acc(self) -> float | None:
        return self.eval_acc[-1][1] if self.eval_acc else None


def accuracy(net: Network, ds: Dataset) -> float:
    if len(ds) == 0:
        raise DatasetError("cannot evaluate on an empty dataset")
    return float(np.mean(predict(net, ds.clips) == ds.labels))


def _check_inputs(net: Network, ds: Dataset) -> None:
    spec = net.spec
    if spec is not None and ds.length != spec.input_len:
        raise DatasetError(f"dataset clips have length {ds.length}, network expects {spec.input_len}")
    if spec is not None and ds.num_classes > spec.classes:
        raise DatasetError(f"dataset has {ds.num_classes} classes, network outputs {spec.classes}")


def train(net: Network, train_set: Dataset, hyper: TrainHyper, eval_set: Dataset | None = None,
          log=None) -> TrainResult:
    """Train ``net`` in place.

    Every ``eval_every`` iterations (and after the last one) a line
    ``iter=<n> loss=<mean loss since last line> acc=<held-out accuracy>`` is
    appended to the result and passed to ``log``.  Without ``eval_set`` the
    accuracy is measured on the training set.
    """
    hyper.validate()
    if len(train_set) == 0:
        raise DatasetError("training set is empty")
    _check_inputs(net, train_set)
    rng = np.random.default_rng(hyper.seed)
    state = adam_init(net.parameters())
    result = TrainResult()
    order = np.empty(0, dtype=np.int64)
    pos = 0
    window: list[float] = []
    start = time.perf_counter()
    batch = min(hyper.batch, len(train_set))
    for it in range(1, hyper.iters + 1):
        if pos + batch > len(order):
            order = rng.permutation(len(train_set))
            pos = 0
        idx = order[pos:pos + batch]
        pos += batch
        _, cache = forward_network(net, train_set.clips[idx], "train", rng)
        grads = backward_network(net, cache, train_set.labels[idx])
        if not np.isfinite(grads.loss):
            raise TrainingDiverged(it, f"loss is {grads.loss}")
        try:
            adam_step(net.parameters(), grads.grads, state, hyper)
        except FloatingPointError as exc:
            raise TrainingDiverged(it, str(exc)) from None
        net.version += 1
        result.losses.append(grads.loss)
        window.append(grads.loss)
        if it % hyper.eval_every == 0 or it == hyper.iters:
            acc = accuracy(net, eval_set if eval_set is not None and len(eval_set) else train_set)
            result.eval_acc.append((it, acc))
            line = f"iter={it} loss={np.mean(window):.6f} acc={acc:.6f}"
            window = []
            result.log.append(line)
            if log is not None:
                log(line)
    result.seconds = time.perf_counter() - start
    return result
