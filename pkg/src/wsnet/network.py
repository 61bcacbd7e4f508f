"""Networks assembled from a :class:`~wsnet.config.NetworkSpec`.

Each conv layer expands to: sampled conv (+ 1x1 reduction when ``D > 1``),
ReLU, optional batch norm, optional max pool, optional dropout.  Fc layers
expand to sampled fc, ReLU, optional dropout.  The last conv/fc layer gets no
ReLU; if its output still has a time axis it is averaged over time to form
the logits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import NetworkSpec, format_config, resolve
from .layers import (BatchNorm, Dropout, GlobalAvgPool, MaxPool, ReLU, SampledConv, SampledFC,
                     Unit, cross_entropy_with_grad)
from .optim import TrainHyper


class StaleCacheError(RuntimeError):
    pass


@dataclass
class Network:
    units: list[Unit]
    spec: NetworkSpec | None = None
    hyper: TrainHyper | None = None
    version: int = 0

    def parameters(self) -> dict[str, np.ndarray]:
        """Learnable arrays keyed ``<unit>.<param>`` (live references)."""
        return {f"{u.name}.{k}": v for u in self.units for k, v in u.params.items()}

    def buffers(self) -> dict[str, np.ndarray]:
        return {f"{u.name}.{k}": v for u in self.units for k, v in u.buffers.items()}

    def state(self) -> dict[str, np.ndarray]:
        return {**self.parameters(), **self.buffers()}

    def load_state(self, tensors: dict[str, np.ndarray]) -> None:
        current = self.state()
        missing = set(current) - set(tensors)
        if missing:
            raise KeyError(f"missing tensors: {sorted(missing)}")
        for unit in self.units:
            for store in (unit.params, unit.buffers):
                for k in store:
                    value = np.asarray(tensors[f"{unit.name}.{k}"], dtype=np.float64)
                    if value.shape != store[k].shape:
                        raise ValueError(f"{unit.name}.{k}: shape {value.shape} != {store[k].shape}")
                    store[k] = value.copy()
        self.version += 1

    def set_fast(self, fast: bool) -> None:
        for unit in self.units:
            if isinstance(unit, SampledConv):
                unit.fast = fast

    @property
    def config_text(self) -> str | None:
        if self.spec is None:
            return None
        return format_config(self.spec, self.hyper)


def build_network(spec: NetworkSpec, hyper: TrainHyper | None = None, seed: int | None = None,
                  input_len: int | None = None) -> Network:
    hyper = hyper if hyper is not None else TrainHyper()
    rng = np.random.default_rng(hyper.seed if seed is None else seed)
    resolved = resolve(spec, input_len)
    units: list[Unit] = []
    last = len(resolved) - 1
    for i, r in enumerate(resolved):
        layer = r.layer
        if layer.kind == "conv":
            units.append(SampledConv(layer.name, r.sampling, rng, hyper.init_std, hyper.fast))
        else:
            units.append(SampledFC(layer.name, r.n_in, layer.N, r.fc_S, rng, hyper.init_std))
        if i != last:
            units.append(ReLU(f"{layer.name}.relu"))
        if layer.bn:
            units.append(BatchNorm(f"{layer.name}.bn", layer.N))
        if layer.pool == "max":
            units.append(MaxPool(f"{layer.name}.pool", layer.pool_k))
        if layer.dropout_keep < 1.0:
            units.append(Dropout(f"{layer.name}.dropout", layer.dropout_keep))
    if resolved[-1].layer.kind == "conv":
        units.append(GlobalAvgPool("head"))
    return Network(units=units, spec=spec, hyper=hyper)


@dataclass
class ForwardCache:
    logits: np.ndarray
    unit_caches: list
    train: bool
    version: int


@dataclass
class Gradients:
    grads: dict[str, np.ndarray]
    loss: float
    input_grad: np.ndarray | None = field(default=None, repr=False)


def _as_batch(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[..., None]
    return x


def forward_network(net: Network, batch, mode: str = "eval", rng=None):
    """Run ``batch`` of shape ``(B, T)`` or ``(B, T, M)`` through ``net``.

    Returns ``(logits, cache)``.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    train = mode == "train"
    rng = rng if rng is not None else np.random.default_rng(0)
    x = _as_batch(batch)
    caches = []
    for unit in net.units:
        try:
            x, cache = unit.forward(x, train, rng)
        except ValueError as exc:
            raise ValueError(f"layer {unit.name}: {exc}") from None
        caches.append(cache)
    if x.ndim != 2:
        raise ValueError(f"network output has shape {x.shape}; expected (batch, classes)")
    return x, ForwardCache(x, caches, train, net.version)


def backward_network(net: Network, cache: ForwardCache | None, labels,
                     loss_scale: float = 1.0) -> Gradients:
    """Gradients of ``loss_scale * cross_entropy`` for every learnable block."""
    if cache is None:
        raise StaleCacheError("no forward cache")
    if not cache.train:
        raise StaleCacheError("cache comes from an eval-mode forward pass")
    if cache.version != net.version:
        raise StaleCacheError("parameters changed since the forward pass")
    loss, dy = cross_entropy_with_grad(cache.logits, labels)
    dy = dy * loss_scale
    grads: dict[str, np.ndarray] = {}
    for unit, unit_cache in zip(reversed(net.units), reversed(cache.unit_caches)):
        dy, unit_grads = unit.backward(dy, unit_cache)
        for k, g in unit_grads.items():
            grads[f"{unit.name}.{k}"] = g
    return Gradients(grads=grads, loss=loss * loss_scale, input_grad=dy)


def predict(net: Network, inputs, batch: int = 256) -> np.ndarray:
    """Argmax class per input; ties go to the lowest index."""
    inputs = _as_batch(inputs)
    out = []
    for start in range(0, len(inputs), batch):
        logits, _ = forward_network(net, inputs[start:start + batch], "eval")
        out.append(np.argmax(logits, axis=1))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)
