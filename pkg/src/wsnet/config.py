"""Network/training configuration files.

Line-oriented, INI-like::

    [net]
    input_len = 4096
    in_channels = 1
    classes = 4

    [train]
    lr = 0.001
    batch = 32

    [layer conv1]
    kind = conv
    L = 32
    N = 16
    S = 16
    stride = 2
    pool = max
    pool_k = 8
    bn = 1

Every error carries the offending line number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

from .conv import output_length
from .optim import TrainHyper
from .sampling import SamplingError, SamplingSpec, make_sampling_spec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LayerDef:
    name: str
    kind: str
    N: int
    L: int | None = None
    S: int | None = None
    C: int = 1
    D: int = 1
    stride: int = 1
    padding: str = "same"
    pool: str = "none"
    pool_k: int = 2
    bn: bool = False
    dropout_keep: float = 1.0
    ref_madds: float | None = None
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class NetworkSpec:
    input_len: int
    in_channels: int
    classes: int
    layers: tuple[LayerDef, ...]


@dataclass(frozen=True)
class ResolvedLayer:
    """A layer with its input geometry fixed by shape propagation."""

    layer: LayerDef
    T_in: int
    M_in: int
    T_out: int          # after the convolution/fc, before pooling
    T_next: int         # after pooling
    sampling: SamplingSpec | None   # conv layers only
    n_in: int | None = None         # fc layers only
    fc_S: int | None = None


POOL_STRIDE = 2

_INT_KEYS = {"L", "N", "S", "C", "D", "stride", "pool_k"}
_LAYER_KEYS = {"kind", "padding", "pool", "bn", "dropout_keep", "ref_madds"} | _INT_KEYS
_NET_KEYS = {"input_len": int, "in_channels": int, "classes": int}
_TRAIN_KEYS = {f.name: f.type for f in fields(TrainHyper)}
_KINDS = ("conv", "fc")


def _convert(key: str, raw: str, kind, lineno: int):
    try:
        if kind in (bool, "bool"):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind in (int, "int"):
            return int(raw)
        if kind in (float, "float"):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"line {lineno}: bad value for {key}: {raw!r}") from None


def _layer_value(key: str, raw: str, lineno: int):
    if key in _INT_KEYS:
        return _convert(key, raw, int, lineno)
    if key == "bn":
        return _convert(key, raw, bool, lineno)
    if key in ("dropout_keep", "ref_madds"):
        return _convert(key, raw, float, lineno)
    return raw


def parse_config(text: str) -> tuple[NetworkSpec, TrainHyper]:
    net: dict = {}
    train: dict = {}
    layers: list[tuple[str, int, dict]] = []
    seen_sections: set[str] = set()
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"line {lineno}: malformed section header {line!r}")
            head = line[1:-1].split()
            if head == ["net"] or head == ["train"]:
                if head[0] in seen_sections:
                    raise ConfigError(f"line {lineno}: duplicate [{head[0]}] section")
                seen_sections.add(head[0])
                current = (head[0], net if head[0] == "net" else train)
            elif len(head) == 2 and head[0] == "layer":
                name = head[1]
                if any(name == other for other, _, _ in layers):
                    raise ConfigError(f"line {lineno}: duplicate layer name {name!r}")
                entry: dict = {}
                layers.append((name, lineno, entry))
                current = ("layer", entry)
            else:
                raise ConfigError(f"line {lineno}: unknown section {line!r}")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside of any section")
        key, value = (part.strip() for part in line.split("=", 1))
        section, target = current
        if key in target:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if section == "net":
            if key not in _NET_KEYS:
                raise ConfigError(f"line {lineno}: unknown key {key!r} in [net]")
            target[key] = (_convert(key, value, _NET_KEYS[key], lineno), lineno)
        elif section == "train":
            if key not in _TRAIN_KEYS:
                raise ConfigError(f"line {lineno}: unknown key {key!r} in [train]")
            target[key] = (_convert(key, value, _TRAIN_KEYS[key], lineno), lineno)
        else:
            if key not in _LAYER_KEYS:
                raise ConfigError(f"line {lineno}: unknown key {key!r} in layer section")
            target[key] = (_layer_value(key, value, lineno), lineno)

    if not layers:
        raise ConfigError("no layers")
    for key in _NET_KEYS:
        if key not in net:
            raise ConfigError(f"[net] is missing required key {key!r}")

    defs = []
    for name, lineno, entry in layers:
        values = {k: v for k, (v, _) in entry.items()}
        kind = values.get("kind")
        if kind not in _KINDS:
            raise ConfigError(f"line {lineno}: layer {name}: kind must be one of {_KINDS}, got {kind!r}")
        if "N" not in values:
            raise ConfigError(f"line {lineno}: layer {name}: missing N")
        if kind == "conv" and "L" not in values:
            raise ConfigError(f"line {lineno}: layer {name}: missing L")
        defs.append(LayerDef(name=name, line=lineno, **values))

    spec = NetworkSpec(input_len=net["input_len"][0], in_channels=net["in_channels"][0],
                       classes=net["classes"][0], layers=tuple(defs))
    hyper = TrainHyper(**{k: v for k, (v, _) in train.items()})
    try:
        hyper.validate()
    except ValueError as exc:
        raise ConfigError(f"[train]: {exc}") from None
    resolve(spec)
    return spec, hyper


def resolve(spec: NetworkSpec, input_len: int | None = None) -> list[ResolvedLayer]:
    """Propagate shapes through ``spec`` and validate every layer.

    ``input_len`` overrides ``spec.input_len``.
    """
    T = spec.input_len if input_len is None else input_len
    M = spec.in_channels
    if T < 1 or M < 1:
        raise ConfigError("input_len and in_channels must be >= 1")
    if spec.classes < 1:
        raise ConfigError("classes must be >= 1")
    if not spec.layers:
        raise ConfigError("no layers")
    out = []
    seen_fc = False
    for i, layer in enumerate(spec.layers):
        where = f"line {layer.line}: layer {layer.name}"
        last = i == len(spec.layers) - 1
        if layer.pool not in ("none", "max"):
            raise ConfigError(f"{where}: pool must be 'none' or 'max', got {layer.pool!r}")
        if layer.pool == "max" and layer.pool_k < 1:
            raise ConfigError(f"{where}: pool_k must be >= 1")
        if not 0 < layer.dropout_keep <= 1:
            raise ConfigError(f"{where}: dropout_keep must lie in (0, 1]")
        if layer.kind == "conv":
            if seen_fc:
                raise ConfigError(f"{where}: conv layer after an fc layer")
            S = layer.L if layer.S is None else layer.S
            try:
                sampling = make_sampling_spec(layer.L, layer.N, S, layer.C, M,
                                              layer.stride, layer.D, layer.padding)
            except SamplingError as exc:
                raise ConfigError(f"{where}: {exc}") from None
            T_out = output_length(T, layer.L, layer.stride, layer.padding)
            if T_out < 1:
                raise ConfigError(f"{where}: input length {T} shorter than filter length {layer.L}")
            T_next = math.ceil(T_out / POOL_STRIDE) if layer.pool == "max" else T_out
            out.append(ResolvedLayer(layer, T, M, T_out, T_next, sampling))
        else:
            seen_fc = True
            n_in = T * M
            if layer.L is not None and layer.L != n_in:
                raise ConfigError(f"{where}: L={layer.L} but the flattened input has {n_in} values")
            if layer.C != 1 or layer.D != 1:
                raise ConfigError(f"{where}: fc layers support spatial sampling only (C=1, D=1)")
            if layer.pool != "none":
                raise ConfigError(f"{where}: fc layers cannot pool")
            S = n_in if layer.S is None else layer.S
            if not 1 <= S <= n_in:
                raise ConfigError(f"{where}: S={S} must lie in [1, {n_in}]")
            if layer.N < 1:
                raise ConfigError(f"{where}: N must be >= 1")
            out.append(ResolvedLayer(layer, T, M, 1, 1, None, n_in=n_in, fc_S=S))
            T_out = T_next = 1
        T, M = T_next, layer.N
        if last and layer.N != spec.classes:
            raise ConfigError(f"{where}: last layer has N={layer.N} but classes={spec.classes}")
    return out


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_config(spec: NetworkSpec, hyper: TrainHyper | None = None) -> str:
    lines = ["[net]",
             f"input_len = {spec.input_len}",
             f"in_channels = {spec.in_channels}",
             f"classes = {spec.classes}",
             ""]
    if hyper is not None:
        lines.append("[train]")
        for f in fields(TrainHyper):
            lines.append(f"{f.name} = {_fmt(getattr(hyper, f.name))}")
        lines.append("")
    for layer in spec.layers:
        lines.append(f"[layer {layer.name}]")
        for f in fields(LayerDef):
            if f.name in ("name", "line"):
                continue
            value = getattr(layer, f.name)
            if value is None:
                continue
            lines.append(f"{f.name} = {_fmt(value)}")
        lines.append("")
    return "\n".join(lines)


def with_layers(spec: NetworkSpec, layers) -> NetworkSpec:
    return replace(spec, layers=tuple(layers))
