"""Analytic parameter and multiply-add accounting.

Conventions:

* direct convolution costs ``T_out * M * L * N`` multiply-adds;
* the integral-image path costs, with ``T_pad`` the padded input rows it
  processes, ``T_pad*M_star*(C-1)`` (channel wrap) + ``T_pad*M_star*L_star``
  (inner products) + ``T_pad*L_star`` (prefix sums) + ``T_out*N*D``
  (lookups), plus ``T_out*N*D*N`` for the 1x1 reduction when ``D > 1``;
* pooling, batch norm and activations are free;
* fc layers always run as a dense matrix product.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

from .config import NetworkSpec, ResolvedLayer, resolve, with_layers
from .conv import padded_length
from .quant import CODEBOOK_BYTES
from .sampling import SamplingSpec


@dataclass
class LayerCost:
    name: str
    kind: str
    T_in: int
    T_out: int
    params: int
    multadds_naive: int
    multadds_fast: int
    compactness: float
    condensed: bool
    weight_blocks: int = 1
    ref_madds: float | None = None

    @property
    def speedup(self) -> float:
        return self.multadds_naive / self.multadds_fast if self.multadds_fast else 1.0


@dataclass
class CostReport:
    layers: list[LayerCost]
    notes: list[str] = field(default_factory=list)

    @property
    def params(self) -> int:
        return sum(c.params for c in self.layers)

    @property
    def multadds_naive(self) -> int:
        return sum(c.multadds_naive for c in self.layers)

    @property
    def multadds_fast(self) -> int:
        return sum(c.multadds_fast for c in self.layers)

    @property
    def size_float_bytes(self) -> int:
        return 4 * self.params

    @property
    def size_quant_bytes(self) -> int:
        return self.params + CODEBOOK_BYTES * sum(c.weight_blocks for c in self.layers)

    def layer(self, name: str) -> LayerCost:
        for c in self.layers:
            if c.name == name:
                return c
        raise KeyError(name)


def is_condensed(spec: SamplingSpec) -> bool:
    return spec.S < spec.L or spec.C > 1 or spec.D > 1


def conv_params(spec: SamplingSpec) -> int:
    extra = spec.sampled_filters * spec.N if spec.D > 1 else 0
    return spec.L_star * spec.M_star + extra


def naive_multadds(spec: SamplingSpec, T_out: int) -> int:
    n = spec.sampled_filters
    extra = T_out * n * spec.N if spec.D > 1 else 0
    return T_out * spec.M * spec.L * n + extra


def fast_multadds(spec: SamplingSpec, T_in: int, T_out: int) -> int:
    if not is_condensed(spec):
        raise ValueError("the integral-image path applies to condensed layers only")
    T = padded_length(T_in, spec.L, spec.padding)
    n = spec.sampled_filters
    extra = T_out * n * spec.N if spec.D > 1 else 0
    return (T * spec.M_star * (spec.C - 1) + T * spec.M_star * spec.L_star
            + T * spec.L_star + T_out * n + extra)


def layer_cost_naive(r: ResolvedLayer) -> LayerCost:
    """Cost of ``r`` evaluated by direct convolution / dense product."""
    layer = r.layer
    if layer.kind == "fc":
        params = r.n_in + (layer.N - 1) * r.fc_S
        madds = r.n_in * layer.N
        return LayerCost(layer.name, "fc", r.T_in, 1, params, madds, madds,
                         r.n_in * layer.N / params, r.fc_S < r.n_in,
                         ref_madds=layer.ref_madds)
    spec = r.sampling
    madds = naive_multadds(spec, r.T_out)
    params = conv_params(spec)
    return LayerCost(layer.name, "conv", r.T_in, r.T_out, params, madds, madds,
                     spec.L * spec.M * spec.N / params, is_condensed(spec),
                     weight_blocks=2 if spec.D > 1 else 1, ref_madds=layer.ref_madds)


def layer_cost_fast(r: ResolvedLayer) -> LayerCost:
    if r.layer.kind != "conv" or not is_condensed(r.sampling):
        raise ValueError(f"layer {r.layer.name} is not a condensed conv layer")
    cost = layer_cost_naive(r)
    cost.multadds_fast = fast_multadds(r.sampling, r.T_in, r.T_out)
    return cost


def speedup(r: ResolvedLayer) -> float:
    return layer_cost_fast(r).speedup


def sig(x: float, digits: int = 2) -> float:
    if x == 0:
        return 0.0
    return float(f"{x:.{digits - 1}e}")


def network_report(spec: NetworkSpec, input_len: int | None = None) -> CostReport:
    """Per-layer costs; condensed conv layers are charged the integral-image path."""
    layers = []
    notes = []
    for r in resolve(spec, input_len):
        if r.layer.kind == "conv" and is_condensed(r.sampling):
            cost = layer_cost_fast(r)
        else:
            cost = layer_cost_naive(r)
        if cost.ref_madds is not None and sig(cost.multadds_naive) != sig(cost.ref_madds):
            notes.append(
                f"{cost.name}: direct mult-adds {cost.multadds_naive:.2e} do not match the "
                f"reference {cost.ref_madds:.1e} at 2 significant figures "
                f"(T_in={cost.T_in}, T_out={cost.T_out})")
        layers.append(cost)
    return CostReport(layers, notes)


# Per-layer (spatial compactness, channel compactness, filter multiplier)
# targets for the SoundNet-derived 8-layer baseline.
def _cells(low, mid, top, d_low=1):
    groups = {"conv1": low, "conv2": low, "conv3": low, "conv4": low,
              "conv5": mid, "conv6": mid, "conv7": mid, "conv8": top}
    return {name: (s, c, d_low if name in ("conv1", "conv2", "conv3", "conv4") else 1)
            for name, (s, c) in groups.items()}


COMPACTNESS_SETTINGS = {
    "S2": _cells((2, 1), (2, 1), (2, 1)),
    "S4": _cells((4, 1), (4, 1), (4, 1)),
    "S8": _cells((8, 1), (4, 1), (8, 1)),
    "C2": _cells((1, 2), (1, 2), (1, 2)),
    "C4": _cells((1, 4), (1, 4), (1, 4)),
    "C8": _cells((1, 8), (1, 4), (1, 8)),
    "S4C4": _cells((4, 4), (4, 4), (4, 4)),
    "S8C8": _cells((4, 4), (4, 8), (8, 8)),
    "S8C4D2": _cells((4, 4), (4, 4), (8, 4), d_low=2),
    "S8C8D2": _cells((4, 4), (4, 8), (8, 8), d_low=2),
}


def _largest_divisor_at_most(m: int, c: int) -> int:
    return max(d for d in range(1, min(m, c) + 1) if m % d == 0)


def apply_compactness(spec: NetworkSpec, cells: dict) -> tuple[NetworkSpec, list[str]]:
    """Turn per-layer compactness targets into sampling strides and factors.

    ``S = L // s``; ``C`` is the largest divisor of the layer's input
    channels not above the target; ``D`` must divide the derived ``S``.
    Every clamp is reported in the returned notes.
    """
    notes = []
    resolved = {r.layer.name: r for r in resolve(spec)}
    new_layers = []
    for layer in spec.layers:
        if layer.name not in cells:
            new_layers.append(layer)
            continue
        if layer.kind != "conv":
            raise ValueError(f"compactness cells apply to conv layers, {layer.name} is {layer.kind}")
        s, c, d = cells[layer.name]
        M = resolved[layer.name].M_in
        S = max(layer.L // s, 1)
        if layer.L % s:
            notes.append(f"{layer.name}: L={layer.L} not divisible by spatial target {s}; S={S}")
        C = _largest_divisor_at_most(M, c)
        if C != c:
            notes.append(f"{layer.name}: channel target {c} clamped to C={C} (M={M})")
        D = d
        while D > 1 and S % D:
            D -= 1
        if D != d:
            notes.append(f"{layer.name}: denser factor {d} clamped to D={D} (S={S})")
        new_layers.append(replace(layer, S=S, C=C, D=D, ref_madds=None))
    return with_layers(spec, new_layers), notes


@dataclass
class Comparison:
    baseline: CostReport
    model: CostReport
    quantized: bool = False

    @property
    def size_ratio(self) -> float:
        model_bytes = self.model.size_quant_bytes if self.quantized else self.model.size_float_bytes
        return self.baseline.size_float_bytes / model_bytes

    @property
    def param_ratio(self) -> float:
        return self.baseline.params / self.model.params

    @property
    def multadds_ratio(self) -> float:
        return self.baseline.multadds_naive / self.model.multadds_fast


def compare_setting(spec: NetworkSpec, setting: str, input_len: int | None = None,
                    quantized: bool = False) -> Comparison:
    if setting not in COMPACTNESS_SETTINGS:
        raise KeyError(f"unknown setting {setting!r}; known: {', '.join(COMPACTNESS_SETTINGS)}")
    model_spec, notes = apply_compactness(spec, COMPACTNESS_SETTINGS[setting])
    base = network_report(spec, input_len)
    model = network_report(model_spec, input_len)
    model.notes = notes + model.notes
    return Comparison(base, model, quantized)


_COLUMNS = ("layer", "params", "multadds_naive", "multadds_fast", "compactness", "speedup")


def report_csv(report: CostReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_COLUMNS)
    for c in report.layers:
        w.writerow([c.name, c.params, c.multadds_naive, c.multadds_fast,
                    f"{c.compactness:.6g}", f"{c.speedup:.6g}"])
    naive, fast = report.multadds_naive, report.multadds_fast
    w.writerow(["total", report.params, naive, fast, "",
                f"{naive / fast:.6g}" if fast else ""])
    return buf.getvalue()


def report_table(report: CostReport) -> str:
    header = ("layer", "T_in", "T_out", "params", "multadds_naive", "multadds_fast",
              "compactness", "speedup")
    rows = [header]
    for c in report.layers:
        rows.append((c.name, str(c.T_in), str(c.T_out), str(c.params),
                     f"{c.multadds_naive} ({c.multadds_naive:.1e})",
                     f"{c.multadds_fast} ({c.multadds_fast:.1e})",
                     f"{c.compactness:.2f}", f"{c.speedup:.2f}"))
    naive, fast = report.multadds_naive, report.multadds_fast
    rows.append(("total", "", "", str(report.params), f"{naive} ({naive:.1e})",
                 f"{fast} ({fast:.1e})", "", f"{naive / fast:.2f}" if fast else ""))
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = ["  ".join(cell.rjust(w) if i else cell.ljust(w) for i, (cell, w) in
                       enumerate(zip(row, widths))).rstrip() for row in rows]
    lines.append(f"size: {report.size_float_bytes} bytes float32, "
                 f"{report.size_quant_bytes} bytes 8-bit")
    return "\n".join(lines)


def format_notes(notes) -> str:
    return "\n".join(f"note: {n}" for n in notes)


def theoretical_speedup(spec: SamplingSpec) -> float:
    """Per-position ratio ``M L N / (M_star (C + L_star - 1) + L_star + N)``."""
    return (spec.M * spec.L * spec.N
            / (spec.M_star * (spec.C + spec.L_star - 1) + spec.L_star + spec.N))


def total_ratio_note(cmp: Comparison) -> list[str]:
    return [f"size ratio {cmp.size_ratio:.1f}x "
            f"(baseline {cmp.baseline.params} params, model {cmp.model.params})",
            f"mult-adds ratio {cmp.multadds_ratio:.1f}x "
            f"(baseline {cmp.baseline.multadds_naive}, model {cmp.model.multadds_fast})"]

