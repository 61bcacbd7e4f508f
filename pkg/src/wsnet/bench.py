"""Wall-clock comparison of the direct and integral-image convolution paths."""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np

from .config import NetworkSpec, resolve
from .conv import conv_fast, conv_naive, output_length, pointwise_conv
from .cost import fast_multadds, is_condensed, naive_multadds, theoretical_speedup
from .sampling import CondensedFilter, SamplingSpec, sample_filters


@dataclass
class BenchRow:
    layer: str
    T_in: int
    naive_s: float
    fast_s: float | None        # None: layer is not condensed
    analytic: float | None      # cost-model mult-add ratio
    theoretical: float | None   # per-position ratio, large-T limit

    @property
    def measured(self) -> float | None:
        return self.naive_s / self.fast_s if self.fast_s else None


def median_time(fn, repeat: int) -> float:
    if repeat < 1:
        raise ValueError("repeat must be >= 1")
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return statistics.median(times)


def bench_layer(spec: SamplingSpec, T: int, repeat: int = 5, seed: int = 0,
                name: str = "layer") -> BenchRow:
    rng = np.random.default_rng(seed)
    phi = CondensedFilter(rng.normal(0.0, 1.0, spec.shape), spec)
    K = sample_filters(phi).values
    W = rng.normal(0.0, 1.0, spec.pointwise_shape) if spec.D > 1 else None
    F = rng.normal(0.0, 1.0, (T, spec.M))

    def reduce(z):
        return pointwise_conv(z, W) if W is not None else z

    naive_s = median_time(lambda: reduce(conv_naive(F, K, spec.conv_stride, spec.padding)), repeat)
    fast_s = analytic = theoretical = None
    if is_condensed(spec):
        fast_s = median_time(lambda: reduce(conv_fast(F, phi)), repeat)
        T_out = output_length(T, spec.L, spec.conv_stride, spec.padding)
        analytic = naive_multadds(spec, T_out) / fast_multadds(spec, T, T_out)
        theoretical = theoretical_speedup(spec)
    return BenchRow(name, T, naive_s, fast_s, analytic, theoretical)


def bench_network(spec: NetworkSpec, input_len: int | None = None, repeat: int = 5,
                  seed: int = 0) -> list[BenchRow]:
    rows = []
    for r in resolve(spec, input_len):
        if r.layer.kind != "conv":
            continue
        rows.append(bench_layer(r.sampling, r.T_in, repeat, seed, r.layer.name))
    return rows


def format_bench(rows: list[BenchRow]) -> str:
    def num(x, fmt):
        return "-" if x is None else format(x, fmt)

    header = ("layer", "T_in", "naive_s", "fast_s", "measured", "analytic", "theoretical")
    table = [header] + [(r.layer, str(r.T_in), num(r.naive_s, ".4f"), num(r.fast_s, ".4f"),
                         num(r.measured, ".2f"), num(r.analytic, ".2f"), num(r.theoretical, ".2f"))
                        for r in rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    return "\n".join("  ".join(c.rjust(w) if i else c.ljust(w)
                               for i, (c, w) in enumerate(zip(row, widths))).rstrip()
                     for row in table)
