"""Forward convolution for weight-sampled layers.

Two routes compute the same output:

* :func:`conv_naive` evaluates the direct sum over a materialized ``(L, M, N)``
  kernel, one tap at a time.
* :func:`conv_fast` never materializes the kernel.  It folds the input's
  channel groups onto the condensed channels, forms the inner products of
  every input row with every condensed position, and reads each output as a
  difference of two entries of a diagonal prefix-sum table.

Feature maps are ``(..., T, M)`` arrays; any leading axes are batch axes.
All accumulation happens in float64.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .sampling import CondensedFilter, SamplingSpec


class ConvShapeError(ValueError):
    pass


@dataclass
class OpCounter:
    """Multiply-add tally per pipeline stage, counted per batch item."""

    counts: Counter = field(default_factory=Counter)

    def add(self, stage: str, n: int) -> None:
        self.counts[stage] += int(n)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def reset(self) -> None:
        self.counts.clear()


def same_padding(L: int) -> tuple[int, int]:
    left = (L - 1) // 2
    return left, L - 1 - left


def output_length(T: int, L: int, stride: int, padding: str) -> int:
    if padding == "same":
        return math.ceil(T / stride)
    if T < L:
        return 0
    return (T - L) // stride + 1


def padded_length(T: int, L: int, padding: str) -> int:
    return T + L - 1 if padding == "same" else T


def pad_input(F: np.ndarray, L: int, padding: str) -> np.ndarray:
    if padding == "valid":
        return F
    left, right = same_padding(L)
    widths = [(0, 0)] * (F.ndim - 2) + [(left, right), (0, 0)]
    return np.pad(F, widths)


def _as_map(F) -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    if F.ndim == 1:
        F = F[:, None]
    if F.ndim < 2 or F.shape[-2] < 1 or F.shape[-1] < 1:
        raise ConvShapeError(f"feature map must be (..., T, M) with T, M >= 1, got {F.shape}")
    return F


def conv_naive(F, K, conv_stride: int = 1, padding: str = "same",
               counter: OpCounter | None = None) -> np.ndarray:
    """``G[t, n] = sum_{l, m} F_pad[t*stride + l, m] * K[l, m, n]``."""
    F = _as_map(F)
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 3:
        raise ConvShapeError(f"kernel must be (L, M, N), got shape {K.shape}")
    L, M, N = K.shape
    if F.shape[-1] != M:
        raise ConvShapeError(f"input has {F.shape[-1]} channels, kernel expects {M}")
    T = F.shape[-2]
    T_out = output_length(T, L, conv_stride, padding)
    if T_out < 1:
        raise ConvShapeError(f"input length {T} shorter than filter length {L}")
    Fp = pad_input(F, L, padding)
    span = conv_stride * (T_out - 1) + 1
    G = np.zeros(F.shape[:-2] + (T_out, N))
    for l in range(L):
        G += Fp[..., l:l + span:conv_stride, :] @ K[l]
    if counter is not None:
        counter.add("direct", T_out * M * L * N)
    return G


def conv_naive_backward(F, K, dG, conv_stride: int = 1, padding: str = "same"):
    """Gradients of :func:`conv_naive` w.r.t. input and kernel.

    Leading batch axes of ``F``/``dG`` are summed into ``dK``.
    """
    F = _as_map(F)
    K = np.asarray(K, dtype=np.float64)
    L, M, N = K.shape
    T = F.shape[-2]
    T_out = dG.shape[-2]
    Fp = pad_input(F, L, padding)
    span = conv_stride * (T_out - 1) + 1
    dFp = np.zeros_like(Fp)
    dK = np.empty_like(K)
    rows = dG.reshape(-1, N)
    for l in range(L):
        window = Fp[..., l:l + span:conv_stride, :]
        dK[l] = window.reshape(-1, M).T @ rows
        dFp[..., l:l + span:conv_stride, :] += dG @ K[l].T
    if padding == "same":
        left, _ = same_padding(L)
        dF = dFp[..., left:left + T, :]
    else:
        dF = dFp
    return dF, dK


def channel_wrap(F, M_star: int, counter: OpCounter | None = None) -> np.ndarray:
    """Sum the ``C = M / M_star`` channel groups of ``F`` onto ``M_star`` channels."""
    F = _as_map(F)
    M = F.shape[-1]
    if M_star < 1 or M % M_star:
        raise ConvShapeError(f"M_star={M_star} does not divide M={M}")
    C = M // M_star
    out = F[..., :M_star].copy()
    for c in range(1, C):
        out += F[..., c * M_star:(c + 1) * M_star]
    if counter is not None:
        counter.add("wrap", F.shape[-2] * M_star * (C - 1))
    return out


def inner_product_map(F_wrapped, phi, counter: OpCounter | None = None) -> np.ndarray:
    """``P[u, v] = sum_j F_wrapped[u, j] * phi[v, j]``, shape ``(..., T, L_star)``."""
    F_wrapped = _as_map(F_wrapped)
    phi = np.asarray(phi, dtype=np.float64)
    if phi.ndim == 1:
        phi = phi[:, None]
    if F_wrapped.shape[-1] != phi.shape[1]:
        raise ConvShapeError(
            f"wrapped input has {F_wrapped.shape[-1]} channels, condensed filter {phi.shape[1]}")
    if counter is not None:
        counter.add("inner", F_wrapped.shape[-2] * phi.shape[1] * phi.shape[0])
    return F_wrapped @ phi.T


def _integral_columns(PT: np.ndarray):
    """Yield ``(v, I[..., :, v])`` column by column.

    ``PT`` is the inner product map with the last two axes swapped, so each
    ``PT[..., v, :]`` is contiguous.  Column ``v`` of the table is column
    ``v - 1`` shifted down one row plus column ``v`` of ``P``.
    """
    col = PT[..., 0, :].copy()
    yield 0, col
    for v in range(1, PT.shape[-2]):
        nxt = np.empty_like(col)
        nxt[..., 0] = PT[..., v, 0]
        np.add(col[..., :-1], PT[..., v, 1:], out=nxt[..., 1:])
        col = nxt
        yield v, col


def integral_image(P, counter: OpCounter | None = None) -> np.ndarray:
    """Diagonal prefix sums: ``I[u, v] = I[u-1, v-1] + P[u, v]``."""
    P = np.asarray(P, dtype=np.float64)
    PT = np.ascontiguousarray(np.swapaxes(P, -1, -2))
    out = np.empty_like(P)
    for v, col in _integral_columns(PT):
        out[..., :, v] = col
    if counter is not None:
        counter.add("integral", P.shape[-2] * P.shape[-1])
    return out


# Bound on inner-product-map entries held at once; longer inputs are split
# into row chunks overlapping by L - 1 rows.
MAX_TABLE_ENTRIES = 1 << 20


def conv_fast(F, phi: CondensedFilter, counter: OpCounter | None = None,
              max_entries: int = MAX_TABLE_ENTRIES) -> np.ndarray:
    """Integral-image evaluation of the layer described by ``phi.spec``.

    Returns ``(..., T_out, N * D)``: for ``D > 1`` the caller applies the 1x1
    reduction.
    """
    spec: SamplingSpec = phi.spec
    F = _as_map(F)
    if F.shape[-1] != spec.M:
        raise ConvShapeError(f"input has {F.shape[-1]} channels, layer expects {spec.M}")
    L, stride = spec.L, spec.conv_stride
    T_out = output_length(F.shape[-2], L, stride, spec.padding)
    if T_out < 1:
        raise ConvShapeError(f"input length {F.shape[-2]} shorter than filter length {L}")
    Fp = pad_input(F, L, spec.padding)
    batch = int(np.prod(F.shape[:-2], dtype=np.int64))
    rows_per_output = max(max_entries // max(batch * spec.L_star, 1), L + stride) - L
    chunk = max(rows_per_output // stride, 1)
    if chunk >= T_out:
        return _fast_rows(Fp, phi.values, spec, T_out, counter)
    parts = []
    for t0 in range(0, T_out, chunk):
        t1 = min(t0 + chunk, T_out)
        rows = Fp[..., t0 * stride:(t1 - 1) * stride + L, :]
        parts.append(_fast_rows(rows, phi.values, spec, t1 - t0, counter))
    return np.concatenate(parts, axis=-2)


def _fast_rows(Fp, phi_values, spec: SamplingSpec, T_out: int, counter) -> np.ndarray:
    """Integral-image path over already padded rows ``Fp``."""
    L, n_filters, step, stride = spec.L, spec.sampled_filters, spec.effective_stride, spec.conv_stride
    wrapped = channel_wrap(Fp, spec.M_star, counter)
    P = inner_product_map(wrapped, phi_values, counter)
    PT = np.ascontiguousarray(np.swapaxes(P, -1, -2))
    del P

    # G[t, n] = I[t' + L - 1, nS + L - 1] - I[t' - 1, nS - 1],  t' = t * stride
    upper = {n * step + L - 1: n for n in range(n_filters)}
    lower = {n * step - 1: n for n in range(1, n_filters)}
    hi = slice(L - 1, L - 1 + stride * (T_out - 1) + 1, stride)
    lo = slice(stride - 1, stride * (T_out - 1), stride)
    G = np.zeros(Fp.shape[:-2] + (n_filters, T_out))
    for v, col in _integral_columns(PT):
        n = upper.get(v)
        if n is not None:
            G[..., n, :] += col[..., hi]
        n = lower.get(v)
        if n is not None:
            G[..., n, 1:] -= col[..., lo]
    if counter is not None:
        counter.add("integral", PT.shape[-1] * PT.shape[-2])
        counter.add("lookup", T_out * n_filters)
    return np.swapaxes(G, -1, -2)


def pointwise_conv(F, W, counter: OpCounter | None = None) -> np.ndarray:
    """1x1 convolution with weights ``W`` of shape ``(1, n_in, n_out)``."""
    F = _as_map(F)
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 3 or W.shape[0] != 1:
        raise ConvShapeError(f"pointwise weights must be (1, n_in, n_out), got {W.shape}")
    if F.shape[-1] != W.shape[1]:
        raise ConvShapeError(f"input has {F.shape[-1]} channels, pointwise expects {W.shape[1]}")
    if counter is not None:
        counter.add("pointwise", F.shape[-2] * W.shape[1] * W.shape[2])
    return F @ W[0]


def conv2d_naive(F, K) -> np.ndarray:
    """Valid 2D correlation of ``F (X, Y, M)`` with ``K (w, h, M, N)``."""
    F = np.asarray(F, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    X, Y, M = F.shape
    w, h, Mk, N = K.shape
    if Mk != M:
        raise ConvShapeError(f"input has {M} channels, kernel expects {Mk}")
    if w > X or h > Y:
        raise ConvShapeError("2D kernel larger than input")
    out = np.zeros((X - w + 1, Y - h + 1, N))
    for i in range(w):
        for j in range(h):
            out += F[i:i + X - w + 1, j:j + Y - h + 1, :] @ K[i, j]
    return out
