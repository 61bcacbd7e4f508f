"""Condensed-filter geometry and weight sampling.

A weight-sampled layer stores one small condensed filter ``phi`` of shape
``(L_star, M_star)``.  Its ``N`` convolution filters of length ``L`` are
windows of ``phi`` taken every ``S`` positions, and each filter's ``M`` input
channels repeat the ``M_star`` condensed channels ``C`` times.

Kernel layout throughout the package is ``(L, M, N)``: tap, input channel,
filter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PADDINGS = ("same", "valid")


class SamplingError(ValueError):
    """Raised for infeasible sampling geometry."""


@dataclass(frozen=True)
class SamplingSpec:
    L: int
    N: int
    S: int
    C: int
    M: int
    L_star: int
    M_star: int
    conv_stride: int = 1
    D: int = 1
    padding: str = "same"

    @property
    def sampled_filters(self) -> int:
        """Number of filters actually cut from ``phi`` (``N * D``)."""
        return self.N * self.D

    @property
    def effective_stride(self) -> int:
        return self.S // self.D

    @property
    def shape(self) -> tuple[int, int]:
        return (self.L_star, self.M_star)

    @property
    def pointwise_shape(self) -> tuple[int, int, int] | None:
        """Shape of the appended 1x1 reduction, or None when ``D == 1``."""
        if self.D == 1:
            return None
        return (1, self.N * self.D, self.N)


def make_sampling_spec(
    L: int,
    N: int,
    S: int,
    C: int = 1,
    M: int = 1,
    conv_stride: int = 1,
    D: int = 1,
    padding: str = "same",
) -> SamplingSpec:
    for name, value in (("L", L), ("N", N), ("S", S), ("C", C), ("M", M),
                        ("stride", conv_stride), ("D", D)):
        if int(value) != value or value < 1:
            raise SamplingError(f"{name} must be an integer >= 1, got {value!r}")
    if S > L:
        raise SamplingError(f"S={S} > L={L} would leave condensed weights unsampled")
    if M % C:
        raise SamplingError(f"C={C} does not divide M={M}")
    if D > 1 and S % D:
        raise SamplingError(f"D={D} does not divide S={S}")
    if padding not in PADDINGS:
        raise SamplingError(f"padding must be one of {PADDINGS}, got {padding!r}")
    step = S // D
    L_star = L + (N * D - 1) * step
    return SamplingSpec(L=L, N=N, S=S, C=C, M=M, L_star=L_star, M_star=M // C,
                        conv_stride=conv_stride, D=D, padding=padding)


def denser_spec(spec: SamplingSpec, D: int) -> SamplingSpec:
    """Re-derive ``spec`` with ``D`` times more filters at stride ``S / D``.

    ``D == 1`` returns the spec unchanged (no 1x1 reduction).
    """
    if D == 1:
        return make_sampling_spec(spec.L, spec.N, spec.S, spec.C, spec.M,
                                  spec.conv_stride, 1, spec.padding)
    if D < 1 or spec.S % D:
        raise SamplingError(f"D={D} does not divide S={spec.S}")
    return make_sampling_spec(spec.L, spec.N, spec.S, spec.C, spec.M,
                              spec.conv_stride, D, spec.padding)


@dataclass
class CondensedFilter:
    values: np.ndarray
    spec: SamplingSpec

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.shape != self.spec.shape:
            raise SamplingError(
                f"condensed filter shape {self.values.shape} != spec {self.spec.shape}")
        if not np.all(np.isfinite(self.values)):
            raise SamplingError("condensed filter has non-finite entries")


@dataclass
class PositionMap:
    """Flat condensed index for every kernel entry.

    ``index[l, m, n]`` is ``i * M_star + j`` where ``phi[i, j]`` is the weight
    tied to ``K[l, m, n]``.
    """

    index: np.ndarray
    condensed_shape: tuple[int, int]

    def cell(self, i: int, j: int) -> set[tuple[int, int, int]]:
        flat = i * self.condensed_shape[1] + j
        return {tuple(int(a) for a in idx) for idx in np.argwhere(self.index == flat)}

    def counts(self) -> np.ndarray:
        """How many kernel entries each condensed weight feeds."""
        size = self.condensed_shape[0] * self.condensed_shape[1]
        return np.bincount(self.index.ravel(), minlength=size).reshape(self.condensed_shape)


@dataclass
class FilterBank:
    values: np.ndarray
    provenance: PositionMap | None = field(default=None, repr=False)


def position_map(spec: SamplingSpec) -> PositionMap:
    L, M, n = spec.L, spec.M, spec.sampled_filters
    step = spec.effective_stride
    rows = np.arange(n)[None, None, :] * step + np.arange(L)[:, None, None]
    cols = np.arange(M)[None, :, None] % spec.M_star
    index = rows * spec.M_star + cols
    return PositionMap(index=np.broadcast_to(index, (L, M, n)).copy(),
                       condensed_shape=spec.shape)


def sample_filters(phi: CondensedFilter) -> FilterBank:
    """Materialize the ``(L, M, N*D)`` kernel tied to ``phi``."""
    spec = phi.spec
    if phi.values.shape != spec.shape:
        raise SamplingError(f"condensed filter shape {phi.values.shape} != spec {spec.shape}")
    pmap = position_map(spec)
    return FilterBank(values=phi.values.ravel()[pmap.index], provenance=pmap)


def compactness(spec: SamplingSpec) -> float:
    return spec.L * spec.M * spec.N / (spec.L_star * spec.M_star)


def fc_condensed_length(n_in: int, n_out: int, S: int) -> int:
    return n_in + (n_out - 1) * S


def _check_fc(n_in: int, n_out: int, S: int) -> None:
    if not 1 <= S <= n_in:
        raise SamplingError(f"fc stride S={S} must lie in [1, n_in={n_in}]")
    if n_out < 1:
        raise SamplingError("fc layer needs at least one output")


def fc_position_map(n_in: int, n_out: int, S: int) -> np.ndarray:
    """``index[k_in, k_out]`` into the condensed vector."""
    _check_fc(n_in, n_out, S)
    return np.arange(n_in)[:, None] + S * np.arange(n_out)[None, :]


def sample_fc(phi_vec, n_in: int, n_out: int, S: int) -> np.ndarray:
    """Dense ``(n_in, n_out)`` weight whose column ``k`` is ``phi_vec[kS : kS + n_in]``."""
    phi_vec = np.asarray(phi_vec)
    _check_fc(n_in, n_out, S)
    expected = fc_condensed_length(n_in, n_out, S)
    if phi_vec.shape != (expected,):
        raise SamplingError(f"fc condensed vector has shape {phi_vec.shape}, expected ({expected},)")
    return phi_vec[fc_position_map(n_in, n_out, S)]


@dataclass(frozen=True)
class SamplingSpec2D:
    w: int
    h: int
    N: int
    S_w: int
    S_h: int
    C: int
    M: int
    W: int
    H: int
    M_star: int
    G: int

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.W, self.H, self.M_star)


def make_sampling_spec_2d(w: int, h: int, N: int, S_w: int, S_h: int,
                          C: int = 1, M: int = 1) -> SamplingSpec2D:
    for name, value in (("w", w), ("h", h), ("N", N), ("S_w", S_w), ("S_h", S_h),
                        ("C", C), ("M", M)):
        if value < 1:
            raise SamplingError(f"{name} must be >= 1, got {value}")
    if S_w > w or S_h > h:
        raise SamplingError("2D sampling strides must not exceed the filter size")
    if M % C:
        raise SamplingError(f"C={C} does not divide M={M}")
    G = math.isqrt(N - 1) + 1 if N > 1 else 1
    return SamplingSpec2D(w=w, h=h, N=N, S_w=S_w, S_h=S_h, C=C, M=M,
                          W=w + (G - 1) * S_w, H=h + (G - 1) * S_h,
                          M_star=M // C, G=G)


def sample_filters_2d(phi2d, spec: SamplingSpec2D) -> np.ndarray:
    """Cut ``N`` patches from a ``(W, H, M_star)`` condensed filter.

    Filter ``n`` sits at grid cell ``(row, col) = divmod(n, G)``, i.e. at
    offset ``col * S_w`` along W and ``row * S_h`` along H.  Grid cells are
    used in row-major order.  Returns a ``(w, h, M, N)`` kernel.
    """
    phi2d = np.asarray(phi2d, dtype=np.float64)
    if phi2d.shape != spec.shape:
        raise SamplingError(f"2D condensed filter shape {phi2d.shape} != spec {spec.shape}")
    out = np.empty((spec.w, spec.h, spec.M, spec.N))
    channels = np.arange(spec.M) % spec.M_star
    for n in range(spec.N):
        row, col = divmod(n, spec.G)
        x0, y0 = col * spec.S_w, row * spec.S_h
        patch = phi2d[x0:x0 + spec.w, y0:y0 + spec.h, :]
        out[:, :, :, n] = patch[:, :, channels]
    return out
