"""Self-check suites: fast vs naive convolution, tied gradients, op counters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import LayerDef, NetworkSpec
from .conv import OpCounter, conv_fast, conv_naive, output_length
from .cost import fast_multadds, is_condensed, naive_multadds
from .layers import ReLU, cross_entropy
from .network import backward_network, build_network, forward_network
from .optim import TrainHyper
from .sampling import CondensedFilter, make_sampling_spec, sample_filters

FAST_TOL = 1e-10
GRAD_TOL = 1e-6
FD_STEP = 1e-3


@dataclass
class TrialResult:
    desc: str
    max_abs: float
    max_rel: float
    passed: bool


def random_layer_spec(rng, max_T=64, max_M=8, max_L=8, max_N=8, max_D=1):
    """Random ``(spec, T)`` with ``T <= max_T``, ``M <= max_M``, ``C`` in {1, 2, 4}."""
    C = int(rng.choice([c for c in (1, 2, 4) if c <= max_M]))
    M = C * int(rng.integers(1, max_M // C + 1))
    L = int(rng.integers(1, max_L + 1))
    S = int(rng.integers(1, L + 1))
    N = int(rng.integers(1, max_N + 1))
    stride = int(rng.integers(1, 3))
    padding = str(rng.choice(["same", "valid"]))
    D = int(rng.choice([d for d in range(1, max_D + 1) if S % d == 0]))
    T = int(rng.integers(L if padding == "valid" else 1, max_T + 1))
    return make_sampling_spec(L, N, S, C, M, stride, D, padding), T


def _describe(spec, T) -> str:
    return (f"T={T} M={spec.M} L={spec.L} N={spec.N} S={spec.S} C={spec.C} D={spec.D} "
            f"stride={spec.conv_stride} {spec.padding}")


def fast_naive_suite(trials: int, seed: int = 0) -> list[TrialResult]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(trials):
        spec, T = random_layer_spec(rng)
        phi = CondensedFilter(rng.uniform(-1, 1, spec.shape), spec)
        F = rng.uniform(-1, 1, (T, spec.M))
        naive = conv_naive(F, sample_filters(phi).values, spec.conv_stride, spec.padding)
        fast = conv_fast(F, phi)
        err = float(np.abs(fast - naive).max())
        rel = err / max(float(np.abs(naive).max()), np.finfo(float).tiny)
        out.append(TrialResult(_describe(spec, T), err, rel, rel <= FAST_TOL))
    return out


def counter_suite(trials: int, seed: int = 0) -> list[TrialResult]:
    """Instrumented counters vs the analytic formulas (exact integers)."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(trials):
        spec, T = random_layer_spec(rng, max_D=2)
        phi = CondensedFilter(rng.uniform(-1, 1, spec.shape), spec)
        F = rng.uniform(-1, 1, (T, spec.M))
        T_out = output_length(T, spec.L, spec.conv_stride, spec.padding)
        naive_c, fast_c = OpCounter(), OpCounter()
        conv_naive(F, sample_filters(phi).values, spec.conv_stride, spec.padding, naive_c)
        conv_fast(F, phi, fast_c)
        # the 1x1 reduction for D > 1 is charged identically on both paths
        extra = T_out * spec.sampled_filters * spec.N if spec.D > 1 else 0
        mismatch = abs(naive_c.total + extra - naive_multadds(spec, T_out))
        if is_condensed(spec):
            mismatch += abs(fast_c.total + extra - fast_multadds(spec, T, T_out))
        out.append(TrialResult(_describe(spec, T), float(mismatch), float(mismatch), mismatch == 0))
    return out


def _away_from_zero(rng, scale, shape):
    """Random signs, magnitudes uniform in ``[scale / 2, scale]``."""
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(0.5 * scale, scale, shape)


def random_two_layer_net(rng):
    """conv (sampled, optional BN) -> sampled fc, small enough for finite differences.

    The ReLU is removed so the loss is smooth in every parameter.  Weights are
    drawn so central differences with ``h = 1e-3`` resolve the gradient: with
    batch norm, the weights feeding it are large, since the loss is invariant
    to their scale and its curvature grows as they shrink; without it, conv
    weights are fan-in scaled so activations stay O(1).  Magnitudes are kept
    away from zero so no filter collapses.
    """
    C = int(rng.choice([1, 2, 4]))
    M = C * int(rng.integers(1, 3))
    # L = 1 with BN makes each filter a lone scale that BN cancels: zero gradient
    L = int(rng.integers(2, 7))
    S = int(rng.integers(1, L + 1))
    D = int(rng.choice([d for d in (1, 2) if S % d == 0]))
    N = int(rng.integers(2, 7))
    stride = int(rng.integers(1, 3))
    padding = str(rng.choice(["same", "valid"]))
    bn = bool(rng.integers(0, 2))
    T = int(rng.integers(max(L + 3, 8), 17))
    T_out = output_length(T, L, stride, padding)
    classes = int(rng.integers(2, 5))
    fc_S = int(rng.integers(1, T_out * N + 1))
    conv = LayerDef("conv1", "conv", N=N, L=L, S=S, C=C, D=D, stride=stride, padding=padding, bn=bn)
    fc = LayerDef("fc1", "fc", N=classes, S=fc_S)
    spec = NetworkSpec(T, M, classes, (conv, fc))
    net = build_network(spec, TrainHyper(seed=int(rng.integers(1 << 31))))
    net.units = [u for u in net.units if not isinstance(u, ReLU)]
    conv_unit, fc_unit = net.units[0], net.units[-1]
    phi_std = (10.0 if bn else 1.0) / np.sqrt(L * M)
    conv_unit.params["phi"] = _away_from_zero(rng, phi_std, conv_unit.params["phi"].shape)
    if D > 1:
        pw_std = (10.0 if bn else 1.0) / np.sqrt(N * D)
        conv_unit.params["pointwise"] = _away_from_zero(rng, pw_std, conv_unit.params["pointwise"].shape)
    fc_unit.params["phi"] = rng.normal(0.0, 0.3 / np.sqrt(fc_unit.n_in), fc_unit.params["phi"].shape)
    x = rng.normal(size=(8, T, M))
    y = rng.integers(0, classes, size=8)
    return net, x, y


def gradient_check(net, x, y, h: float = FD_STEP) -> tuple[float, int]:
    """Worst per-block relative error of analytic vs central-difference gradients.

    Per block: ``max|a - n| / max(max|a|, max|n|)``.
    """
    _, cache = forward_network(net, x, "train")
    analytic = backward_network(net, cache, y).grads

    def loss():
        logits, _ = forward_network(net, x, "train")
        return cross_entropy(logits, y)

    worst = 0.0
    count = 0
    for name, p in net.parameters().items():
        flat = p.reshape(-1)
        numeric = np.empty_like(flat)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = loss()
            flat[i] = keep - h
            down = loss()
            flat[i] = keep
            numeric[i] = (up - down) / (2 * h)
        a = analytic[name].reshape(-1)
        scale = max(float(np.abs(a).max()), float(np.abs(numeric).max()))
        if scale > 0:
            worst = max(worst, float(np.abs(a - numeric).max()) / scale)
        count += flat.size
    return worst, count


def gradient_suite(trials: int, seed: int = 0) -> list[TrialResult]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(trials):
        net, x, y = random_two_layer_net(rng)
        rel, n_params = gradient_check(net, x, y)
        conv = net.units[0].spec
        desc = _describe(conv, x.shape[1]) + f" params={n_params}"
        out.append(TrialResult(desc, rel, rel, rel < GRAD_TOL))
    return out
