import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.signal import correlate

from wsnet.conv import (ConvShapeError, OpCounter, channel_wrap, conv2d_naive, conv_fast,
                        conv_naive, conv_naive_backward, inner_product_map, integral_image,
                        pad_input, pointwise_conv)
from wsnet.cost import fast_multadds, is_condensed, naive_multadds
from wsnet.sampling import (CondensedFilter, make_sampling_spec, make_sampling_spec_2d,
                            sample_filters, sample_filters_2d)


@st.composite
def layer_case(draw, max_T=64, max_D=1):
    L = draw(st.integers(1, 8))
    S = draw(st.integers(1, L))
    C = draw(st.sampled_from([1, 2, 4]))
    M = C * draw(st.integers(1, 8 // C))
    N = draw(st.integers(1, 8))
    stride = draw(st.integers(1, 2))
    padding = draw(st.sampled_from(["same", "valid"]))
    D = draw(st.sampled_from([d for d in range(1, max_D + 1) if S % d == 0]))
    T = draw(st.integers(L if padding == "valid" else 1, max_T))
    spec = make_sampling_spec(L, N, S, C, M, stride, D, padding)
    rng = np.random.default_rng(draw(st.integers(0, 2**31)))
    phi = CondensedFilter(rng.uniform(-1, 1, spec.shape), spec)
    F = rng.uniform(-1, 1, (T, M))
    return spec, phi, F


def naive_by_loops(F, K, stride, padding):
    """Direct evaluation of the convolution sum, one output at a time."""
    L, M, N = K.shape
    Fp = pad_input(F, L, padding)
    T_out = -(-F.shape[0] // stride) if padding == "same" else (F.shape[0] - L) // stride + 1
    G = np.zeros((T_out, N))
    for t in range(T_out):
        for n in range(N):
            G[t, n] = sum(Fp[t * stride + l, m] * K[l, m, n] for l in range(L) for m in range(M))
    return G


def test_naive_examples():
    F = np.array([1.0, 2.0, 3.0])
    assert conv_naive(F, np.array([1.0, 0.0]).reshape(2, 1, 1))[:, 0].tolist() == [1, 2, 3]
    assert conv_naive(F, np.array([1.0, 1.0]).reshape(2, 1, 1))[:, 0].tolist() == [3, 5, 3]
    assert not conv_naive(np.ones((5, 2)), np.zeros((3, 2, 4))).any()


def test_naive_errors():
    with pytest.raises(ConvShapeError):
        conv_naive(np.ones((5, 2)), np.zeros((3, 3, 4)))
    with pytest.raises(ConvShapeError):
        conv_naive(np.ones((2, 1)), np.zeros((3, 1, 1)), padding="valid")


@given(layer_case(max_T=16))
def test_naive_matches_loop_oracle(case):
    spec, phi, F = case
    K = sample_filters(phi).values
    np.testing.assert_allclose(conv_naive(F, K, spec.conv_stride, spec.padding),
                               naive_by_loops(F, K, spec.conv_stride, spec.padding), atol=1e-12)


def test_channel_wrap():
    assert channel_wrap(np.array([[1.0, 2.0, 3.0, 4.0]]), 2).tolist() == [[4, 6]]
    F = np.random.default_rng(0).normal(size=(5, 6))
    np.testing.assert_array_equal(channel_wrap(F, 6), F)
    np.testing.assert_allclose(channel_wrap(F, 2), F[:, 0:2] + F[:, 2:4] + F[:, 4:6])
    with pytest.raises(ConvShapeError):
        channel_wrap(F, 4)


def test_inner_product_map(rng):
    F = rng.normal(size=(7, 1))
    phi = rng.normal(size=(5, 1))
    np.testing.assert_allclose(inner_product_map(F, phi), np.outer(F[:, 0], phi[:, 0]))
    assert not inner_product_map(F, np.zeros((5, 1))).any()
    F, phi = rng.normal(size=(6, 3)), rng.normal(size=(4, 3))
    P = inner_product_map(F, phi)
    for u in range(6):
        for v in range(4):
            assert P[u, v] == pytest.approx(sum(F[u, j] * phi[v, j] for j in range(3)))


def test_integral_image_examples():
    assert not integral_image(np.zeros((3, 4))).any()
    np.testing.assert_array_equal(integral_image(np.ones((3, 3))),
                                  [[1, 1, 1], [1, 2, 2], [1, 2, 3]])
    P = np.zeros((4, 4))
    P[1, 1] = 5
    expected = np.zeros((4, 4))
    expected[1, 1] = expected[2, 2] = expected[3, 3] = 5
    np.testing.assert_array_equal(integral_image(P), expected)


@given(st.integers(1, 9), st.integers(1, 9), st.integers(0, 2**31))
def test_integral_image_recurrence(R, V, seed):
    P = np.random.default_rng(seed).normal(size=(R, V))
    I = integral_image(P)
    for u in range(R):
        for v in range(V):
            prev = I[u - 1, v - 1] if u and v else 0.0
            assert I[u, v] == pytest.approx(prev + P[u, v], abs=1e-12)


@given(st.integers(1, 6), st.integers(1, 4), st.integers(1, 5), st.integers(0, 2**31))
def test_diagonal_retrieval(L, N, S_raw, seed):
    S = min(S_raw, L)
    R = L + 6
    V = L + (N - 1) * S
    P = np.random.default_rng(seed).normal(size=(R, V))
    I = integral_image(P)

    def at(u, v):
        return I[u, v] if u >= 0 and v >= 0 else 0.0

    for t in range(R - L + 1):
        for n in range(N):
            direct = sum(P[t + l, n * S + l] for l in range(L))
            assert at(t + L - 1, n * S + L - 1) - at(t - 1, n * S - 1) == pytest.approx(direct, abs=1e-12)


def test_padding_rows_reduce_to_boundary(rng):
    P = rng.normal(size=(5, 6))
    padded = np.vstack([P, np.zeros((3, 6))])
    I = integral_image(padded)
    for u in range(5, 8):
        for v in range(1, 6):
            assert I[u, v] == I[u - 1, v - 1]


def test_fast_example():
    spec = make_sampling_spec(2, 2, 1)
    G = conv_fast(np.ones(3), CondensedFilter([1.0, 2.0, 3.0], spec))
    assert G.T.tolist() == [[3, 3, 1], [5, 5, 2]]


@given(layer_case(max_D=2))
def test_fast_equals_naive(case):
    spec, phi, F = case
    naive = conv_naive(F, sample_filters(phi).values, spec.conv_stride, spec.padding)
    fast = conv_fast(F, phi)
    assert fast.shape == naive.shape
    assert np.abs(fast - naive).max() <= 1e-10 * max(np.abs(naive).max(), 1e-300)


@given(layer_case(), st.integers(1, 400))
def test_fast_row_chunks(case, budget):
    spec, phi, F = case
    np.testing.assert_allclose(conv_fast(F, phi, max_entries=budget), conv_fast(F, phi), atol=1e-12)


def test_fast_batched(rng):
    spec = make_sampling_spec(5, 4, 2, 2, 4, 2)
    phi = CondensedFilter(rng.normal(size=spec.shape), spec)
    F = rng.normal(size=(3, 2, 20, 4))
    batched = conv_fast(F, phi)
    for i in range(3):
        for j in range(2):
            np.testing.assert_allclose(batched[i, j], conv_fast(F[i, j], phi), atol=1e-12)


def test_fast_long_input(rng):
    spec = make_sampling_spec(8, 16, 2, 2, 4)
    phi = CondensedFilter(rng.uniform(-1, 1, spec.shape), spec)
    F = rng.uniform(-1, 1, (10000, 4))
    naive = conv_naive(F, sample_filters(phi).values)
    assert np.abs(conv_fast(F, phi) - naive).max() <= 1e-10 * np.abs(naive).max()


@given(layer_case(max_D=2))
def test_counters_match_formulas(case):
    spec, phi, F = case
    T = F.shape[0]
    naive_c, fast_c = OpCounter(), OpCounter()
    G = conv_naive(F, sample_filters(phi).values, spec.conv_stride, spec.padding, naive_c)
    conv_fast(F, phi, fast_c)
    T_out = G.shape[0]
    extra = T_out * spec.sampled_filters * spec.N if spec.D > 1 else 0
    assert naive_c.total + extra == naive_multadds(spec, T_out)
    if is_condensed(spec):
        assert fast_c.total + extra == fast_multadds(spec, T, T_out)


def test_pointwise(rng):
    F = rng.normal(size=(6, 3))
    np.testing.assert_array_equal(pointwise_conv(F, np.eye(3)[None]), F)
    assert not pointwise_conv(F, np.zeros((1, 3, 2))).any()
    W = rng.normal(size=(1, 3, 5))
    np.testing.assert_allclose(pointwise_conv(F, W), conv_naive(F, W), atol=1e-12)
    with pytest.raises(ConvShapeError):
        pointwise_conv(F, np.zeros((1, 4, 2)))


@given(layer_case(max_T=12))
def test_naive_backward_matches_adjoint(case):
    spec, phi, F = case
    K = sample_filters(phi).values
    rng = np.random.default_rng(0)
    G = conv_naive(F, K, spec.conv_stride, spec.padding)
    dG = rng.normal(size=G.shape)
    dF, dK = conv_naive_backward(F, K, dG, spec.conv_stride, spec.padding)
    # the convolution is bilinear, so <dG, conv(F', K)> = <dF, F'> and likewise for K
    F2, K2 = rng.normal(size=F.shape), rng.normal(size=K.shape)
    assert np.sum(dG * conv_naive(F2, K, spec.conv_stride, spec.padding)) == pytest.approx(np.sum(dF * F2))
    assert np.sum(dG * conv_naive(F, K2, spec.conv_stride, spec.padding)) == pytest.approx(np.sum(dK * K2))


def test_conv2d_matches_scipy(rng):
    F = rng.normal(size=(8, 8, 3))
    K = rng.normal(size=(3, 2, 3, 4))
    out = conv2d_naive(F, K)
    for n in range(4):
        ref = sum(correlate(F[:, :, m], K[:, :, m, n], mode="valid") for m in range(3))
        np.testing.assert_allclose(out[:, :, n], ref, atol=1e-12)


@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 10), st.integers(1, 4),
       st.integers(1, 4), st.sampled_from([1, 2]), st.integers(0, 2**31))
def test_2d_bank_convolution(w, h, N, S_w, S_h, C, seed):
    spec = make_sampling_spec_2d(w, h, N, min(S_w, w), min(S_h, h), C, 2 * C)
    rng = np.random.default_rng(seed)
    phi = rng.normal(size=spec.shape)
    K = sample_filters_2d(phi, spec)
    F = rng.normal(size=(8, 8, spec.M))
    out = conv2d_naive(F, K)
    for n in range(N):
        row, col = divmod(n, spec.G)
        patch = phi[col * spec.S_w:col * spec.S_w + w, row * spec.S_h:row * spec.S_h + h]
        ref = sum(correlate(F[:, :, m], patch[:, :, m % spec.M_star], mode="valid")
                  for m in range(spec.M))
        np.testing.assert_allclose(out[:, :, n], ref, atol=1e-10)
