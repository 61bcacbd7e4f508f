import math
from importlib.resources import files

import pytest
from hypothesis import given
from hypothesis import strategies as st

from wsnet.config import parse_config
from wsnet.cost import (COMPACTNESS_SETTINGS, apply_compactness, compare_setting, conv_params,
                        fast_multadds, naive_multadds, network_report, report_csv, speedup,
                        theoretical_speedup)
from wsnet.config import resolve
from wsnet.sampling import make_sampling_spec

BASELINE2_PARAMS = [1024, 16384, 32768, 65536, 131072, 524288, 2097152, 11476992]
BASELINE1_PARAMS = {"fc1": 393216, "fc2": 32768}


def shipped(name):
    return parse_config(files("wsnet.configs").joinpath(name).read_text())[0]


def test_baseline2_params():
    report = network_report(shipped("baseline2.cfg"), 441000)
    assert [c.params for c in report.layers] == BASELINE2_PARAMS
    assert report.params == sum(BASELINE2_PARAMS)


def test_baseline2_conv1_to_conv4_multadds():
    report = network_report(shipped("baseline2.cfg"), 441000)
    assert report.layer("conv1").T_out == 220500
    assert report.layer("conv2").T_out == 55125
    assert report.layer("conv2").multadds_naive == 55125 * 16 * 32 * 32
    for name, ref in zip(("conv1", "conv2", "conv3", "conv4"), (2.3e8, 9.0e8, 4.5e8, 2.3e8)):
        assert float(f"{report.layer(name).multadds_naive:.1e}") == ref


def test_baseline2_conv8_flagged():
    report = network_report(shipped("baseline2.cfg"), 441000)
    notes = [n for n in report.notes if n.startswith("conv8")]
    assert len(notes) == 1 and "2.3e+08" in notes[0]


def test_baseline1_params():
    report = network_report(shipped("baseline1.cfg"))
    for name, value in BASELINE1_PARAMS.items():
        assert report.layer(name).params == value
    assert f"{report.layer('fc1').params / 1000:.0f}" == "393"


def test_naive_formula_trivial():
    assert naive_multadds(make_sampling_spec(1, 1, 1), 17) == 17


def test_fast_formula_c1_grouping():
    spec = make_sampling_spec(8, 16, 2, 1, 4)
    T, T_out = 100 + 7, 100
    assert fast_multadds(spec, 100, T_out) == T * (spec.M + 1) * spec.L_star + T_out * spec.N


def test_fast_rejects_conventional():
    with pytest.raises(ValueError):
        fast_multadds(make_sampling_spec(4, 4, 4), 10, 10)


@given(st.integers(2, 8), st.integers(1, 8), st.sampled_from([2, 4]), st.integers(1, 4),
       st.integers(10, 1000))
def test_wrap_beats_unwrapped(L, S_raw, C, Ms, T):
    S = min(S_raw, L)
    spec = make_sampling_spec(L, 8, S, C, C * Ms)
    Tp = T + L - 1
    unwrapped = Tp * spec.M * spec.L_star + Tp * spec.L_star + T * spec.N
    assert fast_multadds(spec, T, T) < unwrapped


def _layer(L, N, S, C=1, M=1, T=100000):
    spec = make_sampling_spec(L, N, S, C, M)
    return naive_multadds(spec, T) / fast_multadds(spec, T, T)


def test_speedup_examples():
    # S = L, C = 1 has no condensed path; the per-position ratio covers it
    assert theoretical_speedup(make_sampling_spec(8, 4096, 8, 1, 64)) == pytest.approx(1.0, abs=0.02)
    assert _layer(8, 4096, 1, M=64) == pytest.approx(8.0, rel=0.05)
    assert _layer(8, 4096, 2, M=64) == pytest.approx(4.0, rel=0.05)
    spec = make_sampling_spec(8, 4096, 1, 1, 64)
    assert theoretical_speedup(spec) == pytest.approx(8.0, rel=0.05)


@given(st.integers(1, 8), st.integers(1, 16), st.sampled_from([1, 2, 4]), st.integers(1, 3),
       st.integers(20, 500))
def test_monotone_in_S(L, N, C, Ms, T):
    params = [conv_params(make_sampling_spec(L, N, S, C, C * Ms)) for S in range(1, L + 1)]
    assert params == sorted(params)
    condensed = [make_sampling_spec(L, N, S, C, C * Ms) for S in range(1, L + 1)]
    fast = [fast_multadds(s, T, T) for s in condensed if s.S < s.L or s.C > 1]
    assert fast == sorted(fast)


def test_report_totals_and_ratio():
    cmp = compare_setting(shipped("baseline2.cfg"), "S4", 441000)
    assert cmp.model.params == sum(c.params for c in cmp.model.layers)
    assert cmp.multadds_ratio == cmp.baseline.multadds_naive / cmp.model.multadds_fast
    assert cmp.size_ratio == pytest.approx(cmp.baseline.params / cmp.model.params, rel=1e-15)


def test_s4_setting_size_ratio():
    cmp = compare_setting(shipped("baseline2.cfg"), "S4", 441000)
    assert cmp.size_ratio == pytest.approx(4.0, rel=0.05)


def test_s8c8_clamps_and_size_ratio():
    cmp = compare_setting(shipped("baseline2.cfg"), "S8C8", 441000)
    assert "conv1: channel target 4 clamped to C=1 (M=1)" in cmp.model.notes
    assert 45 <= cmp.size_ratio <= 70
    assert cmp.model.layer("conv1").params == 64 + 15 * 16


def test_settings_are_feasible():
    spec = shipped("baseline2.cfg")
    for name, cells in COMPACTNESS_SETTINGS.items():
        model, _ = apply_compactness(spec, cells)
        resolve(model)


def test_csv_shape():
    text = report_csv(network_report(shipped("baseline2.cfg"), 441000))
    lines = text.strip().split("\n")
    assert lines[0] == "layer,params,multadds_naive,multadds_fast,compactness,speedup"
    assert len(lines) == 1 + 8 + 1 and lines[-1].startswith("total,")


def test_layer_speedup_helper():
    for r in resolve(shipped("synth_wsnet.cfg")):
        s = speedup(r)
        assert s > 0 and math.isfinite(s)
