import math

import numpy as np
import pytest
import scipy.signal as sig
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from santw.examples import BENCH_A, BENCH_B, pid_controller
from santw.lmi import algorithm1_static
from santw.lti import interconnect, ss, static_gain
from santw.simulate import (
    Constant,
    LoopConfig,
    Piecewise,
    SaturationSpec,
    SimulationTrace,
    Step,
    dissipation_check,
    metrics,
    saturate,
    simulate,
)

TRACK = [[0.0, 1.0]]


def bench_cfg(plant, K, **kw):
    base = dict(plant=plant, nominal_controller=K, reference=Constant([1.0]), tracking_matrix=TRACK,
                horizon=10.0, step=1e-3)
    base.update(kw)
    return LoopConfig(**base)


@pytest.fixture(scope="module")
def static_design():
    return algorithm1_static(BENCH_A, BENCH_B, 0.001, 3.15)


def zero_trace(n=50, nx=2, m=1):
    t = np.linspace(0, 1, n)
    z = lambda k: np.zeros((n, k))
    return SimulationTrace(t, z(nx), z(nx), z(m), z(m), z(1), z(m), z(m), z(nx), z(1), z(0), z(nx), z(1))


def test_saturate_examples():
    spec = SaturationSpec([-1.0], [1.0])
    assert saturate([0.5], spec)[0] == 0.5
    assert saturate([1.5], spec)[0] == 1.0
    both = SaturationSpec.upper_only([1.0, -0.1])
    np.testing.assert_array_equal(saturate([1.3, -0.4], both), [1.0, -0.4])


def test_saturation_spec_validation():
    with pytest.raises(ValueError):
        SaturationSpec([1.0], [0.0])
    spec = SaturationSpec.disabled(2)
    assert not spec.active
    assert SaturationSpec.from_dict(SaturationSpec.upper_only([1.0]).to_dict()).upper[0] == 1.0


def test_signals():
    s = Step(2.0, time=1.0, initial=0.5)
    assert s(0.99)[0] == 0.5 and s(1.0)[0] == 2.0
    p = Piecewise([0.0, 1.0, 2.0], [[0.0], [1.0], [3.0]])
    assert p(1.5)[0] == 1.0 and p(5.0)[0] == 3.0


@settings(max_examples=100, deadline=None)
@given(arrays(float, 3, elements=st.floats(-1e3, 1e3)),
       arrays(float, 3, elements=st.floats(-10, 10)),
       arrays(float, 3, elements=st.floats(0.01, 10)))
def test_saturate_idempotent_and_dead_zone(v, lo, width):
    spec = SaturationSpec(lo, lo + width)
    s = saturate(v, spec)
    np.testing.assert_array_equal(saturate(s, spec), s)
    inside = (v >= spec.lower) & (v <= spec.upper)
    assert np.all((v - s == 0) == inside)


def test_linear_fallback_matches_closed_loop(plant, pid):
    tr = simulate(bench_cfg(plant, pid, horizon=5.0))
    parts = {"G": plant, "K": pid, "E": static_gain([[1.0]]), "C": static_gain([TRACK[0]])}
    conns = [("C", "G"), ("E", "r"), ("E", "-C"), ("K", "E"), ("G", "K")]
    T = interconnect(parts, conns, [("r", 1)], ["G"])
    _, y, _ = sig.lsim((T.A, T.B, T.C, T.D), np.ones_like(tr.t), tr.t)
    rms = math.sqrt(np.mean((tr.x - y) ** 2))
    assert rms <= 1e-6


def test_nominal_loop_violates_bound(plant, pid):
    tr = simulate(bench_cfg(plant, pid, state_sat=SaturationSpec.upper_only([1.0, 1.0])))
    assert tr.x[:, 1].max() > 1.0
    assert np.all(tr.u_mx == 0)


def test_pointwise_saturation_consistency(plant, pid):
    cfg = bench_cfg(plant, pid, state_sat=SaturationSpec.upper_only([1.0, 1.0]),
                    input_sat=SaturationSpec.symmetric([2.0]),
                    joint_antiwindup=static_gain([[0.5, 0.2, 0.1], [0.3, 0.0, 0.4]]))
    tr = simulate(cfg)
    np.testing.assert_array_equal(tr.xhat, saturate(tr.sat_x, cfg.state_sat))
    np.testing.assert_array_equal(tr.uhat, saturate(tr.u, cfg.input_sat))


def test_no_compensation_when_bounds_inactive(plant, pid, static_design):
    cfg = bench_cfg(plant, pid, state_sat=SaturationSpec.symmetric([100.0, 100.0]),
                    state_antiwindup=static_design)
    tr = simulate(cfg)
    assert np.all(tr.u_mx == 0)
    assert np.all(tr.state_error == 0)


def test_static_design_reduces_saturation_energy(plant, pid, static_design):
    kw = dict(state_sat=SaturationSpec.upper_only([1.0, 1.0]))
    mn = metrics(simulate(bench_cfg(plant, pid, **kw)))
    mc = metrics(simulate(bench_cfg(plant, pid, state_antiwindup=static_design, **kw)))
    assert mc.sat_error_energy < mn.sat_error_energy


def test_metrics_zero_trace():
    m = metrics(zero_trace())
    assert m.sat_error_energy == 0 and m.comp_energy == 0 and m.peak_u == 0 and m.tracking_ise == 0


def test_metrics_constant_violation():
    tr = zero_trace(n=201)
    tr.t = np.linspace(0, 2, 201)
    tr.xhat[:, 0] = 0.1
    assert metrics(tr).sat_error_energy == pytest.approx(0.02)


def test_dissipation_zero_trajectory():
    assert dissipation_check(zero_trace(), np.eye(2), 0.001, 3.15, 1.0, 1.0).max_residual == 0.0


def test_dissipation_certified_and_counterexample(plant, pid, static_design):
    d = static_design
    kw = dict(state_sat=SaturationSpec.upper_only([1.0, 1.0]))
    P = np.linalg.inv(d.Q)
    good = simulate(bench_cfg(plant, pid, state_antiwindup=d, **kw))
    res = dissipation_check(good, P, d.alpha, d.beta, d.gamma_xhat, d.gamma_uc)
    assert res.max_residual <= 1e-3
    bad = simulate(bench_cfg(plant, pid, state_antiwindup=static_gain(-d.K_m), **kw))
    res_bad = dissipation_check(bad, P, d.alpha, d.beta, d.gamma_xhat, d.gamma_uc)
    assert res_bad.max_residual > 0


def test_rk4_observed_order(plant, pid):
    ends = []
    for h in (0.04, 0.02, 0.01):
        tr = simulate(bench_cfg(plant, pid, horizon=2.0, step=h))
        ends.append(np.concatenate([tr.x[-1], tr.xc[-1] if tr.xc.size else []]))
    e1 = np.linalg.norm(ends[0] - ends[1])
    e2 = np.linalg.norm(ends[1] - ends[2])
    assert math.log2(e1 / e2) >= 3.5


def test_divergence_reports_time():
    from santw.simulate import SimulationError
    G = ss([[50.0]], [[1.0]], [[1.0]], [[0.0]])
    K = static_gain([[0.0]])
    cfg = LoopConfig(G, K, x0=[1.0], horizon=20.0, step=1e-2)
    with pytest.raises(SimulationError) as info:
        simulate(cfg)
    assert 0 < info.value.last_time < 20.0


def test_csv_export(plant, pid):
    tr = simulate(bench_cfg(plant, pid, horizon=0.01))
    text = tr.to_csv()
    header = text.splitlines()[0].split(",")
    assert header[0] == "t" and "xerr1" in header and "uerr1" in header
    assert len(text.splitlines()) == len(tr.t) + 1


def test_mismatched_dimensions(plant, pid):
    with pytest.raises(ValueError):
        bench_cfg(plant, pid, state_sat=SaturationSpec.symmetric([1.0]))
    with pytest.raises(ValueError):
        bench_cfg(plant, pid, horizon=-1.0)
