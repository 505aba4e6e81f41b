import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from santw.examples import lead_weight
from santw.vsc import (
    FaultScenario,
    VscParams,
    VscState,
    build_vsc_loop,
    design_isantw,
    design_nominal_controller,
    operating_point,
    powers,
    run_fault_study,
    state_matrices,
    steady_state,
    vsc_dynamics,
)

P = VscParams()
FAST = dict(horizon=0.25, step=2e-5)
finite = st.floats(-100, 100, allow_nan=False)


@pytest.fixture(scope="module")
def nominal():
    return design_nominal_controller(P)


@pytest.fixture(scope="module")
def limit():
    x, _ = operating_point(P, 20e3)
    return 1.2 * math.hypot(x[2], x[3])


def test_zero_state_zero_derivative():
    np.testing.assert_array_equal(vsc_dynamics(np.zeros(6), [0, 0], P, v=[0, 0]), np.zeros(6))


def test_frame_rotation_term():
    d = vsc_dynamics(VscState(i_q1=1.0), [0, 0], P, v=[0, 0])
    assert d[0] == pytest.approx(P.omega0)


def test_steady_state_is_equilibrium():
    x = steady_state(P, [0.6, 0.05])
    assert np.max(np.abs(vsc_dynamics(x, [0.6, 0.05], P))) < 1e-6


def test_operating_point_delivers_power():
    x, m = operating_point(P, 20e3, 2e3)
    Pg, Qg = powers(P.v_grid, x[2:4])
    assert Pg == pytest.approx(20e3) and Qg == pytest.approx(2e3)
    assert np.max(np.abs(vsc_dynamics(x, m, P))) < 1e-6


@settings(max_examples=30, deadline=None)
@given(arrays(float, 6, elements=finite), arrays(float, 2, elements=st.floats(-1, 1)))
def test_jacobian_equals_state_matrix(x, m):
    A, B, Bv = state_matrices(P)
    np.testing.assert_allclose(vsc_dynamics(x, m, P), A @ x + B @ m + Bv @ P.v_grid, rtol=1e-9, atol=1e-6)


def test_powers_examples():
    assert powers([1, 0], [1, 0]) == (1.5, 0.0)
    assert powers([1, 0], [0, 1]) == (0.0, -1.5)


@settings(max_examples=50, deadline=None)
@given(arrays(float, 2, elements=finite), arrays(float, 2, elements=finite))
def test_apparent_power_identity(v, i):
    Pg, Qg = powers(v, i)
    assert Pg ** 2 + Qg ** 2 == pytest.approx(2.25 * (v @ v) * (i @ i), rel=1e-9, abs=1e-6)


@settings(max_examples=50, deadline=None)
@given(arrays(float, 6, elements=finite))
def test_lossless_filter_conserves_energy(x):
    p = VscParams(R1=0.0, R2=0.0)
    d = vsc_dynamics(x, [0, 0], p, v=[0, 0])
    grad = np.array([p.L1, p.L1, p.L2, p.L2, p.Cf, p.Cf]) * x
    scale = 1.0 + np.abs(grad) @ np.abs(d)
    assert abs(grad @ d) <= 1e-9 * scale


def test_rotation_coupling_is_skew():
    A, _, _ = state_matrices(P)
    W = P.omega0 * np.kron(np.eye(3), [[0, 1], [-1, 0]])
    R = A - A.T
    mask = W != 0
    np.testing.assert_allclose(R[mask], 2 * W[mask])


def test_invalid_parameters():
    with pytest.raises(ValueError):
        VscParams(L1=0.0)
    with pytest.raises(ValueError):
        FaultScenario(resistance=0.0)
    with pytest.raises(ValueError):
        FaultScenario(start=0.2, end=0.1)


def test_zero_duration_fault_is_no_fault(nominal):
    a, _ = run_fault_study(FaultScenario(0.1, 0.12, 0.12), P, nominal, **FAST)
    b, _ = run_fault_study(FaultScenario(1.0, 0.0, 0.0), P, nominal, **FAST)
    np.testing.assert_array_equal(a.x, b.x)


def test_surge_begins_at_fault_onset(nominal):
    h = FAST["step"]
    a, _ = run_fault_study(FaultScenario(0.1, 0.12, 0.16), P, nominal, **FAST)
    b, _ = run_fault_study(FaultScenario(1.0, 0.0, 0.0), P, nominal, **FAST)
    first = int(np.argmax(np.any(a.x != b.x, axis=1)))
    assert 0.12 - 1e-12 <= a.t[first] <= 0.12 + h + 1e-12


def test_milder_fault_smaller_peak(nominal):
    _, m1 = run_fault_study(FaultScenario(0.1, 0.12, 0.16), P, nominal, **FAST)
    _, m2 = run_fault_study(FaultScenario(0.2, 0.12, 0.16), P, nominal, **FAST)
    assert m2.peak_grid_current < m1.peak_grid_current


def test_power_step_tracks(nominal):
    cfg, xk0 = build_vsc_loop(P, nominal, step_time=0.08, P_initial=10e3, **FAST)
    from santw.simulate import simulate
    tr = simulate(cfg, x0_controller=xk0)
    late = tr.t >= 0.15
    Pg = tr.y_meas[late, 0] * nominal.S_base
    assert np.all(np.abs(Pg - 20e3) <= 0.02 * 20e3)


def test_uncompensated_fault_exceeds_limit(nominal, limit):
    _, m = run_fault_study(FaultScenario(0.1, 0.12, 0.16), P, nominal, **FAST)
    assert m.peak_grid_current > limit


@pytest.mark.slow
def test_compensated_peak_lower(nominal, limit):
    W = lead_weight(231.9, 22.74)
    x, _ = operating_point(P, 20e3)
    design = design_isantw(P, nominal, W, W, current_base=math.hypot(x[2], x[3]))
    kw = dict(current_limit=limit, **FAST)
    fault = FaultScenario(0.1, 0.12, 0.16)
    _, m0 = run_fault_study(fault, P, nominal, **kw)
    _, m1 = run_fault_study(fault, P, nominal, design, **kw)
    assert m1.peak_grid_current < m0.peak_grid_current
    assert m1.peak_applied_modulation <= 1.0 + 1e-12
