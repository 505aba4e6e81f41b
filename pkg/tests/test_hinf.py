import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from santw.examples import BENCH_A, BENCH_B, lead_weight, pid_controller
from santw.hinf import (
    CompensatorStructure,
    SynthesisOptions,
    as_weight,
    build_isantw_plant,
    build_oantw_plant,
    closed_loop,
    limiter_constraint,
    limiter_loop_matrix,
    mixed_sensitivity,
    saturation_mode_matrix,
    synth_fixed_structure,
    synth_full_matrix,
)
from santw.lti import (
    anti_windup_sensitivity,
    frequency_response,
    hinf_norm,
    series,
    ss,
    static_gain,
)
from santw.simulate import LoopConfig, SaturationSpec, _Loop

FAST = SynthesisOptions(starts=2, max_evals=400, grid_points=600)
OMEGAS = (0.0, 0.1, 1.0, 7.0, 100.0)


def test_oantw_channel_sizes(plant):
    P = build_oantw_plant(plant, 10.0, 0.01)
    assert P.partition == ((3, 1), (3, 2))
    assert P.model.nstates == 2


def test_oantw_zero_compensator_is_weighted_sensitivity(plant):
    W1 = lead_weight(155.5, 15.24)
    P = build_oantw_plant(plant, W1, 0.01)
    cl = closed_loop(P, static_gain(np.zeros((1, 2))))
    W = as_weight(W1, 2)
    for w in OMEGAS:
        H = frequency_response(cl, w)
        np.testing.assert_allclose(H[:2, :2], frequency_response(W, w), atol=1e-10)
        np.testing.assert_allclose(H[2:], 0.0, atol=1e-12)


def test_zero_state_compensator_gives_identity_sensitivity(plant):
    S = anti_windup_sensitivity(plant, static_gain(np.zeros((1, 2))))
    for w in OMEGAS:
        np.testing.assert_allclose(frequency_response(S, w), np.eye(2), atol=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_lft_matches_mixed_sensitivity(plant, seed):
    rng = np.random.default_rng(seed)
    Gmy = static_gain(rng.uniform(-1, 1, (1, 2)))
    P = build_oantw_plant(plant, 10.0, 0.01)
    cl = closed_loop(P, Gmy)
    ms = mixed_sensitivity(plant, Gmy, 10.0, 0.01)
    for w in OMEGAS:
        np.testing.assert_allclose(frequency_response(cl, w)[:, :3], frequency_response(ms, w), atol=1e-10)


def test_isantw_template_and_weight_poles(plant, pid):
    W = lead_weight(231.9, 22.74)
    G2 = ss(BENCH_A, BENCH_B, [[0.0, 1.0]], [[0.0]])
    P = build_isantw_plant(G2, pid, W, W)
    # exogenous (yhat, w, e, uhat) and controls (u_my, u_mu): 6 inputs; 4 outputs
    assert P.model.ninputs == 6 and P.model.noutputs == 4
    assert P.partition == ((4, 2), (2, 2))
    weight_poles = np.linalg.eigvals(as_weight(W, 1).A)
    np.testing.assert_allclose(weight_poles, [-22.74])


def test_isantw_error_channel_is_minus_controller(plant, pid):
    P = build_isantw_plant(plant, pid, 1.0, 1.0)
    cl = closed_loop(P, static_gain(np.zeros((2, 3))))
    e_col = 2 * 2  # after yhat and w
    for w in (0.1, 1.0, 10.0):
        H = frequency_response(cl, w)
        np.testing.assert_allclose(H[2, e_col], -frequency_response(pid, w)[0, 0], atol=1e-10)


def test_closed_loop_with_zero_compensator_equals_open_plant(plant):
    P = build_oantw_plant(plant, 10.0, 0.01)
    cl = closed_loop(P, static_gain(np.zeros((1, 2))))
    for w in OMEGAS:
        np.testing.assert_allclose(frequency_response(cl, w), frequency_response(P.model, w)[:3, :3], atol=1e-12)


def test_closed_loop_shape_mismatch(plant):
    P = build_oantw_plant(plant, 10.0, 0.01)
    with pytest.raises(ValueError):
        closed_loop(P, static_gain(np.zeros((2, 2))))


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 20.0), st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
def test_weight_homogeneity(c, k1, k2):
    G = ss(BENCH_A, BENCH_B, np.eye(2), np.zeros((2, 1)))
    Gmy = static_gain([[k1, k2]])
    n1 = hinf_norm(closed_loop(build_oantw_plant(G, 10.0, 0.01), Gmy))
    n2 = hinf_norm(closed_loop(build_oantw_plant(G, 10.0 * c, 0.01 * c), Gmy))
    if np.isfinite(n1):
        assert n2 == pytest.approx(c * n1, rel=1e-5)
    else:
        assert not np.isfinite(n2)


def test_structure_realize_and_embedding():
    rng = np.random.default_rng(1)
    s = CompensatorStructure.isantw_diagonal(2, 1, 1, 2)
    th = s.random_theta(rng)
    C = s.realize(th)
    assert C.shape == (2, 3) and C.nstates == 6
    assert np.all(np.linalg.eigvals(C.A).real < 0)
    E = s.embedding().realize(s.embed(th))
    for w in OMEGAS:
        np.testing.assert_allclose(frequency_response(E, w), frequency_response(C, w), atol=1e-10)
    assert CompensatorStructure.from_dict(s.to_dict()) == s


def test_feedthrough_start_realizes_gain():
    s = CompensatorStructure.full(2, 1, 2)
    D = np.array([[0.3, -0.7]])
    C = s.realize(s.theta_with_feedthrough(D))
    np.testing.assert_allclose(frequency_response(C, 0.0), D, atol=1e-12)


def test_full_order_zero_is_static():
    s = CompensatorStructure.full(2, 1, 0)
    assert s.order == 0 and s.topology == "static" and s.nparams == 2


def test_oantw_synthesis_beats_zero_and_history_monotone(plant):
    W1 = lead_weight(155.5, 15.24)
    P = build_oantw_plant(plant, W1, 0.01)
    zero = hinf_norm(closed_loop(P, static_gain(np.zeros((1, 2)))))
    res = synth_fixed_structure(P, CompensatorStructure.full(2, 1, 2), seed=0, options=FAST)
    assert res.stable and res.norm < zero
    h = np.asarray(res.history)
    assert np.all(np.diff(h) <= 0)
    assert res.norm == pytest.approx(hinf_norm(closed_loop(P, res.compensator)), rel=1e-5)


def test_synthesis_deterministic(plant):
    P = build_oantw_plant(plant, 10.0, 0.01)
    s = CompensatorStructure.static(2, 1)
    a = synth_fixed_structure(P, s, seed=3, options=FAST)
    b = synth_fixed_structure(P, s, seed=3, options=FAST)
    np.testing.assert_array_equal(a.theta, b.theta)


def test_full_matrix_never_worse_than_structured(plant, pid):
    P = build_isantw_plant(plant, pid, 1.0, 1.0)
    s = CompensatorStructure.isantw_diagonal(2, 1, 1, 0)
    d = synth_fixed_structure(P, s, seed=0, options=FAST)
    f = synth_full_matrix(P, seed=0, options=FAST, warm_start=d)
    assert f.norm <= d.norm + 1e-6
    assert f.structure.order == s.order


def _mode_setup(pid):
    rng = np.random.default_rng(7)
    comp = ss(-np.diag([2.0, 5.0]), rng.normal(size=(2, 3)), rng.normal(size=(2, 2)),
              0.3 * rng.normal(size=(2, 3)))
    G = ss(BENCH_A, BENCH_B, np.eye(2), np.zeros((2, 1)))
    cfg = LoopConfig(G, pid, state_sat=SaturationSpec.upper_only([1.0, 1.0]),
                     input_sat=SaturationSpec.symmetric([2.0]), joint_antiwindup=comp,
                     tracking_matrix=[[0.0, 1.0]], reference=[0.0])
    return G, comp, cfg


@pytest.mark.parametrize("u_saturated", [False, True])
def test_mode_matrix_matches_simulator_difference(pid, u_saturated):
    G, comp, cfg = _mode_setup(pid)
    loop = _Loop(cfg)
    base = np.array([5.0, 4.0, 0.0, 0.0, 0.0, 0.0])
    # pick the controller integral so u sits well inside or outside the bound
    for k in np.linspace(-40.0, 40.0, 161):
        base[2] = k
        u = abs(loop.signals(0.0, base)["u"][0])
        if (u > 4.0) if u_saturated else (u < 1.0):
            break
    s = loop.signals(0.0, base)
    assert (abs(s["u"][0]) > 2.0) == u_saturated and np.all(s["sx"] > 1.0)
    M = saturation_mode_matrix(BENCH_A, BENCH_B, pid, [[0.0, 1.0]], np.eye(2), comp,
                               state_active=[1, 1], input_active=[float(u_saturated)])
    dz = 1e-3 * np.random.default_rng(0).normal(size=6)
    s2 = loop.signals(0.0, base + dz)
    assert (abs(s2["u"][0]) > 2.0) == u_saturated
    np.testing.assert_allclose(loop.deriv(0.0, base + dz) - loop.deriv(0.0, base), M @ dz, atol=1e-9)


def test_limiter_matrix_and_constraint(pid):
    G, comp, _ = _mode_setup(pid)
    M = limiter_loop_matrix(BENCH_A, BENCH_B, pid, [[0.0, 1.0]], np.eye(2), comp)
    np.testing.assert_array_equal(
        M, saturation_mode_matrix(BENCH_A, BENCH_B, pid, [[0.0, 1.0]], np.eye(2), comp, [1, 1], [0]))
    con = limiter_constraint(BENCH_A, BENCH_B, pid, [[0.0, 1.0]], np.eye(2), margin=0.5)
    assert con(comp) == pytest.approx(np.max(np.linalg.eigvals(M).real) + 0.5)
    every = limiter_constraint(BENCH_A, BENCH_B, pid, [[0.0, 1.0]], np.eye(2), modes="all")
    assert every(comp) >= con(comp) - 0.5
    with pytest.raises(ValueError):
        limiter_constraint(BENCH_A, BENCH_B, pid, [[0.0, 1.0]], np.eye(2), modes="bogus")


def test_unsaturated_mode_is_nominal_loop(pid):
    zero = static_gain(np.zeros((2, 3)))
    M = saturation_mode_matrix(BENCH_A, BENCH_B, pid, [[0.0, 1.0]], np.eye(2), zero, [0, 0], [0])
    G = ss(BENCH_A, BENCH_B, [[0.0, 1.0]], [[0.0]])
    L = series(pid, G)
    Acl = L.A - L.B @ L.C / (1 + L.D[0, 0])
    np.testing.assert_allclose(np.sort_complex(np.linalg.eigvals(M)), np.sort_complex(np.linalg.eigvals(Acl)),
                               atol=1e-9)
