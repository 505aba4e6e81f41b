import numpy as np
import pytest
import scipy.linalg as sla

from santw.examples import BENCH_A, BENCH_B
from santw.lmi import (
    Algorithm1Options,
    algorithm1_dynamic,
    algorithm1_static,
    augmented_state_matrix,
    build_theorem1,
    build_theorem2,
    static_dissipation_matrix,
    verify_certificate,
)
from santw.sdp import solve_sdp

ALPHA, BETA = 0.001, 3.15


@pytest.fixture(scope="module")
def static_design():
    return algorithm1_static(BENCH_A, BENCH_B, ALPHA, BETA)


@pytest.fixture(scope="module")
def dynamic_design():
    return algorithm1_dynamic(BENCH_A, BENCH_B, ALPHA, BETA, h=(0.3, 1.0))


def test_static_lmi_block_layout():
    p = build_theorem1(BENCH_A, BENCH_B, ALPHA, BETA, 1.0, np.eye(2), 10.0)
    assert p.meta["block_sizes"] == (2, 1, 2, 2, 1)
    assert p.block_sizes("J") == (8, 8)
    J = p.constraints[0].expr
    v = np.random.default_rng(0).standard_normal(p.nvars)
    M = J.value(v)
    np.testing.assert_allclose(M, M.T, atol=1e-12)


def test_dynamic_lmi_block_layout():
    p = build_theorem2(BENCH_A, BENCH_B, ALPHA, BETA, 1.0, 10.0, 0.5, 5.0, np.eye(2))
    assert p.meta["block_sizes"] == (4, 1, 2, 3)
    assert p.block_sizes("Gamma") == (10, 10)


def test_dynamic_lmi_h_constraint():
    with pytest.raises(ValueError):
        build_theorem2(BENCH_A, BENCH_B, ALPHA, BETA, 1.0, 10.0, 1.0, 1.0, np.eye(2))


def test_structured_q_positive(rng):
    G = rng.standard_normal((3, 3))
    Q1 = G @ G.T + np.eye(3)
    for h1, h2 in [(0.1, 0.02), (0.5, 5.0), (2.0, 4.5)]:
        Q = np.block([[Q1, h1 * Q1], [h1 * Q1, h2 * Q1]])
        assert np.linalg.eigvalsh(Q)[0] > 0


def test_weights_must_be_positive():
    with pytest.raises(ValueError):
        algorithm1_dynamic(BENCH_A, BENCH_B, 0.0, BETA)
    with pytest.raises(ValueError):
        algorithm1_static(BENCH_A, BENCH_B, ALPHA, -1.0)


def test_static_design_certificate(static_design):
    d = static_design
    rep = verify_certificate(d, BENCH_A, BENCH_B)
    assert rep.passed, rep.messages
    assert rep.hurwitz and rep.linearization_ok
    assert np.max(np.linalg.eigvals(BENCH_A - BENCH_B @ d.K_m).real) < 0
    assert d.certificate.margin < 0


def test_static_design_gamma_monotone(static_design):
    hist = [g for g in static_design.gamma_history if np.isfinite(g)]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(hist, hist[1:]))


def test_congruence_chain(static_design):
    d = static_design
    P = np.linalg.inv(d.Q)
    g = d.gamma_xhat
    n, m = 2, 1
    Q, Y = d.Q, d.Y
    A, B = BENCH_A, BENCH_B
    Z = np.zeros
    J = np.block([
        [A @ Q + Q @ A.T - B @ Y - Y.T @ B.T, B, B @ Y, -BETA * Q, -ALPHA * Y.T],
        [B.T, -np.eye(m), Z((m, n)), Z((m, n)), Z((m, m))],
        [Y.T @ B.T, Z((n, m)), -g * Q @ Q, BETA * Q, ALPHA * Y.T],
        [-BETA * Q, Z((n, m)), BETA * Q, -BETA * np.eye(n), Z((n, m))],
        [-ALPHA * Y, Z((m, m)), ALPHA * Y, Z((m, n)), -ALPHA * np.eye(m)],
    ])
    T = sla.block_diag(P, np.eye(m), P, np.eye(n), np.eye(m))
    M = static_dissipation_matrix(A, B, d.K_m, P, ALPHA, BETA, 1.0, g)
    np.testing.assert_allclose(T @ J @ T, M, atol=1e-8 * np.abs(M).max())
    assert np.linalg.eigvalsh(0.5 * (M + M.T))[-1] < 0


def test_tangent_bound_identity(static_design, rng):
    Q = static_design.Q
    Qc = static_design.Qc
    gamma = 2.0
    lhs = -gamma * Q.T @ Q
    rhs = -gamma * (Q.T @ Qc + Qc.T @ Q - Qc.T @ Qc)
    assert np.linalg.eigvalsh(rhs - lhs)[0] >= -1e-10
    G = rng.standard_normal((2, 2))
    Qr = G @ G.T + np.eye(2)
    assert np.linalg.eigvalsh(gamma * (Qr - Qc).T @ (Qr - Qc))[0] >= -1e-12


def test_unstable_gain_fails_certificate(static_design):
    from dataclasses import replace
    bad = replace(static_design, K_m=-static_design.K_m - 5.0)
    assert not verify_certificate(bad, BENCH_A, BENCH_B).passed


def test_scalar_unstable_plant():
    d = algorithm1_static([[1.0]], [[1.0]], ALPHA, BETA)
    assert 1.0 - d.K_m.item() < 0


def test_static_design_deterministic():
    a = algorithm1_static(BENCH_A, BENCH_B, ALPHA, BETA, options=Algorithm1Options(seed=3))
    b = algorithm1_static(BENCH_A, BENCH_B, ALPHA, BETA, options=Algorithm1Options(seed=3))
    np.testing.assert_array_equal(a.K_m, b.K_m)
    assert a.certificate.to_json() == b.certificate.to_json()


def test_dynamic_design_certificate(dynamic_design):
    d = dynamic_design
    rep = verify_certificate(d, BENCH_A, BENCH_B)
    assert rep.passed, rep.messages
    At = augmented_state_matrix(BENCH_A, BENCH_B, d.A_q, d.B_q, d.K_m1, d.K_m2)
    assert np.max(np.linalg.eigvals(At).real) < 0
    np.testing.assert_array_equal(d.B_q, np.eye(2))
    # pole radius keeps the compensator usable with a 1 ms step
    assert np.max(np.abs(np.linalg.eigvals(d.A_q))) <= 500 * (1 + 1e-6)


def test_augmented_matrix_without_gains():
    Aq = np.diag([-2.0, -3.0])
    At = augmented_state_matrix(BENCH_A, BENCH_B, Aq, np.eye(2), np.zeros((1, 2)), np.zeros((1, 2)))
    w = np.sort_complex(np.linalg.eigvals(At))
    expect = np.sort_complex(np.concatenate([np.linalg.eigvals(BENCH_A), [-2, -3]]))
    np.testing.assert_allclose(w, expect, atol=1e-12)


def test_static_lmi_feasible_at_returned_point(static_design):
    d = static_design
    p = build_theorem1(BENCH_A, BENCH_B, ALPHA, BETA, 1.0, d.Qc, d.gamma_xhat * 1.01)
    sol = solve_sdp(p)
    assert sol.feasible and sol.margin < 0


def test_design_serializes(static_design):
    d = static_design.to_dict()
    assert d["kind"] == "static-lmi"
    assert len(d["K_m"][0]) == 2
