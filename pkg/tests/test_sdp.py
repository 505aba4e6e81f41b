import numpy as np
import pytest
import scipy.linalg as sla

from santw.examples import BENCH_A
from santw.sdp import LmiProblem, SdpOptions, bmat, solve_sdp


def lyapunov_problem(A):
    n = A.shape[0]
    p = LmiProblem("lyapunov")
    Q = p.symmetric("Q", n)
    p.add_lmi((A @ Q).sym(), "<", "decay")
    p.add_lmi(Q, ">", "Q")
    return p


def test_scalar_lmi_with_objective():
    p = LmiProblem()
    x = p.scalar("x")
    p.add_lmi(x * np.eye(2) - np.eye(2), "<")
    p.add_lmi(x + 10.0, ">")
    p.minimize(x)
    sol = solve_sdp(p, SdpOptions(stop_at_feasible=False))
    assert sol.status == "optimal"
    assert sol.margin < 0
    assert sol.values["x"].item() < 1
    assert sol.objective == pytest.approx(-10.0, abs=1e-3)


def test_lyapunov_feasible_for_hurwitz():
    sol = solve_sdp(lyapunov_problem(BENCH_A))
    assert sol.feasible and sol.margin < 0
    Q = sol.values["Q"]
    assert np.all(np.linalg.eigvalsh(Q) > 0)
    assert np.all(np.linalg.eigvalsh(BENCH_A @ Q + Q @ BENCH_A.T) < 0)
    # the direct Lyapunov solution is a certificate of the same kind
    X = sla.solve_continuous_lyapunov(BENCH_A, -np.eye(2))
    assert np.all(np.linalg.eigvalsh(X) > 0)


def test_lyapunov_infeasible_for_identity():
    sol = solve_sdp(lyapunov_problem(np.eye(2)))
    assert sol.status == "infeasible"
    assert not sol.feasible


def test_reruns_are_byte_identical():
    a = solve_sdp(lyapunov_problem(BENCH_A)).to_json()
    b = solve_sdp(lyapunov_problem(BENCH_A)).to_json()
    assert a == b


def test_bmat_symmetry_placeholder():
    p = LmiProblem()
    Q = p.symmetric("Q", 2)
    Y = p.matrix("Y", 1, 2)
    M = bmat([[Q, Y.T], ["*", -np.eye(1)]])
    assert M.shape == (3, 3)
    assert M.is_structurally_symmetric()


def test_asymmetric_constraint_rejected():
    p = LmiProblem()
    Y = p.matrix("Y", 2, 2)
    with pytest.raises(ValueError):
        p.add_lmi(Y, "<")


def test_problem_serializes():
    d = lyapunov_problem(BENCH_A).to_dict()
    assert d["name"] == "lyapunov"
