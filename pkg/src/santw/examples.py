"""Builders for the second-order benchmark plant and its controllers.

The plant is ``x' = [[-1, -1], [1, 0]] x + [1, 0]' u`` with both states
measured.  Two nominal controllers are provided: a filtered PID on
``r - x2`` and a MIMO proportional-integral state feedback with
integral action on ``r - x2``.
"""
from __future__ import annotations

import numpy as np
from scipy.signal import place_poles

from .lti import StateSpaceModel, ss, tf

__all__ = [
    "BENCH_A",
    "BENCH_B",
    "bench_plant",
    "pid_controller",
    "mimo_pi_controller",
    "lead_weight",
]

BENCH_A = np.array([[-1.0, -1.0], [1.0, 0.0]])
BENCH_B = np.array([[1.0], [0.0]])


def bench_plant() -> StateSpaceModel:
    """Benchmark plant with ``y = x``."""
    return ss(BENCH_A, BENCH_B, np.eye(2), np.zeros((2, 1)), inputs=("u",), outputs=("x1", "x2"))


def pid_controller(kp: float, ki: float, kd: float, tau: float) -> StateSpaceModel:
    """``kp + ki/s + kd s/(tau s + 1)`` as a one-input state-space model.

    States are the integral of the error and the derivative filter state.
    """
    if tau <= 0:
        raise ValueError("derivative filter time constant must be positive")
    return ss([[0.0, 0.0], [0.0, -1.0 / tau]], [[1.0], [1.0 / tau]], [[ki, -kd / tau]],
              [[kp + kd / tau]], inputs=("e",), outputs=("u",))


def mimo_pi_controller(poles, A=BENCH_A, B=BENCH_B, tracked: int = 1) -> tuple[StateSpaceModel, np.ndarray]:
    """Integral state feedback placing the augmented loop poles.

    The controller input is ``[r - x_tracked, -x1, ..., -xn]`` and the
    output ``u = Ki z + Kx (-x)`` with ``z' = r - x_tracked``.

    Returns
    -------
    (controller, tracking matrix ``C_e``)
    """
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    n, m = B.shape
    if m != 1:
        raise ValueError("only single-input plants are supported")
    row = np.eye(n)[[tracked]]
    Aa = np.block([[A, np.zeros((n, 1))], [-row, np.zeros((1, 1))]])
    Ba = np.vstack([B, np.zeros((1, m))])
    F = place_poles(Aa, Ba, np.asarray(poles)).gain_matrix
    Kx, Ki = F[:, :n], -F[:, n:]
    K = ss(np.zeros((1, 1)), np.hstack([[[1.0]], np.zeros((1, n))]), Ki, np.hstack([np.zeros((m, 1)), Kx]))
    return K, np.vstack([row, np.eye(n)])


def lead_weight(zero: float, pole: float):
    """``(s + zero) / (s + pole)``."""
    return tf([1.0, zero], [1.0, pole])
