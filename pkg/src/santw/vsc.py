"""Grid-connected voltage-source converter with an LCL filter (dq frame).

Average model, ideal PLL, constant DC link.  States are ordered
``(i_d1, i_q1, i_gd, i_gq, v_cfd, v_cfq)``; inputs are the modulation
indices ``(m_d, m_q)``; the grid voltage ``(v_d, v_q)`` enters as a
disturbance.  A grid fault is a step change of the grid voltage seen by
the filter: the fault resistance forms a divider with the line impedance.

The default parameter set and the nominal controller are not from any
published design; they are a plausible low-voltage inverter chosen so the
filter resonance sits well above the control bandwidth.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.linalg as sla
from scipy.integrate import trapezoid

from .hinf import (
    CompensatorStructure,
    SynthesisOptions,
    SynthesisResult,
    build_isantw_plant,
    limiter_constraint,
    synth_fixed_structure,
)
from .lti import RationalTransfer, StateSpaceModel, is_hurwitz, ss, to_state_space
from .simulate import (
    LoopConfig,
    MetricsReport,
    SaturationSpec,
    SimulationTrace,
    metrics,
    simulate,
)

__all__ = [
    "VscParams",
    "VscState",
    "FaultScenario",
    "VscController",
    "VscMetrics",
    "STATE_LABELS",
    "vsc_dynamics",
    "state_matrices",
    "plant_model",
    "powers",
    "steady_state",
    "operating_point",
    "design_nominal_controller",
    "grid_current_plant",
    "build_vsc_loop",
    "run_fault_study",
    "fault_metrics",
    "VscDesign",
    "design_isantw",
]

STATE_LABELS = ("i_d1", "i_q1", "i_gd", "i_gq", "v_cfd", "v_cfq")
GRID_CURRENT = (2, 3)


@dataclass(frozen=True)
class VscParams:
    """Filter, grid and line data (SI units)."""

    R1: float = 0.005
    L1: float = 5e-3
    R2: float = 0.005
    L2: float = 5e-3
    Cf: float = 50e-6
    omega0: float = 2 * math.pi * 50
    V_DC: float = 800.0
    v_d: float = 400.0 * math.sqrt(2.0 / 3.0)
    v_q: float = 0.0
    line_R: float = 0.1
    line_L: float = 1e-3

    def __post_init__(self):
        if min(self.L1, self.L2, self.Cf, self.line_L) <= 0:
            raise ValueError("inductances and capacitance must be positive")
        if self.omega0 <= 0 or self.V_DC <= 0:
            raise ValueError("omega0 and V_DC must be positive")

    @property
    def v_grid(self) -> np.ndarray:
        return np.array([self.v_d, self.v_q])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "VscParams":
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class VscState:
    i_d1: float = 0.0
    i_q1: float = 0.0
    i_gd: float = 0.0
    i_gq: float = 0.0
    v_cfd: float = 0.0
    v_cfq: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_array()):
            raise ValueError("state must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.i_d1, self.i_q1, self.i_gd, self.i_gq, self.v_cfd, self.v_cfq])

    @classmethod
    def from_array(cls, x) -> "VscState":
        return cls(*map(float, np.asarray(x, dtype=float).reshape(6)))


def vsc_dynamics(x, m, p: VscParams, v=None) -> np.ndarray:
    """State derivative of the averaged converter, written term by term."""
    i_d1, i_q1, i_gd, i_gq, v_cfd, v_cfq = np.asarray(
        x.as_array() if isinstance(x, VscState) else x, dtype=float)
    m_d, m_q = np.asarray(m, dtype=float)
    v_d, v_q = p.v_grid if v is None else np.asarray(v, dtype=float)
    w = p.omega0
    return np.array([
        -p.R1 / p.L1 * i_d1 + w * i_q1 - v_cfd / p.L1 + 0.5 * m_d * p.V_DC / p.L1,
        -p.R1 / p.L1 * i_q1 - w * i_d1 - v_cfq / p.L1 + 0.5 * m_q * p.V_DC / p.L1,
        -p.R2 / p.L2 * i_gd + w * i_gq + v_cfd / p.L2 - v_d / p.L2,
        -p.R2 / p.L2 * i_gq - w * i_gd + v_cfq / p.L2 - v_q / p.L2,
        i_d1 / p.Cf - i_gd / p.Cf + w * v_cfq,
        i_q1 / p.Cf - i_gq / p.Cf - w * v_cfd,
    ])


def state_matrices(p: VscParams):
    """``(A, B, B_v)`` with ``x' = A x + B m + B_v v``."""
    w = p.omega0
    A = np.array([
        [-p.R1 / p.L1, w, 0, 0, -1 / p.L1, 0],
        [-w, -p.R1 / p.L1, 0, 0, 0, -1 / p.L1],
        [0, 0, -p.R2 / p.L2, w, 1 / p.L2, 0],
        [0, 0, -w, -p.R2 / p.L2, 0, 1 / p.L2],
        [1 / p.Cf, 0, -1 / p.Cf, 0, 0, w],
        [0, 1 / p.Cf, 0, -1 / p.Cf, -w, 0],
    ])
    B = np.zeros((6, 2))
    B[0, 0] = B[1, 1] = 0.5 * p.V_DC / p.L1
    Bv = np.zeros((6, 2))
    Bv[2, 0] = Bv[3, 1] = -1 / p.L2
    return A, B, Bv


def plant_model(p: VscParams, outputs=None) -> StateSpaceModel:
    """Modulation to states (or to the selected state rows)."""
    A, B, _ = state_matrices(p)
    C = np.eye(6) if outputs is None else np.eye(6)[list(outputs)]
    labels = STATE_LABELS if outputs is None else tuple(STATE_LABELS[i] for i in outputs)
    return ss(A, B, C, np.zeros((C.shape[0], 2)), inputs=("m_d", "m_q"), outputs=labels)


def grid_current_plant(p: VscParams) -> StateSpaceModel:
    return plant_model(p, GRID_CURRENT)


def powers(v, ig) -> tuple[float, float]:
    """Active and reactive power delivered to the grid."""
    v_d, v_q = np.asarray(v, dtype=float)
    i_d, i_q = np.asarray(ig, dtype=float)
    return 1.5 * (v_d * i_d + v_q * i_q), 1.5 * (v_q * i_d - v_d * i_q)


def steady_state(p: VscParams, m, v=None) -> np.ndarray:
    """Equilibrium state for constant modulation and grid voltage."""
    A, B, Bv = state_matrices(p)
    v = p.v_grid if v is None else np.asarray(v, dtype=float)
    return np.linalg.solve(A, -(B @ np.asarray(m, dtype=float) + Bv @ v))


def operating_point(p: VscParams, P_ref: float, Q_ref: float = 0.0):
    """Equilibrium ``(x, m)`` delivering ``(P_ref, Q_ref)`` at the nominal grid voltage."""
    A, B, Bv = state_matrices(p)
    v_d, v_q = p.v_grid
    M = np.array([[v_d, v_q], [v_q, -v_d]]) * 1.5
    ig = np.linalg.solve(M, [P_ref, Q_ref])
    # unknowns (x, m): A x + B m = -Bv v and x[2:4] = ig
    lhs = np.zeros((8, 8))
    lhs[:6, :6] = A
    lhs[:6, 6:] = B
    lhs[6, 2] = lhs[7, 3] = 1.0
    rhs = np.concatenate([-Bv @ p.v_grid, ig])
    sol = np.linalg.solve(lhs, rhs)
    return sol[:6], sol[6:]


@dataclass(frozen=True)
class FaultScenario:
    """Resistive fault on the line, seen at the filter as a voltage divider.

    During ``[start, end)`` the grid voltage phasor is multiplied by
    ``R_f / (R_f + Z_line)`` with ``Z_line = line_R + j w0 line_L``.
    """

    resistance: float = 0.1
    start: float = 0.12
    end: float = 0.16
    model: str = "voltage-sag divider"

    def __post_init__(self):
        if not self.resistance > 0:
            raise ValueError("fault resistance must be positive")
        if self.end < self.start:
            raise ValueError("fault must end after it starts")

    def sag_factor(self, p: VscParams) -> complex:
        z_line = complex(p.line_R, p.omega0 * p.line_L)
        return self.resistance / (self.resistance + z_line)

    def voltage(self, t: float, p: VscParams) -> np.ndarray:
        v = complex(p.v_d, p.v_q)
        if self.start <= t < self.end:
            v = v * self.sag_factor(p)
        return np.array([v.real, v.imag])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "FaultScenario":
        return cls(float(d["resistance"]), float(d["start"]), float(d["end"]),
                   d.get("model", "voltage-sag divider"))


@dataclass(frozen=True)
class VscController:
    """Integral power tracking with full state feedback.

    Controller input is ``[P_err, Q_err, -x]`` (powers normalized by
    ``S_base``), output the modulation pair:
    ``m = Ki * integral([P_err, Q_err]) - Kx x``.
    """

    model: StateSpaceModel
    Kx: np.ndarray
    Ki: np.ndarray
    S_base: float
    weights: dict = field(default_factory=dict)

    def integrator_state(self, x, m) -> np.ndarray:
        """Integrator value holding modulation ``m`` at state ``x``."""
        return np.linalg.solve(self.Ki, np.asarray(m) + self.Kx @ np.asarray(x))

    def to_dict(self) -> dict:
        return {"Kx": self.Kx.tolist(), "Ki": self.Ki.tolist(), "S_base": self.S_base,
                "weights": dict(self.weights)}


def design_nominal_controller(p: VscParams, S_base: float = 20e3, q_current: float = 1e-4,
                              q_voltage: float = 1e-7, q_integral: float = 4e4, r: float = 1.0) -> VscController:
    """LQR gains for integral power tracking around the nominal grid voltage.

    The default weights give a power step settling time of roughly 20 ms
    and keep the LCL resonance damped through the state feedback.
    """
    A, B, _ = state_matrices(p)
    v_d, v_q = p.v_grid
    Cpq = np.zeros((2, 6))
    Cpq[0, 2:4] = [v_d, v_q]
    Cpq[1, 2:4] = [v_q, -v_d]
    Cpq *= 1.5 / S_base
    Aa = np.block([[A, np.zeros((6, 2))], [-Cpq, np.zeros((2, 2))]])
    Ba = np.vstack([B, np.zeros((2, 2))])
    Q = np.diag([q_current] * 4 + [q_voltage] * 2 + [q_integral] * 2)
    R = r * np.eye(2)
    X = sla.solve_continuous_are(Aa, Ba, Q, R)
    F = np.linalg.solve(R, Ba.T @ X)
    Kx, Ki = F[:, :6], -F[:, 6:]
    if not is_hurwitz(Aa - Ba @ F):
        raise ValueError("nominal power loop is not stable")
    model = ss(np.zeros((2, 2)), np.hstack([np.eye(2), np.zeros((2, 6))]), Ki, np.hstack([np.zeros((2, 2)), Kx]),
               inputs=("P_err", "Q_err") + tuple(f"-{s}" for s in STATE_LABELS), outputs=("m_d", "m_q"))
    return VscController(model, Kx, Ki, S_base, {"q_current": q_current, "q_voltage": q_voltage,
                                                 "q_integral": q_integral, "r": r})


def build_vsc_loop(p: VscParams, nominal: VscController, design=None, *, P_ref=20e3, Q_ref=0.0,
                   step_time: float | None = None, P_initial: float = 0.0, fault: FaultScenario | None = None,
                   current_limit: float | None = None, modulation_limit: float | None = 1.0,
                   horizon: float = 0.3, step: float = 1e-5) -> tuple[LoopConfig, np.ndarray]:
    """Loop configuration and initial controller state for one study.

    With ``step_time`` the power reference steps from ``P_initial`` to
    ``P_ref`` at that time; otherwise the loop starts in steady state at
    ``P_ref``.  ``design`` is a joint compensator from
    ``[i_g error (2); m error (2)]`` to ``[m_my (2); controller input (8)]``.
    ``current_limit`` (A, per dq component) enables the grid-current
    limiter; ``modulation_limit`` the input saturation.

    Returns
    -------
    (LoopConfig, controller initial state)
    """
    S = nominal.S_base
    if step_time is None:
        x0, m0 = operating_point(p, P_ref, Q_ref)
        ref = lambda t: np.concatenate([[P_ref / S, Q_ref / S], np.zeros(6)])
    else:
        x0, m0 = operating_point(p, P_initial, Q_ref)
        ref = lambda t: np.concatenate([[(P_ref if t >= step_time else P_initial) / S, Q_ref / S], np.zeros(6)])
    fault = fault if fault is not None else FaultScenario(1.0, 0.0, 0.0)
    vgrid = lambda t: fault.voltage(t, p)

    def measure(t, x, w):
        P, Q = powers(w, x[2:4])
        return np.concatenate([[P / S, Q / S], x])

    A, B, Bv = state_matrices(p)
    plant = ss(A, B, np.eye(6), np.zeros((6, 2)), outputs=STATE_LABELS)
    state_sat = None if current_limit is None else SaturationSpec.symmetric([current_limit] * 2)
    input_sat = None if modulation_limit is None else SaturationSpec.symmetric([modulation_limit] * 2)
    if design is not None and hasattr(design, "compensator") and callable(design.compensator):
        design = design.compensator()
    cfg = LoopConfig(
        plant=plant,
        nominal_controller=nominal.model,
        state_sat=state_sat,
        input_sat=input_sat,
        joint_antiwindup=design if state_sat is not None and input_sat is not None else None,
        state_antiwindup=design if state_sat is not None and input_sat is None else None,
        reference=ref,
        disturbance=vgrid,
        disturbance_matrix=Bv,
        sat_matrix=np.eye(6)[list(GRID_CURRENT)],
        measurement=measure,
        tracked=(0, 1),
        x0=x0,
        horizon=horizon,
        step=step,
    )
    return cfg, nominal.integrator_state(x0, m0)


@dataclass
class VscMetrics:
    peak_grid_current: float
    fault_current_energy: float
    recovery_time: float | None
    peak_modulation: float
    peak_applied_modulation: float
    loop: MetricsReport

    def to_dict(self) -> dict:
        return {
            "peak_grid_current": self.peak_grid_current,
            "fault_current_energy": self.fault_current_energy,
            "recovery_time": self.recovery_time,
            "peak_modulation": self.peak_modulation,
            "peak_applied_modulation": self.peak_applied_modulation,
            "loop": self.loop.to_dict(),
        }


def fault_metrics(trace: SimulationTrace, scenario: FaultScenario, S_base: float, P_ref: float,
                  band: float = 0.02) -> VscMetrics:
    """Peak ``|i_g|``, current energy inside the fault window and power recovery.

    ``recovery_time`` is measured from fault clearance to the last time
    the active power is outside ``P_ref (1 +- band)``; ``None`` if it never
    settles within the trace.
    """
    t = trace.t
    ig = trace.x[:, 2:4]
    mag = np.hypot(ig[:, 0], ig[:, 1])
    win = (t >= scenario.start) & (t <= scenario.end)
    energy = float(trapezoid(mag[win] ** 2, t[win])) if np.count_nonzero(win) > 1 else 0.0
    P = trace.y_meas[:, 0] * S_base
    after = t >= scenario.end
    outside = after & (np.abs(P - P_ref) > band * abs(P_ref))
    if not np.any(after):
        rec = None
    elif not np.any(outside):
        rec = 0.0
    else:
        last = int(np.max(np.nonzero(outside)[0]))
        rec = None if last == len(t) - 1 else float(t[last + 1] - scenario.end)
    return VscMetrics(float(np.max(mag)), energy, rec, float(np.max(np.abs(trace.u))),
                      float(np.max(np.abs(trace.uhat))), metrics(trace))


def run_fault_study(scenario: FaultScenario, p: VscParams, nominal: VscController, design=None,
                    **loop_kw) -> tuple[SimulationTrace, VscMetrics]:
    """Simulate one fault case and compute its metrics."""
    loop_kw = dict(loop_kw)
    P_ref = loop_kw.get("P_ref", 20e3)
    cfg, xk0 = build_vsc_loop(p, nominal, design, fault=scenario, **loop_kw)
    trace = simulate(cfg, x0_controller=xk0)
    return trace, fault_metrics(trace, scenario, nominal.S_base, P_ref)


def _pad_state_feedback(C: StateSpaceModel) -> StateSpaceModel:
    """Zero outputs for the six ``-x`` inputs of the nominal controller."""
    return StateSpaceModel(C.A, C.B, np.vstack([C.C, np.zeros((6, C.nstates))]),
                           np.vstack([C.D, np.zeros((6, C.ninputs))]))


@dataclass
class VscDesign:
    """Fixed-structure IS-ANTW compensator for the converter.

    ``synthesis`` holds the reduced compensator from
    ``[i_g error; m error]`` to ``[m_my; u_mu]`` acting on the power-error
    integrators; :meth:`compensator` pads ``u_mu`` with zeros for the
    state-feedback channels of the nominal controller.
    """

    synthesis: SynthesisResult
    static: SynthesisResult

    def compensator(self) -> StateSpaceModel:
        return _pad_state_feedback(self.synthesis.compensator)

    def to_dict(self) -> dict:
        return {"synthesis": self.synthesis.to_dict(), "static_start": self.static.to_dict(),
                "compensator": self.compensator().to_dict()}


def design_isantw(p: VscParams, nominal: VscController, Wu, Wy, *, order: int = 0,
                  current_base: float = 40.0, state_gain: float = 3.0, pole_limits=(200.0, 1e4), seed: int = 0,
                  options: SynthesisOptions | None = None, static_options: SynthesisOptions | None = None,
                  backcalc_rate: float = 50.0, limiter_margin: float = 20.0) -> VscDesign:
    """Diagonal IS-ANTW design for the grid-current limiter.

    The generalized plant uses the converter with the state-feedback part
    of the nominal controller closed (``A - B Kx``) and the power-error
    integrators as ``K``; grid-current errors are weighted by
    ``state_gain / current_base``.  A static design is started from
    back-calculation (``G_mu = rate * Ki^-1``); with ``order > 0`` it is
    lifted into dynamic blocks and refined.  The dynamic refinement lowers
    the norm only slightly and its behavior in the nonlinear loop is
    sensitive to small changes of the weights, so the static design is the
    default.  Both searches require the loop with the current limiter
    engaged to decay at least at rate ``limiter_margin`` (1/s).
    """
    A, B, _ = state_matrices(p)
    Gi = ss(A - B @ nominal.Kx, B, np.eye(6)[list(GRID_CURRENT)], np.zeros((2, 2)))
    Kint = ss(np.zeros((2, 2)), np.eye(2), nominal.Ki, np.zeros((2, 2)))
    if isinstance(Wy, RationalTransfer):
        Wy = to_state_space(Wy)
    g = state_gain / current_base
    Wy = Wy.scaled(g) if isinstance(Wy, StateSpaceModel) else float(Wy) * g
    P = build_isantw_plant(Gi, Kint, Wu, Wy)
    v_d, v_q = p.v_grid
    Cpq = 1.5 / nominal.S_base * np.array([[0, 0, v_d, v_q, 0, 0], [0, 0, v_q, -v_d, 0, 0]])
    Ce = np.vstack([Cpq, np.eye(6)])
    Cs = np.eye(6)[list(GRID_CURRENT)]
    raw = limiter_constraint(A, B, nominal.model, Ce, Cs, margin=limiter_margin)

    constraint = lambda C: raw(_pad_state_feedback(C))
    groups = lambda k: [((0, 1), (0, 1), k), ((2, 3), (2, 3), k)]
    s0 = CompensatorStructure.diagonal(4, 4, groups(0), pole_limits)
    D0 = np.zeros((4, 4))
    D0[2:, 2:] = backcalc_rate * np.linalg.inv(nominal.Ki)
    static_opts = static_options or SynthesisOptions(starts=2, max_evals=1000)
    r0 = synth_fixed_structure(P, s0, seed, static_opts, x0=s0.theta_with_feedthrough(D0),
                               constraints=[constraint])
    if order == 0:
        return VscDesign(r0, r0)
    st = CompensatorStructure.diagonal(4, 4, groups(order), pole_limits)
    opts = options or SynthesisOptions(starts=2, max_evals=2000)
    r = synth_fixed_structure(P, st, seed, opts, x0=st.theta_with_feedthrough(r0.compensator.D),
                              constraints=[constraint])
    return VscDesign(r, r0)
