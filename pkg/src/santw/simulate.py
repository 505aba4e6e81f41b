"""Fixed-step simulation of saturated anti-windup loops.

Loop equations (all compensator outputs are added, their inputs are
saturated-minus-actual)::

    xhat  = sat_x(C_s x)                 state / output limiter
    e     = r - y_meas                   y_meas = C_e x or a user callable
    [u_my; u_mu] = G_m [xhat - C_s x; uhat - u]
    u_c   = K (e + u_mu)
    u     = u_c + u_my
    uhat  = sat_u(u)
    x'    = A x + B uhat + B_w w(t)      (B u when input saturation is off)

The plant is never clipped: the state limiter only produces the error
signal for the compensator.  When the compensator and the controller have
direct feedthrough the equation for ``u`` is implicit through ``sat_u``;
it is solved at every evaluation by a semismooth Newton iteration.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .lti import StateSpaceModel, append, static_gain

__all__ = [
    "SaturationSpec",
    "Signal",
    "Constant",
    "Step",
    "Piecewise",
    "LoopConfig",
    "SimulationTrace",
    "MetricsReport",
    "SimulationError",
    "AlgebraicLoopError",
    "saturate",
    "simulate",
    "metrics",
    "dissipation_check",
    "DissipationResult",
]


class SimulationError(RuntimeError):
    """Integration produced non-finite values."""

    def __init__(self, message: str, last_time: float):
        super().__init__(message)
        self.last_time = last_time


class AlgebraicLoopError(SimulationError):
    """The implicit input equation could not be solved."""


@dataclass(frozen=True)
class SaturationSpec:
    """Per-channel bounds; infinite bounds disable a side or a channel."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        lo, hi = np.broadcast_arrays(lo, hi)
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValueError("bounds must not be NaN")
        if np.any(lo >= hi):
            raise ValueError("every lower bound must be below its upper bound")
        object.__setattr__(self, "lower", lo.copy())
        object.__setattr__(self, "upper", hi.copy())

    @classmethod
    def symmetric(cls, bound) -> "SaturationSpec":
        b = np.atleast_1d(np.asarray(bound, dtype=float))
        return cls(-b, b)

    @classmethod
    def upper_only(cls, upper) -> "SaturationSpec":
        u = np.atleast_1d(np.asarray(upper, dtype=float))
        return cls(np.full_like(u, -np.inf), u)

    @classmethod
    def disabled(cls, size: int) -> "SaturationSpec":
        return cls(np.full(size, -np.inf), np.full(size, np.inf))

    @property
    def size(self) -> int:
        return len(self.lower)

    @property
    def active(self) -> bool:
        return bool(np.any(np.isfinite(self.lower)) or np.any(np.isfinite(self.upper)))

    def to_dict(self) -> dict:
        enc = lambda a: [None if not math.isfinite(v) else float(v) for v in a]
        return {"lower": enc(self.lower), "upper": enc(self.upper)}

    @classmethod
    def from_dict(cls, d) -> "SaturationSpec":
        lo = [-math.inf if v is None else float(v) for v in d["lower"]]
        hi = [math.inf if v is None else float(v) for v in d["upper"]]
        return cls(lo, hi)


def saturate(v, spec: SaturationSpec) -> np.ndarray:
    """Componentwise clamp of ``v`` into ``[lower, upper]``."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != spec.size:
        raise ValueError(f"vector of size {v.shape[-1]} against {spec.size} bounds")
    return np.minimum(np.maximum(v, spec.lower), spec.upper)


# ---------------------------------------------------------------------------
# Exogenous signals


class Signal:
    """Vector-valued function of time."""

    size: int

    def __call__(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_dict(d) -> "Signal":
        kind = d["kind"]
        if kind == "constant":
            return Constant(d["value"])
        if kind == "step":
            return Step(d["amplitude"], d.get("time", 0.0), d.get("initial", 0.0))
        if kind == "piecewise":
            return Piecewise(d["times"], d["values"])
        raise ValueError(f"unknown signal kind {kind!r}")


class Constant(Signal):
    def __init__(self, value):
        self.value = np.atleast_1d(np.asarray(value, dtype=float))
        self.size = len(self.value)

    def __call__(self, t):
        return self.value

    def to_dict(self):
        return {"kind": "constant", "value": self.value.tolist()}


class Step(Signal):
    """``initial`` before ``time``, ``amplitude`` from ``time`` on."""

    def __init__(self, amplitude, time: float = 0.0, initial=0.0):
        self.amplitude = np.atleast_1d(np.asarray(amplitude, dtype=float))
        self.initial = np.broadcast_to(np.asarray(initial, dtype=float), self.amplitude.shape).copy()
        self.time = float(time)
        self.size = len(self.amplitude)

    def __call__(self, t):
        return self.amplitude if t >= self.time else self.initial

    def to_dict(self):
        return {"kind": "step", "amplitude": self.amplitude.tolist(), "time": self.time,
                "initial": self.initial.tolist()}


class Piecewise(Signal):
    """Piecewise-constant: ``values[k]`` holds on ``[times[k], times[k+1])``."""

    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=float)
        self.values = np.atleast_2d(np.asarray(values, dtype=float))
        if self.values.shape[0] != len(self.times):
            self.values = self.values.T
        if self.values.shape[0] != len(self.times) or np.any(np.diff(self.times) < 0):
            raise ValueError("times must be sorted and match values")
        self.size = self.values.shape[1]

    def __call__(self, t):
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.values[max(k, 0)]

    def to_dict(self):
        return {"kind": "piecewise", "times": self.times.tolist(), "values": self.values.tolist()}


def _as_signal(s, size) -> Signal | Callable:
    if s is None:
        return Constant(np.zeros(size))
    if isinstance(s, Signal) or callable(s):
        return s
    return Constant(s)


# ---------------------------------------------------------------------------
# Loop description


def _as_model(obj) -> StateSpaceModel | None:
    if obj is None or isinstance(obj, StateSpaceModel):
        return obj
    if hasattr(obj, "compensator"):
        return obj.compensator()
    return static_gain(obj)


@dataclass
class LoopConfig:
    """Everything needed to simulate one saturated loop.

    Parameters
    ----------
    plant : StateSpaceModel
        ``x' = A x + B u``; only ``A`` and ``B`` drive the simulation, ``C``
        defines the recorded output ``y``.
    nominal_controller : StateSpaceModel
        Maps ``e + u_mu`` to ``u_c``.
    state_antiwindup, input_antiwindup : compensator or None
        ``G_mx`` maps ``xhat - C_s x`` to ``u_my``; ``G_mu`` maps
        ``uhat - u`` to ``u_mu`` (added to the controller input).
        Anything with a ``compensator()`` method, a model, or a gain matrix.
    joint_antiwindup : compensator or None
        Single block from ``[xhat - C_s x; uhat - u]`` to ``[u_my; u_mu]``;
        replaces the two separate compensators.
    state_sat, input_sat : SaturationSpec or None
    sat_matrix : C_s, rows of the state that pass the limiter (default I).
    tracking_matrix : C_e; ``e = r - C_e x`` (default plant ``C``).
    measurement : optional callable ``(t, x, w) -> y_meas`` replacing ``C_e x``.
    tracked : indices of ``e`` counted in the tracking ISE (default all).
    disturbance, disturbance_matrix : ``w(t)`` and ``B_w``.
    """

    plant: StateSpaceModel
    nominal_controller: StateSpaceModel
    state_sat: SaturationSpec | None = None
    input_sat: SaturationSpec | None = None
    state_antiwindup: object = None
    input_antiwindup: object = None
    joint_antiwindup: object = None
    reference: object = None
    disturbance: object = None
    disturbance_matrix: np.ndarray | None = None
    sat_matrix: np.ndarray | None = None
    tracking_matrix: np.ndarray | None = None
    measurement: Callable | None = None
    tracked: Sequence[int] | None = None
    x0: np.ndarray | None = None
    horizon: float = 10.0
    step: float = 1e-3
    newton_tol: float = 1e-10
    newton_max: int = 50

    def __post_init__(self):
        if not (self.horizon > 0 and self.step > 0):
            raise ValueError("horizon and step must be positive")
        n, m = self.plant.nstates, self.plant.ninputs
        if self.nominal_controller.noutputs != m:
            raise ValueError(f"controller produces {self.nominal_controller.noutputs} signals, plant takes {m}")
        self.Cs = np.eye(n) if self.sat_matrix is None else np.atleast_2d(np.asarray(self.sat_matrix, float))
        if self.Cs.shape[1] != n:
            raise ValueError("sat_matrix must have one column per plant state")
        self.Ce = self.plant.C if self.tracking_matrix is None else np.atleast_2d(np.asarray(self.tracking_matrix, float))
        ne = self.nominal_controller.ninputs
        if self.measurement is None and self.Ce.shape != (ne, n):
            raise ValueError(f"tracking matrix must be {ne}x{n}, got {self.Ce.shape}")
        ns = self.Cs.shape[0]
        if self.state_sat is not None and self.state_sat.size != ns:
            raise ValueError("state saturation size does not match the limited signals")
        if self.input_sat is not None and self.input_sat.size != m:
            raise ValueError("input saturation size does not match the plant inputs")
        self.x0 = np.zeros(n) if self.x0 is None else np.asarray(self.x0, dtype=float).reshape(n)
        self.reference = _as_signal(self.reference, ne)
        if self.disturbance_matrix is not None:
            self.disturbance_matrix = np.atleast_2d(np.asarray(self.disturbance_matrix, float))
            nw = self.disturbance_matrix.shape[1]
        else:
            nw = 0
        self.disturbance = _as_signal(self.disturbance, nw)
        self.compensator = self._joint_compensator()

    def _joint_compensator(self) -> StateSpaceModel | None:
        ns, m = self.Cs.shape[0], self.plant.ninputs
        ne = self.nominal_controller.ninputs
        joint = _as_model(self.joint_antiwindup)
        if joint is not None:
            if joint.ninputs != ns + m or joint.noutputs != m + ne:
                raise ValueError(f"joint compensator must be ({m + ne} x {ns + m}), got {joint.shape}")
            return joint
        gx = _as_model(self.state_antiwindup)
        gu = _as_model(self.input_antiwindup)
        if gx is None and gu is None:
            return None
        gx = gx if gx is not None else static_gain(np.zeros((m, ns)))
        gu = gu if gu is not None else static_gain(np.zeros((ne, m)))
        if gx.shape != (m, ns):
            raise ValueError(f"state compensator must be {m}x{ns}, got {gx.shape}")
        if gu.shape != (ne, m):
            raise ValueError(f"input compensator must be {ne}x{m}, got {gu.shape}")
        return append(gx, gu)


# ---------------------------------------------------------------------------
# Trace and metrics


SIGNALS = ("x", "xhat", "u_c", "u_mx", "u_mu", "u", "uhat", "y", "r", "xc")


@dataclass
class SimulationTrace:
    """Sampled loop signals on a common time grid (rows are samples)."""

    t: np.ndarray
    x: np.ndarray
    xhat: np.ndarray
    u_c: np.ndarray
    u_mx: np.ndarray
    u_mu: np.ndarray
    u: np.ndarray
    uhat: np.ndarray
    y: np.ndarray
    r: np.ndarray
    xc: np.ndarray
    sat_x: np.ndarray
    y_meas: np.ndarray
    state_sat: SaturationSpec | None = None
    input_sat: SaturationSpec | None = None
    meta: dict = field(default_factory=dict)

    @property
    def state_error(self) -> np.ndarray:
        """``xhat - C_s x`` per sample."""
        return self.xhat - self.sat_x

    @property
    def input_error(self) -> np.ndarray:
        return self.uhat - self.u

    def columns(self) -> dict[str, np.ndarray]:
        out = {"t": self.t}
        for name in ("x", "xhat", "u_c", "u_mx", "u_mu", "u", "uhat", "y", "r"):
            arr = getattr(self, name)
            for j in range(arr.shape[1]):
                out[f"{name}{j + 1}"] = arr[:, j]
        for j in range(self.state_error.shape[1]):
            out[f"xerr{j + 1}"] = self.state_error[:, j]
        for j in range(self.input_error.shape[1]):
            out[f"uerr{j + 1}"] = self.input_error[:, j]
        return out

    def to_csv(self, path=None) -> str:
        cols = self.columns()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(cols))
        data = np.column_stack(list(cols.values()))
        for row in data:
            w.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


@dataclass
class MetricsReport:
    sat_error_energy: float
    comp_energy: float
    input_comp_energy: float
    input_error_energy: float
    peak_u: float
    peak_violation: list
    tracking_ise: float

    def to_dict(self) -> dict:
        return {
            "sat_error_energy": self.sat_error_energy,
            "comp_energy": self.comp_energy,
            "input_comp_energy": self.input_comp_energy,
            "input_error_energy": self.input_error_energy,
            "peak_u": self.peak_u,
            "peak_violation": list(self.peak_violation),
            "tracking_ise": self.tracking_ise,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _energy(t, v) -> float:
    if v.size == 0 or len(t) < 2:
        return 0.0
    return float(trapezoid(np.sum(v * v, axis=1), t))


def metrics(trace: SimulationTrace) -> MetricsReport:
    """Energies by trapezoidal quadrature, peaks by sample maximum.

    ``peak_violation`` is per limited channel: the largest distance of the
    actual signal outside its bounds (zero if it never leaves them).
    """
    t = trace.t
    err = trace.state_error
    if trace.state_sat is not None:
        over = np.maximum(trace.sat_x - trace.state_sat.upper, 0.0)
        under = np.maximum(trace.state_sat.lower - trace.sat_x, 0.0)
        viol = np.max(np.maximum(over, under), axis=0) if len(t) else np.zeros(err.shape[1])
    else:
        viol = np.zeros(err.shape[1])
    return MetricsReport(
        sat_error_energy=_energy(t, err),
        comp_energy=_energy(t, trace.u_mx),
        input_comp_energy=_energy(t, trace.u_mu),
        input_error_energy=_energy(t, trace.input_error),
        peak_u=float(np.max(np.abs(trace.u))) if trace.u.size else 0.0,
        peak_violation=[float(v) for v in viol],
        tracking_ise=_energy(t, (trace.r - trace.y_meas)[:, trace.meta.get("tracked", slice(None))]),
    )


# ---------------------------------------------------------------------------
# Integrator


class _Loop:
    """Precomputed matrices and the signal map for one configuration."""

    def __init__(self, cfg: LoopConfig):
        self.cfg = cfg
        P, K, Gm = cfg.plant, cfg.nominal_controller, cfg.compensator
        self.n, self.m = P.nstates, P.ninputs
        self.nk = K.nstates
        self.ns = cfg.Cs.shape[0]
        self.ne = K.ninputs
        self.nc = 0 if Gm is None else Gm.nstates
        self.A, self.B = P.A, P.B
        self.Bw = cfg.disturbance_matrix
        self.K = K
        self.Gm = Gm
        if Gm is not None:
            ns, m = self.ns, self.m
            Dc = Gm.D
            self.Cmy, self.Cmu = Gm.C[:m], Gm.C[m:]
            self.Dmy_x, self.Dmy_u = Dc[:m, :ns], Dc[:m, ns:]
            self.Dmu_x, self.Dmu_u = Dc[m:, :ns], Dc[m:, ns:]
            # u = a + M (uhat - u)
            self.M = self.Dmy_u + K.D @ self.Dmu_u
        else:
            self.M = np.zeros((self.m, self.m))
        self.implicit = cfg.input_sat is not None and np.any(self.M != 0)
        self.ssat = cfg.state_sat
        self.usat = cfg.input_sat

    def split(self, z):
        n, nk = self.n, self.nk
        return z[:n], z[n:n + nk], z[n + nk:]

    def _solve_u(self, a, t):
        usat, M = self.usat, self.M
        u = a.copy()
        I = np.eye(self.m)
        for _ in range(self.cfg.newton_max):
            uh = saturate(u, usat)
            F = u - a - M @ (uh - u)
            if np.max(np.abs(F), initial=0.0) <= self.cfg.newton_tol * (1.0 + np.max(np.abs(a), initial=0.0)):
                return u
            inside = ((u > usat.lower) & (u < usat.upper)).astype(float)
            J = I - M @ (np.diag(inside) - I)
            try:
                u = u - np.linalg.solve(J, F)
            except np.linalg.LinAlgError:
                break
        raise AlgebraicLoopError("input equation through the saturation did not converge", t)

    def signals(self, t, z):
        cfg = self.cfg
        x, xk, xc = self.split(z)
        sx = cfg.Cs @ x
        xhat = saturate(sx, self.ssat) if self.ssat is not None else sx
        dx = xhat - sx
        w = cfg.disturbance(t)
        if cfg.measurement is not None:
            ym = np.atleast_1d(cfg.measurement(t, x, w))
        else:
            ym = cfg.Ce @ x
        r = cfg.reference(t)
        e = r - ym
        K = self.K
        if self.Gm is None:
            u = K.C @ xk + K.D @ e
            u_my = np.zeros(self.m)
            u_mu = np.zeros(self.ne)
            uhat = saturate(u, self.usat) if self.usat is not None else u
        else:
            my0 = self.Cmy @ xc + self.Dmy_x @ dx
            mu0 = self.Cmu @ xc + self.Dmu_x @ dx
            a = K.C @ xk + K.D @ (e + mu0) + my0
            if self.usat is None:
                u = a
                uhat = u
            else:
                u = self._solve_u(a, t) if self.implicit else a
                uhat = saturate(u, self.usat)
            du = uhat - u
            u_my = my0 + self.Dmy_u @ du
            u_mu = mu0 + self.Dmu_u @ du
        u_c = u - u_my
        return dict(x=x, xk=xk, xc=xc, sx=sx, xhat=xhat, dx=dx, w=w, ym=ym, r=r, e=e,
                    u=u, uhat=uhat, u_my=u_my, u_mu=u_mu, u_c=u_c)

    def deriv(self, t, z):
        s = self.signals(t, z)
        uapp = s["uhat"] if self.usat is not None else s["u"]
        dx = self.A @ s["x"] + self.B @ uapp
        if self.Bw is not None:
            dx = dx + self.Bw @ s["w"]
        dk = self.K.A @ s["xk"] + self.K.B @ (s["e"] + s["u_mu"])
        parts = [dx, dk]
        if self.Gm is not None:
            parts.append(self.Gm.A @ s["xc"] + self.Gm.B @ np.concatenate([s["dx"], s["uhat"] - s["u"]]))
        return np.concatenate(parts)


def _integrate(f, z, Z, t, h, N):
    for k in range(N):
        tk = t[k]
        k1 = f(tk, z)
        k2 = f(tk + 0.5 * h, z + 0.5 * h * k1)
        k3 = f(tk + 0.5 * h, z + 0.5 * h * k2)
        k4 = f(tk + h, z + h * k3)
        z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(z)):
            raise SimulationError(f"non-finite state after t={tk:.6g}", float(tk))
        Z[k + 1] = z


def simulate(cfg: LoopConfig, x0_controller=None) -> SimulationTrace:
    """Classical fixed-step RK4 over ``[0, horizon]``.

    Saturations and the implicit input equation are evaluated inside every
    stage.  Raises :class:`SimulationError` on non-finite states.
    """
    loop = _Loop(cfg)
    h = cfg.step
    N = int(round(cfg.horizon / h))
    t = np.arange(N + 1) * h
    z = np.concatenate([cfg.x0, np.zeros(loop.nk) if x0_controller is None else x0_controller, np.zeros(loop.nc)])
    Z = np.empty((N + 1, len(z)))
    Z[0] = z
    f = loop.deriv
    with np.errstate(over="ignore", invalid="ignore"):
        _integrate(f, z, Z, t, h, N)
    rec = {key: [] for key in ("x", "xhat", "u_c", "u_my", "u_mu", "u", "uhat", "r", "xc", "sx", "ym")}
    for k in range(N + 1):
        s = loop.signals(t[k], Z[k])
        for key in rec:
            rec[key].append(s[key])
    arr = {k: np.array(v).reshape(N + 1, -1) for k, v in rec.items()}
    y = arr["x"] @ cfg.plant.C.T
    return SimulationTrace(t=t, x=arr["x"], xhat=arr["xhat"], u_c=arr["u_c"], u_mx=arr["u_my"],
                           u_mu=arr["u_mu"], u=arr["u"], uhat=arr["uhat"], y=y, r=arr["r"],
                           xc=arr["xc"], sat_x=arr["sx"], y_meas=arr["ym"],
                           state_sat=cfg.state_sat, input_sat=cfg.input_sat,
                           meta={} if cfg.tracked is None else {"tracked": list(cfg.tracked)})


# ---------------------------------------------------------------------------
# Dissipation along a trajectory


@dataclass
class DissipationResult:
    max_residual: float
    max_raw: float
    residual: np.ndarray

    def __float__(self):
        return self.max_residual


def dissipation_check(trace: SimulationTrace, P, alpha: float, beta: float,
                      gamma_xhat: float, gamma_uc: float) -> DissipationResult:
    """Evaluate the dissipation rate along a recorded trajectory.

    ``Delta = dV/dt + alpha |u_mx|^2 + beta |xhat - x|^2
    - gamma_xhat |xhat|^2 - gamma_uc |u_c|^2`` with ``V = s' P s``, where
    ``s`` is the plant state, or the plant state stacked with the
    compensator state when ``P`` is that large.  ``dV/dt`` is a central
    difference on the sample grid, so only interior samples are used.
    Each sample's residual is divided by the sum of the magnitudes of the
    terms, giving a dimensionless number; ``max_residual`` is its maximum
    (0 for an identically zero trajectory).
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    n = trace.x.shape[1]
    if P.shape[0] == n:
        s = trace.x
    elif P.shape[0] == n + trace.xc.shape[1]:
        s = np.hstack([trace.x, trace.xc])
    else:
        raise ValueError(f"P of size {P.shape[0]} matches neither the plant nor the augmented state")
    V = np.einsum("ki,ij,kj->k", s, P, s)
    t = trace.t
    if len(t) < 3:
        return DissipationResult(0.0, 0.0, np.zeros(0))
    Vdot = (V[2:] - V[:-2]) / (t[2:] - t[:-2])
    sl = slice(1, -1)
    sq = lambda a: np.sum(a[sl] ** 2, axis=1)
    terms = [Vdot, alpha * sq(trace.u_mx), beta * sq(trace.state_error),
             -gamma_xhat * sq(trace.xhat), -gamma_uc * sq(trace.u_c)]
    delta = np.sum(terms, axis=0)
    scale = np.sum(np.abs(terms), axis=0)
    rel = np.where(scale > 0, delta / np.where(scale > 0, scale, 1.0), 0.0)
    return DissipationResult(float(np.max(rel)), float(np.max(delta)), rel)
