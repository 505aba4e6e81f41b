"""Generalized plants and fixed-structure H-infinity synthesis.

Two plant builders cover the frequency-domain designs:

* :func:`build_oantw_plant`: inputs ``(yhat, u_c, u_my)``, outputs
  ``(z1, z2, yhat - y)`` with ``z1 = W1 (yhat - y)``, ``z2 = W2 u_my`` and
  ``y = G (u_c + u_my)``.
* :func:`build_isantw_plant`: inputs ``(yhat, w, e, uhat, u_my, u_mu)``,
  outputs ``(W_y (yhat - y), W_u (uhat - u), yhat - y, uhat - u)`` with
  ``u = K (e + u_mu) + u_my`` and ``y = G u + w``.

Every synthesis, including the full-matrix variant, is a direct search
over the parameters of a compensator of fixed structure and order that
minimizes the H-infinity norm of the lower LFT.  Unstable parameter points
get a finite penalty ``cap * (1 + spectral abscissa)`` so the search can
walk into the stabilizing region.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize

from .lti import (
    IllPosedError,
    RationalTransfer,
    StateSpaceModel,
    append,
    hinf_norm,
    interconnect,
    lft_lower,
    peak_gain,
    static_gain,
    to_state_space,
)

__all__ = [
    "GeneralizedPlant",
    "Block",
    "CompensatorStructure",
    "SynthesisOptions",
    "SynthesisResult",
    "SynthesisError",
    "as_weight",
    "build_oantw_plant",
    "build_isantw_plant",
    "mixed_sensitivity",
    "closed_loop",
    "synth_fixed_structure",
    "synth_full_matrix",
    "limiter_loop_matrix",
    "limiter_constraint",
    "saturation_mode_matrix",
]


class SynthesisError(RuntimeError):
    """No stabilizing parameter point was found."""

    def __init__(self, message: str, best_abscissa: float):
        super().__init__(message)
        self.best_abscissa = best_abscissa


def as_weight(W, size: int) -> StateSpaceModel:
    """Diagonal weight of the given size from a number, SISO model or rational."""
    if isinstance(W, RationalTransfer):
        W = to_state_space(W)
    if isinstance(W, StateSpaceModel):
        if W.shape == (size, size):
            return W
        if W.shape != (1, 1):
            raise ValueError(f"weight has shape {W.shape}, expected 1x1 or {size}x{size}")
        return append(*[W] * size) if size else static_gain(np.zeros((0, 0)))
    W = np.asarray(W, dtype=float)
    if W.ndim == 0 or W.size == 1:
        return static_gain(float(W) * np.eye(size))
    return static_gain(W)


@dataclass(frozen=True)
class GeneralizedPlant:
    """Plant with inputs ``[w; u]`` and outputs ``[z; y]``."""

    model: StateSpaceModel
    n_exo: int
    n_ctrl: int
    n_perf: int
    n_meas: int
    kind: str = "generic"

    def __post_init__(self):
        if self.n_exo + self.n_ctrl != self.model.ninputs or self.n_perf + self.n_meas != self.model.noutputs:
            raise ValueError("channel partition does not match the model")

    def closed_loop(self, compensator: StateSpaceModel) -> StateSpaceModel:
        return closed_loop(self, compensator)

    @property
    def partition(self):
        return (self.n_exo, self.n_ctrl), (self.n_perf, self.n_meas)


def build_oantw_plant(G: StateSpaceModel, W1, W2) -> GeneralizedPlant:
    """Mixed-sensitivity plant for output (state) anti-windup.

    ``G`` is ``p x m``; the compensator maps ``yhat - y`` (``p``) to
    ``u_my`` (``m``).
    """
    p, m = G.noutputs, G.ninputs
    parts = {
        "G": G,
        "U": static_gain(np.eye(m)),
        "EY": static_gain(np.eye(p)),
        "W1": as_weight(W1, p),
        "W2": as_weight(W2, m),
    }
    conns = [("U", "u_c"), ("U", "u_my"), ("G", "U"), ("EY", "yhat"), ("EY", "-G"),
             ("W1", "EY"), ("W2", "u_my")]
    M = interconnect(parts, conns, [("yhat", p), ("u_c", m), ("u_my", m)], ["W1", "W2", "EY"])
    return GeneralizedPlant(M, p + m, m, p + m, p, "oantw")


def build_isantw_plant(G: StateSpaceModel, K: StateSpaceModel, Wu, Wy) -> GeneralizedPlant:
    """Joint input/state anti-windup plant.

    ``G`` is ``p x m``, the nominal controller ``K`` maps the ``ne``-wide
    error to the ``m`` plant inputs.  The compensator maps
    ``[yhat - y; uhat - u]`` to ``[u_my; u_mu]``.
    """
    p, m = G.noutputs, G.ninputs
    ne = K.ninputs
    if K.noutputs != m:
        raise ValueError("controller output width must equal plant input width")
    parts = {
        "G": G,
        "K": K,
        "U": static_gain(np.eye(m)),
        "Y": static_gain(np.eye(p)),
        "EY": static_gain(np.eye(p)),
        "EU": static_gain(np.eye(m)),
        "Wy": as_weight(Wy, p),
        "Wu": as_weight(Wu, m),
    }
    conns = [
        ("K", "e"), ("K", "u_mu"),
        ("U", "K"), ("U", "u_my"),
        ("G", "U"),
        ("Y", "G"), ("Y", "w"),
        ("EY", "yhat"), ("EY", "-Y"),
        ("EU", "uhat"), ("EU", "-U"),
        ("Wy", "EY"), ("Wu", "EU"),
    ]
    inputs = [("yhat", p), ("w", p), ("e", ne), ("uhat", m), ("u_my", m), ("u_mu", ne)]
    M = interconnect(parts, conns, inputs, ["Wy", "Wu", "EY", "EU"])
    return GeneralizedPlant(M, 2 * p + ne + m, m + ne, p + m, p + m, "isantw")


def closed_loop(P: GeneralizedPlant, compensator: StateSpaceModel) -> StateSpaceModel:
    """Lower LFT ``F_l(P, C)`` from exogenous inputs to performance outputs."""
    if compensator.shape != (P.n_ctrl, P.n_meas):
        raise ValueError(f"compensator must be {P.n_ctrl}x{P.n_meas}, got {compensator.shape}")
    return lft_lower(P.model, compensator, P.n_perf, P.n_exo)


def mixed_sensitivity(G: StateSpaceModel, Gmy: StateSpaceModel, W1, W2) -> StateSpaceModel:
    """``[[W1 S, -W1 S G], [W2 Gmy S, -W2 Gmy S G]]`` with ``S = (I + G Gmy)^-1``.

    Built from the sensitivity directly, independently of the LFT plant.
    """
    from .lti import anti_windup_sensitivity, series

    p, m = G.noutputs, G.ninputs
    S = anti_windup_sensitivity(G, Gmy)
    W1m, W2m = as_weight(W1, p), as_weight(W2, m)
    SG = series(G, S)
    top = append(series(S, W1m), series(SG, W1m).scaled(-1.0))
    bot = append(series(series(S, Gmy), W2m), series(series(SG, Gmy), W2m).scaled(-1.0))
    # append() stacks diagonally; sum the two column groups
    both = append(top, bot)
    Lin = np.vstack([np.hstack([np.eye(p), np.zeros((p, m))]), np.hstack([np.zeros((m, p)), np.eye(m)])] * 2)
    Lout = np.zeros((p + m, 2 * p + 2 * m))
    Lout[:p, :p] = np.eye(p)
    Lout[:p, p:2 * p] = np.eye(p)
    Lout[p:, 2 * p:2 * p + m] = np.eye(m)
    Lout[p:, 2 * p + m:] = np.eye(m)
    return StateSpaceModel(both.A, both.B @ Lin, Lout @ both.C, Lout @ both.D @ Lin)


# ---------------------------------------------------------------------------
# Compensator parameterization


@dataclass(frozen=True)
class Block:
    """One dynamic block from a subset of compensator inputs to a subset of outputs.

    ``units`` lists the modal building blocks of its state matrix: ``"p"``
    is a stable complex pair ``[[-s, w], [-w, -s]]`` and ``"r"`` a stable
    real pole.  Pole parameters are logarithms of ``s``, ``w`` so every
    block is stable by construction.
    """

    inputs: tuple
    outputs: tuple
    units: tuple = ()

    @classmethod
    def of_order(cls, inputs, outputs, order: int) -> "Block":
        units = ("p",) * (order // 2) + ("r",) * (order % 2)
        return cls(tuple(inputs), tuple(outputs), units)

    @property
    def order(self) -> int:
        return sum(2 if u == "p" else 1 for u in self.units)

    @property
    def nparams(self) -> int:
        k, ni, no = self.order, len(self.inputs), len(self.outputs)
        return len(self.units) + sum(1 for u in self.units if u == "p") + k * ni + no * k + no * ni

    def realize(self, theta, pole_limits=(1e-3, 1e3)):
        """``(A, B, C, D)``; pole magnitudes are clipped to ``pole_limits`` (rad/s)."""
        k, ni, no = self.order, len(self.inputs), len(self.outputs)
        A = np.zeros((k, k))
        lo, hi = math.log(pole_limits[0]), math.log(pole_limits[1])
        ex = lambda v: math.exp(min(max(v, lo), hi))
        pos = 0
        s = 0
        for u in self.units:
            if u == "p":
                sig, w = ex(theta[pos]), ex(theta[pos + 1])
                A[s:s + 2, s:s + 2] = [[-sig, w], [-w, -sig]]
                pos += 2
                s += 2
            else:
                A[s, s] = -ex(theta[pos])
                pos += 1
                s += 1
        B = np.reshape(theta[pos:pos + k * ni], (k, ni))
        pos += k * ni
        C = np.reshape(theta[pos:pos + no * k], (no, k))
        pos += no * k
        D = np.reshape(theta[pos:pos + no * ni], (no, ni))
        return A, B, C, D

    def pole_param_count(self) -> int:
        return len(self.units) + sum(1 for u in self.units if u == "p")


@dataclass(frozen=True)
class CompensatorStructure:
    """Additive superposition of :class:`Block` s over ``n_in`` inputs and ``n_out`` outputs."""

    n_in: int
    n_out: int
    blocks: tuple
    topology: str = "custom"
    pole_limits: tuple = (1e-3, 1e3)

    def __post_init__(self):
        lo, hi = self.pole_limits
        if not 0 < lo < hi:
            raise ValueError("pole limits must satisfy 0 < low < high")
        for b in self.blocks:
            if any(i >= self.n_in for i in b.inputs) or any(o >= self.n_out for o in b.outputs):
                raise ValueError("block references a channel outside the compensator")

    @classmethod
    def static(cls, n_in, n_out) -> "CompensatorStructure":
        return cls(n_in, n_out, (Block.of_order(range(n_in), range(n_out), 0),), "static")

    @classmethod
    def full(cls, n_in, n_out, order: int, pole_limits=(1e-3, 1e3)) -> "CompensatorStructure":
        return cls(n_in, n_out, (Block.of_order(range(n_in), range(n_out), order),),
                   "full-matrix" if order else "static", tuple(pole_limits))

    @classmethod
    def diagonal(cls, n_in, n_out, groups: Sequence, pole_limits=(1e-3, 1e3)) -> "CompensatorStructure":
        """``groups`` is a sequence of ``(inputs, outputs, order)``."""
        return cls(n_in, n_out, tuple(Block.of_order(i, o, k) for i, o, k in groups), "diagonal",
                   tuple(pole_limits))

    @classmethod
    def isantw_diagonal(cls, n_state: int, n_input: int, n_err: int, order: int,
                        per_channel: bool = True, pole_limits=(1e-3, 1e3)) -> "CompensatorStructure":
        """``G_my`` (state errors to ``u_my``) and ``G_mu`` (input errors to ``u_mu``).

        With ``per_channel`` each state error gets its own SISO-input block
        (``G_mx1``, ``G_mx2``, ...), all summed into ``u_my``.
        """
        ys = range(n_state)
        u_my = range(n_input)
        u_mu = range(n_input, n_input + n_err)
        errs = range(n_state, n_state + n_input)
        groups = [((i,), u_my, order) for i in ys] if per_channel else [(ys, u_my, order)]
        groups.append((errs, u_mu, order))
        return cls.diagonal(n_state + n_input, n_input + n_err, groups, pole_limits)

    def embedding(self) -> "CompensatorStructure":
        """Single full block containing this structure exactly (see :meth:`embed`)."""
        units = sum((b.units for b in self.blocks), ())
        return CompensatorStructure(self.n_in, self.n_out,
                                    (Block(tuple(range(self.n_in)), tuple(range(self.n_out)), units),),
                                    "full-matrix", self.pole_limits)

    def embed(self, theta) -> np.ndarray:
        """Parameters of :meth:`embedding` realizing the same compensator."""
        full = self.embedding().blocks[0]
        k = full.order
        poles, Bf, Cf = [], np.zeros((k, self.n_in)), np.zeros((self.n_out, k))
        Df = np.zeros((self.n_out, self.n_in))
        pos = 0
        s = 0
        for b in self.blocks:
            th = theta[pos:pos + b.nparams]
            pos += b.nparams
            poles.append(th[:b.pole_param_count()])
            _, B, C, D = b.realize(th, self.pole_limits)
            kb = b.order
            Bf[s:s + kb][:, list(b.inputs)] = B
            Cf[np.ix_(list(b.outputs), range(s, s + kb))] = C
            Df[np.ix_(list(b.outputs), list(b.inputs))] += D
            s += kb
        return np.concatenate(poles + [Bf.ravel(), Cf.ravel(), Df.ravel()])

    @property
    def order(self) -> int:
        return sum(b.order for b in self.blocks)

    @property
    def nparams(self) -> int:
        return sum(b.nparams for b in self.blocks)

    def realize(self, theta) -> StateSpaceModel:
        theta = np.asarray(theta, dtype=float)
        if theta.size != self.nparams:
            raise ValueError(f"expected {self.nparams} parameters, got {theta.size}")
        As, Bs, Cs = [], [], []
        D = np.zeros((self.n_out, self.n_in))
        pos = 0
        for b in self.blocks:
            A, B, C, Db = b.realize(theta[pos:pos + b.nparams], self.pole_limits)
            pos += b.nparams
            Bb = np.zeros((b.order, self.n_in))
            Bb[:, list(b.inputs)] = B
            Cb = np.zeros((self.n_out, b.order))
            Cb[list(b.outputs), :] = C
            D[np.ix_(list(b.outputs), list(b.inputs))] += Db
            As.append(A)
            Bs.append(Bb)
            Cs.append(Cb)
        n = self.order
        A = sla.block_diag(*As) if n else np.zeros((0, 0))
        B = np.vstack(Bs) if n else np.zeros((0, self.n_in))
        C = np.hstack(Cs) if n else np.zeros((self.n_out, 0))
        return StateSpaceModel(np.reshape(A, (n, n)), B, C, D)

    def random_theta(self, rng: np.random.Generator, gain_scale: float = 0.3) -> np.ndarray:
        parts = []
        lo = math.log(max(0.3, self.pole_limits[0]))
        hi = math.log(min(100.0, self.pole_limits[1]))
        hi = max(hi, lo + 1.0)
        for b in self.blocks:
            parts.append(rng.uniform(lo, hi, b.pole_param_count()))
            parts.append(gain_scale * rng.standard_normal(b.nparams - b.pole_param_count()))
        return np.concatenate(parts) if parts else np.zeros(0)

    def default_theta(self) -> np.ndarray:
        """Deterministic first start: poles spread over decades, zero output
        matrix (the dynamics start disconnected) and small feedthrough."""
        parts = []
        for b in self.blocks:
            npp = b.pole_param_count()
            k, ni, no = b.order, len(b.inputs), len(b.outputs)
            lo = max(0.0, math.log(self.pole_limits[0]))
            parts += [np.linspace(lo, lo + 3.0, npp) if npp else np.zeros(0),
                      np.full(k * ni, 0.1), np.zeros(no * k), np.full(no * ni, 0.1)]
        return np.concatenate(parts) if parts else np.zeros(0)

    def theta_with_feedthrough(self, D) -> np.ndarray:
        """Default start whose compensator is the static gain ``D`` (restricted to the blocks)."""
        D = np.asarray(D, dtype=float).reshape(self.n_out, self.n_in)
        parts = []
        pos = 0
        base = self.default_theta()
        for b in self.blocks:
            th = base[pos:pos + b.nparams].copy()
            pos += b.nparams
            no, ni = len(b.outputs), len(b.inputs)
            th[b.nparams - no * ni:] = D[np.ix_(list(b.outputs), list(b.inputs))].ravel()
            parts.append(th)
        return np.concatenate(parts) if parts else np.zeros(0)

    def to_dict(self) -> dict:
        return {"n_in": self.n_in, "n_out": self.n_out, "topology": self.topology,
                "pole_limits": list(self.pole_limits),
                "blocks": [{"inputs": list(b.inputs), "outputs": list(b.outputs), "units": "".join(b.units)}
                           for b in self.blocks]}

    @classmethod
    def from_dict(cls, d) -> "CompensatorStructure":
        return cls(int(d["n_in"]), int(d["n_out"]),
                   tuple(Block(tuple(b["inputs"]), tuple(b["outputs"]), tuple(b["units"])) for b in d["blocks"]),
                   d.get("topology", "custom"), tuple(d.get("pole_limits", (1e-3, 1e3))))


# ---------------------------------------------------------------------------
# Optimizer


@dataclass(frozen=True)
class SynthesisOptions:
    """Search budget and objective settings.

    ``omega_range`` / ``grid_points`` define the frequency grid of the
    cheap norm estimate used inside the search; the returned norm is always
    recomputed with :func:`santw.lti.hinf_norm`.
    """

    starts: int = 20
    max_evals: int = 5000
    norm_cap: float = 1e6
    stability_margin: float = 1e-6
    omega_range: tuple = (1e-3, 1e4)
    grid_points: int = 2000
    search_grid_points: int = 300
    initial_step: float = 0.5
    min_step: float = 1e-4
    polish: bool = True
    final_tol: float = 1e-10
    time_limit: float | None = None


@dataclass
class SynthesisResult:
    compensator: StateSpaceModel
    norm: float
    stable: bool
    theta: np.ndarray
    structure: CompensatorStructure
    history: list
    start_values: list
    evaluations: int
    seed: int
    kind: str = "fixed-structure"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "norm": self.norm if math.isfinite(self.norm) else None,
            "stable": self.stable,
            "theta": self.theta.tolist(),
            "structure": self.structure.to_dict(),
            "compensator": self.compensator.to_dict(),
            "history": list(self.history),
            "start_values": list(self.start_values),
            "evaluations": self.evaluations,
            "seed": self.seed,
        }


def saturation_mode_matrix(A, B, controller: StateSpaceModel, tracking_matrix, sat_matrix,
                           compensator: StateSpaceModel, state_active=None, input_active=None) -> np.ndarray:
    """State matrix of the real loop in one saturation mode.

    A mode fixes which limited signals sit on their bounds
    (``state_active``, frozen ``xhat``) and which inputs are saturated
    (``input_active``, applied input held).  Constants from the bounds and
    the reference are dropped; the nominal loop stays closed through
    ``e = -C_e x``.  States are ``(x, controller, compensator)``.
    Defaults: every limiter engaged, no input saturated.
    """
    A = np.atleast_2d(np.asarray(A, float))
    B = np.atleast_2d(np.asarray(B, float))
    Ce = np.atleast_2d(np.asarray(tracking_matrix, float))
    Cs = np.atleast_2d(np.asarray(sat_matrix, float))
    K, Gm = controller, compensator
    n, m = B.shape
    ns = Cs.shape[0]
    S = np.diag(np.ones(ns) if state_active is None else np.asarray(state_active, float))
    T = np.diag(np.zeros(m) if input_active is None else np.asarray(input_active, float))
    Ac, Bx, Bu = Gm.A, Gm.B[:, :ns], Gm.B[:, ns:]
    Cmy, Cmu = Gm.C[:m], Gm.C[m:]
    Dmy_x, Dmu_x = Gm.D[:m, :ns], Gm.D[m:, :ns]
    Dmy_u, Dmu_u = Gm.D[:m, ns:], Gm.D[m:, ns:]
    dX = -S @ Cs  # xhat - C_s x
    # unsaturated u = Ck xk + Dk (e + u_mu) + u_my with uhat - u = -T u
    L = np.eye(m) + (K.D @ Dmu_u + Dmy_u) @ T
    Ux = np.linalg.solve(L, -K.D @ Ce + (K.D @ Dmu_x + Dmy_x) @ dX)
    Uk = np.linalg.solve(L, K.C)
    Uc = np.linalg.solve(L, K.D @ Cmu + Cmy)
    E = np.eye(m) - T
    return np.block([
        [A + B @ E @ Ux, B @ E @ Uk, B @ E @ Uc],
        [K.B @ (-Ce + Dmu_x @ dX - Dmu_u @ T @ Ux), K.A - K.B @ Dmu_u @ T @ Uk,
         K.B @ (Cmu - Dmu_u @ T @ Uc)],
        [Bx @ dX - Bu @ T @ Ux, -Bu @ T @ Uk, Ac - Bu @ T @ Uc],
    ])


def limiter_loop_matrix(A, B, controller: StateSpaceModel, tracking_matrix, sat_matrix,
                        compensator: StateSpaceModel) -> np.ndarray:
    """Loop matrix with every limiter engaged and the input unsaturated."""
    return saturation_mode_matrix(A, B, controller, tracking_matrix, sat_matrix, compensator)


def limiter_constraint(A, B, controller, tracking_matrix, sat_matrix, modes: str = "limiter",
                       margin: float = 0.0):
    """Worst spectral abscissa plus ``margin`` over saturation modes.

    Used as a synthesis constraint (feasible when negative), so ``margin``
    is the decay rate demanded of each checked mode.  ``modes="limiter"``
    checks only the fully engaged limiter with the input free;
    ``modes="all"`` checks every combination of engaged limiter channels
    and saturated inputs.
    """
    Cs = np.atleast_2d(np.asarray(sat_matrix, float))
    ns, m = Cs.shape[0], np.atleast_2d(B).shape[1]
    if modes == "limiter":
        combos = [(np.ones(ns), np.zeros(m))]
    elif modes == "all":
        combos = [(np.array(c[:ns], float), np.array(c[ns:], float))
                  for c in itertools.product((0, 1), repeat=ns + m)]
    else:
        raise ValueError(f"unknown mode set {modes!r}")

    def abscissa(compensator: StateSpaceModel) -> float:
        worst = -math.inf
        for sa, ia in combos:
            try:
                M = saturation_mode_matrix(A, B, controller, tracking_matrix, Cs, compensator, sa, ia)
            except np.linalg.LinAlgError:
                return math.inf
            worst = max(worst, float(np.max(np.linalg.eigvals(M).real)))
        return worst + margin
    return abscissa


class _Objective:
    def __init__(self, P: GeneralizedPlant, structure: CompensatorStructure, opts: SynthesisOptions,
                 constraints=()):
        self.constraints = tuple(constraints)
        self.P = P
        self.structure = structure
        self.opts = opts
        lo, hi = opts.omega_range
        self.grid = np.logspace(math.log10(lo), math.log10(hi), opts.search_grid_points)
        self.evals = 0
        self.best = math.inf
        self.best_theta = None
        self.trace: list[float] = []
        self.best_abscissa = math.inf

    def __call__(self, theta) -> float:
        self.evals += 1
        val, cl = self.value(theta)
        if val < self.best and cl is not None:
            # grid estimates are lower bounds; only exact values become incumbents
            val = min(hinf_norm(cl, tol=1e-6, omega_range=self.opts.omega_range,
                                npts=self.opts.search_grid_points), self.opts.norm_cap)
        if val < self.best:
            self.best = val
            self.best_theta = np.array(theta, dtype=float)
        self.trace.append(self.best)
        return val

    def value(self, theta):
        """Cheap objective and the closed loop (``None`` when penalized)."""
        cap = self.opts.norm_cap
        try:
            C = self.structure.realize(theta)
            cl = closed_loop(self.P, C)
        except (IllPosedError, ValueError, OverflowError):
            return 10.0 * cap, None
        if not np.all(np.isfinite(cl.A)):
            return 10.0 * cap, None
        try:
            ev = np.linalg.eigvals(cl.A) if cl.nstates else np.zeros(0)
        except np.linalg.LinAlgError:
            return 10.0 * cap, None
        absc = float(np.max(ev.real)) if ev.size else -math.inf
        for con in self.constraints:
            absc = max(absc, con(C))
        self.best_abscissa = min(self.best_abscissa, absc)
        if absc >= -self.opts.stability_margin:
            return cap * (1.0 + min(absc, 1e6)), None
        grid = np.concatenate([[0.0], self.grid, np.abs(ev.imag[ev.imag > 0])])
        g, _ = peak_gain(cl, np.unique(grid))
        return min(g, cap), cl


def _pattern_search(f, x0, budget, opts: SynthesisOptions, deadline):
    x = np.array(x0, dtype=float)
    fx = f(x)
    step = np.full(x.size, opts.initial_step)
    used = 1
    while used < budget and np.max(step, initial=0.0) > opts.min_step:
        if deadline is not None and time.monotonic() > deadline:
            break
        improved = False
        for i in range(x.size):
            if used >= budget:
                break
            for sgn in (1.0, -1.0):
                y = x.copy()
                y[i] += sgn * step[i]
                fy = f(y)
                used += 1
                if fy < fx:
                    x, fx = y, fy
                    step[i] *= 1.5
                    improved = True
                    break
                if used >= budget:
                    break
            else:
                step[i] *= 0.5
        if not improved and x.size == 0:
            break
    return x, fx, used


def synth_fixed_structure(P: GeneralizedPlant, structure: CompensatorStructure, seed: int = 0,
                          options: SynthesisOptions | None = None, x0=None, constraints=()) -> SynthesisResult:
    """Minimize ``||F_l(P, C(theta))||_inf`` over the structure's parameters.

    Multi-start coordinate pattern search followed by a Nelder-Mead polish.
    Start 0 is ``x0`` if given, else a deterministic default; the others
    are drawn from ``numpy.random.default_rng(seed)``.  The incumbent
    (best-so-far) objective is monotone by construction and recorded in
    ``history``.  ``constraints`` are callables returning a spectral
    abscissa for a candidate compensator (see :func:`limiter_constraint`);
    they are penalized exactly like closed-loop instability.

    Raises
    ------
    SynthesisError
        If no start reaches a stabilizing compensator.
    """
    opts = options or SynthesisOptions()
    if structure.n_in != P.n_meas or structure.n_out != P.n_ctrl:
        raise ValueError(f"structure is {structure.n_out}x{structure.n_in}, plant needs {P.n_ctrl}x{P.n_meas}")
    rng = np.random.default_rng(seed)
    f = _Objective(P, structure, opts, constraints)
    deadline = None if opts.time_limit is None else time.monotonic() + opts.time_limit
    starts = []
    for s in range(opts.starts):
        if s == 0:
            th0 = np.asarray(x0, dtype=float) if x0 is not None else structure.default_theta()
        else:
            th0 = structure.random_theta(rng)
        starts.append(th0)
    start_values = []
    for th0 in starts:
        if deadline is not None and time.monotonic() > deadline:
            break
        before = f.evals
        x, fx, used = _pattern_search(f, th0, opts.max_evals, opts, deadline)
        left = opts.max_evals - (f.evals - before)
        if opts.polish and left > 10 and x.size:
            minimize(f, x, method="Nelder-Mead",
                     options={"maxfev": left, "xatol": 1e-8, "fatol": 1e-10, "adaptive": x.size > 10})
        start_values.append(float(f.best))
    theta = f.best_theta if f.best_theta is not None else starts[0]
    C = structure.realize(theta)
    cl = closed_loop(P, C)
    absc = float(np.max(np.linalg.eigvals(cl.A).real)) if cl.nstates else -math.inf
    for con in constraints:
        absc = max(absc, con(C))
    stable = absc < 0
    if not stable:
        raise SynthesisError(f"no stabilizing compensator found (best abscissa {f.best_abscissa:.3g})",
                             f.best_abscissa)
    norm = hinf_norm(cl, tol=opts.final_tol, omega_range=opts.omega_range, npts=opts.grid_points)
    return SynthesisResult(C, norm, stable, np.asarray(theta), structure, f.trace[:: max(1, len(f.trace) // 500)] + [f.trace[-1]],
                           start_values, f.evals, seed)


def synth_full_matrix(P: GeneralizedPlant, order: int | None = None, seed: int = 0,
                      options: SynthesisOptions | None = None, warm_start: SynthesisResult | None = None,
                      constraints=()) -> SynthesisResult:
    """Fixed-order search over an unstructured compensator.

    With ``warm_start`` (a structured result) the full block is the exact
    embedding of that structure, its order is the structured total order,
    and the search starts from the embedded optimum, so the returned norm
    never exceeds the structured one.  Without it, ``order`` (default 6)
    sets the size of a generic full block.
    """
    if warm_start is not None:
        structure = warm_start.structure.embedding()
        x0 = warm_start.structure.embed(warm_start.theta)
        if order is not None and order != structure.order:
            raise ValueError("order must match the embedded structure when warm-starting")
    else:
        structure = CompensatorStructure.full(P.n_meas, P.n_ctrl, 6 if order is None else order)
        x0 = None
    res = synth_fixed_structure(P, structure, seed, options, x0=x0, constraints=constraints)
    res.kind = "full-matrix"
    if warm_start is not None and res.norm > warm_start.norm:
        # the search never leaves a worse incumbent; equal closed loops may differ by rounding only
        res = SynthesisResult(structure.realize(x0), warm_start.norm, True, x0, structure, res.history,
                              res.start_values, res.evaluations, seed, "full-matrix")
    return res
