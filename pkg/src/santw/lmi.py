"""LMI synthesis of static and dynamic state anti-windup compensators.

Both dissipation LMIs contain the product ``gamma_xhat * Q`` in the block that
weighs the saturated state, which is bilinear.  Following the tangent
bound ``-g Q Q <= -g (Q Qc + Qc Q - Qc Qc)`` the square is linearized
around a fixed ``Qc``; ``gamma_xhat`` is then a fixed number per LMI and
is minimized by bisection.  :func:`algorithm1_static` and
:func:`algorithm1_dynamic` alternate that bisection with ``Qc <- Q``.

Naming: ``gamma_uc`` weighs the nominal control input channel and
``gamma_xhat`` the saturated state channel.  The supply rate is

    alpha |u_m|^2 + beta |xhat - x|^2 < gamma_xhat |xhat|^2 + gamma_uc |u_c|^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import as_matrix, eigenvalues, max_eig_sym, solve, symmetrize
from .sdp import LmiProblem, SdpOptions, SdpSolution, bmat, solve_sdp

__all__ = [
    "LmiInfeasibleError",
    "Algorithm1Options",
    "StaticSantwDesign",
    "DynamicSantwDesign",
    "CertificateReport",
    "build_theorem1",
    "build_theorem2",
    "algorithm1_static",
    "algorithm1_dynamic",
    "verify_certificate",
    "static_dissipation_matrix",
    "dynamic_dissipation_matrix",
    "augmented_state_matrix",
    "DEFAULT_H_GRID",
]

DEFAULT_H_GRID = tuple((h1, h2) for h1 in (0.1, 0.3, 0.5) for h2 in (1.0, 2.0, 5.0) if h2 > h1 * h1)


class LmiInfeasibleError(RuntimeError):
    """No feasible linearization point was found within the restart budget."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


def _check_weights(**w):
    for k, v in w.items():
        if not (v > 0 and math.isfinite(v)):
            raise ValueError(f"{k} must be a positive finite number, got {v}")


def _check_ab(A, B):
    A, B = as_matrix(A, "A"), as_matrix(B, "B")
    if A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
        raise ValueError(f"incompatible A {A.shape} and B {B.shape}")
    return A, B


def _check_qc(Qc, n):
    Qc = as_matrix(Qc, "Qc")
    if Qc.shape != (n, n):
        raise ValueError(f"Qc must be {n}x{n}, got {Qc.shape}")
    Qc = symmetrize(Qc)
    if np.linalg.eigvalsh(Qc)[0] <= 0:
        raise ValueError("Qc must be positive definite")
    return Qc


def build_theorem1(A, B, alpha: float, beta: float, gamma_uc: float, Qc, gamma_xhat: float) -> LmiProblem:
    """Static compensator LMI in the variables ``Q`` (n x n) and ``Y`` (m x n).

    Block rows are ``(x, u_c, xhat, z1, z2)`` with sizes ``(n, m, n, n, m)``.
    """
    A, B = _check_ab(A, B)
    _check_weights(alpha=alpha, beta=beta, gamma_uc=gamma_uc, gamma_xhat=gamma_xhat)
    n, m = B.shape
    Qc = _check_qc(Qc, n)
    p = LmiProblem("static_santw")
    Q = p.symmetric("Q", n)
    Y = p.matrix("Y", m, n)
    In, Im = np.eye(n), np.eye(m)
    J11 = (A @ Q - B @ Y).sym()
    J33 = -gamma_xhat * (Q @ Qc + Qc @ Q - Qc @ Qc)
    J = bmat([
        [J11, B, B @ Y, -beta * Q, -alpha * Y.T],
        ["*", -gamma_uc * Im, None, None, None],
        ["*", "*", J33, beta * Q, alpha * Y.T],
        ["*", "*", "*", -beta * In, None],
        ["*", "*", "*", "*", -alpha * Im],
    ])
    p.add_lmi(J, "<", "J")
    p.add_lmi(Q, ">", "Q")
    p.meta.update(block_sizes=(n, m, n, n, m), gamma_xhat=gamma_xhat, gamma_uc=gamma_uc)
    return p


def build_theorem2(A, B, alpha: float, beta: float, gamma_uc: float, gamma_xhat: float,
                   h1: float, h2: float, Qc, variant: str = "consistent",
                   pole_radius: float | None = None) -> LmiProblem:
    """Dynamic compensator LMI (``B_q = I``, compensator order ``n``).

    Variables ``Q1`` (n x n), ``Y1``, ``Y2`` (m x n) and ``YA`` (n x n); the
    Lyapunov matrix is ``[[Q1, h1 Q1], [h1 Q1, h2 Q1]]``.  Block rows are
    ``(x~, u_c, xhat, z)`` with sizes ``(2n, m, n, n + m)``.

    ``variant="consistent"`` uses the upper-left block that results from
    expanding ``A~ Q`` for the augmented matrix
    ``A~ = [[A - B Km1, B Km2], [-I, Aq]]``.  ``variant="printed"`` uses the
    alternative (1,1) entry ``A Q1 - B Y2`` /
    ``h1 A Q1 - B (h1 Y1 + h2 Y2)``, kept for comparison; its solutions
    are not certified by the back-substitution check.

    ``pole_radius`` adds ``[[-r Q1, YA], [YA', -r Q1]] < 0``, which puts
    the eigenvalues of ``Aq = YA Q1^-1`` inside the disk of radius ``r``.
    Without it the compensator can become arbitrarily stiff.
    """
    A, B = _check_ab(A, B)
    _check_weights(alpha=alpha, beta=beta, gamma_uc=gamma_uc, gamma_xhat=gamma_xhat)
    if not (h1 > 0 and h2 > h1 * h1):
        raise ValueError(f"need h2 > h1^2 > 0, got h1={h1}, h2={h2}")
    if variant not in ("consistent", "printed"):
        raise ValueError("variant must be 'consistent' or 'printed'")
    n, m = B.shape
    Qc = _check_qc(Qc, n)
    p = LmiProblem("dynamic_santw")
    Q1 = p.symmetric("Q1", n)
    Y1 = p.matrix("Y1", m, n)
    Y2 = p.matrix("Y2", m, n)
    YA = p.matrix("YA", n, n)
    In, Im = np.eye(n), np.eye(m)
    if variant == "consistent":
        g11 = A @ Q1 - B @ Y1 + h1 * (B @ Y2)
        g12 = h1 * (A @ Q1) - h1 * (B @ Y1) + h2 * (B @ Y2)
    else:
        g11 = A @ Q1 - B @ Y2
        g12 = h1 * (A @ Q1) - B @ (h1 * Y1 + h2 * Y2)
    g21 = -1.0 * Q1 + h1 * YA
    g22 = -h1 * Q1 + h2 * YA
    G11 = bmat([[g11, g12], [g21, g22]])
    Bu = np.vstack([B, np.zeros((n, m))])
    G13 = bmat([[B @ Y1], [Q1]])
    G14 = bmat([[-beta * Q1, alpha * (-1.0 * Y1.T + h1 * Y2.T)],
                [-beta * h1 * Q1, alpha * (-h1 * Y1.T + h2 * Y2.T)]])
    G33 = -gamma_xhat * (Q1 @ Qc + Qc @ Q1 - Qc @ Qc)
    G34 = bmat([[beta * Q1, alpha * Y1.T]])
    G44 = np.block([[-beta * In, np.zeros((n, m))], [np.zeros((m, n)), -alpha * Im]])
    Gam = bmat([
        [G11.sym(), Bu, G13, G14],
        ["*", -gamma_uc * Im, None, None],
        ["*", "*", G33, G34],
        ["*", "*", "*", G44],
    ])
    p.add_lmi(Gam, "<", "Gamma")
    p.add_lmi(Q1, ">", "Q1")
    if pole_radius is not None:
        if not pole_radius > 0:
            raise ValueError("pole_radius must be positive")
        p.add_lmi(bmat([[-pole_radius * Q1, YA], ["*", -pole_radius * Q1]]), "<", "pole_radius")
    p.meta.update(block_sizes=(2 * n, m, n, n + m), h1=h1, h2=h2, variant=variant, pole_radius=pole_radius,
                  gamma_xhat=gamma_xhat, gamma_uc=gamma_uc)
    return p


@dataclass(frozen=True)
class Algorithm1Options:
    """Controls for the ``Qc`` linearization loop.

    ``restart_budget`` random ``Qc = c (G^T G + I)`` draws (``G`` standard
    normal, ``c`` log-uniform on ``qc_scale``) are tried until the LMI is
    feasible at ``gamma_max``; ``gamma_xhat`` is then bisected on
    ``[0, last feasible]`` to relative width ``bisect_rtol``.  The loop
    stops when ``|Q - Qc| <= tol |Q|``, after ``max_iter`` passes, or when
    the best ``gamma_xhat`` has not improved by ``stall_rtol`` for
    ``stall_iters`` passes.
    """

    seed: int = 0
    restart_budget: int = 200
    max_iter: int = 50
    tol: float = 1e-6
    gamma_max: float = 1e4
    bisect_rtol: float = 1e-3
    stall_rtol: float = 1e-4
    stall_iters: int = 3
    qc_scale: tuple = (1e-3, 1.0)
    sdp: SdpOptions = field(default_factory=SdpOptions)


@dataclass
class _LoopResult:
    solution: SdpSolution
    gamma: float
    Qc: np.ndarray
    history: list
    restarts: int
    iterations: int


def _algorithm1(build, qkey, n, opts: Algorithm1Options) -> _LoopResult:
    rng = np.random.default_rng(opts.seed)
    sol = None
    best_margin = math.inf
    for draw in range(opts.restart_budget):
        G = rng.standard_normal((n, n))
        lo_s, hi_s = opts.qc_scale
        scale = math.exp(rng.uniform(math.log(lo_s), math.log(hi_s))) if hi_s > lo_s else lo_s
        Qc = scale * (G.T @ G + np.eye(n))
        cand = solve_sdp(build(Qc, opts.gamma_max), opts.sdp)
        best_margin = min(best_margin, cand.margin)
        if cand.feasible:
            sol = cand
            break
    if sol is None:
        raise LmiInfeasibleError(
            f"no feasible Qc among {opts.restart_budget} random draws at gamma={opts.gamma_max:g}",
            {"draws": opts.restart_budget, "best_margin": best_margin, "gamma_max": opts.gamma_max},
        )
    gamma = opts.gamma_max
    history = [gamma]
    stall = 0
    it = 0
    for it in range(1, opts.max_iter + 1):
        lo, hi = 0.0, gamma
        while hi - lo > opts.bisect_rtol * hi:
            mid = 0.5 * (lo + hi)
            cand = solve_sdp(build(Qc, mid), opts.sdp)
            if cand.feasible:
                hi, sol = mid, cand
            else:
                lo = mid
        improved = hi < gamma * (1.0 - opts.stall_rtol)
        gamma = hi
        history.append(gamma)
        Q = sol.values[qkey]
        converged = np.linalg.norm(Q - Qc) <= opts.tol * np.linalg.norm(Q)
        Qc = symmetrize(Q)
        stall = 0 if improved else stall + 1
        if converged or stall >= opts.stall_iters:
            break
    return _LoopResult(sol, gamma, Qc, history, draw + 1, it)


@dataclass
class StaticSantwDesign:
    """Constant-gain compensator ``u_mx = K_m (xhat - x)``."""

    K_m: np.ndarray
    Q: np.ndarray
    Y: np.ndarray
    alpha: float
    beta: float
    gamma_uc: float
    gamma_xhat: float
    Qc: np.ndarray
    certificate: SdpSolution | None = None
    gamma_history: list = field(default_factory=list)
    restarts: int = 0
    iterations: int = 0

    kind = "static-lmi"

    def compensator(self):
        from .lti import static_gain
        return static_gain(self.K_m)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "K_m": self.K_m.tolist(),
            "Q": self.Q.tolist(),
            "Y": self.Y.tolist(),
            "Qc": self.Qc.tolist(),
            "weights": {"alpha": self.alpha, "beta": self.beta,
                        "gamma_uc": self.gamma_uc, "gamma_xhat": self.gamma_xhat},
            "gamma_history": list(self.gamma_history),
            "restarts": self.restarts,
            "iterations": self.iterations,
            "certificate": None if self.certificate is None else {
                "status": self.certificate.status, "margin": self.certificate.margin},
        }


@dataclass
class DynamicSantwDesign:
    """Dynamic compensator ``q' = A_q q + B_q (xhat - x)``, ``u_mx = K_m1 (xhat - x) + K_m2 q``."""

    A_q: np.ndarray
    B_q: np.ndarray
    K_m1: np.ndarray
    K_m2: np.ndarray
    Q1: np.ndarray
    h1: float
    h2: float
    alpha: float
    beta: float
    gamma_uc: float
    gamma_xhat: float
    Qc: np.ndarray
    certificate: SdpSolution | None = None
    gamma_history: list = field(default_factory=list)
    restarts: int = 0
    iterations: int = 0
    variant: str = "consistent"

    kind = "dynamic-lmi"

    @property
    def Q(self) -> np.ndarray:
        return np.block([[self.Q1, self.h1 * self.Q1], [self.h1 * self.Q1, self.h2 * self.Q1]])

    def compensator(self):
        from .lti import StateSpaceModel
        return StateSpaceModel(self.A_q, self.B_q, self.K_m2, self.K_m1)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "A_q": self.A_q.tolist(),
            "B_q": self.B_q.tolist(),
            "K_m1": self.K_m1.tolist(),
            "K_m2": self.K_m2.tolist(),
            "Q1": self.Q1.tolist(),
            "h": [self.h1, self.h2],
            "Qc": self.Qc.tolist(),
            "variant": self.variant,
            "weights": {"alpha": self.alpha, "beta": self.beta,
                        "gamma_uc": self.gamma_uc, "gamma_xhat": self.gamma_xhat},
            "gamma_history": list(self.gamma_history),
            "restarts": self.restarts,
            "iterations": self.iterations,
            "certificate": None if self.certificate is None else {
                "status": self.certificate.status, "margin": self.certificate.margin},
        }


def algorithm1_static(A, B, alpha: float, beta: float, gamma_uc: float = 1.0,
                      options: Algorithm1Options | None = None) -> StaticSantwDesign:
    """Static compensator by the ``Qc`` iteration on the static LMI.

    Returns ``K_m = Y Q^{-1}``; ``A - B K_m`` is Hurwitz for every accepted
    certificate (its (1,1) block is a Lyapunov inequality).
    """
    A, B = _check_ab(A, B)
    _check_weights(alpha=alpha, beta=beta, gamma_uc=gamma_uc)
    opts = options or Algorithm1Options()
    n = A.shape[0]
    res = _algorithm1(lambda Qc, g: build_theorem1(A, B, alpha, beta, gamma_uc, Qc, g), "Q", n, opts)
    Q, Y = symmetrize(res.solution.values["Q"]), res.solution.values["Y"]
    K = solve(Q.T, Y.T).T
    return StaticSantwDesign(K, Q, Y, alpha, beta, gamma_uc, res.gamma, res.Qc, res.solution,
                             res.history, res.restarts, res.iterations)


def augmented_state_matrix(A, B, A_q, B_q, K_m1, K_m2) -> np.ndarray:
    """``[[A - B Km1, B Km2], [-B_q, A_q]]``: plant plus compensator with ``xhat`` and ``u_c`` removed."""
    return np.block([[A - B @ K_m1, B @ K_m2], [-B_q, A_q]])


def algorithm1_dynamic(A, B, alpha: float, beta: float, gamma_uc: float = 1.0,
                       h=None, options: Algorithm1Options | None = None,
                       variant: str = "consistent", pole_radius: float | None = 500.0) -> DynamicSantwDesign:
    """Dynamic compensator by the ``Qc`` iteration on the dynamic LMI.

    ``h`` is a single ``(h1, h2)`` pair (default ``(0.5, 5.0)``) or a
    sequence of pairs such as :data:`DEFAULT_H_GRID`; over a sequence the
    pair with the smallest ``gamma_xhat`` and Hurwitz augmented dynamics
    is kept.
    ``pole_radius`` bounds the compensator poles (see
    :func:`build_theorem2`); the default keeps a 1 ms RK4 step stable.
    """
    A, B = _check_ab(A, B)
    _check_weights(alpha=alpha, beta=beta, gamma_uc=gamma_uc)
    opts = options or Algorithm1Options()
    n, m = B.shape
    if h is None:
        pairs = [(0.5, 5.0)]
    elif np.ndim(h) == 1:
        pairs = [tuple(h)]
    else:
        pairs = [tuple(x) for x in h]
    best = None
    failures = {}
    for h1, h2 in pairs:
        build = lambda Qc, g, h1=h1, h2=h2: build_theorem2(A, B, alpha, beta, gamma_uc, g, h1, h2, Qc, variant,
                                                                  pole_radius)
        try:
            res = _algorithm1(build, "Q1", n, opts)
        except (LmiInfeasibleError, ValueError) as exc:
            failures[f"{h1},{h2}"] = str(exc)
            continue
        v = res.solution.values
        Q1 = symmetrize(v["Q1"])
        K1 = solve(Q1, v["Y1"].T).T
        K2 = solve(Q1, v["Y2"].T).T
        Aq = solve(Q1, v["YA"].T).T
        Bq = np.eye(n)
        At = augmented_state_matrix(A, B, Aq, Bq, K1, K2)
        if np.max(eigenvalues(At).values.real) >= 0:
            failures[f"{h1},{h2}"] = "augmented dynamics not Hurwitz"
            continue
        design = DynamicSantwDesign(Aq, Bq, K1, K2, Q1, h1, h2, alpha, beta, gamma_uc, res.gamma,
                                    res.Qc, res.solution, res.history, res.restarts, res.iterations, variant)
        if best is None or design.gamma_xhat < best.gamma_xhat:
            best = design
    if best is None:
        raise LmiInfeasibleError("no (h1, h2) pair produced a certified design", failures)
    return best


# ---------------------------------------------------------------------------
# Certificate checks


def static_dissipation_matrix(A, B, K_m, P, alpha, beta, gamma_uc, gamma_xhat) -> np.ndarray:
    """Quadratic form of the dissipation rate in ``(x, u_c, xhat, .)``, Schur-expanded.

    Negative definiteness is equivalent to
    ``d/dt x'Px + alpha|u_m|^2 + beta|xhat-x|^2 - gamma_xhat|xhat|^2 - gamma_uc|u_c|^2 < 0``.
    """
    A, B = _check_ab(A, B)
    n, m = B.shape
    K = np.atleast_2d(K_m)
    Acl = A - B @ K
    In, Im = np.eye(n), np.eye(m)
    Z = np.zeros
    return np.block([
        [P @ Acl + Acl.T @ P, P @ B, P @ B @ K, -beta * In, -alpha * K.T],
        [B.T @ P, -gamma_uc * Im, Z((m, n)), Z((m, n)), Z((m, m))],
        [K.T @ B.T @ P, Z((n, m)), -gamma_xhat * In, beta * In, alpha * K.T],
        [-beta * In, Z((n, m)), beta * In, -beta * In, Z((n, m))],
        [-alpha * K, Z((m, m)), alpha * K, Z((m, n)), -alpha * Im],
    ])


def dynamic_dissipation_matrix(A, B, A_q, B_q, K_m1, K_m2, P, alpha, beta, gamma_uc, gamma_xhat) -> np.ndarray:
    """Augmented-state analogue of :func:`static_dissipation_matrix`.

    State ``[x; q]``; outputs ``z1 = xhat - x`` and
    ``z2 = K_m1 (xhat - x) + K_m2 q``.
    """
    A, B = _check_ab(A, B)
    n, m = B.shape
    nq = A_q.shape[0]
    At = augmented_state_matrix(A, B, A_q, B_q, K_m1, K_m2)
    Bu = np.vstack([B, np.zeros((nq, m))])
    Bs = np.vstack([B @ K_m1, B_q])
    C1 = np.hstack([-np.eye(n), np.zeros((n, nq))])
    C2 = np.hstack([-K_m1, K_m2])
    N = n + nq
    Z = np.zeros
    return np.block([
        [P @ At + At.T @ P, P @ Bu, P @ Bs, beta * C1.T, alpha * C2.T],
        [Bu.T @ P, -gamma_uc * np.eye(m), Z((m, n)), Z((m, n)), Z((m, m))],
        [Bs.T @ P, Z((n, m)), -gamma_xhat * np.eye(n), beta * np.eye(n), alpha * K_m1.T],
        [beta * C1, Z((n, m)), beta * np.eye(n), -beta * np.eye(n), Z((n, m))],
        [alpha * C2, Z((m, m)), alpha * K_m1, Z((m, n)), -alpha * np.eye(m)],
    ]) if N else None


@dataclass
class CertificateReport:
    passed: bool
    max_eig: float
    hurwitz: bool
    linearization_ok: bool
    spectral_abscissa: float
    messages: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "max_eig": self.max_eig, "hurwitz": self.hurwitz,
                "linearization_ok": self.linearization_ok,
                "spectral_abscissa": self.spectral_abscissa, "messages": list(self.messages)}


def verify_certificate(design, A, B, rtol: float = 1e-12) -> CertificateReport:
    """Back-substitute a design into its dissipation inequality.

    Rebuilds ``P = Q^{-1}`` (for the dynamic case ``Q`` is the structured
    ``[[Q1, h1 Q1], [h1 Q1, h2 Q1]]``), forms the exact (not linearized)
    Schur-expanded inequality and checks it is negative definite.  Also
    confirms the tangent bound ``(Q - Qc)^T (Q - Qc) >= 0`` that justifies
    the linearization, and the Hurwitz property of the compensated loop.
    """
    A, B = _check_ab(A, B)
    msgs = []
    Q = symmetrize(design.Q)
    if np.linalg.eigvalsh(Q)[0] <= 0:
        return CertificateReport(False, math.inf, False, False, math.inf, ["Q is not positive definite"])
    P = symmetrize(np.linalg.inv(Q))
    w = (design.alpha, design.beta, design.gamma_uc, design.gamma_xhat)
    if isinstance(design, DynamicSantwDesign):
        M = dynamic_dissipation_matrix(A, B, design.A_q, design.B_q, design.K_m1, design.K_m2, P, *w)
        Acl = augmented_state_matrix(A, B, design.A_q, design.B_q, design.K_m1, design.K_m2)
        Qlin = symmetrize(design.Q1)
    else:
        M = static_dissipation_matrix(A, B, design.K_m, P, *w)
        Acl = A - B @ np.atleast_2d(design.K_m)
        Qlin = Q
    M = symmetrize(M)
    top = max_eig_sym(M)
    tol = rtol * max(1.0, float(np.linalg.norm(M, 2)))
    neg = top < -tol
    if not neg:
        msgs.append(f"dissipation matrix not negative definite (max eig {top:.3g})")
    absc = float(np.max(eigenvalues(Acl).values.real))
    hurwitz = absc < 0
    if not hurwitz:
        msgs.append(f"closed loop not Hurwitz (abscissa {absc:.3g})")
    Qc = symmetrize(design.Qc)
    D = Qlin - Qc
    gap = (-Qlin @ Qlin) - (-(Qlin @ Qc + Qc @ Qlin - Qc @ Qc))
    lin_ok = bool(np.allclose(gap, -D.T @ D, atol=1e-9 * max(1.0, np.linalg.norm(Qlin) ** 2))
                  and np.linalg.eigvalsh(symmetrize(gap))[-1] <= 1e-9 * max(1.0, np.linalg.norm(Qlin) ** 2))
    if not lin_ok:
        msgs.append("tangent bound violated")
    return CertificateReport(bool(neg and hurwitz and lin_ok), top, hurwitz, lin_ok, absc, msgs)
