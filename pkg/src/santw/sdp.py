"""Small dense semidefinite feasibility / optimization.

Problems are stated with :class:`LmiProblem`: declare matrix or scalar
decision variables, assemble affine symmetric block expressions with
:func:`bmat`, and require them negative (or positive) definite.  Strict
inequalities are enforced as ``F(v) <= -eps I`` with a small scaled
``eps``.

:func:`solve_sdp` runs a log-det barrier method with damped Newton
centering.  A phase I problem ``min s  s.t.  -F_j(v) - eps I + s I > 0``
either produces a strictly feasible point or certifies (to centering
accuracy) that the optimal ``s`` is positive.  If the problem has an
objective, phase II follows from that point.  Every decision variable is
kept inside a large Euclidean ball so the barrier is always bounded.
There is no randomness anywhere; identical inputs give identical output.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.linalg as sla

__all__ = [
    "Affine",
    "Variable",
    "LmiProblem",
    "SdpOptions",
    "SdpSolution",
    "bmat",
    "solve_sdp",
]


class Affine:
    """Matrix-valued affine function of the scalar decision vector.

    ``value(v) = const + sum_i v[i] * coef[i]``; only indices with a
    nonzero coefficient are stored.
    """

    __slots__ = ("const", "coef")
    __array_priority__ = 100

    def __init__(self, const, coef: Mapping[int, np.ndarray] | None = None):
        self.const = np.atleast_2d(np.asarray(const, dtype=float))
        self.coef = dict(coef or {})

    @property
    def shape(self) -> tuple[int, int]:
        return self.const.shape

    @staticmethod
    def lift(x) -> "Affine":
        return x if isinstance(x, Affine) else Affine(x)

    def __add__(self, other):
        other = Affine.lift(other)
        if other.shape != self.shape:
            if other.shape == (1, 1) and not other.coef and other.const[0, 0] == 0:
                return self
            raise ValueError(f"shape mismatch {self.shape} + {other.shape}")
        coef = dict(self.coef)
        for k, v in other.coef.items():
            coef[k] = coef[k] + v if k in coef else v
        return Affine(self.const + other.const, coef)

    __radd__ = __add__

    def __neg__(self):
        return Affine(-self.const, {k: -v for k, v in self.coef.items()})

    def __sub__(self, other):
        return self + (-Affine.lift(other))

    def __rsub__(self, other):
        return Affine.lift(other) - self

    def __mul__(self, c):
        if isinstance(c, Affine):
            raise TypeError("product of two affine expressions is not affine")
        c = np.asarray(c, dtype=float)
        if c.ndim and c.size != 1:
            if self.shape != (1, 1):
                raise ValueError("only a scalar expression can scale a matrix")
            c = np.atleast_2d(c)
            return Affine(self.const[0, 0] * c, {k: v[0, 0] * c for k, v in self.coef.items()})
        c = float(c)
        return Affine(c * self.const, {k: c * v for k, v in self.coef.items()})

    __rmul__ = __mul__

    def __matmul__(self, M):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return Affine(self.const @ M, {k: v @ M for k, v in self.coef.items()})

    def __rmatmul__(self, M):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return Affine(M @ self.const, {k: M @ v for k, v in self.coef.items()})

    @property
    def T(self) -> "Affine":
        return Affine(self.const.T, {k: v.T for k, v in self.coef.items()})

    def sym(self) -> "Affine":
        """``self + self^T``."""
        return self + self.T

    def value(self, v: np.ndarray) -> np.ndarray:
        out = self.const.copy()
        for k, c in self.coef.items():
            out += v[k] * c
        return out

    def is_structurally_symmetric(self, tol: float = 0.0) -> bool:
        if self.shape[0] != self.shape[1]:
            return False
        mats = [self.const] + list(self.coef.values())
        return all(np.max(np.abs(m - m.T), initial=0.0) <= tol for m in mats)


class Variable(Affine):
    """A declared decision variable; behaves as an :class:`Affine`."""

    __slots__ = ("name", "indices", "kind")

    def __init__(self, name, shape, indices, coef, kind):
        super().__init__(np.zeros(shape), coef)
        self.name = name
        self.indices = indices
        self.kind = kind


def bmat(blocks) -> Affine:
    """Assemble a block matrix of affine expressions / arrays.

    ``None`` entries are zero blocks whose size is inferred from the row and
    column they sit in.  A string ``"*"`` denotes the transpose of the
    mirrored block, so symmetric templates can be written as printed.
    """
    nr, nc = len(blocks), len(blocks[0])
    rows = [None] * nr
    cols = [None] * nc
    for i in range(nr):
        for j in range(nc):
            b = blocks[i][j]
            if b is None or (isinstance(b, str) and b == "*"):
                continue
            shp = Affine.lift(b).shape
            rows[i] = rows[i] or shp[0]
            cols[j] = cols[j] or shp[1]
            if rows[i] != shp[0] or cols[j] != shp[1]:
                raise ValueError(f"block ({i},{j}) has shape {shp}, expected ({rows[i]},{cols[j]})")
    blocks = [[None if isinstance(b, str) and blocks[j][i] is None else b for j, b in enumerate(row)]
              for i, row in enumerate(blocks)]
    for i in range(nr):
        for j in range(nc):
            if isinstance(blocks[i][j], str):
                shp = Affine.lift(blocks[j][i]).shape
                rows[i] = rows[i] or shp[1]
                cols[j] = cols[j] or shp[0]
    if any(r is None for r in rows) or any(c is None for c in cols):
        raise ValueError("cannot infer block sizes")
    R = np.concatenate([[0], np.cumsum(rows)])
    Cc = np.concatenate([[0], np.cumsum(cols)])
    const = np.zeros((R[-1], Cc[-1]))
    coef: dict[int, np.ndarray] = {}
    for i in range(nr):
        for j in range(nc):
            b = blocks[i][j]
            if b is None:
                continue
            e = Affine.lift(blocks[j][i]).T if isinstance(b, str) else Affine.lift(b)
            sl = (slice(R[i], R[i + 1]), slice(Cc[j], Cc[j + 1]))
            const[sl] += e.const
            for k, v in e.coef.items():
                if k not in coef:
                    coef[k] = np.zeros_like(const)
                coef[k][sl] += v
    return Affine(const, coef)


@dataclass
class _Constraint:
    expr: Affine
    sense: str  # "<" means expr < 0, ">" means expr > 0
    name: str


class LmiProblem:
    """Decision variables, strict LMIs and an optional linear objective."""

    def __init__(self, name: str = "lmi"):
        self.name = name
        self.nvars = 0
        self.variables: dict[str, Variable] = {}
        self.constraints: list[_Constraint] = []
        self.objective: Affine | None = None
        self.meta: dict = {}

    def _new(self, count):
        idx = list(range(self.nvars, self.nvars + count))
        self.nvars += count
        return idx

    def _register(self, var):
        if var.name in self.variables:
            raise ValueError(f"duplicate variable {var.name!r}")
        self.variables[var.name] = var
        return var

    def symmetric(self, name: str, n: int) -> Variable:
        idx = self._new(n * (n + 1) // 2)
        coef = {}
        k = 0
        for i in range(n):
            for j in range(i, n):
                E = np.zeros((n, n))
                E[i, j] = E[j, i] = 1.0
                coef[idx[k]] = E
                k += 1
        return self._register(Variable(name, (n, n), idx, coef, "symmetric"))

    def matrix(self, name: str, rows: int, cols: int) -> Variable:
        idx = self._new(rows * cols)
        coef = {}
        for k, (i, j) in enumerate((i, j) for i in range(rows) for j in range(cols)):
            E = np.zeros((rows, cols))
            E[i, j] = 1.0
            coef[idx[k]] = E
        return self._register(Variable(name, (rows, cols), idx, coef, "general"))

    def scalar(self, name: str) -> Variable:
        idx = self._new(1)
        return self._register(Variable(name, (1, 1), idx, {idx[0]: np.ones((1, 1))}, "scalar"))

    def add_lmi(self, expr, sense: str = "<", name: str | None = None) -> None:
        """Require ``expr < 0`` (``sense="<"``) or ``expr > 0`` (``">"``)."""
        expr = Affine.lift(expr)
        if sense not in ("<", ">"):
            raise ValueError("sense must be '<' or '>'")
        if not expr.is_structurally_symmetric(tol=1e-12 * max(1.0, np.abs(expr.const).max(initial=0))):
            raise ValueError(f"constraint {name or len(self.constraints)} is not symmetric")
        self.constraints.append(_Constraint(expr, sense, name or f"c{len(self.constraints)}"))

    def minimize(self, expr) -> None:
        expr = Affine.lift(expr)
        if expr.shape != (1, 1):
            raise ValueError("objective must be scalar")
        self.objective = expr

    def block_sizes(self, name: str):
        """Debug helper: dimension of a named constraint."""
        for c in self.constraints:
            if c.name == name:
                return c.expr.shape
        raise KeyError(name)

    def values(self, v: np.ndarray) -> dict[str, np.ndarray]:
        return {k: var.value(v) for k, var in self.variables.items()}

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "nvars": self.nvars,
            "variables": {k: {"kind": v.kind, "shape": list(v.shape), "indices": v.indices}
                          for k, v in self.variables.items()},
            "constraints": [
                {"name": c.name, "sense": c.sense, "size": c.expr.shape[0],
                 "const": c.expr.const.tolist(),
                 "coef": {str(k): m.tolist() for k, m in sorted(c.expr.coef.items())}}
                for c in self.constraints
            ],
            "objective": None if self.objective is None else {
                "const": float(self.objective.const[0, 0]),
                "coef": {str(k): float(m[0, 0]) for k, m in sorted(self.objective.coef.items())},
            },
        }


@dataclass(frozen=True)
class SdpOptions:
    eps_rel: float = 1e-7
    radius: float = 1e6
    mu: float = 10.0
    gap_tol: float = 1e-7
    newton_tol: float = 1e-10
    max_newton: int = 60
    max_outer: int = 40
    stop_at_feasible: bool = True
    feasible_margin: float = 1e-3


@dataclass
class SdpSolution:
    """Solver outcome.

    ``margin`` is the largest eigenvalue over all constraints written in
    ``< 0`` form; a reported-feasible solution always has ``margin < 0``.
    """

    status: str
    values: dict[str, np.ndarray]
    margin: float
    objective: float | None
    x: np.ndarray
    log: list[dict] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.status in ("feasible", "optimal")

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "margin": self.margin,
            "objective": self.objective,
            "values": {k: np.asarray(v).tolist() for k, v in self.values.items()},
            "log": self.log,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


class _Block:
    """One constraint rewritten as ``G(v) = G0 + sum v_i G_i > 0``."""

    def __init__(self, c: _Constraint, nvars: int, eps_rel: float):
        sign = -1.0 if c.sense == "<" else 1.0
        k = c.expr.shape[0]
        self.size = k
        self.index = np.array(sorted(c.expr.coef), dtype=int)
        G0 = sign * c.expr.const
        Gi = np.array([sign * c.expr.coef[i] for i in self.index]).reshape(len(self.index), k, k)
        scale = max(1.0, float(np.linalg.norm(G0, 2)))
        self.eps = eps_rel * scale
        self.G0 = 0.5 * (G0 + G0.T) - self.eps * np.eye(k)
        self.Gi = 0.5 * (Gi + Gi.transpose(0, 2, 1))
        self.sign = sign

    def value(self, v):
        return self.G0 + np.tensordot(v[self.index], self.Gi, axes=1)


def _chol(M):
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(L)):
        return None
    return L


class _Barrier:
    """``t * c.z - sum logdet(G_j(v) + s I) - log(R^2 - |v|^2)``.

    ``z = v`` (phase II) or ``z = (v, s)`` (phase I, ``with_s=True``).
    """

    def __init__(self, blocks, nvars, c, radius, with_s):
        self.blocks = blocks
        self.nvars = nvars
        self.c = c
        self.R2 = radius * radius
        self.with_s = with_s
        self.dim = nvars + (1 if with_s else 0)
        self.nu = sum(b.size for b in blocks) + 1

    def _split(self, z):
        return (z[:-1], z[-1]) if self.with_s else (z, 0.0)

    def value(self, z, t):
        v, s = self._split(z)
        rho = self.R2 - v @ v
        if rho <= 0:
            return math.inf
        f = t * (self.c @ z) - math.log(rho)
        for b in self.blocks:
            L = _chol(b.value(v) + s * np.eye(b.size))
            if L is None:
                return math.inf
            f -= 2.0 * np.sum(np.log(np.diag(L)))
        return f

    def derivatives(self, z, t):
        v, s = self._split(z)
        n = self.dim
        g = t * self.c.copy()
        H = np.zeros((n, n))
        rho = self.R2 - v @ v
        g[: self.nvars] += 2.0 * v / rho
        H[: self.nvars, : self.nvars] += 2.0 * np.eye(self.nvars) / rho + 4.0 * np.outer(v, v) / rho**2
        for b in self.blocks:
            k = b.size
            L = _chol(b.value(v) + s * np.eye(k))
            idx = b.index
            mats = b.Gi
            if self.with_s:
                mats = np.concatenate([mats, np.eye(k)[None]], axis=0)
                idx = np.concatenate([idx, [self.nvars]])
            r = len(idx)
            X = sla.solve_triangular(L, mats.transpose(1, 0, 2).reshape(k, r * k), lower=True)
            X = X.reshape(k, r, k).transpose(2, 1, 0).reshape(k, r * k)
            W = sla.solve_triangular(L, X, lower=True).reshape(k, r, k).transpose(1, 0, 2)
            g[idx] -= np.trace(W, axis1=1, axis2=2)
            Wf = W.reshape(r, k * k)
            H[np.ix_(idx, idx)] += Wf @ Wf.T
        return g, H


def _center(bar: _Barrier, z, t, opts, log, phase):
    f = bar.value(z, t)
    for it in range(opts.max_newton):
        g, H = bar.derivatives(z, t)
        try:
            cf = sla.cho_factor(H + 1e-14 * np.trace(H) / len(H) * np.eye(len(H)))
            dz = -sla.cho_solve(cf, g)
        except (np.linalg.LinAlgError, ValueError):
            dz = -np.linalg.lstsq(H, g, rcond=None)[0]
        dec = float(-g @ dz)
        if dec / 2.0 <= opts.newton_tol:
            break
        step = 1.0 / (1.0 + math.sqrt(max(dec, 0.0))) if dec > 0.25 else 1.0
        while True:
            fz = bar.value(z + step * dz, t)
            if fz <= f - 0.25 * step * dec or step < 1e-12:
                break
            step *= 0.5
        if not math.isfinite(fz):
            break
        z = z + step * dz
        f = fz
    log.append({"phase": phase, "t": t, "newton": it + 1, "decrement": dec})
    return z


def _margin(blocks, v):
    worst = -math.inf
    for b in blocks:
        F = -(b.value(v) + b.eps * np.eye(b.size))
        worst = max(worst, float(np.linalg.eigvalsh(0.5 * (F + F.T))[-1]))
    return worst


def solve_sdp(problem: LmiProblem, options: SdpOptions | None = None, x0=None) -> SdpSolution:
    """Find a strictly feasible (and, with an objective, optimal) point.

    Returns a solution with ``status`` one of ``"optimal"``, ``"feasible"``
    or ``"infeasible"``; infeasibility is a status, never an exception.
    """
    opts = options or SdpOptions()
    nv = problem.nvars
    blocks = [_Block(c, nv, opts.eps_rel) for c in problem.constraints]
    log: list[dict] = []
    v = np.zeros(nv) if x0 is None else np.asarray(x0, dtype=float).copy()

    # phase I: min s  s.t.  G_j(v) + s I > 0
    lam = min((float(np.linalg.eigvalsh(b.value(v))[0]) for b in blocks), default=1.0)
    s0 = max(0.0, -lam) + 1.0
    c1 = np.zeros(nv + 1)
    c1[-1] = 1.0
    bar1 = _Barrier(blocks, nv, c1, opts.radius, with_s=True)
    scale = max((b.eps / opts.eps_rel for b in blocks), default=1.0)
    z = np.concatenate([v, [s0]])
    t = 1.0
    status = "infeasible"
    for outer in range(opts.max_outer):
        z = _center(bar1, z, t, opts, log, "I")
        s = z[-1]
        gap = bar1.nu / t
        if opts.stop_at_feasible and s < -opts.feasible_margin * scale:
            status = "feasible"
            break
        if s - gap > 0:
            break
        if gap <= opts.gap_tol * max(1.0, abs(s)):
            status = "feasible" if s < 0 else "infeasible"
            break
        t *= opts.mu
    v = z[:-1]
    if status == "feasible" and _margin(blocks, v) >= 0:
        status = "infeasible"
    if status != "feasible" and z[-1] < 0 and _margin(blocks, v) < 0:
        status = "feasible"

    objective = None
    if status == "feasible" and problem.objective is not None:
        c2 = np.zeros(nv)
        for k, m in problem.objective.coef.items():
            c2[k] = m[0, 0]
        bar2 = _Barrier(blocks, nv, c2, opts.radius, with_s=False)
        t = 1.0 / max(1.0, abs(c2 @ v) + 1.0)
        for outer in range(opts.max_outer):
            v = _center(bar2, v, t, opts, log, "II")
            obj = float(c2 @ v)
            if bar2.nu / t <= opts.gap_tol * max(1.0, abs(obj)):
                break
            t *= opts.mu
        status = "optimal"
    if problem.objective is not None and status != "infeasible":
        objective = float(problem.objective.value(v)[0, 0])
    margin = _margin(blocks, v) if blocks else -math.inf
    return SdpSolution(status, problem.values(v), margin, objective, v, log)
