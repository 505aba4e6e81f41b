"""Continuous-time LTI models and their algebra.

Models are immutable ``(A, B, C, D)`` realizations with channel labels.
Interconnections are always formed on realizations (block stacking and
elimination of the direct-feedthrough loop), never by polynomial
arithmetic.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg as sla

from .linalg import EigenvalueConvergenceError, as_matrix, eigenvalues, solve

__all__ = [
    "StateSpaceModel",
    "RationalTransfer",
    "IllPosedError",
    "ResonanceError",
    "ss",
    "static_gain",
    "tf",
    "to_state_space",
    "frequency_response",
    "sigma_max",
    "series",
    "parallel",
    "append",
    "feedback",
    "lft_lower",
    "interconnect",
    "anti_windup_sensitivity",
    "hinf_norm",
    "peak_gain",
    "is_hurwitz",
    "spectral_abscissa",
    "balanced_truncation",
]

HURWITZ_TOL = 1e-9
AXIS_TOL = 1e-7


class IllPosedError(ValueError):
    """Algebraic loop through direct feedthrough is singular."""


class ResonanceError(ValueError):
    """Frequency response requested at (or next to) a pole on the axis."""


def _labels(given, count, prefix):
    if given is None:
        return tuple(f"{prefix}{i}" for i in range(count))
    given = tuple(str(g) for g in given)
    if len(given) != count:
        raise ValueError(f"expected {count} labels, got {len(given)}")
    return given


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """Realization ``dx = A x + B u``, ``y = C x + D u``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    input_labels: tuple = field(default=None)
    output_labels: tuple = field(default=None)

    def __post_init__(self):
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        A = np.asarray(self.A, dtype=float)
        A = np.atleast_2d(A) if A.size else np.zeros((0, 0))
        n = A.shape[0]
        p, m = D.shape
        B = np.asarray(self.B, dtype=float).reshape(n, m)
        C = np.asarray(self.C, dtype=float).reshape(p, n)
        for name, arr in (("A", A), ("B", B), ("C", C), ("D", D)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            arr.setflags(write=False)
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "input_labels", _labels(self.input_labels, m, "u"))
        object.__setattr__(self, "output_labels", _labels(self.output_labels, p, "y"))

    @property
    def nstates(self) -> int:
        return self.A.shape[0]

    @property
    def ninputs(self) -> int:
        return self.D.shape[1]

    @property
    def noutputs(self) -> int:
        return self.D.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.D.shape

    def poles(self) -> np.ndarray:
        return eigenvalues(self.A).values

    def __call__(self, s: complex) -> np.ndarray:
        n = self.nstates
        if n == 0:
            return self.D.astype(complex)
        return self.C @ np.linalg.solve(s * np.eye(n) - self.A, self.B) + self.D

    def __neg__(self) -> "StateSpaceModel":
        return self.scaled(-1.0)

    def scaled(self, c: float) -> "StateSpaceModel":
        return StateSpaceModel(self.A, self.B, c * self.C, c * self.D, self.input_labels, self.output_labels)

    def relabel(self, inputs=None, outputs=None) -> "StateSpaceModel":
        return StateSpaceModel(self.A, self.B, self.C, self.D,
                               inputs if inputs is not None else self.input_labels,
                               outputs if outputs is not None else self.output_labels)

    def select(self, outputs=None, inputs=None) -> "StateSpaceModel":
        """Sub-model restricted to the given output / input indices."""
        oi = list(range(self.noutputs)) if outputs is None else list(outputs)
        ii = list(range(self.ninputs)) if inputs is None else list(inputs)
        return StateSpaceModel(self.A, self.B[:, ii], self.C[oi, :], self.D[np.ix_(oi, ii)],
                               [self.input_labels[i] for i in ii],
                               [self.output_labels[i] for i in oi])

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "D": self.D.tolist(),
            "labels": {"inputs": list(self.input_labels), "outputs": list(self.output_labels)},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "StateSpaceModel":
        D = np.atleast_2d(np.asarray(data["D"], dtype=float))
        p, m = D.shape
        A = np.asarray(data.get("A", []), dtype=float)
        n = int(round(math.sqrt(A.size)))
        labels = data.get("labels") or {}
        return cls(A.reshape(n, n), np.asarray(data.get("B", []), dtype=float).reshape(n, m),
                   np.asarray(data.get("C", []), dtype=float).reshape(p, n), D,
                   labels.get("inputs"), labels.get("outputs"))

    def __repr__(self):
        return f"StateSpaceModel(n={self.nstates}, inputs={self.ninputs}, outputs={self.noutputs})"


def ss(A, B, C, D, inputs=None, outputs=None) -> StateSpaceModel:
    D = np.atleast_2d(np.asarray(D, dtype=float))
    A = np.asarray(A, dtype=float)
    n = 0 if A.size == 0 else np.atleast_2d(A).shape[0]
    return StateSpaceModel(np.atleast_2d(A).reshape(n, n) if n else np.zeros((0, 0)),
                           np.asarray(B, dtype=float).reshape(n, D.shape[1]),
                           np.asarray(C, dtype=float).reshape(D.shape[0], n), D, inputs, outputs)


def static_gain(D, inputs=None, outputs=None) -> StateSpaceModel:
    D = np.atleast_2d(np.asarray(D, dtype=float))
    p, m = D.shape
    return StateSpaceModel(np.zeros((0, 0)), np.zeros((0, m)), np.zeros((p, 0)), D, inputs, outputs)


# ---------------------------------------------------------------------------
# Rational transfer matrices


def _poly(c) -> np.ndarray:
    c = np.atleast_1d(np.asarray(c, dtype=float))
    nz = np.flatnonzero(c)
    if nz.size == 0:
        return np.zeros(1)
    return c[nz[0]:]


@dataclass(frozen=True, eq=False)
class RationalTransfer:
    """Matrix of SISO rationals; polynomials in descending powers of s."""

    num: tuple
    den: tuple
    input_labels: tuple = None
    output_labels: tuple = None

    def __post_init__(self):
        num = [[_poly(c) for c in row] for row in self.num]
        den = [[_poly(c) for c in row] for row in self.den]
        if len(num) != len(den) or any(len(a) != len(b) for a, b in zip(num, den)):
            raise ValueError("numerator and denominator grids differ in shape")
        if not num or not num[0]:
            raise ValueError("empty transfer matrix")
        if len({len(r) for r in num}) != 1:
            raise ValueError("ragged transfer matrix")
        for row in den:
            for d in row:
                if d[0] == 0:
                    raise ValueError("zero denominator")
        object.__setattr__(self, "num", tuple(tuple(r) for r in num))
        object.__setattr__(self, "den", tuple(tuple(r) for r in den))
        object.__setattr__(self, "input_labels", _labels(self.input_labels, len(num[0]), "u"))
        object.__setattr__(self, "output_labels", _labels(self.output_labels, len(num), "y"))

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.num), len(self.num[0])

    def is_proper(self) -> bool:
        return all(len(n) <= len(d) for rn, rd in zip(self.num, self.den) for n, d in zip(rn, rd))

    def is_strictly_proper(self) -> bool:
        return all(
            len(n) < len(d) or not np.any(n)
            for rn, rd in zip(self.num, self.den) for n, d in zip(rn, rd)
        )

    def __call__(self, s: complex) -> np.ndarray:
        return np.array([[np.polyval(n, s) / np.polyval(d, s) for n, d in zip(rn, rd)]
                         for rn, rd in zip(self.num, self.den)])

    def to_dict(self) -> dict:
        return {
            "num": [[list(map(float, c)) for c in row] for row in self.num],
            "den": [[list(map(float, c)) for c in row] for row in self.den],
            "labels": {"inputs": list(self.input_labels), "outputs": list(self.output_labels)},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "RationalTransfer":
        labels = data.get("labels") or {}
        return cls(data["num"], data["den"], labels.get("inputs"), labels.get("outputs"))


def tf(num, den) -> RationalTransfer:
    """SISO rational ``num(s) / den(s)``."""
    return RationalTransfer(((num,),), ((den,),))


def _column_realization(nums, dens):
    """Controllable canonical form for one input column.

    The column denominator is the product of the distinct entry
    denominators; each numerator is lifted onto it.
    """
    distinct = []
    for d in dens:
        dn = d / d[0]
        if not any(len(dn) == len(e) and np.allclose(dn, e, rtol=0, atol=1e-14) for e in distinct):
            distinct.append(dn)
    common = np.ones(1)
    for d in distinct:
        common = np.polymul(common, d)
    k = len(common) - 1
    rows_C, rows_D = [], []
    for nm, d in zip(nums, dens):
        dn = d / d[0]
        lift = np.ones(1)
        for e in distinct:
            if not (len(dn) == len(e) and np.allclose(dn, e, rtol=0, atol=1e-14)):
                lift = np.polymul(lift, e)
        full = np.polymul(nm / d[0], lift)
        full = np.concatenate([np.zeros(max(0, k + 1 - len(full))), full])
        dterm = full[0] if k >= 0 else 0.0
        rem = full[1:] - dterm * common[1:]
        rows_C.append(rem)
        rows_D.append(dterm)
    if k == 0:
        return np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((len(nums), 0)), np.array(rows_D).reshape(-1, 1)
    A = np.zeros((k, k))
    A[0, :] = -common[1:]
    A[1:, :-1] = np.eye(k - 1)
    B = np.zeros((k, 1))
    B[0, 0] = 1.0
    return A, B, np.array(rows_C).reshape(len(nums), k), np.array(rows_D).reshape(-1, 1)


def to_state_space(T: RationalTransfer) -> StateSpaceModel:
    """Realize a proper rational matrix, one controllable block per column.

    For ``1/(s^2+s+1)`` this returns ``A=[[-1,-1],[1,0]]``, ``B=[1,0]^T`` and
    ``C=[0,1]``: the second state is the output and the first its
    derivative.  Callers that want every state as an output (``C = I``)
    build that explicitly.
    """
    if not T.is_proper():
        raise ValueError("transfer matrix has an improper entry")
    p, m = T.shape
    blocks = [_column_realization([T.num[i][j] for i in range(p)], [T.den[i][j] for i in range(p)])
              for j in range(m)]
    A = sla.block_diag(*[b[0] for b in blocks]) if blocks else np.zeros((0, 0))
    n = A.shape[0]
    B = np.zeros((n, m))
    C = np.zeros((p, n))
    D = np.zeros((p, m))
    off = 0
    for j, (Aj, Bj, Cj, Dj) in enumerate(blocks):
        k = Aj.shape[0]
        B[off:off + k, j] = Bj[:, 0]
        C[:, off:off + k] = Cj
        D[:, j] = Dj[:, 0]
        off += k
    return StateSpaceModel(A, B, C, D, T.input_labels, T.output_labels)


# ---------------------------------------------------------------------------
# Frequency response


def frequency_response(S: StateSpaceModel, omega: float) -> np.ndarray:
    """``C (j w I - A)^{-1} B + D`` at a single frequency."""
    n = S.nstates
    if n == 0:
        return S.D.astype(complex)
    s = 1j * float(omega)
    lam = S.poles()
    gap = np.min(np.abs(lam - s))
    if gap <= 1e-10 * max(1.0, abs(s)):
        raise ResonanceError(f"j*{omega} is a pole of the model (distance {gap:.2e})")
    return S.C @ np.linalg.solve(s * np.eye(n) - S.A, S.B.astype(complex)) + S.D


def _response_batch(S: StateSpaceModel, omegas: np.ndarray) -> np.ndarray:
    omegas = np.asarray(omegas, dtype=float)
    n = S.nstates
    if n == 0:
        return np.broadcast_to(S.D.astype(complex), (len(omegas),) + S.D.shape).copy()
    lam, V = np.linalg.eig(S.A)
    if np.linalg.cond(V) < 1e8:
        Bt = np.linalg.solve(V, S.B.astype(complex))
        Ct = S.C @ V
        resolvent = 1.0 / (1j * omegas[:, None] - lam[None, :])
        return np.einsum("pk,wk,km->wpm", Ct, resolvent, Bt) + S.D[None, :, :]
    eye = np.eye(n)
    M = 1j * omegas[:, None, None] * eye[None] - S.A[None]
    X = np.linalg.solve(M, np.broadcast_to(S.B.astype(complex), (len(omegas),) + S.B.shape))
    return np.einsum("pk,wkm->wpm", S.C, X) + S.D[None, :, :]


def sigma_max(S: StateSpaceModel, omegas) -> np.ndarray:
    """Largest singular value of the frequency response on a grid."""
    G = _response_batch(S, np.atleast_1d(omegas))
    if G.shape[1] == 1 or G.shape[2] == 1:
        return np.sqrt(np.sum(np.abs(G) ** 2, axis=(1, 2)))
    return np.linalg.svd(G, compute_uv=False)[:, 0]


# ---------------------------------------------------------------------------
# Interconnection primitives


def append(*systems: StateSpaceModel) -> StateSpaceModel:
    """Block-diagonal stacking: inputs and outputs concatenated."""
    A = sla.block_diag(*[s.A for s in systems])
    B = sla.block_diag(*[s.B for s in systems])
    C = sla.block_diag(*[s.C for s in systems])
    D = sla.block_diag(*[s.D for s in systems])
    n = sum(s.nstates for s in systems)
    m = sum(s.ninputs for s in systems)
    p = sum(s.noutputs for s in systems)
    return StateSpaceModel(np.reshape(A, (n, n)), np.reshape(B, (n, m)), np.reshape(C, (p, n)),
                           np.reshape(D, (p, m)),
                           sum((s.input_labels for s in systems), ()),
                           sum((s.output_labels for s in systems), ()))


def series(first: StateSpaceModel, second: StateSpaceModel) -> StateSpaceModel:
    """``second * first``: the output of ``first`` drives ``second``."""
    if first.noutputs != second.ninputs:
        raise ValueError(f"cannot cascade {first.shape} into {second.shape}")
    n1, n2 = first.nstates, second.nstates
    A = np.block([[first.A, np.zeros((n1, n2))], [second.B @ first.C, second.A]])
    B = np.vstack([first.B, second.B @ first.D])
    C = np.hstack([second.D @ first.C, second.C])
    D = second.D @ first.D
    return StateSpaceModel(A, B, C, D, first.input_labels, second.output_labels)


def parallel(G1: StateSpaceModel, G2: StateSpaceModel, sign: float = 1.0) -> StateSpaceModel:
    if G1.shape != G2.shape:
        raise ValueError(f"shape mismatch {G1.shape} vs {G2.shape}")
    A = sla.block_diag(G1.A, G2.A).reshape(G1.nstates + G2.nstates, -1) if (G1.nstates + G2.nstates) else np.zeros((0, 0))
    B = np.vstack([G1.B, sign * G2.B])
    C = np.hstack([G1.C, G2.C])
    return StateSpaceModel(A, B, C, G1.D + sign * G2.D, G1.input_labels, G1.output_labels)


def feedback(G: StateSpaceModel, H: StateSpaceModel | None = None, sign: float = -1.0) -> StateSpaceModel:
    """Closed loop ``y = G e``, ``e = r + sign * H y`` from ``r`` to ``y``."""
    if H is None:
        H = static_gain(np.eye(G.noutputs))
    if H.ninputs != G.noutputs or H.noutputs != G.ninputs:
        raise ValueError("feedback dimensions do not match")
    P = append(G, H)
    m, p = G.ninputs, G.noutputs
    # loop inputs [e; v] with e = r + sign * z, v = y
    F = np.zeros((P.ninputs, P.noutputs))
    F[:m, p:] = sign * np.eye(m)
    F[m:, :p] = np.eye(p)
    E = np.zeros((P.ninputs, m))
    E[:m, :] = np.eye(m)
    Hout = np.zeros((p, P.noutputs))
    Hout[:, :p] = np.eye(p)
    return _close(P, F, E, Hout, np.zeros((p, m)), G.input_labels, G.output_labels)


def _close(P, F, E, H, Hw, in_labels=None, out_labels=None, names=None):
    """Close ``u = F y + E w`` around stacked ``P``; outputs ``H y + Hw w``."""
    M = np.eye(P.noutputs) - P.D @ F
    try:
        Minv = np.linalg.inv(M) if M.size else M
        if M.size and np.linalg.cond(M) > 1e12:
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        _, _, vh = np.linalg.svd(M)
        involved = np.flatnonzero(np.abs(vh[-1]) > 1e-6)
        labels = names if names is not None else P.output_labels
        loop = ", ".join(labels[i] for i in involved)
        raise IllPosedError(f"ill-posed algebraic loop through: {loop}") from None
    A = P.A + P.B @ F @ Minv @ P.C
    B = P.B @ F @ Minv @ P.D @ E + P.B @ E
    C = H @ Minv @ P.C
    D = H @ Minv @ P.D @ E + Hw
    return StateSpaceModel(A, B, C, D, in_labels, out_labels)


def lft_lower(P: StateSpaceModel, K: StateSpaceModel, nz: int | None = None, nw: int | None = None) -> StateSpaceModel:
    """Lower linear fractional transformation ``F_l(P, K)``.

    ``P`` has inputs ``[w; u]`` and outputs ``[z; y]`` with ``u`` of width
    ``K.noutputs`` and ``y`` of width ``K.ninputs``.
    """
    ny, nu = K.ninputs, K.noutputs
    nz = P.noutputs - ny if nz is None else nz
    nw = P.ninputs - nu if nw is None else nw
    if nz + ny != P.noutputs or nw + nu != P.ninputs:
        raise ValueError("plant partition does not match compensator size")
    A, B1, B2 = P.A, P.B[:, :nw], P.B[:, nw:]
    C1, C2 = P.C[:nz], P.C[nz:]
    D11, D12 = P.D[:nz, :nw], P.D[:nz, nw:]
    D21, D22 = P.D[nz:, :nw], P.D[nz:, nw:]
    Ak, Bk, Ck, Dk = K.A, K.B, K.C, K.D
    M = np.eye(ny) - D22 @ Dk
    if ny and np.linalg.cond(M) > 1e12:
        raise IllPosedError("ill-posed LFT: I - D22 Dk is singular")
    Mi = np.linalg.inv(M) if ny else M
    # y = Mi (C2 x + D22 Ck xk + D21 w); u = Ck xk + Dk y
    Yx, Yk, Yw = Mi @ C2, Mi @ D22 @ Ck, Mi @ D21
    Ux, Uk, Uw = Dk @ Yx, Ck + Dk @ Yk, Dk @ Yw
    Acl = np.block([[A + B2 @ Ux, B2 @ Uk], [Bk @ Yx, Ak + Bk @ Yk]])
    Bcl = np.vstack([B1 + B2 @ Uw, Bk @ Yw])
    Ccl = np.hstack([C1 + D12 @ Ux, D12 @ Uk])
    Dcl = D11 + D12 @ Uw
    return StateSpaceModel(Acl, Bcl, Ccl, Dcl, P.input_labels[:nw], P.output_labels[:nz])


_REF = re.compile(r"^\s*(?P<neg>-)?\s*(?P<name>[A-Za-z_][\w]*)(?:\.(?P<label>[\w]+)|\[(?P<idx>\d+)(?::(?P<stop>\d+))?\])?\s*$")


def interconnect(parts: Mapping[str, StateSpaceModel], connections: Sequence, inputs: Sequence,
                 outputs: Sequence) -> StateSpaceModel:
    """Wire labeled subsystems into one model.

    Parameters
    ----------
    parts : mapping name -> StateSpaceModel
    connections : sequence of ``(dest, src)`` or ``(dest, src, gain)``
        ``dest`` names part inputs, ``src`` names part outputs or external
        inputs.  A reference is ``name``, ``name.label``, ``name[i]`` or
        ``name[i:j]``; a leading ``-`` negates it.  Several sources feeding
        the same destination are summed.
    inputs : sequence of ``name`` or ``(name, width)``
        External input groups, in order.
    outputs : sequence of references
        Part outputs (or external inputs) exposed as model outputs.

    Raises
    ------
    IllPosedError
        If the direct-feedthrough loop ``I - D F`` is singular; the message
        lists the signals on the offending loop.
    """
    names = list(parts)
    P = append(*[parts[k] for k in names])
    in_off, out_off = {}, {}
    io = oo = 0
    for k in names:
        in_off[k], out_off[k] = io, oo
        io += parts[k].ninputs
        oo += parts[k].noutputs
    ext = {}
    eo = 0
    ext_labels = []
    for item in inputs:
        nm, w = (item, 1) if isinstance(item, str) else (item[0], int(item[1]))
        ext[nm] = (eo, w)
        ext_labels += [nm] if w == 1 else [f"{nm}[{i}]" for i in range(w)]
        eo += w
    sig_names = [f"{k}.{lab}" for k in names for lab in parts[k].output_labels]

    def resolve(ref, role):
        mt = _REF.match(ref)
        if not mt:
            raise ValueError(f"bad signal reference {ref!r}")
        sign = -1.0 if mt["neg"] else 1.0
        nm = mt["name"]
        if nm in parts:
            sysm = parts[nm]
            labels = sysm.input_labels if role == "in" else sysm.output_labels
            base = in_off[nm] if role == "in" else out_off[nm]
            kind = "part"
        elif nm in ext and role == "out":
            base, width = ext[nm]
            labels = tuple(str(i) for i in range(width))
            kind = "ext"
        else:
            raise ValueError(f"unknown signal {ref!r}")
        if mt["label"] is not None:
            if mt["label"] not in labels:
                raise ValueError(f"{nm} has no channel {mt['label']!r}")
            idx = [labels.index(mt["label"])]
        elif mt["idx"] is not None:
            i0 = int(mt["idx"])
            idx = list(range(i0, int(mt["stop"]))) if mt["stop"] is not None else [i0]
        else:
            idx = list(range(len(labels)))
        if any(i >= len(labels) for i in idx):
            raise ValueError(f"index out of range in {ref!r}")
        return kind, sign, [base + i for i in idx]

    F = np.zeros((P.ninputs, P.noutputs))
    E = np.zeros((P.ninputs, eo))
    for conn in connections:
        dest, src = conn[0], conn[1]
        gain = float(conn[2]) if len(conn) > 2 else 1.0
        kd, sd, di = resolve(dest, "in")
        if kd != "part":
            raise ValueError(f"destination {dest!r} must be a part input")
        ks, ss_, si = resolve(src, "out")
        if len(si) != len(di):
            raise ValueError(f"width mismatch connecting {src!r} -> {dest!r}")
        target = F if ks == "part" else E
        for a, b in zip(di, si):
            target[a, b] += sd * ss_ * gain
    rows_H, rows_Hw, out_labels = [], [], []
    for ref in outputs:
        k, sg, idx = resolve(ref, "out")
        for i in idx:
            h = np.zeros(P.noutputs)
            hw = np.zeros(eo)
            (h if k == "part" else hw)[i] = sg
            rows_H.append(h)
            rows_Hw.append(hw)
            out_labels.append(sig_names[i] if k == "part" else ext_labels[i])
    H = np.array(rows_H).reshape(len(rows_H), P.noutputs)
    Hw = np.array(rows_Hw).reshape(len(rows_Hw), eo)
    return _close(P, F, E, H, Hw, ext_labels, out_labels, names=sig_names)


def anti_windup_sensitivity(G: StateSpaceModel, Gmy: StateSpaceModel) -> StateSpaceModel:
    """Realize ``S = (I + G Gmy)^{-1}``, the map from ``y_hat`` to ``y_hat - y``."""
    if Gmy.ninputs != G.noutputs or Gmy.noutputs != G.ninputs:
        raise ValueError("compensator must map plant outputs to plant inputs")
    loop = series(Gmy, G)
    return feedback(static_gain(np.eye(G.noutputs)), loop, sign=-1.0)


# ---------------------------------------------------------------------------
# Stability and H-infinity norm


def spectral_abscissa(S: StateSpaceModel | np.ndarray) -> float:
    A = S.A if isinstance(S, StateSpaceModel) else np.asarray(S)
    if A.size == 0:
        return -np.inf
    return float(np.max(eigenvalues(A).values.real))


def is_hurwitz(S: StateSpaceModel | np.ndarray, tol: float = HURWITZ_TOL) -> bool:
    """All eigenvalues strictly inside the open left half-plane (by ``tol``)."""
    try:
        return spectral_abscissa(S) < -tol
    except EigenvalueConvergenceError:
        return False


def _default_grid(S: StateSpaceModel, npts: int, omega_range=None) -> np.ndarray:
    if omega_range is not None:
        lo, hi = omega_range
    else:
        mags = np.abs(S.poles())
        mags = mags[mags > 0]
        if mags.size == 0:
            lo, hi = 1e-3, 1e3
        else:
            lo = 10 ** (math.floor(math.log10(mags.min())) - 2)
            hi = 10 ** (math.ceil(math.log10(mags.max())) + 2)
    grid = np.logspace(math.log10(lo), math.log10(hi), npts)
    extra = np.abs(S.poles().imag)
    return np.unique(np.concatenate([[0.0], grid, extra[extra > 0]]))


def peak_gain(S: StateSpaceModel, omegas=None, refine: bool = True) -> tuple[float, float]:
    """Grid estimate of ``sup_w sigma_max(G(jw))`` and its frequency.

    Cheap and only a lower bound; the grid always contains the imaginary
    parts of the poles so lightly damped resonances are not skipped.
    """
    if omegas is None:
        omegas = _default_grid(S, 300)
    else:
        extra = np.abs(S.poles().imag)
        omegas = np.unique(np.concatenate([np.asarray(omegas, dtype=float), extra[extra > 0]]))
    sv = sigma_max(S, omegas)
    k = int(np.argmax(sv))
    best, wbest = float(sv[k]), float(omegas[k])
    dinf = float(np.linalg.norm(S.D, 2)) if S.D.size else 0.0
    if dinf > best:
        return dinf, math.inf
    if refine and 0 < k < len(omegas) - 1:
        a, b = omegas[k - 1], omegas[k + 1]
        for _ in range(3):
            probe = np.linspace(a, b, 9)
            vals = sigma_max(S, probe)
            j = int(np.argmax(vals))
            if vals[j] > best:
                best, wbest = float(vals[j]), float(probe[j])
            a, b = probe[max(j - 1, 0)], probe[min(j + 1, 8)]
    return best, wbest


def _hamiltonian(S: StateSpaceModel, gamma: float) -> np.ndarray:
    A, B, C, D = S.A, S.B, S.C, S.D
    g2 = gamma * gamma
    R = D.T @ D - g2 * np.eye(D.shape[1])
    Sm = D @ D.T - g2 * np.eye(D.shape[0])
    Ri = np.linalg.inv(R)
    Si = np.linalg.inv(Sm)
    return np.block([
        [A - B @ Ri @ D.T @ C, -gamma * B @ Ri @ B.T],
        [gamma * C.T @ Si @ C, -A.T + C.T @ D @ Ri @ B.T],
    ])


def _axis_frequencies(S: StateSpaceModel, gamma: float) -> np.ndarray:
    H = _hamiltonian(S, gamma)
    lam = eigenvalues(H).values
    scale = np.maximum(1.0, np.abs(lam))
    hits = np.abs(lam.real) <= AXIS_TOL * scale + 1e-13 * np.linalg.norm(H, 1)
    w = np.abs(lam.imag[hits])
    return np.unique(np.round(w, 12))


def hinf_norm(S: StateSpaceModel, tol: float = 1e-6, omega_range=None, npts: int = 2000) -> float:
    """H-infinity norm by Hamiltonian bisection.

    A dense frequency sweep supplies a certified lower bound and the first
    bracket ``[sweep, 2 sweep + 1]``.  At each trial level the Hamiltonian's
    imaginary-axis eigenvalues are confirmed by evaluating the response at
    those frequencies, which also lifts the lower bound.  Returns
    ``math.inf`` for a model whose state matrix is not Hurwitz.
    """
    dnorm = float(np.linalg.norm(S.D, 2)) if S.D.size else 0.0
    if S.nstates == 0:
        return dnorm
    if not is_hurwitz(S):
        return math.inf
    if S.ninputs == 0 or S.noutputs == 0:
        return 0.0
    grid = _default_grid(S, npts, omega_range)
    lo = max(float(np.max(sigma_max(S, grid))), dnorm)
    if lo == 0.0:
        return 0.0
    hi = 2.0 * lo + 1.0
    while True:
        w = _axis_frequencies(S, hi)
        if w.size == 0 or float(np.max(sigma_max(S, w))) < hi * (1 - 1e-9):
            break
        lo, hi = hi, 2.0 * hi
    while hi - lo > tol * lo:
        gamma = 0.5 * (lo + hi)
        w = _axis_frequencies(S, gamma)
        crossing = False
        if w.size:
            probes = w if w.size == 1 else np.concatenate([w, 0.5 * (w[1:] + w[:-1])])
            vals = sigma_max(S, probes)
            if float(np.max(vals)) >= gamma * (1 - 1e-9):
                crossing = True
                lo = max(gamma, float(np.max(vals)))
        if not crossing:
            hi = gamma
        if lo > hi:
            hi = lo * (1 + tol)
    return 0.5 * (lo + hi)


def balanced_truncation(S: StateSpaceModel, order: int | None = None, tol: float = 1e-9) -> StateSpaceModel:
    """Square-root balanced truncation of a stable model.

    Keeps ``order`` states, or all Hankel singular values above
    ``tol * hsv[0]`` when ``order`` is None.
    """
    if not is_hurwitz(S):
        raise ValueError("balanced truncation needs a stable model")
    Wc = sla.solve_continuous_lyapunov(S.A, -S.B @ S.B.T)
    Wo = sla.solve_continuous_lyapunov(S.A.T, -S.C.T @ S.C)

    def sqrt_factor(W):
        w, V = np.linalg.eigh(0.5 * (W + W.T))
        return V * np.sqrt(np.clip(w, 0.0, None))

    Lc, Lo = sqrt_factor(Wc), sqrt_factor(Wo)
    U, hsv, Vt = np.linalg.svd(Lo.T @ Lc)
    if order is None:
        order = int(np.sum(hsv > tol * hsv[0])) if hsv.size and hsv[0] > 0 else 0
    order = min(order, int(np.sum(hsv > 0)))
    if order == 0:
        return static_gain(S.D, S.input_labels, S.output_labels)
    s = hsv[:order] ** -0.5
    T = Lc @ Vt[:order].T * s
    Ti = (s[:, None] * U[:, :order].T) @ Lo.T
    return StateSpaceModel(Ti @ S.A @ T, Ti @ S.B, S.C @ T, S.D, S.input_labels, S.output_labels)
