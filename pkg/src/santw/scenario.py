"""Scenario files: validation, execution and metric comparison.

A scenario is a JSON object with ``schema_version`` (currently 1) and the
sections ``plant``, ``controller``, ``loop``, ``simulation`` and
``synthesis``.  Running one designs the compensator (unless the method is
``none``), simulates the nominal and compensated loops with identical
inputs and writes

* ``design.json``: the synthesized compensator and design data,
* ``trace_nominal.csv`` / ``trace_compensated.csv``,
* ``metrics.json``: deterministic metrics of both runs,
* ``state_error.svg``, ``input.svg``, ``tracking.svg``,
* ``run.json``: wall-clock timing (the only non-deterministic output).

Failures write ``diagnostic.json`` and raise :class:`RunFailure`.
"""
from __future__ import annotations

import json
import math
import time
import traceback
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import examples, vsc
from .hinf import (
    CompensatorStructure,
    SynthesisOptions,
    build_isantw_plant,
    build_oantw_plant,
    synth_fixed_structure,
    synth_full_matrix,
)
from .lmi import Algorithm1Options, algorithm1_dynamic, algorithm1_static
from .lti import StateSpaceModel, ss, tf
from .simulate import Constant, LoopConfig, SaturationSpec, Signal, metrics, simulate
from .svgplot import Series, line_plot

__all__ = [
    "SCHEMA_VERSION",
    "METHODS",
    "ScenarioError",
    "RunFailure",
    "Scenario",
    "load_scenario",
    "bundled_scenarios",
    "run_scenario",
    "compare_metrics",
    "format_comparison",
]

SCHEMA_VERSION = 1
METHODS = ("freq-oantw", "static-lmi", "dynamic-lmi", "full-matrix", "fixed-structure", "none")

_REQUIRED = ("id", "plant", "controller", "synthesis")
_METHOD_FIELDS = {
    "freq-oantw": ("weights.W1", "weights.W2", "order"),
    "static-lmi": ("alpha", "beta"),
    "dynamic-lmi": ("alpha", "beta"),
    "fixed-structure": ("weights.Wu", "weights.Wy", "order"),
    "full-matrix": ("weights.Wu", "weights.Wy", "order"),
    "none": (),
}


class ScenarioError(ValueError):
    """Invalid scenario; ``field`` names the offending entry."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class RunFailure(RuntimeError):
    """Synthesis or simulation failed; ``diagnostic`` is the written file."""

    def __init__(self, message: str, diagnostic: Path, stage: str):
        super().__init__(message)
        self.diagnostic = diagnostic
        self.stage = stage


def _get(d: dict, path: str):
    cur = d
    for key in path.split("."):
        if not isinstance(cur, dict) or key not in cur:
            return None
        cur = cur[key]
    return cur


@dataclass
class Scenario:
    data: dict
    source: str | None = None

    @property
    def id(self) -> str:
        return self.data["id"]

    @property
    def method(self) -> str:
        return self.data["synthesis"]["method"]

    @property
    def seed(self) -> int:
        return int(self.data.get("seed", 0))

    @property
    def is_converter(self) -> bool:
        return self.data["plant"].get("type") == "vsc"


def validate(data) -> Scenario:
    """Check the schema version, the required sections and method fields."""
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    if "schema_version" not in data:
        raise ScenarioError("missing required field 'schema_version'", "schema_version")
    if data["schema_version"] != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema_version {data['schema_version']!r}, expected {SCHEMA_VERSION}",
                            "schema_version")
    for key in _REQUIRED:
        if key not in data:
            raise ScenarioError(f"missing required field {key!r}", key)
    method = _get(data, "synthesis.method")
    if method is None:
        raise ScenarioError("missing required field 'synthesis.method'", "synthesis.method")
    if method not in METHODS:
        raise ScenarioError(f"unknown synthesis method {method!r}; expected one of {', '.join(METHODS)}",
                            "synthesis.method")
    for f in _METHOD_FIELDS[method]:
        if _get(data["synthesis"], f) is None:
            raise ScenarioError(f"missing required field 'synthesis.{f}' for method {method}", f"synthesis.{f}")
    ptype = data["plant"].get("type")
    if ptype not in ("benchmark", "state_space", "vsc"):
        raise ScenarioError(f"unknown plant type {ptype!r}", "plant.type")
    if ptype == "state_space":
        for k in ("A", "B"):
            if k not in data["plant"]:
                raise ScenarioError(f"missing required field 'plant.{k}'", f"plant.{k}")
    if ptype == "vsc":
        if method not in ("fixed-structure", "none"):
            raise ScenarioError("converter scenarios support the fixed-structure and none methods",
                                "synthesis.method")
        if "fault" not in data:
            raise ScenarioError("missing required field 'fault'", "fault")
    data = dict(data)
    data.setdefault("seed", 0)
    return Scenario(data)


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file (bundled names are accepted too)."""
    p = Path(path)
    if not p.exists():
        bundled = bundled_scenarios()
        name = p.stem if p.suffix == ".json" else p.name
        if name not in bundled:
            raise ScenarioError(f"scenario file {path} not found")
        p = bundled[name]
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{p}: invalid JSON ({exc})") from exc
    scn = validate(data)
    scn.source = str(p)
    return scn


def bundled_scenarios() -> dict[str, Path]:
    root = resources.files("santw") / "scenarios"
    return {Path(str(f)).stem: Path(str(f)) for f in sorted(root.iterdir(), key=lambda f: f.name)
            if f.name.endswith(".json")}


# ---------------------------------------------------------------------------
# Builders


def _weight(spec):
    if isinstance(spec, (int, float)):
        return float(spec)
    if isinstance(spec, dict) and "num" in spec and "den" in spec:
        return tf(spec["num"], spec["den"])
    raise ScenarioError(f"weight must be a number or {{num, den}}, got {spec!r}")


def _options(d: dict | None, default: SynthesisOptions | None = None) -> SynthesisOptions | None:
    if d is None:
        return default
    known = SynthesisOptions.__dataclass_fields__
    bad = set(d) - set(known)
    if bad:
        raise ScenarioError(f"unknown synthesis options {sorted(bad)}", "synthesis.options")
    kw = dict(d)
    if "omega_range" in kw:
        kw["omega_range"] = tuple(kw["omega_range"])
    return SynthesisOptions(**kw)


def _sat(d) -> SaturationSpec | None:
    if d is None:
        return None
    return SaturationSpec.from_dict(d)


def _signal(d):
    if d is None:
        return None
    if isinstance(d, dict):
        return Signal.from_dict(d)
    return Constant(d)


def _plant(data) -> StateSpaceModel:
    spec = data["plant"]
    if spec["type"] == "benchmark":
        return examples.bench_plant()
    A = np.atleast_2d(np.asarray(spec["A"], float))
    B = np.atleast_2d(np.asarray(spec["B"], float))
    C = np.asarray(spec.get("C", np.eye(A.shape[0])), float)
    D = np.asarray(spec.get("D", np.zeros((C.shape[0], B.shape[1]))), float)
    return ss(A, B, C, D)


def _controller(data, plant):
    """Nominal controller and the tracking matrix it implies (or None)."""
    spec = data["controller"]
    kind = spec.get("type")
    if kind == "pid":
        for k in ("kp", "ki", "kd", "tau"):
            if k not in spec:
                raise ScenarioError(f"missing required field 'controller.{k}'", f"controller.{k}")
        return examples.pid_controller(spec["kp"], spec["ki"], spec["kd"], spec["tau"]), None
    if kind == "mimo_pi":
        if "poles" not in spec:
            raise ScenarioError("missing required field 'controller.poles'", "controller.poles")
        poles = np.array([complex(*p) if isinstance(p, list) else p for p in spec["poles"]])
        return examples.mimo_pi_controller(poles, plant.A, plant.B, spec.get("tracked_state", 1))
    if kind == "state_space":
        return StateSpaceModel.from_dict(spec), None
    raise ScenarioError(f"unknown controller type {kind!r}", "controller.type")


# ---------------------------------------------------------------------------
# Execution


def _design_benchmark(scn: Scenario, plant, K, cfg_kw, seed):
    syn = scn.data["synthesis"]
    method = syn["method"]
    A, B = plant.A, plant.B
    Cs = cfg_kw.get("sat_matrix")
    Cs = np.eye(A.shape[0]) if Cs is None else np.atleast_2d(np.asarray(Cs, float))
    G = ss(A, B, Cs, np.zeros((Cs.shape[0], B.shape[1])))
    if method == "none":
        return None, {"method": "none"}
    if method in ("static-lmi", "dynamic-lmi"):
        if Cs.shape != A.shape or not np.allclose(Cs, np.eye(A.shape[0])):
            raise ScenarioError("LMI methods need the whole state to pass the limiter", "loop.sat_matrix")
        alg = dict(syn.get("algorithm", {}))
        if "qc_scale" in alg:
            alg["qc_scale"] = tuple(alg["qc_scale"])
        opts = Algorithm1Options(**{**alg, "seed": seed})
        g = float(syn.get("gamma_uc", 1.0))
        if method == "static-lmi":
            d = algorithm1_static(A, B, syn["alpha"], syn["beta"], g, options=opts)
        else:
            kw = {}
            if "h" in syn:
                kw["h"] = [tuple(pair) for pair in syn["h"]]
            if "pole_radius" in syn:
                kw["pole_radius"] = syn["pole_radius"]
            d = algorithm1_dynamic(A, B, syn["alpha"], syn["beta"], g, options=opts, **kw)
        return {"state_antiwindup": d}, {"method": method, "design": d.to_dict(),
                                         "summary": {"gamma_xhat": d.gamma_xhat}}
    w = syn["weights"]
    opts = _options(syn.get("options"))
    if method == "freq-oantw":
        P = build_oantw_plant(G, _weight(w["W1"]), _weight(w["W2"]))
        st = CompensatorStructure.full(P.n_meas, P.n_ctrl, int(syn["order"]))
        r = synth_fixed_structure(P, st, seed=seed, options=opts)
        return {"state_antiwindup": r.compensator}, {"method": method, "design": r.to_dict(),
                                                     "summary": {"norm": r.norm}}
    P = build_isantw_plant(G, K, _weight(w["Wu"]), _weight(w["Wy"]))
    ns, m, ne = Cs.shape[0], B.shape[1], K.ninputs
    st = CompensatorStructure.isantw_diagonal(ns, m, ne, int(syn["order"]),
                                              per_channel=bool(syn.get("per_channel", True)))
    r = synth_fixed_structure(P, st, seed=seed, options=opts)
    summary = {"norm": r.norm}
    out = {"method": method, "design": r.to_dict(), "summary": summary}
    if method == "full-matrix":
        summary["diagonal_norm"] = r.norm
        fo = _options(syn.get("full_options"), opts)
        rf = synth_full_matrix(P, seed=seed, options=fo, warm_start=r)
        summary["norm"] = rf.norm
        out["design"] = rf.to_dict()
        out["diagonal_design"] = r.to_dict()
        r = rf
    return {"joint_antiwindup": r.compensator}, out


def _run_benchmark(scn: Scenario, seed):
    d = scn.data
    plant = _plant(d)
    K, Ce = _controller(d, plant)
    loop = d.get("loop", {})
    sim = d.get("simulation", {})
    cfg_kw = dict(
        plant=plant,
        nominal_controller=K,
        state_sat=_sat(loop.get("state_sat")),
        input_sat=_sat(loop.get("input_sat")),
        reference=_signal(loop.get("reference")),
        sat_matrix=loop.get("sat_matrix"),
        tracking_matrix=loop.get("tracking_matrix", None if Ce is None else Ce.tolist()),
        tracked=loop.get("tracked"),
        x0=loop.get("x0"),
        horizon=float(sim.get("horizon", 10.0)),
        step=float(sim.get("step", 1e-3)),
    )
    stage = "synthesis"
    try:
        comp, design = _design_benchmark(scn, plant, K, cfg_kw, seed)
        stage = "simulation"
        tn = simulate(LoopConfig(**cfg_kw))
        tc = simulate(LoopConfig(**cfg_kw, **(comp or {}))) if comp else tn
    except ScenarioError:
        raise
    except Exception as exc:
        exc.stage = stage
        raise
    mn, mc = metrics(tn), metrics(tc)
    extra = {}
    if cfg_kw["input_sat"] is not None:
        b = np.abs(np.concatenate([cfg_kw["input_sat"].lower, cfg_kw["input_sat"].upper]))
        extra["input_bound"] = float(np.max(b[np.isfinite(b)]))
    return design, tn, tc, mn.to_dict(), mc.to_dict(), extra


def _run_converter(scn: Scenario, seed):
    d = scn.data
    p = vsc.VscParams.from_dict(d["plant"].get("params", {}))
    cspec = {k: v for k, v in d["controller"].items() if k != "type"}
    nominal = vsc.design_nominal_controller(p, **cspec)
    op = d.get("operating", {})
    P_ref = float(op.get("P_ref", 20e3))
    Q_ref = float(op.get("Q_ref", 0.0))
    x_op, _ = vsc.operating_point(p, P_ref, Q_ref)
    i_mag = float(np.hypot(*x_op[list(vsc.GRID_CURRENT)]))
    lim = d.get("limits", {})
    current_limit = lim.get("current_limit")
    if current_limit is None and lim.get("current_limit_factor") is not None:
        current_limit = float(lim["current_limit_factor"]) * i_mag
    fault = vsc.FaultScenario.from_dict(d["fault"])
    sim = d.get("simulation", {})
    loop_kw = dict(P_ref=P_ref, Q_ref=Q_ref, step_time=op.get("step_time"),
                   P_initial=float(op.get("P_initial", 0.0)), current_limit=current_limit,
                   modulation_limit=lim.get("modulation_limit", 1.0),
                   horizon=float(sim.get("horizon", 0.3)), step=float(sim.get("step", 1e-5)))
    syn = d["synthesis"]
    stage = "synthesis"
    try:
        design = None
        info = {"method": syn["method"], "nominal_controller": nominal.to_dict(),
                "current_limit": current_limit, "operating_current": i_mag}
        if syn["method"] == "fixed-structure":
            w = syn["weights"]
            design = vsc.design_isantw(
                p, nominal, _weight(w["Wu"]), _weight(w["Wy"]), order=int(syn["order"]),
                current_base=float(syn.get("current_base") or i_mag),
                state_gain=float(syn.get("state_gain", 3.0)),
                pole_limits=tuple(syn.get("pole_limits", (200.0, 1e4))), seed=seed,
                options=_options(syn.get("options")), static_options=_options(syn.get("static_options")),
                backcalc_rate=float(syn.get("backcalc_rate", 50.0)))
            info["design"] = design.to_dict()
            info["summary"] = {"norm": design.synthesis.norm, "static_norm": design.static.norm}
        stage = "simulation"
        tn, mn = vsc.run_fault_study(fault, p, nominal, **loop_kw)
        tc, mc = vsc.run_fault_study(fault, p, nominal, design=design, **loop_kw) if design else (tn, mn)
    except Exception as exc:
        exc.stage = stage
        raise
    extra = {"input_bound": loop_kw["modulation_limit"], "current_limit": current_limit}
    return info, tn, tc, mn.to_dict(), mc.to_dict(), extra


def _clean(obj):
    """JSON-safe copy: non-finite floats become None, arrays become lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _plots(out: Path, tn, tc, tracked) -> None:
    def chan(arr, label, t, style):
        return [Series(t, arr[:, j], f"{label} {j + 1}", style) for j in range(arr.shape[1])]

    line_plot(out / "state_error.svg",
              chan(tn.state_error, "nominal", tn.t, 0) + chan(tc.state_error, "compensated", tc.t, 1),
              title="limited signal error xhat - x", xlabel="t [s]")
    line_plot(out / "input.svg", chan(tn.u, "nominal", tn.t, 0) + chan(tc.u, "compensated", tc.t, 1),
              title="plant input u", xlabel="t [s]")
    idx = list(tracked) if tracked is not None else list(range(tn.r.shape[1]))
    line_plot(out / "tracking.svg",
              chan(tn.r[:, idx], "r", tn.t, 2) + chan(tn.y_meas[:, idx], "y nominal", tn.t, 0)
              + chan(tc.y_meas[:, idx], "y compensated", tc.t, 1),
              title="output y vs reference r", xlabel="t [s]")


@dataclass
class RunResult:
    out_dir: Path
    metrics: dict
    design: dict
    elapsed: float
    files: list = field(default_factory=list)


def run_scenario(scn: Scenario, out_dir, seed: int | None = None) -> RunResult:
    """Design, simulate and write all artifacts of one scenario."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = scn.seed if seed is None else int(seed)
    t0 = time.perf_counter()
    try:
        runner = _run_converter if scn.is_converter else _run_benchmark
        design, tn, tc, mn, mc, extra = runner(scn, seed)
    except ScenarioError:
        raise
    except Exception as exc:
        stage = getattr(exc, "stage", "setup")
        diag = out / "diagnostic.json"
        _dump(diag, {"scenario": scn.id, "seed": seed, "stage": stage, "error": type(exc).__name__,
                     "message": str(exc), "traceback": traceback.format_exc()})
        raise RunFailure(f"{stage} failed: {exc}", diag, stage) from exc
    elapsed = time.perf_counter() - t0
    design = dict(design, scenario=scn.id, seed=seed)
    report = {
        "schema_version": SCHEMA_VERSION,
        "scenario": scn.id,
        "method": scn.method,
        "seed": seed,
        "nominal": mn,
        "compensated": mc,
        "design": design.get("summary", {}),
        **extra,
    }
    _dump(out / "design.json", design)
    tn.to_csv(out / "trace_nominal.csv")
    tc.to_csv(out / "trace_compensated.csv")
    _dump(out / "metrics.json", report)
    _plots(out, tn, tc, tn.meta.get("tracked"))
    budget = scn.data.get("budget_seconds")
    _dump(out / "run.json", {"scenario": scn.id, "elapsed_seconds": elapsed, "budget_seconds": budget,
                             "within_budget": None if budget is None else elapsed <= budget})
    files = sorted(f.name for f in out.iterdir())
    return RunResult(out, _clean(report), _clean(design), elapsed, files)


# ---------------------------------------------------------------------------
# Comparison


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, list):
            for j, item in enumerate(v):
                out[f"{key}[{j}]"] = item
        else:
            out[key] = v
    return out


_IDENTITY = ("schema_version", "scenario", "method", "seed")


def compare_metrics(a: dict, b: dict) -> list[dict]:
    """Per-metric deltas ``b - a`` with percent change relative to ``a``.

    Raises
    ------
    ScenarioError
        On schema mismatch or when the two files carry different metrics.
    """
    for name, m in (("first", a), ("second", b)):
        if "schema_version" not in m:
            raise ScenarioError(f"{name} metrics file has no schema_version", "schema_version")
    if a["schema_version"] != b["schema_version"]:
        raise ScenarioError(f"schema mismatch: {a['schema_version']} vs {b['schema_version']}", "schema_version")
    fa = {k: v for k, v in _flatten(a).items() if k not in _IDENTITY}
    fb = {k: v for k, v in _flatten(b).items() if k not in _IDENTITY}
    if set(fa) != set(fb):
        only_a = sorted(set(fa) - set(fb))
        only_b = sorted(set(fb) - set(fa))
        raise ScenarioError(f"metric sets differ: only in first {only_a}, only in second {only_b}")
    rows = []
    for k in sorted(fa):
        va, vb = fa[k], fb[k]
        numeric = all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in (va, vb))
        delta = vb - va if numeric else None
        pct = None
        if numeric and va != 0:
            pct = 100.0 * delta / abs(va)
        elif numeric and delta == 0:
            pct = 0.0
        rows.append({"metric": k, "a": va, "b": vb, "delta": delta, "percent": pct})
    return rows


def format_comparison(rows: list[dict]) -> str:
    def fmt(v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return f"{v:.6g}"
        return str(v)

    width = max([len(r["metric"]) for r in rows] + [6])
    lines = [f"{'metric':<{width}}  {'a':>12}  {'b':>12}  {'delta':>12}  {'%':>9}"]
    for r in rows:
        pct = "-" if r["percent"] is None else f"{r['percent']:+.2f}"
        lines.append(f"{r['metric']:<{width}}  {fmt(r['a']):>12}  {fmt(r['b']):>12}  {fmt(r['delta']):>12}  {pct:>9}")
    return "\n".join(lines)
