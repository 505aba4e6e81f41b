import json

import pytest

from santw.cli import main
from santw.scenario import (
    RunFailure,
    ScenarioError,
    bundled_scenarios,
    compare_metrics,
    load_scenario,
    run_scenario,
    validate,
)

QUICK = {
    "schema_version": 1,
    "id": "quick_oantw",
    "seed": 0,
    "plant": {"type": "benchmark"},
    "controller": {"type": "pid", "kp": 1.0, "ki": 1.5, "kd": 0.1, "tau": 0.1},
    "loop": {"reference": [1.0], "tracking_matrix": [[0, 1]],
             "state_sat": {"lower": [None, None], "upper": [1.0, 1.0]}},
    "simulation": {"horizon": 4.0, "step": 0.002},
    "synthesis": {"method": "freq-oantw", "weights": {"W1": 10.0, "W2": 0.01}, "order": 0,
                  "options": {"starts": 1, "max_evals": 150}},
}


def write(tmp_path, data, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


@pytest.fixture(scope="module")
def quick_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("quick")
    return run_scenario(validate(QUICK), out)


def test_list_scenarios(capsys):
    assert main(["list-scenarios"]) == 0
    text = capsys.readouterr().out
    for name in ("example1a", "example1b", "example1c", "example1d_fixed", "example1d_full", "example2_fault"):
        assert name in text


def test_bundled_scenarios_validate():
    for name in bundled_scenarios():
        assert load_scenario(name).id == name


def test_quick_run_artifacts(quick_run):
    files = set(quick_run.files)
    assert {"design.json", "metrics.json", "run.json", "trace_nominal.csv", "trace_compensated.csv",
            "state_error.svg", "input.svg", "tracking.svg"} <= files
    m = quick_run.metrics
    assert m["schema_version"] == 1 and m["method"] == "freq-oantw"
    assert m["compensated"]["sat_error_energy"] < m["nominal"]["sat_error_energy"]


def test_metrics_byte_identical_on_rerun(tmp_path, quick_run):
    run_scenario(validate(QUICK), tmp_path)
    assert (tmp_path / "metrics.json").read_bytes() == (quick_run.out_dir / "metrics.json").read_bytes()


def test_cli_run_and_compare(tmp_path, capsys, quick_run):
    src = write(tmp_path, QUICK)
    assert main(["run", str(src), "--out", str(tmp_path / "r")]) == 0
    a = tmp_path / "r" / "metrics.json"
    assert main(["compare", str(a), str(quick_run.out_dir / "metrics.json"), "--json"]) == 0
    capsys.readouterr()
    assert main(["compare", str(a), str(a), "--json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert rows and all(r["delta"] == 0 for r in rows)


def test_compare_rejects_different_metric_sets(quick_run):
    a = json.loads((quick_run.out_dir / "metrics.json").read_text())
    b = json.loads(json.dumps(a))
    b["nominal"]["extra_metric"] = 1.0
    with pytest.raises(ScenarioError):
        compare_metrics(a, b)
    b = dict(a, schema_version=2)
    with pytest.raises(ScenarioError):
        compare_metrics(a, b)


def test_compare_reports_deltas(quick_run):
    a = json.loads((quick_run.out_dir / "metrics.json").read_text())
    b = json.loads(json.dumps(a))
    b["nominal"]["peak_u"] = a["nominal"]["peak_u"] + 1.0
    rows = {r["metric"]: r for r in compare_metrics(a, b)}
    assert rows["nominal.peak_u"]["delta"] == pytest.approx(1.0)


def test_missing_plant_is_rejected(tmp_path, capsys):
    bad = {k: v for k, v in QUICK.items() if k != "plant"}
    assert main(["run", str(write(tmp_path, bad))]) == 2
    assert "plant" in capsys.readouterr().err


@pytest.mark.parametrize("mutate, field", [
    (lambda d: d.pop("schema_version"), "schema_version"),
    (lambda d: d["synthesis"].update(method="magic"), "synthesis.method"),
    (lambda d: d["synthesis"]["weights"].pop("W1"), "synthesis.weights.W1"),
])
def test_validation_errors_name_field(mutate, field):
    d = json.loads(json.dumps(QUICK))
    mutate(d)
    with pytest.raises(ScenarioError) as info:
        validate(d)
    assert info.value.field == field


def test_converter_rejects_lmi_methods():
    d = json.loads(json.dumps(load_scenario("example2_fault").data))
    d["synthesis"] = {"method": "static-lmi", "alpha": 0.001, "beta": 3.15}
    with pytest.raises(ScenarioError):
        validate(d)


def test_divergent_run_writes_diagnostic(tmp_path, capsys):
    d = {
        "schema_version": 1, "id": "diverge",
        "plant": {"type": "state_space", "A": [[50.0]], "B": [[1.0]], "C": [[1.0]], "D": [[0.0]]},
        "controller": {"type": "state_space", "A": [], "B": [], "C": [], "D": [[0.0]]},
        "loop": {"x0": [1.0]},
        "simulation": {"horizon": 20.0, "step": 0.01},
        "synthesis": {"method": "none"},
    }
    with pytest.raises(RunFailure) as info:
        run_scenario(validate(d), tmp_path / "a")
    diag = json.loads(info.value.diagnostic.read_text())
    assert diag["scenario"] == "diverge" and diag["error"] == "SimulationError"
    assert main(["run", str(write(tmp_path, d)), "--out", str(tmp_path / "b")]) == 3
    assert "diagnostic.json" in capsys.readouterr().err


@pytest.mark.slow
@pytest.mark.parametrize("name", sorted(bundled_scenarios()))
def test_bundled_scenario_within_budget(tmp_path, name):
    scn = load_scenario(name)
    res = run_scenario(scn, tmp_path)
    run = json.loads((tmp_path / "run.json").read_text())
    print(f"{name}: {res.elapsed:.1f} s of {run['budget_seconds']} s")
    assert run["within_budget"] is True
