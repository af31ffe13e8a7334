import json
from pathlib import Path

import pytest

from germlab.core.pipeline_manager import PipelineManager, one_based
from germlab.germlab import emit
from germlab.utils.manifest import parse_manifest

EXAMPLES_DIR = Path(__file__).parent.parent / "docs" / "examples"

ELLIPTIC_PAIR = {
    "p": 1,
    "tau1": [{"terms": [{"exp": [0, 1], "re": "1/4"}]}, {"terms": [{"exp": [1, 0], "re": 4}]}],
    "tau2": [{"terms": [{"exp": [0, 1], "re": 1}]}, {"terms": [{"exp": [1, 0], "re": 1}]}],
    "rho": [[0, "1/2"], [2, 0]],
    "normal_form": True,
}


@pytest.fixture
def run(isolated_settings):
    def run(data, **kwargs):
        manifest = parse_manifest(text=json.dumps(data), manager=isolated_settings, environ={})
        return PipelineManager(**kwargs).run(manifest), manifest

    return run


def _example(name):
    return json.loads((EXAMPLES_DIR / name).read_text(encoding="utf-8"))


def test_one_based():
    assert one_based({"i": 0, "j": 2, "Q": [1, 0], "flag": True}) == {"i": 1, "j": 3, "Q": [1, 0], "flag": True}


def test_resonance_task(run):
    data = {"task": "resonance", "spectrum": {"mu": [[2, "1/2"]]}, "queries": [{"Q": [2, 1], "j": 1}], "k_max": 2}
    report, _ = run(data)
    assert report.exit_code == 0
    r = report.results
    assert r["queries"][0]["resonant"]
    assert r["queries"][0]["monomial"] == "x1^2 x2·e1"
    assert r["res_ideal"]["generators"] == [[1, 1]]
    assert r["centralizer_condition"]["holds"]
    assert r["omega"]["verdict"] == "converging-trend"


def test_linearize_obstruction(run):
    messages = []
    report, _ = run(_example("linearize_obstruction.json"), status_callback=messages.append)
    assert report.status == "negative"
    assert report.exit_code == 3
    assert report.witness == {"Q": [2, 1], "j": 1, "monomial": "x1^2 x2·e1", "i": 1, "value": "1"}
    assert report.results["completed_degree"] == 2
    assert messages[0].startswith("linearize")


def test_linearize_on_res_ideal(run):
    data = dict(_example("linearize_obstruction.json"), res_ideal=True, diagnostics=False)
    report, _ = run(data)
    assert report.exit_code == 0
    assert report.results["ideal"]["display"] == "(x1 x2)"
    assert report.results["verification"]["passed"]


def test_verify_witness(run):
    report, manifest = run(_example("linearize_obstruction.json"))
    check = PipelineManager().verify_witness(manifest, report)
    assert check == {"verified": True, "reproduced": True, "checks": {"resonant": True}}


def test_diagnose_task(run):
    report, _ = run(_example("diagnose_2_half.json"))
    assert report.exit_code == 0
    r = report.results
    assert [e["value"] for e in r["omega"]["entries"]] == pytest.approx([0.25] * 3)
    assert r["res_ideal"]["display"] == "(x1 x2)"
    assert not r["unit_circle_hint"]["applies"]


def test_budget_exceeded(run):
    data = {"task": "diagnose", "spectrum": {"mu": [[2, "1/2"]]}, "budgets": {"max_omega_k": 5, "max_enumeration_degree": 16}}
    report, _ = run(data)
    assert report.exit_code == 4
    assert report.status == "budget_exceeded"
    assert report.error["details"]["largest_completed_k"] == 4


def test_straighten_task(run):
    data = {"task": "straighten", "truncation": 4, "involutions": [{"B": [[1]]}, {"B": [[["3/5", "4/5"]]]}]}
    report, _ = run(data)
    assert report.exit_code == 0
    assert report.results["linearization_status"] == "linearized"
    assert report.results["report"] == {"involution": [True, True], "anti_linear": [True, True]}


def test_straighten_rejects_non_involution(run):
    data = {"task": "straighten", "truncation": 3, "involutions": [{"B": [[2]]}, {"B": [[1]]}]}
    report, _ = run(data)
    assert report.exit_code == 3


def test_prepare_task(run):
    report, _ = run({"task": "prepare", "truncation": 3, "quadric": {"gamma": ["1/4"]}})
    assert report.exit_code == 0
    section = report.results["prepare"]
    assert section["gamma"] == ["1/4"]
    assert section["bishop"]["class"] == "elliptic"


def test_prepare_cond1_violation(run):
    report, _ = run({"task": "prepare", "truncation": 3, "quadric": {"gamma": ["1/2"]}})
    assert report.exit_code == 3
    assert report.error["error"] == "Cond1Violated"


def test_tau_linearize_normal_pair(run):
    report, _ = run({"task": "tau-linearize", "truncation": 4, "pair": ELLIPTIC_PAIR, "ideal": [[1, 1]]})
    assert report.exit_code == 0
    r = report.results
    assert r["coordinates"] == "given"
    assert r["linearizable"] == "yes"
    assert r["ideal"]["display"] == "(ζ1 η1)"
    assert r["ideal_compatibility"]["compatible"]


def test_quadric_equivalence_normal_pair(run):
    report, _ = run({"task": "quadric-equivalence", "truncation": 4, "pair": ELLIPTIC_PAIR})
    assert report.exit_code == 0
    assert report.results["equivalence"] == "biholomorphic"


def test_busy_manager_refuses(isolated_settings):
    manager = PipelineManager()
    manager.is_processing = True
    manifest = parse_manifest(
        text=json.dumps({"task": "resonance", "spectrum": {"mu": [[2, 3]]}}), manager=isolated_settings, environ={}
    )
    report = manager.run(manifest)
    assert report.status == "error"
    assert report.error["error"] == "Busy"


def test_progress_is_reported(run):
    seen = []
    run(_example("diagnose_2_half.json"), progress_callback=seen.append)
    assert seen[0] == 0.0
    assert seen[-1] == 1.0


def test_emit_formats(run):
    report, _ = run(_example("linearize_obstruction.json"))
    data = json.loads(emit(report, "json").decode("utf-8"))
    assert list(data) == sorted(data)
    assert data["witness"]["monomial"] == "x1^2 x2·e1"
    assert emit(report, "text").decode("utf-8").startswith("germlab ")
    with pytest.raises(ValueError):
        emit(report, "xml")
