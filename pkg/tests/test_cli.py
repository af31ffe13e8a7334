import json
from pathlib import Path

import pytest

from germlab import germlab
from germlab.utils.serialization import canonical_json

EXAMPLES_DIR = Path(__file__).parent.parent / "docs" / "examples"
GOLDEN_DIR = Path(__file__).parent / "golden"
GOLDEN_COMPONENT_KEYS = ("pattern", "equations", "t_invariant", "swapped_with")
GOLDEN_BLOCK_KEYS = ("res_ideal", "adjustment", "real_trace", "restricted", "names")


@pytest.fixture(autouse=True)
def isolated_cli(monkeypatch, isolated_settings):
    monkeypatch.setattr("germlab.utils.manifest.settings_manager", isolated_settings)
    monkeypatch.delenv("GERMLAB_THREADS", raising=False)


def _run(tmp_path, manifest, *extra, name="report.json"):
    out = tmp_path / name
    code = germlab.main(["--manifest", str(manifest), "--out", str(out), *extra])
    return code, out


def _load(path):
    report = json.loads(path.read_text(encoding="utf-8"))
    report.pop("timing")
    return report


def test_obstruction_exit_code(tmp_path):
    code, out = _run(tmp_path, EXAMPLES_DIR / "linearize_obstruction.json")
    assert code == 3
    report = _load(out)
    assert report["status"] == "negative"
    assert report["witness"]["monomial"] == "x1^2 x2·e1"
    assert report["task"] == "linearize"


def test_text_output(tmp_path):
    code, out = _run(tmp_path, EXAMPLES_DIR / "linearize_obstruction.json", "--format", "text", name="report.txt")
    assert code == 3
    text = out.read_text(encoding="utf-8")
    assert "x1^2 x2·e1" in text
    assert "status: negative (exit 3)" in text


def test_json_output_is_deterministic(tmp_path):
    _, first = _run(tmp_path, EXAMPLES_DIR / "diagnose_2_half.json", "--threads", "1", name="a.json")
    _, second = _run(tmp_path, EXAMPLES_DIR / "diagnose_2_half.json", "--threads", "3", name="b.json")
    assert _load(first) == _load(second)


def test_schema_error_exit_code(tmp_path, write_manifest):
    manifest = write_manifest({"task": "linearize", "truncation": 0})
    code, out = _run(tmp_path, manifest)
    assert code == 2
    report = _load(out)
    assert report["status"] == "error"
    assert report["error"]["error"] == "ManifestError"


def test_missing_manifest_file(tmp_path):
    code, _ = _run(tmp_path, tmp_path / "nowhere.json")
    assert code == 2


def test_diagnose_succeeds(tmp_path):
    code, out = _run(tmp_path, EXAMPLES_DIR / "diagnose_2_half.json")
    assert code == 0
    assert _load(out)["results"]["res_ideal"]["display"] == "(x1 x2)"


def test_verify_witness_flag(tmp_path):
    code, out = _run(tmp_path, EXAMPLES_DIR / "linearize_obstruction.json", "--verify-witness")
    assert code == 3
    assert _load(out)["results"]["witness_verification"]["verified"]


def test_cutting_variety_matches_golden(tmp_path):
    code, out = _run(tmp_path, EXAMPLES_DIR / "cutting_variety_gamma_3_5.json")
    assert code == 0
    cv = _load(out)["results"]["cutting_variety"]
    block = {key: cv[key] for key in GOLDEN_BLOCK_KEYS}
    for key in ("components", "adjusted_components"):
        block[key] = [{k: c[k] for k in GOLDEN_COMPONENT_KEYS} for c in cv[key]]
    golden = (GOLDEN_DIR / "cutting_variety_gamma_3_5.json").read_bytes()
    assert canonical_json(block).encode("utf-8") == golden
    assert cv["hypotheses"]["all_hyperbolic"]
    assert cv["hypotheses"]["distinct_eigenvalues"]
