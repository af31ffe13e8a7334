import json

import pytest

from germlab.core.coefficients import EXACT
from germlab.core.errors import ManifestError
from germlab.core.resonance import MonomialIdeal
from germlab.utils.manifest import json_pointer, parse_manifest

PLANTED_MAPS = [
    [
        {"terms": [{"exp": [1, 0], "re": 2}, {"exp": [2, 1], "re": 1}]},
        {"terms": [{"exp": [0, 1], "re": "1/2"}]},
    ]
]


def _parse(data, manager, **kwargs):
    return parse_manifest(text=json.dumps(data), manager=manager, environ={}, **kwargs)


def _pointers(info):
    return [pointer for pointer, _ in info.value.errors]


def test_json_pointer_escaping():
    assert json_pointer(["maps", 0, "a/b~c"]) == "/maps/0/a~1b~0c"
    assert json_pointer([]) == ""


def test_invalid_json(isolated_settings):
    with pytest.raises(ManifestError) as info:
        parse_manifest(text="{", manager=isolated_settings, environ={})
    assert info.value.exit_code == 2


def test_schema_errors_have_pointers(isolated_settings):
    with pytest.raises(ManifestError) as info:
        _parse({"task": "linearize", "truncation": 0, "maps": PLANTED_MAPS}, isolated_settings)
    assert _pointers(info) == ["/truncation"]
    with pytest.raises(ManifestError) as info:
        _parse({"task": "fly"}, isolated_settings)
    assert _pointers(info) == ["/task"]


def test_linearize_manifest(isolated_settings):
    m = _parse({"task": "linearize", "truncation": 4, "maps": PLANTED_MAPS, "ideal": [[1, 1]]}, isolated_settings)
    assert m.task == "linearize"
    assert m.truncation == 4
    assert m.backend.name == "exact"
    F = m.payload["maps"][0]
    assert F[1].coefficient((0, 1)) == EXACT.make("1/2")
    assert m.payload["ideal"] == MonomialIdeal(2, [(1, 1)])
    assert len(m.digest) == 64


def test_digest_ignores_key_order(isolated_settings):
    a = _parse({"task": "linearize", "truncation": 4, "maps": PLANTED_MAPS}, isolated_settings)
    b = parse_manifest(
        text=json.dumps({"maps": PLANTED_MAPS, "truncation": 4, "task": "linearize"}, indent=2),
        manager=isolated_settings,
        environ={},
    )
    assert a.digest == b.digest


def test_ideal_length_mismatch(isolated_settings):
    with pytest.raises(ManifestError) as info:
        _parse({"task": "linearize", "maps": PLANTED_MAPS, "ideal": [[1, 1, 0]]}, isolated_settings)
    pointer, message = info.value.errors[0]
    assert pointer == "/ideal/0"
    assert "/maps/0" in message


def test_all_errors_are_collected(isolated_settings):
    data = {
        "task": "resonance",
        "spectrum": {"mu": [[2, "1/2"]]},
        "queries": [{"Q": [1, 1, 1], "j": 1}, {"Q": [1, 1], "j": 3}],
    }
    with pytest.raises(ManifestError) as info:
        _parse(data, isolated_settings)
    assert _pointers(info) == ["/queries/0/Q", "/queries/1/j"]


def test_task_needs_exactly_one_input(isolated_settings):
    with pytest.raises(ManifestError) as info:
        _parse({"task": "linearize"}, isolated_settings)
    assert _pointers(info) == [""]
    with pytest.raises(ManifestError) as info:
        _parse({"task": "prepare", "quadric": {"gamma": ["1/4"]}, "manifold": {"p": 1, "n": 2, "G": {"terms": []}}}, isolated_settings)
    assert len(info.value.errors) == 1


def test_exact_oracle_needs_exact_backend(isolated_settings):
    data = {"task": "resonance", "backend": "float", "spectrum": {"mu": [[2, 0.5]]}, "oracle": {"mode": "exact"}}
    with pytest.raises(ManifestError) as info:
        _parse(data, isolated_settings)
    assert _pointers(info) == ["/oracle/mode"]


def test_zero_eigenvalue(isolated_settings):
    with pytest.raises(ManifestError) as info:
        _parse({"task": "resonance", "spectrum": {"mu": [[2, 0]]}}, isolated_settings)
    assert _pointers(info) == ["/spectrum/mu/0/1"]


def test_settings_layering(isolated_settings):
    data = {"task": "diagnose", "spectrum": {"mu": [[2, "1/2"]]}, "settings": {"threads": 2}, "budgets": {"max_omega_k": 3}}
    m = parse_manifest(text=json.dumps(data), manager=isolated_settings, environ={"GERMLAB_THREADS": "5"})
    assert m.settings.threads == 5
    assert m.settings.max_omega_k == 3
    m = parse_manifest(text=json.dumps(data), manager=isolated_settings, environ={}, flags={"threads": 7})
    assert m.settings.threads == 7


def test_quadric_manifest(isolated_settings):
    m = _parse({"task": "involutions", "backend": "float", "truncation": 3, "quadric": {"gamma": ["3/5"]}}, isolated_settings)
    manifold = m.payload["manifold"]
    assert (manifold.p, manifold.n, manifold.nvars) == (1, 2, 2)
    assert m.payload["n"] == 2


def test_manifest_from_file(isolated_settings, write_manifest):
    path = write_manifest({"task": "resonance", "spectrum": {"mu": [[2, "1/2"]]}})
    m = parse_manifest(path, manager=isolated_settings, environ={})
    assert m.payload["mu"] == [[EXACT.make(2), EXACT.make("1/2")]]
