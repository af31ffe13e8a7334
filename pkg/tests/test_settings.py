import json

import pytest

from germlab.utils.settings import THREADS_ENV, EngineSettings, SettingsManager


def test_defaults(isolated_settings):
    settings = isolated_settings.engine_settings
    assert settings == EngineSettings()
    assert settings.backend == "exact"
    assert settings.threads == 1


def test_updated_ignores_unknown_keys():
    settings = EngineSettings().updated({"truncation": "8", "colour": "blue", "threads": None})
    assert settings.truncation == 8
    assert settings.threads == 1
    assert not hasattr(settings, "colour")


def test_updated_rejects_bad_values():
    with pytest.raises(ValueError):
        EngineSettings().updated({"threads": "many"})
    with pytest.raises(ValueError):
        EngineSettings().updated({"truncation": True})


def test_save_and_load(settings_dir):
    manager = SettingsManager(settings_dir)
    manager.update(backend="float", max_omega_k=3)
    assert json.loads(manager.settings_file.read_text(encoding="utf-8"))["backend"] == "float"
    reloaded = SettingsManager(settings_dir)
    assert reloaded.engine_settings.backend == "float"
    assert reloaded.engine_settings.max_omega_k == 3


def test_broken_file_falls_back_to_defaults(settings_dir):
    settings_dir.mkdir(parents=True)
    (settings_dir / "settings.json").write_text("{not json", encoding="utf-8")
    assert SettingsManager(settings_dir).engine_settings == EngineSettings()
    (settings_dir / "settings.json").write_text("[1, 2]", encoding="utf-8")
    assert SettingsManager(settings_dir).engine_settings == EngineSettings()


def test_effective_precedence(isolated_settings):
    isolated_settings.update(threads=2, truncation=5)
    manifest = {"threads": 3, "truncation": 7}
    assert isolated_settings.effective(None, {}, manifest).threads == 3
    assert isolated_settings.effective(None, {}, None).truncation == 5
    environ = {THREADS_ENV: "4"}
    assert isolated_settings.effective(None, environ, manifest).threads == 4
    combined = isolated_settings.effective({"threads": 6}, environ, manifest)
    assert combined.threads == 6
    assert combined.truncation == 7


def test_invalid_thread_environment_is_ignored(isolated_settings):
    assert isolated_settings.effective(None, {THREADS_ENV: "x"}).threads == 1
