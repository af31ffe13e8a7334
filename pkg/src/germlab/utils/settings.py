"""
germlab - 設定管理

計算エンジンの既定値の保存・読み込み機能を提供する

優先順位: コマンドライン引数 > 環境変数 > 設定ファイル > 既定値
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional

logger = logging.getLogger(__name__)

THREADS_ENV = "GERMLAB_THREADS"


@dataclass
class EngineSettings:
    """計算エンジンの設定"""
    backend: str = "exact"  # exact, float
    zero_threshold: float = 1e-12
    truncation: int = 6
    max_enumeration_degree: int = 16
    max_omega_k: int = 4
    diagnostics_degree: int = 8
    threads: int = 1
    numeric_epsilon: float = 1e-9
    residual_tolerance: float = 1e-9
    relation_search_bound: int = 6
    log_level: str = "WARNING"

    def updated(self, overrides: Optional[Dict[str, Any]]) -> "EngineSettings":
        """既知のキーだけを上書きした新しい設定を返す (未知のキーは警告して無視)"""
        if not overrides:
            return self
        known = {f.name: f for f in fields(self)}
        values = {}
        for key, value in overrides.items():
            if key not in known:
                logger.warning("未知の設定キーを無視します: %s", key)
                continue
            if value is None:
                continue
            values[key] = _coerce(known[key].type, value, key)
        return replace(self, **values)


def _coerce(kind: Any, value: Any, key: str) -> Any:
    name = kind if isinstance(kind, str) else getattr(kind, "__name__", str(kind))
    try:
        if name == "int":
            if isinstance(value, bool):
                raise ValueError(value)
            return int(value)
        if name == "float":
            return float(value)
        return str(value)
    except (TypeError, ValueError) as e:
        raise ValueError(f"設定 {key} の値が不正です: {value!r}") from e


class SettingsManager:
    """
    設定管理クラス
    """

    def __init__(self, settings_dir: Optional[Path] = None):
        self.settings_dir = Path(settings_dir) if settings_dir else Path.home() / ".germlab"
        self.settings_file = self.settings_dir / "settings.json"

        self.engine_settings = EngineSettings()
        self.load_settings()

    def load_settings(self):
        """設定を読み込み"""
        try:
            if self.settings_file.exists():
                with open(self.settings_file, "r", encoding="utf-8") as f:
                    data = json.load(f)
                if not isinstance(data, dict):
                    raise ValueError("設定ファイルの最上位がオブジェクトではありません")
                self.engine_settings = EngineSettings().updated(data)
        except Exception as e:
            logger.warning("設定の読み込みに失敗しました: %s", e)
            self.engine_settings = EngineSettings()

    def save_settings(self):
        """設定を保存"""
        try:
            self.settings_dir.mkdir(parents=True, exist_ok=True)
            with open(self.settings_file, "w", encoding="utf-8") as f:
                json.dump(asdict(self.engine_settings), f, indent=2, ensure_ascii=False)
        except OSError as e:
            logger.warning("設定の保存に失敗しました: %s", e)

    def update(self, **values: Any):
        """設定を更新して保存"""
        self.engine_settings = self.engine_settings.updated(values)
        self.save_settings()

    def effective(
        self,
        flags: Optional[Dict[str, Any]] = None,
        environ: Optional[Dict[str, str]] = None,
        manifest: Optional[Dict[str, Any]] = None,
    ) -> EngineSettings:
        """
        ファイルの設定にマニフェスト・環境変数・コマンドライン引数を順に重ねた設定を返す

        Args:
            flags: コマンドライン引数による上書き (None の値は無視)
            environ: 環境変数 (省略時は os.environ)
            manifest: マニフェストの "settings" による上書き

        Returns:
            EngineSettings
        """
        environ = os.environ if environ is None else environ
        result = self.engine_settings.updated(manifest)
        threads = environ.get(THREADS_ENV)
        if threads:
            try:
                result = result.updated({"threads": int(threads)})
            except ValueError:
                logger.warning("%s の値が整数ではありません: %r", THREADS_ENV, threads)
        return result.updated(flags)


# グローバル設定管理インスタンス
settings_manager = SettingsManager()
