"""
germlab - マニフェストの読み込み

タスクの入力 JSON をスキーマで検査し、級数・写像・行列などを構築する。
エラーは JSON Pointer 付きで全て集めてから ManifestError として送出する。
"""

import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

from jsonschema import Draft7Validator

from ..core.coefficients import CoefficientBackend, get_backend
from ..core.errors import GermlabError, ManifestError
from ..core.series import GermMap
from .serialization import (
    coefficient_from_json,
    digest,
    germ_from_json,
    ideal_from_json,
    matrix_from_json,
    series_from_json,
)
from .settings import EngineSettings, SettingsManager, settings_manager

logger = logging.getLogger(__name__)

TASKS = (
    "resonance",
    "linearize",
    "straighten",
    "prepare",
    "involutions",
    "tau-linearize",
    "quadric-equivalence",
    "cutting-variety",
    "diagnose",
)

# 各タスクが必要とする入力 (いずれか1つ)
TASK_INPUTS = {
    "resonance": ("spectrum",),
    "diagnose": ("spectrum",),
    "linearize": ("maps",),
    "straighten": ("involutions",),
    "prepare": ("manifold", "quadric"),
    "involutions": ("manifold", "quadric"),
    "tau-linearize": ("manifold", "quadric", "pair"),
    "quadric-equivalence": ("manifold", "quadric", "pair"),
    "cutting-variety": ("manifold", "quadric", "pair"),
}

_COEFFICIENT = {
    "oneOf": [
        {"type": "number"},
        {"type": "string"},
        {"type": "array", "items": {"type": ["number", "string"]}, "minItems": 2, "maxItems": 2},
        {
            "type": "object",
            "properties": {"re": {"type": ["number", "string"]}, "im": {"type": ["number", "string"]}},
            "additionalProperties": False,
        },
    ]
}

_MATRIX = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": _COEFFICIENT}}

_SERIES = {
    "type": "object",
    "required": ["terms"],
    "properties": {
        "nvars": {"type": "integer", "minimum": 1},
        "truncation": {"type": "integer", "minimum": 1},
        "backend": {"enum": ["exact", "float"]},
        "terms": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["exp"],
                "properties": {
                    "exp": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                    "re": {"type": ["number", "string"]},
                    "im": {"type": ["number", "string"]},
                },
                "additionalProperties": False,
            },
        },
    },
}

_GERM = {
    "oneOf": [
        {"type": "array", "minItems": 1, "items": _SERIES},
        {
            "type": "object",
            "required": ["components"],
            "properties": {"components": {"type": "array", "minItems": 1, "items": _SERIES}},
        },
    ]
}

_MULTI_INDEX = {"type": "array", "items": {"type": "integer", "minimum": 0}}

_IDEAL = {
    "oneOf": [
        {"type": "array", "items": _MULTI_INDEX},
        {"type": "object", "properties": {"generators": {"type": "array", "items": _MULTI_INDEX}}},
    ]
}

_SETTINGS_KEYS = {
    "backend": {"enum": ["exact", "float"]},
    "zero_threshold": {"type": "number", "exclusiveMinimum": 0},
    "truncation": {"type": "integer", "minimum": 1},
    "max_enumeration_degree": {"type": "integer", "minimum": 1},
    "max_omega_k": {"type": "integer", "minimum": 1},
    "diagnostics_degree": {"type": "integer", "minimum": 2},
    "threads": {"type": "integer", "minimum": 1},
    "numeric_epsilon": {"type": "number", "exclusiveMinimum": 0},
    "residual_tolerance": {"type": "number", "exclusiveMinimum": 0},
    "relation_search_bound": {"type": "integer", "minimum": 1},
    "log_level": {"type": "string"},
}

SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": ["task"],
    "properties": {
        "task": {"enum": list(TASKS)},
        "backend": {"enum": ["exact", "float"]},
        "truncation": {"type": "integer", "minimum": 1},
        "budgets": {
            "type": "object",
            "properties": {
                k: _SETTINGS_KEYS[k] for k in ("max_enumeration_degree", "max_omega_k", "diagnostics_degree")
            },
            "additionalProperties": False,
        },
        "settings": {"type": "object", "properties": _SETTINGS_KEYS, "additionalProperties": False},
        "oracle": {
            "type": "object",
            "properties": {
                "mode": {"enum": ["exact", "lattice", "numeric"]},
                "relations": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}},
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "spectrum": {
            "type": "object",
            "required": ["mu"],
            "properties": {
                "l": {"type": "integer", "minimum": 1},
                "n": {"type": "integer", "minimum": 1},
                "mu": {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": _COEFFICIENT}},
            },
        },
        "maps": {"type": "array", "minItems": 1, "items": _GERM},
        "ideal": _IDEAL,
        "res_ideal": {"type": "boolean"},
        "degree_bound": {"type": "integer", "minimum": 1},
        "k_max": {"type": "integer", "minimum": 1},
        "queries": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["Q", "j"],
                "properties": {"Q": _MULTI_INDEX, "j": {"type": "integer", "minimum": 1}},
            },
        },
        "diagnostics": {"type": "boolean"},
        "rho": {
            "type": "object",
            "required": ["P"],
            "properties": {
                "P": _MATRIX,
                "words": {
                    "type": "array",
                    "items": {
                        "type": "array",
                        "items": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
                    },
                },
            },
        },
        "involutions": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "object", "required": ["B"], "properties": {"B": _MATRIX, "R": _GERM}},
        },
        "manifold": {
            "type": "object",
            "required": ["p", "n", "G"],
            "properties": {
                "p": {"type": "integer", "minimum": 1},
                "n": {"type": "integer", "minimum": 2},
                "F": {"type": "array", "items": _SERIES},
                "G": _SERIES,
            },
        },
        "quadric": {
            "type": "object",
            "required": ["gamma"],
            "properties": {
                "gamma": {"type": "array", "minItems": 1, "items": _COEFFICIENT},
                "n": {"type": "integer", "minimum": 2},
                "D": _MATRIX,
            },
        },
        "pair": {
            "type": "object",
            "required": ["p", "tau1", "tau2", "rho"],
            "properties": {
                "p": {"type": "integer", "minimum": 1},
                "q": {"type": "integer", "minimum": 0},
                "tau1": _GERM,
                "tau2": _GERM,
                "rho": _MATRIX,
                "normal_form": {"type": "boolean"},
            },
        },
    },
}

_VALIDATOR = Draft7Validator(SCHEMA)


def json_pointer(path) -> str:
    """パス要素の列を JSON Pointer (RFC 6901) に変換"""
    parts = [str(p).replace("~", "~0").replace("/", "~1") for p in path]
    return "/" + "/".join(parts) if parts else ""


@dataclass
class Manifest:
    """検査済みのマニフェスト"""
    task: str
    settings: EngineSettings
    backend: CoefficientBackend
    truncation: int
    data: Dict[str, Any]
    payload: Dict[str, Any] = field(default_factory=dict)
    digest: str = ""

    def oracle(self) -> Tuple[Optional[str], Optional[List[List[int]]], float]:
        """(モード, 関係, ε) (モード省略時は None)"""
        oracle = self.data.get("oracle", {})
        return oracle.get("mode"), oracle.get("relations"), oracle.get("epsilon", self.settings.numeric_epsilon)


class _Collector:
    """JSON Pointer 付きでエラーを集める"""

    def __init__(self):
        self.errors: List[Tuple[str, str]] = []

    def add(self, path, message: str) -> None:
        self.errors.append((json_pointer(path), message))

    def build(self, path, fn: Callable[[], Any]) -> Any:
        try:
            return fn()
        except GermlabError as e:
            self.add(path, e.message)
        except (KeyError, TypeError, ValueError) as e:
            self.add(path, str(e))
        return None


def read_source(source: Union[str, Path, None]) -> str:
    """ファイルパス、'-' または None (標準入力) から UTF-8 テキストを読む"""
    if source is None or str(source) == "-":
        return sys.stdin.read()
    try:
        return Path(source).read_text(encoding="utf-8")
    except OSError as e:
        raise ManifestError([("", f"マニフェストを読み込めません: {e}")]) from e
    except UnicodeDecodeError as e:
        raise ManifestError([("", f"UTF-8 ではありません: {e}")]) from e


def parse_manifest(
    source: Union[str, Path, None] = None,
    text: Optional[str] = None,
    flags: Optional[Dict[str, Any]] = None,
    manager: Optional[SettingsManager] = None,
    environ: Optional[Dict[str, str]] = None,
) -> Manifest:
    """
    マニフェストを読み込んで検査する

    Args:
        source: ファイルパス ('-' か None なら標準入力)
        text: JSON テキスト (指定時は source を読まない)
        flags: コマンドライン引数による設定の上書き
        manager: 設定管理 (省略時はグローバルインスタンス)
        environ: 環境変数 (省略時は os.environ)

    Returns:
        Manifest

    Raises:
        ManifestError: JSON またはスキーマのエラー (JSON Pointer 付き)
    """
    if text is None:
        text = read_source(source)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ManifestError([("", f"JSON として解釈できません: {e.msg} (行 {e.lineno}, 列 {e.colno})")]) from e

    schema_errors = sorted(_VALIDATOR.iter_errors(data), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if schema_errors:
        raise ManifestError([(json_pointer(e.absolute_path), e.message) for e in schema_errors])

    task = data["task"]
    collector = _Collector()
    present = [k for k in TASK_INPUTS[task] if k in data]
    if not present:
        collector.add([], f"タスク {task} には {' / '.join(TASK_INPUTS[task])} のいずれかが必要です")
    elif len(present) > 1:
        collector.add([present[1]], f"{present[0]} と {present[1]} は同時に指定できません")
    if collector.errors:
        raise ManifestError(collector.errors)

    overrides = dict(data.get("settings", {}))
    for key in ("backend", "truncation"):
        if key in data:
            overrides[key] = data[key]
    overrides.update(data.get("budgets", {}))
    settings = (manager or settings_manager).effective(flags, environ, overrides)
    backend = get_backend(settings.backend, settings.zero_threshold)

    manifest = Manifest(task, settings, backend, settings.truncation, data)
    _build_payload(manifest, collector)
    if collector.errors:
        raise ManifestError(collector.errors)
    manifest.digest = digest(data)
    logger.info("マニフェストを読み込みました: task=%s backend=%s N=%d", task, backend.name, manifest.truncation)
    return manifest


# ---------------------------------------------------------------------------
# 入力の構築
# ---------------------------------------------------------------------------


def _build_payload(m: Manifest, c: _Collector) -> None:
    data, b, N, payload = m.data, m.backend, m.truncation, m.payload

    if "spectrum" in data:
        _build_spectrum(data["spectrum"], b, c, payload)
    if "maps" in data:
        _build_maps(data["maps"], b, N, c, payload)
    if "involutions" in data:
        _build_involutions(data["involutions"], b, N, c, payload)
    if "manifold" in data:
        _build_manifold(data["manifold"], b, N, c, payload)
    if "quadric" in data:
        _build_quadric(data["quadric"], b, N, c, payload)
    if "pair" in data:
        _build_pair(data["pair"], b, N, c, payload)

    n, owner = payload.get("n"), payload.get("n_path")
    if "ideal" in data:
        ideal_data = data["ideal"]
        generators = ideal_data.get("generators", []) if isinstance(ideal_data, dict) else ideal_data
        base = ["ideal", "generators"] if isinstance(ideal_data, dict) else ["ideal"]
        ok = True
        for k, g in enumerate(generators):
            if n is not None and len(g) != n:
                ok = False
                c.add(base + [k], f"生成元の長さ {len(g)} が {owner} の変数の数 {n} と一致しません")
        if ok and n is not None:
            payload["ideal"] = c.build(["ideal"], lambda: ideal_from_json(ideal_data, n))

    for k, query in enumerate(data.get("queries", [])):
        if n is not None and len(query["Q"]) != n:
            c.add(["queries", k, "Q"], f"長さ {len(query['Q'])} が {owner} の変数の数 {n} と一致しません")
        if n is not None and query["j"] > n:
            c.add(["queries", k, "j"], f"j={query['j']} が変数の数 {n} を超えています")

    if "rho" in data and n is not None:
        P = c.build(["rho", "P"], lambda: matrix_from_json(data["rho"]["P"], b))
        if P is not None:
            if len(P) != n or len(P[0]) != n:
                c.add(["rho", "P"], f"P の大きさが {owner} の変数の数 {n} と一致しません")
            payload["rho"] = P

    oracle = data.get("oracle", {})
    for k, r in enumerate(oracle.get("relations", [])):
        if n is not None and len(r) != n:
            c.add(["oracle", "relations", k], f"関係ベクトルの長さ {len(r)} が {owner} の変数の数 {n} と一致しません")
    if oracle.get("mode") == "exact" and b.name != "exact":
        c.add(["oracle", "mode"], "exact オラクルには exact バックエンドが必要です")


def _build_spectrum(obj: Dict[str, Any], b: CoefficientBackend, c: _Collector, payload: Dict[str, Any]) -> None:
    rows = obj["mu"]
    n = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != n:
            c.add(["spectrum", "mu", i], f"長さ {len(row)} が /spectrum/mu/0 の長さ {n} と一致しません")
    if obj.get("l", len(rows)) != len(rows):
        c.add(["spectrum", "l"], f"l={obj['l']} が /spectrum/mu の行数 {len(rows)} と一致しません")
    if obj.get("n", n) != n:
        c.add(["spectrum", "n"], f"n={obj['n']} が /spectrum/mu/0 の長さ {n} と一致しません")
    mu = []
    for i, row in enumerate(rows):
        values = []
        for j, v in enumerate(row):
            value = c.build(["spectrum", "mu", i, j], lambda v=v: coefficient_from_json(v, b))
            if value is not None and b.is_zero(value):
                c.add(["spectrum", "mu", i, j], "固有値 0 は扱えません")
            values.append(value)
        mu.append(values)
    payload.update(mu=mu, n=n, n_path="/spectrum/mu")


def _build_maps(maps: List[Any], b: CoefficientBackend, N: int, c: _Collector, payload: Dict[str, Any]) -> None:
    def count(obj) -> int:
        return len(obj["components"] if isinstance(obj, dict) else obj)

    n = count(maps[0])
    built = []
    for k, obj in enumerate(maps):
        if count(obj) != n:
            c.add(["maps", k], f"成分数 {count(obj)} が /maps/0 の成分数 {n} と一致しません")
            continue
        built.append(c.build(["maps", k], lambda obj=obj: germ_from_json(obj, n, N, b)))
    payload.update(maps=built, n=n, n_path="/maps/0")


def _build_involutions(items: List[Any], b: CoefficientBackend, N: int, c: _Collector, payload: Dict[str, Any]) -> None:
    from ..core.realfam import AntiInvolution

    n = len(items[0]["B"])
    built = []
    for k, item in enumerate(items):
        B = c.build(["involutions", k, "B"], lambda item=item: matrix_from_json(item["B"], b))
        if B is None:
            continue
        if len(B) != n or len(B[0]) != n:
            c.add(["involutions", k, "B"], f"B の大きさが /involutions/0/B の {n}x{n} と一致しません")
            continue
        if "R" in item:
            R = c.build(["involutions", k, "R"], lambda item=item: germ_from_json(item["R"], n, N, b))
            if R is None:
                continue
        else:
            R = GermMap.identity(n, N, b).project(lambda Q: False)
        # ρ∘ρ = Id の検査はパイプライン側で行う (数学的な否定結果として報告するため)
        rho = c.build(["involutions", k], lambda B=B, R=R, k=k: AntiInvolution(B, R, check=False, index=k))
        built.append(rho)
    payload.update(involutions=built, n=n, n_path="/involutions/0/B")


def _build_manifold(obj: Dict[str, Any], b: CoefficientBackend, N: int, c: _Collector, payload: Dict[str, Any]) -> None:
    from ..core.crsing import ManifoldData

    p, n = obj["p"], obj["n"]
    if p > n - 1:
        c.add(["manifold", "p"], f"p={p} は /manifold/n={n} に対して 1 ≤ p ≤ n-1 を満たしません")
        return
    q = n - p - 1
    nv = 2 * p + q
    F_data = obj.get("F", [])
    if len(F_data) != q:
        c.add(["manifold", "F"], f"F の個数 {len(F_data)} が n-p-1={q} (/manifold/n, /manifold/p) と一致しません")
        return
    F = [c.build(["manifold", "F", a], lambda s=s: series_from_json(s, nv, N, b)) for a, s in enumerate(F_data)]
    G = c.build(["manifold", "G"], lambda: series_from_json(obj["G"], nv, N, b))
    if G is None or any(f is None for f in F):
        return
    payload["manifold"] = c.build(["manifold"], lambda: ManifoldData(p, n, F, G, check_reality=False))
    payload.update(n=nv, n_path="/manifold")


def _build_quadric(obj: Dict[str, Any], b: CoefficientBackend, N: int, c: _Collector, payload: Dict[str, Any]) -> None:
    from ..core.crsing import ManifoldData

    gamma = [c.build(["quadric", "gamma", i], lambda v=v: coefficient_from_json(v, b)) for i, v in enumerate(obj["gamma"])]
    p = len(gamma)
    n = obj.get("n", p + 1)
    if n < p + 1:
        c.add(["quadric", "n"], f"n={n} が /quadric/gamma の個数 {p} に対して小さすぎます")
        return
    D = None
    if "D" in obj:
        D = c.build(["quadric", "D"], lambda: matrix_from_json(obj["D"], b))
        if D is not None and (len(D) != p or len(D[0]) != p):
            c.add(["quadric", "D"], f"D の大きさが /quadric/gamma の個数 {p} と一致しません")
            return
    if any(g is None for g in gamma):
        return
    payload["manifold"] = c.build(["quadric"], lambda: ManifoldData.quadric(gamma, n, N, b, D))
    payload.update(n=2 * p + n - p - 1, n_path="/quadric")


def _build_pair(obj: Dict[str, Any], b: CoefficientBackend, N: int, c: _Collector, payload: Dict[str, Any]) -> None:
    from ..core.crsing import InvolutionPair, normal_names

    p, q = obj["p"], obj.get("q", 0)
    dim = 2 * p + q
    tau1 = c.build(["pair", "tau1"], lambda: germ_from_json(obj["tau1"], dim, N, b))
    tau2 = c.build(["pair", "tau2"], lambda: germ_from_json(obj["tau2"], dim, N, b))
    rho = c.build(["pair", "rho"], lambda: matrix_from_json(obj["rho"], b))
    for name, germ in (("tau1", tau1), ("tau2", tau2)):
        if germ is not None and germ.nvars_out != dim:
            c.add(["pair", name], f"成分数 {germ.nvars_out} が 2p+q={dim} (/pair/p, /pair/q) と一致しません")
            return
    if rho is not None and (len(rho) != dim or len(rho[0]) != dim):
        c.add(["pair", "rho"], f"ρ の大きさが 2p+q={dim} (/pair/p, /pair/q) と一致しません")
        return
    if tau1 is None or tau2 is None or rho is None:
        return
    names = normal_names(p, q) if obj.get("normal_form") else None
    payload["pair"] = c.build(["pair"], lambda: InvolutionPair(tau1, tau2, rho, p, q, names=names))
    payload["normal_form"] = bool(obj.get("normal_form"))
    payload.update(n=dim, n_path="/pair")
