"""
germlab - JSON 変換

級数・写像の芽・行列・イデアルと JSON の相互変換、および正規化した JSON 出力。
exact の係数は "p/q" 形式の文字列で書き出し、読み込み時にそのまま復元する。
"""

import dataclasses
import hashlib
import json
import math
from enum import Enum
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence

from ..core import linalg
from ..core.coefficients import CoefficientBackend, get_backend
from ..core.errors import SeriesMismatch
from ..core.resonance import MonomialIdeal
from ..core.series import GermMap, TruncatedSeries, canonical_key


# ---------------------------------------------------------------------------
# 係数
# ---------------------------------------------------------------------------


def coefficient_to_json(c: Any, backend: CoefficientBackend) -> List[Any]:
    """係数を [実部, 虚部] の組に変換"""
    re, im = backend.to_json(c)
    return [re, im]


def coefficient_from_json(value: Any, backend: CoefficientBackend) -> Any:
    """
    係数を読み込む

    数値、"p/q" 文字列、[実部, 虚部] の組、{"re": .., "im": ..} のいずれも受け付ける。
    """
    if isinstance(value, dict):
        unknown = set(value) - {"re", "im"}
        if unknown:
            raise SeriesMismatch(f"係数のキーが不正です: {sorted(unknown)}")
        return backend.make((value.get("re", 0), value.get("im", 0)))
    return backend.make(value)


# ---------------------------------------------------------------------------
# 級数と写像
# ---------------------------------------------------------------------------


def series_to_json(f: TruncatedSeries) -> Dict[str, Any]:
    backend = f.backend
    terms = []
    for Q in sorted(f.terms, key=canonical_key):
        re, im = backend.to_json(f.terms[Q])
        terms.append({"exp": list(Q), "re": re, "im": im})
    return {"nvars": f.nvars, "truncation": f.truncation, "backend": backend.name, "terms": terms}


def series_from_json(
    obj: Dict[str, Any],
    nvars: Optional[int] = None,
    truncation: Optional[int] = None,
    backend: Optional[CoefficientBackend] = None,
) -> TruncatedSeries:
    """
    JSON から級数を復元する

    nvars / truncation / backend を省略した級数はそれぞれ引数の値を使う。
    両方に値があって食い違うときは SeriesMismatch。
    """
    if not isinstance(obj, dict) or "terms" not in obj:
        raise SeriesMismatch("級数は terms を持つオブジェクトで指定してください")
    nvars = _merge("nvars", obj.get("nvars"), nvars)
    truncation = _merge("truncation", obj.get("truncation"), truncation)
    if "backend" in obj:
        if backend is not None and obj["backend"] != backend.name:
            raise SeriesMismatch(
                f"級数のバックエンド {obj['backend']!r} が {backend.name!r} と一致しません"
            )
        backend = backend or get_backend(obj["backend"])
    if nvars is None or truncation is None or backend is None:
        raise SeriesMismatch("級数の nvars / truncation / backend が決まりません")
    terms: Dict[tuple, Any] = {}
    for k, term in enumerate(obj["terms"]):
        exp = tuple(term["exp"])
        if len(exp) != nvars:
            raise SeriesMismatch(f"項 {k} の指数の長さ {len(exp)} が nvars={nvars} と一致しません")
        value = backend.make((term.get("re", 0), term.get("im", 0)))
        terms[exp] = terms[exp] + value if exp in terms else value
    return TruncatedSeries(nvars, truncation, backend, terms)


def _merge(name: str, declared: Optional[int], expected: Optional[int]) -> Optional[int]:
    if declared is not None and expected is not None and declared != expected:
        raise SeriesMismatch(f"{name} が一致しません: {declared} != {expected}")
    return declared if declared is not None else expected


def germ_to_json(F: GermMap) -> Dict[str, Any]:
    return {
        "nvars_in": F.nvars_in,
        "nvars_out": F.nvars_out,
        "truncation": F.truncation,
        "backend": F.backend.name,
        "components": [series_to_json(c) for c in F],
    }


def germ_from_json(
    obj: Any,
    nvars: Optional[int] = None,
    truncation: Optional[int] = None,
    backend: Optional[CoefficientBackend] = None,
) -> GermMap:
    """写像の芽を復元する (成分のリスト、または components を持つオブジェクト)"""
    if isinstance(obj, dict):
        nvars = _merge("nvars_in", obj.get("nvars_in"), nvars)
        truncation = _merge("truncation", obj.get("truncation"), truncation)
        if "backend" in obj and backend is None:
            backend = get_backend(obj["backend"])
        components = obj.get("components")
    else:
        components = obj
    if not isinstance(components, list) or not components:
        raise SeriesMismatch("写像の成分が空です")
    return GermMap([series_from_json(c, nvars, truncation, backend) for c in components])


# ---------------------------------------------------------------------------
# 行列・イデアル
# ---------------------------------------------------------------------------


def matrix_to_json(M: linalg.Mat, backend: CoefficientBackend) -> List[List[List[Any]]]:
    return [[coefficient_to_json(c, backend) for c in row] for row in M]


def matrix_from_json(rows: Sequence[Sequence[Any]], backend: CoefficientBackend) -> linalg.Mat:
    if not rows or any(len(row) != len(rows[0]) for row in rows):
        raise SeriesMismatch("行列の行の長さが揃っていません")
    return [[coefficient_from_json(v, backend) for v in row] for row in rows]


def ideal_to_json(ideal: MonomialIdeal, names: Optional[Sequence[str]] = None) -> Dict[str, Any]:
    return {
        "nvars": ideal.nvars,
        "generators": [list(g) for g in ideal.generators],
        "display": ideal.format(names),
    }


def ideal_from_json(obj: Any, nvars: int) -> MonomialIdeal:
    """{"generators": [[...], ...]} または生成元のリスト"""
    generators = obj.get("generators", []) if isinstance(obj, dict) else obj
    for g in generators:
        if len(g) != nvars:
            raise SeriesMismatch(f"生成元 {list(g)} の長さが nvars={nvars} と一致しません")
    return MonomialIdeal(nvars, [tuple(g) for g in generators])


# ---------------------------------------------------------------------------
# 正規化 JSON
# ---------------------------------------------------------------------------


def to_jsonable(value: Any) -> Any:
    """報告に含まれる値を JSON で表せる形にする"""
    if value is None or isinstance(value, (bool, int, str)):
        return value
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return value
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, TruncatedSeries):
        return series_to_json(value)
    if isinstance(value, GermMap):
        return germ_to_json(value)
    if isinstance(value, MonomialIdeal):
        return ideal_to_json(value)
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: to_jsonable(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if hasattr(value, "free_symbols"):
        return str(value)
    return str(value)


def canonical_json(value: Any) -> str:
    """キーを整列した JSON (末尾に改行)"""
    return json.dumps(to_jsonable(value), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def digest(value: Any) -> str:
    """正規化した JSON の sha256"""
    compact = json.dumps(to_jsonable(value), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(compact.encode("utf-8")).hexdigest()
