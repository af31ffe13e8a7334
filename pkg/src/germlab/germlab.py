"""
germlab - 正則写像の芽の線形化と CR 特異点の計算ツール

マニフェスト (JSON) で指定したタスクを実行し、報告を JSON またはテキストで出力する。

終了コード:
    0  数学的に成功
    2  入力の問題 (スキーマエラーなど)
    3  数学的な否定結果 (障害・仮定違反、報告は有効)
    4  予算超過

Author: germlab developers
License: Open Source
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from . import __version__
from .core.errors import GermlabError
from .core.pipeline_manager import PipelineManager, Report
from .utils.manifest import parse_manifest
from .utils.serialization import canonical_json
from .utils.settings import settings_manager

logger = logging.getLogger("germlab")

FORMATS = ("json", "text")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="germlab",
        description="正則写像の芽の同時線形化・全実部分多様体の直線化・CR 特異点の計算",
    )
    parser.add_argument("--manifest", default="-", help="マニフェストのパス (省略時・'-' は標準入力)")
    parser.add_argument("--out", default=None, help="報告の出力先 (省略時は標準出力)")
    parser.add_argument("--format", choices=FORMATS, default="json", help="出力形式")
    parser.add_argument("--threads", type=int, default=None, help="並列スレッド数 (GERMLAB_THREADS より優先)")
    parser.add_argument("--budget-degree", type=int, default=None, help="ω_k の列挙で使う |Q| の上限")
    parser.add_argument("--verify-witness", action="store_true", help="報告した証拠を元の入力で再検証する")
    parser.add_argument(
        "--log-level",
        choices=("DEBUG", "INFO", "WARNING", "ERROR"),
        default=None,
        help="ログレベル (既定は設定ファイルの log_level)",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="ログを詳しくする (-vv で DEBUG)")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def setup_logging(level: Optional[str], verbose: int) -> None:
    """ルートロガーを標準エラー出力に設定 (標準出力は報告専用)"""
    if verbose >= 2:
        level = "DEBUG"
    elif verbose == 1:
        level = "INFO"
    level = level or settings_manager.engine_settings.log_level
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


# ---------------------------------------------------------------------------
# 出力
# ---------------------------------------------------------------------------


def emit(report: Report, format: str = "json") -> bytes:
    """
    報告を出力用のバイト列にする

    Args:
        report: 実行結果
        format: "json" (キーを整列した正規形) または "text" (要約)

    Returns:
        UTF-8 のバイト列
    """
    if format == "json":
        return canonical_json(report.to_dict()).encode("utf-8")
    if format == "text":
        return ("\n".join(summary_lines(report)) + "\n").encode("utf-8")
    raise ValueError(f"未対応の出力形式です: {format}")


def _witness_line(witness: Dict[str, Any]) -> str:
    parts = []
    if "source" in witness:
        parts.append(f"source={witness['source']}")
    if "monomial" in witness:
        parts.append(witness["monomial"])
    if "Q" in witness:
        parts.append(f"Q=({', '.join(str(q) for q in witness['Q'])})")
    for key in ("j", "i", "k", "index", "value"):
        if witness.get(key) is not None:
            parts.append(f"{key}={witness[key]}")
    rest = sorted(k for k in witness if k not in ("source", "monomial", "Q", "j", "i", "k", "index", "value"))
    parts.extend(f"{k}={witness[k]}" for k in rest)
    return "witness: " + " ".join(parts)


def _omega_lines(label: str, omega: Optional[Dict[str, Any]]) -> List[str]:
    if not omega:
        return []
    if omega.get("vacuous"):
        return [f"{label}: vacuous ({omega.get('message', '')})"]
    lines = [f"{label}: verdict={omega['verdict']}"]
    for entry, partial in zip(omega["entries"], omega["partial_sums"]):
        where = f" at {entry['monomial']}" if "monomial" in entry else ""
        lines.append(f"  k={entry['k']} ω={entry['value']} Σ={partial}{where}")
    return lines


def summary_lines(report: Report) -> List[str]:
    """テキスト形式の要約 (同じ報告からは常に同じ行)"""
    r = report.results
    lines = [
        f"germlab {report.version}",
        f"task: {report.task}",
        f"status: {report.status} (exit {report.exit_code})",
    ]
    if report.error:
        lines.append(f"error: {report.error['error']}: {report.error['message']}")
    if report.witness:
        lines.append(_witness_line(report.witness))

    if "res_ideal" in r:
        complete = "" if r["res_ideal"].get("complete", True) else " (incomplete)"
        lines.append(f"ResIdeal: {r['res_ideal']['display']}{complete}")
    if "ideal" in r and isinstance(r["ideal"], dict):
        lines.append(f"ideal: {r['ideal']['display']}")
    for q in r.get("queries", []):
        lines.append(f"query {q['monomial']}: resonant={q['resonant']}")
    if "embedding" in r:
        lines.append(f"properly embedded: {r['embedding']['properly_embedded']}")
    if "centralizer_condition" in r:
        lines.append(f"centralizer in ideal: {r['centralizer_condition']['holds']}")
    lines += _omega_lines("omega", r.get("omega"))
    lines += _omega_lines("omega (ideal)", r.get("omega_ideal"))
    if "unit_circle_hint" in r:
        lines.append(f"unit-circle hint applies: {r['unit_circle_hint']['applies']}")

    if "status" in r:
        lines.append(f"linearization: {r['status']} (completed degree {r.get('completed_degree')})")
    if "verification" in r and isinstance(r["verification"], dict) and "passed" in r["verification"]:
        lines.append(f"verification passed: {r['verification']['passed']}")
    if "diagnostics" in r:
        d = r["diagnostics"]
        lines.append(f"majorant diagnostics: passed={d['passed']} degree={d['degree']} a={d['a']} b={d['b']}")

    if "prepare" in r:
        lines.append(f"gamma: {', '.join(r['prepare']['gamma'])}")
        if "bishop" in r["prepare"]:
            lines.append(f"bishop class: {r['prepare']['bishop']['class']}")
    if "spectrum" in r:
        for block in r["spectrum"]["blocks"]:
            lines.append(f"block {block['kind']}: mu={block['mu']} multiplicity={block['multiplicity']}")
    if "linearizable" in r:
        lines.append(f"tau linearizable: {r['linearizable']}")
    if "equivalence" in r:
        lines.append(f"quadric equivalence: {r['equivalence']}")
        if r.get("note"):
            lines.append(f"note: {r['note']}")
    if "cutting_variety" in r:
        cv = r["cutting_variety"]
        lines.append(f"ResIdeal: {cv['res_ideal']['display']}")
        lines.extend(f"equation: {e}" for e in cv["real_trace"]["equations"])
        lines.append(f"real trace: {cv['real_trace']['set']}")
    if "witness_verification" in r:
        lines.append(f"witness verified: {r['witness_verification']['verified']}")
    return lines


def write_output(data: bytes, out: Optional[str]) -> None:
    if out is None or out == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


# ---------------------------------------------------------------------------
# メイン
# ---------------------------------------------------------------------------


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    コマンドラインのメイン関数

    Returns:
        終了コード
    """
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level, args.verbose)
    flags = {"threads": args.threads, "max_enumeration_degree": args.budget_degree}

    try:
        manifest = parse_manifest(args.manifest, flags=flags)
    except GermlabError as e:
        report = Report("unknown", "error", e.exit_code, error=e.to_dict())
        for pointer, message in e.details.get("errors", []):
            logger.error("%s: %s", pointer or "/", message)
        write_output(emit(report, args.format), args.out)
        return e.exit_code

    manager = PipelineManager(status_callback=logger.info, log_callback=logger.debug)
    report = manager.run(manifest)
    if args.verify_witness:
        report.results["witness_verification"] = manager.verify_witness(manifest, report)
    write_output(emit(report, args.format), args.out)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
