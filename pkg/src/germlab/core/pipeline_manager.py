"""
germlab - パイプラインマネージャー

マニフェストのタスクを各計算モジュールに振り分け、報告を組み立てるクラス

報告の添字 (i, j, k) は 1 始まり。内部 API は 0 始まり。
"""

import logging
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

from .. import __version__
from . import linalg
from .coefficients import CoefficientBackend
from .crsing import (
    InvolutionPair,
    SpectralDecomposition,
    bishop_invariants,
    bishop_lambda,
    complexify_and_build_involutions,
    decompose_spectrum,
    prepare_quadric,
)
from .diagnostics import MajorantDiagnostics, majorant_diagnostics
from .errors import BudgetError, GermlabError, InputError, MathematicalNegative, VacuousInf
from .linearize import (
    CommutingFamily,
    check_rho_equivariance,
    linearize_on_ideal,
    linearize_on_res_ideal,
    unit_circle_formal_hint,
    verify_conjugacy,
)
from .realfam import (
    RealFamily,
    group_consistency,
    intersection_report,
    normalization_report,
    straighten,
)
from .resonance import (
    DiagonalFamily,
    MonomialIdeal,
    OmegaSequence,
    ResonanceOracle,
    centralizer_condition,
    centralizer_monomials,
    invariant_monomials,
    omega_sequence,
    properly_embedded,
    res_ideal,
)
from .series import GermMap, MultiIndex, canonical_key, format_monomial
from .taulin import (
    CuttingVariety,
    VarietyComponent,
    check_ideal_compatibility,
    cutting_variety,
    formal_tau_linearizability,
    quadric_equivalence,
)
from ..utils.serialization import germ_to_json, ideal_to_json, matrix_to_json, series_to_json

logger = logging.getLogger(__name__)

STATUS_OK = "ok"
STATUS_NEGATIVE = "negative"
STATUS_BUDGET = "budget_exceeded"
STATUS_ERROR = "error"

ONE_BASED_KEYS = ("i", "j", "k", "index", "alpha")


@dataclass
class Report:
    """タスクの実行結果"""
    task: str
    status: str
    exit_code: int
    results: Dict[str, Any] = field(default_factory=dict)
    witness: Optional[Dict[str, Any]] = None
    error: Optional[Dict[str, Any]] = None
    timing: Dict[str, float] = field(default_factory=dict)
    tool: str = "germlab"
    version: str = __version__
    input_digest: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tool": self.tool,
            "version": self.version,
            "task": self.task,
            "status": self.status,
            "exit_code": self.exit_code,
            "input_digest": self.input_digest,
            "results": self.results,
            "witness": self.witness,
            "error": self.error,
            "timing": self.timing,
        }


def one_based(details: Dict[str, Any]) -> Dict[str, Any]:
    """例外の詳細の添字を 1 始まりに直す"""
    out = {}
    for key, value in details.items():
        if key in ONE_BASED_KEYS and isinstance(value, int) and not isinstance(value, bool):
            out[key] = value + 1
        else:
            out[key] = value
    return out


def monomial_entry(Q: MultiIndex, j: int, names: Optional[List[str]] = None) -> Dict[str, Any]:
    """(Q, j) を 1 始まりの j と単項式表記で表す"""
    return {"Q": list(Q), "j": j + 1, "monomial": f"{format_monomial(Q, names)}·e{j + 1}"}


def _format_matrix(M: linalg.Mat, b: CoefficientBackend) -> List[List[str]]:
    return linalg.format_matrix(M, b)


class PipelineManager:
    """
    タスクの実行と管理を行うクラス
    """

    # サポートされているタスク
    TASKS = {
        "resonance": "共鳴判定・不変単項式・共鳴イデアル・ω_k",
        "diagnose": "スペクトルの診断 (ω_k 表・中心化条件・単位円の判定)",
        "linearize": "可換族のイデアル上での同時線形化",
        "straighten": "全実部分多様体の族の直線化",
        "prepare": "CR 特異点の 2-jet の正規化",
        "involutions": "被覆変換 τ1, τ2 の構成とスペクトル分解",
        "tau-linearize": "τ1, τ2 のイデアル上での同時線形化",
        "quadric-equivalence": "二次曲面との同値性の判定",
        "cutting-variety": "切断多様体とその実跡",
    }

    def __init__(
        self,
        progress_callback: Optional[Callable[[float], None]] = None,
        status_callback: Optional[Callable[[str], None]] = None,
        log_callback: Optional[Callable[[str], None]] = None,
    ):
        self.progress_callback = progress_callback
        self.status_callback = status_callback
        self.log_callback = log_callback
        self.is_processing = False
        self._handlers: Dict[str, Callable[[Any, Dict[str, Any]], Optional[Dict[str, Any]]]] = {
            "resonance": self._run_resonance,
            "diagnose": self._run_diagnose,
            "linearize": self._run_linearize,
            "straighten": self._run_straighten,
            "prepare": self._run_prepare,
            "involutions": self._run_involutions,
            "tau-linearize": self._run_tau_linearize,
            "quadric-equivalence": self._run_quadric_equivalence,
            "cutting-variety": self._run_cutting_variety,
        }

    # ------------------------------------------------------------------
    # コールバック
    # ------------------------------------------------------------------

    def _status(self, message: str) -> None:
        logger.info(message)
        if self.status_callback:
            self.status_callback(message)

    def _log(self, message: str) -> None:
        logger.debug(message)
        if self.log_callback:
            self.log_callback(message)

    def _progress(self, value: float) -> None:
        if self.progress_callback:
            self.progress_callback(max(0.0, min(1.0, value)))

    # ------------------------------------------------------------------
    # 実行
    # ------------------------------------------------------------------

    def run(self, manifest) -> Report:
        """
        マニフェストのタスクを実行する

        Args:
            manifest: parse_manifest の結果

        Returns:
            Report (終了コード 0: 成功, 3: 数学的な否定結果, 4: 予算超過, 2: 入力の問題)
        """
        task = manifest.task
        report = Report(task, STATUS_OK, 0, input_digest=manifest.digest)
        if self.is_processing:
            self._status("他の処理が実行中です")
            report.status, report.exit_code = STATUS_ERROR, 1
            report.error = {"error": "Busy", "message": "他の処理が実行中です", "details": {}}
            return report

        start = time.perf_counter()
        try:
            self.is_processing = True
            self._status(f"{task} 開始...")
            self._log(f"backend={manifest.backend.name} N={manifest.truncation} threads={manifest.settings.threads}")
            self._progress(0.0)
            witness = self._handlers[task](manifest, report.results)
            if witness is not None:
                report.status, report.exit_code = STATUS_NEGATIVE, 3
                report.witness = witness
                self._status(f"{task} 完了 (否定的な結果)")
            else:
                self._status(f"{task} 完了")
            self._progress(1.0)
        except MathematicalNegative as e:
            report.status, report.exit_code = STATUS_NEGATIVE, 3
            report.error = self._error_dict(e)
            report.witness = report.error["details"]
            self._status(f"{task}: {e.message}")
        except BudgetError as e:
            report.status, report.exit_code = STATUS_BUDGET, 4
            report.error = self._error_dict(e)
            self._status(f"{task}: 予算超過: {e.message}")
        except InputError as e:
            report.status, report.exit_code = STATUS_ERROR, 2
            report.error = self._error_dict(e)
            self._status(f"{task}: 入力エラー: {e.message}")
        except GermlabError as e:
            report.status, report.exit_code = STATUS_ERROR, e.exit_code
            report.error = self._error_dict(e)
            self._status(f"{task}: エラー: {e.message}")
        finally:
            self.is_processing = False
            report.timing = {"seconds": round(time.perf_counter() - start, 6)}
        return report

    @staticmethod
    def _error_dict(e: GermlabError) -> Dict[str, Any]:
        data = e.to_dict()
        data["details"] = one_based(data["details"])
        return data

    def verify_witness(self, manifest, report: Report) -> Dict[str, Any]:
        """
        報告された証拠を元の入力から再計算して確かめる

        同じマニフェストを 1 スレッドで再実行して証拠が一致するかを見たうえで、
        共鳴による障害については共鳴判定を直接やり直す。
        """
        if report.witness is None:
            return {"verified": True, "reproduced": None, "checks": {}}
        rerun = PipelineManager().run(manifest)
        reproduced = rerun.witness == report.witness
        checks: Dict[str, Any] = {}
        witness = report.witness
        if report.task == "linearize" and "Q" in witness and "j" in witness:
            mode, relations, eps = manifest.oracle()
            fam = CommutingFamily(manifest.payload["maps"], mode, relations, eps, check=False)
            checks["resonant"] = fam.oracle.is_resonant(tuple(witness["Q"]), witness["j"] - 1).resonant
        if report.task in ("tau-linearize", "quadric-equivalence") and witness.get("source") == "phi":
            phi_obstruction = rerun.results.get("phi_obstruction_resonant")
            if phi_obstruction is not None:
                checks["resonant"] = phi_obstruction
        verified = reproduced and all(v is True for v in checks.values())
        if not verified:
            logger.error("証拠を再現できませんでした: %s", witness)
        return {"verified": verified, "reproduced": reproduced, "checks": checks}

    # ------------------------------------------------------------------
    # 共通部品
    # ------------------------------------------------------------------

    @staticmethod
    def _oracle_json(oracle: ResonanceOracle) -> Dict[str, Any]:
        return {
            "mode": oracle.mode.value,
            "relations": [list(r) for r in oracle.relations],
            "epsilon": oracle.epsilon,
        }

    @staticmethod
    def _omega_json(seq: OmegaSequence, b: CoefficientBackend) -> Dict[str, Any]:
        entries = []
        for e in seq.entries:
            entry: Dict[str, Any] = {"k": e.k, "value": e.value}
            if e.witness is not None:
                Q, j, i = e.witness
                entry.update(monomial_entry(Q, j))
                entry["i"] = i + 1
                entry["divisor"] = b.format(e.divisor)
            entries.append(entry)
        return {"entries": entries, "partial_sums": list(seq.partial_sums), "verdict": seq.verdict}

    def _omega_or_vacuous(self, oracle, ideal, k_max, budget, b) -> Dict[str, Any]:
        try:
            return self._omega_json(omega_sequence(oracle, ideal, k_max, budget), b)
        except VacuousInf as e:
            logger.warning("ω_k が定義できません: %s", e.message)
            return {"vacuous": True, "message": e.message}

    @staticmethod
    def _embedding_json(ideal: MonomialIdeal) -> Dict[str, Any]:
        emb = properly_embedded(ideal)
        return {"properly_embedded": emb.properly_embedded, "free_variables": [k + 1 for k in emb.free_variables]}

    @staticmethod
    def _centralizer_json(check) -> Dict[str, Any]:
        out: Dict[str, Any] = {"holds": check.holds, "checked": check.checked, "witness": None}
        if check.witness is not None:
            out["witness"] = monomial_entry(*check.witness)
        return out

    def _spectral_oracle(self, manifest):
        b = manifest.backend
        family = DiagonalFamily(manifest.payload["mu"], b)
        mode, relations, eps = manifest.oracle()
        mode = mode or ("exact" if b.name == "exact" else "numeric")
        return family, ResonanceOracle(family, mode, relations, eps)

    # ------------------------------------------------------------------
    # resonance / diagnose
    # ------------------------------------------------------------------

    def _run_resonance(self, manifest, results: Dict[str, Any]) -> None:
        b, s, data = manifest.backend, manifest.settings, manifest.data
        family, oracle = self._spectral_oracle(manifest)
        bound = data.get("degree_bound", manifest.truncation)
        results["oracle"] = self._oracle_json(oracle)
        results["degree_bound"] = bound

        queries = []
        for q in data.get("queries", []):
            Q, j = tuple(q["Q"]), q["j"] - 1
            answer = oracle.is_resonant(Q, j)
            entry = monomial_entry(Q, j)
            entry.update(
                resonant=answer.resonant,
                divisors=[b.format(d) for d in answer.divisors],
                i0=None if answer.i0 is None else answer.i0 + 1,
                margin=answer.margin,
            )
            queries.append(entry)
        results["queries"] = queries

        inv = invariant_monomials(oracle, bound)
        results["invariant_monomials"] = [list(Q) for Q in inv.invariants]
        results["invariant_generators"] = [list(Q) for Q in inv.generators]
        self._progress(0.3)

        resonance = res_ideal(oracle, bound)
        results["res_ideal"] = dict(ideal_to_json(resonance.ideal), complete=resonance.complete)
        ideal = manifest.payload.get("ideal")
        ideal = resonance.ideal if ideal is None else ideal
        results["ideal"] = ideal_to_json(ideal)
        results["centralizer"] = [monomial_entry(Q, j) for Q, j in centralizer_monomials(oracle, bound)]
        results["centralizer_condition"] = self._centralizer_json(centralizer_condition(oracle, ideal, bound))
        results["embedding"] = self._embedding_json(ideal)
        self._progress(0.6)

        k_max = data.get("k_max", s.max_omega_k)
        results["omega"] = self._omega_or_vacuous(oracle, ideal, k_max, s.max_enumeration_degree, b)

    def _run_diagnose(self, manifest, results: Dict[str, Any]) -> None:
        b, s, data, N = manifest.backend, manifest.settings, manifest.data, manifest.truncation
        family, oracle = self._spectral_oracle(manifest)
        maps = [GermMap.from_matrix(family.matrix(i), N, b) for i in range(family.l)]
        fam = CommutingFamily(maps, oracle.mode.value, oracle.relations, oracle.epsilon, check=False)
        bound = data.get("degree_bound", N)
        k_max = data.get("k_max", s.max_omega_k)
        results["oracle"] = self._oracle_json(oracle)
        results["eigenvalues"] = [[b.format(v) for v in row] for row in family.mu]

        results["omega"] = self._omega_or_vacuous(fam.oracle, None, k_max, s.max_enumeration_degree, b)
        self._progress(0.4)

        resonance = res_ideal(fam.oracle, bound)
        results["res_ideal"] = dict(ideal_to_json(resonance.ideal), complete=resonance.complete)
        ideal = manifest.payload.get("ideal")
        ideal = resonance.ideal if ideal is None else ideal
        results["ideal"] = ideal_to_json(ideal)
        results["omega_ideal"] = self._omega_or_vacuous(fam.oracle, ideal, k_max, s.max_enumeration_degree, b)
        results["centralizer_condition"] = self._centralizer_json(centralizer_condition(fam.oracle, ideal, bound))
        results["embedding"] = self._embedding_json(ideal)
        self._progress(0.8)

        hint = unit_circle_formal_hint(fam, bound)
        hint["unit_circle_maps_per_coordinate"] = [[i + 1 for i in row] for row in hint["unit_circle_maps_per_coordinate"]]
        results["unit_circle_hint"] = hint

    # ------------------------------------------------------------------
    # linearize
    # ------------------------------------------------------------------

    def _run_linearize(self, manifest, results: Dict[str, Any]) -> Optional[Dict[str, Any]]:
        b, s, data, payload = manifest.backend, manifest.settings, manifest.data, manifest.payload
        mode, relations, eps = manifest.oracle()
        fam = CommutingFamily(payload["maps"], mode, relations, eps)
        results["family"] = {
            "l": fam.l,
            "n": fam.n,
            "eigenvalues": [[b.format(v) for v in row] for row in fam.family.mu],
            "oracle": self._oracle_json(fam.oracle),
        }
        self._status("線形化を計算中...")
        if data.get("res_ideal"):
            ideal, result = linearize_on_res_ideal(
                fam,
                data.get("degree_bound"),
                threads=s.threads,
                raise_on_obstruction=False,
                progress_callback=lambda v: self._progress(0.8 * v),
            )
        else:
            ideal = payload.get("ideal")
            ideal = MonomialIdeal.zero(fam.n) if ideal is None else ideal
            result = linearize_on_ideal(fam, ideal, s.threads, False, lambda v: self._progress(0.8 * v))

        results["ideal"] = ideal_to_json(ideal)
        results["status"] = result.status
        results["completed_degree"] = result.completed_degree
        results["phi"] = germ_to_json(result.phi)
        results["residuals"] = [germ_to_json(g) for g in result.residuals]
        results["trace"] = dict(sorted(Counter(e.rule for e in result.trace).items()))
        results["warnings"] = [
            {"warning": "AmbiguousResonance", "Q": list(w.Q), "j": w.j + 1, "margin": w.margin, "epsilon": w.epsilon}
            for w in result.warnings
        ]

        if result.obstruction is not None:
            e = result.obstruction
            witness = monomial_entry(e.Q, e.j)
            witness["i"] = None if e.i is None else e.i + 1
            witness["value"] = b.format(e.value)
            results["obstruction"] = witness
            return witness
        results["obstruction"] = None

        check = verify_conjugacy(fam, result, ideal, s.residual_tolerance)
        results["verification"] = {"passed": check.passed, "failures": [one_based(f) for f in check.failures]}

        if "rho" in payload:
            words = data["rho"].get("words")
            if words is not None:
                words = [[(index - 1, power) for index, power in word] for word in words]
            eq = check_rho_equivariance(fam, result, payload["rho"], ideal, words, s.residual_tolerance)
            checks = dict(eq.checks)
            checks["words"] = [[[index + 1, power] for index, power in w] for w in checks.get("words", [])]
            if "first_difference" in checks:
                checks["first_difference"] = one_based(checks["first_difference"])
            results["rho_equivariance"] = {"passed": eq.passed, "checks": checks}

        if data.get("diagnostics", True):
            self._status("優級数診断を計算中...")
            diag = majorant_diagnostics(
                fam,
                ideal,
                result,
                None,
                s.diagnostics_degree,
                s.max_omega_k,
                s.max_enumeration_degree,
            )
            results["diagnostics"] = self._diagnostics_json(diag)
        return None

    @staticmethod
    def _diagnostics_json(diag: MajorantDiagnostics) -> Dict[str, Any]:
        table = [
            {
                "Q": list(Q),
                "delta": diag.delta[Q],
                "sigma": diag.sigma.get(Q, 0.0),
                "eta": diag.eta.get(Q, 0.0),
                "phi_tilde": diag.phi_tilde.get(Q, 0.0),
            }
            for Q in sorted(diag.delta, key=canonical_key)
        ]
        counts: Dict[str, List[Dict[str, Any]]] = {}
        for (k, Q), value in sorted(diag.phi_counts.items(), key=lambda kv: (kv[0][0], canonical_key(kv[0][1]))):
            counts.setdefault(str(k), []).append({"Q": list(Q), "count": value})
        return {
            "degree": diag.degree,
            "a": diag.a,
            "b": diag.b,
            "theta": diag.theta,
            "omega": {str(k): v for k, v in sorted(diag.omega.items())},
            "passed": diag.passed,
            "violations": [one_based(v) for v in diag.violations],
            "table": table,
            "small_divisor_counts": counts,
        }

    # ------------------------------------------------------------------
    # straighten
    # ------------------------------------------------------------------

    def _run_straighten(self, manifest, results: Dict[str, Any]) -> None:
        b, s, payload = manifest.backend, manifest.settings, manifest.payload
        tol = s.residual_tolerance
        mode, relations, eps = manifest.oracle()
        fam = RealFamily(payload["involutions"])
        for rho in fam.involutions:
            rho.check(tol)
        ideal = payload.get("ideal")
        ideal = MonomialIdeal.zero(fam.n) if ideal is None else ideal
        results["ideal"] = ideal_to_json(ideal)
        results["group_consistency"] = group_consistency(fam, tol)

        normalization = normalization_report(fam, tol)
        normalization["identity"] = [one_based(e) for e in normalization["identity"]]
        normalization["support_violations"] = [one_based(e) for e in normalization["support_violations"]]
        results["normalization"] = normalization
        results["intersection"] = intersection_report(fam, ideal)
        self._progress(0.2)

        self._status("反射群を線形化中...")
        st = straighten(
            fam, ideal, mode, relations, eps, s.threads, tol, lambda v: self._progress(0.2 + 0.7 * v)
        )
        results["phi"] = germ_to_json(st.phi)
        results["linearization_status"] = st.linearization.status
        results["rho_normalized"] = [
            {"B": matrix_to_json(rho.B, b), "R": germ_to_json(rho.R), "anti_linear": ok}
            for rho, ok in zip(st.rho_normalized, st.report["anti_linear"])
        ]
        results["report"] = st.report

    # ------------------------------------------------------------------
    # CR 特異点
    # ------------------------------------------------------------------

    @staticmethod
    def _gamma_value(b: CoefficientBackend, g: Any) -> Any:
        return b.format(b.real(g)) if b.name == "exact" else float(b.to_complex(g).real)

    def _prepare(self, manifest, results: Dict[str, Any]):
        b, tol = manifest.backend, manifest.settings.residual_tolerance
        m = manifest.payload["manifold"]
        m.ensure_reality(tol)
        self._status("2-jet を正規化中...")
        pq = prepare_quadric(m, tol)
        section: Dict[str, Any] = {
            "p": m.p,
            "n": m.n,
            "gamma": [b.format(g) for g in pq.gamma],
            "bishop_invariants": [b.format(g) for g in bishop_invariants(pq)],
            "D_normalized": _format_matrix(pq.D_normalized, b),
            "steps": list(pq.steps),
            "cond1_determinant": pq.cond1_determinant,
            "cond1_bishop_determinant": pq.cond1_bishop_determinant,
            "coordinate_change": germ_to_json(pq.coordinate_change),
            "prepared": {
                "F": [series_to_json(f) for f in pq.prepared.F],
                "G": series_to_json(pq.prepared.G),
            },
        }
        if m.p == 1:
            lam = bishop_lambda(self._gamma_value(b, pq.gamma[0]))
            section["bishop"] = {
                "gamma": str(lam["gamma"]),
                "lambda": [str(v) for v in lam["lambda"]],
                "mu": [str(v) for v in lam["mu"]],
                "class": lam["class"],
            }
        results["prepare"] = section
        self._progress(0.25)
        return pq

    @staticmethod
    def _spectrum_json(dec: SpectralDecomposition) -> Dict[str, Any]:
        b = dec.backend
        names = dec.names()
        return {
            "backend": b.name,
            "blocks": [
                {
                    "kind": blk.kind,
                    "mu": b.format(blk.mu),
                    "mu_exact": None if blk.mu_exact is None else str(blk.mu_exact),
                    "multiplicity": blk.multiplicity,
                    "zeta": [names[k] for k in blk.zeta_indices],
                    "eta": [names[k] for k in blk.eta_indices],
                    "A": None if blk.A is None else _format_matrix(blk.A, b),
                    "check_residual": blk.check_residual,
                }
                for blk in dec.blocks
            ],
            "eigenvalues": [b.format(v) for v in dec.eigenvalues],
            "exact_eigenvalues": None if dec.exact_eigenvalues is None else [str(v) for v in dec.exact_eigenvalues],
            "relations": [list(r) for r in dec.relations],
            "warnings": [w.to_dict() for w in dec.warnings],
            "dims": dict(dec.dims),
            "change_of_basis": _format_matrix(dec.change_of_basis, b),
            "T1": _format_matrix(dec.T1, b),
            "T2": _format_matrix(dec.T2, b),
            "rho": _format_matrix(dec.rho, b),
        }

    @staticmethod
    def _pair_json(ip: InvolutionPair) -> Dict[str, Any]:
        b = ip.backend
        diagonal = linalg.diagonal(ip.phi_linear)
        trace = b.zero()
        for v in diagonal[: 2 * ip.p]:
            trace = trace + v
        return {
            "p": ip.p,
            "q": ip.q,
            "names": list(ip.names),
            "tau1": germ_to_json(ip.tau1),
            "tau2": germ_to_json(ip.tau2),
            "rho": _format_matrix(ip.rho, b),
            "T1": _format_matrix(ip.T1, b),
            "T2": _format_matrix(ip.T2, b),
            "phi_linear": _format_matrix(ip.phi_linear, b),
            "phi_block_trace": b.format(trace),
        }

    def _run_prepare(self, manifest, results: Dict[str, Any]) -> None:
        self._prepare(manifest, results)

    def _run_involutions(self, manifest, results: Dict[str, Any]) -> None:
        s = manifest.settings
        pq = self._prepare(manifest, results)
        self._status("被覆変換を構成中...")
        ip = complexify_and_build_involutions(pq, s.residual_tolerance)
        results["involutions"] = self._pair_json(ip)
        results["checks"] = ip.verify(s.residual_tolerance)
        self._progress(0.6)
        self._status("DΦ(0) を分解中...")
        mode, relations, _ = manifest.oracle()
        dec = decompose_spectrum(
            ip, s.numeric_epsilon, s.relation_search_bound, s.residual_tolerance, mode, relations
        )
        results["spectrum"] = self._spectrum_json(dec)

    def _normal_pair(self, manifest, results: Dict[str, Any], force_decompose: bool = False) -> InvolutionPair:
        """正規座標の対合の組を用意する (必要ならスペクトル分解して座標を取り替える)"""
        s, payload = manifest.settings, manifest.payload
        tol = s.residual_tolerance
        if "pair" in payload:
            ip = payload["pair"]
            if payload.get("normal_form") and not force_decompose:
                results["coordinates"] = "given"
                return ip
        else:
            pq = self._prepare(manifest, results)
            self._status("被覆変換を構成中...")
            ip = complexify_and_build_involutions(pq, tol)
        results["checks"] = ip.verify(tol)
        self._status("DΦ(0) を分解中...")
        mode, relations, _ = manifest.oracle()
        dec = decompose_spectrum(ip, s.numeric_epsilon, s.relation_search_bound, tol, mode, relations)
        results["spectrum"] = self._spectrum_json(dec)
        results["coordinates"] = "spectral"
        self._progress(0.5)
        return ip.in_normal_coordinates(dec, tol)

    @staticmethod
    def _tau_witness(witness: Dict[str, Any], names: List[str]) -> Dict[str, Any]:
        out = one_based(witness)
        if "Q" in witness:
            if witness.get("source") == "phi":
                out["monomial"] = f"{format_monomial(witness['Q'], names)}·e{witness['j'] + 1}"
            else:
                out["monomial"] = format_monomial(witness["Q"], names)
        return out

    def _run_tau_linearize(self, manifest, results: Dict[str, Any]) -> Optional[Dict[str, Any]]:
        s, payload = manifest.settings, manifest.payload
        mode, relations, eps = manifest.oracle()
        ip = self._normal_pair(manifest, results)
        b, names = ip.backend, list(ip.names)
        ideal = payload.get("ideal")
        ideal = MonomialIdeal.zero(ip.dim) if ideal is None else ideal
        results["ideal"] = ideal_to_json(ideal, names)
        compat = check_ideal_compatibility(ideal, ip.T1, ip.T2, ip.rho, ip.truncation, b)
        results["ideal_compatibility"] = {
            "compatible": compat.compatible,
            "vacuous": compat.vacuous,
            "witnesses": compat.witnesses,
        }
        self._status("τ1, τ2 を線形化中...")
        answer = formal_tau_linearizability(ip, ideal, mode, relations, eps, s.threads, s.residual_tolerance)
        results["linearizable"] = answer.status
        if answer.centralizer is not None:
            results["centralizer_condition"] = self._centralizer_json(answer.centralizer)
        if not answer.linearizable:
            witness = self._tau_witness(answer.witness, names)
            results["witness"] = witness
            self._record_phi_resonance(ip, answer.witness, mode, relations, eps, results)
            return witness
        r = answer.result
        results["psi_prime"] = germ_to_json(r.psi_prime)
        results["u"] = germ_to_json(r.u)
        results["psi"] = germ_to_json(r.psi)
        results["linearized_taus"] = [germ_to_json(t) for t in r.linearized_taus]
        results["verification"] = r.verification
        return None

    def _record_phi_resonance(self, ip, witness, mode, relations, eps, results) -> None:
        if witness.get("source") != "phi":
            return
        if mode is None and ip.decomposition is not None:
            mode, relations = ip.decomposition.oracle_config()
        oracle = CommutingFamily([ip.phi], mode, relations, eps, check=False).oracle
        results["phi_obstruction_resonant"] = oracle.is_resonant(tuple(witness["Q"]), witness["j"]).resonant

    def _run_quadric_equivalence(self, manifest, results: Dict[str, Any]) -> Optional[Dict[str, Any]]:
        s = manifest.settings
        mode, relations, eps = manifest.oracle()
        ip = self._normal_pair(manifest, results)
        self._status("二次曲面との同値性を判定中...")
        qe = quadric_equivalence(
            ip,
            mode,
            relations,
            eps,
            s.threads,
            s.residual_tolerance,
            s.max_omega_k,
            s.max_enumeration_degree,
        )
        results["equivalence"] = qe.status
        results["note"] = qe.note
        results["omega"] = None if qe.omega is None else self._omega_json(qe.omega, ip.backend)
        if qe.psi is not None:
            results["psi"] = germ_to_json(qe.psi)
        if qe.status == "not_formally_equivalent":
            witness = self._tau_witness(qe.witness, list(ip.names))
            results["witness"] = witness
            self._record_phi_resonance(ip, qe.witness, mode, relations, eps, results)
            return witness
        return None

    @staticmethod
    def _component_json(c: VarietyComponent, names: List[str], n: int) -> Dict[str, Any]:
        return {
            "pattern": [1 if k in c.zero_coordinates else 0 for k in range(n)],
            "equations": c.equations(names),
            "t_invariant": c.t_invariant,
            "rho_invariant": c.rho_invariant,
            "swapped_with": None if c.swapped_with is None else c.swapped_with + 1,
        }

    def _cutting_json(self, cv: CuttingVariety, n: int) -> Dict[str, Any]:
        names = cv.names
        linearization = None
        if cv.linearization is not None:
            linearization = {"psi": germ_to_json(cv.linearization.psi), "verification": cv.linearization.verification}
        error = None
        if cv.linearization_error is not None:
            error = dict(cv.linearization_error, details=one_based(cv.linearization_error["details"]))
        return {
            "res_ideal": dict(ideal_to_json(cv.res_ideal, names), complete=cv.complete),
            "components": [self._component_json(c, names, n) for c in cv.components],
            "adjustment": [names[k] for k in cv.adjustment],
            "adjusted_components": [self._component_json(c, names, n) for c in cv.adjusted_components],
            "real_trace": cv.real_trace,
            "hypotheses": cv.hypotheses,
            "restricted": cv.restricted,
            "linearization": linearization,
            "linearization_error": error,
            "names": names,
        }

    def _run_cutting_variety(self, manifest, results: Dict[str, Any]) -> None:
        s, data = manifest.settings, manifest.data
        mode, relations, eps = manifest.oracle()
        ip = self._normal_pair(manifest, results, force_decompose=True)
        self._status("切断多様体を計算中...")
        cv = cutting_variety(
            ip,
            None,
            data.get("degree_bound"),
            mode,
            relations,
            eps,
            s.threads,
            s.residual_tolerance,
        )
        results["cutting_variety"] = self._cutting_json(cv, ip.dim)
