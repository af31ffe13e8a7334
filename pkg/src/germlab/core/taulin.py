"""
germlab - 対合の組のイデアル上での同時線形化

正規座標 (ζ, η, υ) にある対合 τ1, τ2 (τ2 = ρ∘τ1∘ρ) について、
Ψ^{-1}∘τ_j∘Ψ − T_j の各成分がイデアルに入る Ψ を次数ごとに求める。
Φ = τ1∘τ2 を先にイデアル上で線形化し (Ψ')、ζ 成分の補正 u で τ1 を揃える。
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from . import linalg
from .coefficients import CoefficientBackend
from .crsing import COMPLEX, ELLIPTIC, HYPERBOLIC, InvolutionPair, SpectralDecomposition
from .errors import (
    BudgetExceeded,
    CompatibilityResidual,
    FormalObstruction,
    UnsupportedConfiguration,
    VacuousInf,
)
from .linearize import CommutingFamily, apply_antilinear, linearize_on_ideal
from .resonance import (
    CentralizerCheck,
    MonomialIdeal,
    OmegaSequence,
    ResonanceOracle,
    centralizer_condition,
    omega_sequence,
    res_ideal,
)
from .series import (
    GermMap,
    MultiIndex,
    TruncatedSeries,
    compose,
    compose_series,
    format_monomial,
    invert_germ,
    monomials_up_to,
)

logger = logging.getLogger(__name__)

HOLDS = "holds"
FAILS = "fails"
VACUOUS = "vacuous"


# ---------------------------------------------------------------------------
# イデアルの両立性
# ---------------------------------------------------------------------------


@dataclass
class IdealCompatibility:
    compatible: bool
    vacuous: bool = False
    witnesses: List[Dict[str, Any]] = field(default_factory=list)
    degree: int = 0


def check_ideal_compatibility(
    ideal: MonomialIdeal,
    T1: linalg.Mat,
    T2: linalg.Mat,
    rho: linalg.Mat,
    degree: int,
    backend: CoefficientBackend,
) -> IdealCompatibility:
    """
    T1, T2, ρ との合成がイデアル側と補空間側を保つかを単項式ごとに調べる

    ρ は反線形だが、単項式の台だけを見るので P との合成で判定できる。
    """
    if ideal.is_zero():
        return IdealCompatibility(True, vacuous=True, degree=degree)
    n = ideal.nvars
    report = IdealCompatibility(True, degree=degree)
    one = backend.one()
    for name, M in (("T1", T1), ("T2", T2), ("rho", rho)):
        L = GermMap.from_matrix(M, degree, backend)
        witness = None
        for Q in monomials_up_to(n, degree, 1):
            inside = Q in ideal
            image = compose_series(TruncatedSeries.monomial(Q, one, degree, backend), L)
            bad = next((R for R, _ in image.items() if (R in ideal) != inside), None)
            if bad is not None:
                witness = {"map": name, "Q": list(Q), "image": list(bad), "in_ideal": inside}
                break
        if witness is not None:
            report.compatible = False
            report.witnesses.append(witness)
    if not report.compatible:
        logger.info("イデアル %s は T1, T2, ρ と両立しません: %s", ideal, report.witnesses)
    return report


# ---------------------------------------------------------------------------
# 同時線形化
# ---------------------------------------------------------------------------


@dataclass
class TauLinResult:
    psi_prime: GermMap
    u: GermMap
    psi: GermMap
    linearized_taus: Tuple[GermMap, GermMap]
    ideal: MonomialIdeal
    verification: Dict[str, Any] = field(default_factory=dict)


def _normal_swap(p: int, q: int, backend: CoefficientBackend) -> linalg.Mat:
    dim = 2 * p + q
    M = linalg.zeros(dim, dim, backend)
    for i in range(p):
        M[i][p + i] = M[p + i][i] = backend.one()
    for a in range(q):
        M[2 * p + a][2 * p + a] = backend.one()
    return M


def _oracle_config(ip: InvolutionPair, oracle_mode: Optional[str], relations):
    if oracle_mode is None and ip.decomposition is not None:
        return ip.decomposition.oracle_config()
    return oracle_mode, relations


def _projection_status(
    series: TruncatedSeries, keep: Callable[[MultiIndex], bool], space_empty: bool, tolerance: float
) -> str:
    if space_empty:
        return VACUOUS
    projected = series.project(keep)
    if all(series.backend.close(c, series.backend.zero(), tolerance) for _, c in projected.items()):
        return HOLDS
    return FAILS


def linearize_taus_on_ideal(
    ip: InvolutionPair,
    ideal: MonomialIdeal,
    oracle_mode: Optional[str] = None,
    relations: Optional[Sequence[Sequence[int]]] = None,
    epsilon: float = 1e-9,
    threads: int = 1,
    tolerance: float = 1e-9,
    progress_callback: Optional[Callable[[float], None]] = None,
) -> TauLinResult:
    """
    τ1, τ2 をイデアル上で同時に線形化する

    Args:
        ip: 正規座標の対合の組 (T2 は ζ_i ↔ η_i の入れ替え)
        ideal: T1, T2, ρ と両立する単項式イデアル
        oracle_mode: 共鳴判定のモード (省略時はスペクトル分解から決める)
        relations: lattice モードの乗法的関係
        epsilon: numeric モードの閾値
        threads: Φ の線形化に使うスレッド数
        tolerance: float バックエンドでの残差の許容値
        progress_callback: 進行状況コールバック (0.0-1.0)

    Returns:
        TauLinResult (verification は報告用で、ρ との可換性が崩れても例外にはしない)
    """
    b, N, n, p, q = ip.backend, ip.truncation, ip.dim, ip.p, ip.q
    if ideal.nvars != n:
        raise UnsupportedConfiguration(f"イデアルの変数の数 {ideal.nvars} が次元 {n} と一致しません")
    if not linalg.equal(ip.T2, _normal_swap(p, q, b), b, tolerance):
        raise UnsupportedConfiguration("対合の組が正規座標にありません (in_normal_coordinates を先に適用してください)")
    compatibility = check_ideal_compatibility(ideal, ip.T1, ip.T2, ip.rho, N, b)
    if not compatibility.compatible:
        raise UnsupportedConfiguration(
            "イデアルが T1, T2, ρ と両立しません", witnesses=compatibility.witnesses
        )

    mode, relations = _oracle_config(ip, oracle_mode, relations)
    fam = CommutingFamily([ip.phi], mode, relations, epsilon)
    oracle = fam.oracle

    def phi_progress(value: float) -> None:
        if progress_callback:
            progress_callback(0.5 * value)

    linearization = linearize_on_ideal(fam, ideal, threads=threads, progress_callback=phi_progress)
    psi_prime = linearization.phi

    nu = [ip.T1[i][p + i] for i in range(p)]
    ident = ip.identity()
    u_terms: List[Dict[MultiIndex, Any]] = [{} for _ in range(n)]

    def correction() -> GermMap:
        return ident + GermMap.from_terms(u_terms, n, N, b)

    # η 成分の残差は ζ 成分の補正で 1 次的に ν_i^{-1} u_i だけ動く
    for d in range(2, N + 1):
        psi = compose(psi_prime, correction()).truncated(d)
        twisted = compose(invert_germ(psi), compose(ip.tau1.truncated(d), psi))
        for i in range(p):
            for Q, c in twisted[p + i].homogeneous(d).items():
                if Q in ideal or not oracle.is_resonant(Q, i).resonant:
                    continue
                u_terms[i][Q] = -nu[i] * c
        logger.debug("τ の線形化: 次数 %d/%d 完了", d, N)
        if progress_callback:
            progress_callback(0.5 + 0.5 * (d - 1) / max(N - 1, 1))

    u = GermMap.from_terms(u_terms, n, N, b)
    psi = compose(psi_prime, correction())
    psi = ident + (psi - ident).project(lambda Q: Q not in ideal)
    psi_inv = invert_germ(psi)
    taus = (
        compose(psi_inv, compose(ip.tau1, psi)),
        compose(psi_inv, compose(ip.tau2, psi)),
    )

    for j, (tau, T) in enumerate(zip(taus, (ip.T1, ip.T2))):
        residual = (tau - GermMap.from_matrix(T, N, b)).project(lambda Q: Q not in ideal)
        for k, comp in enumerate(residual):
            for Q, c in comp.items():
                if b.close(c, b.zero(), tolerance):
                    continue
                raise CompatibilityResidual(
                    f"Ψ^{{-1}}∘τ{j + 1}∘Ψ − T{j + 1} の成分 {k + 1} がイデアルに入りません",
                    i=k,
                    Q=list(Q),
                    j=j,
                    value=b.format(c),
                )

    result = TauLinResult(psi_prime, u, psi, taus, ideal)
    result.verification = _verify(ip, result, oracle, tolerance)
    logger.info("τ1, τ2 をイデアル %s 上で線形化しました (次数 %d)", ideal.format(ip.names), N)
    return result


def _verify(
    ip: InvolutionPair, result: TauLinResult, oracle: ResonanceOracle, tolerance: float
) -> Dict[str, Any]:
    """
    正規化条件・補正方程式・両立性の恒等式・ρ との可換性を記録する

    ここでの結果は報告用で例外は投げない。イデアルが 0 でなければ Ψ はイデアルを法としてしか
    決まらないので、ρ との可換性 (rho_commutes) も成り立つとは限らない。
    Ψ^{-1}τ_jΨ − T_j の残差は呼び出し側で CompatibilityResidual として扱う。
    """
    b, N, n, p, q = ip.backend, ip.truncation, ip.dim, ip.p, ip.q
    ideal, psi = result.ideal, result.psi
    ident = ip.identity()
    nu = [ip.T1[i][p + i] for i in range(p)]

    def outside(pred: Callable[[MultiIndex], bool]) -> Callable[[MultiIndex], bool]:
        return lambda Q: sum(Q) >= 2 and Q not in ideal and pred(Q)

    def eta_resonant(i: int) -> Callable[[MultiIndex], bool]:
        return outside(lambda Q: oracle.is_resonant(Q, p + i).resonant)

    def zeta_resonant(i: int) -> Callable[[MultiIndex], bool]:
        return outside(lambda Q: oracle.is_resonant(Q, i).resonant)

    invariant = outside(oracle.is_invariant)
    candidates = list(monomials_up_to(n, N, 2))

    def empty(pred: Callable[[MultiIndex], bool]) -> bool:
        return not any(pred(Q) for Q in candidates)

    out: Dict[str, Any] = {}
    out["involutions"] = {
        f"tau{j + 1}": compose(tau, tau).is_close(ident, tolerance)
        for j, tau in enumerate(result.linearized_taus)
    }

    shift = psi - ident
    pnormal: Dict[str, str] = {}
    for i in range(p):
        pnormal[f"eta{i + 1}"] = _projection_status(shift[p + i], eta_resonant(i), empty(eta_resonant(i)), tolerance)
    for a in range(q):
        pnormal[f"upsilon{a + 1}"] = _projection_status(shift[2 * p + a], invariant, empty(invariant), tolerance)
    out["pnormal"] = pnormal

    # τ2 側の補正方程式: Ψ^{-1}τ2Ψ の ζ 成分の ζ 共鳴部分
    tau2_tilde = result.linearized_taus[1]
    out["equ_u"] = {
        f"zeta{i + 1}": _projection_status(
            (tau2_tilde - GermMap.from_matrix(ip.T2, N, b))[i], zeta_resonant(i), empty(zeta_resonant(i)), tolerance
        )
        for i in range(p)
    }

    tau2_psi = compose(ip.tau2, psi)
    f1, f2 = ip.tau1.nonlinear_part(), ip.tau2.nonlinear_part()
    compat: Dict[str, str] = {}
    for i in range(p):
        lhs = compose_series(f1[i] - f2[i].scale(nu[i]), tau2_psi)
        compat[f"f{i + 1}"] = _projection_status(lhs, zeta_resonant(i), empty(zeta_resonant(i)), tolerance)
        lhs = compose_series(f1[p + i] - f2[p + i].scale(b.inv(nu[i])), tau2_psi)
        compat[f"g{i + 1}"] = _projection_status(lhs, eta_resonant(i), empty(eta_resonant(i)), tolerance)
    for a in range(q):
        k = 2 * p + a
        lhs = compose_series(compose_series(f1[k], ip.tau2) + f2[k], psi)
        compat[f"h{a + 1}"] = _projection_status(lhs, invariant, empty(invariant), tolerance)
    out["compat"] = compat
    failing = [key for key, status in compat.items() if status == FAILS]
    if failing:
        logger.warning("両立性の恒等式が打ち切り次数で成り立ちません: %s", failing)

    rho_residual = apply_antilinear(ip.rho, psi).max_abs_difference(psi)
    out["rho_commutes"] = rho_residual <= tolerance
    out["rho_residual"] = rho_residual
    if not out["rho_commutes"]:
        logger.warning("Ψ が ρ と可換ではありません (残差 %.3g)", rho_residual)
    return out


# ---------------------------------------------------------------------------
# 形式的線形化可能性
# ---------------------------------------------------------------------------


@dataclass
class FormalTauAnswer:
    linearizable: bool
    witness: Optional[Dict[str, Any]] = None
    result: Optional[TauLinResult] = None
    centralizer: Optional[CentralizerCheck] = None

    @property
    def status(self) -> str:
        return "yes" if self.linearizable else "no"


def formal_tau_linearizability(
    ip: InvolutionPair,
    ideal: Optional[MonomialIdeal] = None,
    oracle_mode: Optional[str] = None,
    relations: Optional[Sequence[Sequence[int]]] = None,
    epsilon: float = 1e-9,
    threads: int = 1,
    tolerance: float = 1e-9,
) -> FormalTauAnswer:
    """
    τ1, τ2 がイデアル上で形式的に同時線形化できるかを判定する

    Φ の障害、または Ψ^{-1}τ_jΨ − T_j のイデアル外の係数のうち最初のものを証拠とする。
    """
    ideal = ideal if ideal is not None else MonomialIdeal.zero(ip.dim)
    mode, relations = _oracle_config(ip, oracle_mode, relations)
    fam = CommutingFamily([ip.phi], mode, relations, epsilon)
    centralizer = centralizer_condition(fam.oracle, ideal, ip.truncation)
    try:
        result = linearize_taus_on_ideal(ip, ideal, mode, relations, epsilon, threads, tolerance)
    except FormalObstruction as e:
        witness = {"source": "phi", "Q": list(e.Q), "j": e.j, "value": ip.backend.format(e.value)}
        logger.info("Φ に形式的障害があります: %s", witness)
        return FormalTauAnswer(False, witness, None, centralizer)
    except CompatibilityResidual as e:
        witness = {"source": "tau", **e.details}
        return FormalTauAnswer(False, witness, None, centralizer)
    return FormalTauAnswer(True, None, result, centralizer)


# ---------------------------------------------------------------------------
# 二次曲面との同値性
# ---------------------------------------------------------------------------


@dataclass
class QuadricEquivalence:
    status: str
    psi: Optional[GermMap] = None
    witness: Optional[Dict[str, Any]] = None
    omega: Optional[OmegaSequence] = None
    note: Optional[str] = None
    result: Optional[TauLinResult] = None


def quadric_equivalence(
    ip: InvolutionPair,
    oracle_mode: Optional[str] = None,
    relations: Optional[Sequence[Sequence[int]]] = None,
    epsilon: float = 1e-9,
    threads: int = 1,
    tolerance: float = 1e-9,
    max_omega_k: int = 4,
    max_enumeration_degree: int = 16,
) -> QuadricEquivalence:
    """
    零イデアルで τ1, τ2 を線形化し、二次曲面と同値かを判定する

    形式的に線形化できたときの小分母条件は ω_k の傾向として報告するだけで、
    証明はしない。
    """
    answer = formal_tau_linearizability(ip, None, oracle_mode, relations, epsilon, threads, tolerance)
    if not answer.linearizable:
        return QuadricEquivalence("not_formally_equivalent", witness=answer.witness)

    mode, relations = _oracle_config(ip, oracle_mode, relations)
    oracle = CommutingFamily([ip.phi], mode, relations, epsilon, check=False).oracle
    status, omega, note = "biholomorphic", None, None
    try:
        omega = omega_sequence(oracle, None, max_omega_k, max_enumeration_degree)
        if omega.verdict == "diverging-trend":
            status = "diophantine_unverified"
            note = "ω_k の傾向が発散を示しています"
    except VacuousInf:
        note = "小分母が現れません"
    except BudgetExceeded as e:
        status = "diophantine_unverified"
        note = e.message
    return QuadricEquivalence(status, answer.result.psi, None, omega, note, answer.result)


# ---------------------------------------------------------------------------
# 切断多様体
# ---------------------------------------------------------------------------


@dataclass
class VarietyComponent:
    zero_coordinates: Tuple[int, ...]
    t_invariant: bool
    rho_invariant: bool
    swapped_with: Optional[int] = None

    def equations(self, names: Sequence[str]) -> List[str]:
        return [f"{names[k]} = 0" for k in self.zero_coordinates]


@dataclass
class CuttingVariety:
    res_ideal: MonomialIdeal
    complete: bool
    components: List[VarietyComponent]
    adjustment: Tuple[int, ...]
    adjusted_components: List[VarietyComponent]
    real_trace: Dict[str, Any]
    hypotheses: Dict[str, bool]
    restricted: List[Dict[str, Any]] = field(default_factory=list)
    linearization: Optional[TauLinResult] = None
    linearization_error: Optional[Dict[str, Any]] = None
    names: List[str] = field(default_factory=list)


def _swap_coordinates(zeros: Sequence[int], p: int) -> Tuple[int, ...]:
    def partner(k: int) -> int:
        if k < p:
            return k + p
        if k < 2 * p:
            return k - p
        return k

    return tuple(sorted(partner(k) for k in zeros))


def _component(zeros: Tuple[int, ...], p: int, rho: linalg.Mat, backend) -> VarietyComponent:
    swapped = _swap_coordinates(zeros, p)
    rows = set(zeros)
    rho_invariant = all(
        backend.is_zero(rho[k][l]) for k in rows for l in range(len(rho)) if l not in rows
    )
    return VarietyComponent(zeros, swapped == tuple(sorted(zeros)), rho_invariant)


def _minimal_sets(sets: Sequence[Tuple[int, ...]]) -> List[Tuple[int, ...]]:
    unique = sorted(set(tuple(sorted(s)) for s in sets), key=lambda s: (len(s), s))
    out: List[Tuple[int, ...]] = []
    for s in unique:
        if not any(set(t) <= set(s) for t in out):
            out.append(s)
    return out


def _link_swaps(components: List[VarietyComponent], p: int) -> None:
    index = {c.zero_coordinates: k for k, c in enumerate(components)}
    for c in components:
        if not c.t_invariant:
            c.swapped_with = index.get(_swap_coordinates(c.zero_coordinates, p))


def cutting_variety(
    ip: InvolutionPair,
    decomposition: Optional[SpectralDecomposition] = None,
    degree_bound: Optional[int] = None,
    oracle_mode: Optional[str] = None,
    relations: Optional[Sequence[Sequence[int]]] = None,
    epsilon: float = 1e-9,
    threads: int = 1,
    tolerance: float = 1e-9,
) -> CuttingVariety:
    """
    共鳴イデアルの零点集合とその実跡 V(ResIdeal) ∩ Fix(ρ) を求める

    楕円型・複素型のブロックがあるときは ζ_e = η_e = 0 を加えた集合も記録する。
    """
    decomposition = decomposition or ip.decomposition
    if decomposition is None:
        raise UnsupportedConfiguration("切断多様体にはスペクトル分解が必要です")
    b, p, n = ip.backend, ip.p, ip.dim
    names = ip.names
    bound = degree_bound or ip.truncation
    mode, relations = _oracle_config(ip, oracle_mode, relations)
    fam = CommutingFamily([ip.phi], mode, relations, epsilon)
    resonance = res_ideal(fam.oracle, bound)
    ideal = resonance.ideal
    centralizer = centralizer_condition(fam.oracle, ideal, bound)

    slot_values = [b.to_complex(v) for v in linalg.diagonal(ip.phi_linear)[: 2 * p]]
    distinct = all(
        abs(slot_values[a] - slot_values[c]) > max(tolerance, 1e-12)
        for a in range(len(slot_values))
        for c in range(a + 1, len(slot_values))
    )
    hypotheses = {
        "distinct_eigenvalues": distinct,
        "all_hyperbolic": all(block.kind == HYPERBOLIC for block in decomposition.blocks),
        "centralizer_in_ideal": centralizer.holds,
    }
    if not all(hypotheses.values()):
        logger.info("切断多様体の仮定: %s", hypotheses)

    linearization, failure = None, None
    try:
        linearization = linearize_taus_on_ideal(ip, ideal, mode, relations, epsilon, threads, tolerance)
    except (FormalObstruction, CompatibilityResidual, UnsupportedConfiguration) as e:
        failure = e.to_dict()
        logger.warning("共鳴イデアル上での線形化に失敗しました: %s", e.message)

    components = [_component(tuple(z), p, ip.rho, b) for z in ideal.components()]
    _link_swaps(components, p)

    adjustment: Tuple[int, ...] = tuple(
        sorted(
            k
            for block in decomposition.blocks
            if block.kind in (ELLIPTIC, COMPLEX)
            for k in block.zeta_indices + block.eta_indices
        )
    )
    if adjustment:
        zero_sets = _minimal_sets([tuple(set(c.zero_coordinates) | set(adjustment)) for c in components])
        adjusted = [_component(z, p, ip.rho, b) for z in zero_sets]
        _link_swaps(adjusted, p)
    else:
        adjusted = list(components)

    equations = [f"{format_monomial(g, names, separator='')} = 0" for g in ideal.generators]
    equations += [f"{names[k]} = 0" for k in adjustment]
    coordinates = ",".join(names)
    condition = ", ".join(equations) if equations else "0 = 0"
    real_trace = {
        "equations": equations,
        "set": f"{{({coordinates}) ∈ Fix(ρ) : {condition}}}",
    }

    restricted = []
    for comp in adjusted:
        if not (comp.t_invariant and comp.rho_invariant):
            continue
        free = [k for k in range(n) if k not in comp.zero_coordinates]
        if not free:
            continue
        restricted.append(
            {
                "component": comp.equations(names),
                "coordinates": [names[k] for k in free],
                "T1": linalg.format_matrix([[ip.T1[r][c] for c in free] for r in free], b),
                "T2": linalg.format_matrix([[ip.T2[r][c] for c in free] for r in free], b),
            }
        )

    return CuttingVariety(
        res_ideal=ideal,
        complete=resonance.complete,
        components=components,
        adjustment=adjustment,
        adjusted_components=adjusted,
        real_trace=real_trace,
        hypotheses=hypotheses,
        restricted=restricted,
        linearization=linearization,
        linearization_error=failure,
        names=list(names),
    )
