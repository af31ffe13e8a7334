"""
germlab - 可換族のイデアル上での同時線形化

F_i(x) = D_i x + f_i(x) (D_i は対角) の可換族に対して、
F_i∘Φ = Φ∘G_i, G_i = D_i y + g_i, g_i の各成分はイデアル I に属する、
を満たす Φ を次数ごとに求める。

次数 d の係数は次の漸化式で決まる:

    (μ_i^Q − μ_{i,j}) φ_{j,Q} + g_{i,j,Q} = {F_i∘Φ − Φ∘G_i}_Q

右辺は次数 d 未満のデータだけで計算する (次数 d の未知部分はゼロとおく)。
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from . import linalg
from .errors import (
    FormalObstruction,
    HypothesisViolated,
    NonDiagonalLinearParts,
    NotAbelian,
    SeriesMismatch,
)
from .resonance import (
    AmbiguousResonance,
    DiagonalFamily,
    MonomialIdeal,
    ResonanceOracle,
    centralizer_monomials,
)
from .series import (
    GermMap,
    MultiIndex,
    TruncatedSeries,
    compose,
    invert_germ,
    monomials,
)

logger = logging.getLogger(__name__)

RULE_DIVIDE = "divide"
RULE_RESONANT = "resonant-zero"
RULE_IDEAL = "ideal"


# ---------------------------------------------------------------------------
# 可換性
# ---------------------------------------------------------------------------


@dataclass
class CommutativityReport:
    abelian: bool
    violation: Optional[Dict[str, Any]] = None


def check_commutativity(maps: Sequence[GermMap]) -> CommutativityReport:
    """全ての組 F_i∘F_j と F_j∘F_i を係数ごとに比較"""
    for a in maps[1:]:
        if a.nvars_in != maps[0].nvars_in or a.truncation != maps[0].truncation:
            raise SeriesMismatch("族の写像の次元または打ち切り次数が一致しません")
    for i in range(len(maps)):
        for j in range(i + 1, len(maps)):
            left = compose(maps[i], maps[j])
            right = compose(maps[j], maps[i])
            diff = left.first_difference(right)
            if diff is None:
                continue
            component, Q, a, b = diff
            backend = maps[i].backend
            if backend.name == "float" and backend.modulus(a - b) <= 1e-9:
                continue
            return CommutativityReport(
                False,
                {
                    "i": i,
                    "j": j,
                    "component": component,
                    "Q": list(Q),
                    "degree": sum(Q),
                    "left": backend.format(a),
                    "right": backend.format(b),
                },
            )
    return CommutativityReport(True)


class CommutingFamily:
    """
    対角線形部分をもつ可換な写像の族

    構築時に線形部分の対角性と可換性を検査する。
    """

    def __init__(
        self,
        maps: Sequence[GermMap],
        oracle_mode: Optional[str] = None,
        relations: Optional[Sequence[Sequence[int]]] = None,
        epsilon: float = 1e-9,
        check: bool = True,
    ):
        if not maps:
            raise SeriesMismatch("写像が1つもありません")
        self.maps: Tuple[GermMap, ...] = tuple(maps)
        first = self.maps[0]
        for k, F in enumerate(self.maps):
            if F.nvars_in != F.nvars_out or F.nvars_in != first.nvars_in:
                raise SeriesMismatch(f"写像 {k + 1} の次元が族と一致しません")
            if F.truncation != first.truncation or F.backend != first.backend:
                raise SeriesMismatch(f"写像 {k + 1} の打ち切り次数またはバックエンドが一致しません")
            if not linalg.is_diagonal(F.linear_part, F.backend):
                raise NonDiagonalLinearParts(f"写像 {k + 1} の線形部分が対角ではありません", index=k)
        self.n = first.nvars_in
        self.truncation = first.truncation
        self.backend = first.backend
        self.family = DiagonalFamily([linalg.diagonal(F.linear_part) for F in self.maps], self.backend)
        mode = oracle_mode or ("exact" if self.backend.name == "exact" else "numeric")
        self.oracle = ResonanceOracle(self.family, mode, relations, epsilon)
        if check:
            report = check_commutativity(self.maps)
            if not report.abelian:
                raise NotAbelian("族が可換ではありません", **report.violation)

    @property
    def l(self) -> int:  # noqa: E743
        return len(self.maps)

    def linear_maps(self) -> List[GermMap]:
        return [
            GermMap.from_matrix(self.family.matrix(i), self.truncation, self.backend)
            for i in range(self.l)
        ]


# ---------------------------------------------------------------------------
# 線形化
# ---------------------------------------------------------------------------


@dataclass
class TraceEntry:
    Q: MultiIndex
    j: int
    rule: str


@dataclass
class LinearizationResult:
    phi: GermMap
    residuals: List[GermMap]
    obstruction: Optional[FormalObstruction] = None
    normalized: bool = True
    trace: List[TraceEntry] = field(default_factory=list)
    warnings: List[AmbiguousResonance] = field(default_factory=list)
    completed_degree: int = 1

    @property
    def status(self) -> str:
        return "obstructed" if self.obstruction is not None else "linearized"

    def linearized_maps(self, fam: CommutingFamily) -> List[GermMap]:
        """G_i = D_i y + g_i"""
        return [lin + g for lin, g in zip(fam.linear_maps(), self.residuals)]


def _zero_map(n: int, N: int, backend) -> GermMap:
    return GermMap([TruncatedSeries.zero(n, N, backend)] * n)


def linearize_on_ideal(
    fam: CommutingFamily,
    ideal: MonomialIdeal,
    threads: int = 1,
    raise_on_obstruction: bool = True,
    progress_callback: Optional[Callable[[float], None]] = None,
) -> LinearizationResult:
    """
    族をイデアル上で同時に線形化する

    Args:
        fam: 可換族
        ideal: 単項式イデアル (対角族に対して自動的に不変)
        threads: 次数ごとの並列計算に使うスレッド数 (結果は変わらない)
        raise_on_obstruction: 障害があれば FormalObstruction を送出する
        progress_callback: 進行状況コールバック (0.0-1.0)

    Returns:
        LinearizationResult
    """
    if ideal.nvars != fam.n:
        raise SeriesMismatch(f"イデアルの変数の数 {ideal.nvars} と族の次元 {fam.n} が一致しません")
    n, N, backend = fam.n, fam.truncation, fam.backend
    oracle, family = fam.oracle, fam.family
    ident = GermMap.identity(n, N, backend)
    linear = fam.linear_maps()

    phi_terms: List[Dict[MultiIndex, Any]] = [{} for _ in range(n)]
    g_terms: List[List[Dict[MultiIndex, Any]]] = [[{} for _ in range(n)] for _ in range(fam.l)]
    trace: List[TraceEntry] = []
    warnings: List[AmbiguousResonance] = []

    def current_phi() -> GermMap:
        return ident + GermMap.from_terms(phi_terms, n, N, backend)

    def current_g(i: int) -> GermMap:
        return GermMap.from_terms(g_terms[i], n, N, backend)

    executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for d in range(2, N + 1):
            Phi = current_phi()

            def rhs_for(i: int, Phi=Phi, d=d) -> GermMap:
                G = linear[i] + current_g(i)
                diff = compose(fam.maps[i], Phi, truncation=d) - compose(Phi, G, truncation=d)
                return diff.project(lambda Q: sum(Q) == d)

            indices = range(fam.l)
            rhs = list(executor.map(rhs_for, indices)) if executor else [rhs_for(i) for i in indices]

            def solve_component(j: int, rhs=rhs, d=d):
                decided = []
                for Q in monomials(n, d):
                    values = [rhs[i][j].coefficient(Q) for i in range(fam.l)]
                    if Q in ideal:
                        decided.append((Q, RULE_IDEAL, None, values, None))
                        continue
                    answer = oracle.is_resonant(Q, j)
                    if not answer.resonant:
                        i0 = answer.i0
                        phi_value = values[i0] / answer.divisors[i0]
                        decided.append((Q, RULE_DIVIDE, phi_value, None, answer.warning))
                        continue
                    bad = next((i for i, v in enumerate(values) if not backend.is_zero(v)), None)
                    if bad is not None:
                        decided.append((Q, "obstruction", values[bad], bad, answer.warning))
                        break
                    decided.append((Q, RULE_RESONANT, None, None, answer.warning))
                return decided

            columns = (
                list(executor.map(solve_component, range(n)))
                if executor
                else [solve_component(j) for j in range(n)]
            )

            first_obstruction = None
            for j, decided in enumerate(columns):
                for Q, rule, value, extra, warning in decided:
                    if warning is not None:
                        warnings.append(warning)
                    if rule == "obstruction":
                        candidate = (Q, j, value, extra)
                        if first_obstruction is None or (Q, j) < first_obstruction[:2]:
                            first_obstruction = candidate
                        continue
                    trace.append(TraceEntry(Q, j, rule))
                    if rule == RULE_DIVIDE and not backend.is_zero(value):
                        phi_terms[j][Q] = value
                    elif rule == RULE_IDEAL:
                        for i, v in enumerate(extra):
                            if not backend.is_zero(v):
                                g_terms[i][j][Q] = v

            if first_obstruction is not None:
                Q, j, value, i = first_obstruction
                error = FormalObstruction(Q, j, value, i)
                logger.info("形式的障害: Q=%s j=%d", Q, j + 1)
                result = LinearizationResult(
                    current_phi(),
                    [current_g(i) for i in range(fam.l)],
                    error,
                    True,
                    trace,
                    warnings,
                    d - 1,
                )
                if raise_on_obstruction:
                    error.details["value"] = backend.format(value)
                    error.result = result
                    raise error
                return result

            logger.debug("線形化: 次数 %d/%d 完了", d, N)
            if progress_callback:
                progress_callback((d - 1) / max(N - 1, 1))
    finally:
        if executor:
            executor.shutdown()

    return LinearizationResult(
        current_phi(),
        [current_g(i) for i in range(fam.l)],
        None,
        True,
        trace,
        warnings,
        N,
    )


def linearize_on_res_ideal(fam: CommutingFamily, degree_bound: Optional[int] = None, **kwargs):
    """
    共鳴イデアル上で線形化する

    中心化単項式が共鳴イデアルに入らなければ HypothesisViolated。
    """
    from .resonance import centralizer_condition, res_ideal

    bound = degree_bound or fam.truncation
    ideal = res_ideal(fam.oracle, bound).ideal
    check = centralizer_condition(fam.oracle, ideal, bound)
    if not check.holds:
        Q, j = check.witness
        raise HypothesisViolated(
            "中心化単項式が共鳴イデアルに含まれません", Q=list(Q), j=j
        )
    return ideal, linearize_on_ideal(fam, ideal, **kwargs)


# ---------------------------------------------------------------------------
# 検証
# ---------------------------------------------------------------------------


@dataclass
class ConjugacyReport:
    passed: bool
    failures: List[Dict[str, Any]] = field(default_factory=list)


def verify_conjugacy(
    fam: CommutingFamily,
    result: LinearizationResult,
    ideal: MonomialIdeal,
    tolerance: float = 1e-9,
) -> ConjugacyReport:
    """Φ^{-1}∘F_i∘Φ − (D_i y + g_i) がゼロか、正規化と剰余の所属を再検査"""
    backend = fam.backend
    failures: List[Dict[str, Any]] = []
    phi_inv = invert_germ(result.phi)
    for i, (F, G) in enumerate(zip(fam.maps, result.linearized_maps(fam))):
        conj = compose(phi_inv, compose(F, result.phi))
        diff = conj.first_difference(G)
        if diff is not None:
            j, Q, a, b = diff
            if backend.modulus(a - b) > tolerance or backend.name == "exact":
                failures.append(
                    {"check": "conjugacy", "i": i, "j": j, "Q": list(Q), "value": backend.format(a - b)}
                )

    centralizer = set(centralizer_monomials(fam.oracle, fam.truncation))
    for j, comp in enumerate(result.phi.nonlinear_part()):
        for Q, c in comp.items():
            if Q in ideal or (Q, j) in centralizer:
                failures.append(
                    {"check": "normalization", "j": j, "Q": list(Q), "value": backend.format(c)}
                )
    for i, g in enumerate(result.residuals):
        for j, comp in enumerate(g):
            for Q, c in comp.items():
                if Q not in ideal:
                    failures.append(
                        {"check": "residual-ideal", "i": i, "j": j, "Q": list(Q), "value": backend.format(c)}
                    )
    return ConjugacyReport(not failures, failures)


@dataclass
class EquivarianceReport:
    passed: bool
    checks: Dict[str, Any] = field(default_factory=dict)


def apply_antilinear(P: linalg.Mat, germ: GermMap) -> GermMap:
    """ρ∘germ∘ρ, ρ(z) = P z̄"""
    backend = germ.backend
    P = linalg.make_matrix(P, backend)
    P_bar = linalg.conjugate(P, backend)
    inner = GermMap.from_matrix(P_bar, germ.truncation, backend)
    return compose(germ.conjugate(), inner).apply_matrix(P)


def _monomial_permutation(P: linalg.Mat, backend) -> Optional[List[int]]:
    """P が各行・各列に非零成分を1つだけ持つなら、その置換 (列 k -> 行)"""
    n = len(P)
    perm = [-1] * n
    for r in range(n):
        nz = [k for k in range(n) if not backend.is_zero(P[r][k])]
        if len(nz) != 1:
            return None
        perm[nz[0]] = r
    return perm if sorted(perm) == list(range(n)) else None


def check_rho_equivariance(
    fam: CommutingFamily,
    result: LinearizationResult,
    P: Sequence[Sequence[Any]],
    ideal: Optional[MonomialIdeal] = None,
    words: Optional[Sequence[Sequence[Tuple[int, int]]]] = None,
    tolerance: float = 1e-9,
) -> EquivarianceReport:
    """
    ρ(z) = P z̄ と Φ の可換性を検査

    Args:
        words: ρ∘F_i∘ρ を表す語 [(写像の添字, ±1), ...] のリスト。
            None のときは F_k または F_k^{-1} のいずれかと一致することを探す。
    """
    backend, N, n = fam.backend, fam.truncation, fam.n
    P = linalg.make_matrix(P, backend)
    if not linalg.equal(
        linalg.matmul(P, linalg.conjugate(P, backend), backend),
        linalg.identity(n, backend),
        backend,
        tolerance,
    ):
        raise HypothesisViolated("P P̄ = Id が成り立ちません", identity="P*conj(P) = Id")

    checks: Dict[str, Any] = {}
    inverses = [invert_germ(F) for F in fam.maps]

    def word_map(word: Sequence[Tuple[int, int]]) -> GermMap:
        out = GermMap.identity(n, N, backend)
        for index, power in word:
            step = fam.maps[index] if power > 0 else inverses[index]
            for _ in range(abs(power)):
                out = compose(out, step)
        return out

    found_words = []
    for i, F in enumerate(fam.maps):
        conj = apply_antilinear(P, F)
        if words is not None:
            target = word_map(words[i])
            if not conj.is_close(target, tolerance):
                raise HypothesisViolated(
                    f"ρ∘F_{i + 1}∘ρ が宣言された語と一致しません", identity=f"rho*F{i + 1}*rho", word=list(words[i])
                )
            found_words.append(list(words[i]))
            continue
        match = None
        for k in range(fam.l):
            for power, candidate in ((1, fam.maps[k]), (-1, inverses[k])):
                if conj.is_close(candidate, tolerance):
                    match = [(k, power)]
                    break
            if match:
                break
        if match is None:
            raise HypothesisViolated(
                f"ρ∘F_{i + 1}∘ρ が族の生成元またはその逆と一致しません", identity=f"rho*F{i + 1}*rho"
            )
        found_words.append(match)
    checks["words"] = found_words

    perm = _monomial_permutation(P, backend)
    if perm is None:
        checks["centralizer"] = "skipped"
        checks["ideal"] = "skipped"
    else:
        centralizer = set(centralizer_monomials(fam.oracle, N))
        moved = set()
        for Q, j in centralizer:
            R = [0] * n
            for k, q in enumerate(Q):
                R[perm[k]] = q
            moved.add((tuple(R), perm[j]))
        checks["centralizer"] = moved == centralizer
        if ideal is not None:
            checks["ideal"] = ideal.permuted(perm) == ideal
        if checks["centralizer"] is False:
            raise HypothesisViolated("ρ が中心化単項式の集合を保ちません", identity="rho*C_D*rho = C_D")
        if checks.get("ideal") is False:
            raise HypothesisViolated("ρ がイデアルを保ちません", identity="rho(I) = conj(I)")

    rho_phi_rho = apply_antilinear(P, result.phi)
    diff = rho_phi_rho.first_difference(result.phi)
    commutes = rho_phi_rho.is_close(result.phi, tolerance)
    checks["rho_phi_rho"] = commutes
    if not commutes and diff is not None:
        j, Q, a, b = diff
        checks["first_difference"] = {"j": j, "Q": list(Q)}
    return EquivarianceReport(commutes, checks)


def unit_circle_formal_hint(fam: CommutingFamily, degree_bound: Optional[int] = None) -> Dict[str, Any]:
    """
    各座標で単位円上の固有値をもつ非共鳴族には形式的障害がない、という判定材料
    """
    backend = fam.backend
    coords = []
    for k in range(fam.n):
        on_circle = [
            i for i in range(fam.l) if abs(backend.modulus(fam.family.mu[i][k]) - 1.0) <= 1e-12
        ]
        coords.append(on_circle)
    bound = degree_bound or fam.truncation
    nonresonant = not centralizer_monomials(fam.oracle, bound)
    applies = nonresonant and all(coords)
    return {
        "applies": applies,
        "unit_circle_maps_per_coordinate": coords,
        "nonresonant_up_to": bound if nonresonant else None,
    }
