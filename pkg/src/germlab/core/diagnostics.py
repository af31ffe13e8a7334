"""
germlab - 優級数による小分母診断

線形化の係数 φ_{j,Q} を優級数 σ と小分母の積 η で上から抑えられるか、
また小さい分母の出現回数 φ^(k)(Q) が 2n|Q|/2^k 以下かを、打ち切り次数の範囲で確かめる。

収束の証明ではなく、有限次数での数値的な確認にすぎない。
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

from .coefficients import FloatBackend
from .errors import DiagnosticsBudgetExceeded, UnsupportedConfiguration, VacuousInf
from .linearize import CommutingFamily, LinearizationResult
from .resonance import MonomialIdeal, omega_sequence, properly_embedded
from .series import MultiIndex, TruncatedSeries, divides, monomials, monomials_up_to, sub_indices

logger = logging.getLogger(__name__)

RELATIVE_SLACK = 1e-9


@dataclass
class MajorantDiagnostics:
    degree: int
    a: float
    b: float
    theta: float
    delta: Dict[MultiIndex, float] = field(default_factory=dict)
    sigma: Dict[MultiIndex, float] = field(default_factory=dict)
    eta: Dict[MultiIndex, float] = field(default_factory=dict)
    phi_tilde: Dict[MultiIndex, float] = field(default_factory=dict)
    omega: Dict[int, float] = field(default_factory=dict)
    phi_counts: Dict[Tuple[int, MultiIndex], int] = field(default_factory=dict)
    violations: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def _multinomial(Q: MultiIndex) -> int:
    out = math.factorial(sum(Q))
    for q in Q:
        out //= math.factorial(q)
    return out


def _proper_divisors(Q: MultiIndex, pool: List[MultiIndex]) -> List[MultiIndex]:
    """0 < P ≤ Q, P ≠ Q を満たす pool の要素"""
    return [P for P in pool if P != Q and divides(P, Q)]


def _decomposition_max(
    Q: MultiIndex,
    pool: List[MultiIndex],
    value: Callable[[MultiIndex], float],
    combine: Callable[[float, float], float],
    empty: float,
    memo: Dict[MultiIndex, float],
) -> float:
    """
    Q = Q_1 + ... + Q_p + S (1 ≤ |Q_t| < |Q|) にわたる value(Q_t) の combine の最大値

    部分和 R に対する最大値 best(R) = max(empty, max_{0<P≤R} combine(value(P), best(R−P)))
    をメモ化して使う。
    """

    def best(R: MultiIndex) -> float:
        hit = memo.get(R)
        if hit is not None:
            return hit
        out = empty
        for P in pool:
            if divides(P, R):
                out = max(out, combine(value(P), best(sub_indices(R, P))))
        memo[R] = out
        return out

    result = None
    for P in _proper_divisors(Q, pool):
        candidate = combine(value(P), best(sub_indices(Q, P)))
        result = candidate if result is None else max(result, candidate)
    return empty if result is None else result


def _fit_majorant(fam: CommutingFamily, degree: int) -> Tuple[float, float]:
    """Σ_{i,j} f_{i,j} ≺ a s²/(1 − b s), s = Σ x_j となる a と 2 のべき b を選ぶ"""
    backend = fam.backend
    weights: Dict[MultiIndex, float] = {}
    for F in fam.maps:
        for comp in F.nonlinear_part():
            for Q, c in comp.items():
                if sum(Q) <= degree:
                    weights[Q] = weights.get(Q, 0.0) + backend.modulus(c)
    if not weights:
        return 0.0, 1.0
    ratios = {Q: w / _multinomial(Q) for Q, w in weights.items()}
    a = max((r for Q, r in ratios.items() if sum(Q) == 2), default=0.0)
    if a == 0.0:
        a = max(ratios.values())
    b = 1.0
    for Q, r in ratios.items():
        d = sum(Q)
        while a * b ** (d - 2) < r * (1 - RELATIVE_SLACK):
            b *= 2.0
    return a, b


def _sigma(n: int, degree: int, a: float, b: float, ideal: MonomialIdeal) -> Dict[MultiIndex, float]:
    """σ = a(Σy + σ)²/(1 − b(Σy + σ)) をイデアルの外で次数ごとに解く"""
    backend = FloatBackend(0.0)
    linear = TruncatedSeries(n, degree, backend, {tuple(1 if k == j else 0 for k in range(n)): 1.0 for j in range(n)})
    one = TruncatedSeries.constant(1.0, n, degree, backend)
    sigma = TruncatedSeries.zero(n, degree, backend)
    for _ in range(2, degree + 1):
        s = linear + sigma
        geometric = one
        for _ in range(degree - 2):
            geometric = one + (s * geometric).scale(b)
        majorant = (s * s * geometric).scale(a)
        sigma = majorant.project(lambda Q: sum(Q) >= 2 and Q not in ideal)
    return {Q: c.real for Q, c in sigma.items()}


def majorant_diagnostics(
    fam: CommutingFamily,
    ideal: MonomialIdeal,
    result: LinearizationResult,
    degree: Optional[int] = None,
    max_degree: int = 8,
    max_omega_k: int = 4,
    max_enumeration_degree: int = 16,
) -> MajorantDiagnostics:
    """
    優級数による評価を打ち切り次数の範囲で確認する

    Args:
        fam: 線形化した可換族
        ideal: 線形化に使ったイデアル
        result: linearize_on_ideal の結果 (障害なし)
        degree: 診断する次数 (省略時は min(max_degree, N))
        max_degree: η の分解列挙の上限
        max_omega_k: ω_k を計算する k の上限
        max_enumeration_degree: ω_k の列挙予算

    Returns:
        MajorantDiagnostics (不等式が破れた箇所は violations に記録)
    """
    if result.obstruction is not None:
        raise UnsupportedConfiguration("障害のある線形化結果には診断を行えません")
    if degree is not None and degree > max_degree:
        raise DiagnosticsBudgetExceeded(
            f"診断次数 {degree} は上限 {max_degree} を超えています", degree=degree, cap=max_degree
        )
    n, backend, oracle = fam.n, fam.backend, fam.oracle
    N = min(degree or max_degree, fam.truncation)

    delta: Dict[MultiIndex, float] = {}
    outside = [Q for Q in monomials_up_to(n, N, 2) if Q not in ideal]
    for Q in outside:
        values = []
        for j in range(n):
            answer = oracle.is_resonant(Q, j)
            size = 0.0 if answer.resonant else backend.modulus(answer.divisors[answer.i0])
            if size:
                values.append(size)
        delta[Q] = min(values) if values else 0.0

    phi_tilde: Dict[MultiIndex, float] = {}
    for Q in outside:
        total = sum(backend.modulus(comp.coefficient(Q)) for comp in result.phi)
        phi_tilde[Q] = total if delta[Q] else 0.0

    a, b = _fit_majorant(fam, N)
    sigma = _sigma(n, N, a, b, ideal)

    units = [Q for Q in monomials(n, 1) if Q not in ideal]
    pool = units + outside
    eta: Dict[MultiIndex, float] = {Q: 1.0 for Q in units}
    products: Dict[MultiIndex, float] = {}
    for Q in outside:
        if not delta[Q]:
            eta[Q] = 0.0
            continue
        best = _decomposition_max(
            Q, [P for P in pool if sum(P) < sum(Q)], lambda P: eta[P], lambda x, y: x * y, 1.0, products
        )
        eta[Q] = best / delta[Q]

    report = MajorantDiagnostics(N, a, b, 0.0, delta, {Q: sigma.get(Q, 0.0) for Q in outside}, eta, phi_tilde)

    for Q in outside:
        bound = report.sigma[Q] * eta[Q]
        if phi_tilde[Q] > bound * (1 + RELATIVE_SLACK) + 1e-12:
            report.violations.append(
                {"check": "phi-majorant", "Q": list(Q), "phi_tilde": phi_tilde[Q], "bound": bound}
            )

    # 小分母の出現回数
    embedding = properly_embedded(ideal)
    columns = embedding.free_variables if embedding.properly_embedded else tuple(range(n))
    smallest = min(backend.modulus(fam.family.mu[i][j]) for i in range(fam.l) for j in columns)
    report.theta = min(1.0, smallest) / 4

    k_top = max(1, min(max_omega_k, math.ceil(math.log2(max(N, 2)))))
    try:
        sequence = omega_sequence(oracle, ideal, k_top, max_enumeration_degree)
        report.omega = {e.k: e.value for e in sequence.entries}
    except VacuousInf:
        report.omega = {k: math.inf for k in range(1, k_top + 1)}

    for k in range(1, k_top + 1):
        threshold = report.theta * report.omega[k]

        def psi(Q: MultiIndex) -> int:
            return int(0 < delta[Q] < threshold)

        counts: Dict[MultiIndex, float] = {Q: 0.0 for Q in units}
        memo: Dict[MultiIndex, float] = {}
        for Q in outside:
            counts[Q] = psi(Q) + _decomposition_max(
                Q, [P for P in pool if sum(P) < sum(Q)], lambda P: counts[P], lambda x, y: x + y, 0.0, memo
            )
            report.phi_counts[(k, Q)] = int(counts[Q])
            d = sum(Q)
            if d <= 2 ** k and counts[Q] != 0:
                report.violations.append(
                    {"check": "small-divisor-count", "k": k, "Q": list(Q), "count": int(counts[Q]), "bound": 0}
                )
            elif d > 2 ** k and counts[Q] > 2 * n * d / 2 ** k:
                report.violations.append(
                    {
                        "check": "small-divisor-count",
                        "k": k,
                        "Q": list(Q),
                        "count": int(counts[Q]),
                        "bound": 2 * n * d / 2 ** k,
                    }
                )

    if report.violations:
        logger.warning("優級数診断で %d 件の不一致があります", len(report.violations))
    else:
        logger.info("優級数診断: 次数 %d まで全て成立", N)
    return report
