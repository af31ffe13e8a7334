"""
germlab - 共鳴の算術

対角族 D_i = diag(μ_{i,1}, …, μ_{i,n}) について、
共鳴判定・不変単項式・中心化単項式・共鳴イデアル・小分母列 ω_k を計算する。

添字は Python 流に 0 始まり。レポートでは 1 始まりで表示する。
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations, product
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

from sympy import Matrix, expand, nsimplify, simplify
from sympy.matrices.normalforms import hermite_normal_form

from .coefficients import CoefficientBackend
from .errors import (
    BudgetExceeded,
    NonInvertibleLinearPart,
    UnsupportedConfiguration,
    VacuousInf,
)
from .series import MultiIndex, canonical_key, divides, format_monomial, monomials, sub_indices

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# 対角族
# ---------------------------------------------------------------------------


class DiagonalFamily:
    """l 個の可逆対角行列の族 (μ_{i,j})"""

    def __init__(self, mu: Sequence[Sequence[Any]], backend: CoefficientBackend):
        rows = [tuple(backend.make(v) for v in row) for row in mu]
        if not rows or not rows[0]:
            raise UnsupportedConfiguration("空の対角族は扱えません")
        n = len(rows[0])
        if any(len(r) != n for r in rows):
            raise UnsupportedConfiguration("各写像の固有値の数が一致しません")
        for i, row in enumerate(rows):
            for j, v in enumerate(row):
                if backend.is_zero(v):
                    raise NonInvertibleLinearPart(
                        f"μ[{i + 1}][{j + 1}] がゼロです (可逆ではありません)", i=i, j=j
                    )
        self.mu: Tuple[Tuple[Any, ...], ...] = tuple(rows)
        self.backend = backend
        self._power_cache: Dict[Tuple[int, MultiIndex], Any] = {}

    @property
    def l(self) -> int:  # noqa: E743
        return len(self.mu)

    @property
    def n(self) -> int:
        return len(self.mu[0])

    def power(self, i: int, Q: Sequence[int]):
        """μ_i^Q (負の指数も可)"""
        key = (i, tuple(Q))
        hit = self._power_cache.get(key)
        if hit is not None:
            return hit
        value = self.backend.one()
        for m, q in zip(self.mu[i], Q):
            if q:
                value = value * self.backend.power(m, q)
        self._power_cache[key] = value
        return value

    def divisor(self, i: int, Q: Sequence[int], j: int):
        """δ^i_{Q,j} = μ_i^Q − μ_{i,j}"""
        return self.power(i, Q) - self.mu[i][j]

    def matrix(self, i: int) -> List[List[Any]]:
        zero = self.backend.zero()
        return [[self.mu[i][j] if j == k else zero for k in range(self.n)] for j in range(self.n)]

    def to_complex(self) -> List[List[complex]]:
        return [[self.backend.to_complex(v) for v in row] for row in self.mu]


# ---------------------------------------------------------------------------
# 単項式イデアル
# ---------------------------------------------------------------------------


def _minimalize(generators: Sequence[MultiIndex]) -> Tuple[MultiIndex, ...]:
    gens = sorted(set(tuple(g) for g in generators), key=canonical_key)
    minimal: List[MultiIndex] = []
    for g in gens:
        if not any(divides(m, g) for m in minimal):
            minimal.append(g)
    return tuple(minimal)


@dataclass(frozen=True)
class ProperEmbedding:
    properly_embedded: bool
    free_variables: Tuple[int, ...]


class MonomialIdeal:
    """
    単項式で生成されるイデアル

    生成元は割り算について極小なものだけを保持する。
    """

    def __init__(self, nvars: int, generators: Sequence[Sequence[int]] = ()):
        for g in generators:
            if len(g) != nvars or any(q < 0 for q in g):
                raise UnsupportedConfiguration(f"生成元 {tuple(g)} は {nvars} 変数の単項式ではありません")
        self.nvars = nvars
        self.generators: Tuple[MultiIndex, ...] = _minimalize([tuple(g) for g in generators])

    @classmethod
    def zero(cls, nvars: int) -> "MonomialIdeal":
        return cls(nvars, ())

    @classmethod
    def maximal_power(cls, nvars: int, k: int) -> "MonomialIdeal":
        """極大イデアルの k 乗 (次数 k の単項式全体で生成)"""
        return cls(nvars, monomials(nvars, k))

    def __contains__(self, Q: Sequence[int]) -> bool:
        return any(divides(g, Q) for g in self.generators)

    def contains(self, Q: Sequence[int]) -> bool:
        return tuple(Q) in self

    def is_zero(self) -> bool:
        return not self.generators

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MonomialIdeal):
            return NotImplemented
        return self.nvars == other.nvars and self.generators == other.generators

    def __hash__(self):
        return hash((self.nvars, self.generators))

    def is_minimal(self) -> bool:
        return all(
            not divides(a, b) and not divides(b, a)
            for a, b in combinations(self.generators, 2)
        )

    def permuted(self, perm: Sequence[int]) -> "MonomialIdeal":
        """変数 x_k を x_{perm[k]} に置き換えたイデアル"""
        out = []
        for g in self.generators:
            Q = [0] * self.nvars
            for k, q in enumerate(g):
                Q[perm[k]] = q
            out.append(tuple(Q))
        return MonomialIdeal(self.nvars, out)

    def variables_involved(self) -> Tuple[int, ...]:
        return tuple(sorted({k for g in self.generators for k, q in enumerate(g) if q}))

    def components(self) -> List[Tuple[int, ...]]:
        """
        零点集合 V(I) の既約成分

        各成分は座標部分空間 {x_k = 0, k ∈ S} で、S は生成元の台の極小な横断集合。
        ゼロイデアルなら [()] (全空間)。
        """
        if not self.generators:
            return [()]
        supports = [set(k for k, q in enumerate(g) if q) for g in self.generators]
        if any(not s for s in supports):
            return []
        found: List[Tuple[int, ...]] = []
        for size in range(1, self.nvars + 1):
            for S in combinations(range(self.nvars), size):
                s = set(S)
                if any(set(f) <= s for f in found):
                    continue
                if all(sup & s for sup in supports):
                    found.append(S)
        return found

    def format(self, names: Optional[Sequence[str]] = None) -> str:
        if not self.generators:
            return "(0)"
        return "(" + ", ".join(format_monomial(g, names) for g in self.generators) + ")"

    def __repr__(self) -> str:
        return f"MonomialIdeal{self.format()}"


def properly_embedded(ideal: MonomialIdeal) -> ProperEmbedding:
    """生成元が全く含まない変数の集合 S を求める"""
    used = set(ideal.variables_involved())
    free = tuple(k for k in range(ideal.nvars) if k not in used)
    return ProperEmbedding(bool(free), free)


# ---------------------------------------------------------------------------
# 共鳴オラクル
# ---------------------------------------------------------------------------


class OracleMode(str, Enum):
    EXACT = "exact"
    LATTICE = "lattice"
    NUMERIC = "numeric"


@dataclass(frozen=True)
class AmbiguousResonance:
    """Numeric モードで判定が ε に近すぎることを示す警告"""

    Q: MultiIndex
    j: int
    margin: float
    epsilon: float


@dataclass
class ResonanceAnswer:
    resonant: bool
    divisors: List[Any] = field(default_factory=list)
    i0: Optional[int] = None
    margin: float = 0.0
    warning: Optional[AmbiguousResonance] = None


class ResonanceOracle:
    """
    μ_i^Q = μ_{i,j} (全ての i) を判定する

    - exact: ガウス有理数の厳密演算
    - lattice: 宣言された乗法的関係の格子 L について Q − e_j ∈ L
    - numeric: max_i |δ_i| ≤ ε
    """

    def __init__(
        self,
        family: DiagonalFamily,
        mode: str = "exact",
        relations: Optional[Sequence[Sequence[int]]] = None,
        epsilon: float = 1e-9,
    ):
        self.family = family
        self.mode = OracleMode(mode)
        self.epsilon = epsilon
        self.relations: List[Tuple[int, ...]] = [tuple(int(x) for x in r) for r in (relations or [])]
        self._lattice_cache: Dict[MultiIndex, bool] = {}
        if self.mode is OracleMode.EXACT and family.backend.name != "exact":
            raise UnsupportedConfiguration("exact オラクルには exact バックエンドの固有値が必要です")
        if self.mode is OracleMode.LATTICE:
            self._init_lattice()

    def _init_lattice(self) -> None:
        n = self.family.n
        for r in self.relations:
            if len(r) != n:
                raise UnsupportedConfiguration(f"関係ベクトル {r} の長さが {n} ではありません")
        if self.relations:
            R = Matrix(self.relations)
            if R.rank() != len(self.relations):
                raise UnsupportedConfiguration("関係ベクトルが一次独立ではありません (基底を指定してください)")
            self._relation_matrix_t = R.T
        for r in self.relations:
            for i in range(self.family.l):
                value = self.family.backend.to_complex(self.family.power(i, r))
                if abs(value - 1) > 1e-6:
                    logger.warning("宣言された関係 %s は写像 %d で数値的に成り立ちません (|μ^r−1|=%.3g)", r, i + 1, abs(value - 1))

    def in_lattice(self, v: Sequence[int]) -> bool:
        """整数ベクトル v が関係格子に属するか"""
        v = tuple(v)
        if not any(v):
            return True
        if not self.relations:
            return False
        hit = self._lattice_cache.get(v)
        if hit is not None:
            return hit
        try:
            sol, params = self._relation_matrix_t.gauss_jordan_solve(Matrix(v))
            result = params.shape[0] == 0 and all(c.is_integer for c in sol)
        except ValueError:
            result = False
        self._lattice_cache[v] = result
        return result

    def _resonant_by_mode(self, Q: MultiIndex, j: Optional[int], divisors: List[Any]) -> Tuple[bool, float, Optional[AmbiguousResonance]]:
        backend = self.family.backend
        margin = max((backend.modulus(d) for d in divisors), default=0.0)
        if self.mode is OracleMode.EXACT:
            return all(backend.is_zero(d) for d in divisors), margin, None
        if self.mode is OracleMode.LATTICE:
            target = Q if j is None else sub_indices(Q, tuple(1 if k == j else 0 for k in range(len(Q))))
            return self.in_lattice(target), margin, None
        resonant = margin <= self.epsilon
        warning = None
        if self.epsilon / 10 < margin <= 10 * self.epsilon:
            warning = AmbiguousResonance(Q, -1 if j is None else j, margin, self.epsilon)
            logger.warning("共鳴判定が曖昧です: Q=%s j=%s margin=%.3g ε=%.3g", Q, j, margin, self.epsilon)
        return resonant, margin, warning

    def is_resonant(self, Q: Sequence[int], j: int) -> ResonanceAnswer:
        """
        δ^i_{Q,j} = μ_i^Q − μ_{i,j} が全ての i で消えるか

        Returns:
            ResonanceAnswer (非共鳴なら |δ| 最大の添字 i0、同点は最小の i)
        """
        Q = tuple(Q)
        fam = self.family
        divisors = [fam.divisor(i, Q, j) for i in range(fam.l)]
        resonant, margin, warning = self._resonant_by_mode(Q, j, divisors)
        if resonant:
            return ResonanceAnswer(True, divisors, None, margin, warning)
        return ResonanceAnswer(False, divisors, self._argmax(divisors), margin, warning)

    def is_invariant(self, Q: Sequence[int]) -> bool:
        """μ_i^Q = 1 (全ての i)"""
        Q = tuple(Q)
        fam = self.family
        one = fam.backend.one()
        divisors = [fam.power(i, Q) - one for i in range(fam.l)]
        return self._resonant_by_mode(Q, None, divisors)[0]

    def _argmax(self, divisors: Sequence[Any]) -> int:
        backend = self.family.backend
        best = 0
        best_value = backend.modulus_squared(divisors[0])
        for i in range(1, len(divisors)):
            value = backend.modulus_squared(divisors[i])
            if value > best_value:
                best, best_value = i, value
        return best


# ---------------------------------------------------------------------------
# 不変単項式・中心化単項式・共鳴イデアル
# ---------------------------------------------------------------------------


@dataclass
class InvariantMonomials:
    invariants: List[MultiIndex]
    generators: List[MultiIndex]


def invariant_monomials(oracle: ResonanceOracle, degree_bound: int) -> InvariantMonomials:
    """次数 degree_bound 以下の不変単項式と、モノイドとしての極小生成系"""
    n = oracle.family.n
    invariants: List[MultiIndex] = []
    generators: List[MultiIndex] = []
    found: Set[MultiIndex] = set()
    for d in range(1, degree_bound + 1):
        for Q in monomials(n, d):
            if not oracle.is_invariant(Q):
                continue
            invariants.append(Q)
            decomposable = any(
                P != Q and divides(P, Q) and sub_indices(Q, P) in found for P in found
            )
            found.add(Q)
            if not decomposable:
                generators.append(Q)
    return InvariantMonomials(invariants, generators)


def centralizer_monomials(oracle: ResonanceOracle, degree_bound: int) -> List[Tuple[MultiIndex, int]]:
    """|Q| ≥ 2 で μ_i^Q = μ_{i,j} (全ての i) となる (Q, j)"""
    n = oracle.family.n
    out = []
    for d in range(2, degree_bound + 1):
        for Q in monomials(n, d):
            for j in range(n):
                if oracle.is_resonant(Q, j).resonant:
                    out.append((Q, j))
    return out


@dataclass
class ResIdealResult:
    ideal: MonomialIdeal
    generators: List[MultiIndex]
    complete: bool
    degree_bound: int


def res_ideal(oracle: ResonanceOracle, degree_bound: int) -> ResIdealResult:
    """
    不変単項式の生成元で生成される共鳴イデアル

    complete は、次数 ⌊bound/2⌋ 以下の生成元だけで bound 以下の不変単項式が
    全て得られる (上半分に新しい生成元が現れない) ことを示す。
    """
    inv = invariant_monomials(oracle, degree_bound)
    ideal = MonomialIdeal(oracle.family.n, inv.generators)
    for g in ideal.generators:
        if not oracle.is_invariant(g):
            raise UnsupportedConfiguration(f"共鳴イデアルの生成元 {g} が不変ではありません")
    complete = all(sum(g) <= degree_bound // 2 for g in inv.generators)
    return ResIdealResult(ideal, inv.generators, complete, degree_bound)


@dataclass
class CentralizerCheck:
    holds: bool
    witness: Optional[Tuple[MultiIndex, int]] = None
    checked: int = 0


def centralizer_condition(
    oracle: ResonanceOracle, ideal: MonomialIdeal, degree_bound: int
) -> CentralizerCheck:
    """中心化単項式 x^Q e_j が全てイデアルに入るか"""
    checked = 0
    for Q, j in centralizer_monomials(oracle, degree_bound):
        checked += 1
        if Q not in ideal:
            return CentralizerCheck(False, (Q, j), checked)
    return CentralizerCheck(True, None, checked)


# ---------------------------------------------------------------------------
# 小分母列 ω_k
# ---------------------------------------------------------------------------


@dataclass
class OmegaEntry:
    k: int
    value: float
    witness: Optional[Tuple[MultiIndex, int, int]]
    divisor: Any = None


@dataclass
class OmegaSequence:
    entries: List[OmegaEntry]
    partial_sums: List[float]
    verdict: str
    largest_k: int


def _trend(increments: Sequence[float]) -> str:
    if len(increments) < 2:
        return "flat"
    last, prev = increments[-1], increments[-2]
    if last <= 0 and prev <= 0:
        return "converging-trend"
    if prev <= 0:
        return "diverging-trend"
    ratio = last / prev
    if ratio <= 0.75:
        return "converging-trend"
    if ratio >= 1.25:
        return "diverging-trend"
    return "flat"


def omega_sequence(
    oracle: ResonanceOracle,
    ideal: Optional[MonomialIdeal],
    k_max: int,
    max_enumeration_degree: int = 16,
) -> OmegaSequence:
    """
    ω_k(D, I) = inf { max_i |μ_i^Q − μ_{i,j}| ≠ 0 : 2 ≤ |Q| ≤ 2^k, x^Q ∉ I }

    ideal が None のときは除外なしの ω_k(D)。
    """
    if k_max < 1:
        raise UnsupportedConfiguration("k_max は 1 以上が必要です")
    fam = oracle.family
    backend = fam.backend
    entries: List[OmegaEntry] = []
    partial: List[float] = []
    best_key = None
    best: Optional[OmegaEntry] = None
    top = 1
    total = 0.0
    for k in range(1, k_max + 1):
        upper = 2 ** k
        if upper > max_enumeration_degree:
            raise BudgetExceeded(
                f"ω_{k} の列挙は次数 {upper} が必要で、予算 {max_enumeration_degree} を超えます",
                largest_completed_k=k - 1,
            )
        for d in range(max(2, top + 1), upper + 1):
            for Q in monomials(fam.n, d):
                if ideal is not None and Q in ideal:
                    continue
                for j in range(fam.n):
                    answer = oracle.is_resonant(Q, j)
                    if answer.resonant:
                        continue
                    size = backend.modulus_squared(answer.divisors[answer.i0])
                    key = (size, Q, j)
                    if best_key is None or key < best_key:
                        best_key = key
                        best = OmegaEntry(
                            k,
                            backend.modulus(answer.divisors[answer.i0]),
                            (Q, j, answer.i0),
                            answer.divisors[answer.i0],
                        )
        top = upper
        if best is None:
            entries.append(OmegaEntry(k, math.inf, None))
            partial.append(total)
            continue
        entries.append(OmegaEntry(k, best.value, best.witness, best.divisor))
        total += -math.log(best.value) / 2 ** k
        partial.append(total)
        logger.debug("ω_%d = %.6g (witness %s)", k, best.value, best.witness)
    if best is None:
        raise VacuousInf("ω_k の下限をとる集合が空です")
    increments = [partial[0]] + [b - a for a, b in zip(partial, partial[1:])]
    return OmegaSequence(entries, partial, _trend(increments), k_max)


# ---------------------------------------------------------------------------
# 乗法的関係の検出
# ---------------------------------------------------------------------------


def _to_sympy_values(values: Sequence[Any], backend: Optional[CoefficientBackend]):
    out = []
    for v in values:
        if backend is not None and backend.name == "exact":
            out.append(backend.to_sympy(v))
        elif hasattr(v, "free_symbols"):
            out.append(v)
        else:
            out.append(None)
    return out


def detect_relations(
    values: Sequence[Any],
    bound: int = 6,
    backend: Optional[CoefficientBackend] = None,
    tolerance: float = 1e-9,
) -> List[Tuple[int, ...]]:
    """
    Π values_i^{r_i} = 1 となる整数ベクトル r (Σ|r_i| ≤ bound) を探し、
    関係格子の基底 (エルミート標準形) にまとめて返す。

    sympy の式 (代数的数) や exact 係数は厳密に、complex は許容誤差で判定する。
    """
    n = len(values)
    exact_values = _to_sympy_values(values, backend)
    numeric = []
    for raw, ex in zip(values, exact_values):
        if ex is not None:
            numeric.append(complex(ex.evalf()))
        elif backend is not None:
            numeric.append(backend.to_complex(raw))
        else:
            numeric.append(complex(raw))
    found: List[Tuple[int, ...]] = []
    for r in product(range(-bound, bound + 1), repeat=n):
        if not any(r) or sum(abs(x) for x in r) > bound:
            continue
        first = next(x for x in r if x)
        if first < 0:
            continue
        log_modulus = sum(x * math.log(abs(v)) for x, v in zip(r, numeric))
        if abs(log_modulus) > 1e-6:
            continue
        value = 1 + 0j
        for x, v in zip(r, numeric):
            value *= v ** x
        if abs(value - 1) > max(tolerance, 1e-6):
            continue
        if all(e is not None for e in exact_values):
            expr = 1
            for x, v in zip(r, exact_values):
                expr = expr * v ** x
            if simplify(expand(expr) - 1) != 0 and nsimplify(expand(expr)) != 1:
                continue
        elif abs(value - 1) > tolerance:
            continue
        found.append(tuple(r))
    if not found:
        return []
    hnf = hermite_normal_form(Matrix(found).T)
    basis = [tuple(int(x) for x in hnf[:, c]) for c in range(hnf.shape[1])]
    basis = [b if next(x for x in b if x) > 0 else tuple(-x for x in b) for b in basis if any(b)]
    logger.info("検出した乗法的関係: %s", basis)
    return sorted(basis)
