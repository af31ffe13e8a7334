"""
germlab - CR 特異点をもつ実解析的部分多様体

C^n の (n+p-1) 次元部分多様体
    z'' = x'' + i F(z', z̄', x''),   z_n = G(z', z̄', x'')
の 2-jet を一般化 Bishop 正規形に整え、複素化して対合 τ1, τ2 と
Φ = τ1∘τ2、反線形対合 ρ を作り、DΦ(0) のスペクトル分解を求める。

級数は z̄' を独立変数 w' に置き換えた (z', w', x'') の 2p+q 変数で持つ。
C^n の座標は (z', z'', z_n) の順に並べる。
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from sympy import Matrix, Rational, im, simplify, sqrt, sympify

from . import linalg
from .coefficients import CoefficientBackend, FloatBackend
from .errors import (
    BranchMismatch,
    Cond1Violated,
    Cond2Violated,
    DegenerateSesquilinear,
    GermlabError,
    NotInvolution,
    RealityViolated,
    SeriesMismatch,
    SpanDeficient,
    UnsupportedConfiguration,
    ZeroBishopInvariant,
)
from .linearize import apply_antilinear
from .resonance import OracleMode, detect_relations
from .series import (
    GermMap,
    MultiIndex,
    TruncatedSeries,
    change_backend,
    compose,
    compose_series,
    invert_germ,
    solve_implicit,
)

logger = logging.getLogger(__name__)

HYPERBOLIC = "hyperbolic"
ELLIPTIC = "elliptic"
COMPLEX = "complex"

# 列挙する関係ベクトルの総数の上限
RELATION_SEARCH_CAP = 200_000


def _index(nvars: int, *positions: int) -> MultiIndex:
    Q = [0] * nvars
    for k in positions:
        Q[k] += 1
    return tuple(Q)


def raw_names(p: int, q: int) -> List[str]:
    """複素化した座標の表示名 (z', w', x'')"""
    return (
        [f"z{i + 1}" for i in range(p)]
        + [f"w{i + 1}" for i in range(p)]
        + [f"x{p + a + 1}" for a in range(q)]
    )


def normal_names(p: int, q: int) -> List[str]:
    return (
        [f"ζ{i + 1}" for i in range(p)]
        + [f"η{i + 1}" for i in range(p)]
        + [f"υ{a + 1}" for a in range(q)]
    )


# ---------------------------------------------------------------------------
# 多様体データ
# ---------------------------------------------------------------------------


def reality_conjugate(f: TruncatedSeries, p: int) -> TruncatedSeries:
    """z' と w' を入れ替えて係数を共役にした級数 (実数値関数なら自分自身に一致)"""

    def swap(Q: MultiIndex) -> MultiIndex:
        return Q[p : 2 * p] + Q[:p] + Q[2 * p :]

    return f.map_indices(swap).conjugate()


@dataclass
class ManifoldData:
    """
    部分多様体の定義データ

    F は q 個の実数値級数、G は複素数値の級数で、どちらも (z', w', x'') の関数。
    """

    p: int
    n: int
    F: List[TruncatedSeries]
    G: TruncatedSeries
    check_reality: bool = True

    def __post_init__(self):
        if self.p < 1 or self.n < self.p + 1:
            raise UnsupportedConfiguration(
                f"次元が不正です: p={self.p}, n={self.n} (1 ≤ p ≤ n-1 が必要)", p=self.p, n=self.n
            )
        self.F = list(self.F)
        if len(self.F) != self.q:
            raise SeriesMismatch(f"F の成分数 {len(self.F)} が q={self.q} と一致しません")
        for series in [*self.F, self.G]:
            if series.nvars != self.nvars:
                raise SeriesMismatch(
                    f"級数の変数の数 {series.nvars} が 2p+q={self.nvars} と一致しません"
                )
            if series.truncation != self.G.truncation or series.backend != self.G.backend:
                raise SeriesMismatch("F と G の打ち切り次数・バックエンドが一致しません")
        if self.check_reality:
            self.ensure_reality()

    @property
    def q(self) -> int:
        return self.n - self.p - 1

    @property
    def nvars(self) -> int:
        return 2 * self.p + self.q

    @property
    def backend(self) -> CoefficientBackend:
        return self.G.backend

    @property
    def truncation(self) -> int:
        return self.G.truncation

    def ensure_reality(self, tolerance: float = 1e-9) -> None:
        """各 F_α が実数値 (係数の対称性) であることを確かめる"""
        b = self.backend
        for alpha, f in enumerate(self.F):
            for Q, c in (f - reality_conjugate(f, self.p)).items():
                if b.close(c, b.zero(), tolerance):
                    continue
                raise RealityViolated(
                    f"F_{self.p + alpha + 1} が実数値ではありません (多重指数 {list(Q)})",
                    alpha=alpha,
                    Q=list(Q),
                )

    @classmethod
    def quadric(
        cls,
        gamma: Sequence[Any],
        n: Optional[int] = None,
        truncation: int = 4,
        backend: Optional[CoefficientBackend] = None,
        D: Optional[Sequence[Sequence[Any]]] = None,
    ) -> "ManifoldData":
        """
        Bishop 型の二次曲面 z'' = x'', z_n = Σ d_il z_i z̄_l + Σ γ_i (z_i² + z̄_i²)

        Args:
            gamma: 一般化 Bishop 不変量 (p 個)
            n: 周囲の次元 (省略時は p+1)
            truncation: 打ち切り次数
            backend: 係数バックエンド (省略時は float)
            D: 半双線形部分の係数 (省略時は単位行列)
        """
        backend = backend or FloatBackend()
        p = len(gamma)
        n = n or p + 1
        nv = 2 * p + (n - p - 1)
        D = D if D is not None else linalg.identity(p, backend)
        terms: Dict[MultiIndex, Any] = {}
        for i in range(p):
            for l in range(p):
                terms[_index(nv, i, p + l)] = backend.make(D[i][l])
            g = backend.make(gamma[i])
            terms[_index(nv, i, i)] = g
            terms[_index(nv, p + i, p + i)] = g
        G = TruncatedSeries(nv, truncation, backend, terms)
        F = [TruncatedSeries.zero(nv, truncation, backend) for _ in range(n - p - 1)]
        return cls(p, n, F, G)


# ---------------------------------------------------------------------------
# 2-jet
# ---------------------------------------------------------------------------


@dataclass
class AlphaJet:
    """F_α の 2-jet: 半双線形 D, 正則部 E, x''x'' 部 a, x''z' 部 b"""

    D: linalg.Mat
    E: linalg.Mat
    a: linalg.Mat
    b: linalg.Mat

    def is_zero(self, backend: CoefficientBackend) -> bool:
        return all(backend.is_zero(v) for M in (self.D, self.E, self.a, self.b) for row in M for v in row)


@dataclass
class QuadricJetData:
    """
    G の 2-jet の係数行列

    D[i][l] は z_i w_l の係数、E, F は z'z', w'w' 部分の対称行列、
    a は x''x'' 部分の対称行列、b[α][i], c[α][i] は x_α z_i, x_α w_i の係数。
    """

    D: linalg.Mat
    E: linalg.Mat
    F: linalg.Mat
    a: linalg.Mat
    b: linalg.Mat
    c: linalg.Mat
    alpha: List[AlphaJet] = field(default_factory=list)


def _symmetric_block(f: TruncatedSeries, start: int, size: int, half: Any) -> linalg.Mat:
    nv = f.nvars
    out = []
    for i in range(size):
        row = []
        for l in range(size):
            c = f.coefficient(_index(nv, start + i, start + l))
            row.append(c if i == l else c * half)
        out.append(row)
    return out


def _cross_block(f: TruncatedSeries, row_start: int, rows: int, col_start: int, cols: int) -> linalg.Mat:
    nv = f.nvars
    return [
        [f.coefficient(_index(nv, row_start + r, col_start + c)) for c in range(cols)]
        for r in range(rows)
    ]


def extract_jets(m: ManifoldData) -> QuadricJetData:
    """G と各 F_α の 2-jet を係数行列に分ける"""
    p, q, b = m.p, m.q, m.backend
    m.ensure_reality()
    for k, series in enumerate([*m.F, m.G]):
        if series.homogeneous(1):
            raise UnsupportedConfiguration(
                "1次の項を含む F, G は扱えません (接空間を z'' = x'', z_n = 0 に揃えてください)",
                component=k,
            )
    half = b.make("1/2")
    G = m.G
    jets = QuadricJetData(
        D=_cross_block(G, 0, p, p, p),
        E=_symmetric_block(G, 0, p, half),
        F=_symmetric_block(G, p, p, half),
        a=_symmetric_block(G, 2 * p, q, half),
        b=_cross_block(G, 2 * p, q, 0, p),
        c=_cross_block(G, 2 * p, q, p, p),
    )
    for f in m.F:
        jets.alpha.append(
            AlphaJet(
                D=_cross_block(f, 0, p, p, p),
                E=_symmetric_block(f, 0, p, half),
                a=_symmetric_block(f, 2 * p, q, half),
                b=_cross_block(f, 2 * p, q, 0, p),
            )
        )
    return jets


# ---------------------------------------------------------------------------
# 正則座標変換
# ---------------------------------------------------------------------------


def apply_holomorphic_change(m: ManifoldData, chi: GermMap) -> ManifoldData:
    """
    C^n の正則座標変換 χ で多様体データを移す

    像 χ(M) をパラメータ (Z', Z̄', Re Z'') のグラフとして解き直す。
    """
    p, q, n, N, b = m.p, m.q, m.n, m.truncation, m.backend
    if chi.nvars_in != n or chi.nvars_out != n:
        raise SeriesMismatch(f"座標変換は C^{n} の写像である必要があります")
    nv = m.nvars
    i_unit = b.make((0, 1))

    def var(k: int) -> TruncatedSeries:
        return TruncatedSeries.variable(k, nv, N, b)

    z_side = GermMap(
        [var(i) for i in range(p)]
        + [var(2 * p + a) + m.F[a].scale(i_unit) for a in range(q)]
        + [m.G]
    )
    w_side = GermMap(
        [var(p + i) for i in range(p)]
        + [var(2 * p + a) - m.F[a].scale(i_unit) for a in range(q)]
        + [reality_conjugate(m.G, p)]
    )
    Z = compose(chi.truncated(N), z_side)
    W = compose(chi.truncated(N).conjugate(), w_side)

    half = b.make("1/2")
    params = GermMap(
        [Z[i] for i in range(p)]
        + [W[i] for i in range(p)]
        + [(Z[p + a] + W[p + a]).scale(half) for a in range(q)]
    )
    inverse = invert_germ(params)
    minus_half_i = b.make((0, "-1/2"))
    F_new = [compose_series((Z[p + a] - W[p + a]).scale(minus_half_i), inverse) for a in range(q)]
    G_new = compose_series(Z[n - 1], inverse)
    return ManifoldData(p, n, F_new, G_new, check_reality=False)


def _coordinate_change(m: ManifoldData, replacements: Dict[int, TruncatedSeries]) -> GermMap:
    ident = GermMap.identity(m.n, m.truncation, m.backend)
    return GermMap([replacements.get(k, c) for k, c in enumerate(ident)])


def _linear_form(m: ManifoldData, coefficients: Dict[int, Any]) -> TruncatedSeries:
    n = m.n
    return TruncatedSeries(
        n, m.truncation, m.backend, {_index(n, k): c for k, c in coefficients.items()}
    )


# ---------------------------------------------------------------------------
# 2-jet の正規化
# ---------------------------------------------------------------------------


@dataclass
class PreparedQuadric:
    gamma: List[Any]
    D_normalized: linalg.Mat
    coordinate_change: GermMap
    prepared: ManifoldData
    steps: List[str] = field(default_factory=list)
    cond1_determinant: Optional[str] = None
    cond1_bishop_determinant: Optional[str] = None

    @property
    def p(self) -> int:
        return self.prepared.p

    @property
    def backend(self) -> CoefficientBackend:
        return self.prepared.backend


def _all_zero(A: linalg.Mat, backend: CoefficientBackend, tolerance: float) -> bool:
    return all(backend.close(v, backend.zero(), tolerance) for row in A for v in row)


def _bishop_congruence(S: linalg.Mat, backend: CoefficientBackend, tolerance: float) -> Optional[linalg.Mat]:
    """z' = V ζ で S を非負対角にする V (変換不要なら None)"""
    diagonal = linalg.diagonal(S)
    if linalg.is_diagonal(S, backend) and all(
        backend.is_real(s) and backend.to_complex(s).real >= -tolerance for s in diagonal
    ):
        return None
    if backend.name == "exact":
        if not linalg.is_diagonal(S, backend):
            raise UnsupportedConfiguration(
                "exact バックエンドでは w'w' 部分の対称行列を対角で与えてください",
                S=linalg.format_matrix(S, backend),
            )
        factors = []
        for s in diagonal:
            if not backend.is_real(s):
                raise UnsupportedConfiguration(
                    "exact バックエンドでは対角成分は実数で与えてください", value=backend.format(s)
                )
            factors.append(backend.make((0, 1)) if backend.to_complex(s).real < 0 else backend.one())
        return linalg.diag(factors, backend)
    _, U = linalg.takagi(S, backend)
    return U


def _bishop_determinant(M: linalg.Mat, S: linalg.Mat, b: CoefficientBackend) -> Optional[str]:
    """S が可逆なら det(¼ S^{-1} M S̄^{-1} M̄ − I) を文字列で返す"""
    if not linalg.is_invertible(S, b):
        return None
    S_inv = linalg.inverse(S, b)
    S_bar_inv = linalg.conjugate(S_inv, b)
    quarter = b.make("1/4")
    product = linalg.matmul(
        linalg.matmul(linalg.matmul(S_inv, M, b), S_bar_inv, b), linalg.conjugate(M, b), b
    )
    value = linalg.det(linalg.sub(linalg.scale(quarter, product), linalg.identity(len(S), b)), b)
    return b.format(b.make(value))


def prepare_quadric(m: ManifoldData, tolerance: float = 1e-9) -> PreparedQuadric:
    """
    2-jet を一般化 Bishop 正規形に変換する

    Args:
        m: 部分多様体のデータ (F, G は 2 次以上)
        tolerance: float バックエンドでの零判定

    Returns:
        PreparedQuadric (各段の座標変換を合成したものと変換後のデータ)
    """
    b, p, q, n = m.backend, m.p, m.q, m.n
    nv = m.nvars
    jets = extract_jets(m)
    if _all_zero(jets.D, b, tolerance):
        raise DegenerateSesquilinear("半双線形部分が 0 です")

    total = GermMap.identity(n, m.truncation, b)
    steps: List[str] = []

    def apply(chi: GermMap, label: str) -> QuadricJetData:
        nonlocal m, total
        m = apply_holomorphic_change(m, chi)
        total = compose(chi, total)
        steps.append(label)
        logger.debug("2-jet 正規化: %s", label)
        return extract_jets(m)

    # 対称部分の対角化
    V = _bishop_congruence(jets.F, b, tolerance)
    if V is not None:
        V_inv = linalg.inverse(V, b)
        chi = _coordinate_change(
            m, {i: _linear_form(m, {k: V_inv[i][k] for k in range(p)}) for i in range(p)}
        )
        jets = apply(chi, "diagonalize-symmetric-part")

    # 半双線形部分の作用素ノルムを 1 に
    if b.name == "exact":
        norm = linalg.exact_operator_norm(jets.D, b)
        if norm is None:
            raise UnsupportedConfiguration(
                "半双線形部分の作用素ノルムが有理数ではありません (float バックエンドを使ってください)"
            )
    else:
        norm = b.make(linalg.operator_norm(jets.D, b))
    if not b.close(norm, b.one(), tolerance):
        chi = _coordinate_change(m, {n - 1: _linear_form(m, {n - 1: b.inv(norm)})})
        jets = apply(chi, "normalize-sesquilinear-norm")

    # z'z' 部分を w'w' 部分にそろえる
    terms: Dict[MultiIndex, Any] = {}
    for i in range(p):
        for l in range(i, p):
            delta = m.G.coefficient(_index(nv, p + i, p + l)) - m.G.coefficient(_index(nv, i, l))
            if not b.close(delta, b.zero(), tolerance):
                terms[_index(n, i, l)] = delta
    if terms:
        correction = TruncatedSeries(n, m.truncation, b, terms)
        chi = _coordinate_change(m, {n - 1: TruncatedSeries.variable(n - 1, n, m.truncation, b) + correction})
        jets = apply(chi, "match-holomorphic-terms")

    # x''w' 項を z' の変換で消す
    M = linalg.transpose(jets.D)
    two = b.make(2)
    S2 = linalg.scale(two, jets.F)
    system = linalg.block(
        [[M, S2], [linalg.conjugate(S2, b), linalg.conjugate(M, b)]]
    )
    determinant = b.format(b.make(linalg.det(system, b)))
    bishop_determinant = _bishop_determinant(M, jets.F, b)
    if not linalg.is_invertible(system, b):
        raise Cond1Violated(
            "x''z̄' 項を消す連立方程式が特異です",
            determinant=determinant,
            bishop_determinant=bishop_determinant,
        )
    if q and not _all_zero(jets.c, b, tolerance):
        system_inv = linalg.inverse(system, b, Cond1Violated)
        replacements: Dict[int, TruncatedSeries] = {}
        A = [[b.zero()] * q for _ in range(p)]
        for alpha in range(q):
            rhs = [-v for v in jets.c[alpha]] + [-b.conj(v) for v in jets.c[alpha]]
            solution = linalg.matvec(system_inv, rhs, b)
            for i in range(p):
                A[i][alpha] = solution[i]
        for i in range(p):
            coefficients = {i: b.one()}
            coefficients.update({p + alpha: -A[i][alpha] for alpha in range(q)})
            replacements[i] = _linear_form(m, coefficients)
        jets = apply(_coordinate_change(m, replacements), "remove-x-conj-z-terms")

    # x''x'' 項と x''z' 項を z_n の変換で消す
    if q:
        terms = {}
        for alpha in range(q):
            for beta in range(alpha, q):
                c = m.G.coefficient(_index(nv, 2 * p + alpha, 2 * p + beta))
                if not b.close(c, b.zero(), tolerance):
                    terms[_index(n, p + alpha, p + beta)] = -c
            for i in range(p):
                c = jets.b[alpha][i]
                if not b.close(c, b.zero(), tolerance):
                    terms[_index(n, p + alpha, i)] = -c
        if terms:
            correction = TruncatedSeries(n, m.truncation, b, terms)
            chi = _coordinate_change(
                m, {n - 1: TruncatedSeries.variable(n - 1, n, m.truncation, b) + correction}
            )
            jets = apply(chi, "remove-x-terms")

    # F_α の半双線形部分は G の半双線形部分に比例している必要がある
    # (Re G の半双線形部分は D のエルミート部分)
    if q:
        half = b.make("1/2")
        h = linalg.scale(half, linalg.add(jets.D, linalg.transpose(linalg.conjugate(jets.D, b))))
        denominator = b.zero()
        for row in h:
            for v in row:
                denominator = denominator + b.conj(v) * v
        replacements = {}
        for alpha, jet in enumerate(jets.alpha):
            if _all_zero(jet.D, b, tolerance):
                continue
            lam = b.zero()
            if not b.close(denominator, b.zero(), tolerance):
                numerator = b.zero()
                for i in range(p):
                    for l in range(p):
                        numerator = numerator + b.conj(h[i][l]) * jet.D[i][l]
                lam = b.div(numerator, denominator)
            residual = linalg.sub(jet.D, linalg.scale(lam, h))
            if not b.is_real(lam) or not _all_zero(residual, b, tolerance):
                raise Cond2Violated(
                    f"F_{p + alpha + 1} の半双線形部分が G の半双線形部分に比例しません",
                    alpha=alpha,
                    residual=linalg.format_matrix(residual, b),
                )
            replacements[p + alpha] = _linear_form(m, {p + alpha: b.one(), n - 1: -b.make((0, 1)) * lam})
        if replacements:
            jets = apply(_coordinate_change(m, replacements), "remove-sesquilinear-parts-of-F")

    # F_α の残りの 2 次項
    if q:
        i_unit = b.make((0, 1))
        replacements = {}
        for alpha, f in enumerate(m.F):
            terms = {}
            for i in range(p):
                for l in range(i, p):
                    c = f.coefficient(_index(nv, i, l))
                    if not b.close(c, b.zero(), tolerance):
                        terms[_index(n, i, l)] = b.make(-2) * i_unit * c
            for beta in range(q):
                for gamma in range(beta, q):
                    c = f.coefficient(_index(nv, 2 * p + beta, 2 * p + gamma))
                    if not b.close(c, b.zero(), tolerance):
                        terms[_index(n, p + beta, p + gamma)] = -i_unit * c
                for i in range(p):
                    c = f.coefficient(_index(nv, 2 * p + beta, i))
                    if not b.close(c, b.zero(), tolerance):
                        terms[_index(n, p + beta, i)] = b.make(-2) * i_unit * c
            if terms:
                replacements[p + alpha] = TruncatedSeries.variable(p + alpha, n, m.truncation, b) + TruncatedSeries(
                    n, m.truncation, b, terms
                )
        if replacements:
            jets = apply(_coordinate_change(m, replacements), "remove-quadratic-terms-of-F")

    _verify_prepared(m, jets, tolerance)
    gamma = [b.real(jets.F[i][i]) for i in range(p)]
    logger.info("一般化 Bishop 不変量: %s", [b.format(g) for g in gamma])
    return PreparedQuadric(
        gamma=gamma,
        D_normalized=jets.D,
        coordinate_change=total,
        prepared=m,
        steps=steps,
        cond1_determinant=determinant,
        cond1_bishop_determinant=bishop_determinant,
    )


def _verify_prepared(m: ManifoldData, jets: QuadricJetData, tolerance: float) -> None:
    b = m.backend
    problems = []
    if not linalg.equal(jets.E, jets.F, b, tolerance):
        problems.append("z'z' 部分と w'w' 部分が一致しません")
    if not _all_zero([[v for k, v in enumerate(row) if k != r] for r, row in enumerate(jets.F)], b, tolerance):
        problems.append("w'w' 部分が対角ではありません")
    for name in ("a", "b", "c"):
        if not _all_zero(getattr(jets, name), b, tolerance):
            problems.append(f"G の {name} 係数が残っています")
    if any(not _all_zero(M, b, tolerance) for jet in jets.alpha for M in (jet.D, jet.E, jet.a, jet.b)):
        problems.append("F の 2 次項が残っています")
    norm = linalg.operator_norm(jets.D, b)
    if abs(norm - 1.0) > max(tolerance, 1e-12):
        problems.append(f"半双線形部分のノルムが 1 ではありません: {norm}")
    if problems:
        raise GermlabError("2-jet の正規化に失敗しました: " + "; ".join(problems), problems=problems)


def bishop_invariants(pq: PreparedQuadric) -> List[Any]:
    """一般化 Bishop 不変量を昇順で返す"""
    b = pq.backend
    return sorted(pq.gamma, key=lambda g: b.to_complex(g).real)


def _rational(value: Any):
    if isinstance(value, float):
        return Rational(repr(value))
    if isinstance(value, Fraction):
        return Rational(value.numerator, value.denominator)
    return sympify(value)


def bishop_lambda(gamma: Any) -> Dict[str, Any]:
    """
    p = 1 の古典的 Bishop 曲面の λ (γλ² + λ + γ = 0 の根) と μ = λ²

    0 < γ < 1/2 は楕円型、γ > 1/2 は双曲型。
    """
    g = _rational(gamma)
    if g == 0:
        raise ZeroBishopInvariant("γ = 0 は扱えません", i=0)
    if g < 0:
        raise UnsupportedConfiguration(f"γ は正である必要があります: {g}")
    if g == Rational(1, 2):
        raise Cond1Violated("γ = 1/2 では 4γ² = 1 となります", gamma="1/2")
    root = sqrt(1 - 4 * g ** 2)
    lambdas = [simplify((-1 + root) / (2 * g)), simplify((-1 - root) / (2 * g))]
    mus = [simplify((lam ** 2).expand()) for lam in lambdas]
    return {
        "gamma": g,
        "lambda": lambdas,
        "mu": mus,
        "class": ELLIPTIC if g < Rational(1, 2) else HYPERBOLIC,
    }


# ---------------------------------------------------------------------------
# 対合の組
# ---------------------------------------------------------------------------


def swap_matrix(p: int, q: int, backend: CoefficientBackend) -> linalg.Mat:
    """ρ(z', w', x'') = (w̄', z̄', x̄'') の行列"""
    dim = 2 * p + q
    P = linalg.zeros(dim, dim, backend)
    for i in range(p):
        P[i][p + i] = backend.one()
        P[p + i][i] = backend.one()
    for a in range(q):
        P[2 * p + a][2 * p + a] = backend.one()
    return P


class InvolutionPair:
    """
    複素化した多様体の被覆変換 τ1, τ2 と反線形対合 ρ(y) = P ȳ

    τ2 = ρ∘τ1∘ρ, Φ = τ1∘τ2 を満たす。
    """

    def __init__(
        self,
        tau1: GermMap,
        tau2: GermMap,
        rho: linalg.Mat,
        p: int,
        q: int,
        gamma_map: Optional[GermMap] = None,
        names: Optional[List[str]] = None,
        decomposition: Optional["SpectralDecomposition"] = None,
    ):
        if tau1.nvars_in != 2 * p + q or tau2.nvars_in != 2 * p + q:
            raise SeriesMismatch(f"対合の次元が 2p+q={2 * p + q} ではありません")
        self.tau1 = tau1
        self.tau2 = tau2
        self.rho = rho
        self.p = p
        self.q = q
        self.gamma_map = gamma_map
        self.names = names or raw_names(p, q)
        self.decomposition = decomposition
        self.phi = compose(tau1, tau2)

    @property
    def dim(self) -> int:
        return 2 * self.p + self.q

    @property
    def backend(self) -> CoefficientBackend:
        return self.tau1.backend

    @property
    def truncation(self) -> int:
        return self.tau1.truncation

    @property
    def T1(self) -> linalg.Mat:
        return self.tau1.linear_part

    @property
    def T2(self) -> linalg.Mat:
        return self.tau2.linear_part

    @property
    def phi_linear(self) -> linalg.Mat:
        return self.phi.linear_part

    def identity(self) -> GermMap:
        return GermMap.identity(self.dim, self.truncation, self.backend)

    def rho_phi_rho_residual(self) -> float:
        """ρΦρ と Φ^{-1} の係数の差の最大値"""
        return apply_antilinear(self.rho, self.phi).max_abs_difference(invert_germ(self.phi))

    def verify(self, tolerance: float = 1e-9) -> Dict[str, Any]:
        """対合性、ρ による共役、ρΦρ = Φ^{-1}、DΦ(0) = T1 T2 を確かめる"""
        ident = self.identity()
        b = self.backend
        checks = {
            "tau1_involution": compose(self.tau1, self.tau1).is_close(ident, tolerance),
            "tau2_involution": compose(self.tau2, self.tau2).is_close(ident, tolerance),
            "rho_conjugation": apply_antilinear(self.rho, self.tau1).is_close(self.tau2, tolerance),
            "phi_linear": linalg.equal(
                self.phi_linear, linalg.matmul(self.T1, self.T2, b), b, tolerance
            ),
        }
        residual = self.rho_phi_rho_residual()
        checks["rho_phi_rho"] = residual <= tolerance
        checks["rho_phi_rho_residual"] = residual
        return checks

    def conjugated(self, psi: GermMap) -> "InvolutionPair":
        """ψ∘τ_j∘ψ^{-1} の組 (ψ は ρ と可換であること)"""
        psi_inv = invert_germ(psi)
        return InvolutionPair(
            compose(psi, compose(self.tau1, psi_inv)),
            compose(psi, compose(self.tau2, psi_inv)),
            self.rho,
            self.p,
            self.q,
            names=self.names,
            decomposition=self.decomposition,
        )

    def in_normal_coordinates(
        self, decomposition: "SpectralDecomposition", tolerance: float = 1e-9
    ) -> "InvolutionPair":
        """
        スペクトル分解の基底 C で y = C y' と座標を取り替える

        線形部分は T1, T2, ρ の正規形に揃える (float では許容誤差内の丸めを吸収する)。
        """
        b = decomposition.backend
        tau1, tau2 = self.tau1, self.tau2
        if self.backend != b:
            tau1, tau2 = change_backend(tau1, b), change_backend(tau2, b)
        N = self.truncation
        C = decomposition.change_of_basis
        C_inv = linalg.inverse(C, b)
        C_map = GermMap.from_matrix(C, N, b)

        def transport(tau: GermMap, expected: linalg.Mat, label: str) -> GermMap:
            moved = compose(tau, C_map).apply_matrix(C_inv)
            if not linalg.equal(moved.linear_part, expected, b, tolerance):
                raise UnsupportedConfiguration(
                    f"{label} の線形部分が正規形になりません",
                    difference=linalg.max_abs_difference(moved.linear_part, expected, b),
                )
            return GermMap.from_matrix(expected, N, b) + moved.nonlinear_part()

        new1 = transport(tau1, decomposition.T1, "τ1")
        new2 = transport(tau2, decomposition.T2, "τ2")
        return InvolutionPair(
            new1,
            new2,
            decomposition.rho,
            self.p,
            self.q,
            names=normal_names(self.p, self.q),
            decomposition=decomposition,
        )

    @classmethod
    def from_normal_form(
        cls,
        blocks: Sequence["NormalBlock"],
        q: int = 0,
        truncation: int = 4,
        backend: Optional[CoefficientBackend] = None,
    ) -> "InvolutionPair":
        """正規形の線形対合の組 (T1, T2, ρ は正規形の行列そのもの)"""
        backend = backend or FloatBackend()
        T1, T2, P, _ = normal_form_matrices(blocks, q, backend)
        p = (len(T1) - q) // 2
        return cls(
            GermMap.from_matrix(T1, truncation, backend),
            GermMap.from_matrix(T2, truncation, backend),
            P,
            p,
            q,
            names=normal_names(p, q),
        )

    def __repr__(self) -> str:
        return f"InvolutionPair(p={self.p}, q={self.q}, N={self.truncation}, backend={self.backend.name})"


def _divided_differences(E: TruncatedSeries, p: int, zt_start: int) -> List[TruncatedSeries]:
    """
    E = Σ_i (z̃_i − z_i) K_i となる K_i を作る

    h_i は z̃_j (j > i) を z_j に置き換えた E。h_i − h_{i-1} を z̃_i − z_i で割った商が K_i。
    """
    out = []
    for i in range(p):

        def merge(Q: MultiIndex, i: int = i) -> MultiIndex:
            R = list(Q)
            for j in range(i + 1, p):
                R[j] += R[zt_start + j]
                R[zt_start + j] = 0
            return tuple(R)

        h = E.map_indices(merge)
        terms: Dict[MultiIndex, Any] = {}
        for Q, c in h.items():
            a = Q[zt_start + i]
            for k in range(a):
                R = list(Q)
                R[zt_start + i] = k
                R[i] = Q[i] + a - 1 - k
                R = tuple(R)
                terms[R] = terms[R] + c if R in terms else c
        out.append(TruncatedSeries(E.nvars, E.truncation, E.backend, terms))
    return out


def complexify_and_build_involutions(pq: PreparedQuadric, tolerance: float = 1e-9) -> InvolutionPair:
    """
    複素化した多様体の被覆 π1, π2 の被覆変換 τ1, τ2 を作る

    τ1 は w', w'' = x'' − iF, w_n = Ḡ を保つ非自明な対合で、
    線形部分の分岐 z̃' = −z' − S̄^{-1} D^H w' を指定して陰関数として解く。
    """
    m = pq.prepared
    p, q, N, b = m.p, m.q, m.truncation, m.backend
    for i, g in enumerate(pq.gamma):
        if b.is_zero(g):
            raise ZeroBishopInvariant(f"γ_{i + 1} = 0 のため Bishop 行列が可逆ではありません", i=i)
    jets = extract_jets(m)
    S, d = jets.F, jets.D
    branch = linalg.scale(
        b.make(-1), linalg.matmul(linalg.inverse(linalg.conjugate(S, b), b, ZeroBishopInvariant), linalg.adjoint(d, b), b)
    )
    nv = 2 * p + q
    T1_expected = linalg.block(
        [
            [linalg.scale(b.make(-1), linalg.identity(p, b)), branch, linalg.zeros(p, q, b)],
            [linalg.zeros(p, p, b), linalg.identity(p, b), linalg.zeros(p, q, b)],
            [linalg.zeros(q, p, b), linalg.zeros(q, p, b), linalg.identity(q, b)],
        ]
    )

    M = N + 1
    F_lift = [f.truncated(M) for f in m.F]
    G_star = reality_conjugate(m.G, p).truncated(M)
    zt0 = nv
    known = nv + p

    # x̃'' = Γ(z', w', x'', z̃') を x̃'' − iF(z̃', w', x̃'') = x'' − iF(z', w', x'') から
    gamma_map: Optional[GermMap] = None
    if q:
        total = nv + p + q

        def v(k: int) -> TruncatedSeries:
            return TruncatedSeries.variable(k, total, M, b)

        xt0 = nv + p
        original = GermMap([v(k) for k in range(nv)])
        moved = GermMap(
            [v(zt0 + i) for i in range(p)] + [v(p + i) for i in range(p)] + [v(xt0 + a) for a in range(q)]
        )
        i_unit = b.make((0, 1))
        equations = GermMap(
            [
                v(xt0 + a)
                - v(2 * p + a)
                - (compose_series(F_lift[a], moved) - compose_series(F_lift[a], original)).scale(i_unit)
                for a in range(q)
            ]
        )
        branch_x = [[1 if k == 2 * p + a else 0 for k in range(known)] for a in range(q)]
        gamma_map = solve_implicit(equations, list(range(xt0, xt0 + q)), branch_x, tolerance)

    def u(k: int) -> TruncatedSeries:
        return TruncatedSeries.variable(k, known, M, b)

    moved = GermMap(
        [u(zt0 + i) for i in range(p)]
        + [u(p + i) for i in range(p)]
        + (list(gamma_map) if gamma_map is not None else [])
    )
    original = GermMap([u(k) for k in range(nv)])
    E = compose_series(G_star, moved) - compose_series(G_star, original)
    K = GermMap([k.truncated(N) for k in _divided_differences(E, p, zt0)])
    branch_z = [
        [-1 if k == i else 0 for k in range(p)] + list(branch[i]) + [0] * q for i in range(p)
    ]
    z_tilde = solve_implicit(K, list(range(zt0, zt0 + p)), branch_z, tolerance)

    def var(k: int) -> TruncatedSeries:
        return TruncatedSeries.variable(k, nv, N, b)

    x_tilde: List[TruncatedSeries] = []
    if gamma_map is not None:
        x_tilde = list(
            compose(gamma_map.truncated(N), GermMap([var(k) for k in range(nv)] + list(z_tilde)))
        )
    tau1 = GermMap(list(z_tilde) + [var(p + i) for i in range(p)] + x_tilde)
    P = swap_matrix(p, q, b)
    tau2 = apply_antilinear(P, tau1)
    pair = InvolutionPair(
        tau1,
        tau2,
        P,
        p,
        q,
        gamma_map=GermMap(x_tilde) if x_tilde else None,
    )

    if not linalg.equal(pair.T1, T1_expected, b, tolerance):
        raise BranchMismatch(
            "τ1 の線形部分が期待されたブロック形になりません",
            T1=linalg.format_matrix(pair.T1, b),
        )
    checks = pair.verify(tolerance)
    for key in ("tau1_involution", "tau2_involution"):
        if not checks[key]:
            ident = pair.identity()
            tau = pair.tau1 if key == "tau1_involution" else pair.tau2
            raise NotInvolution(
                f"{key.split('_')[0]}∘{key.split('_')[0]} が恒等写像になりません",
                residual=compose(tau, tau).max_abs_difference(ident),
            )
    G_N = G_star.truncated(N)
    covering = [compose_series(G_N, tau1).is_close(G_N, tolerance)]
    for a in range(q):
        w = var(2 * p + a) - m.F[a].scale(b.make((0, 1)))
        covering.append(compose_series(w, tau1).is_close(w, tolerance))
    if not all(covering):
        raise NotInvolution("τ1 が被覆 π2 の被覆変換になっていません")
    logger.info("τ1, τ2 を次数 %d まで構成しました (p=%d, q=%d)", N, p, q)
    return pair


# ---------------------------------------------------------------------------
# スペクトル分解
# ---------------------------------------------------------------------------


@dataclass
class NormalBlock:
    """
    正規形のブロック

    kind が complex のときは μ と μ̄^{-1} の2組 (各 multiplicity 個) を含む。
    A は双曲型・楕円型での ρ の作用 (multiplicity 次の正方行列)。
    """

    kind: str
    mu: Any
    A: Optional[linalg.Mat] = None
    multiplicity: int = 1

    def __post_init__(self):
        if self.kind not in (HYPERBOLIC, ELLIPTIC, COMPLEX):
            raise UnsupportedConfiguration(f"ブロックの種類が不正です: {self.kind}")
        if self.A is not None:
            self.multiplicity = len(self.A)

    @property
    def slots(self) -> int:
        return 2 * self.multiplicity if self.kind == COMPLEX else self.multiplicity


def normal_form_matrices(
    blocks: Sequence[NormalBlock], q: int, backend: CoefficientBackend
) -> Tuple[linalg.Mat, linalg.Mat, linalg.Mat, List[Any]]:
    """
    正規形の T1, T2, ρ の行列と ζ 座標ごとの固有値を返す

    座標は (ζ_1..ζ_p, η_1..η_p, υ_1..υ_q) の順。T1 は ζ_s ↔ η_s を固有値 ν_s で、
    T2 は係数 1 で入れ替える。
    """
    b = backend
    p = sum(block.slots for block in blocks)
    dim = 2 * p + q
    T1 = linalg.zeros(dim, dim, b)
    T2 = linalg.zeros(dim, dim, b)
    P = linalg.zeros(dim, dim, b)
    eigen: List[Any] = []
    s = 0
    for block in blocks:
        mu = b.make(block.mu)
        k = block.multiplicity
        A = linalg.make_matrix(block.A, b) if block.A is not None else linalg.identity(k, b)
        if block.kind == COMPLEX:
            values = [mu] * k + [b.inv(b.conj(mu))] * k
        else:
            values = [mu] * k
        for offset, value in enumerate(values):
            z, e = s + offset, p + s + offset
            T1[z][e] = value
            T1[e][z] = b.inv(value)
            T2[z][e] = b.one()
            T2[e][z] = b.one()
            eigen.append(value)
        for r in range(k):
            for c in range(k):
                if block.kind == HYPERBOLIC:
                    P[s + r][s + c] = A[r][c]
                    P[p + s + r][p + s + c] = b.conj(mu) * A[r][c]
                elif block.kind == ELLIPTIC:
                    P[s + r][p + s + c] = mu * A[r][c]
                    P[p + s + r][s + c] = A[r][c]
        if block.kind == COMPLEX:
            for r in range(k):
                za, zb = s + r, s + k + r
                P[za][zb] = b.one()
                P[zb][za] = b.one()
                P[p + za][p + zb] = b.inv(mu)
                P[p + zb][p + za] = b.conj(mu)
        s += len(values)
    for a in range(q):
        u = 2 * p + a
        T1[u][u] = T2[u][u] = P[u][u] = b.one()
    return T1, T2, P, eigen


@dataclass
class ClassificationAmbiguous:
    """float での分類が境界に近いことを表す警告"""

    mu: complex
    margin: float
    chosen: str

    def to_dict(self) -> Dict[str, Any]:
        return {
            "warning": "ClassificationAmbiguous",
            "mu": [self.mu.real, self.mu.imag],
            "margin": self.margin,
            "chosen": self.chosen,
        }


@dataclass
class SpectralBlock:
    kind: str
    mu: Any
    multiplicity: int
    zeta_indices: List[int]
    eta_indices: List[int]
    A: Optional[linalg.Mat] = None
    mu_exact: Any = None
    check_residual: float = 0.0

    def as_normal_block(self) -> NormalBlock:
        return NormalBlock(self.kind, self.mu, self.A, self.multiplicity)


@dataclass
class SpectralDecomposition:
    blocks: List[SpectralBlock]
    q: int
    change_of_basis: linalg.Mat
    backend: CoefficientBackend
    T1: linalg.Mat
    T2: linalg.Mat
    rho: linalg.Mat
    eigenvalues: List[Any]
    exact_eigenvalues: Optional[List[Any]] = None
    relations: List[Tuple[int, ...]] = field(default_factory=list)
    warnings: List[ClassificationAmbiguous] = field(default_factory=list)
    dims: Dict[str, int] = field(default_factory=dict)
    oracle_mode: Optional[str] = None
    declared_relations: Optional[List[Tuple[int, ...]]] = None

    @property
    def p(self) -> int:
        return (len(self.T1) - self.q) // 2

    def names(self) -> List[str]:
        return normal_names(self.p, self.q)

    def oracle_config(self) -> Tuple[str, Optional[List[Tuple[int, ...]]]]:
        """
        共鳴判定のモード

        指定がなければ、固有値がガウス有理数なら exact、そうでなければ探索した関係による lattice。
        """
        mode = self.oracle_mode or ("exact" if self.backend.name == "exact" else "lattice")
        if mode == "lattice":
            declared = self.declared_relations
            return mode, list(declared if declared is not None else self.relations)
        return mode, None

    def diagonal_family(self) -> List[List[Any]]:
        """Φ の正規形の対角成分 (DiagonalFamily 用、1 行)"""
        b = self.backend
        return [list(self.eigenvalues) + [b.inv(v) for v in self.eigenvalues] + [b.one()] * self.q]


class _Field:
    """sympy (exact) と numpy (float) の行列演算をそろえる薄いラッパ"""

    def __init__(self, exact: bool, tolerance: float):
        self.exact = exact
        self.tolerance = tolerance

    def matrix(self, A: linalg.Mat, backend: CoefficientBackend):
        return linalg.to_sympy(A, backend) if self.exact else linalg.to_numpy(A, backend)

    def vector(self, values):
        return Matrix(values) if self.exact else np.array(values, dtype=complex)

    def conj(self, x):
        return x.conjugate() if self.exact else np.conjugate(x)

    def columns(self, cols):
        return Matrix.hstack(*cols) if self.exact else np.column_stack(cols)

    def rank(self, cols) -> int:
        if not cols:
            return 0
        M = self.columns(cols)
        if self.exact:
            return M.applyfunc(simplify).rank(simplify=True)
        return int(np.linalg.matrix_rank(M, tol=self.tolerance))

    def inverse(self, M):
        return M.inv() if self.exact else np.linalg.inv(M)

    def clean(self, M):
        return M.applyfunc(simplify) if self.exact else M

    def is_zero(self, value) -> bool:
        if self.exact:
            reduced = simplify(value)
            return reduced == 0 or reduced.equals(0) is True
        return abs(value) <= self.tolerance

    def numeric(self, value) -> complex:
        return complex(value.evalf()) if self.exact else complex(value)


def _independent(fld: _Field, candidates, limit: int):
    chosen = []
    for v in candidates:
        if fld.rank(chosen + [v]) > len(chosen):
            chosen.append(v)
        if len(chosen) == limit:
            break
    return chosen


def _to_backend_matrix(M, shape: Tuple[int, int], exact_backend: CoefficientBackend):
    """sympy 行列をガウス有理数へ変換できれば exact、できなければ None"""
    rows, cols = shape
    try:
        return [[exact_backend.make(simplify(M[r, c])) for c in range(cols)] for r in range(rows)]
    except (SeriesMismatch, TypeError, ValueError):
        return None


def _classify(fld: _Field, mu, epsilon: float) -> Tuple[str, Optional[ClassificationAmbiguous]]:
    value = fld.numeric(mu)
    if fld.exact:
        on_circle = fld.is_zero(mu * mu.conjugate() - 1)
        real = fld.is_zero(im(mu))
        if on_circle and real:
            raise UnsupportedConfiguration(f"固有値 {mu} は ±1 です")
        return (HYPERBOLIC if on_circle else ELLIPTIC if real else COMPLEX), None
    circle_margin = abs(abs(value) - 1.0)
    real_margin = abs(value.imag)
    if circle_margin <= epsilon and real_margin <= epsilon:
        raise UnsupportedConfiguration(f"固有値 {value} は ±1 に近すぎます")
    kind = HYPERBOLIC if circle_margin <= epsilon else ELLIPTIC if real_margin <= epsilon else COMPLEX
    margin = min(circle_margin, real_margin)
    warning = None
    if kind == COMPLEX and margin <= 1e3 * epsilon:
        warning = ClassificationAmbiguous(value, margin, kind)
    elif kind != COMPLEX and margin > epsilon / 1e3:
        warning = ClassificationAmbiguous(value, margin, kind)
    if warning is not None:
        logger.warning("固有値 %s の分類が境界に近いです (margin=%.3g, %s)", value, margin, kind)
    return kind, warning


def _same(fld: _Field, a, b) -> bool:
    if fld.exact:
        return fld.is_zero(a - b)
    return abs(a - b) <= fld.tolerance * max(1.0, abs(a))


def decompose_spectrum(
    ip: InvolutionPair,
    epsilon: float = 1e-9,
    relation_bound: int = 6,
    tolerance: float = 1e-9,
    oracle_mode: Optional[str] = None,
    relations: Optional[Sequence[Sequence[int]]] = None,
) -> SpectralDecomposition:
    """
    DΦ(0) を ρ と両立するブロックに分解する

    Args:
        ip: 対合の組
        epsilon: float での分類の閾値
        relation_bound: 固有値の乗法的関係を探す範囲 (Σ|r_i|)
        tolerance: 行列の一致判定の許容値
        oracle_mode: 正規座標での共鳴判定のモード (省略時は基底のバックエンドから決める)
        relations: lattice モードで使う関係 (省略時は探索した関係)

    Returns:
        SpectralDecomposition (基底の変換 C と正規形の T1, T2, ρ)
    """
    b = ip.backend
    p, q, dim = ip.p, ip.q, ip.dim
    mode = OracleMode(oracle_mode) if oracle_mode is not None else None
    if relations is not None and any(len(r) != dim for r in relations):
        raise UnsupportedConfiguration(f"関係ベクトルの長さは 2p+q={dim} である必要があります")
    fld = _Field(b.name == "exact", tolerance)

    T2 = fld.matrix(ip.T2, b)
    P = fld.matrix(ip.rho, b)

    # V1, V2, E が全体を張ること
    eye = linalg.identity(dim, b)
    V1 = linalg.nullspace(linalg.add(ip.T1, eye), b, tolerance)
    V2 = linalg.nullspace(linalg.add(ip.T2, eye), b, tolerance)
    minus = linalg.scale(b.make(-1), eye)
    E = linalg.nullspace(linalg.add(ip.T1, minus) + linalg.add(ip.T2, minus), b, tolerance)
    dims = {"V1": len(V1), "V2": len(V2), "E": len(E)}
    to_vec = (lambda v: fld.vector([b.to_sympy(x) for x in v])) if fld.exact else fld.vector
    spanning = [to_vec(v) for v in V1 + V2 + E]
    if fld.rank(spanning) < dim:
        raise SpanDeficient("V1, V2, E が全体を張りません", **dims)
    if len(E) != q:
        raise UnsupportedConfiguration(f"共通の固定部分空間の次元 {len(E)} が q={q} と一致しません", **dims)

    system = linalg.eigensystem(ip.phi_linear, b)
    if sum(len(vecs) for _, _, vecs in system) != dim:
        raise UnsupportedConfiguration("DΦ(0) が対角化できません")

    pending = [(value, [fld.vector(v) for v in vecs]) for value, mult, vecs in system]
    fixed = [entry for entry in pending if _same(fld, entry[0], 1)]
    if sum(len(vecs) for _, vecs in fixed) != q:
        raise UnsupportedConfiguration("固有値 1 の重複度が q と一致しません")
    pending = [entry for entry in pending if not _same(fld, entry[0], 1)]

    warnings: List[ClassificationAmbiguous] = []
    blocks: List[Tuple[str, Any, List[Any], List[Any]]] = []
    used = [False] * len(pending)

    def find(target) -> int:
        for k, (value, _) in enumerate(pending):
            if not used[k] and _same(fld, value, target):
                return k
        raise UnsupportedConfiguration(f"固有値 {target} の相方が見つかりません")

    order = sorted(range(len(pending)), key=lambda k: (abs(fld.numeric(pending[k][0])), -fld.numeric(pending[k][0]).imag))
    for k in order:
        if used[k]:
            continue
        value, vecs = pending[k]
        kind, warning = _classify(fld, value, epsilon)
        if warning is not None:
            warnings.append(warning)
        numeric = fld.numeric(value)
        if kind == HYPERBOLIC and numeric.imag < 0:
            continue
        if kind in (ELLIPTIC, COMPLEX) and abs(numeric) > 1:
            continue
        if kind == COMPLEX and numeric.imag < 0:
            continue
        used[k] = True
        used[find(1 / value)] = True
        if kind == COMPLEX:
            partner = 1 / value.conjugate() if fld.exact else 1 / np.conjugate(value)
            used[find(partner)] = True
            used[find(value.conjugate() if fld.exact else np.conjugate(value))] = True
        blocks.append((kind, value, vecs, []))
    if not all(used):
        raise UnsupportedConfiguration("固有値を μ, μ^{-1} の組に分けられません")

    # 基底を並べる: ζ 列、η 列 = T2 ζ、υ 列
    zeta_cols: List[Any] = []
    block_meta: List[Tuple[str, Any, int, List[int]]] = []
    slot_values: List[Any] = []
    for kind, value, vecs, _ in blocks:
        start = len(zeta_cols)
        if kind == COMPLEX:
            partner = 1 / value.conjugate() if fld.exact else 1 / np.conjugate(value)
            zeta_cols.extend(vecs)
            zeta_cols.extend(P @ fld.conj(v) for v in vecs)
            slot_values.extend([value] * len(vecs) + [partner] * len(vecs))
        else:
            zeta_cols.extend(vecs)
            slot_values.extend([value] * len(vecs))
        block_meta.append((kind, value, len(vecs), list(range(start, len(zeta_cols)))))
    if len(zeta_cols) != p:
        raise UnsupportedConfiguration(f"ζ 方向の次元 {len(zeta_cols)} が p={p} と一致しません")
    eta_cols = [T2 @ v for v in zeta_cols]

    e_vectors = [to_vec(v) for v in E]
    candidates = []
    for e in e_vectors:
        image = P @ fld.conj(e)
        candidates.append(e + image)
        candidates.append((e - image) * (1j if not fld.exact else sympify("I")))
    fixed_cols = _independent(fld, candidates, q)
    if len(fixed_cols) != q:
        raise SpanDeficient("固定部分空間の実基底が作れません", **dims)

    C = fld.clean(fld.columns(zeta_cols + eta_cols + fixed_cols))
    C_inv = fld.clean(fld.inverse(C))
    rho_new = fld.clean(C_inv @ P @ fld.conj(C))

    # A_i を読み取り、正規形との一致を確かめる
    normal_blocks: List[Tuple[str, Any, Optional[List[List[Any]]], int]] = []
    for kind, value, k, indices in block_meta:
        A = None
        if kind == HYPERBOLIC:
            A = [[rho_new[indices[r], indices[c]] for c in range(k)] for r in range(k)]
        elif kind == ELLIPTIC:
            A = [[rho_new[p + indices[r], indices[c]] for c in range(k)] for r in range(k)]
        normal_blocks.append((kind, value, A, k))

    exact_backend = b if fld.exact else None
    converted = None
    if exact_backend is not None:
        C_exact = _to_backend_matrix(C, (dim, dim), exact_backend)
        values_exact = []
        try:
            values_exact = [exact_backend.make(simplify(v)) for _, v, _, _ in normal_blocks]
            A_exact = [
                None if A is None else [[exact_backend.make(simplify(x)) for x in row] for row in A]
                for _, _, A, _ in normal_blocks
            ]
        except (SeriesMismatch, TypeError, ValueError):
            A_exact = None
        if C_exact is not None and A_exact is not None:
            converted = (exact_backend, C_exact, values_exact, A_exact)
    if converted is None:
        target = b if b.name == "float" else FloatBackend()
        C_float = [[complex(fld.numeric(C[r, c])) for c in range(dim)] for r in range(dim)]
        values_float = [fld.numeric(v) for _, v, _, _ in normal_blocks]
        A_float = [
            None if A is None else [[fld.numeric(x) for x in row] for row in A]
            for _, _, A, _ in normal_blocks
        ]
        converted = (target, C_float, values_float, A_float)
    target, C_out, values_out, A_out = converted

    spectral_blocks: List[SpectralBlock] = []
    normal: List[NormalBlock] = []
    for (kind, value, _, k), meta, mu, A in zip(normal_blocks, block_meta, values_out, A_out):
        indices = meta[3]
        normal.append(NormalBlock(kind, mu, A, k))
        spectral_blocks.append(
            SpectralBlock(
                kind=kind,
                mu=mu,
                multiplicity=k,
                zeta_indices=indices,
                eta_indices=[p + i for i in indices],
                A=A,
                mu_exact=value if fld.exact else None,
            )
        )

    T1_n, T2_n, P_n, eigen = normal_form_matrices(normal, q, target)
    C_mat = linalg.make_matrix(C_out, target)
    C_inv_mat = linalg.inverse(C_mat, target)
    T1_t, T2_t, P_t = (
        (ip.T1, ip.T2, ip.rho)
        if target == b
        else tuple(linalg.make_matrix(M, target) for M in (ip.T1, ip.T2, ip.rho))
    )
    moved = {
        "T1": linalg.matmul(linalg.matmul(C_inv_mat, T1_t, target), C_mat, target),
        "T2": linalg.matmul(linalg.matmul(C_inv_mat, T2_t, target), C_mat, target),
        "rho": linalg.matmul(linalg.matmul(C_inv_mat, P_t, target), linalg.conjugate(C_mat, target), target),
    }
    expected = {"T1": T1_n, "T2": T2_n, "rho": P_n}
    for key in ("T1", "T2", "rho"):
        if not linalg.equal(moved[key], expected[key], target, max(tolerance, 1e-7)):
            raise UnsupportedConfiguration(
                f"基底の変換で {key} が正規形になりません",
                difference=linalg.max_abs_difference(moved[key], expected[key], target),
            )

    for block, sb in zip(normal, spectral_blocks):
        if block.kind == COMPLEX:
            continue
        A = block.A
        A_bar = linalg.conjugate(A, target)
        product = linalg.matmul(A, A_bar, target)
        if block.kind == ELLIPTIC:
            product = linalg.scale(block.mu, product)
        sb.check_residual = linalg.max_abs_difference(product, linalg.identity(len(A), target), target)
        if sb.check_residual > max(tolerance, 1e-7):
            raise UnsupportedConfiguration(
                f"ρ の作用 A が {'AĀ' if block.kind == HYPERBOLIC else 'μAĀ'} = I を満たしません",
                residual=sb.check_residual,
            )

    exact_values = None
    if fld.exact:
        exact_values = [simplify(v) for v in slot_values]
        exact_values = exact_values + [simplify(1 / v) for v in exact_values] + [sympify(1)] * q
        relation_values: List[Any] = exact_values
        relation_backend = None
    else:
        relation_values = list(eigen) + [target.inv(v) for v in eigen] + [target.one()] * q
        relation_backend = target
    if mode is OracleMode.EXACT and target.name != "exact":
        raise UnsupportedConfiguration("固有値がガウス有理数ではないため exact オラクルは使えません")
    bound = relation_bound
    while bound > 1 and (2 * bound + 1) ** dim > RELATION_SEARCH_CAP:
        bound -= 1
    if bound != relation_bound:
        logger.info("関係の探索範囲を %d から %d に縮めました (次元 %d)", relation_bound, bound, dim)
    detected = detect_relations(relation_values, bound, relation_backend, tolerance=max(tolerance, 1e-9))

    decomposition = SpectralDecomposition(
        blocks=spectral_blocks,
        q=q,
        change_of_basis=C_mat,
        backend=target,
        T1=T1_n,
        T2=T2_n,
        rho=P_n,
        eigenvalues=eigen,
        exact_eigenvalues=exact_values,
        relations=detected,
        warnings=warnings,
        dims=dims,
        oracle_mode=mode.value if mode is not None else None,
        declared_relations=[tuple(int(x) for x in r) for r in relations] if relations is not None else None,
    )
    logger.info(
        "スペクトル分解: %s (基底 %s)",
        [(blk.kind, target.format(blk.mu), blk.multiplicity) for blk in spectral_blocks],
        target.name,
    )
    return decomposition
