"""
germlab - 打ち切り多変数形式的べき級数

疎な辞書で項を保持する TruncatedSeries と、原点を固定する写像の芽 GermMap、
それらの合成・逆写像・陰関数解法を提供する。

項は (次数, 辞書式) の正準順序で保持するので、反復順序は常に決定的である。
"""

import logging
from itertools import combinations_with_replacement
from typing import Any, Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from . import linalg
from .coefficients import EXACT, CoefficientBackend
from .errors import (
    BranchMismatch,
    ImplicitSolveSingular,
    NonInvertibleLinearPart,
    OutOfTruncation,
    SeriesMismatch,
)

logger = logging.getLogger(__name__)

MultiIndex = Tuple[int, ...]
Terms = Dict[MultiIndex, Any]


# ---------------------------------------------------------------------------
# 多重指数
# ---------------------------------------------------------------------------


def degree(Q: Sequence[int]) -> int:
    return sum(Q)


def canonical_key(Q: MultiIndex) -> Tuple[int, MultiIndex]:
    return sum(Q), Q


def divides(P: Sequence[int], Q: Sequence[int]) -> bool:
    """x^P が x^Q を割り切るか"""
    return all(p <= q for p, q in zip(P, Q))


def unit(n: int, i: int) -> MultiIndex:
    return tuple(1 if k == i else 0 for k in range(n))


def add_indices(P: Sequence[int], Q: Sequence[int]) -> MultiIndex:
    return tuple(p + q for p, q in zip(P, Q))


def sub_indices(P: Sequence[int], Q: Sequence[int]) -> MultiIndex:
    return tuple(p - q for p, q in zip(P, Q))


def support(Q: Sequence[int]) -> Tuple[int, ...]:
    return tuple(i for i, q in enumerate(Q) if q)


def monomials(nvars: int, deg: int) -> List[MultiIndex]:
    """次数 deg の単項式を辞書式順で列挙"""
    out = []
    for combo in combinations_with_replacement(range(nvars), deg):
        Q = [0] * nvars
        for k in combo:
            Q[k] += 1
        out.append(tuple(Q))
    out.sort()
    return out


def monomials_up_to(nvars: int, max_degree: int, min_degree: int = 0) -> Iterator[MultiIndex]:
    for d in range(min_degree, max_degree + 1):
        yield from monomials(nvars, d)


def format_monomial(Q: Sequence[int], names: Optional[Sequence[str]] = None, separator: str = " ") -> str:
    """単項式を 'x1^2 x2' の形で表示"""
    names = names or [f"x{k + 1}" for k in range(len(Q))]
    parts = []
    for name, q in zip(names, Q):
        if q == 1:
            parts.append(name)
        elif q > 1:
            parts.append(f"{name}^{q}")
    return separator.join(parts) if parts else "1"


# ---------------------------------------------------------------------------
# 項辞書の低レベル演算
# ---------------------------------------------------------------------------


def _sorted_terms(terms: Terms) -> Terms:
    return {Q: terms[Q] for Q in sorted(terms, key=canonical_key)}


def _clean(terms: Terms, backend: CoefficientBackend, truncation: int) -> Terms:
    return _sorted_terms(
        {Q: c for Q, c in terms.items() if sum(Q) <= truncation and not backend.is_zero(c)}
    )


def _accumulate(target: Terms, Q: MultiIndex, value: Any) -> None:
    prev = target.get(Q)
    target[Q] = value if prev is None else prev + value


def _mul_terms(a: Terms, b: Terms, truncation: int) -> Terms:
    """次数 truncation を超える積を捨てながら掛け算する"""
    if not a or not b:
        return {}
    b_list = sorted(((sum(Q), Q, c) for Q, c in b.items()), key=lambda t: t[0])
    b_min = b_list[0][0]
    out: Terms = {}
    for Qa, ca in a.items():
        room = truncation - sum(Qa)
        if room < b_min:
            continue
        for db, Qb, cb in b_list:
            if db > room:
                break
            _accumulate(out, tuple(x + y for x, y in zip(Qa, Qb)), ca * cb)
    return out


# ---------------------------------------------------------------------------
# TruncatedSeries
# ---------------------------------------------------------------------------


class TruncatedSeries:
    """
    次数 N で打ち切った疎な多変数べき級数

    ゼロ係数と次数 N を超える項は保持しない。構築後は不変。
    """

    __slots__ = ("nvars", "truncation", "backend", "_terms")

    def __init__(
        self,
        nvars: int,
        truncation: int,
        backend: CoefficientBackend = EXACT,
        terms: Optional[Dict[Sequence[int], Any]] = None,
    ):
        if nvars < 1:
            raise SeriesMismatch(f"変数の数は 1 以上が必要です: {nvars}")
        if truncation < 1:
            raise SeriesMismatch(f"打ち切り次数は 1 以上が必要です: {truncation}")
        self.nvars = nvars
        self.truncation = truncation
        self.backend = backend
        clean: Terms = {}
        for Q, c in (terms or {}).items():
            Q = tuple(int(q) for q in Q)
            if len(Q) != nvars or any(q < 0 for q in Q):
                raise SeriesMismatch(f"多重指数 {Q} は {nvars} 変数の指数ではありません")
            if sum(Q) > truncation:
                continue
            value = backend.make(c)
            if Q in clean:
                value = clean[Q] + value
            clean[Q] = value
        self._terms = _clean(clean, backend, truncation)

    @classmethod
    def _trusted(
        cls, nvars: int, truncation: int, backend: CoefficientBackend, terms: Terms
    ) -> "TruncatedSeries":
        """係数変換を省いて構築 (内部用)"""
        obj = cls.__new__(cls)
        obj.nvars = nvars
        obj.truncation = truncation
        obj.backend = backend
        obj._terms = _clean(terms, backend, truncation)
        return obj

    # 生成

    @classmethod
    def zero(cls, nvars: int, truncation: int, backend: CoefficientBackend = EXACT):
        return cls._trusted(nvars, truncation, backend, {})

    @classmethod
    def constant(cls, value: Any, nvars: int, truncation: int, backend=EXACT):
        return cls(nvars, truncation, backend, {(0,) * nvars: value})

    @classmethod
    def variable(cls, i: int, nvars: int, truncation: int, backend=EXACT):
        return cls._trusted(nvars, truncation, backend, {unit(nvars, i): backend.one()})

    @classmethod
    def monomial(cls, Q: Sequence[int], value: Any, truncation: int, backend=EXACT):
        return cls(len(Q), truncation, backend, {tuple(Q): value})

    # 参照

    @property
    def terms(self) -> Terms:
        return dict(self._terms)

    def items(self) -> Iterable[Tuple[MultiIndex, Any]]:
        return self._terms.items()

    def __len__(self) -> int:
        return len(self._terms)

    def __bool__(self) -> bool:
        return bool(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def coefficient(self, Q: Sequence[int]):
        Q = tuple(Q)
        if sum(Q) > self.truncation:
            raise OutOfTruncation(
                f"次数 {sum(Q)} の係数は打ち切り次数 {self.truncation} を超えています",
                Q=list(Q),
            )
        return self._terms.get(Q, self.backend.zero())

    def order(self) -> Optional[int]:
        """最小次数 (ゼロ級数なら None)"""
        return min((sum(Q) for Q in self._terms), default=None)

    def max_degree(self) -> int:
        return max((sum(Q) for Q in self._terms), default=0)

    def homogeneous(self, d: int) -> "TruncatedSeries":
        return self.project(lambda Q: sum(Q) == d)

    def project(self, predicate: Callable[[MultiIndex], bool]) -> "TruncatedSeries":
        return TruncatedSeries._trusted(
            self.nvars,
            self.truncation,
            self.backend,
            {Q: c for Q, c in self._terms.items() if predicate(Q)},
        )

    def truncated(self, truncation: int) -> "TruncatedSeries":
        """打ち切り次数を変更する (上げる場合は未知の高次項をゼロとみなす)"""
        return TruncatedSeries._trusted(self.nvars, truncation, self.backend, self._terms)

    def map_coefficients(self, fn: Callable[[Any], Any]) -> "TruncatedSeries":
        return TruncatedSeries._trusted(
            self.nvars,
            self.truncation,
            self.backend,
            {Q: fn(c) for Q, c in self._terms.items()},
        )

    def map_indices(self, fn: Callable[[MultiIndex], MultiIndex], nvars: Optional[int] = None):
        """多重指数を付け替える (変数の並べ替え・埋め込み用)"""
        out: Terms = {}
        for Q, c in self._terms.items():
            _accumulate(out, fn(Q), c)
        return TruncatedSeries._trusted(nvars or self.nvars, self.truncation, self.backend, out)

    def conjugate(self) -> "TruncatedSeries":
        return self.map_coefficients(self.backend.conj)

    # 演算

    def _check(self, other: "TruncatedSeries", check_truncation: bool = True) -> None:
        if not isinstance(other, TruncatedSeries):
            raise SeriesMismatch(f"級数ではありません: {type(other).__name__}")
        if self.nvars != other.nvars:
            raise SeriesMismatch(
                f"変数の数が一致しません: {self.nvars} と {other.nvars}",
                mismatch="nvars",
            )
        if self.backend != other.backend:
            raise SeriesMismatch(
                f"バックエンドが一致しません: {self.backend.name} と {other.backend.name}",
                mismatch="backend",
            )
        if check_truncation and self.truncation != other.truncation:
            raise SeriesMismatch(
                f"打ち切り次数が一致しません: {self.truncation} と {other.truncation}",
                mismatch="truncation",
            )

    def __add__(self, other: "TruncatedSeries") -> "TruncatedSeries":
        self._check(other)
        out = dict(self._terms)
        for Q, c in other._terms.items():
            _accumulate(out, Q, c)
        return TruncatedSeries._trusted(self.nvars, self.truncation, self.backend, out)

    def __neg__(self) -> "TruncatedSeries":
        return self.map_coefficients(lambda c: -c)

    def __sub__(self, other: "TruncatedSeries") -> "TruncatedSeries":
        self._check(other)
        out = dict(self._terms)
        for Q, c in other._terms.items():
            _accumulate(out, Q, -c)
        return TruncatedSeries._trusted(self.nvars, self.truncation, self.backend, out)

    def __mul__(self, other: Any) -> "TruncatedSeries":
        if isinstance(other, TruncatedSeries):
            self._check(other)
            return TruncatedSeries._trusted(
                self.nvars,
                self.truncation,
                self.backend,
                _mul_terms(self._terms, other._terms, self.truncation),
            )
        return self.scale(other)

    def __rmul__(self, other: Any) -> "TruncatedSeries":
        return self.scale(other)

    def scale(self, c: Any) -> "TruncatedSeries":
        c = self.backend.make(c)
        return self.map_coefficients(lambda v: v * c)

    def __pow__(self, k: int) -> "TruncatedSeries":
        result = TruncatedSeries.constant(1, self.nvars, self.truncation, self.backend)
        for _ in range(k):
            result = result * self
        return result

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TruncatedSeries):
            return NotImplemented
        return (
            self.nvars == other.nvars
            and self.truncation == other.truncation
            and self.backend == other.backend
            and self._terms == other._terms
        )

    def __hash__(self):
        return hash((self.nvars, self.truncation, tuple(self._terms)))

    def max_abs_difference(self, other: "TruncatedSeries") -> float:
        self._check(other, check_truncation=False)
        keys = set(self._terms) | set(other._terms)
        zero = self.backend.zero()
        return max(
            (
                self.backend.modulus(self._terms.get(Q, zero) - other._terms.get(Q, zero))
                for Q in keys
            ),
            default=0.0,
        )

    def is_close(self, other: "TruncatedSeries", tolerance: float = 0.0) -> bool:
        if self.backend.name == "exact":
            return self._terms == other._terms
        return self.max_abs_difference(other) <= tolerance

    def format(self, names: Optional[Sequence[str]] = None) -> str:
        if not self._terms:
            return "0"
        parts = []
        for Q, c in self._terms.items():
            mono = format_monomial(Q, names)
            coeff = self.backend.format(c)
            parts.append(coeff if mono == "1" else f"{coeff}*{mono}")
        return " + ".join(parts)

    def __repr__(self) -> str:
        return f"TruncatedSeries({self.format()}, N={self.truncation})"


# ---------------------------------------------------------------------------
# GermMap
# ---------------------------------------------------------------------------


class GermMap:
    """
    原点を固定する写像の芽

    各成分は定数項を持たない TruncatedSeries。線形部分は1次の係数から導出する。
    """

    __slots__ = ("components", "nvars_in", "truncation", "backend")

    def __init__(self, components: Sequence[TruncatedSeries]):
        comps = tuple(components)
        if not comps:
            raise SeriesMismatch("成分が空の写像は扱えません")
        first = comps[0]
        for k, c in enumerate(comps):
            first._check(c)
            if c.coefficient((0,) * c.nvars) != c.backend.zero():
                raise SeriesMismatch(f"成分 {k} が定数項を持っています (原点を固定しません)")
        self.components = comps
        self.nvars_in = first.nvars
        self.truncation = first.truncation
        self.backend = first.backend

    @property
    def nvars_out(self) -> int:
        return len(self.components)

    def __len__(self) -> int:
        return len(self.components)

    def __getitem__(self, j: int) -> TruncatedSeries:
        return self.components[j]

    def __iter__(self):
        return iter(self.components)

    # 生成

    @classmethod
    def identity(cls, n: int, truncation: int, backend: CoefficientBackend = EXACT) -> "GermMap":
        return cls([TruncatedSeries.variable(i, n, truncation, backend) for i in range(n)])

    @classmethod
    def from_matrix(
        cls, M: Sequence[Sequence[Any]], truncation: int, backend: CoefficientBackend = EXACT
    ) -> "GermMap":
        """線形写像 x -> M x"""
        n_in = len(M[0])
        comps = []
        for row in M:
            comps.append(
                TruncatedSeries(
                    n_in,
                    truncation,
                    backend,
                    {unit(n_in, k): v for k, v in enumerate(row)},
                )
            )
        return cls(comps)

    @classmethod
    def from_terms(
        cls,
        terms: Sequence[Dict[Sequence[int], Any]],
        nvars: int,
        truncation: int,
        backend: CoefficientBackend = EXACT,
    ) -> "GermMap":
        return cls([TruncatedSeries(nvars, truncation, backend, t) for t in terms])

    # 参照

    @property
    def linear_part(self) -> linalg.Mat:
        return [
            [c.coefficient(unit(self.nvars_in, k)) for k in range(self.nvars_in)]
            for c in self.components
        ]

    def nonlinear_part(self) -> "GermMap":
        return self.project(lambda Q: sum(Q) >= 2)

    def project(self, predicate: Callable[[MultiIndex], bool]) -> "GermMap":
        return GermMap([c.project(predicate) for c in self.components])

    def truncated(self, truncation: int) -> "GermMap":
        return GermMap([c.truncated(truncation) for c in self.components])

    def conjugate(self) -> "GermMap":
        return GermMap([c.conjugate() for c in self.components])

    def apply_matrix(self, M: Sequence[Sequence[Any]]) -> "GermMap":
        """x -> M · self(x)"""
        out = []
        zero = TruncatedSeries.zero(self.nvars_in, self.truncation, self.backend)
        for row in M:
            acc: Terms = {}
            for coeff, comp in zip(row, self.components):
                if self.backend.is_zero(coeff):
                    continue
                for Q, c in comp.items():
                    _accumulate(acc, Q, coeff * c)
            out.append(
                TruncatedSeries._trusted(self.nvars_in, self.truncation, self.backend, acc)
                if acc
                else zero
            )
        return GermMap(out)

    def select(self, indices: Sequence[int]) -> "GermMap":
        return GermMap([self.components[i] for i in indices])

    def is_identity(self) -> bool:
        return self == GermMap.identity(self.nvars_in, self.truncation, self.backend)

    def compose(self, inner: "GermMap", truncation: Optional[int] = None) -> "GermMap":
        return compose(self, inner, truncation=truncation)

    def _check(self, other: "GermMap") -> None:
        if self.nvars_in != other.nvars_in or self.nvars_out != other.nvars_out:
            raise SeriesMismatch(
                f"写像の次元が一致しません: {self.nvars_out}x{self.nvars_in} と "
                f"{other.nvars_out}x{other.nvars_in}"
            )

    def __add__(self, other: "GermMap") -> "GermMap":
        self._check(other)
        return GermMap([a + b for a, b in zip(self.components, other.components)])

    def __sub__(self, other: "GermMap") -> "GermMap":
        self._check(other)
        return GermMap([a - b for a, b in zip(self.components, other.components)])

    def __neg__(self) -> "GermMap":
        return GermMap([-c for c in self.components])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GermMap):
            return NotImplemented
        return self.components == other.components

    def __hash__(self):
        return hash(self.components)

    def max_abs_difference(self, other: "GermMap") -> float:
        self._check(other)
        return max(a.max_abs_difference(b) for a, b in zip(self.components, other.components))

    def is_close(self, other: "GermMap", tolerance: float = 0.0) -> bool:
        self._check(other)
        return all(a.is_close(b, tolerance) for a, b in zip(self.components, other.components))

    def first_difference(self, other: "GermMap") -> Optional[Tuple[int, MultiIndex, Any, Any]]:
        """最初に異なる係数 (成分, 多重指数, 自分の値, 相手の値) を正準順で返す"""
        self._check(other)
        for j, (a, b) in enumerate(zip(self.components, other.components)):
            keys = sorted(set(a._terms) | set(b._terms), key=canonical_key)
            for Q in keys:
                ca, cb = a.coefficient(Q), b.coefficient(Q)
                if not self.backend.close(ca, cb):
                    return j, Q, ca, cb
        return None

    def format(self, names: Optional[Sequence[str]] = None) -> str:
        return "(" + ", ".join(c.format(names) for c in self.components) + ")"

    def __repr__(self) -> str:
        return f"GermMap{self.format()}"


# ---------------------------------------------------------------------------
# 演算 (公開 API)
# ---------------------------------------------------------------------------


def ring_ops(a: TruncatedSeries, b: Any, op: str) -> TruncatedSeries:
    """加減乗とスカラー倍"""
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        if not isinstance(b, TruncatedSeries):
            raise SeriesMismatch("mul には級数が必要です (スカラー倍は scale)")
        return a * b
    if op == "scale":
        return a.scale(b)
    raise SeriesMismatch(f"未知の演算です: {op!r}")


def conjugate_coefficients(f: TruncatedSeries) -> TruncatedSeries:
    return f.conjugate()


def extract(f: TruncatedSeries, Q: Sequence[int]):
    return f.coefficient(Q)


def project(f: TruncatedSeries, predicate: Callable[[MultiIndex], bool]) -> TruncatedSeries:
    return f.project(predicate)


class _PowerCache:
    """内側写像の成分の単項式 (inner^Q) をメモ化する"""

    def __init__(self, inner: GermMap, truncation: int):
        self.inner = [c._terms for c in inner.components]
        self.truncation = truncation
        self.cache: Dict[MultiIndex, Terms] = {
            (0,) * inner.nvars_out: {(0,) * inner.nvars_in: inner.backend.one()}
        }

    def power(self, Q: MultiIndex) -> Terms:
        hit = self.cache.get(Q)
        if hit is not None:
            return hit
        k = max(i for i, q in enumerate(Q) if q)
        prev = Q[:k] + (Q[k] - 1,) + Q[k + 1:]
        terms = _mul_terms(self.power(prev), self.inner[k], self.truncation)
        self.cache[Q] = terms
        return terms


def compose_series(
    outer: TruncatedSeries, inner: GermMap, truncation: Optional[int] = None, cache=None
) -> TruncatedSeries:
    """級数 outer に写像 inner を代入する"""
    if outer.nvars != inner.nvars_out:
        raise SeriesMismatch(
            f"合成の次元が一致しません: 外側 {outer.nvars} 変数, 内側 {inner.nvars_out} 成分"
        )
    if outer.backend != inner.backend:
        raise SeriesMismatch("合成するバックエンドが一致しません", mismatch="backend")
    N = truncation or min(outer.truncation, inner.truncation)
    cache = cache or _PowerCache(inner, N)
    acc: Terms = {}
    for Q, c in outer.items():
        if sum(Q) > N:
            break
        for P, v in cache.power(Q).items():
            _accumulate(acc, P, c * v)
    return TruncatedSeries._trusted(inner.nvars_in, N, inner.backend, acc)


def compose(outer: GermMap, inner: GermMap, truncation: Optional[int] = None) -> GermMap:
    """
    合成 outer∘inner を次数 N まで計算

    出力の d 次係数は inner の d 次以下の係数にだけ依存する。
    """
    if outer.nvars_in != inner.nvars_out:
        raise SeriesMismatch(
            f"合成の次元が一致しません: 外側 {outer.nvars_in} 変数, 内側 {inner.nvars_out} 成分"
        )
    if truncation is None and outer.truncation != inner.truncation:
        raise SeriesMismatch(
            f"打ち切り次数が一致しません: {outer.truncation} と {inner.truncation}",
            mismatch="truncation",
        )
    N = truncation or outer.truncation
    cache = _PowerCache(inner, N)
    return GermMap([compose_series(c, inner, N, cache) for c in outer.components])


def change_backend(f: GermMap, backend: CoefficientBackend) -> GermMap:
    """係数を別のバックエンドへ移す (exact から float への変換のみ)"""
    if f.backend == backend:
        return f
    if backend.name != "float":
        raise SeriesMismatch("float から exact への変換はできません", mismatch="backend")
    return GermMap(
        [
            TruncatedSeries._trusted(
                c.nvars,
                c.truncation,
                backend,
                {Q: f.backend.to_complex(v) for Q, v in c.items()},
            )
            for c in f.components
        ]
    )


def invert_germ(f: GermMap) -> GermMap:
    """
    写像の芽の逆写像

    g = L^{-1}(x - N(g)) を打ち切り次数を1つずつ上げながら反復する。
    """
    if f.nvars_in != f.nvars_out:
        raise NonInvertibleLinearPart(
            f"正方でない写像は逆にできません: {f.nvars_out}x{f.nvars_in}"
        )
    n, N, backend = f.nvars_in, f.truncation, f.backend
    L_inv = linalg.inverse(f.linear_part, backend, NonInvertibleLinearPart)
    nonlinear = f.nonlinear_part()
    ident = GermMap.identity(n, N, backend)
    g = GermMap.from_matrix(L_inv, N, backend)
    for d in range(2, N + 1):
        correction = compose(nonlinear, g, truncation=d).truncated(N)
        g = (ident - correction).apply_matrix(L_inv)
    return g


def solve_implicit(
    equation: GermMap,
    unknown_block: Sequence[int],
    branch_linear: Sequence[Sequence[Any]],
    tolerance: float = 1e-9,
) -> GermMap:
    """
    形式的陰関数定理で E(x, y(x)) = 0 を解く

    Args:
        equation: 入力変数 (既知 x と未知 y) から k 成分への写像 E
        unknown_block: 未知変数の入力位置 (k 個)
        branch_linear: y の線形部分として指定する k × (既知変数の数) 行列
        tolerance: float バックエンドでの残差の許容値

    Returns:
        既知変数から未知変数への写像 y(x)
    """
    n, N, backend = equation.nvars_in, equation.truncation, equation.backend
    unknown = list(unknown_block)
    k = len(unknown)
    if equation.nvars_out != k:
        raise SeriesMismatch(f"方程式の数 {equation.nvars_out} と未知数 {k} が一致しません")
    known = [i for i in range(n) if i not in set(unknown)]
    m = len(known)
    if not known:
        raise SeriesMismatch("既知変数がありません")

    L = equation.linear_part
    J = [[L[r][u] for u in unknown] for r in range(k)]
    A = [[L[r][x] for x in known] for r in range(k)]
    B = linalg.make_matrix(branch_linear, backend)
    if linalg.shape(B) != (k, m):
        raise SeriesMismatch(f"分岐の線形部分の形が {k}x{m} ではありません")
    J_inv = linalg.inverse(J, backend, ImplicitSolveSingular)

    mismatch = linalg.add(A, linalg.matmul(J, B, backend))
    if not linalg.equal(mismatch, linalg.zeros(k, m, backend), backend, tolerance):
        raise BranchMismatch(
            "指定された線形分岐が1次で方程式を満たしません",
            residual=linalg.format_matrix(mismatch, backend),
        )

    known_vars = [TruncatedSeries.variable(j, m, N, backend) for j in range(m)]
    y = GermMap.from_matrix(B, N, backend)

    def substitution(y_map: GermMap) -> GermMap:
        comps: List[Optional[TruncatedSeries]] = [None] * n
        for pos, var in zip(known, known_vars):
            comps[pos] = var
        for pos, comp in zip(unknown, y_map.components):
            comps[pos] = comp
        return GermMap(comps)

    for d in range(2, N + 1):
        residual = compose(equation, substitution(y), truncation=d).truncated(N)
        step = residual.project(lambda Q, d=d: sum(Q) == d).apply_matrix(J_inv)
        y = y - step
        logger.debug("陰関数: 次数 %d 完了", d)

    final = compose(equation, substitution(y))
    zero = GermMap([TruncatedSeries.zero(m, N, backend)] * k)
    if not final.is_close(zero, tolerance):
        raise ImplicitSolveSingular(
            "陰関数の残差が消えません",
            max_residual=final.max_abs_difference(zero),
        )
    return y

