"""
germlab - 係数バックエンド

形式的べき級数の係数を扱う2種類のバックエンドを提供する。

- ExactBackend: ガウス有理数 (sympy の QQ_I)。常に既約分数で保持される
- FloatBackend: Python の complex。ゼロ判定にしきい値を使う

一つの計算の中でバックエンドを混在させてはいけない。
"""

import math
from fractions import Fraction
from typing import Any, Tuple, Union

from sympy import Expr, sympify
from sympy.polys.domains import QQ, QQ_I
from sympy.polys.polyerrors import CoercionFailed

from .errors import SeriesMismatch

JsonNumber = Union[str, int, float]


def _parse_rational(text: Any) -> Fraction:
    """'p/q' 形式の文字列・整数を Fraction に変換"""
    if isinstance(text, bool):
        raise SeriesMismatch(f"真偽値は係数として使えません: {text!r}")
    if isinstance(text, int):
        return Fraction(text)
    if isinstance(text, Fraction):
        return text
    if isinstance(text, str):
        try:
            return Fraction(text.strip())
        except (ValueError, ZeroDivisionError) as e:
            raise SeriesMismatch(f"有理数として解釈できません: {text!r}") from e
    raise SeriesMismatch(f"exact バックエンドでは有理数文字列が必要です: {text!r}")


def _render_rational(value: Any) -> str:
    num = int(QQ.numer(value))
    den = int(QQ.denom(value))
    if den == 1:
        return str(num)
    return f"{num}/{den}"


class CoefficientBackend:
    """係数演算の共通インターフェース"""

    name = "abstract"

    def zero(self):
        raise NotImplementedError

    def one(self):
        raise NotImplementedError

    def make(self, value: Any):
        raise NotImplementedError

    def is_zero(self, c) -> bool:
        raise NotImplementedError

    def conj(self, c):
        raise NotImplementedError

    def modulus(self, c) -> float:
        raise NotImplementedError

    def modulus_squared(self, c):
        raise NotImplementedError

    def to_complex(self, c) -> complex:
        raise NotImplementedError

    def to_json(self, c) -> Tuple[JsonNumber, JsonNumber]:
        raise NotImplementedError

    def from_json(self, re: JsonNumber, im: JsonNumber = 0):
        return self.make((re, im))

    def format(self, c) -> str:
        raise NotImplementedError

    def is_real(self, c) -> bool:
        raise NotImplementedError

    def real(self, c):
        raise NotImplementedError

    def imag(self, c):
        raise NotImplementedError

    def close(self, a, b, tolerance: float = 0.0) -> bool:
        """係数が一致するか (exact は完全一致、float はしきい値付き)"""
        raise NotImplementedError

    # 共通の便利関数

    def inv(self, c):
        if self.is_zero(c):
            raise ZeroDivisionError("ゼロ係数の逆数")
        return self.one() / c

    def div(self, a, b):
        if self.is_zero(b):
            raise ZeroDivisionError("ゼロ係数での除算")
        return a / b

    def power(self, c, k: int):
        if k >= 0:
            result = self.one()
            base = c
            while k:
                if k & 1:
                    result = result * base
                base = base * base
                k >>= 1
            return result
        return self.inv(self.power(c, -k))

    def __eq__(self, other):
        return isinstance(other, CoefficientBackend) and self.name == other.name

    def __hash__(self):
        return hash(self.name)

    def __repr__(self):
        return f"<{self.__class__.__name__} {self.name}>"


class ExactBackend(CoefficientBackend):
    """ガウス有理数 Q(i) 上の厳密演算"""

    name = "exact"

    def zero(self):
        return QQ_I.zero

    def one(self):
        return QQ_I.one

    def make(self, value: Any):
        if isinstance(value, QQ_I.dtype):
            return value
        if isinstance(value, (tuple, list)):
            if len(value) != 2:
                raise SeriesMismatch(f"係数は (実部, 虚部) の組で指定してください: {value!r}")
            re = _parse_rational(value[0])
            im = _parse_rational(value[1])
            return QQ_I(QQ(re.numerator, re.denominator), QQ(im.numerator, im.denominator))
        if isinstance(value, Expr):
            try:
                return QQ_I.from_sympy(value.expand(complex=True))
            except CoercionFailed as e:
                raise SeriesMismatch(
                    f"ガウス有理数ではない値は exact バックエンドで扱えません: {value}"
                ) from e
        if isinstance(value, (float, complex)):
            raise SeriesMismatch(
                f"exact バックエンドに浮動小数点値は渡せません: {value!r}"
            )
        if isinstance(value, str) and ("I" in value or "i" in value):
            return self.make(sympify(value.replace("i", "I")))
        if isinstance(value, QQ.dtype):
            return QQ_I(value, QQ.zero)
        re = _parse_rational(value)
        return QQ_I(QQ(re.numerator, re.denominator), QQ.zero)

    def is_zero(self, c) -> bool:
        return not c

    def conj(self, c):
        return QQ_I(c.x, -c.y)

    def modulus(self, c) -> float:
        return math.hypot(float(c.x), float(c.y))

    def modulus_squared(self, c):
        return c.x * c.x + c.y * c.y

    def to_complex(self, c) -> complex:
        return complex(float(c.x), float(c.y))

    def to_sympy(self, c):
        return QQ_I.to_sympy(c)

    def to_json(self, c):
        return _render_rational(c.x), _render_rational(c.y)

    def format(self, c) -> str:
        re, im = _render_rational(c.x), _render_rational(c.y)
        if not c.y:
            return re
        if not c.x:
            return f"{im}i"
        sign = "-" if im.startswith("-") else "+"
        return f"({re}{sign}{im.lstrip('-')}i)"

    def is_real(self, c) -> bool:
        return not c.y

    def real(self, c):
        return QQ_I(c.x, QQ.zero)

    def imag(self, c):
        return QQ_I(c.y, QQ.zero)

    def close(self, a, b, tolerance: float = 0.0) -> bool:
        return a == b


class FloatBackend(CoefficientBackend):
    """complex 浮動小数点による近似演算"""

    name = "float"

    def __init__(self, zero_threshold: float = 1e-12):
        self.zero_threshold = zero_threshold

    def zero(self):
        return 0j

    def one(self):
        return 1 + 0j

    def make(self, value: Any):
        if isinstance(value, bool):
            raise SeriesMismatch(f"真偽値は係数として使えません: {value!r}")
        if isinstance(value, (int, float, complex)):
            return complex(value)
        if isinstance(value, Fraction):
            return complex(float(value))
        if isinstance(value, (tuple, list)):
            if len(value) != 2:
                raise SeriesMismatch(f"係数は (実部, 虚部) の組で指定してください: {value!r}")
            return complex(self._real_part(value[0]), self._real_part(value[1]))
        if isinstance(value, str):
            return complex(self._real_part(value))
        if isinstance(value, QQ_I.dtype):
            return complex(float(value.x), float(value.y))
        if isinstance(value, Expr):
            return complex(value.evalf())
        try:
            return complex(value)
        except TypeError as e:
            raise SeriesMismatch(f"係数として解釈できません: {value!r}") from e

    @staticmethod
    def _real_part(value: Any) -> float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        return float(_parse_rational(value))

    def is_zero(self, c) -> bool:
        return abs(c) <= self.zero_threshold

    def conj(self, c):
        return c.conjugate()

    def modulus(self, c) -> float:
        return abs(c)

    def modulus_squared(self, c):
        return c.real * c.real + c.imag * c.imag

    def to_complex(self, c) -> complex:
        return complex(c)

    def to_json(self, c):
        return float(c.real), float(c.imag)

    def format(self, c) -> str:
        if c.imag == 0:
            return repr(float(c.real))
        return repr(complex(c))

    def is_real(self, c) -> bool:
        return abs(c.imag) <= self.zero_threshold

    def real(self, c):
        return complex(c.real, 0.0)

    def imag(self, c):
        return complex(c.imag, 0.0)

    def close(self, a, b, tolerance: float = 0.0) -> bool:
        return abs(a - b) <= max(tolerance, self.zero_threshold)

    def __eq__(self, other):
        return isinstance(other, FloatBackend)

    def __hash__(self):
        return hash(self.name)


EXACT = ExactBackend()


def get_backend(name: str, zero_threshold: float = 1e-12) -> CoefficientBackend:
    """名前からバックエンドを取得"""
    if name == "exact":
        return EXACT
    if name == "float":
        return FloatBackend(zero_threshold)
    raise SeriesMismatch(f"未知のバックエンドです: {name!r}")
