"""
germlab - 例外定義

計算パイプライン全体で使う例外クラス。
数学的な否定結果 (障害・仮定違反) と、予算超過、入力エラーを区別する。
"""

from typing import Any, Dict, List, Optional, Tuple


class GermlabError(Exception):
    """germlab の全ての例外の基底クラス"""

    exit_code = 1

    def __init__(self, message: str = "", **details: Any):
        super().__init__(message or self.__class__.__name__)
        self.message = message or self.__class__.__name__
        self.details: Dict[str, Any] = details

    def to_dict(self) -> Dict[str, Any]:
        return {"error": self.__class__.__name__, "message": self.message, "details": self.details}


# ---------------------------------------------------------------------------
# 入力・実装上のエラー (終了コード 2)
# ---------------------------------------------------------------------------


class InputError(GermlabError):
    exit_code = 2


class ManifestError(InputError):
    """マニフェストのスキーマエラー (JSON Pointer 付き)"""

    def __init__(self, errors: List[Tuple[str, str]]):
        self.errors = list(errors)
        lines = "; ".join(f"{path or '/'}: {msg}" for path, msg in self.errors)
        super().__init__(f"マニフェストが不正です: {lines}", errors=[list(e) for e in self.errors])


class SeriesMismatch(InputError):
    """変数の数・バックエンド・打ち切り次数の不一致"""


class OutOfTruncation(InputError):
    """打ち切り次数を超える係数の参照"""


class UnsupportedConfiguration(InputError):
    """この実装が扱わない入力構成"""


# ---------------------------------------------------------------------------
# 数学的な否定結果 (終了コード 3)
# ---------------------------------------------------------------------------


class MathematicalNegative(GermlabError):
    exit_code = 3


class NonInvertibleLinearPart(MathematicalNegative):
    pass


class ImplicitSolveSingular(MathematicalNegative):
    pass


class BranchMismatch(MathematicalNegative):
    pass


class NotAbelian(MathematicalNegative):
    pass


class FormalObstruction(MathematicalNegative):
    """係数漸化式の規則 (ii) で右辺が消えなかった"""

    def __init__(self, Q: Tuple[int, ...], j: int, value: Any, i: Optional[int] = None):
        self.Q = tuple(Q)
        self.j = j
        self.value = value
        self.i = i
        super().__init__(
            f"形式的障害: Q={self.Q}, j={j}",
            Q=list(self.Q),
            j=j,
            i=i,
        )


class HypothesisViolated(MathematicalNegative):
    pass


class VacuousInf(MathematicalNegative):
    pass


class NotInvolution(MathematicalNegative):
    pass


class NonDiagonalLinearParts(MathematicalNegative):
    pass


class AntiLinearizationFailed(MathematicalNegative):
    pass


class RealityViolated(MathematicalNegative):
    pass


class DegenerateSesquilinear(MathematicalNegative):
    pass


class Cond1Violated(MathematicalNegative):
    pass


class Cond2Violated(MathematicalNegative):
    pass


class ZeroBishopInvariant(MathematicalNegative):
    pass


class SpanDeficient(MathematicalNegative):
    pass


class CompatibilityResidual(MathematicalNegative):
    pass


# ---------------------------------------------------------------------------
# 予算超過 (終了コード 4)
# ---------------------------------------------------------------------------


class BudgetError(GermlabError):
    exit_code = 4


class BudgetExceeded(BudgetError):
    def __init__(self, message: str, largest_completed_k: int):
        self.largest_completed_k = largest_completed_k
        super().__init__(message, largest_completed_k=largest_completed_k)


class DiagnosticsBudgetExceeded(BudgetError):
    pass
