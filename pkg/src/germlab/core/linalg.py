"""
germlab - 線形代数ヘルパー

行列は係数のリストのリストとして保持する。
exact バックエンドでは sympy の DomainMatrix (QQ_I 上) を、
float バックエンドでは numpy / scipy を使って計算する。
"""

import logging
from typing import Any, Callable, List, Sequence, Tuple, Type

import numpy as np
import scipy.linalg
from sympy import Matrix, nsimplify, sqrt
from sympy.polys.domains import QQ_I
from sympy.polys.matrices import DomainMatrix

from .coefficients import CoefficientBackend
from .errors import GermlabError, NonInvertibleLinearPart

logger = logging.getLogger(__name__)

Mat = List[List[Any]]
Vec = List[Any]


def _is_exact(backend: CoefficientBackend) -> bool:
    return backend.name == "exact"


def shape(A: Sequence[Sequence[Any]]) -> Tuple[int, int]:
    return len(A), (len(A[0]) if A else 0)


def make_matrix(rows: Sequence[Sequence[Any]], backend: CoefficientBackend) -> Mat:
    """任意の数値から係数行列を作る"""
    return [[backend.make(v) for v in row] for row in rows]


def zeros(r: int, c: int, backend: CoefficientBackend) -> Mat:
    return [[backend.zero() for _ in range(c)] for _ in range(r)]


def identity(n: int, backend: CoefficientBackend) -> Mat:
    return diag([backend.one()] * n, backend)


def diag(values: Sequence[Any], backend: CoefficientBackend) -> Mat:
    n = len(values)
    M = zeros(n, n, backend)
    for i, v in enumerate(values):
        M[i][i] = v
    return M


def transpose(A: Mat) -> Mat:
    r, c = shape(A)
    return [[A[i][j] for i in range(r)] for j in range(c)]


def conjugate(A: Mat, backend: CoefficientBackend) -> Mat:
    return [[backend.conj(v) for v in row] for row in A]


def adjoint(A: Mat, backend: CoefficientBackend) -> Mat:
    return transpose(conjugate(A, backend))


def add(A: Mat, B: Mat) -> Mat:
    return [[a + b for a, b in zip(ra, rb)] for ra, rb in zip(A, B)]


def sub(A: Mat, B: Mat) -> Mat:
    return [[a - b for a, b in zip(ra, rb)] for ra, rb in zip(A, B)]


def scale(c: Any, A: Mat) -> Mat:
    return [[c * a for a in row] for row in A]


def matmul(A: Mat, B: Mat, backend: CoefficientBackend) -> Mat:
    ra, ca = shape(A)
    rb, cb = shape(B)
    if ca != rb:
        raise GermlabError(f"行列の形が合いません: {ra}x{ca} と {rb}x{cb}")
    out = zeros(ra, cb, backend)
    for i in range(ra):
        row = A[i]
        for k in range(ca):
            a = row[k]
            if backend.is_zero(a):
                continue
            brow = B[k]
            orow = out[i]
            for j in range(cb):
                orow[j] = orow[j] + a * brow[j]
    return out


def matvec(A: Mat, v: Vec, backend: CoefficientBackend) -> Vec:
    return [col[0] for col in matmul(A, [[x] for x in v], backend)]


def block(rows_of_blocks: Sequence[Sequence[Mat]]) -> Mat:
    """ブロック行列を組み立てる"""
    out: Mat = []
    for blocks in rows_of_blocks:
        height = len(blocks[0])
        for r in range(height):
            row: List[Any] = []
            for b in blocks:
                row.extend(b[r])
            out.append(row)
    return out


def column(A: Mat, j: int) -> Vec:
    return [row[j] for row in A]


def from_columns(cols: Sequence[Vec]) -> Mat:
    if not cols:
        return []
    return [[cols[j][i] for j in range(len(cols))] for i in range(len(cols[0]))]


def is_diagonal(A: Mat, backend: CoefficientBackend) -> bool:
    return all(
        backend.is_zero(A[i][j]) for i in range(len(A)) for j in range(len(A[i])) if i != j
    )


def diagonal(A: Mat) -> Vec:
    return [A[i][i] for i in range(min(shape(A)))]


def equal(A: Mat, B: Mat, backend: CoefficientBackend, tolerance: float = 0.0) -> bool:
    if shape(A) != shape(B):
        return False
    return all(
        backend.close(a, b, tolerance) for ra, rb in zip(A, B) for a, b in zip(ra, rb)
    )


def max_abs_difference(A: Mat, B: Mat, backend: CoefficientBackend) -> float:
    diffs = [backend.modulus(a - b) for ra, rb in zip(A, B) for a, b in zip(ra, rb)]
    return max(diffs, default=0.0)


# ---------------------------------------------------------------------------
# 変換
# ---------------------------------------------------------------------------


def to_domain_matrix(A: Mat) -> DomainMatrix:
    r, c = shape(A)
    return DomainMatrix([list(row) for row in A], (r, c), QQ_I)


def to_numpy(A: Mat, backend: CoefficientBackend) -> np.ndarray:
    return np.array(
        [[backend.to_complex(v) for v in row] for row in A], dtype=complex
    ).reshape(shape(A))


def from_numpy(arr: np.ndarray, backend: CoefficientBackend) -> Mat:
    return [[backend.make(complex(v)) for v in row] for row in np.atleast_2d(arr)]


def to_sympy(A: Mat, backend: CoefficientBackend) -> Matrix:
    if _is_exact(backend):
        return Matrix([[QQ_I.to_sympy(v) for v in row] for row in A])
    return Matrix([[complex(v) for v in row] for row in A])


def from_sympy(M: Matrix, backend: CoefficientBackend) -> Mat:
    return [[backend.make(M[i, j]) for j in range(M.cols)] for i in range(M.rows)]


# ---------------------------------------------------------------------------
# 行列式・逆行列・核
# ---------------------------------------------------------------------------


def det(A: Mat, backend: CoefficientBackend):
    if not A:
        return backend.one()
    if _is_exact(backend):
        return to_domain_matrix(A).det()
    return complex(np.linalg.det(to_numpy(A, backend)))


def is_invertible(A: Mat, backend: CoefficientBackend, tolerance: float = 1e-12) -> bool:
    if not A:
        return True
    if _is_exact(backend):
        return bool(det(A, backend))
    cond = np.linalg.cond(to_numpy(A, backend))
    return bool(np.isfinite(cond) and cond * tolerance < 1.0)


def inverse(
    A: Mat,
    backend: CoefficientBackend,
    error: Type[GermlabError] = NonInvertibleLinearPart,
    tolerance: float = 1e-12,
) -> Mat:
    """
    逆行列を計算

    Args:
        A: 正方行列
        backend: 係数バックエンド
        error: 特異な場合に送出する例外クラス
        tolerance: float バックエンドでの条件数判定

    Returns:
        逆行列
    """
    r, c = shape(A)
    if r != c:
        raise error(f"正方行列ではありません: {r}x{c}")
    if r == 0:
        return []
    if not is_invertible(A, backend, tolerance):
        raise error("行列が特異です", determinant=backend.format(backend.make(det(A, backend))))
    if _is_exact(backend):
        return to_domain_matrix(A).inv().to_list()
    return from_numpy(np.linalg.inv(to_numpy(A, backend)), backend)


def solve(A: Mat, b: Vec, backend: CoefficientBackend, **kwargs) -> Vec:
    return matvec(inverse(A, backend, **kwargs), b, backend)


def rank(A: Mat, backend: CoefficientBackend, tolerance: float = 1e-9) -> int:
    if not A or not A[0]:
        return 0
    if _is_exact(backend):
        return to_domain_matrix(A).rank()
    return int(np.linalg.matrix_rank(to_numpy(A, backend), tol=tolerance))


def nullspace(A: Mat, backend: CoefficientBackend, tolerance: float = 1e-9) -> List[Vec]:
    """核の基底 (列ベクトルのリスト)"""
    r, c = shape(A)
    if c == 0:
        return []
    if r == 0:
        return [[backend.one() if i == j else backend.zero() for i in range(c)] for j in range(c)]
    if _is_exact(backend):
        return [list(row) for row in to_domain_matrix(A).nullspace().to_list()]
    basis = scipy.linalg.null_space(to_numpy(A, backend), rcond=tolerance)
    return [[complex(v) for v in basis[:, k]] for k in range(basis.shape[1])]


def operator_norm(A: Mat, backend: CoefficientBackend) -> float:
    """作用素ノルム (最大特異値) を float で返す"""
    if not A:
        return 0.0
    return float(np.linalg.norm(to_numpy(A, backend), ord=2))


def exact_operator_norm(A: Mat, backend: CoefficientBackend):
    """
    作用素ノルムを厳密に求める

    A^H A の最大固有値の平方根が有理数のときだけ成功し、
    それ以外は None を返す。
    """
    AhA = to_sympy(matmul(adjoint(A, backend), A, backend), backend)
    eigs = [nsimplify(e) for e in AhA.eigenvals().keys()]
    top = max(eigs, key=lambda e: float(e.evalf()))
    root = nsimplify(sqrt(top))
    if not root.is_Rational:
        return None
    return backend.make(root)


def eigensystem(
    A: Mat, backend: CoefficientBackend
) -> List[Tuple[Any, int, List[Vec]]]:
    """
    固有値・重複度・固有ベクトルを返す

    exact バックエンドでは sympy の代数的な固有値 (sympy 式) を返す。
    固有ベクトルの成分も sympy 式となる。
    float バックエンドでは numpy の結果を固有値ごとにまとめる。
    """
    if _is_exact(backend):
        M = to_sympy(A, backend)
        out = []
        for value, mult, vecs in M.eigenvects():
            out.append((value, mult, [list(v) for v in vecs]))
        return out
    values, vectors = np.linalg.eig(to_numpy(A, backend))
    groups: List[Tuple[complex, int, List[Vec]]] = []
    for k, v in enumerate(values):
        for idx, (gv, mult, vecs) in enumerate(groups):
            if abs(gv - v) <= 1e-9 * max(1.0, abs(v)):
                vecs.append([complex(x) for x in vectors[:, k]])
                groups[idx] = (gv, mult + 1, vecs)
                break
        else:
            groups.append((complex(v), 1, [[complex(x) for x in vectors[:, k]]]))
    return groups


def takagi(S: Mat, backend: CoefficientBackend) -> Tuple[List[float], Mat]:
    """
    複素対称行列の高木分解 S = U diag(s) U^T

    特異値分解と行列平方根で計算する (float のみ)。
    返り値は (非負の特異値, ユニタリ行列 U)。
    """
    A = to_numpy(S, backend)
    n = A.shape[0]
    if n == 0:
        return [], []
    if np.allclose(A, np.zeros_like(A)):
        return [0.0] * n, from_numpy(np.eye(n), backend)
    V, sing, W_adjoint = np.linalg.svd(A)
    W = W_adjoint.conjugate().transpose()

    # 同じ特異値ごとにブロックを作り、各ブロックで平方根をとる
    groups: dict = {}
    for index, value in enumerate(sing):
        groups.setdefault(round(float(value), 12), []).append(index)
    blocks = []
    for indices in groups.values():
        Z = V[:, indices].transpose() @ W[:, indices]
        blocks.append(scipy.linalg.sqrtm(Z))
    U = V @ scipy.linalg.block_diag(*blocks).conjugate()

    order = np.argsort(sing, kind="stable")
    return [float(s) for s in sing[order]], from_numpy(U[:, order], backend)


def apply_fn(A: Mat, fn: Callable[[Any], Any]) -> Mat:
    return [[fn(v) for v in row] for row in A]


def format_matrix(A: Mat, backend: CoefficientBackend) -> List[List[str]]:
    return [[backend.format(v) for v in row] for row in A]


def ensure_square(A: Mat, what: str = "行列") -> int:
    r, c = shape(A)
    if r != c:
        raise GermlabError(f"{what}が正方行列ではありません: {r}x{c}")
    return r
