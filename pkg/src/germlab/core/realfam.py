"""
germlab - 全実部分多様体の族

各全実部分多様体 M_i を反正則対合 ρ_i(z) = B_i z̄ + R_i(z̄) の固定点集合として与え、
反射群 F_{i,j} = ρ_i∘ρ_j を線形化することで、ρ_i を同時に反線形化する。

ρ は正則写像 H (ρ(z) = H(z̄)) として保持する。したがって
ρ_i∘ρ_j は H_i∘H̄_j (H̄_j は係数を共役にした写像) で表される。
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import linalg
from .coefficients import CoefficientBackend
from .errors import (
    AntiLinearizationFailed,
    HypothesisViolated,
    NonDiagonalLinearParts,
    NotInvolution,
    SeriesMismatch,
    UnsupportedConfiguration,
)
from .linearize import CommutingFamily, LinearizationResult, linearize_on_ideal
from .resonance import MonomialIdeal, OracleMode
from .series import GermMap, MultiIndex, compose, invert_germ, monomials, sub_indices, unit

logger = logging.getLogger(__name__)


class AntiInvolution:
    """
    反正則対合 ρ(z) = B z̄ + R(z̄)

    Args:
        B: 線形部分 (B B̄ = Id)
        R: 共役変数の写像 (2次以上)
        check: ρ∘ρ = Id を検査する
    """

    def __init__(self, B: Sequence[Sequence[Any]], R: GermMap, check: bool = True, index: int = 0):
        backend = R.backend
        self.B = linalg.make_matrix(B, backend)
        n = linalg.ensure_square(self.B, "B")
        if n != R.nvars_in or R.nvars_in != R.nvars_out:
            raise SeriesMismatch(f"B ({n}x{n}) と R の次元が一致しません")
        if any(not comp.project(lambda Q: sum(Q) <= 1).is_zero() for comp in R):
            raise SeriesMismatch("R は2次以上の項だけを持つ必要があります")
        self.R = R
        self.index = index
        self.holomorphic = GermMap.from_matrix(self.B, R.truncation, backend) + R
        if check:
            self.check()

    @classmethod
    def linear(cls, B, truncation: int, backend: CoefficientBackend, index: int = 0) -> "AntiInvolution":
        n = len(B)
        zero = GermMap.identity(n, truncation, backend).project(lambda Q: False)
        return cls(B, zero, index=index)

    @classmethod
    def from_holomorphic(cls, H: GermMap, check: bool = True, index: int = 0) -> "AntiInvolution":
        return cls(H.linear_part, H.nonlinear_part(), check, index)

    @property
    def n(self) -> int:
        return len(self.B)

    @property
    def backend(self) -> CoefficientBackend:
        return self.R.backend

    @property
    def truncation(self) -> int:
        return self.R.truncation

    def check(self, tolerance: float = 1e-9) -> None:
        backend = self.backend
        if not linalg.equal(
            linalg.matmul(self.B, linalg.conjugate(self.B, backend), backend),
            linalg.identity(self.n, backend),
            backend,
            tolerance,
        ):
            raise NotInvolution(f"ρ_{self.index + 1}: B B̄ = Id が成り立ちません", i=self.index)
        square = compose(self.holomorphic, self.holomorphic.conjugate())
        ident = GermMap.identity(self.n, self.truncation, self.backend)
        if not square.is_close(ident, tolerance):
            j, Q, a, b = square.first_difference(ident)
            raise NotInvolution(
                f"ρ_{self.index + 1}∘ρ_{self.index + 1} が恒等写像ではありません",
                i=self.index,
                j=j,
                Q=list(Q),
            )

    def fixed_real_dimension(self) -> int:
        """{z : B z̄ = z} の実次元"""
        B = linalg.to_numpy(self.B, self.backend)
        Br, Bi = B.real, B.imag
        eye = np.eye(self.n)
        M = np.block([[Br - eye, Bi], [Bi, -Br - eye]])
        return 2 * self.n - int(np.linalg.matrix_rank(M, tol=1e-9))

    def is_antilinear(self) -> bool:
        return all(comp.is_zero() for comp in self.R)


def conjugate_involution(rho: AntiInvolution, phi: GermMap, phi_inverse: Optional[GermMap] = None) -> AntiInvolution:
    """ρ' = φ∘ρ∘φ^{-1} (φ は正則な芽)"""
    inverse = phi_inverse or invert_germ(phi)
    H = compose(phi, compose(rho.holomorphic, inverse.conjugate()))
    return AntiInvolution.from_holomorphic(H, check=False, index=rho.index)


class RealFamily:
    """全実部分多様体の族 (対合のリスト)"""

    def __init__(self, involutions: Sequence[AntiInvolution]):
        if not involutions:
            raise UnsupportedConfiguration("対合が1つもありません")
        self.involutions: Tuple[AntiInvolution, ...] = tuple(involutions)
        first = self.involutions[0]
        for k, rho in enumerate(self.involutions):
            rho.index = k
            if rho.n != first.n or rho.truncation != first.truncation or rho.backend != first.backend:
                raise SeriesMismatch(f"ρ_{k + 1} の次元・打ち切り次数・バックエンドが族と一致しません")
            dim = rho.fixed_real_dimension()
            if dim != rho.n:
                raise NotInvolution(f"ρ_{k + 1} の固定点集合の実次元が {dim} です (期待値 {rho.n})", i=k)
        for i in range(len(self.involutions)):
            for j in range(i + 1, len(self.involutions)):
                if linalg.equal(self.involutions[i].B, self.involutions[j].B, first.backend, 1e-12):
                    raise UnsupportedConfiguration(
                        f"M_{i + 1} と M_{j + 1} は原点で接しています (接平面が一致)", i=i, j=j
                    )

    @property
    def m(self) -> int:
        return len(self.involutions)

    @property
    def n(self) -> int:
        return self.involutions[0].n

    @property
    def backend(self) -> CoefficientBackend:
        return self.involutions[0].backend

    @property
    def truncation(self) -> int:
        return self.involutions[0].truncation

    def pairs(self) -> List[Tuple[int, int]]:
        return [(i, j) for i in range(self.m) for j in range(i + 1, self.m)]

    def group_element(self, i: int, j: int) -> GermMap:
        """F_{i,j} = ρ_i∘ρ_j"""
        return compose(self.involutions[i].holomorphic, self.involutions[j].holomorphic.conjugate())

    def linear_part(self, i: int, j: int) -> linalg.Mat:
        """D_{i,j} = B_i B̄_j"""
        backend = self.backend
        return linalg.matmul(
            self.involutions[i].B, linalg.conjugate(self.involutions[j].B, backend), backend
        )

    def eigenvalues(self, i: int, j: int) -> List[Any]:
        """μ_{i,j,k} (D_{i,j} が対角であることを仮定)"""
        D = self.linear_part(i, j)
        if not linalg.is_diagonal(D, self.backend):
            raise NonDiagonalLinearParts(f"D_{{{i + 1},{j + 1}}} が対角ではありません", i=i, j=j)
        return linalg.diagonal(D)


def build_reflection_group(
    fam: RealFamily,
    oracle_mode: Optional[str] = None,
    relations: Optional[Sequence[Sequence[int]]] = None,
    epsilon: float = 1e-9,
) -> CommutingFamily:
    """
    反射群 {F_{i,j} = ρ_i∘ρ_j : i < j} を可換族として構成

    F_{j,i} = F_{i,j}^{-1} なので i < j の組だけで群を生成する。
    対合が1つだけなら恒等写像1つからなる族を返す。
    """
    for rho in fam.involutions:
        rho.check()
    pairs = fam.pairs()
    if not pairs:
        maps = [GermMap.identity(fam.n, fam.truncation, fam.backend)]
    else:
        maps = [fam.group_element(i, j) for i, j in pairs]
    logger.info("反射群: %d 個の生成元", len(maps))
    return CommutingFamily(maps, oracle_mode, relations, epsilon)


# ---------------------------------------------------------------------------
# 非共鳴性
# ---------------------------------------------------------------------------


@dataclass
class NonresonanceReport:
    nonresonant: bool
    witness: Optional[Tuple[int, int, MultiIndex]] = None
    checked: int = 0


def _resonant_triple(
    fam: RealFamily,
    i: int,
    k: int,
    Q: MultiIndex,
    mode: OracleMode,
    relations: Sequence[Sequence[int]],
    epsilon: float,
) -> bool:
    """全ての j ≠ i で conj(μ_{i,j})^Q = μ_{i,j,k}^{-1} が成り立つか"""
    backend = fam.backend
    if mode is OracleMode.LATTICE:
        from sympy import Matrix

        target = sub_indices(Q, unit(fam.n, k))
        if not any(target):
            return True
        if not relations:
            return False
        try:
            sol, params = Matrix(relations).T.gauss_jordan_solve(Matrix(target))
        except ValueError:
            return False
        return params.shape[0] == 0 and all(c.is_integer for c in sol)
    for j in range(fam.m):
        if j == i:
            continue
        mu = fam.eigenvalues(i, j)
        value = backend.one()
        for m, q in zip(mu, Q):
            value = value * backend.power(backend.conj(m), q)
        value = value * mu[k]
        if mode is OracleMode.EXACT:
            if value != backend.one():
                return False
        elif backend.modulus(value - backend.one()) > epsilon:
            return False
    return True


def check_nonresonance(
    fam: RealFamily,
    ideal: MonomialIdeal,
    degree_bound: Optional[int] = None,
    oracle_mode: Optional[str] = None,
    relations: Optional[Sequence[Sequence[int]]] = None,
    epsilon: float = 1e-9,
) -> NonresonanceReport:
    """
    イデアルの外の全ての (i, k, Q) について、conj(μ_{i,j})^Q ≠ μ_{i,j,k}^{-1} となる j があるか

    lattice モードでは全ての μ が単位円上にあると仮定し、
    Q − e_k が宣言された関係格子に入るかで判定する。
    """
    mode = OracleMode(oracle_mode or ("exact" if fam.backend.name == "exact" else "numeric"))
    if mode is OracleMode.LATTICE:
        for i, j in fam.pairs():
            for mu in fam.eigenvalues(i, j):
                if abs(fam.backend.modulus(mu) - 1.0) > 1e-9:
                    raise UnsupportedConfiguration("lattice モードの非共鳴判定には単位円上の固有値が必要です")
    if fam.m < 2:
        return NonresonanceReport(False, (0, 0, monomials(fam.n, 2)[0]), 0)
    bound = degree_bound or fam.truncation
    checked = 0
    for d in range(2, bound + 1):
        for Q in monomials(fam.n, d):
            if Q in ideal:
                continue
            for i in range(fam.m):
                for k in range(fam.n):
                    checked += 1
                    if _resonant_triple(fam, i, k, Q, mode, relations or [], epsilon):
                        logger.info("共鳴: i=%d k=%d Q=%s", i + 1, k + 1, Q)
                        return NonresonanceReport(False, (i, k, Q), checked)
    return NonresonanceReport(True, None, checked)


# ---------------------------------------------------------------------------
# 直線化
# ---------------------------------------------------------------------------


@dataclass
class StraightenResult:
    phi: GermMap
    rho_normalized: List[AntiInvolution]
    linearization: LinearizationResult
    report: Dict[str, Any] = field(default_factory=dict)


def anti_linearization_failures(
    rho: AntiInvolution, ideal: MonomialIdeal, tolerance: float = 1e-9
) -> List[Dict[str, Any]]:
    """R の項で共役イデアルの外にあるもの (i, Q, k)"""
    backend = rho.backend
    out = []
    for k, comp in enumerate(rho.R):
        for Q, c in comp.items():
            if Q in ideal:
                continue
            if backend.name == "float" and backend.modulus(c) <= tolerance:
                continue
            out.append({"i": rho.index, "k": k, "Q": list(Q), "value": backend.format(c)})
    return out


def straighten(
    fam: RealFamily,
    ideal: MonomialIdeal,
    oracle_mode: Optional[str] = None,
    relations: Optional[Sequence[Sequence[int]]] = None,
    epsilon: float = 1e-9,
    threads: int = 1,
    tolerance: float = 1e-9,
    progress_callback=None,
) -> StraightenResult:
    """
    反射群をイデアル上で線形化し、その座標で ρ_i が共役イデアルを法として反線形になることを確かめる

    Returns:
        StraightenResult (phi は線形化写像 Φ、rho_normalized は Φ^{-1}∘ρ_i∘Φ)
    """
    nonres = check_nonresonance(fam, ideal, None, oracle_mode, relations, epsilon)
    if not nonres.nonresonant:
        i, k, Q = nonres.witness
        raise HypothesisViolated(
            "族がイデアル上で非共鳴ではありません", identity="non-resonance", i=i, k=k, Q=list(Q)
        )
    group = build_reflection_group(fam, oracle_mode, relations, epsilon)
    result = linearize_on_ideal(group, ideal, threads=threads, progress_callback=progress_callback)

    phi_inverse = invert_germ(result.phi)
    normalized = [conjugate_involution(rho, phi_inverse, result.phi) for rho in fam.involutions]

    report: Dict[str, Any] = {"involution": [], "anti_linear": []}
    for rho in normalized:
        try:
            rho.check(tolerance)
            report["involution"].append(True)
        except NotInvolution:
            report["involution"].append(False)
        failures = anti_linearization_failures(rho, ideal, tolerance)
        report["anti_linear"].append(not failures)
        if failures:
            first = failures[0]
            raise AntiLinearizationFailed(
                f"ρ_{rho.index + 1} が共役イデアルを法として反線形になりません",
                i=first["i"],
                Q=first["Q"],
                k=first["k"],
            )
    logger.info("直線化完了: %d 個の対合", len(normalized))
    return StraightenResult(result.phi, normalized, result, report)


# ---------------------------------------------------------------------------
# 報告
# ---------------------------------------------------------------------------


def group_consistency(fam: RealFamily, tolerance: float = 1e-9) -> bool:
    """F_{i,j}∘F_{j,i} = Id"""
    ident = GermMap.identity(fam.n, fam.truncation, fam.backend)
    for i, j in fam.pairs():
        if not compose(fam.group_element(i, j), fam.group_element(j, i)).is_close(ident, tolerance):
            return False
    return True


def normalization_report(fam: RealFamily, tolerance: float = 1e-9) -> Dict[str, Any]:
    """
    R_i(z̄) − D_{i,j} R_i(D̄_{i,j} z̄) = 0 と、R_i の項の共鳴台条件をそれぞれ評価する

    台条件: R_i の k 成分の項 Q は全ての j で conj(μ_{i,j})^Q = μ_{i,j,k}^{-1} を満たす
    """
    backend = fam.backend
    identity_holds = []
    for i, rho in enumerate(fam.involutions):
        for j in range(fam.m):
            D = fam.linear_part(i, j)
            inner = GermMap.from_matrix(linalg.conjugate(D, backend), fam.truncation, backend)
            moved = compose(rho.R, inner).apply_matrix(D)
            zero = (rho.R - rho.R)
            holds = (rho.R - moved).is_close(zero, tolerance)
            identity_holds.append({"i": i, "j": j, "holds": holds})

    support_violations = []
    diagonal = all(linalg.is_diagonal(fam.linear_part(i, j), backend) for i, j in fam.pairs())
    if diagonal:
        mode = OracleMode.EXACT if backend.name == "exact" else OracleMode.NUMERIC
        for i, rho in enumerate(fam.involutions):
            for k, comp in enumerate(rho.R):
                for Q, c in comp.items():
                    if not _resonant_triple(fam, i, k, Q, mode, [], tolerance):
                        support_violations.append({"i": i, "k": k, "Q": list(Q)})
    return {
        "definition": "R_i(conj z) - D_ij R_i(conj(D_ij) conj z) = 0 for all i, j",
        "identity": identity_holds,
        "normalizable": all(e["holds"] for e in identity_holds),
        "support_checked": diagonal,
        "support_violations": support_violations,
    }


def _variable(k: int) -> str:
    return f"z{k + 1}"


def intersection_report(fam: RealFamily, ideal: MonomialIdeal) -> Dict[str, Any]:
    """
    V(I) の座標部分空間への分解と、各成分上での M_k の実線形方程式 B_k z̄ = z
    """
    backend = fam.backend
    components = []
    for S in ideal.components():
        zero = set(S)
        free = [t for t in range(fam.n) if t not in zero]
        manifolds = []
        for rho in fam.involutions:
            equations = []
            for t in range(fam.n):
                terms = [
                    f"{backend.format(rho.B[t][u])}*conj({_variable(u)})"
                    for u in free
                    if not backend.is_zero(rho.B[t][u])
                ]
                rhs = " + ".join(terms) if terms else "0"
                lhs = "0" if t in zero else _variable(t)
                if lhs == "0" and rhs == "0":
                    continue
                equations.append(f"{lhs} = {rhs}")
            manifolds.append({"index": rho.index, "equations": equations})
        components.append(
            {
                "zero": [_variable(s) for s in S],
                "free": [_variable(t) for t in free],
                "manifolds": manifolds,
            }
        )
    description = " ∪ ".join(
        "{" + ", ".join(f"{_variable(s)}=0" for s in S) + "}" if S else "C^n" for S in ideal.components()
    )
    return {"variety": description or "{0}", "ideal": ideal.format([_variable(k) for k in range(fam.n)]), "components": components}
