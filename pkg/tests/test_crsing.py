import random
from dataclasses import replace

import pytest
from sympy import I, Matrix, Rational, simplify, sqrt

from germlab.core.coefficients import EXACT, FloatBackend
from germlab.core.crsing import (
    ELLIPTIC,
    HYPERBOLIC,
    InvolutionPair,
    ManifoldData,
    NormalBlock,
    bishop_invariants,
    bishop_lambda,
    complexify_and_build_involutions,
    decompose_spectrum,
    extract_jets,
    normal_form_matrices,
    normal_names,
    prepare_quadric,
    swap_matrix,
)
from germlab.core.errors import (
    Cond1Violated,
    DegenerateSesquilinear,
    RealityViolated,
    UnsupportedConfiguration,
    ZeroBishopInvariant,
)
from germlab.core.series import TruncatedSeries, compose


def _matrix(rows):
    return [[EXACT.make(v) for v in row] for row in rows]


def test_bishop_lambda_hyperbolic():
    info = bishop_lambda("3/5")
    assert info["class"] == HYPERBOLIC
    assert info["gamma"] == Rational(3, 5)
    assert simplify(info["mu"][0] - (7 - 5 * I * sqrt(11)) / 18) == 0
    # |μ| = 1
    assert simplify(info["mu"][0] * info["mu"][0].conjugate() - 1) == 0


def test_bishop_lambda_elliptic():
    info = bishop_lambda("1/4")
    assert info["class"] == ELLIPTIC
    for lam in info["lambda"]:
        assert simplify(Rational(1, 4) * lam ** 2 + lam + Rational(1, 4)) == 0


def test_bishop_lambda_rejects_degenerate_values():
    with pytest.raises(ZeroBishopInvariant):
        bishop_lambda(0)
    with pytest.raises(Cond1Violated):
        bishop_lambda("1/2")
    with pytest.raises(UnsupportedConfiguration):
        bishop_lambda("-1/3")


def test_prepare_quadric_already_normal():
    pq = prepare_quadric(ManifoldData.quadric(["1/4"], truncation=3, backend=EXACT))
    assert pq.gamma == [EXACT.make("1/4")]
    assert pq.steps == []
    assert pq.cond1_determinant is not None


def test_prepare_quadric_float():
    pq = prepare_quadric(ManifoldData.quadric(["3/5"], truncation=4, backend=FloatBackend()))
    assert pq.gamma[0] == pytest.approx(0.6)


def test_prepare_quadric_cond1():
    # γ = 1/2 で連立方程式が特異になる
    with pytest.raises(Cond1Violated):
        prepare_quadric(ManifoldData.quadric(["1/2"], truncation=3, backend=EXACT))


def test_prepare_quadric_degenerate_sesquilinear():
    with pytest.raises(DegenerateSesquilinear):
        prepare_quadric(ManifoldData.quadric(["1/4"], truncation=3, backend=EXACT, D=[[0]]))


def test_reality_is_checked():
    G = TruncatedSeries(3, 4, EXACT, {(1, 1, 0): 1})
    F = TruncatedSeries(3, 4, EXACT, {(0, 0, 2): ("0", "1")})
    with pytest.raises(RealityViolated) as info:
        ManifoldData(1, 3, [F], G)
    assert info.value.details["alpha"] == 0


def test_dimension_is_checked():
    G = TruncatedSeries(2, 4, EXACT, {(1, 1): 1})
    with pytest.raises(UnsupportedConfiguration):
        ManifoldData(1, 1, [], G)


def test_swap_matrix():
    assert swap_matrix(1, 1, EXACT) == _matrix([[0, 1, 0], [1, 0, 0], [0, 0, 1]])


def test_normal_form_matrices_elliptic():
    T1, T2, P, eigen = normal_form_matrices([NormalBlock(ELLIPTIC, "1/4", A=[["2"]])], 0, EXACT)
    assert T1 == _matrix([[0, "1/4"], [4, 0]])
    assert T2 == _matrix([[0, 1], [1, 0]])
    assert P == _matrix([[0, "1/2"], [2, 0]])
    assert eigen == [EXACT.make("1/4")]


def test_normal_names():
    assert normal_names(2, 1) == ["ζ1", "ζ2", "η1", "η2", "υ1"]


def test_from_normal_form(elliptic_pair):
    assert elliptic_pair.phi_linear == _matrix([["1/4", 0], [0, 4]])
    checks = elliptic_pair.verify()
    assert all(checks[key] for key in ("tau1_involution", "tau2_involution", "rho_conjugation", "phi_linear"))
    assert checks["rho_phi_rho"]


def test_complexified_quadric_involutions():
    pq = prepare_quadric(ManifoldData.quadric(["3/5"], truncation=4, backend=FloatBackend()))
    ip = complexify_and_build_involutions(pq)
    assert (ip.p, ip.q, ip.dim) == (1, 0, 2)
    checks = ip.verify(1e-8)
    assert checks["tau1_involution"]
    assert checks["tau2_involution"]
    assert checks["rho_conjugation"]


def test_decompose_spectrum_hyperbolic():
    pq = prepare_quadric(ManifoldData.quadric(["3/5"], truncation=4, backend=FloatBackend()))
    ip = complexify_and_build_involutions(pq)
    decomposition = decompose_spectrum(ip)
    assert [block.kind for block in decomposition.blocks] == [HYPERBOLIC]
    assert abs(complex(decomposition.blocks[0].mu)) == pytest.approx(1.0)
    assert decomposition.oracle_config()[0] == "lattice"
    normal = ip.in_normal_coordinates(decomposition, 1e-7)
    assert normal.names == ["ζ1", "η1"]


def test_decompose_spectrum_elliptic(elliptic_pair):
    decomposition = decompose_spectrum(elliptic_pair)
    assert [block.kind for block in decomposition.blocks] == [ELLIPTIC]


def test_from_normal_form_defaults_to_float():
    ip = InvolutionPair.from_normal_form([NormalBlock(HYPERBOLIC, ("3/5", "4/5"), A=[[1]])])
    assert ip.backend.name == "float"
    assert ip.verify()["tau1_involution"]


def test_extract_jets_of_quadric():
    jets = extract_jets(ManifoldData.quadric(["1/4"], truncation=3, backend=EXACT))
    assert jets.D == _matrix([[1]])
    assert jets.E == _matrix([["1/4"]])
    assert jets.F == _matrix([["1/4"]])
    assert jets.alpha == []


def test_bishop_invariants_are_sorted():
    pq = prepare_quadric(ManifoldData.quadric(["1/4"], truncation=3, backend=EXACT))
    pq = replace(pq, gamma=[EXACT.make("1/3"), EXACT.make("1/4")])
    assert bishop_invariants(pq) == [EXACT.make("1/4"), EXACT.make("1/3")]


def _quadric_pair(gamma, truncation=4, backend=EXACT):
    pq = prepare_quadric(ManifoldData.quadric([gamma], truncation=truncation, backend=backend))
    return complexify_and_build_involutions(pq)


def test_quadric_linear_parts_gamma_quarter():
    ip = _quadric_pair("1/4")
    assert ip.T1 == _matrix([[-1, -4], [0, 1]])
    assert ip.phi_linear[0][0] + ip.phi_linear[1][1] == EXACT.make(14)


def test_quadric_eigenvalue_is_lambda_squared():
    ip = _quadric_pair("1/4", backend=FloatBackend())
    decomposition = decompose_spectrum(ip)
    mu = complex(decomposition.blocks[0].mu)
    lambda_squares = [complex((lam ** 2).evalf()) for lam in bishop_lambda("1/4")["lambda"]]
    assert min(abs(mu - value) for value in lambda_squares) <= 1e-10
    assert [block.kind for block in decomposition.blocks] == [ELLIPTIC]


def test_quadric_cube_root_of_unity():
    ip = _quadric_pair("1", backend=FloatBackend())
    decomposition = decompose_spectrum(ip)
    assert [block.kind for block in decomposition.blocks] == [HYPERBOLIC]
    assert abs(complex(decomposition.blocks[0].mu) ** 3 - 1) <= 1e-10
    # 関係格子は {r : r1 ≡ r2 mod 3} で指数 3
    basis = decomposition.relations
    assert len(basis) == 2
    assert abs(Matrix(basis).det()) == 3


@pytest.mark.parametrize("gamma", ["1/4", "3/5"])
@pytest.mark.parametrize("seed", range(10))
def test_cubic_perturbation_involutions(gamma, seed):
    rng = random.Random(seed)
    base = ManifoldData.quadric([gamma], truncation=6)
    cubic = {
        Q: complex(rng.uniform(-1, 1), rng.uniform(-1, 1)) for Q in [(3, 0), (2, 1), (1, 2), (0, 3)]
    }
    G = base.G + TruncatedSeries(2, 6, base.backend, cubic)
    ip = complexify_and_build_involutions(prepare_quadric(ManifoldData(1, 2, [], G)))
    ident = ip.identity()
    assert compose(ip.tau1, ip.tau1).max_abs_difference(ident) <= 1e-9
    assert compose(ip.tau2, ip.tau2).max_abs_difference(ident) <= 1e-9
    assert ip.verify(1e-9)["rho_phi_rho_residual"] <= 1e-9


def test_decompose_spectrum_declared_lattice_relations():
    ip = _quadric_pair("3/5", backend=FloatBackend())
    decomposition = decompose_spectrum(ip, oracle_mode="lattice", relations=[[3, 0]])
    assert decomposition.oracle_config() == ("lattice", [(3, 0)])


def test_decompose_spectrum_numeric_mode():
    ip = _quadric_pair("3/5", backend=FloatBackend())
    assert decompose_spectrum(ip, oracle_mode="numeric").oracle_config() == ("numeric", None)


def test_decompose_spectrum_rejects_exact_mode_on_float():
    ip = _quadric_pair("3/5", backend=FloatBackend())
    with pytest.raises(UnsupportedConfiguration):
        decompose_spectrum(ip, oracle_mode="exact")


def test_decompose_spectrum_rejects_short_relation(elliptic_pair):
    with pytest.raises(UnsupportedConfiguration):
        decompose_spectrum(elliptic_pair, oracle_mode="lattice", relations=[[1]])
