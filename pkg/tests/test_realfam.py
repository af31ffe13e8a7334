import cmath
import math

import pytest

from germlab.core.coefficients import EXACT, FloatBackend
from germlab.core.errors import HypothesisViolated, NotInvolution, UnsupportedConfiguration
from germlab.core.realfam import (
    AntiInvolution,
    RealFamily,
    build_reflection_group,
    check_nonresonance,
    conjugate_involution,
    group_consistency,
    intersection_report,
    normalization_report,
    straighten,
)
from germlab.core.resonance import MonomialIdeal
from germlab.core.series import GermMap, invert_germ

LAMBDA = ("3/5", "4/5")


def _linear_pair(truncation=5):
    return [
        AntiInvolution.linear([[1]], truncation, EXACT, index=0),
        AntiInvolution.linear([[LAMBDA]], truncation, EXACT, index=1),
    ]


def _curved_pair(truncation=5):
    # φ(z) = z + (1/2 + i/3) z^2 で ρ1(z) = z̄, ρ2(z) = λ z̄ を曲げる
    phi = GermMap.from_terms([{(1,): 1, (2,): ("1/2", "1/3")}], 1, truncation)
    phi_inverse = invert_germ(phi)
    return [conjugate_involution(rho, phi, phi_inverse) for rho in _linear_pair(truncation)]


def test_linear_involution_checks():
    rho = AntiInvolution.linear([[LAMBDA]], 4, EXACT)
    assert rho.is_antilinear()
    assert rho.fixed_real_dimension() == 1
    with pytest.raises(NotInvolution):
        AntiInvolution.linear([[2]], 4, EXACT)


def test_conjugated_involution_is_still_an_involution():
    for rho in _curved_pair():
        rho.check()
        assert not rho.is_antilinear()


def test_family_rejects_tangent_manifolds():
    rho = AntiInvolution.linear([[1]], 3, EXACT)
    with pytest.raises(UnsupportedConfiguration):
        RealFamily([rho, AntiInvolution.linear([[1]], 3, EXACT)])


def test_nonresonance():
    fam = RealFamily(_curved_pair())
    report = check_nonresonance(fam, MonomialIdeal.zero(1))
    assert report.nonresonant
    assert report.checked > 0
    single = check_nonresonance(RealFamily(_curved_pair()[:1]), MonomialIdeal.zero(1))
    assert not single.nonresonant


def test_straighten_recovers_antilinear_involutions():
    fam = RealFamily(_curved_pair())
    result = straighten(fam, MonomialIdeal.zero(1))
    assert result.linearization.status == "linearized"
    assert result.report == {"involution": [True, True], "anti_linear": [True, True]}
    assert all(rho.is_antilinear() for rho in result.rho_normalized)
    assert result.rho_normalized[1].B == [[EXACT.make(LAMBDA)]]
    # Φ は曲げに使った φ そのもの
    assert result.phi[0].coefficient((2,)) == EXACT.make(("1/2", "1/3"))


def test_straighten_rejects_resonant_family():
    # λ = -1 は λ^2 = 1 で共鳴する
    fam = RealFamily(
        [AntiInvolution.linear([[1]], 4, EXACT), AntiInvolution.linear([[-1]], 4, EXACT)]
    )
    with pytest.raises(HypothesisViolated):
        straighten(fam, MonomialIdeal.zero(1))


def test_group_consistency():
    assert group_consistency(RealFamily(_curved_pair()))


def test_normalization_report():
    curved = normalization_report(RealFamily(_curved_pair()))
    assert not curved["normalizable"]
    assert curved["support_checked"]
    straight = normalization_report(RealFamily(_linear_pair()))
    assert straight["normalizable"]
    assert straight["support_violations"] == []


def test_intersection_report():
    report = intersection_report(RealFamily(_linear_pair()), MonomialIdeal.zero(1))
    assert report["variety"] == "C^n"
    assert report["ideal"] == "(0)"
    assert report["components"][0]["free"] == ["z1"]


def test_build_reflection_group():
    group = build_reflection_group(RealFamily(_curved_pair()))
    assert (group.l, group.n) == (1, 1)
    single = build_reflection_group(RealFamily(_curved_pair()[:1]))
    assert single.maps[0] == GermMap.identity(1, 5, EXACT)


def _line_pair(theta, truncation=8, bend=False):
    # 実軸と角度 θ の直線 (ρ(z) = e^{2iθ} z̄)
    backend = FloatBackend()
    pair = [
        AntiInvolution.linear([[1]], truncation, backend, index=0),
        AntiInvolution.linear([[cmath.exp(2j * theta)]], truncation, backend, index=1),
    ]
    if not bend:
        return pair
    phi = GermMap.from_terms([{(1,): 1, (2,): complex(1 / 2, 1 / 3)}], 1, truncation, backend)
    phi_inverse = invert_germ(phi)
    return [conjugate_involution(rho, phi, phi_inverse) for rho in pair]


@pytest.mark.parametrize("mode, relations", [("lattice", [[3]]), ("numeric", None)])
def test_lines_at_sixty_degrees_resonate_at_degree_four(mode, relations):
    fam = RealFamily(_line_pair(math.pi / 3))
    report = check_nonresonance(fam, MonomialIdeal.zero(1), oracle_mode=mode, relations=relations)
    assert not report.nonresonant
    assert report.witness == (0, 0, (4,))


def test_irrational_angle_straightens_with_empty_lattice():
    fam = RealFamily(_line_pair(math.sqrt(2), bend=True))
    zero = MonomialIdeal.zero(1)
    assert check_nonresonance(fam, zero, oracle_mode="lattice", relations=[]).nonresonant
    result = straighten(fam, zero, oracle_mode="lattice", relations=[])
    assert result.report == {"involution": [True, True], "anti_linear": [True, True]}
    assert abs(complex(result.rho_normalized[1].B[0][0]) - cmath.exp(2j * math.sqrt(2))) <= 1e-9
