import random

import pytest

from germlab.core.coefficients import EXACT
from germlab.core.errors import (
    FormalObstruction,
    HypothesisViolated,
    NonDiagonalLinearParts,
    NotAbelian,
    SeriesMismatch,
)
from germlab.core.linearize import (
    CommutingFamily,
    apply_antilinear,
    check_commutativity,
    check_rho_equivariance,
    linearize_on_ideal,
    linearize_on_res_ideal,
    unit_circle_formal_hint,
    verify_conjugacy,
)
from germlab.core.resonance import MonomialIdeal, OracleMode
from germlab.core.series import GermMap

NONRESONANT = ("2", "3", "1/5")


def _planted_family():
    # F = (2 x1 + x1^2 x2, x2 / 2): x1^2 x2 e1 は共鳴
    F = GermMap.from_terms([{(1, 0): 2, (2, 1): 1}, {(0, 1): "1/2"}], 2, 4)
    return CommutingFamily([F])


def test_family_defaults():
    fam = _planted_family()
    assert fam.oracle.mode is OracleMode.EXACT
    assert (fam.l, fam.n, fam.truncation) == (1, 2, 4)
    assert fam.family.mu == ((EXACT.make(2), EXACT.make("1/2")),)


def test_family_rejects_non_diagonal():
    F = GermMap.from_matrix([[1, 1], [0, 1]], 3)
    with pytest.raises(NonDiagonalLinearParts):
        CommutingFamily([F])


def test_family_rejects_non_commuting_maps():
    F1 = GermMap.from_terms([{(1, 0): 2, (0, 2): 1}, {(0, 1): 3}], 2, 3)
    F2 = GermMap.from_terms([{(1, 0): 5}, {(0, 1): 7}], 2, 3)
    with pytest.raises(NotAbelian) as info:
        CommutingFamily([F1, F2])
    assert info.value.details["Q"] == [0, 2]


def test_obstruction_on_zero_ideal():
    fam = _planted_family()
    result = linearize_on_ideal(fam, MonomialIdeal.zero(2), raise_on_obstruction=False)
    assert result.status == "obstructed"
    e = result.obstruction
    assert (e.Q, e.j, e.i) == ((2, 1), 0, 0)
    assert e.value == EXACT.one()
    assert result.completed_degree == 2


def test_obstruction_raises():
    with pytest.raises(FormalObstruction) as info:
        linearize_on_ideal(_planted_family(), MonomialIdeal.zero(2))
    assert info.value.details["Q"] == [2, 1]
    assert info.value.details["value"] == "1"


def test_ideal_absorbs_resonant_term():
    fam = _planted_family()
    ideal = MonomialIdeal(2, [(1, 1)])
    result = linearize_on_ideal(fam, ideal)
    assert result.status == "linearized"
    assert result.phi == GermMap.identity(2, 4)
    assert result.residuals[0][0].coefficient((2, 1)) == EXACT.one()
    assert verify_conjugacy(fam, result, ideal).passed
    assert {entry.rule for entry in result.trace} >= {"ideal", "divide"}


def test_ideal_arity_is_checked():
    with pytest.raises(SeriesMismatch):
        linearize_on_ideal(_planted_family(), MonomialIdeal.zero(3))


def test_linearize_on_res_ideal():
    ideal, result = linearize_on_res_ideal(_planted_family())
    assert ideal == MonomialIdeal(2, [(1, 1)])
    assert result.status == "linearized"


def test_res_ideal_hypothesis_violation():
    # μ = (2, 4): x1^2 e2 は中心化単項式だが不変単項式はない
    F = GermMap.from_matrix([[2, 0], [0, 4]], 3)
    with pytest.raises(HypothesisViolated) as info:
        linearize_on_res_ideal(CommutingFamily([F]))
    assert info.value.details == {"Q": [2, 0], "j": 1}


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_round_trip_recovers_planted_conjugacy(seed, germ_builder, planted):
    psi0 = germ_builder(random.Random(seed), 3, 5)
    F = planted(psi0, [EXACT.make(v) for v in NONRESONANT])
    fam = CommutingFamily([F])
    result = linearize_on_ideal(fam, MonomialIdeal.zero(3))
    assert result.phi == psi0
    assert all(comp.is_zero() for g in result.residuals for comp in g)
    assert verify_conjugacy(fam, result, MonomialIdeal.zero(3)).passed


def test_threads_do_not_change_result(germ_builder, planted):
    psi0 = germ_builder(random.Random(7), 3, 5)
    F = planted(psi0, [EXACT.make(v) for v in NONRESONANT])
    fam = CommutingFamily([F])
    single = linearize_on_ideal(fam, MonomialIdeal.zero(3), threads=1)
    parallel = linearize_on_ideal(fam, MonomialIdeal.zero(3), threads=4)
    assert single.phi == parallel.phi
    assert [(e.Q, e.j, e.rule) for e in single.trace] == [(e.Q, e.j, e.rule) for e in parallel.trace]


def test_progress_callback_reaches_one():
    seen = []
    linearize_on_ideal(_planted_family(), MonomialIdeal(2, [(1, 1)]), progress_callback=seen.append)
    assert seen[-1] == pytest.approx(1.0)
    assert seen == sorted(seen)


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(50))
def test_round_trip_full_size(seed, germ_builder, planted):
    psi0 = germ_builder(random.Random(1000 + seed), 3, 8, max_degree=4, density=0.3)
    F = planted(psi0, [EXACT.make(v) for v in NONRESONANT])
    result = linearize_on_ideal(CommutingFamily([F]), MonomialIdeal.zero(3))
    assert result.phi == psi0


def test_apply_antilinear():
    P = [[0, 1], [1, 0]]
    germ = GermMap.from_terms([{(1, 0): 1, (0, 2): ("0", "1")}, {(0, 1): 1}], 2, 3)
    moved = apply_antilinear(P, germ)
    expected = GermMap.from_terms([{(1, 0): 1}, {(0, 1): 1, (2, 0): ("0", "-1")}], 2, 3)
    assert moved == expected


def test_rho_equivariance_finds_inverse_word():
    F = GermMap.from_matrix([[2, 0], [0, "1/2"]], 4)
    fam = CommutingFamily([F])
    ideal = MonomialIdeal(2, [(1, 1)])
    result = linearize_on_ideal(fam, ideal)
    report = check_rho_equivariance(fam, result, [[0, 1], [1, 0]], ideal)
    assert report.passed
    assert report.checks["words"] == [[(0, -1)]]
    assert report.checks["centralizer"] is True
    assert report.checks["ideal"] is True


def test_rho_equivariance_rejects_wrong_word():
    F = GermMap.from_matrix([[2, 0], [0, "1/2"]], 3)
    fam = CommutingFamily([F])
    result = linearize_on_ideal(fam, MonomialIdeal(2, [(1, 1)]))
    with pytest.raises(HypothesisViolated):
        check_rho_equivariance(fam, result, [[0, 1], [1, 0]], None, words=[[(0, 1)]])


def test_unit_circle_hint():
    lam = ("3/5", "4/5")
    fam = CommutingFamily([GermMap.from_matrix([[lam]], 4)])
    hint = unit_circle_formal_hint(fam)
    assert hint["applies"]
    assert hint["unit_circle_maps_per_coordinate"] == [[0]]
    assert hint["nonresonant_up_to"] == 4
    assert not unit_circle_formal_hint(_planted_family())["applies"]


def test_check_commutativity_reports_first_difference():
    F1 = GermMap.from_terms([{(1, 0): 2, (0, 2): 1}, {(0, 1): 3}], 2, 3)
    F2 = GermMap.from_terms([{(1, 0): 5}, {(0, 1): 7}], 2, 3)
    assert check_commutativity([F1, F1]).abelian
    report = check_commutativity([F1, F2])
    assert not report.abelian
    assert (report.violation["i"], report.violation["j"]) == (0, 1)
    assert report.violation["Q"] == [0, 2]
