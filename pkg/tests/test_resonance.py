import math

import pytest

from germlab.core.coefficients import EXACT, FloatBackend
from germlab.core.errors import BudgetExceeded, NonInvertibleLinearPart, UnsupportedConfiguration, VacuousInf
from germlab.core.resonance import (
    DiagonalFamily,
    MonomialIdeal,
    OracleMode,
    ResonanceOracle,
    centralizer_condition,
    centralizer_monomials,
    detect_relations,
    invariant_monomials,
    omega_sequence,
    properly_embedded,
    res_ideal,
)


def _oracle(mu=(("2", "1/2"),), backend=EXACT, mode="exact", **kwargs):
    return ResonanceOracle(DiagonalFamily(mu, backend), mode, **kwargs)


def test_family_rejects_zero_eigenvalue():
    with pytest.raises(NonInvertibleLinearPart):
        DiagonalFamily([["1", "0"]], EXACT)


def test_exact_oracle_needs_exact_backend():
    with pytest.raises(UnsupportedConfiguration):
        _oracle(backend=FloatBackend())


def test_is_resonant():
    oracle = _oracle()
    assert oracle.is_resonant((2, 1), 0).resonant
    assert oracle.is_resonant((1, 2), 1).resonant
    answer = oracle.is_resonant((1, 1), 0)
    assert not answer.resonant
    assert answer.i0 == 0
    assert answer.divisors == [EXACT.make(-1)]
    assert oracle.is_invariant((3, 3))
    assert not oracle.is_invariant((1, 0))


def test_divisor_tie_break_picks_smallest_index():
    oracle = _oracle(mu=(("2", "3"), ("1/2", "1/3")))
    # δ = (2-3, 1/2-1/3) なら |δ| 最大は 0 番目
    assert oracle.is_resonant((1, 0), 1).i0 == 0
    oracle = _oracle(mu=(("2", "3"), ("2", "3")))
    assert oracle.is_resonant((0, 2), 0).i0 == 0


def test_lattice_oracle():
    oracle = _oracle(mu=(("2", "1/2"),), mode="lattice", relations=[(1, 1)])
    assert oracle.mode is OracleMode.LATTICE
    assert oracle.is_resonant((2, 1), 0).resonant
    assert not oracle.is_resonant((2, 0), 0).resonant
    assert oracle.is_invariant((2, 2))


def test_lattice_relations_must_be_independent():
    with pytest.raises(UnsupportedConfiguration):
        _oracle(mode="lattice", relations=[(1, 1), (2, 2)])


def test_numeric_oracle_warns_near_epsilon(floating):
    fam = DiagonalFamily([[2.0, 0.5 + 2e-9]], floating)
    oracle = ResonanceOracle(fam, "numeric", epsilon=1e-8)
    answer = oracle.is_resonant((2, 1), 0)
    assert answer.resonant
    assert answer.warning is not None
    assert answer.warning.epsilon == 1e-8


def test_monomial_ideal_minimal_generators():
    ideal = MonomialIdeal(2, [(2, 2), (1, 1), (3, 0)])
    assert ideal.generators == ((1, 1), (3, 0))
    assert (2, 1) in ideal
    assert (0, 5) not in ideal
    assert ideal.format() == "(x1 x2, x1^3)"
    assert MonomialIdeal.zero(2).format() == "(0)"


def test_ideal_components():
    assert MonomialIdeal(2, [(1, 1)]).components() == [(0,), (1,)]
    assert MonomialIdeal.zero(3).components() == [()]
    assert MonomialIdeal(3, [(1, 1, 0), (0, 0, 1)]).components() == [(0, 2), (1, 2)]


def test_ideal_permuted():
    ideal = MonomialIdeal(2, [(2, 1)])
    assert ideal.permuted([1, 0]) == MonomialIdeal(2, [(1, 2)])


def test_properly_embedded():
    assert properly_embedded(MonomialIdeal(3, [(1, 1, 0)])).free_variables == (2,)
    assert not properly_embedded(MonomialIdeal(2, [(1, 1)])).properly_embedded


def test_invariant_monomials_and_res_ideal():
    oracle = _oracle()
    inv = invariant_monomials(oracle, 4)
    assert inv.invariants == [(1, 1), (2, 2)]
    assert inv.generators == [(1, 1)]
    result = res_ideal(oracle, 4)
    assert result.ideal == MonomialIdeal(2, [(1, 1)])
    assert result.complete


def test_res_ideal_incomplete_when_generator_is_high():
    # μ = (2, 1/8): 不変単項式の最小生成元は x1^3 x2 (次数 4)
    result = res_ideal(_oracle(mu=(("2", "1/8"),)), 6)
    assert result.generators == [(3, 1)]
    assert not result.complete


def test_centralizer_monomials():
    centralizer = centralizer_monomials(_oracle(), 3)
    assert sorted(centralizer) == [((1, 2), 1), ((2, 1), 0)]


def test_centralizer_condition():
    oracle = _oracle()
    assert centralizer_condition(oracle, MonomialIdeal(2, [(1, 1)]), 5).holds
    check = centralizer_condition(oracle, MonomialIdeal.zero(2), 5)
    assert not check.holds
    assert check.witness == ((1, 2), 1)


def test_omega_sequence_constant_divisor():
    seq = omega_sequence(_oracle(), None, 4, 16)
    assert [e.value for e in seq.entries] == pytest.approx([0.25] * 4)
    assert seq.entries[0].witness == ((0, 2), 1, 0)
    expected = [math.log(4) * s for s in (1 / 2, 3 / 4, 7 / 8, 15 / 16)]
    assert seq.partial_sums == pytest.approx(expected)
    assert seq.verdict == "converging-trend"
    assert seq.largest_k == 4


def test_omega_sequence_with_ideal():
    seq = omega_sequence(_oracle(), MonomialIdeal(2, [(1, 1)]), 2, 16)
    assert [e.value for e in seq.entries] == pytest.approx([0.25, 0.25])


def test_omega_sequence_budget():
    with pytest.raises(BudgetExceeded) as info:
        omega_sequence(_oracle(), None, 5, 16)
    assert info.value.largest_completed_k == 4


def test_omega_sequence_vacuous():
    # 全ての単項式がイデアルに入る
    with pytest.raises(VacuousInf):
        omega_sequence(_oracle(), MonomialIdeal.maximal_power(2, 2), 2, 16)


def test_detect_relations_exact():
    relations = detect_relations([EXACT.make(2), EXACT.make("1/2")], 4, EXACT)
    assert relations == [(1, 1)]
    assert detect_relations([EXACT.make(2), EXACT.make(3)], 4, EXACT) == []


def test_detect_relations_float():
    relations = detect_relations([2.0 + 0j, 0.25 + 0j], 4)
    assert relations == [(2, 1)]
