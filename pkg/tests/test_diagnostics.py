import random

import pytest

from germlab.core.coefficients import EXACT
from germlab.core.diagnostics import majorant_diagnostics
from germlab.core.errors import DiagnosticsBudgetExceeded, UnsupportedConfiguration
from germlab.core.linearize import CommutingFamily, linearize_on_ideal
from germlab.core.resonance import MonomialIdeal
from germlab.core.series import GermMap


def _family(truncation=6):
    F = GermMap.from_terms([{(1, 0): 2, (2, 1): 1, (2, 0): "1/3"}, {(0, 1): "1/2", (0, 2): 1}], 2, truncation)
    return CommutingFamily([F])


def test_diagnostics_report_shape():
    fam = _family()
    ideal = MonomialIdeal(2, [(1, 1)])
    result = linearize_on_ideal(fam, ideal)
    diag = majorant_diagnostics(fam, ideal, result, max_degree=8, max_omega_k=2)
    assert diag.degree == 6
    assert diag.a > 0
    assert diag.b >= 1
    assert 0 < diag.theta <= 0.25
    assert set(diag.omega) == {1, 2}
    assert diag.omega[1] == pytest.approx(0.25)
    # イデアルの外の単項式だけが対象
    assert (1, 1) not in diag.delta
    assert (0, 2) in diag.delta
    assert all(Q not in ideal for _, Q in diag.phi_counts)


def test_diagnostics_delta_is_smallest_divisor():
    fam = _family()
    ideal = MonomialIdeal(2, [(1, 1)])
    diag = majorant_diagnostics(fam, ideal, linearize_on_ideal(fam, ideal), max_omega_k=2)
    # x2^2: |1/4 - 2| と |1/4 - 1/2| の小さい方
    assert diag.delta[(0, 2)] == pytest.approx(0.25)
    assert diag.delta[(2, 0)] == pytest.approx(2.0)


def test_diagnostics_degree_cap():
    fam = _family()
    ideal = MonomialIdeal(2, [(1, 1)])
    result = linearize_on_ideal(fam, ideal)
    with pytest.raises(DiagnosticsBudgetExceeded):
        majorant_diagnostics(fam, ideal, result, degree=10, max_degree=8)


def test_diagnostics_need_a_linearization():
    fam = _family(4)
    result = linearize_on_ideal(fam, MonomialIdeal.zero(2), raise_on_obstruction=False)
    with pytest.raises(UnsupportedConfiguration):
        majorant_diagnostics(fam, MonomialIdeal.zero(2), result)


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(3))
def test_planted_family_has_no_violations(seed, germ_builder, planted):
    psi0 = germ_builder(random.Random(1000 + seed), 3, 8, max_degree=4, density=0.3)
    fam = CommutingFamily([planted(psi0, [EXACT.make(v) for v in ("2", "3", "1/5")])])
    zero = MonomialIdeal.zero(3)
    diag = majorant_diagnostics(fam, zero, linearize_on_ideal(fam, zero), degree=8)
    assert diag.degree == 8
    assert diag.violations == []
    assert diag.passed
