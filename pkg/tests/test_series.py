import pytest

from germlab.core.coefficients import EXACT, FloatBackend
from germlab.core.errors import BranchMismatch, NonInvertibleLinearPart, OutOfTruncation, SeriesMismatch
from germlab.core.series import (
    GermMap,
    TruncatedSeries,
    change_backend,
    compose,
    conjugate_coefficients,
    extract,
    format_monomial,
    invert_germ,
    monomials,
    project,
    ring_ops,
    solve_implicit,
)


def _series(terms, nvars=2, truncation=4, backend=EXACT):
    return TruncatedSeries(nvars, truncation, backend, terms)


def test_terms_are_canonical_and_clean():
    f = _series({(0, 2): 1, (1, 0): 3, (1, 1): 0, (3, 3): 5})
    assert list(f.terms) == [(1, 0), (0, 2)]
    g = _series({(1, 0): 3, (0, 2): 1})
    assert f == g


def test_monomials_lexicographic():
    assert monomials(2, 2) == [(0, 2), (1, 1), (2, 0)]


def test_format_monomial():
    assert format_monomial((2, 1)) == "x1^2 x2"
    assert format_monomial((0, 0)) == "1"
    assert format_monomial((1, 1), ["ζ1", "η1"], separator="") == "ζ1η1"


def test_coefficient_beyond_truncation():
    f = _series({(1, 0): 1}, truncation=3)
    assert f.coefficient((0, 3)) == EXACT.zero()
    with pytest.raises(OutOfTruncation):
        f.coefficient((2, 2))


def test_mismatched_operands():
    with pytest.raises(SeriesMismatch):
        _series({(1, 0): 1}) + _series({(1, 0): 1}, truncation=3)
    with pytest.raises(SeriesMismatch):
        _series({(1, 0): 1}) + _series({(1, 0): 1}, backend=FloatBackend())
    with pytest.raises(SeriesMismatch):
        _series({(1, 0): 1}) + TruncatedSeries(3, 4, EXACT, {(1, 0, 0): 1})


def test_multiplication_truncates():
    x = TruncatedSeries.variable(0, 1, 3)
    assert (x ** 4).is_zero()
    assert (x * x * x).coefficient((3,)) == EXACT.one()


def test_compose_with_identity():
    f = GermMap.from_terms([{(1, 0): 1, (1, 1): "1/2"}, {(0, 1): 2, (2, 0): -1}], 2, 4)
    ident = GermMap.identity(2, 4)
    assert compose(f, ident) == f
    assert compose(ident, f) == f


def test_compose_substitutes():
    # f(x) = x + x^2, f∘f = x + 2x^2 + 2x^3 + x^4
    f = GermMap.from_terms([{(1,): 1, (2,): 1}], 1, 4)
    ff = compose(f, f)
    assert [ff[0].coefficient((d,)) for d in range(1, 5)] == [EXACT.make(v) for v in (1, 2, 2, 1)]


def test_invert_germ(germ_builder, rng):
    f = germ_builder(rng, 2, 5)
    g = invert_germ(f)
    ident = GermMap.identity(2, 5)
    assert compose(f, g) == ident
    assert compose(g, f) == ident


def test_invert_requires_invertible_linear_part():
    f = GermMap.from_terms([{(1, 0): 1}, {(1, 0): 1}], 2, 3)
    with pytest.raises(NonInvertibleLinearPart):
        invert_germ(f)


def test_apply_matrix_and_linear_part():
    f = GermMap.from_terms([{(1, 0): 1, (0, 2): 1}, {(0, 1): 1}], 2, 3)
    g = f.apply_matrix([[0, 1], [1, 0]])
    assert g.linear_part == [[EXACT.zero(), EXACT.one()], [EXACT.one(), EXACT.zero()]]
    assert g[1].coefficient((0, 2)) == EXACT.one()
    assert f.nonlinear_part()[0].terms == {(0, 2): EXACT.one()}


def test_first_difference_canonical_order():
    f = GermMap.from_terms([{(1, 0): 1}, {(0, 1): 1, (2, 0): 1, (0, 3): 1}], 2, 4)
    g = GermMap.from_terms([{(1, 0): 1}, {(0, 1): 1}], 2, 4)
    j, Q, a, b = f.first_difference(g)
    assert (j, Q) == (1, (2, 0))
    assert g.first_difference(g) is None


def test_solve_implicit_branch():
    # E(x, y) = y - x - x^2 を y について解く
    E = GermMap.from_terms([{(0, 1): 1, (1, 0): -1, (2, 0): -1}], 2, 5)
    y = solve_implicit(E, [1], [[1]])
    assert y[0] == TruncatedSeries(1, 5, EXACT, {(1,): 1, (2,): 1})


def test_solve_implicit_rejects_wrong_branch():
    E = GermMap.from_terms([{(0, 1): 1, (1, 0): -1}], 2, 3)
    with pytest.raises(BranchMismatch):
        solve_implicit(E, [1], [[2]])


def test_change_backend_to_float():
    f = GermMap.from_terms([{(1,): 1, (2,): "1/4"}], 1, 3)
    g = change_backend(f, FloatBackend())
    assert g.backend.name == "float"
    assert g[0].coefficient((2,)) == pytest.approx(0.25)


def test_functional_helpers():
    f = _series({(1, 0): (1, 2), (0, 2): 3})
    g = _series({(1, 0): 1})
    assert ring_ops(f, g, "add").coefficient((1, 0)) == EXACT.make((2, 2))
    assert ring_ops(f, g, "sub").coefficient((1, 0)) == EXACT.make((0, 2))
    assert ring_ops(f, g, "mul").coefficient((2, 0)) == EXACT.make((1, 2))
    assert ring_ops(f, 2, "scale").coefficient((0, 2)) == EXACT.make(6)
    with pytest.raises(SeriesMismatch):
        ring_ops(f, 2, "mul")
    assert extract(conjugate_coefficients(f), (1, 0)) == EXACT.make((1, -2))
    assert list(project(f, lambda Q: sum(Q) == 2).terms) == [(0, 2)]
