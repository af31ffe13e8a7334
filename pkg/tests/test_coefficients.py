import pytest

from germlab.core.coefficients import EXACT, FloatBackend, get_backend
from germlab.core.errors import SeriesMismatch


def test_exact_accepts_rational_strings_and_pairs():
    assert EXACT.make("3/4") == EXACT.make(("3/4", "0"))
    assert EXACT.make(2) == EXACT.make("2")
    assert EXACT.make(("1", "-1")) == EXACT.make("1-i")


def test_exact_rejects_floats():
    with pytest.raises(SeriesMismatch):
        EXACT.make(0.5)
    with pytest.raises(SeriesMismatch):
        EXACT.make("0.5.1")


def test_exact_format():
    assert EXACT.format(EXACT.make("-5/3")) == "-5/3"
    assert EXACT.format(EXACT.make(("0", "2"))) == "2i"
    assert EXACT.format(EXACT.make(("1/2", "-3"))) == "(1/2-3i)"
    assert EXACT.format(EXACT.make(("1/2", "3"))) == "(1/2+3i)"


def test_exact_json_keeps_rationals():
    c = EXACT.make(("7/18", "-5/6"))
    assert EXACT.to_json(c) == ("7/18", "-5/6")
    assert EXACT.make(EXACT.to_json(c)) == c


def test_exact_arithmetic():
    two = EXACT.make(2)
    assert EXACT.power(two, -2) == EXACT.make("1/4")
    assert EXACT.inv(EXACT.make(("0", "1"))) == EXACT.make(("0", "-1"))
    assert EXACT.conj(EXACT.make(("1", "1"))) == EXACT.make(("1", "-1"))
    assert EXACT.modulus_squared(EXACT.make(("3", "4"))) == 25
    assert EXACT.modulus(EXACT.make(("3", "4"))) == pytest.approx(5.0)
    with pytest.raises(ZeroDivisionError):
        EXACT.inv(EXACT.zero())


def test_float_backend_threshold():
    b = FloatBackend(1e-10)
    assert b.make("1/4") == 0.25 + 0j
    assert b.make((1, -2)) == 1 - 2j
    assert b.is_zero(1e-11)
    assert not b.is_zero(1e-9)
    assert b.close(1.0, 1.0 + 1e-11)


def test_float_real_part():
    b = FloatBackend()
    assert b.real(3 + 4j) == 3 + 0j
    assert b.is_real(2 + 1e-14j)


def test_get_backend():
    assert get_backend("exact") is EXACT
    b = get_backend("float", 1e-8)
    assert isinstance(b, FloatBackend)
    assert b.zero_threshold == 1e-8
    with pytest.raises(SeriesMismatch):
        get_backend("interval")
