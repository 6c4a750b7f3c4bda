import pytest

from seapath.units import ms_str, parse_ms, ratio_ms, units_ms


def test_ratio_basics():
    assert ratio_ms(10, 5) == 2000
    assert ratio_ms(7, 2) == 3500
    assert ratio_ms(0, 9) == 0
    assert units_ms(4) == 4000


def test_ratio_rounds_half_up():
    assert ratio_ms(1, 3) == 333
    assert ratio_ms(5, 3) == 1667
    assert ratio_ms(3, 2) == 1500
    # .25 down, .75 up, exact .5 up
    assert ratio_ms(1, 800) == 1
    assert ratio_ms(3, 800) == 4
    assert ratio_ms(1, 2000) == 1


def test_ratio_rejects_negative():
    with pytest.raises(ValueError):
        ratio_ms(-1, 5)


def test_ms_str_format():
    assert ms_str(0) == "0.000"
    assert ms_str(2000) == "2.000"
    assert ms_str(3500) == "3.500"
    assert ms_str(12003) == "12.003"
    with pytest.raises(ValueError):
        ms_str(-1)


def test_parse_ms_strict():
    assert parse_ms("2.000") == 2000
    assert parse_ms("0.001") == 1
    for bad in ("2", "2.0", "2.0000", "-1.000", "1,000", " 2.000", "2.000 ", "a.bcd"):
        with pytest.raises(ValueError):
            parse_ms(bad)


def test_roundtrip():
    for ms in (0, 1, 999, 1000, 1001, 123456789):
        assert parse_ms(ms_str(ms)) == ms
