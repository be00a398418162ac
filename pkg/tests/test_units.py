import pytest

from collapselab.units import Units, collapse_interval, headline_numbers, seconds_to_years


def test_single_nucleon_interval():
    h = headline_numbers()
    assert h["single_interval_s"] == pytest.approx(1e16, rel=1e-15)
    assert round(h["single_interval_yr"] / 1e8, 2) == 3.17


def test_macroscopic_interval():
    assert headline_numbers()["macro_interval_s"] == pytest.approx(1e-7, rel=1e-15)


def test_interval_validation():
    with pytest.raises(ValueError):
        collapse_interval(0.0)


def test_year_conversion():
    assert seconds_to_years(365.25 * 86400) == pytest.approx(1.0)


def test_units_round_trip():
    u = Units(length_m=1e-7, time_s=1e-3)
    assert u.to_metres(u.length(3e-7)) == pytest.approx(3e-7)
    assert u.to_seconds(u.time(2.0)) == pytest.approx(2.0)
    assert u.rate(1e-16) == pytest.approx(1e-19)
