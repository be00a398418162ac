"""
Conversion between SI magnitudes and the dimensionless internal units.

Internally hbar = 1 and lengths/times are measured in a user-chosen scale.
The reference GRW magnitudes (localization width 1e-5 cm, per-nucleon rate
1e-16 / s) are kept here in SI so that their consequences can be checked as
plain arithmetic.
"""
from __future__ import annotations

from dataclasses import dataclass

SIGMA_GRW_M = 1e-7          # 1e-5 cm
LAMBDA_GRW_PER_S = 1e-16    # per nucleon
SECONDS_PER_YEAR = 365.25 * 86400.0   # Julian year
AVOGADRO_SCALE = 1e23


@dataclass(frozen=True)
class Units:
    """A length scale (metres) and time scale (seconds) defining internal units."""

    length_m: float = 1.0
    time_s: float = 1.0

    def __post_init__(self):
        if not (self.length_m > 0 and self.time_s > 0):
            raise ValueError("unit scales must be positive")

    def length(self, metres: float) -> float:
        return metres / self.length_m

    def rate(self, per_second: float) -> float:
        return per_second * self.time_s

    def time(self, seconds: float) -> float:
        return seconds / self.time_s

    def to_seconds(self, t_internal: float) -> float:
        return t_internal * self.time_s

    def to_metres(self, x_internal: float) -> float:
        return x_internal * self.length_m


def collapse_interval(rate_per_constituent: float = LAMBDA_GRW_PER_S,
                      n_constituents: float = 1) -> float:
    """Mean waiting time between localizations for ``n`` independent constituents."""
    if rate_per_constituent <= 0 or n_constituents <= 0:
        raise ValueError("rate and constituent count must be positive")
    return 1.0 / (rate_per_constituent * n_constituents)


def seconds_to_years(seconds: float) -> float:
    return seconds / SECONDS_PER_YEAR


def headline_numbers(rate: float = LAMBDA_GRW_PER_S, n_macro: float = AVOGADRO_SCALE) -> dict:
    """Single-nucleon and macroscopic mean collapse intervals."""
    single = collapse_interval(rate, 1)
    return {
        "lambda_per_s": rate,
        "single_interval_s": single,
        "single_interval_yr": seconds_to_years(single),
        "n_macro": n_macro,
        "macro_interval_s": collapse_interval(rate, n_macro),
    }
