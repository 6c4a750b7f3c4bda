"""Exact fixed-point time arithmetic.

Every time instant and duration in this package is an integer count of
1/1000 of a time unit (a "quantum").  Integer arithmetic keeps interval
comparisons exact and makes serialized plans reproduce bit-for-bit across
machines, which the distributed mode relies on.  Lengths and speeds stay
as int or Fraction and only become times through `ratio_ms`.
"""

from __future__ import annotations

import re
from fractions import Fraction
from typing import Union

Num = Union[int, Fraction]

QUANTA_PER_UNIT = 1000

_MS_RE = re.compile(r"^(\d+)\.(\d{3})$")


def ratio_ms(numer: Num, denom: Num) -> int:
    """numer/denom time units expressed in quanta, rounded half up."""
    f = Fraction(numer) / Fraction(denom)
    if f < 0:
        raise ValueError("time ratios must be non-negative")
    n = f.numerator * QUANTA_PER_UNIT
    d = f.denominator
    return (2 * n + d) // (2 * d)


def units_ms(value: Num) -> int:
    """A plain time value in units, as quanta."""
    return ratio_ms(value, 1)


def ms_str(ms: int) -> str:
    """Quanta as a decimal string with exactly three fractional digits."""
    if ms < 0:
        raise ValueError("negative times are never serialized")
    return f"{ms // 1000}.{ms % 1000:03d}"


def parse_ms(text: str) -> int:
    """Strict inverse of ms_str. Rejects anything but \\d+.\\d{3}."""
    m = _MS_RE.match(text)
    if not m:
        raise ValueError(f"bad time literal: {text!r}")
    return int(m.group(1)) * 1000 + int(m.group(2))
