"""Fixed-point money values and fixed-rate currency conversion.

Amounts are (units, nanos) pairs: nanos is the fractional part in
billionths, both components carry the same sign (or are zero) and
|nanos| < 1e9. Conversion goes through exact rational arithmetic on the
shipped rates table, so doubling 1.5 gives exactly 3.0.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources

from ..errors import BusinessError

NANOS_PER_UNIT = 10**9


@dataclass(frozen=True)
class Money:
    currency_code: str
    units: int
    nanos: int

    def __post_init__(self):
        if abs(self.nanos) >= NANOS_PER_UNIT:
            raise ValueError(f"nanos out of range: {self.nanos}")
        if self.units * self.nanos < 0:
            raise ValueError(f"sign mismatch: units={self.units} nanos={self.nanos}")

    def to_nanos(self) -> int:
        return self.units * NANOS_PER_UNIT + self.nanos

    def to_doc(self) -> dict:
        return {"currency_code": self.currency_code, "units": self.units, "nanos": self.nanos}

    @classmethod
    def from_doc(cls, doc: dict) -> "Money":
        return cls(doc["currency_code"], int(doc["units"]), int(doc["nanos"]))

    @classmethod
    def from_nanos(cls, currency_code: str, total_nanos: int) -> "Money":
        sign = -1 if total_nanos < 0 else 1
        units, nanos = divmod(abs(total_nanos), NANOS_PER_UNIT)
        return cls(currency_code, sign * units, sign * nanos)

    def __str__(self) -> str:
        return f"{self.units + self.nanos / NANOS_PER_UNIT:.2f} {self.currency_code}"


def add(a: Money, b: Money) -> Money:
    if a.currency_code != b.currency_code:
        raise ValueError(f"currency mismatch: {a.currency_code} vs {b.currency_code}")
    return Money.from_nanos(a.currency_code, a.to_nanos() + b.to_nanos())


def multiply(m: Money, factor: int) -> Money:
    return Money.from_nanos(m.currency_code, m.to_nanos() * factor)


def load_rates() -> dict[str, Fraction]:
    """Conversion rates relative to the base currency, as exact fractions."""
    raw = resources.files("befaas.webshop").joinpath("data/currency_rates.json").read_text()
    return {code: Fraction(rate) for code, rate in json.loads(raw).items()}


_RATES = load_rates()


def supported_codes() -> list[str]:
    return sorted(_RATES)


def convert(amount: Money, to_code: str, rates: dict[str, Fraction] | None = None) -> Money:
    """Convert through the rates table; nanos round half-even."""
    table = rates if rates is not None else _RATES
    if amount.currency_code not in table:
        raise BusinessError(f"unknown currency: {amount.currency_code}")
    if to_code not in table:
        raise BusinessError(f"unknown currency: {to_code}")
    if to_code == amount.currency_code:
        return amount
    scaled = amount.to_nanos() * Fraction(table[to_code]) / Fraction(table[amount.currency_code])
    return Money.from_nanos(to_code, round(scaled))
