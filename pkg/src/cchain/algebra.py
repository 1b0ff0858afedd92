"""Certainty-factor arithmetic on the percent scale.

All evidence strengths are percentages: -100 (certainly false) through 0
(unknown) to +100 (certainly true).  Certainty *effects* -- the share of an
anomaly's total evidence carried by one symptom class -- are fractions in
[0, 1] and convert to the percent scale by a factor of 100.
"""

from __future__ import annotations

from decimal import Decimal
from math import fsum
from typing import Iterable, Sequence


class CertaintyRangeError(ValueError):
    """A certainty value fell outside its allowed interval."""


class UndefinedCombinationError(ValueError):
    """combine_cf was asked for the indeterminate case |x| = |y| = 100 with opposite signs."""


class NoEvidenceError(ValueError):
    """An aggregate was requested over an empty collection of evidence."""


def _check(value: float, low: float, high: float, what: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise CertaintyRangeError(f"{what} must be a number, got {value!r}")
    if not (low <= value <= high):
        raise CertaintyRangeError(f"{what} must lie in [{low}, {high}], got {value!r}")
    return float(value)


def rule_cf(antecedent_cf: float, premise_cf: float) -> float:
    """Strength contributed by one fired rule: antecedent scaled by its premise.

    Both inputs are percentages in [0, 100]; the result is their product
    rescaled back to the percent range.
    """
    a = _check(antecedent_cf, 0.0, 100.0, "antecedent CF")
    p = _check(premise_cf, 0.0, 100.0, "premise CF")
    return a * p / 100.0


def conjoin_premises(values: Sequence[float]) -> float:
    """Conjunction of premise strengths: the weakest link (minimum)."""
    if not values:
        raise NoEvidenceError("conjunction of zero premises is undefined")
    return min(_check(v, 0.0, 100.0, "premise CF") for v in values)


def combine_cf(x: float, y: float) -> float:
    """Merge two independent strengths for the same conclusion.

    Same-sign values reinforce each other without leaving the scale;
    opposite-sign values partially cancel, normalised by the smaller
    magnitude.  The result always stays within [-100, 100] and combining
    with 0 changes nothing.
    """
    x = _check(x, -100.0, 100.0, "certainty value")
    y = _check(y, -100.0, 100.0, "certainty value")
    if x >= 0 and y >= 0:
        # evaluate with the operands in value order so the operation is
        # commutative in floating point, not merely algebraically; the clamp
        # keeps rounding from nudging near-certain pairs past the scale top
        lo, hi = (x, y) if x <= y else (y, x)
        return min(100.0, hi + lo * (100.0 - hi) / 100.0)
    if x <= 0 and y <= 0:
        return -combine_cf(-x, -y)
    # Opposite signs: normalise the sum by the smaller magnitude.
    smaller = min(abs(x), abs(y))
    if smaller == 100.0:
        raise UndefinedCombinationError(
            "combining +100 with -100 has no defined result"
        )
    return (x + y) / (1.0 - smaller / 100.0)


def combine_many(values: Iterable[float]) -> float:
    """Left fold of combine_cf over one or more values."""
    it = iter(values)
    try:
        acc = _check(next(it), -100.0, 100.0, "certainty value")
    except StopIteration:
        raise NoEvidenceError("combine_many needs at least one value") from None
    for v in it:
        acc = combine_cf(acc, v)
    return acc


def certainty_degree(fired_rule_cfs: Sequence[float]) -> float:
    """Overall degree for a goal: the mean of its fired-rule CFs, as a fraction.

    Raises NoEvidenceError when no rule has fired; callers decide how to
    present that case.
    """
    if not fired_rule_cfs:
        raise NoEvidenceError("no fired rules: certainty degree is undefined")
    cfs = [_check(v, 0.0, 100.0, "fired rule CF") for v in fired_rule_cfs]
    return fsum(cfs) / len(cfs) / 100.0


def mean_percent(fired_rule_cfs: Sequence[float]) -> float:
    """The same mean as certainty_degree but kept on the percent scale."""
    if not fired_rule_cfs:
        raise NoEvidenceError("no fired rules: certainty degree is undefined")
    cfs = [_check(v, 0.0, 100.0, "fired rule CF") for v in fired_rule_cfs]
    return fsum(cfs) / len(cfs)


def display_percent(percent: float) -> int:
    """Round a percent value to the nearest whole number, halves up."""
    return int(Decimal(str(percent)).quantize(Decimal("1"), rounding="ROUND_HALF_UP"))


def effect_to_percent(effect: float) -> float:
    """Convert an effect fraction to the percent scale (exact decimal shift)."""
    e = _check(effect, 0.0, 1.0, "certainty effect")
    return float(Decimal(str(e)) * 100)


def percent_to_effect(percent: float) -> float:
    """Inverse of effect_to_percent (exact decimal shift)."""
    p = _check(percent, 0.0, 100.0, "percent value")
    return float(Decimal(str(p)) / 100)
