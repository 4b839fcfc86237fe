"""Intercoder-reliability statistics for binary per-code comparisons.

Each code is scored independently from a 2x2 confusion table between the
machine and the gold standard. Cohen's kappa corrects observed agreement by
the chance agreement implied by both raters' marginals; Gwet's AC1 corrects
by 2*pi*(1-pi) over the mean prevalence instead, which inflates relative to
kappa when raters agree mostly on negatives - keeping both visible makes
that bias easy to demonstrate. Degenerate tables (chance agreement of 1)
yield an explicit Undefined (None) rather than a fabricated number; percent
agreement is always reported alongside.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Mapping

__all__ = [
    "Confusion2x2",
    "AgreementStats",
    "AgreementBand",
    "KappaAggregate",
    "LabelMismatchError",
    "confusion_2x2",
    "cohen_kappa",
    "gwet_ac1",
    "percent_agreement",
    "agreement_stats",
    "interpret_agreement",
    "aggregate_mean_kappa",
]

EXCELLENT_THRESHOLD = 0.75
SUBSTANTIAL_THRESHOLD = 0.6


class LabelMismatchError(ValueError):
    """The two label vectors do not cover the same passage ids."""


class AgreementBand(str, enum.Enum):
    EXCELLENT = "excellent"
    SUBSTANTIAL = "substantial"
    LOW = "low"


@dataclass(frozen=True)
class Confusion2x2:
    """Counts: a both-applied, b machine-only, c gold-only, d both-not."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self) -> None:
        if min(self.a, self.b, self.c, self.d) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def n(self) -> int:
        return self.a + self.b + self.c + self.d


@dataclass(frozen=True)
class AgreementStats:
    p_o: float
    p_e: float
    kappa: float | None
    percent_agreement: float
    ac1: float | None
    prevalence: float


@dataclass(frozen=True)
class KappaAggregate:
    mean: float | None
    excluded: int


def confusion_2x2(
    machine: Mapping[str, bool], gold: Mapping[str, bool]
) -> Confusion2x2:
    """Tabulate two per-passage boolean labelings over the same id set."""
    if set(machine) != set(gold):
        diff = sorted(set(machine) ^ set(gold))
        raise LabelMismatchError(f"label vectors disagree on passage ids: {diff}")
    a = b = c = d = 0
    for pid, m in machine.items():
        g = gold[pid]
        if m and g:
            a += 1
        elif m and not g:
            b += 1
        elif g and not m:
            c += 1
        else:
            d += 1
    return Confusion2x2(a, b, c, d)


def _require_n(t: Confusion2x2) -> None:
    if t.n < 1:
        raise ValueError("statistics require at least one item")


def percent_agreement(t: Confusion2x2) -> float:
    _require_n(t)
    return (t.a + t.d) / t.n


def cohen_kappa(t: Confusion2x2) -> float | None:
    """kappa = (p_o - p_e) / (1 - p_e) with p_e from both raters' marginals.

    Computed as a single division of exact integer numerator/denominator,
    so the float result is the correctly rounded value of the exact ratio.
    Returns None (Undefined) when p_e = 1.
    """
    _require_n(t)
    a, b, c, d, n = t.a, t.b, t.c, t.d, t.n
    pe_num = (a + b) * (a + c) + (c + d) * (b + d)  # p_e = pe_num / n^2
    denom = n * n - pe_num
    if denom == 0:
        return None
    return (n * (a + d) - pe_num) / denom


def gwet_ac1(t: Confusion2x2) -> float | None:
    """AC1 = (p_o - p_e') / (1 - p_e') with p_e' = 2*pi*(1-pi).

    pi is the mean of the two raters' positive rates. Same exact-integer
    treatment as cohen_kappa; None when p_e' = 1 (unreachable for n >= 1,
    kept for symmetry).
    """
    _require_n(t)
    a, b, c, d, n = t.a, t.b, t.c, t.d, t.n
    m = 2 * a + b + c  # pi = m / 2n, so p_e' = m*(2n - m) / (2n^2)
    pe_num = m * (2 * n - m)
    denom = 2 * n * n - pe_num
    if denom == 0:
        return None
    return (2 * n * (a + d) - pe_num) / denom


def prevalence(t: Confusion2x2) -> float:
    _require_n(t)
    return (2 * t.a + t.b + t.c) / (2 * t.n)


def agreement_stats(t: Confusion2x2) -> AgreementStats:
    po = percent_agreement(t)
    a, b, c, d, n = t.a, t.b, t.c, t.d, t.n
    pe = ((a + b) * (a + c) + (c + d) * (b + d)) / (n * n)
    return AgreementStats(
        p_o=po,
        p_e=pe,
        kappa=cohen_kappa(t),
        percent_agreement=po,
        ac1=gwet_ac1(t),
        prevalence=prevalence(t),
    )


def interpret_agreement(kappa: float) -> AgreementBand:
    """Band a kappa value; thresholds are inclusive at their lower bound."""
    if not -1.0 <= kappa <= 1.0:
        raise ValueError(f"kappa {kappa} outside [-1, 1]")
    if kappa >= EXCELLENT_THRESHOLD:
        return AgreementBand.EXCELLENT
    if kappa >= SUBSTANTIAL_THRESHOLD:
        return AgreementBand.SUBSTANTIAL
    return AgreementBand.LOW


def aggregate_mean_kappa(per_code: Iterable[float | None]) -> KappaAggregate:
    """Arithmetic mean of the defined kappas; Undefined values are excluded
    (and counted) rather than coerced to a number."""
    defined = []
    excluded = 0
    for k in per_code:
        if k is None:
            excluded += 1
        else:
            defined.append(k)
    if not defined:
        return KappaAggregate(mean=None, excluded=excluded)
    return KappaAggregate(mean=sum(defined) / len(defined), excluded=excluded)
