"""Distributions of the stopping index when hypotheses are compared
position by position in random order.

The pairwise family answers: two alternatives of length L disagree at K
positions; positions are revealed uniformly at random without
replacement; when does the first disagreement show up?  Results are
exact rationals up to L = 20 and log-gamma floats beyond.  Enumeration
and Monte Carlo oracles over explicit orderings provide independent
checks on the closed forms.
"""

from __future__ import annotations

import itertools
import math
import random
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Union

from .info import ComputationRefused

Number = Union[Fraction, float]

_EXACT_MAX_L = 20
_ORACLE_MAX_L = 10
_SERIES_RTOL = 1e-12


class UndefinedMomentError(ValueError):
    """Moments were requested for a distribution that never halts."""


def _survival(L: int, K: int, i: int) -> Number:
    """P(first i revealed positions all agree) = C(L-K, i) / C(L, i)."""
    if i <= 0:
        return Fraction(1) if L <= _EXACT_MAX_L else 1.0
    if i > L - K:
        return Fraction(0) if L <= _EXACT_MAX_L else 0.0
    if L <= _EXACT_MAX_L:
        return Fraction(math.comb(L - K, i), math.comb(L, i))
    return math.exp(
        math.lgamma(L - K + 1)
        - math.lgamma(L - K - i + 1)
        - math.lgamma(L + 1)
        + math.lgamma(L - i + 1)
    )


def _check_pairwise_args(L: int, K: int) -> None:
    if L < 1:
        raise ValueError(f"length must be >= 1, got {L}")
    if not 0 <= K <= L:
        raise ValueError(f"disagreement count {K} outside [0, {L}]")
    if K == 0:
        raise ValueError(
            "identical alternatives never produce a disagreement; "
            "use pairwise_verification for the K = 0 point mass at L"
        )


@dataclass(frozen=True)
class PairwiseSCDist:
    """Stopping index for two length-L alternatives disagreeing at K >= 1
    positions, under uniformly random position reveals.

    Support is 1..L-K+1; the final index carries the mass of reveal
    orders that postpone every disagreement to the end.
    """

    L: int
    K: int

    def __post_init__(self) -> None:
        _check_pairwise_args(self.L, self.K)

    @property
    def exact(self) -> bool:
        return self.L <= _EXACT_MAX_L

    def support(self) -> range:
        return range(1, self.L - self.K + 2)

    def pmf(self, i: int) -> Number:
        zero = Fraction(0) if self.exact else 0.0
        if i < 1 or i > self.L - self.K + 1:
            return zero
        return _survival(self.L, self.K, i - 1) - _survival(self.L, self.K, i)

    def cdf(self, i: int) -> Number:
        one = Fraction(1) if self.exact else 1.0
        if i < 1:
            return one - one
        if i > self.L - self.K:
            return one
        return one - _survival(self.L, self.K, i)

    def moment(self, m: int) -> Number:
        return sum(i**m * self.pmf(i) for i in self.support())

    def to_rows(self) -> list[tuple[int, float, float]]:
        return [
            (i, float(self.pmf(i)), float(self.cdf(i)))
            for i in self.support()
        ]


@dataclass(frozen=True)
class PointMassSCDist:
    """Degenerate stopping index: halts at ``at`` with certainty."""

    at: int

    def __post_init__(self) -> None:
        if self.at < 0:
            raise ValueError(f"stopping index must be >= 0, got {self.at}")

    def support(self) -> range:
        return range(self.at, self.at + 1)

    def pmf(self, i: int) -> Fraction:
        return Fraction(1) if i == self.at else Fraction(0)

    def cdf(self, i: int) -> Fraction:
        return Fraction(1) if i >= self.at else Fraction(0)

    def moment(self, m: int) -> Fraction:
        return Fraction(self.at**m)


@dataclass(frozen=True)
class GeometricSCDist:
    """Stopping index with a fixed per-step halting probability.

    With halt_prob = 0 the process never halts: pmf is identically
    zero, ``halts_almost_surely`` is False, and moments are undefined.
    """

    halt_prob: float

    def __post_init__(self) -> None:
        if math.isnan(self.halt_prob) or not 0.0 <= self.halt_prob <= 1.0:
            raise ValueError(
                f"halting probability out of range [0, 1]: {self.halt_prob!r}"
            )

    @property
    def halts_almost_surely(self) -> bool:
        return self.halt_prob > 0.0

    def pmf(self, i: int) -> float:
        if i < 1:
            return 0.0
        p = self.halt_prob
        return (1.0 - p) ** (i - 1) * p

    def cdf(self, i: int) -> float:
        if i < 1:
            return 0.0
        return 1.0 - (1.0 - self.halt_prob) ** i

    def moment(self, m: int) -> float:
        if not self.halts_almost_surely:
            raise UndefinedMomentError(
                "halting probability 0: the stopping index is infinite "
                "almost surely and has no finite moments"
            )
        p = self.halt_prob
        q = 1.0 - p
        acc = 0.0
        i = 1
        term = p
        while True:
            acc += term
            i += 1
            term = i**m * q ** (i - 1) * p
            ratio = q * ((i + 1) / i) ** m
            if ratio < 1.0:
                tail = term * ratio / (1.0 - ratio)
                if tail + term < _SERIES_RTOL * max(acc, 1.0):
                    return acc + term


@dataclass(frozen=True)
class EmpiricalSCDist:
    """Observed stopping indices: counts per index out of ``trials``.

    ``censored`` trials ran into a budget without stopping; they keep
    their share of the denominator, so the pmf sums to
    (trials - censored) / trials.
    """

    counts: Mapping[int, int]
    trials: int
    censored: int = 0

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError(f"need at least one trial, got {self.trials}")
        total = sum(self.counts.values()) + self.censored
        if total != self.trials:
            raise ValueError(
                f"counts plus censored ({total}) do not add up to "
                f"trials ({self.trials})"
            )

    def support(self) -> list[int]:
        return sorted(self.counts)

    def pmf(self, i: int) -> Fraction:
        return Fraction(self.counts.get(i, 0), self.trials)

    def cdf(self, i: int) -> Fraction:
        hits = sum(c for idx, c in self.counts.items() if idx <= i)
        return Fraction(hits, self.trials)

    def moment(self, m: int) -> float:
        """Raw moment over the uncensored trials only."""
        n = self.trials - self.censored
        if n == 0:
            raise UndefinedMomentError("every trial was censored")
        return math.fsum(i**m * c for i, c in self.counts.items()) / n

    def pmf_map(self) -> dict[int, float]:
        return {i: c / self.trials for i, c in self.counts.items()}


SCDist = Union[PairwiseSCDist, PointMassSCDist, GeometricSCDist, EmpiricalSCDist]


def pairwise_pmf(L: int, K: int, i: int) -> Number:
    """P(stopping index = i); zero outside 1..L-K+1 rather than an error."""
    return PairwiseSCDist(L, K).pmf(i)


def pairwise_cdf(L: int, K: int, i: int) -> Number:
    return PairwiseSCDist(L, K).cdf(i)


def partial_verification_prob(L: int, K: int, i: int) -> Number:
    """P(the first i reveals all land on agreeing positions)."""
    _check_pairwise_args(L, K)
    if i < 0 or i > L:
        raise ValueError(f"reveal count {i} outside [0, {L}]")
    return _survival(L, K, i)


def pairwise_verification(L: int) -> PointMassSCDist:
    """K = 0: no disagreement exists, every reveal order runs to L."""
    if L < 1:
        raise ValueError(f"length must be >= 1, got {L}")
    return PointMassSCDist(L)


def geometric_pmf(halt_prob: float, i: int) -> float:
    return GeometricSCDist(halt_prob).pmf(i)


def dist_moments(dist: SCDist, m: int) -> Number:
    """m-th raw moment of a stopping-index distribution."""
    if m < 1:
        raise ValueError(f"moment order must be >= 1, got {m}")
    return dist.moment(m)


def _diff_positions(a: str, b: str) -> list[int]:
    if len(a) != len(b):
        raise ValueError(
            f"alternatives must have equal length, got {len(a)} and {len(b)}"
        )
    if len(a) < 1:
        raise ValueError("alternatives must be non-empty")
    return [idx for idx, (x, y) in enumerate(zip(a, b)) if x != y]


def _stop_index(order: tuple[int, ...] | list[int], diffs: set[int]) -> int:
    for pos, revealed in enumerate(order, start=1):
        if revealed in diffs:
            return pos
    return len(order)


def enumerate_orderings_oracle(a: str, b: str) -> EmpiricalSCDist:
    """Exact stopping distribution by walking every reveal order.

    Refuses beyond length 10 (10! orders is the practical limit); the
    result's pmf values are exact rationals with denominator L!.
    """
    diffs = set(_diff_positions(a, b))
    L = len(a)
    if L > _ORACLE_MAX_L:
        raise ComputationRefused(
            f"enumerating {L}! reveal orders exceeds the length-"
            f"{_ORACLE_MAX_L} oracle limit"
        )
    counts: Counter[int] = Counter()
    for order in itertools.permutations(range(L)):
        counts[_stop_index(order, diffs)] += 1
    return EmpiricalSCDist(dict(counts), math.factorial(L))


def mc_pairwise_oracle(
    a: str, b: str, trials: int, seed: int | str
) -> EmpiricalSCDist:
    """Stopping distribution from sampled reveal orders."""
    diffs = set(_diff_positions(a, b))
    if trials < 1:
        raise ValueError(f"need at least one trial, got {trials}")
    rng = random.Random(seed)
    L = len(a)
    counts: Counter[int] = Counter()
    for _ in range(trials):
        counts[_stop_index(rng.sample(range(L), L), diffs)] += 1
    return EmpiricalSCDist(dict(counts), trials)
