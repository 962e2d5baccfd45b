"""Information measures over finite distributions, in bits.

Everything here uses base-2 logarithms.  The conventions are the usual
ones: 0 * log2(0) counts as 0, an impossible event has infinite
surprisal, and a divergence between distributions that are not
absolutely continuous is +inf rather than an error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, types only
    from .processes import IidSpec, MarkovSpec

# Tolerances shared across the package.
MASS_TOL = 1e-12  # probability vectors must sum to 1 within this
SUM_TOL = 1e-9  # enumerated sequence distributions, marginal checks
IDENTITY_TOL = 1e-9  # algebraic identities between measures
RATE_IDENTITY_TOL = 1e-6  # block-entropy difference vs entropy rate

# Hard ceiling on exhaustive sequence enumeration: alphabet**horizon.
ENUM_LIMIT = 2**20


class ComputationRefused(RuntimeError):
    """Raised when an exact computation would exceed a hard size limit.

    Callers that want an estimate anyway should use a Monte Carlo
    route instead of catching and retrying this.
    """


def _check_prob(p: float) -> float:
    if math.isnan(p) or p < 0.0 or p > 1.0:
        raise ValueError(f"probability out of range [0, 1]: {p!r}")
    return float(p)


@dataclass(frozen=True)
class ProbVector:
    """A probability distribution over symbols 0..k-1."""

    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.probs:
            raise ValueError("distribution needs at least one outcome")
        for p in self.probs:
            _check_prob(p)
        total = math.fsum(self.probs)
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")

    def __len__(self) -> int:
        return len(self.probs)

    def __getitem__(self, i: int) -> float:
        return self.probs[i]

    def support(self) -> tuple[int, ...]:
        return tuple(i for i, p in enumerate(self.probs) if p > 0.0)


def as_probvector(dist: ProbVector | Sequence[float]) -> ProbVector:
    if isinstance(dist, ProbVector):
        return dist
    return ProbVector(tuple(float(p) for p in dist))


def surprisal(p: float) -> float:
    """-log2(p); +inf for an impossible event."""
    _check_prob(p)
    if p == 0.0:
        return math.inf
    return -math.log2(p)


def entropy(dist: ProbVector | Sequence[float]) -> float:
    """Expected surprisal of a distribution, in bits."""
    pv = as_probvector(dist)
    return -math.fsum(p * math.log2(p) for p in pv.probs if p > 0.0)


def divergences(
    actual: ProbVector | Sequence[float],
    model: ProbVector | Sequence[float],
) -> tuple[float, float]:
    """Cross entropy and relative entropy of ``actual`` against ``model``.

    Returns ``(cross, kl)`` in bits.  If ``actual`` puts mass where
    ``model`` does not, both are +inf (the model can never account for
    such an observation, no matter how many bits it spends).
    """
    p = as_probvector(actual)
    q = as_probvector(model)
    if len(p) != len(q):
        raise ValueError(f"length mismatch: {len(p)} vs {len(q)}")
    cross_terms = []
    kl_terms = []
    for pi, qi in zip(p.probs, q.probs):
        if pi == 0.0:
            continue
        if qi == 0.0:
            return math.inf, math.inf
        cross_terms.append(-pi * math.log2(qi))
        kl_terms.append(pi * math.log2(pi / qi))
    cross = math.fsum(cross_terms)
    # fsum cancellation can leave a tiny negative residue on equal inputs
    kl = max(0.0, math.fsum(kl_terms))
    return cross, kl


def cross_entropy(actual, model) -> float:
    return divergences(actual, model)[0]


def relative_entropy(actual, model) -> float:
    return divergences(actual, model)[1]


@dataclass(frozen=True)
class JointTable:
    """Joint distribution over a pair of finite variables.

    ``cell[i][j]`` is P(X=i, Y=j).
    """

    cells: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        if not self.cells or not self.cells[0]:
            raise ValueError("joint table must be non-empty")
        width = len(self.cells[0])
        for row in self.cells:
            if len(row) != width:
                raise ValueError("joint table rows must have equal length")
            for p in row:
                _check_prob(p)
        total = math.fsum(p for row in self.cells for p in row)
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"joint mass sums to {total!r}, not 1")

    def marginal_x(self) -> ProbVector:
        return ProbVector(tuple(math.fsum(row) for row in self.cells))

    def marginal_y(self) -> ProbVector:
        width = len(self.cells[0])
        return ProbVector(
            tuple(math.fsum(row[j] for row in self.cells) for j in range(width))
        )


def joint_measures(table: JointTable) -> tuple[float, float, float]:
    """Joint entropy, conditional entropy H(X|Y), and mutual information.

    All in bits.  Mutual information is clamped at 0 to absorb float
    cancellation; I(X;Y) = H(X) - H(X|Y) holds within IDENTITY_TOL.
    """
    joint = -math.fsum(
        p * math.log2(p) for row in table.cells for p in row if p > 0.0
    )
    h_y = entropy(table.marginal_y())
    cond = joint - h_y
    h_x = entropy(table.marginal_x())
    mutual = max(0.0, h_x - cond)
    return joint, cond, mutual


@dataclass(frozen=True)
class SequenceDist:
    """A process spec together with a finite horizon t.

    Stands for the distribution of the first t observed symbols.  The
    spec object must provide ``alphabet_size`` and ``block_distribution``.
    """

    spec: object
    t: int

    def __post_init__(self) -> None:
        if self.t < 0:
            raise ValueError(f"horizon must be >= 0, got {self.t}")


def block_entropy(dist: SequenceDist) -> float:
    """Entropy of the length-t block distribution, in bits.

    Refuses when the enumeration alphabet_size**t would exceed
    ENUM_LIMIT outcomes; use a sampling estimate in that regime.
    """
    if dist.t == 0:
        return 0.0
    k = int(dist.spec.alphabet_size)  # type: ignore[attr-defined]
    if k**dist.t > ENUM_LIMIT:
        raise ComputationRefused(
            f"block enumeration of {k}**{dist.t} outcomes exceeds "
            f"the {ENUM_LIMIT} limit"
        )
    block = dist.spec.block_distribution(dist.t)  # type: ignore[attr-defined]
    mass = math.fsum(block.values())
    if abs(mass - 1.0) > SUM_TOL:
        raise ValueError(f"enumerated block mass {mass!r} is not 1")
    return -math.fsum(p * math.log2(p) for p in block.values() if p > 0.0)


def entropy_rate(spec: "IidSpec | MarkovSpec") -> float:
    """Per-symbol entropy of a memoryless or finite-memory process."""
    from .processes import IidSpec, MarkovSpec  # local: avoids import cycle

    if isinstance(spec, IidSpec):
        return entropy(spec.dist)
    if isinstance(spec, MarkovSpec):
        pi = spec.stationary_distribution()
        contexts = spec.contexts()
        return math.fsum(
            pi[i] * entropy(spec.conditional(ctx))
            for i, ctx in enumerate(contexts)
            if pi[i] > 0.0
        )
    raise TypeError(f"unsupported process spec: {type(spec).__name__}")


def total_variation(p: dict, q: dict) -> float:
    """Total variation distance between two distributions given as maps.

    Keys missing from one side count as probability zero there.
    """
    keys = set(p) | set(q)
    return 0.5 * math.fsum(abs(p.get(x, 0.0) - q.get(x, 0.0)) for x in keys)
