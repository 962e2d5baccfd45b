"""Discrete processes: fair-coin-driven sampling, finite-memory chains,
empirical estimates, and spread codes.

Sampling is exact: symbol probabilities are kept as dyadic rationals and
symbols are drawn by refining a binary interval with fair coin flips, so
the output distribution matches the spec exactly (not just in float
approximation) and the flips consumed are countable.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .info import ComputationRefused, ENUM_LIMIT, ProbVector, as_probvector

_MAX_DYADIC_BITS = 53  # resolution used when rounding non-dyadic weights


class UndefinedDistributionError(ValueError):
    """An empirical conditional was requested for a never-seen context."""


class NonErgodicError(ValueError):
    """The context graph of a finite-memory chain is not irreducible."""


class BitSource:
    """Deterministic stream of fair coin flips.

    Bits come from a seeded ``random.Random`` in 64-bit chunks, consumed
    most-significant first.  ``bits_consumed`` counts exactly the flips
    handed out, which is what the expected-flips bounds are stated over.
    """

    __slots__ = ("_rng", "_buf", "_left", "bits_consumed")

    def __init__(self, seed: int | str) -> None:
        self._rng = random.Random(seed)
        self._buf = 0
        self._left = 0
        self.bits_consumed = 0

    def next_bit(self) -> int:
        if self._left == 0:
            self._buf = self._rng.getrandbits(64)
            self._left = 64
        self._left -= 1
        self.bits_consumed += 1
        return (self._buf >> self._left) & 1


def _to_dyadic(weights: Sequence[float | Fraction]) -> tuple[list[Fraction], bool]:
    """Convert weights to exact dyadic fractions.

    Floats are already dyadic and convert exactly.  Other rationals are
    rounded to the nearest multiple of 2**-53 and flagged.
    """
    out: list[Fraction] = []
    rounded = False
    for w in weights:
        fr = Fraction(w)
        if fr < 0 or fr > 1:
            raise ValueError(f"weight out of range [0, 1]: {w!r}")
        den = fr.denominator
        if den & (den - 1) != 0 or den > (1 << _MAX_DYADIC_BITS):
            grid = 1 << _MAX_DYADIC_BITS
            fr2 = Fraction(round(fr * grid), grid)
            rounded = rounded or (fr2 != fr)
            fr = fr2
        out.append(fr)
    return out, rounded


@dataclass(frozen=True)
class IidSpec:
    """Memoryless process over symbols 0..k-1 with dyadic probabilities.

    ``rounded`` records whether any input weight had to be snapped to
    the dyadic grid.  The final cell is adjusted so the exact mass is 1.
    """

    dist: ProbVector
    boundaries: tuple[Fraction, ...]  # len k+1, 0 == first, 1 == last
    rounded: bool = False

    @staticmethod
    def from_probs(weights: Sequence[float | Fraction]) -> "IidSpec":
        fracs, rounded = _to_dyadic(weights)
        if not fracs:
            raise ValueError("need at least one symbol")
        head = sum(fracs[:-1], Fraction(0))
        if head > 1:
            raise ValueError(f"weights exceed unit mass by {float(head - 1)!r}")
        tail = 1 - head
        if abs(tail - fracs[-1]) > Fraction(1, 1 << 40):
            raise ValueError(
                f"weights sum to {float(head + fracs[-1])!r}, not 1"
            )
        fracs[-1] = tail
        bounds = [Fraction(0)]
        for fr in fracs:
            bounds.append(bounds[-1] + fr)
        dist = ProbVector(tuple(float(fr) for fr in fracs))
        return IidSpec(dist, tuple(bounds), rounded)

    @property
    def alphabet_size(self) -> int:
        return len(self.dist)

    def block_distribution(self, t: int) -> dict[tuple[int, ...], float]:
        return _iid_block(self.dist, t)

    def __str__(self) -> str:
        return f"iid({', '.join(f'{p:g}' for p in self.dist.probs)})"


def _iid_block(dist: ProbVector, t: int) -> dict[tuple[int, ...], float]:
    if len(dist) ** t > ENUM_LIMIT:
        raise ComputationRefused(
            f"block enumeration {len(dist)}**{t} exceeds the {ENUM_LIMIT} limit"
        )
    seqs: dict[tuple[int, ...], float] = {(): 1.0}
    for _ in range(t):
        nxt: dict[tuple[int, ...], float] = {}
        for seq, p in seqs.items():
            for sym, ps in enumerate(dist.probs):
                if ps > 0.0:
                    nxt[seq + (sym,)] = p * ps
        seqs = nxt
    return seqs


_scaled_bounds_cache: dict[tuple[Fraction, ...], tuple[int, tuple[int, ...]]] = {}


def _scaled_bounds(bounds: tuple[Fraction, ...]) -> tuple[int, tuple[int, ...]]:
    hit = _scaled_bounds_cache.get(bounds)
    if hit is None:
        dmax = max(b.denominator for b in bounds).bit_length() - 1
        hit = (dmax, tuple(int(b * (1 << dmax)) for b in bounds))
        _scaled_bounds_cache[bounds] = hit
    return hit


def sample_discrete(spec: IidSpec, source: BitSource) -> int:
    """Draw one symbol by dyadic interval refinement.

    Keeps the interval [z/2^n, (z+1)/2^n) and reads flips until it fits
    inside one CDF cell.  Comparisons are exact integer arithmetic.
    """
    dmax, scaled = _scaled_bounds(spec.boundaries)
    unit = 1 << dmax
    z = 0
    n = 0
    while True:
        # interval endpoints as integers over 2**dmax, given n flips
        lo = z * unit
        hi = lo + unit
        shift = 1 << n
        for j in range(len(scaled) - 1):
            if scaled[j] == scaled[j + 1]:
                continue  # zero-probability cell
            if lo >= scaled[j] * shift and hi <= scaled[j + 1] * shift:
                return j
        z = (z << 1) | source.next_bit()
        n += 1


def iid_sample(spec: IidSpec, t: int, source: BitSource) -> tuple[int, ...]:
    if t < 0:
        raise ValueError(f"sample length must be >= 0, got {t}")
    return tuple(sample_discrete(spec, source) for _ in range(t))


Context = tuple[int, ...]


def _context_str(ctx: Context) -> str:
    return "".join(str(s) for s in ctx) if ctx else "(empty)"


@dataclass(frozen=True)
class MarkovSpec:
    """Finite-memory chain: one conditional distribution per context.

    ``init`` is one of ``("context", ctx)``, ``("distribution", probs)``
    over lexicographic contexts, or ``("stationary", None)``.
    """

    memory: int
    transitions: Mapping[Context, IidSpec]
    init: tuple[str, object]
    _stationary_cache: dict = field(
        default_factory=dict, compare=False, repr=False
    )

    def __post_init__(self) -> None:
        if self.memory < 0:
            raise ValueError(f"memory must be >= 0, got {self.memory}")
        if not self.transitions:
            raise ValueError("transition map is empty")
        k = next(iter(self.transitions.values())).alphabet_size
        expected = self._all_contexts(k)
        missing = [c for c in expected if c not in self.transitions]
        if missing:
            raise ValueError(
                "transition map is missing contexts: "
                + ", ".join(_context_str(c) for c in missing[:8])
            )
        for ctx, sub in self.transitions.items():
            if sub.alphabet_size != k:
                raise ValueError(
                    f"context {_context_str(ctx)} has alphabet size "
                    f"{sub.alphabet_size}, expected {k}"
                )
        mode, payload = self.init
        if mode == "context":
            if payload not in self.transitions:
                raise ValueError(
                    f"initial context {_context_str(payload)} not in map"
                )
        elif mode == "distribution":
            pv = as_probvector(payload)  # type: ignore[arg-type]
            if len(pv) != len(expected):
                raise ValueError(
                    f"initial distribution over {len(pv)} contexts, "
                    f"expected {len(expected)}"
                )
            self._check_stationary(pv)
        elif mode == "stationary":
            self.stationary_distribution()
        else:
            raise ValueError(f"unknown init mode {mode!r}")

    @property
    def alphabet_size(self) -> int:
        return next(iter(self.transitions.values())).alphabet_size

    def _all_contexts(self, k: int) -> list[Context]:
        ctxs: list[Context] = [()]
        for _ in range(self.memory):
            ctxs = [c + (s,) for c in ctxs for s in range(k)]
        return ctxs

    def contexts(self) -> list[Context]:
        return self._all_contexts(self.alphabet_size)

    def conditional(self, ctx: Context) -> ProbVector:
        return self.transitions[ctx].dist

    def _successor(self, ctx: Context, sym: int) -> Context:
        return (ctx + (sym,))[-self.memory:] if self.memory else ()

    def _check_ergodic(self) -> None:
        ctxs = self.contexts()
        index = {c: i for i, c in enumerate(ctxs)}
        fwd: list[list[int]] = [[] for _ in ctxs]
        rev: list[list[int]] = [[] for _ in ctxs]
        for c in ctxs:
            i = index[c]
            for sym, p in enumerate(self.conditional(c).probs):
                if p > 0.0:
                    j = index[self._successor(c, sym)]
                    fwd[i].append(j)
                    rev[j].append(i)

        def reach(adj: list[list[int]]) -> set[int]:
            seen = {0}
            stack = [0]
            while stack:
                for j in adj[stack.pop()]:
                    if j not in seen:
                        seen.add(j)
                        stack.append(j)
            return seen

        bad = sorted(
            (set(range(len(ctxs))) - reach(fwd))
            | (set(range(len(ctxs))) - reach(rev))
        )
        if bad:
            names = ", ".join(_context_str(ctxs[i]) for i in bad[:8])
            raise NonErgodicError(
                f"context graph is reducible; contexts not mutually "
                f"reachable: {names}"
            )

    def _transition_row(self, ctx: Context, index: dict) -> list[tuple[int, float]]:
        return [
            (index[self._successor(ctx, sym)], p)
            for sym, p in enumerate(self.conditional(ctx).probs)
            if p > 0.0
        ]

    def stationary_distribution(self) -> tuple[float, ...]:
        """Stationary context weights via damped power iteration.

        Damping (pi <- pi/2 + pi.P/2) removes periodicity, so the
        iteration converges for every irreducible chain.
        """
        if "pi" in self._stationary_cache:
            return self._stationary_cache["pi"]
        self._check_ergodic()
        ctxs = self.contexts()
        index = {c: i for i, c in enumerate(ctxs)}
        rows = [self._transition_row(c, index) for c in ctxs]
        pi = [1.0 / len(ctxs)] * len(ctxs)
        for _ in range(1_000_000):
            nxt = [0.5 * w for w in pi]
            for i, w in enumerate(pi):
                if w > 0.0:
                    for j, p in rows[i]:
                        nxt[j] += 0.5 * w * p
            total = math.fsum(nxt)
            nxt = [w / total for w in nxt]
            if max(abs(a - b) for a, b in zip(nxt, pi)) < 1e-12:
                pi = nxt
                break
            pi = nxt
        result = tuple(pi)
        self._stationary_cache["pi"] = result
        return result

    def _check_stationary(self, pv: ProbVector) -> None:
        ctxs = self.contexts()
        index = {c: i for i, c in enumerate(ctxs)}
        out = [0.0] * len(ctxs)
        for i, c in enumerate(ctxs):
            for j, p in self._transition_row(c, index):
                out[j] += pv[i] * p
        worst = max(abs(a - b) for a, b in zip(out, pv.probs))
        if worst > 1e-9:
            raise ValueError(
                f"initial context distribution is not stationary "
                f"(max |pi.P - pi| = {worst:.3e})"
            )

    def initial_mixture(self) -> dict[Context, float]:
        """Initial context weights implied by ``init``."""
        mode, payload = self.init
        if mode == "context":
            return {payload: 1.0}  # type: ignore[dict-item]
        ctxs = self.contexts()
        if mode == "distribution":
            pv = as_probvector(payload)  # type: ignore[arg-type]
            return {c: pv[i] for i, c in enumerate(ctxs) if pv[i] > 0.0}
        pi = self.stationary_distribution()
        return {c: pi[i] for i, c in enumerate(ctxs) if pi[i] > 0.0}

    def block_distribution(self, t: int) -> dict[tuple[int, ...], float]:
        if self.alphabet_size**t > ENUM_LIMIT:
            raise ComputationRefused(
                f"block enumeration {self.alphabet_size}**{t} exceeds "
                f"the {ENUM_LIMIT} limit"
            )
        layer: dict[tuple[tuple[int, ...], Context], float] = {
            ((), ctx): w for ctx, w in self.initial_mixture().items()
        }
        for _ in range(t):
            nxt: dict[tuple[tuple[int, ...], Context], float] = {}
            for (seq, ctx), w in layer.items():
                for sym, p in enumerate(self.conditional(ctx).probs):
                    if p > 0.0:
                        key = (seq + (sym,), self._successor(ctx, sym))
                        nxt[key] = nxt.get(key, 0.0) + w * p
            layer = nxt
        out: dict[tuple[int, ...], float] = {}
        for (seq, _ctx), w in layer.items():
            out[seq] = out.get(seq, 0.0) + w
        return out


def markov_step(spec: MarkovSpec, ctx: Context) -> IidSpec:
    """Next-symbol distribution in the given context."""
    try:
        return spec.transitions[ctx]
    except KeyError:
        raise KeyError(f"unknown context {_context_str(ctx)}") from None


def markov_sample(spec: MarkovSpec, t: int, source: BitSource) -> tuple[int, ...]:
    """Emit t symbols.  The initial context is hidden state, not output."""
    if t < 0:
        raise ValueError(f"sample length must be >= 0, got {t}")
    mode, payload = spec.init
    if mode == "context":
        ctx: Context = payload  # type: ignore[assignment]
    else:
        ctxs = spec.contexts()
        if mode == "distribution":
            weights = list(as_probvector(payload).probs)  # type: ignore[arg-type]
        else:
            weights = list(spec.stationary_distribution())
        ctx = ctxs[sample_discrete(IidSpec.from_probs(weights), source)]
    out = []
    for _ in range(t):
        sym = sample_discrete(spec.transitions[ctx], source)
        out.append(sym)
        ctx = spec._successor(ctx, sym)
    return tuple(out)


def sequence_log_probability(
    spec: IidSpec | MarkovSpec, seq: Sequence[int]
) -> float:
    """-log2 P(sequence) under the spec, in bits (>= 0, +inf if impossible)."""
    if isinstance(spec, IidSpec):
        total = 0.0
        for sym in seq:
            p = spec.dist[sym]
            if p == 0.0:
                return math.inf
            total -= math.log2(p)
        return total
    # finite-memory: log-space forward pass over the initial mixture
    branches = []
    for ctx, w in spec.initial_mixture().items():
        ll = math.log2(w)
        dead = False
        cur = ctx
        for sym in seq:
            p = spec.conditional(cur)[sym]
            if p == 0.0:
                dead = True
                break
            ll += math.log2(p)
            cur = spec._successor(cur, sym)
        if not dead:
            branches.append(ll)
    if not branches:
        return math.inf
    top = max(branches)
    return -(top + math.log2(math.fsum(2.0 ** (b - top) for b in branches)))


class EmpiricalProcess:
    """Relative-frequency estimate of a finite-memory process.

    Immutable: updates return a new instance that shares unchanged
    context rows with the old one.
    """

    __slots__ = ("memory", "alphabet_size", "_counts")

    def __init__(
        self,
        memory: int,
        alphabet_size: int,
        counts: Mapping[Context, tuple[int, ...]] | None = None,
    ) -> None:
        if memory < 0 or alphabet_size < 1:
            raise ValueError("need memory >= 0 and alphabet_size >= 1")
        self.memory = memory
        self.alphabet_size = alphabet_size
        self._counts: dict[Context, tuple[int, ...]] = dict(counts or {})

    def contexts_seen(self) -> list[Context]:
        return sorted(self._counts)

    def counts(self, ctx: Context) -> tuple[int, ...]:
        return self._counts.get(ctx, (0,) * self.alphabet_size)


def empirical_update(
    proc: EmpiricalProcess, ctx: Context, symbol: int
) -> EmpiricalProcess:
    if len(ctx) != proc.memory:
        raise ValueError(f"context length {len(ctx)} != memory {proc.memory}")
    if not 0 <= symbol < proc.alphabet_size:
        raise ValueError(f"symbol {symbol} outside alphabet")
    row = list(proc.counts(ctx))
    row[symbol] += 1
    new_counts = dict(proc._counts)
    new_counts[ctx] = tuple(row)
    return EmpiricalProcess(proc.memory, proc.alphabet_size, new_counts)


def empirical_dist(proc: EmpiricalProcess, ctx: Context) -> ProbVector:
    row = proc._counts.get(ctx)
    if row is None or sum(row) == 0:
        raise UndefinedDistributionError(
            f"no observations for context {_context_str(ctx)}"
        )
    total = sum(row)
    return ProbVector(tuple(c / total for c in row))


def empirical_from_sequence(
    seq: Sequence[int], memory: int, alphabet_size: int,
    init_context: Context = (),
) -> EmpiricalProcess:
    """Fold a sequence into counts, rolling the context window.

    The first ``memory`` symbols seed the window when no initial
    context is given, and produce no counts of their own.
    """
    proc = EmpiricalProcess(memory, alphabet_size)
    if memory and not init_context:
        if len(seq) < memory:
            return proc
        ctx: Context = tuple(seq[:memory])
        rest = seq[memory:]
    else:
        if len(init_context) != memory:
            raise ValueError("initial context length must equal memory")
        ctx = tuple(init_context)
        rest = seq
    for sym in rest:
        proc = empirical_update(proc, ctx, sym)
        ctx = (ctx + (sym,))[-memory:] if memory else ()
    return proc


@dataclass(frozen=True)
class SpreadCode:
    """Repetition-style code: message bit b colors position j with
    component distribution b, cycling through the message.

    Components must be pairwise distinct, otherwise some message
    symbols are indistinguishable and decoding cannot work.
    """

    message_length: int
    components: tuple[IidSpec, ...]

    def __post_init__(self) -> None:
        if self.message_length < 1:
            raise ValueError("message length must be >= 1")
        if len(self.components) < 2:
            raise ValueError("need at least two component distributions")
        for a in range(len(self.components)):
            for b in range(a + 1, len(self.components)):
                if (
                    self.components[a].dist.probs
                    == self.components[b].dist.probs
                ):
                    raise ValueError(
                        f"components {a} and {b} are identical; message "
                        f"symbols {a} and {b} would be indistinguishable"
                    )
        sizes = {c.alphabet_size for c in self.components}
        if len(sizes) != 1:
            raise ValueError("components must share one alphabet")


@dataclass(frozen=True)
class DecodedMessage:
    bits: tuple[int | None, ...]
    confidences: tuple[float, ...]  # bits of log-likelihood margin

    def as_string(self) -> str:
        return "".join("?" if b is None else str(b) for b in self.bits)


def spread_encode(
    code: SpreadCode, message: str, t: int, source: BitSource
) -> tuple[int, ...]:
    """Emit t symbols; position j is drawn from the component selected
    by message symbol ((j-1) mod message_length)."""
    if len(message) != code.message_length:
        raise ValueError(
            f"message length {len(message)} != {code.message_length}"
        )
    idx = []
    for ch in message:
        v = int(ch)
        if not 0 <= v < len(code.components):
            raise ValueError(f"message symbol {ch!r} has no component")
        idx.append(v)
    out = []
    for j in range(t):
        out.append(sample_discrete(code.components[idx[j % len(idx)]], source))
    return tuple(out)


def spread_decode(
    code: SpreadCode, observations: Sequence[int]
) -> DecodedMessage:
    """Per-position maximum likelihood over the cycled components.

    Confidence is the log-likelihood gap (bits) between the best and
    second-best component; a position with no observations decodes to
    None with confidence 0.
    """
    ell = code.message_length
    logp = []
    for comp in code.components:
        logp.append(
            [
                math.log2(p) if p > 0.0 else -math.inf
                for p in comp.dist.probs
            ]
        )
    bits: list[int | None] = []
    confs: list[float] = []
    for pos in range(ell):
        samples = observations[pos::ell]
        if not samples:
            bits.append(None)
            confs.append(0.0)
            continue
        scores = [
            sum(logp[c][s] for s in samples)
            for c in range(len(code.components))
        ]
        order = sorted(range(len(scores)), key=lambda c: (-scores[c], c))
        best, runner = order[0], order[1]
        gap = scores[best] - scores[runner]
        if gap == 0.0:
            best = min(best, runner)
        bits.append(best)
        confs.append(gap if math.isfinite(gap) else math.inf)
    return DecodedMessage(tuple(bits), tuple(confs))


def spec_to_json(spec: IidSpec | MarkovSpec) -> dict:
    if isinstance(spec, IidSpec):
        return {"kind": "iid", "probs": list(spec.dist.probs)}
    mode, payload = spec.init
    init_json: object
    if mode == "context":
        init_json = {"context": _context_str(payload) if payload else ""}
    elif mode == "distribution":
        init_json = {"distribution": list(as_probvector(payload).probs)}
    else:
        init_json = "stationary"
    return {
        "kind": "markov",
        "memory": spec.memory,
        "alphabet": spec.alphabet_size,
        "transitions": {
            "".join(str(s) for s in ctx): list(sub.dist.probs)
            for ctx, sub in sorted(spec.transitions.items())
        },
        "init": init_json,
    }


def spec_from_json(data: Mapping) -> IidSpec | MarkovSpec:
    kind = data.get("kind")
    if kind == "iid":
        return IidSpec.from_probs(data["probs"])
    if kind != "markov":
        raise ValueError(f"unknown process kind {kind!r}")
    memory = int(data["memory"])
    transitions = {
        tuple(int(c) for c in ctx_str): IidSpec.from_probs(probs)
        for ctx_str, probs in data["transitions"].items()
    }
    raw_init = data.get("init", "stationary")
    init: tuple[str, object]
    if raw_init == "stationary":
        init = ("stationary", None)
    elif isinstance(raw_init, Mapping) and "context" in raw_init:
        init = ("context", tuple(int(c) for c in raw_init["context"]))
    elif isinstance(raw_init, Mapping) and "distribution" in raw_init:
        init = ("distribution", ProbVector(tuple(raw_init["distribution"])))
    else:
        raise ValueError(f"unknown init form {raw_init!r}")
    return MarkovSpec(memory, transitions, init)
