"""Identification of a query bit string against a finite hypothesis set.

Three interchangeable deciders are provided: a sorted linear scan, a
per-member depth-first walk, and a prefix-tree walk.  They traverse the
set differently and keep their own bookkeeping, but must always agree
on the decision status and on which members remain in play; that
agreement is a standing cross-check, so the derivations are deliberately
not shared.

Observation budgets: a resolution r in [0, 1] allows at most
ceil(-log2 r) symbol reads (unlimited when r = 0, none when r = 1).
A StreamString carries its own resolution; the tighter budget wins.
Detecting the *end* of a query is free: budgets meter symbol
comparisons, which is what the counter ``i`` reports.
"""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Sequence

logger = logging.getLogger(__name__)

_ALPHABET = frozenset("01")


class IdStatus(Enum):
    VERIFIED = "Verified"
    FALSIFIED = "Falsified"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class IdOutcome:
    """Decision plus traversal bookkeeping.

    ``h`` and ``i`` are pointer and comparison-depth counters whose
    precise meaning is per-decider (see each docstring).  The decision
    payload that all deciders must agree on is ``status`` together with
    ``partial_subset``: 1-based member indices left in play -- the match
    for Verified, proper extensions of the query for Falsified, and all
    still-consistent members for Undetermined.
    """

    status: IdStatus
    h: int
    i: int
    partial_subset: tuple[int, ...]

    def to_json(self) -> dict:
        return {
            "status": self.status.value,
            "h": self.h,
            "i": self.i,
            "partial_subset": list(self.partial_subset),
        }


def _check_bits(s: str, what: str) -> str:
    if not isinstance(s, str) or not set(s) <= _ALPHABET:
        raise ValueError(f"{what} must be a string over 0/1, got {s!r}")
    return s


def resolution_cap(r: float) -> float:
    """Observation budget for resolution r: ceil(-log2 r), inf when r = 0."""
    if math.isnan(r) or r < 0.0 or r > 1.0:
        raise ValueError(f"resolution out of range [0, 1]: {r!r}")
    if r == 0.0:
        return math.inf
    if r == 1.0:
        return 0
    return math.ceil(-math.log2(r))


@dataclass(frozen=True)
class SortedHypothesisSet:
    """Duplicate-free members in lexicographic order (prefixes first).

    Construction validates the order and reports the index of the first
    offending member; use ``from_unsorted`` when order is not promised.
    """

    members: tuple[str, ...]

    def __post_init__(self) -> None:
        for m in self.members:
            _check_bits(m, "member")
            if not m:
                raise ValueError("members must be non-empty")
        for idx in range(1, len(self.members)):
            prev, cur = self.members[idx - 1], self.members[idx]
            if cur == prev:
                raise ValueError(f"duplicate member {cur!r} at index {idx}")
            if cur < prev:
                raise ValueError(
                    f"member {cur!r} at index {idx} breaks sorted order"
                )

    @staticmethod
    def from_unsorted(members: Iterable[str]) -> "SortedHypothesisSet":
        return SortedHypothesisSet(tuple(sorted(set(members))))

    def __len__(self) -> int:
        return len(self.members)


class StreamString:
    """A query revealed one symbol at a time, with its own resolution.

    Reads are memoized, so re-reading a position never re-pulls the
    generator.  The length is unknown until the generator is exhausted.
    """

    def __init__(
        self, symbols: Iterator[str] | Iterable[str], resolution: float
    ) -> None:
        self._it = iter(symbols)
        self.cap = resolution_cap(resolution)
        self._seen: list[str] = []
        self._ended = False

    def symbol_at(self, idx: int) -> str | None:
        """0-based read; None once the stream has ended at or before idx."""
        while len(self._seen) <= idx and not self._ended:
            try:
                sym = next(self._it)
            except StopIteration:
                self._ended = True
                break
            self._seen.append(_check_bits(str(sym), "stream symbol"))
        if idx < len(self._seen):
            return self._seen[idx]
        return None

    @property
    def length_if_known(self) -> int | None:
        return len(self._seen) if self._ended else None


class _QueryView:
    """Uniform one-symbol-at-a-time access to str and stream queries."""

    def __init__(self, query: str | StreamString, r: float) -> None:
        cap = resolution_cap(r)
        if isinstance(query, StreamString):
            self._stream: StreamString | None = query
            self._text: str | None = None
            cap = min(cap, query.cap)
            if cap == math.inf:
                raise ValueError(
                    "stream query with unlimited resolution on both sides; "
                    "no observation bound exists"
                )
        else:
            self._stream = None
            self._text = _check_bits(query, "query")
        self.cap = cap

    def symbol_at(self, idx: int) -> str | None:
        if self._text is not None:
            return self._text[idx] if idx < len(self._text) else None
        return self._stream.symbol_at(idx)  # type: ignore[union-attr]

    def observe_all(self) -> tuple[str, bool]:
        """Materialize up to cap symbols; True when the query end was seen."""
        chars: list[str] = []
        while len(chars) < self.cap:
            sym = self.symbol_at(len(chars))
            if sym is None:
                return "".join(chars), True
            chars.append(sym)
        return "".join(chars), self.symbol_at(len(chars)) is None


def _prefix_chain(members: tuple[str, ...], prefix: str) -> list[int]:
    """1-based indices of members that are proper prefixes of ``prefix``.

    Such members were stepped over by a sorted scan; they are recovered
    by membership tests on each shorter prefix, which keeps this
    O(len * log n) instead of rescanning the set.
    """
    out = []
    for ln in range(1, len(prefix)):
        cand = prefix[:ln]
        pos = bisect.bisect_left(members, cand)
        if pos < len(members) and members[pos] == cand:
            out.append(pos + 1)
    return out


def identify_sorted(
    hset: SortedHypothesisSet, query: str | StreamString, r: float = 0.0
) -> IdOutcome:
    """Single left-to-right scan over the sorted members.

    A pointer advances while the member's prefix sorts below the
    observed prefix; a pointer past the end, or a member prefix sorting
    above the observation, stops the scan at once.  ``h`` is the
    pointer (1-based) at the start of the last observation, except on
    Verified where it is the matched member's index; ``i`` counts
    observed symbols.
    """
    view = _QueryView(query, r)
    members = hset.members
    n = len(members)
    if n == 0:
        return IdOutcome(IdStatus.FALSIFIED, 0, 0, ())

    j = 0
    h = 0
    i = 0
    prefix = ""
    complete = False
    stopped = False
    while i < view.cap:
        sym = view.symbol_at(i)
        if sym is None:
            complete = True  # the whole query has been observed
            break
        prefix += sym
        i += 1
        h = j + 1
        while members[j][:i] < prefix:
            j += 1
            if j == n:
                stopped = True  # every member sorts below the observation
                break
        if stopped or members[j][:i] > prefix:
            stopped = True  # sorted order: nothing matches this prefix
            break
    else:
        complete = view.symbol_at(i) is None

    if stopped:
        # No member reaches the current prefix.  Members that *are* a
        # proper prefix of it were passed over and stay consistent,
        # unless the query end turns out to be observable.
        shorts = _prefix_chain(members, prefix)
        if not shorts:
            return IdOutcome(IdStatus.FALSIFIED, h, i, ())
        _rest, ended = view.observe_all()
        if ended:
            # the full query is observable, so those passed-over
            # prefixes are dead by length after all
            return IdOutcome(IdStatus.FALSIFIED, h, i, ())
        return IdOutcome(IdStatus.UNDETERMINED, h, i, tuple(shorts))

    if complete:
        # full query observed: exact match or proper extensions
        match = 0
        extensions: list[int] = []
        k = j
        while k < n and members[k][:i] == prefix:
            if members[k] == prefix:
                match = k + 1
            else:
                extensions.append(k + 1)
            k += 1
        if match:
            return IdOutcome(IdStatus.VERIFIED, match, i, (match,))
        return IdOutcome(IdStatus.FALSIFIED, h, i, tuple(extensions))

    # truncated by the budget: passed-over prefix members plus the run
    # of members still matching the observed prefix stay in play
    consistent = _prefix_chain(members, prefix)
    k = j
    while k < n and members[k][:i] == prefix:
        consistent.append(k + 1)
        k += 1
    if consistent:
        return IdOutcome(IdStatus.UNDETERMINED, h, i, tuple(consistent))
    return IdOutcome(IdStatus.FALSIFIED, h, i, ())


def identify_depth_first(
    members: Sequence[str], query: str | StreamString, r: float = 0.0
) -> IdOutcome:
    """Member-by-member walk, comparing symbols until a mismatch.

    Accepts any duplicate-free member order; partial indices refer to
    the given order.  ``i`` tracks the deepest comparison made anywhere
    (at least 1 once any comparison happens) and ``h`` the member that
    first pushed the depth past its previous record.
    """
    seen = set()
    for idx, m in enumerate(members):
        _check_bits(m, "member")
        if not m:
            raise ValueError("members must be non-empty")
        if m in seen:
            raise ValueError(f"duplicate member {m!r} at index {idx}")
        seen.add(m)
    view = _QueryView(query, r)
    prefix, complete = view.observe_all()
    horizon = len(prefix)

    i_deep = 0
    h_deep = 0
    extensions: list[int] = []
    consistent: list[int] = []
    for j, member in enumerate(members, start=1):
        window = min(len(member), horizon)
        dead = False
        for k in range(window):
            if i_deep == 0:
                i_deep = 1
            if k + 1 > i_deep:
                i_deep = k + 1
                h_deep = j
            if member[k] != prefix[k]:
                dead = True
                break
        if dead:
            continue
        if complete:
            # prefix is the entire query
            if len(member) == horizon:
                return IdOutcome(IdStatus.VERIFIED, j, i_deep, (j,))
            if len(member) > horizon:
                extensions.append(j)
            # shorter members are dead: the query outlived them
        else:
            consistent.append(j)

    if complete:
        return IdOutcome(
            IdStatus.FALSIFIED, h_deep, i_deep, tuple(extensions)
        )
    if consistent:
        return IdOutcome(
            IdStatus.UNDETERMINED, h_deep, i_deep, tuple(consistent)
        )
    return IdOutcome(IdStatus.FALSIFIED, h_deep, i_deep, ())


@dataclass
class _TreeNode:
    children: dict[str, "_TreeNode"] = field(default_factory=dict)
    terminal: int = 0  # 1-based member index, 0 when not a member end


@dataclass
class ContextTree:
    """Prefix tree over a hypothesis set; every node is on some member's
    path, so there are no unreachable nodes."""

    root: _TreeNode
    size: int

    def node_count(self) -> int:
        count = 0
        stack = [self.root]
        while stack:
            node = stack.pop()
            count += 1
            stack.extend(node.children.values())
        return count


def build_context_tree(
    members: SortedHypothesisSet | Sequence[str],
) -> ContextTree:
    if isinstance(members, SortedHypothesisSet):
        items: Sequence[str] = members.members
    else:
        items = list(members)
        seen = set()
        for m in items:
            _check_bits(m, "member")
            if not m or m in seen:
                raise ValueError(f"invalid or duplicate member {m!r}")
            seen.add(m)
    root = _TreeNode()
    for idx, m in enumerate(items, start=1):
        node = root
        for sym in m:
            node = node.children.setdefault(sym, _TreeNode())
        node.terminal = idx
    return ContextTree(root, len(items))


def _subtree_terminals(node: _TreeNode) -> list[int]:
    out = []
    stack = [node]
    while stack:
        cur = stack.pop()
        if cur.terminal:
            out.append(cur.terminal)
        stack.extend(cur.children.values())
    return sorted(out)


def identify_tree(
    tree: ContextTree, query: str | StreamString, r: float = 0.0
) -> IdOutcome:
    """Walk the prefix tree along the observed symbols.

    ``i`` is the number of symbols consumed by the walk.  ``h`` is the
    matched member's index on Verified and 0 otherwise (the tree has no
    member pointer to report).
    """
    view = _QueryView(query, r)
    prefix, complete = view.observe_all()

    node = tree.root
    path_terminals: list[int] = []
    for depth, sym in enumerate(prefix):
        if node.terminal:
            path_terminals.append(node.terminal)
        child = node.children.get(sym)
        if child is None:
            # consumed the mismatching symbol as well
            if complete or not path_terminals:
                return IdOutcome(IdStatus.FALSIFIED, 0, depth + 1, ())
            return IdOutcome(
                IdStatus.UNDETERMINED, 0, depth + 1, tuple(path_terminals)
            )
        node = child

    consumed = len(prefix)
    if complete:
        if node.terminal:
            return IdOutcome(
                IdStatus.VERIFIED, node.terminal, consumed, (node.terminal,)
            )
        below = [t for t in _subtree_terminals(node) if t != node.terminal]
        return IdOutcome(IdStatus.FALSIFIED, 0, consumed, tuple(below))
    in_play = sorted(path_terminals + _subtree_terminals(node))
    if in_play:
        return IdOutcome(
            IdStatus.UNDETERMINED, 0, consumed, tuple(in_play)
        )
    return IdOutcome(IdStatus.FALSIFIED, 0, consumed, ())


def substring_identify(
    hset: SortedHypothesisSet, query: str, start: int, length: int
) -> IdOutcome:
    """Identify a window of the query against the same window of members.

    ``start`` is 1-based.  Members too short to cover the window drop
    out; the surviving windows are deduplicated and sorted, so partial
    indices refer to that derived set, not the original members.
    """
    _check_bits(query, "query")
    if start < 1 or length < 1:
        raise ValueError(
            f"window start {start} and length {length} must be >= 1"
        )
    end = start - 1 + length
    if end > len(query):
        raise ValueError(
            f"window [{start}, {end}] exceeds query length {len(query)}"
        )
    fragment = query[start - 1 : end]
    windows = {
        m[start - 1 : end] for m in hset.members if len(m) >= end
    }
    derived = SortedHypothesisSet(tuple(sorted(windows)))
    return identify_sorted(derived, fragment, 0.0)


def grow_known_set(
    hset: SortedHypothesisSet, query: str
) -> SortedHypothesisSet:
    """Insert a (typically just-falsified) query as a new member.

    Re-inserting an existing member is a no-op, logged rather than
    raised so identification pipelines can call this unconditionally.
    """
    _check_bits(query, "query")
    if not query:
        raise ValueError("cannot insert an empty member")
    pos = bisect.bisect_left(hset.members, query)
    if pos < len(hset.members) and hset.members[pos] == query:
        logger.info("grow_known_set: %r already present, set unchanged", query)
        return hset
    grown = hset.members[:pos] + (query,) + hset.members[pos:]
    return SortedHypothesisSet(grown)


def load_hypothesis_set(lines: Iterable[str]) -> SortedHypothesisSet:
    """Read a hypothesis set from text, one member per line.

    Blank lines and ``#`` comments are skipped.  A leading ``sorted``
    header promises the members are already in order (it is an error if
    they are not); without it the loader sorts for you.
    """
    entries: list[str] = []
    claimed_sorted = False
    first = True
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if first and line.lower() == "sorted":
            claimed_sorted = True
            first = False
            continue
        first = False
        entries.append(line)
    if claimed_sorted:
        return SortedHypothesisSet(tuple(entries))
    return SortedHypothesisSet.from_unsorted(entries)
