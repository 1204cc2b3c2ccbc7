"""Regular-expression output grammars compiled to token-level masks.

A pattern is parsed into a Thompson NFA, determinised by subset
construction, and pruned to states from which an accepting state is still
reachable.  Indexing a vocabulary folds every token through the automaton
once per state, so a decoder only has to look up a boolean mask at each
step.

Supported syntax: literals, ``.``, ``[...]`` classes (ranges, negation),
``\\d \\w \\s`` and their negations, escapes, grouping ``( )`` / ``(?: )``,
alternation and the quantifiers ``* + ? {m} {m,} {m,n}``.  Classes are ASCII.
Matching is always anchored at both ends.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

ANSWER_PATTERN = r"((Data [0-9]+(, [0-9]+)* are abnormal\.)|(All data are normal\.))"

_DIGITS = frozenset("0123456789")
_WORD = frozenset("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_")
_SPACE = frozenset(" \t\n\r\f\v")
_SIMPLE_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "f": "\f", "v": "\v"}
_MAX_REPEAT = 1000


class PatternError(ValueError):
    """Malformed or unsupported pattern."""


class ConstraintError(RuntimeError):
    """The decoder was driven outside the grammar."""


class StuckError(ConstraintError):
    """No vocabulary token can extend the output from a non-accepting state."""


@dataclass(frozen=True)
class CharSet:
    chars: frozenset
    negated: bool = False

    def __contains__(self, ch: str) -> bool:
        return (ch in self.chars) != self.negated


# ---------------------------------------------------------------------------
# parsing to an AST of tuples
#   ("set", CharSet) | ("cat", [nodes]) | ("alt", [nodes]) | ("rep", node, lo, hi|None)
# ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, pattern: str):
        self.src = pattern
        self.pos = 0

    def error(self, msg: str) -> PatternError:
        return PatternError(f"{msg} at position {self.pos} in {self.src!r}")

    def peek(self) -> Optional[str]:
        return self.src[self.pos] if self.pos < len(self.src) else None

    def take(self) -> str:
        if self.pos >= len(self.src):
            raise self.error("unexpected end of pattern")
        ch = self.src[self.pos]
        self.pos += 1
        return ch

    def parse(self):
        node = self.alternation()
        if self.pos != len(self.src):
            raise self.error(f"unexpected {self.src[self.pos]!r}")
        return node

    def alternation(self):
        branches = [self.concat()]
        while self.peek() == "|":
            self.take()
            branches.append(self.concat())
        return branches[0] if len(branches) == 1 else ("alt", branches)

    def concat(self):
        items = []
        while self.peek() is not None and self.peek() not in "|)":
            items.append(self.repeat())
        return ("cat", items)

    def repeat(self):
        node = self.atom()
        while True:
            ch = self.peek()
            if ch == "*":
                self.take()
                node = ("rep", node, 0, None)
            elif ch == "+":
                self.take()
                node = ("rep", node, 1, None)
            elif ch == "?":
                self.take()
                node = ("rep", node, 0, 1)
            elif ch == "{" and self._looks_like_bounds():
                lo, hi = self.bounds()
                node = ("rep", node, lo, hi)
            else:
                return node
            if self.peek() == "?":
                # lazy quantifiers accept the same language
                self.take()

    def _looks_like_bounds(self) -> bool:
        end = self.src.find("}", self.pos)
        if end < 0:
            return False
        body = self.src[self.pos + 1:end]
        lo, _, hi = body.partition(",")
        return lo.isdigit() and (hi == "" or hi.isdigit())

    def bounds(self):
        self.take()
        end = self.src.index("}", self.pos)
        body = self.src[self.pos:end]
        self.pos = end + 1
        if "," in body:
            lo_s, hi_s = body.split(",", 1)
            lo, hi = int(lo_s), (int(hi_s) if hi_s else None)
        else:
            lo = hi = int(body)
        if hi is not None and hi < lo:
            raise self.error(f"bad repeat bounds {{{body}}}")
        if max(lo, hi or 0) > _MAX_REPEAT:
            raise self.error("repeat bound too large")
        return lo, hi

    def atom(self):
        ch = self.take()
        if ch == "(":
            if self.src.startswith("?:", self.pos):
                self.pos += 2
            elif self.peek() == "?":
                raise self.error("lookaround and group flags are not supported")
            node = self.alternation()
            if self.peek() != ")":
                raise self.error("missing )")
            self.take()
            return node
        if ch == ")":
            raise self.error("unbalanced )")
        if ch in "*+?":
            raise self.error(f"nothing to repeat before {ch!r}")
        if ch == "[":
            return ("set", self.char_class())
        if ch == ".":
            return ("set", CharSet(frozenset("\n"), negated=True))
        if ch in "^$":
            raise self.error("anchors are implicit; remove ^/$")
        if ch == "\\":
            return ("set", self.escape())
        return ("set", CharSet(frozenset(ch)))

    def escape(self) -> CharSet:
        ch = self.take()
        if ch == "d":
            return CharSet(_DIGITS)
        if ch == "D":
            return CharSet(_DIGITS, negated=True)
        if ch == "w":
            return CharSet(_WORD)
        if ch == "W":
            return CharSet(_WORD, negated=True)
        if ch == "s":
            return CharSet(_SPACE)
        if ch == "S":
            return CharSet(_SPACE, negated=True)
        if ch in _SIMPLE_ESCAPES:
            return CharSet(frozenset(_SIMPLE_ESCAPES[ch]))
        if ch.isalnum():
            raise self.error(f"unsupported escape \\{ch}")
        return CharSet(frozenset(ch))

    def char_class(self) -> CharSet:
        negated = False
        if self.peek() == "^":
            self.take()
            negated = True
        chars: set[str] = set()
        first = True
        while True:
            ch = self.take()
            if ch == "]" and not first:
                break
            first = False
            if ch == "\\":
                esc = self.escape()
                if esc.negated:
                    raise self.error("negated shorthand inside a class is not supported")
                chars |= esc.chars
                continue
            if self.peek() == "-" and self.pos + 1 < len(self.src) and self.src[self.pos + 1] != "]":
                self.take()
                hi = self.take()
                if hi == "\\":
                    hi_set = self.escape()
                    if len(hi_set.chars) != 1 or hi_set.negated:
                        raise self.error("bad range end")
                    (hi,) = hi_set.chars
                if ord(hi) < ord(ch):
                    raise self.error(f"bad range {ch}-{hi}")
                chars.update(chr(c) for c in range(ord(ch), ord(hi) + 1))
            else:
                chars.add(ch)
        return CharSet(frozenset(chars), negated)


# ---------------------------------------------------------------------------
# Thompson construction
# ---------------------------------------------------------------------------


class _NFA:
    def __init__(self):
        self.eps: list[list[int]] = []
        self.edges: list[list[tuple[CharSet, int]]] = []

    def new_state(self) -> int:
        self.eps.append([])
        self.edges.append([])
        return len(self.eps) - 1

    def build(self, node) -> tuple[int, int]:
        kind = node[0]
        if kind == "set":
            s, e = self.new_state(), self.new_state()
            self.edges[s].append((node[1], e))
            return s, e
        if kind == "cat":
            s = e = self.new_state()
            for item in node[1]:
                i_s, i_e = self.build(item)
                self.eps[e].append(i_s)
                e = i_e
            return s, e
        if kind == "alt":
            s, e = self.new_state(), self.new_state()
            for branch in node[1]:
                b_s, b_e = self.build(branch)
                self.eps[s].append(b_s)
                self.eps[b_e].append(e)
            return s, e
        if kind == "rep":
            _, child, lo, hi = node
            s = e = self.new_state()
            for _ in range(lo):
                c_s, c_e = self.build(child)
                self.eps[e].append(c_s)
                e = c_e
            if hi is None:
                c_s, c_e = self.build(child)
                loop_end = self.new_state()
                self.eps[e].extend([c_s, loop_end])
                self.eps[c_e].extend([c_s, loop_end])
                e = loop_end
            else:
                tail = self.new_state()
                for _ in range(hi - lo):
                    c_s, c_e = self.build(child)
                    self.eps[e].extend([c_s, tail])
                    e = c_e
                self.eps[e].append(tail)
                e = tail
            return s, e
        raise AssertionError(kind)

    def closure(self, states) -> frozenset:
        stack = list(states)
        seen = set(states)
        while stack:
            st = stack.pop()
            for nxt in self.eps[st]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return frozenset(seen)


_OTHER = None  # symbol key for "any character not mentioned in the pattern"


@dataclass(frozen=True, eq=False)
class PatternAutomaton:
    """Deterministic automaton for an anchored pattern.

    ``transitions[state]`` maps explicit characters to successor states;
    ``fallback[state]`` (when present) is taken by every character the
    pattern never mentions, which is how ``.`` and negated classes stay finite.
    Only live states are kept: from each one an accepting state is reachable.
    """

    pattern_source: str
    start: int
    accepting: frozenset
    transitions: tuple  # tuple[dict[str, int], ...]
    fallback: tuple  # tuple[int | None, ...]
    alphabet: frozenset

    @property
    def states(self) -> range:
        return range(len(self.transitions))

    @property
    def n_states(self) -> int:
        return len(self.transitions)

    @property
    def char_transitions(self) -> dict:
        return {
            (s, ch): t for s, row in enumerate(self.transitions) for ch, t in row.items()
        }

    def step(self, state: int, ch: str) -> Optional[int]:
        row = self.transitions[state]
        if ch in row:
            return row[ch]
        if ch in self.alphabet:
            return None
        return self.fallback[state]

    def walk(self, state: int, text: str) -> Optional[int]:
        for ch in text:
            state = self.step(state, ch)
            if state is None:
                return None
        return state

    def is_accepting(self, state: int) -> bool:
        return state in self.accepting

    def matches(self, text: str) -> bool:
        end = self.walk(self.start, text)
        return end is not None and end in self.accepting


def compile_pattern(pattern: str) -> PatternAutomaton:
    ast = _Parser(pattern).parse()
    nfa = _NFA()
    n_start, n_final = nfa.build(ast)

    alphabet: set[str] = set()
    has_negated = False
    for edges in nfa.edges:
        for cs, _ in edges:
            alphabet |= cs.chars
            has_negated |= cs.negated
    symbols: list = sorted(alphabet)
    if has_negated:
        symbols.append(_OTHER)

    def moves(subset: frozenset, sym) -> frozenset:
        out = set()
        for st in subset:
            for cs, nxt in nfa.edges[st]:
                hit = cs.negated if sym is _OTHER else sym in cs
                if hit:
                    out.add(nxt)
        return nfa.closure(out) if out else frozenset()

    start_set = nfa.closure([n_start])
    ids = {start_set: 0}
    order = [start_set]
    raw: list[dict] = []
    i = 0
    while i < len(order):
        subset = order[i]
        row = {}
        for sym in symbols:
            target = moves(subset, sym)
            if not target:
                continue
            if target not in ids:
                ids[target] = len(order)
                order.append(target)
            row[sym] = ids[target]
        raw.append(row)
        i += 1
    accept_raw = {ids[s] for s in order if n_final in s}

    # keep states that can still reach acceptance
    reverse: dict[int, set[int]] = {}
    for src, row in enumerate(raw):
        for dst in row.values():
            reverse.setdefault(dst, set()).add(src)
    live = set(accept_raw)
    stack = list(accept_raw)
    while stack:
        st = stack.pop()
        for src in reverse.get(st, ()):
            if src not in live:
                live.add(src)
                stack.append(src)

    if 0 not in live:
        # empty language: one non-accepting state with no exits
        return PatternAutomaton(pattern, 0, frozenset(), ({},), (None,), frozenset(alphabet))

    # renumber in BFS order from the start state
    renum = {0: 0}
    queue = [0]
    while queue:
        st = queue.pop(0)
        for sym in symbols:
            dst = raw[st].get(sym)
            if dst is not None and dst in live and dst not in renum:
                renum[dst] = len(renum)
                queue.append(dst)
    transitions = [dict() for _ in renum]
    fallback: list[Optional[int]] = [None] * len(renum)
    for old, new in renum.items():
        for sym, dst in raw[old].items():
            if dst not in live:
                continue
            if sym is _OTHER:
                fallback[new] = renum[dst]
            else:
                transitions[new][sym] = renum[dst]
    return PatternAutomaton(
        pattern_source=pattern,
        start=0,
        accepting=frozenset(renum[s] for s in accept_raw if s in renum),
        transitions=tuple(transitions),
        fallback=tuple(fallback),
        alphabet=frozenset(alphabet),
    )


# ---------------------------------------------------------------------------
# vocabulary indexing and constrained generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TokenMaskIndex:
    automaton: PatternAutomaton
    vocabulary: tuple
    token_transitions: dict  # (state, token_id) -> state
    _masks: tuple = field(repr=False, default=())

    def next_state(self, state: int, token_id: int) -> Optional[int]:
        return self.token_transitions.get((state, token_id))


def index_vocabulary(automaton: PatternAutomaton, vocabulary: Sequence[str]) -> TokenMaskIndex:
    vocab = tuple(vocabulary)
    if not vocab:
        raise ValueError("vocabulary is empty")
    if any(not isinstance(tok, str) or tok == "" for tok in vocab):
        raise ValueError("vocabulary tokens must be non-empty strings")
    table: dict[tuple[int, int], int] = {}
    masks = []
    for state in automaton.states:
        mask = np.zeros(len(vocab), dtype=bool)
        for tid, tok in enumerate(vocab):
            end = automaton.walk(state, tok)
            if end is not None:
                table[(state, tid)] = end
                mask[tid] = True
        mask.setflags(write=False)
        masks.append(mask)
    return TokenMaskIndex(automaton, vocab, table, tuple(masks))


def allowed_tokens(index: TokenMaskIndex, state: int) -> np.ndarray:
    if not isinstance(state, (int, np.integer)) or not 0 <= state < len(index._masks):
        raise KeyError(f"unknown automaton state {state!r}")
    return index._masks[int(state)]


Chooser = Callable[[int, np.ndarray], Optional[int]]


def constrained_generate(index: TokenMaskIndex, chooser: Chooser, max_tokens: int = 256) -> str:
    """Drive ``chooser`` through the grammar and return the emitted text.

    ``chooser(state, mask)`` returns a token id allowed by ``mask``, or
    ``None`` to stop; stopping is only legal in an accepting state.
    Generation also stops at an accepting state with an empty mask, or
    after ``max_tokens`` tokens (the text may then be an unfinished prefix).
    """
    if max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    automaton = index.automaton
    state = automaton.start
    pieces: list[str] = []
    for step in range(max_tokens):
        mask = allowed_tokens(index, state)
        accepting = automaton.is_accepting(state)
        if not mask.any():
            if accepting:
                break
            raise StuckError(
                f"no token fits at step {step + 1} (state {state}); "
                "the vocabulary cannot realise the pattern from here"
            )
        choice = chooser(state, mask)
        if choice is None:
            if accepting:
                break
            raise ConstraintError(f"chooser stopped in non-accepting state {state}")
        choice = int(choice)
        if not 0 <= choice < len(mask) or not mask[choice]:
            raise ConstraintError(f"token {choice} is masked out in state {state}")
        state = index.token_transitions[(state, choice)]
        pieces.append(index.vocabulary[choice])
    return "".join(pieces)


def replay_chooser(index: TokenMaskIndex, token_ids: Sequence[int]) -> Chooser:
    """A chooser that emits ``token_ids`` in order and then stops."""
    remaining = list(token_ids)

    def choose(state, mask):
        return remaining.pop(0) if remaining else None

    return choose


def random_chooser(
    index: TokenMaskIndex, rng: np.random.Generator, stop_prob: float = 0.3
) -> Chooser:
    """Uniform over allowed tokens; stops with ``stop_prob`` when stopping is legal."""
    automaton = index.automaton

    def choose(state, mask):
        if automaton.is_accepting(state) and rng.random() < stop_prob:
            return None
        return int(rng.choice(np.flatnonzero(mask)))

    return choose
