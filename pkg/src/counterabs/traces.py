"""Controller traces: safety checking, omega-checking for disjunctive
systems, and the controller product that exposes k user processes.

A trace is the sequence of controller states along a run with adjacent
duplicates removed.  It starts with the initial controller state.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Iterator, Sequence

from .budget import Budget
from .crp import initial_abstract
from .oracle import initial_configurations
from .protocol import (
    AbstractConfiguration,
    Configuration,
    Kind,
    Primitive,
    Protocol,
    SyncGuard,
    Transition,
    validate_protocol,
    ProtocolError,
)
from .semantics import abstract_successors, concrete_successors, config_key
from .tcs import Tcs, to_tcs

SAFETY = "safety"
BUCHI = "buchi"


class SpecError(ValueError):
    pass


class KindError(ValueError):
    """The protocol's primitives do not support the requested check."""


# ---------------------------------------------------------------------------
# specification automata


@dataclass
class SpecAutomaton:
    """Finite automaton over controller states.

    In safety mode it must be deterministic and total, and the accepting
    states must be closed under transitions from accepting states' complement
    (once rejected, always rejected).  In Buchi mode it may be partial and
    nondeterministic.
    """

    states: tuple[Hashable, ...]
    alphabet: frozenset[str]
    delta: dict[tuple[Hashable, str], frozenset]
    initial: frozenset
    accepting: frozenset
    mode: str = SAFETY

    def post(self, state: Hashable, letter: str) -> frozenset:
        return self.delta.get((state, letter), frozenset())

    def run(self, word: Iterable[str]) -> list[frozenset]:
        """Sets of states reached after each prefix of ``word``."""
        cur = frozenset(self.initial)
        out = [cur]
        for letter in word:
            cur = frozenset(s2 for s in cur for s2 in self.post(s, letter))
            out.append(cur)
        return out

    def accepts_finite(self, word: Iterable[str]) -> bool:
        return bool(self.run(word)[-1] & self.accepting)

    def validate(self, alphabet: Iterable[str] | None = None) -> list[str]:
        diags = []
        letters = frozenset(alphabet) if alphabet is not None else self.alphabet
        extra = sorted(self.alphabet - letters)
        if extra:
            diags.append(f"letters {extra} are not controller states")
        if not self.initial:
            diags.append("no initial state")
        if self.mode != SAFETY:
            return diags
        if len(self.initial) != 1:
            diags.append("a safety automaton needs exactly one initial state")
        for s in self.states:
            for a in sorted(letters):
                targets = self.post(s, a)
                if len(targets) != 1:
                    what = "missing" if not targets else "nondeterministic"
                    diags.append(f"{what} transition from {s!r} on {a!r}")
                elif s not in self.accepting and set(targets) & self.accepting:
                    diags.append(f"rejecting state {s!r} leads back to accepting states on {a!r}")
        return diags

    @classmethod
    def universal(cls, letters: Iterable[str]) -> "SpecAutomaton":
        letters = frozenset(letters)
        return cls(("ok",), letters, {("ok", a): frozenset({"ok"}) for a in letters},
                   frozenset({"ok"}), frozenset({"ok"}), SAFETY)

    def to_text(self) -> str:
        lines = []
        if self.alphabet:
            lines.append("alphabet " + " ".join(sorted(self.alphabet)))
        for s in self.states:
            flags = (" init" if s in self.initial else "") + (" accept" if s in self.accepting else "")
            lines.append(f"state {s}{flags}")
        for (s, a), targets in sorted(self.delta.items(), key=lambda kv: (str(kv[0][0]), kv[0][1])):
            for d in sorted(targets, key=str):
                lines.append(f"on {a} {s} -> {d}")
        return "\n".join(lines) + "\n"


def parse_spec(text: str, mode: str = SAFETY) -> SpecAutomaton:
    """Parse the table format::

        alphabet c1 c2          (optional)
        state s0 init accept
        on c1 s0 -> s0
    """
    if mode not in (SAFETY, BUCHI):
        raise SpecError(f"unknown automaton mode {mode!r}")
    states: list[str] = []
    initial, accepting = set(), set()
    delta: dict[tuple[str, str], set[str]] = {}
    alphabet: set[str] | None = None
    letters: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        words = raw.split("#", 1)[0].split()
        if not words:
            continue
        head = words[0]
        if head == "alphabet":
            alphabet = set(words[1:])
        elif head == "state":
            if len(words) < 2:
                raise SpecError(f"line {lineno}: missing state name")
            flags = set(words[2:])
            if flags - {"init", "accept"}:
                raise SpecError(f"line {lineno}: unknown flag(s) {sorted(flags - {'init', 'accept'})}")
            if words[1] in states:
                raise SpecError(f"line {lineno}: duplicate state {words[1]!r}")
            states.append(words[1])
            if "init" in flags:
                initial.add(words[1])
            if "accept" in flags:
                accepting.add(words[1])
        elif head == "on":
            if len(words) != 5 or words[3] != "->":
                raise SpecError(f"line {lineno}: expected 'on <letter> <src> -> <dst>'")
            _, a, s, _, d = words
            letters.add(a)
            delta.setdefault((s, a), set()).add(d)
        else:
            raise SpecError(f"line {lineno}: unknown declaration {head!r}")
    known = set(states)
    for (s, a), ds in delta.items():
        for x in {s} | ds:
            if x not in known:
                raise SpecError(f"transition on {a!r} mentions undeclared state {x!r}")
    if alphabet is not None and letters - alphabet:
        raise SpecError(f"letters {sorted(letters - alphabet)} are not in the declared alphabet")
    return SpecAutomaton(
        tuple(states),
        frozenset(alphabet if alphabet is not None else letters),
        {k: frozenset(v) for k, v in delta.items()},
        frozenset(initial),
        frozenset(accepting),
        mode,
    )


def load_spec(path, mode: str = SAFETY) -> SpecAutomaton:
    with open(path, encoding="utf-8") as fh:
        return parse_spec(fh.read(), mode)


# ---------------------------------------------------------------------------
# traces


def trace_of(run: Sequence[AbstractConfiguration | Configuration]) -> tuple[str, ...]:
    if not run:
        raise ValueError("empty run has no trace")
    word = [run[0].ctrl]
    for cfg in run[1:]:
        if cfg.ctrl != word[-1]:
            word.append(cfg.ctrl)
    return tuple(word)


def _bounded_traces(starts, successors, max_len: int, meter) -> set[tuple[str, ...]]:
    seen = {(c, (c.ctrl,)) for c in starts}
    queue = deque(seen)
    while queue:
        c, w = queue.popleft()
        for d in successors(c):
            if d.ctrl != c.ctrl:
                if len(w) >= max_len:
                    continue
                node = (d, w + (d.ctrl,))
            else:
                node = (d, w)
            if node not in seen:
                seen.add(node)
                queue.append(node)
        meter.check(len(seen))
    return {w for _, w in seen}


def abstract_traces(p: Protocol, max_len: int, budget: Budget | None = None) -> set[tuple[str, ...]]:
    """Traces with at most ``max_len`` letters of runs of the 01-counter system."""
    meter = (budget or Budget.from_env()).meter()
    return _bounded_traces(initial_abstract(p), lambda a: abstract_successors(p, a), max_len, meter)


def concrete_traces(p: Protocol, n: int, max_len: int, budget: Budget | None = None) -> set[tuple[str, ...]]:
    """Traces with at most ``max_len`` letters of runs with ``n`` users."""
    meter = (budget or Budget.from_env()).meter()
    return _bounded_traces(initial_configurations(p, n), lambda c: concrete_successors(p, c), max_len, meter)


# ---------------------------------------------------------------------------
# safety


@dataclass
class Lasso:
    stem: list[AbstractConfiguration]
    loop: list[AbstractConfiguration]
    stem_word: tuple[str, ...]
    loop_word: tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "stem": [a.to_json() for a in self.stem],
            "loop": [a.to_json() for a in self.loop],
            "stem_word": list(self.stem_word),
            "loop_word": list(self.loop_word),
        }


@dataclass
class TraceCheckResult:
    holds: bool
    counterexample: tuple[str, ...] | Lasso | None = None
    run: list[AbstractConfiguration] = field(default_factory=list)
    states: int = 0

    def to_json(self) -> dict:
        cex = self.counterexample
        if isinstance(cex, Lasso):
            cex_json = cex.to_json()
        else:
            cex_json = list(cex) if cex is not None else None
        return {
            "holds": self.holds,
            "counterexample": cex_json,
            "witness": [a.to_json() for a in self.run],
            "stats": {"states": self.states},
        }


def check_safety(p: Protocol, spec: SpecAutomaton, budget: Budget | None = None) -> TraceCheckResult:
    """Whether every trace of the parameterized system is accepted.

    The automaton reads the initial controller state first and afterwards
    one letter per change of controller state.
    """
    if spec.mode != SAFETY:
        raise SpecError("check_safety needs a safety automaton")
    diags = spec.validate(p.controller_states)
    if diags:
        raise SpecError("; ".join(diags))
    meter = (budget or Budget.from_env()).meter()
    (s0,) = spec.initial
    parent: dict[tuple, tuple | None] = {}
    queue: deque[tuple] = deque()
    bad = None
    for a in sorted(initial_abstract(p), key=config_key):
        (s,) = spec.post(s0, a.ctrl)
        node = (a, s)
        if node not in parent:
            parent[node] = None
            queue.append(node)
            if s not in spec.accepting and bad is None:
                bad = node
    while queue and bad is None:
        a, s = queue.popleft()
        for b in sorted(abstract_successors(p, a), key=config_key):
            s2 = next(iter(spec.post(s, b.ctrl))) if b.ctrl != a.ctrl else s
            node = (b, s2)
            if node in parent:
                continue
            parent[node] = (a, s)
            if s2 not in spec.accepting:
                bad = node
                break
            queue.append(node)
        meter.check(len(parent))
    if bad is None:
        return TraceCheckResult(True, states=len(parent))
    path = [bad]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    run = [a for a, _ in reversed(path)]
    return TraceCheckResult(False, trace_of(run), run, len(parent))


# ---------------------------------------------------------------------------
# omega traces of disjunctive systems

_DISJUNCTIVE_ONLY = frozenset({Primitive.DISJUNCTIVE, Primitive.INTERNAL})


def _require_disjunctive(p: Protocol) -> None:
    extra = p.kind_profile - _DISJUNCTIVE_ONLY
    if extra:
        names = ", ".join(sorted(k.value for k in extra))
        raise KindError(
            f"omega-trace checking needs a disjunctive protocol; {p.name!r} uses {names} steps, "
            "for which the abstraction may admit spurious infinite runs"
        )


def monotone_successors(p: Protocol, a: AbstractConfiguration) -> set[AbstractConfiguration]:
    """Abstract successors that keep every occupied state occupied."""
    _require_disjunctive(p)
    return {b for b in abstract_successors(p, a) if a.occupied <= b.occupied}


def check_omega(p: Protocol, negation: SpecAutomaton, budget: Budget | None = None) -> TraceCheckResult:
    """Whether no infinite trace of ``p`` is accepted by ``negation``.

    ``negation`` is a Buchi automaton for the complement of the property.
    Infinite traces come from runs that change the controller state
    infinitely often.  On failure the counterexample is a lasso of the
    monotone 01-counter system.
    """
    _require_disjunctive(p)
    if negation.mode != BUCHI:
        raise SpecError("check_omega needs a Buchi automaton")
    diags = negation.validate(p.controller_states)
    if diags:
        raise SpecError("; ".join(diags))
    meter = (budget or Budget.from_env()).meter()
    succ_cache: dict[AbstractConfiguration, list[AbstractConfiguration]] = {}

    def successors(node):
        a, s, _ = node
        if a not in succ_cache:
            succ_cache[a] = sorted(monotone_successors(p, a), key=config_key)
        for b in succ_cache[a]:
            if b.ctrl != a.ctrl:
                for s2 in sorted(negation.post(s, b.ctrl), key=str):
                    yield (b, s2, True)
            else:
                yield (b, s, False)

    def accepting(node) -> bool:
        return node[2] and node[1] in negation.accepting

    inits = []
    for a in sorted(initial_abstract(p), key=config_key):
        for s0 in sorted(negation.initial, key=str):
            for s in sorted(negation.post(s0, a.ctrl), key=str):
                inits.append((a, s, True))

    lasso = _nested_dfs(inits, successors, accepting, meter)
    if lasso is None:
        return TraceCheckResult(True, states=len(succ_cache))
    stem_nodes, loop_nodes = lasso
    stem = [n[0] for n in stem_nodes]
    loop = [n[0] for n in loop_nodes]
    loop_word = []
    prev = stem[-1]
    for b in loop[1:] + [loop[0]]:
        if b.ctrl != prev.ctrl:
            loop_word.append(b.ctrl)
        prev = b
    return TraceCheckResult(False, Lasso(stem, loop, trace_of(stem), tuple(loop_word)), stem + loop[1:],
                            len(succ_cache))


def _nested_dfs(inits, successors, accepting, meter):
    """Iterative nested depth-first search for an accepting lasso.

    Returns (stem, loop) where stem ends in the accepting seed and loop
    starts at the seed and returns to it, or None.
    """
    outer_seen: set = set()
    inner_seen: set = set()
    for root in inits:
        if root in outer_seen:
            continue
        outer_seen.add(root)
        stack: list[tuple[object, Iterator]] = [(root, iter(successors(root)))]
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is not None:
                if nxt not in outer_seen:
                    outer_seen.add(nxt)
                    stack.append((nxt, iter(successors(nxt))))
                    meter.check(len(outer_seen) + len(inner_seen))
                continue
            stack.pop()
            if not accepting(node):
                continue
            loop = _inner_dfs(node, successors, inner_seen, meter)
            if loop is not None:
                return [n for n, _ in stack] + [node], loop
    return None


def _inner_dfs(seed, successors, inner_seen: set, meter):
    stack: list[tuple[object, Iterator]] = [(seed, iter(successors(seed)))]
    while stack:
        node, it = stack[-1]
        nxt = next(it, None)
        if nxt is None:
            stack.pop()
            continue
        if nxt == seed:
            return [n for n, _ in stack]
        if nxt not in inner_seen:
            inner_seen.add(nxt)
            stack.append((nxt, iter(successors(nxt))))
            meter.check(len(inner_seen))
    return None


# ---------------------------------------------------------------------------
# Buchi automaton of the monotone abstract system

BOTTOM = "⊥"


def build_buchi(system: Protocol | Tcs) -> tuple[SpecAutomaton, dict[str, object]]:
    """Buchi automaton over minimal-step labels recognizing the monotone
    runs of the 01-counter system of a controller-free disjunctive system.

    States are occupied sets plus the sink BOTTOM; every state except the
    sink accepts.  Returns the automaton and a map from letters to minimal
    steps.
    """
    if isinstance(system, Protocol):
        _require_disjunctive(system)
        system = to_tcs(system)
    labels = {f"d{i}": D for i, D in enumerate(system.dmin)}
    starts = [frozenset(s) for r in range(len(system.initial_users) + 1)
              for s in itertools.combinations(sorted(system.initial_users), r)]
    seen = set(starts)
    order = list(starts)
    delta: dict[tuple[Hashable, str], frozenset] = {}
    i = 0
    while i < len(order):
        a = order[i]
        i += 1
        for letter, D in labels.items():
            if D.pre_support <= a:
                b = a | D.post_support
                delta[(a, letter)] = frozenset({b})
                if b not in seen:
                    seen.add(b)
                    order.append(b)
            else:
                delta[(a, letter)] = frozenset({BOTTOM})
    for letter in labels:
        delta[(BOTTOM, letter)] = frozenset({BOTTOM})
    automaton = SpecAutomaton(
        tuple(order) + (BOTTOM,),
        frozenset(labels),
        delta,
        frozenset(starts),
        frozenset(order),
        BUCHI,
    )
    return automaton, labels


# ---------------------------------------------------------------------------
# controller product


def _name(c: str, tracked: Sequence[str]) -> str:
    return ".".join((c,) + tuple(tracked))


def _moves_by_subset(tracked: tuple[str, ...], src: str, dst: str) -> Iterator[tuple[str, ...]]:
    """All tracked vectors obtained by moving a non-empty subset of the
    tracked processes in ``src`` to ``dst``."""
    idx = [i for i, q in enumerate(tracked) if q == src]
    for r in range(1, len(idx) + 1):
        for chosen in itertools.combinations(idx, r):
            v = list(tracked)
            for i in chosen:
                v[i] = dst
            yield tuple(v)


def _choices(options: list[list[str]]) -> Iterator[tuple[str, ...]]:
    return itertools.product(*options)


def controller_product(p: Protocol, k: int, tracked_init: Sequence[str] | None = None,
                       max_states: int = 100_000) -> Protocol:
    """Protocol whose controller simulates the original controller plus
    ``k`` distinguished user processes.

    Controller states are named ``c.q1...qk``.  The tracked processes start
    in ``tracked_init`` (default: the first initial user state for each);
    use one product per choice to cover all initial placements.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    Q, C = p.user_states, p.controller_states
    size = len(C) * len(Q) ** k
    if size > max_states:
        raise ValueError(f"product would have {size} controller states (limit {max_states})")
    if tracked_init is None:
        first = next(q for q in Q if q in p.initial_users)
        tracked_init = (first,) * k
    tracked_init = tuple(tracked_init)
    if len(tracked_init) != k or any(q not in p.initial_users for q in tracked_init):
        raise ValueError("tracked_init must list k initial user states")

    vectors = list(itertools.product(Q, repeat=k))
    states = [(c, v) for c in C for v in vectors]
    names = {s: _name(*s) for s in states}
    if len(set(names.values())) != len(names) or set(names.values()) & set(Q):
        raise ValueError("state names collide in the product; rename states without '.'")

    out: list[Transition] = []
    user_moves = [t for t in p.transitions if not p.is_controller(t.src)]
    ctrl_moves = [t for t in p.transitions if p.is_controller(t.src)]

    # user processes that are not tracked keep their transitions
    for t in user_moves:
        if t.kind is Kind.DISJUNCTIVE:
            out.append(Transition(Kind.DISJUNCTIVE, t.src, t.dst, None, _lift_guard(t.guard, p, states, names)))
        else:
            out.append(t)

    for c, v in states:
        here = names[(c, v)]
        # controller internal / disjunctive moves
        for t in ctrl_moves:
            if t.src != c:
                continue
            if t.kind is Kind.INTERNAL:
                out.append(Transition(Kind.INTERNAL, here, names[(t.dst, v)]))
            elif t.kind is Kind.DISJUNCTIVE:
                out.append(Transition(Kind.DISJUNCTIVE, here, names[(t.dst, v)], None,
                                      _lift_guard(t.guard, p, states, names)))
        # tracked internal / disjunctive / ASM moves
        for t in user_moves:
            for v2 in _moves_by_subset(v, t.src, t.dst):
                if t.kind is Kind.INTERNAL:
                    out.append(Transition(Kind.INTERNAL, here, names[(c, v2)]))
                elif t.kind is Kind.DISJUNCTIVE:
                    out.append(Transition(Kind.DISJUNCTIVE, here, names[(c, v2)], None,
                                          _lift_guard(t.guard, p, states, names)))
                elif t.kind is Kind.WRITE:
                    out.append(Transition(Kind.INTERNAL, here, names[(t.label, v2)]))
                elif t.kind is Kind.READ and c == t.label:
                    out.append(Transition(Kind.INTERNAL, here, names[(c, v2)]))
        out.extend(_product_lossy(p, c, v, names))
        out.extend(_product_sync(p, c, v, names))

    guards = {}
    for label, g in p.sync_guards.items():
        guards[label] = SyncGuard(
            frozenset(g.exists & p.user_set)
            | {names[(c, v)] for c, v in states if c in g.exists or any(q in g.exists for q in v)},
            frozenset(g.forall & p.user_set)
            | {names[(c, v)] for c, v in states if c in g.forall and all(q in g.forall for q in v)},
        )
    frames = {}
    if Primitive.ASM in p.kind_profile:
        frames = {names[(c, v)]: (c, v) for c, v in states}

    prod = Protocol(
        name=f"{p.name}_x{k}",
        controller_states=tuple(names[s] for s in states),
        user_states=Q,
        initial_controller=names[(p.initial_controller, tracked_init)],
        initial_users=p.initial_users,
        transitions=tuple(dict.fromkeys(out)),
        sync_guards=guards,
        declared_kind=p.declared_kind,
        frames=frames,
    )
    diags = validate_protocol(prod)
    if diags:
        raise ProtocolError(diags)
    return prod


def _lift_guard(guard: frozenset[str], p: Protocol, states, names) -> frozenset[str]:
    lifted = set(guard & p.user_set)
    for c, v in states:
        if c in guard or any(q in guard for q in v):
            lifted.add(names[(c, v)])
    return frozenset(lifted)


def _receive_options(p: Protocol, m: str, state: str) -> list[str]:
    return [state] + sorted({t.dst for t in p.of_kind(Kind.RECEIVE) if t.label == m and t.src == state})


def _product_lossy(p: Protocol, c: str, v: tuple[str, ...], names) -> Iterator[Transition]:
    here = names[(c, v)]
    for m in p.messages:
        ctrl_opts = _receive_options(p, m, c)
        # the controller sends; tracked processes stay or receive
        for t in p.of_kind(Kind.BROADCAST):
            if t.label != m or t.src != c:
                continue
            for v2 in _choices([_receive_options(p, m, q) for q in v]):
                yield Transition(Kind.BROADCAST, here, names[(t.dst, v2)], m)
        # some tracked processes send; the rest and the controller stay or receive
        for t in p.of_kind(Kind.BROADCAST):
            if t.label != m or p.is_controller(t.src):
                continue
            idx = [i for i, q in enumerate(v) if q == t.src]
            for r in range(1, len(idx) + 1):
                for senders in itertools.combinations(idx, r):
                    opts = [[t.dst] if i in senders else _receive_options(p, m, q) for i, q in enumerate(v)]
                    for c2 in ctrl_opts:
                        for v2 in _choices(opts):
                            yield Transition(Kind.BROADCAST, here, names[(c2, v2)], m)
        # an untracked user sends; the controller and tracked processes receive
        for c2 in ctrl_opts:
            for v2 in _choices([_receive_options(p, m, q) for q in v]):
                if (c2, v2) != (c, v):
                    yield Transition(Kind.RECEIVE, here, names[(c2, v2)], m)


def _product_sync(p: Protocol, c: str, v: tuple[str, ...], names) -> Iterator[Transition]:
    here = names[(c, v)]
    for label in p.sync_labels:
        def opts(state: str) -> list[str]:
            return sorted({t.dst for t in p.of_kind(Kind.SYNC) if t.label == label and t.src == state})

        ctrl = opts(c)
        tracked = [opts(q) for q in v]
        if not ctrl and not any(tracked):
            # only untracked users can move; they keep their own transitions
            continue
        for c2 in ctrl or [c]:
            for v2 in _choices([o or [q] for o, q in zip(tracked, v)]):
                yield Transition(Kind.SYNC, here, names[(c2, v2)], label)


def project_trace(word: Sequence[str], prod: Protocol) -> tuple[str, ...]:
    """Controller trace of the original protocol inside a product trace."""
    base = [name.split(".", 1)[0] for name in word]
    out = [base[0]]
    for b in base[1:]:
        if b != out[-1]:
            out.append(b)
    return tuple(out)
