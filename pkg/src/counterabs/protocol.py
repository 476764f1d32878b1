"""Protocols, configurations and the line-oriented protocol DSL.

A protocol describes one controller and arbitrarily many identical user
processes.  Concrete configurations count how many users sit in each user
state; abstract configurations only record which user states are occupied.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Mapping, Sequence


class Kind(str, Enum):
    """Syntactic kind of a single local transition."""

    INTERNAL = "internal"
    BROADCAST = "broadcast"
    RECEIVE = "receive"
    DISJUNCTIVE = "disj"
    SYNC = "sync"
    WRITE = "write"
    READ = "read"


class Primitive(str, Enum):
    """Communication primitive inducing a class of steps."""

    INTERNAL = "internal"
    LOSSY = "lossy"
    DISJUNCTIVE = "disj"
    SYNC = "sync"
    GUARDED_SYNC = "gsync"
    ASM = "asm"


DECLARED_KINDS = ("internal", "lossy", "disj", "sync", "gsync", "asm", "mixed")


@dataclass(frozen=True)
class Transition:
    """A local transition ``src -> dst``.

    ``label`` holds the message (broadcast/receive), the synchronization
    label, or the shared-variable value (ASM read/write).  ``guard`` is the
    existential guard of a disjunctive transition.
    """

    kind: Kind
    src: str
    dst: str
    label: str | None = None
    guard: frozenset[str] = frozenset()

    def __str__(self) -> str:
        return f"{self.src} {_edge_text(self)} {self.dst}"


def _edge_text(t: Transition) -> str:
    if t.kind is Kind.INTERNAL:
        return "->"
    if t.kind is Kind.BROADCAST:
        return f"!{t.label}"
    if t.kind is Kind.RECEIVE:
        return f"?{t.label}"
    if t.kind is Kind.DISJUNCTIVE:
        return "[" + ",".join(sorted(t.guard)) + "]"
    if t.kind is Kind.SYNC:
        return f"@{t.label}"
    if t.kind is Kind.WRITE:
        return f"w({t.label})"
    return f"r({t.label})"


@dataclass(frozen=True)
class SyncGuard:
    """Support conditions of a guarded synchronization label."""

    exists: frozenset[str]
    forall: frozenset[str]


@dataclass(frozen=True)
class Configuration:
    """Concrete configuration: controller state and user counts.

    ``counts`` is indexed like ``Protocol.user_states``.
    """

    ctrl: str
    counts: tuple[int, ...]

    @property
    def size(self) -> int:
        return 1 + sum(self.counts)

    def __str__(self) -> str:
        return f"({self.ctrl},({','.join(map(str, self.counts))}))"


@dataclass(frozen=True)
class AbstractConfiguration:
    """Configuration of the 01-counter system."""

    ctrl: str
    occupied: frozenset[str]

    def __str__(self) -> str:
        return f"({self.ctrl},{{{','.join(sorted(self.occupied))}}})"

    def to_json(self) -> dict:
        return {"ctrl": self.ctrl, "occupied": sorted(self.occupied)}


@dataclass(frozen=True)
class Protocol:
    name: str
    controller_states: tuple[str, ...]
    user_states: tuple[str, ...]
    initial_controller: str
    initial_users: frozenset[str]
    transitions: tuple[Transition, ...]
    sync_guards: Mapping[str, SyncGuard] = field(default_factory=dict)
    declared_kind: str = "mixed"
    # product controllers: state -> (base controller state, tracked user states)
    frames: Mapping[str, tuple[str, tuple[str, ...]]] = field(default_factory=dict)

    __hash__ = object.__hash__

    @cached_property
    def user_index(self) -> dict[str, int]:
        return {q: i for i, q in enumerate(self.user_states)}

    @cached_property
    def controller_set(self) -> frozenset[str]:
        return frozenset(self.controller_states)

    @cached_property
    def user_set(self) -> frozenset[str]:
        return frozenset(self.user_states)

    def is_controller(self, state: str) -> bool:
        return state in self.controller_set

    @cached_property
    def kind_profile(self) -> frozenset[Primitive]:
        kinds = set()
        for t in self.transitions:
            if t.kind is Kind.INTERNAL:
                kinds.add(Primitive.INTERNAL)
            elif t.kind in (Kind.BROADCAST, Kind.RECEIVE):
                kinds.add(Primitive.LOSSY)
            elif t.kind is Kind.DISJUNCTIVE:
                kinds.add(Primitive.DISJUNCTIVE)
            elif t.kind is Kind.SYNC:
                kinds.add(Primitive.GUARDED_SYNC if t.label in self.sync_guards else Primitive.SYNC)
            else:
                kinds.add(Primitive.ASM)
        return frozenset(kinds)

    def of_kind(self, *kinds: Kind) -> list[Transition]:
        return [t for t in self.transitions if t.kind in kinds]

    @cached_property
    def messages(self) -> tuple[str, ...]:
        return tuple(sorted({t.label for t in self.of_kind(Kind.BROADCAST, Kind.RECEIVE)}))

    @cached_property
    def sync_labels(self) -> tuple[str, ...]:
        return tuple(sorted({t.label for t in self.of_kind(Kind.SYNC)}))

    @cached_property
    def has_controller_transitions(self) -> bool:
        return any(self.is_controller(t.src) for t in self.transitions)

    # -- configurations -------------------------------------------------

    def configuration(self, ctrl: str, counts: Mapping[str, int] | Sequence[int] = ()) -> Configuration:
        """Build a configuration from a state->count map or a count vector."""
        if isinstance(counts, Mapping):
            vec = [0] * len(self.user_states)
            for q, k in counts.items():
                vec[self.user_index[q]] = k
            return Configuration(ctrl, tuple(vec))
        vec = tuple(counts) or (0,) * len(self.user_states)
        if len(vec) != len(self.user_states):
            raise ValueError(f"expected {len(self.user_states)} counts, got {len(vec)}")
        return Configuration(ctrl, tuple(vec))

    def abstract(self, ctrl: str, occupied: Iterable[str] = ()) -> AbstractConfiguration:
        return AbstractConfiguration(ctrl, frozenset(occupied))

    def alpha(self, cfg: Configuration) -> AbstractConfiguration:
        return AbstractConfiguration(
            cfg.ctrl, frozenset(q for q, k in zip(self.user_states, cfg.counts) if k)
        )

    def embed(self, a: AbstractConfiguration) -> Configuration:
        """Smallest concrete configuration with the given support."""
        return Configuration(a.ctrl, tuple(int(q in a.occupied) for q in self.user_states))

    def support(self, cfg: Configuration) -> frozenset[str]:
        return frozenset(q for q, k in zip(self.user_states, cfg.counts) if k)

    def counts_of(self, cfg: Configuration) -> dict[str, int]:
        return dict(zip(self.user_states, cfg.counts))

    # -- controller frames (product protocols) --------------------------

    def asm_value(self, ctrl: str) -> str:
        """Shared-variable value encoded by a controller state."""
        frame = self.frames.get(ctrl)
        return ctrl if frame is None else frame[0]

    def asm_written(self, ctrl: str, value: str) -> str:
        """Controller state after writing ``value`` from ``ctrl``."""
        frame = self.frames.get(ctrl)
        if frame is None:
            return value
        return self._frame_lookup[(value, frame[1])]

    @cached_property
    def _frame_lookup(self) -> dict[tuple[str, tuple[str, ...]], str]:
        return {frame: c for c, frame in self.frames.items()}

    @cached_property
    def asm_values(self) -> frozenset[str]:
        if self.frames:
            return frozenset(f[0] for f in self.frames.values())
        return self.controller_set


def alpha(p: Protocol, cfg: Configuration) -> AbstractConfiguration:
    return p.alpha(cfg)


def embed(p: Protocol, a: AbstractConfiguration) -> Configuration:
    return p.embed(a)


def wqo_leq(small: Configuration, big: Configuration) -> bool:
    """The support-preserving order: pointwise <= with equal zero patterns."""
    if small.ctrl != big.ctrl or len(small.counts) != len(big.counts):
        return False
    return all(s <= b and (s == 0) == (b == 0) for s, b in zip(small.counts, big.counts))


# ---------------------------------------------------------------------------
# validation


def validate_protocol(p: Protocol) -> list[str]:
    """Return one diagnostic per violated protocol invariant."""
    diags: list[str] = []
    C, Q = p.controller_set, p.user_set
    if not C:
        diags.append("controller state set is empty")
    if not Q:
        diags.append("user state set is empty")
    if len(C) != len(p.controller_states):
        diags.append("duplicate controller state declaration")
    if len(Q) != len(p.user_states):
        diags.append("duplicate user state declaration")
    for s in sorted(C & Q):
        diags.append(f"state {s!r} declared as both controller and user state")
    if p.initial_controller not in C:
        diags.append(f"initial controller state {p.initial_controller!r} is not a controller state")
    if not p.initial_users:
        diags.append("no initial user state declared")
    for q in sorted(p.initial_users - Q):
        diags.append(f"initial user state {q!r} is not a user state")

    for t in p.transitions:
        if t.kind in (Kind.WRITE, Kind.READ):
            if t.src not in Q or t.dst not in Q:
                diags.append(f"ASM transition {t} must connect user states")
            if t.label not in p.asm_values:
                diags.append(f"ASM transition {t} uses value {t.label!r} that is not a controller state")
            continue
        ends = {t.src in C, t.dst in C}
        if t.src not in C | Q or t.dst not in C | Q:
            diags.append(f"transition {t} mentions an undeclared state")
        elif ends != {True} and ends != {False}:
            diags.append(f"transition {t} mixes a controller state and a user state")
        if t.kind is Kind.DISJUNCTIVE:
            for g in sorted(t.guard - (C | Q)):
                diags.append(f"guard of transition {t} mentions undeclared state {g!r}")
            if not t.guard:
                diags.append(f"disjunctive transition {t} has an empty guard")

    labels = set(p.sync_labels)
    for label, g in p.sync_guards.items():
        if label not in labels:
            diags.append(f"guard for sync label {label!r} without any transition on it")
        for s in sorted((g.exists | g.forall) - (C | Q)):
            diags.append(f"guard for sync label {label!r} mentions undeclared state {s!r}")

    for c, (base, tracked) in p.frames.items():
        if c not in C:
            diags.append(f"frame for undeclared controller state {c!r}")
        for q in tracked:
            if q not in Q:
                diags.append(f"frame of {c!r} tracks undeclared user state {q!r}")

    if p.declared_kind not in DECLARED_KINDS:
        diags.append(f"unknown protocol kind {p.declared_kind!r}")
    elif p.declared_kind != "mixed":
        allowed = {Primitive(p.declared_kind), Primitive.INTERNAL}
        if p.declared_kind == "gsync":
            allowed.add(Primitive.SYNC)
        for k in sorted(p.kind_profile - allowed, key=lambda k: k.value):
            diags.append(f"protocol declared {p.declared_kind!r} uses {k.value!r} transitions")
    return diags


class ProtocolError(ValueError):
    """A protocol document is well-formed but violates an invariant."""

    def __init__(self, diagnostics: list[str]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(diagnostics))


class ProtocolSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


# ---------------------------------------------------------------------------
# DSL

ID = r"[A-Za-z0-9_][A-Za-z0-9_.']*"
_TOKEN = re.compile(
    rf"(?P<arrow>->)|(?P<bang>!{ID})|(?P<query>\?{ID})|(?P<at>@{ID})"
    rf"|(?P<rw>[wr]\({ID}\))|(?P<id>{ID})|(?P<punct>[\[\]{{}},=])|(?P<bad>\S)"
)


def _tokens(line: str, lineno: int) -> list[tuple[str, str, int]]:
    out = []
    for m in _TOKEN.finditer(line):
        kind = m.lastgroup
        if kind == "bad":
            raise ProtocolSyntaxError(f"unexpected character {m.group()!r}", lineno, m.start() + 1)
        out.append((kind, m.group(), m.start() + 1))
    return out


class _Line:
    def __init__(self, toks: list[tuple[str, str, int]], lineno: int, length: int):
        self.toks = toks
        self.pos = 0
        self.lineno = lineno
        self.length = length

    def error(self, message: str) -> ProtocolSyntaxError:
        col = self.toks[self.pos][2] if self.pos < len(self.toks) else self.length + 1
        return ProtocolSyntaxError(message, self.lineno, col)

    def peek(self) -> tuple[str, str, int] | None:
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def take(self, kind: str | None = None, text: str | None = None) -> str:
        tok = self.peek()
        if tok is None or (kind and tok[0] != kind) or (text and tok[1] != text):
            want = text or kind or "token"
            got = "end of line" if tok is None else repr(tok[1])
            raise self.error(f"expected {want}, got {got}")
        self.pos += 1
        return tok[1]

    def done(self) -> None:
        if self.pos != len(self.toks):
            raise self.error(f"unexpected {self.toks[self.pos][1]!r}")

    def id_set(self, open_: str, close: str) -> frozenset[str]:
        self.take("punct", open_)
        items = []
        if self.peek() and self.peek()[1] == close:
            self.pos += 1
            return frozenset()
        while True:
            items.append(self.take("id"))
            if self.peek() and self.peek()[1] == ",":
                self.pos += 1
                continue
            self.take("punct", close)
            return frozenset(items)


def parse_protocol(text: str) -> Protocol:
    """Parse and validate a protocol document.

    Raises ProtocolSyntaxError (with line/column) or ProtocolError.
    """
    name, declared = None, None
    ctrl: list[str] = []
    users: list[str] = []
    ctrl_init: list[str] = []
    user_init: set[str] = set()
    raw: list[tuple[str, str, str, str | None, frozenset[str], int]] = []
    guards: dict[str, SyncGuard] = {}
    frames: dict[str, tuple[str, tuple[str, ...]]] = {}
    pending_forall: list[tuple[str, frozenset[str] | None]] = []
    diags: list[str] = []

    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0]
        toks = _tokens(line, lineno)
        if not toks:
            continue
        ln = _Line(toks, lineno, len(line))
        head = ln.take("id")
        if head == "protocol":
            if name is not None:
                raise ln.error("duplicate protocol header")
            name = ln.take("id")
            ln.take("id", "kind")
            declared = ln.take("id")
            if declared not in DECLARED_KINDS:
                ln.pos -= 1
                raise ln.error(f"unknown protocol kind {declared!r}")
            ln.done()
        elif head in ("ctrl", "user"):
            state = ln.take("id")
            init = False
            if ln.peek() is not None:
                ln.take("id", "init")
                init = True
            ln.done()
            (ctrl if head == "ctrl" else users).append(state)
            if init:
                if head == "ctrl":
                    ctrl_init.append(state)
                else:
                    user_init.add(state)
        elif head == "t":
            src = ln.take("id")
            tok = ln.peek()
            if tok is None:
                raise ln.error("expected transition label")
            kind_tok, text_tok, _ = tok
            label, guard = None, frozenset()
            if kind_tok == "arrow":
                ln.pos += 1
                kind = Kind.INTERNAL
            elif kind_tok == "bang":
                ln.pos += 1
                kind, label = Kind.BROADCAST, text_tok[1:]
            elif kind_tok == "query":
                ln.pos += 1
                kind, label = Kind.RECEIVE, text_tok[1:]
            elif kind_tok == "at":
                ln.pos += 1
                kind, label = Kind.SYNC, text_tok[1:]
            elif kind_tok == "rw":
                ln.pos += 1
                kind = Kind.WRITE if text_tok[0] == "w" else Kind.READ
                label = text_tok[2:-1]
            elif text_tok == "[":
                kind = Kind.DISJUNCTIVE
                guard = ln.id_set("[", "]")
            else:
                raise ln.error(f"unknown transition label {text_tok!r}")
            dst = ln.take("id")
            ln.done()
            raw.append((kind, src, dst, label, guard, lineno))
        elif head == "guard":
            label = ln.take("at")[1:]
            ln.take("id", "exists")
            exists = ln.id_set("{", "}")
            forall = None
            if ln.peek() is not None:
                ln.take("id", "forall")
                forall = ln.id_set("{", "}")
            ln.done()
            if label in guards:
                diags.append(f"line {lineno}: duplicate guard for sync label {label!r}")
                continue
            guards[label] = SyncGuard(exists, frozenset())
            pending_forall.append((label, forall))
        elif head == "frame":
            state = ln.take("id")
            ln.take("punct", "=")
            base = ln.take("id")
            tracked = []
            while ln.peek() is not None:
                tracked.append(ln.take("id"))
            frames[state] = (base, tuple(tracked))
        else:
            ln.pos -= 1
            raise ln.error(f"unknown declaration {head!r}")

    if name is None:
        diags.append("missing 'protocol <name> kind <kind>' header")
    if len(ctrl_init) != 1:
        diags.append(f"expected exactly one initial controller state, found {len(ctrl_init)}")
    everything = frozenset(ctrl) | frozenset(users)
    for label, forall in pending_forall:
        guards[label] = SyncGuard(guards[label].exists, everything if forall is None else forall)

    transitions = tuple(Transition(k, s, d, lab, g) for k, s, d, lab, g, _ in raw)
    p = Protocol(
        name=name or "unnamed",
        controller_states=tuple(ctrl),
        user_states=tuple(users),
        initial_controller=ctrl_init[0] if ctrl_init else (ctrl[0] if ctrl else ""),
        initial_users=frozenset(user_init),
        transitions=transitions,
        sync_guards=guards,
        declared_kind=declared or "mixed",
        frames=frames,
    )
    diags.extend(validate_protocol(p))
    if diags:
        raise ProtocolError(diags)
    return p


def serialize_protocol(p: Protocol) -> str:
    lines = [f"protocol {p.name} kind {p.declared_kind}"]
    for c in p.controller_states:
        lines.append(f"ctrl {c}" + (" init" if c == p.initial_controller else ""))
    for q in p.user_states:
        lines.append(f"user {q}" + (" init" if q in p.initial_users else ""))
    for t in p.transitions:
        lines.append(f"t {t}")
    for label, g in p.sync_guards.items():
        lines.append(
            f"guard @{label} exists {{{','.join(sorted(g.exists))}}} forall {{{','.join(sorted(g.forall))}}}"
        )
    for c, (base, tracked) in p.frames.items():
        lines.append(f"frame {c} = {' '.join((base,) + tracked)}")
    return "\n".join(lines) + "\n"


def load_protocol(path) -> Protocol:
    with open(path, encoding="utf-8") as fh:
        return parse_protocol(fh.read())
