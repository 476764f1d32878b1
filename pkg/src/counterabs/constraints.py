"""Cardinality constraints over configurations.

Grammar::

    phi  := term { "|" term }
    term := atom { "&" atom }
    atom := "ctrl" ("=" | "!=") ID | "#" ID ">=" NAT | "#" ID "=" "0" | "(" phi ")"
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import IntEnum
from functools import reduce
from typing import Iterator, Union

from .protocol import AbstractConfiguration, Configuration, Protocol


@dataclass(frozen=True)
class CtrlEq:
    state: str

    def __str__(self) -> str:
        return f"ctrl = {self.state}"


@dataclass(frozen=True)
class CtrlNeq:
    state: str

    def __str__(self) -> str:
        return f"ctrl != {self.state}"


@dataclass(frozen=True)
class GeqCount:
    state: str
    bound: int

    def __str__(self) -> str:
        return f"#{self.state} >= {self.bound}"


@dataclass(frozen=True)
class ZeroCount:
    state: str

    def __str__(self) -> str:
        return f"#{self.state} = 0"


@dataclass(frozen=True)
class And:
    left: "Constraint"
    right: "Constraint"

    def __str__(self) -> str:
        return f"{_wrap(self.left, Or)} & {_wrap(self.right, Or)}"


@dataclass(frozen=True)
class Or:
    left: "Constraint"
    right: "Constraint"

    def __str__(self) -> str:
        return f"{self.left} | {self.right}"


Constraint = Union[CtrlEq, CtrlNeq, GeqCount, ZeroCount, And, Or]


def _wrap(c: Constraint, cls) -> str:
    return f"({c})" if isinstance(c, cls) else str(c)


class ConstraintClass(IntEnum):
    GEQ = 1
    GEQ_ZERO = 2
    FULL = 3


class ConstraintError(ValueError):
    pass


def atoms(phi: Constraint) -> Iterator[Constraint]:
    if isinstance(phi, (And, Or)):
        yield from atoms(phi.left)
        yield from atoms(phi.right)
    else:
        yield phi


def classify(phi: Constraint) -> ConstraintClass:
    cls = ConstraintClass.GEQ
    for a in atoms(phi):
        if isinstance(a, (CtrlEq, CtrlNeq)):
            return ConstraintClass.FULL
        if isinstance(a, ZeroCount):
            cls = ConstraintClass.GEQ_ZERO
    return cls


def max_threshold(phi: Constraint) -> int:
    """Largest ``a`` among the ``#q >= a`` atoms (0 if none)."""
    return max((a.bound for a in atoms(phi) if isinstance(a, GeqCount)), default=0)


def conjunction(parts: list[Constraint]) -> Constraint:
    return reduce(And, parts)


def disjunction(parts: list[Constraint]) -> Constraint:
    return reduce(Or, parts)


# ---------------------------------------------------------------------------
# parsing

_TOK = re.compile(r"\s*(?:(?P<op>>=|!=|=|&|\||\(|\)|#)|(?P<nat>\d+(?![A-Za-z_.']))|(?P<id>[A-Za-z0-9_][A-Za-z0-9_.']*)|(?P<bad>\S))")


class _Parser:
    def __init__(self, text: str, protocol: Protocol | None):
        self.text = text
        self.protocol = protocol
        self.toks: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            m = _TOK.match(text, pos)
            if m is None or m.end() == pos:
                break
            pos = m.end()
            if m.lastgroup is None:
                continue
            if m.lastgroup == "bad":
                raise ConstraintError(f"unexpected character {m.group('bad')!r} at column {m.start('bad') + 1}")
            self.toks.append((m.lastgroup, m.group(m.lastgroup), m.start(m.lastgroup) + 1))
        self.i = 0

    def peek(self) -> str | None:
        return self.toks[self.i][1] if self.i < len(self.toks) else None

    def take(self, kind: str | None = None, text: str | None = None) -> str:
        if self.i >= len(self.toks):
            raise ConstraintError(f"unexpected end of constraint, expected {text or kind}")
        k, t, col = self.toks[self.i]
        # numeric-looking identifiers are fine where an identifier is expected
        if kind == "id" and k == "nat":
            k = "id"
        if (kind and k != kind) or (text and t != text):
            raise ConstraintError(f"expected {text or kind} at column {col}, got {t!r}")
        self.i += 1
        return t

    def phi(self) -> Constraint:
        parts = [self.term()]
        while self.peek() == "|":
            self.i += 1
            parts.append(self.term())
        return disjunction(parts)

    def term(self) -> Constraint:
        parts = [self.atom()]
        while self.peek() == "&":
            self.i += 1
            parts.append(self.atom())
        return conjunction(parts)

    def atom(self) -> Constraint:
        tok = self.peek()
        if tok == "(":
            self.i += 1
            inner = self.phi()
            self.take("op", ")")
            return inner
        if tok == "ctrl":
            self.i += 1
            op = self.take("op")
            if op not in ("=", "!="):
                raise ConstraintError(f"expected '=' or '!=' after ctrl, got {op!r}")
            state = self.take("id")
            self._check(state, controller=True)
            return CtrlEq(state) if op == "=" else CtrlNeq(state)
        if tok == "#":
            self.i += 1
            state = self.take("id")
            self._check(state, controller=False)
            op = self.take("op")
            n = int(self.take("nat"))
            if op == ">=":
                if n == 0:
                    raise ConstraintError(f"'#{state} >= 0' is vacuous; thresholds must be >= 1")
                return GeqCount(state, n)
            if op == "=":
                if n != 0:
                    raise ConstraintError(f"only '#{state} = 0' is supported, got '= {n}'")
                return ZeroCount(state)
            raise ConstraintError(f"unsupported comparison {op!r}")
        raise ConstraintError(f"expected atom, got {tok!r}")

    def _check(self, state: str, controller: bool) -> None:
        if self.protocol is None:
            return
        pool = self.protocol.controller_set if controller else self.protocol.user_set
        if state not in pool:
            what = "controller" if controller else "user"
            raise ConstraintError(f"unknown {what} state {state!r}")


def parse_constraint(text: str, protocol: Protocol | None = None) -> Constraint:
    """Parse a constraint; with a protocol, identifiers are checked against it."""
    parser = _Parser(text, protocol)
    if not parser.toks:
        raise ConstraintError("empty constraint")
    phi = parser.phi()
    if parser.i != len(parser.toks):
        raise ConstraintError(f"trailing input at column {parser.toks[parser.i][2]}")
    return phi


def check_constraint(phi: Constraint, p: Protocol) -> None:
    for a in atoms(phi):
        if isinstance(a, (CtrlEq, CtrlNeq)):
            if a.state not in p.controller_set:
                raise ConstraintError(f"unknown controller state {a.state!r}")
        elif a.state not in p.user_set:
            raise ConstraintError(f"unknown user state {a.state!r}")


# ---------------------------------------------------------------------------
# evaluation


def eval_constraint(phi: Constraint, cfg: Configuration, p: Protocol) -> bool:
    if isinstance(phi, And):
        return eval_constraint(phi.left, cfg, p) and eval_constraint(phi.right, cfg, p)
    if isinstance(phi, Or):
        return eval_constraint(phi.left, cfg, p) or eval_constraint(phi.right, cfg, p)
    if isinstance(phi, CtrlEq):
        return cfg.ctrl == phi.state
    if isinstance(phi, CtrlNeq):
        return cfg.ctrl != phi.state
    count = cfg.counts[p.user_index[phi.state]]
    if isinstance(phi, GeqCount):
        return count >= phi.bound
    return count == 0


def abstract_constraint(phi: Constraint) -> Constraint:
    """Replace every ``#q >= a`` by ``#q >= 1``."""
    if isinstance(phi, And):
        return And(abstract_constraint(phi.left), abstract_constraint(phi.right))
    if isinstance(phi, Or):
        return Or(abstract_constraint(phi.left), abstract_constraint(phi.right))
    if isinstance(phi, GeqCount):
        return GeqCount(phi.state, 1)
    return phi


def eval_abstract(phi: Constraint, a: AbstractConfiguration) -> bool:
    """Evaluate an abstracted constraint on a 01-configuration.

    Atoms ``#q >= a`` with ``a >= 2`` cannot be decided on occupancy alone
    and raise ConstraintError.
    """
    if isinstance(phi, And):
        return eval_abstract(phi.left, a) and eval_abstract(phi.right, a)
    if isinstance(phi, Or):
        return eval_abstract(phi.left, a) or eval_abstract(phi.right, a)
    if isinstance(phi, CtrlEq):
        return a.ctrl == phi.state
    if isinstance(phi, CtrlNeq):
        return a.ctrl != phi.state
    if isinstance(phi, GeqCount):
        if phi.bound >= 2:
            raise ConstraintError(f"atom '{phi}' is not abstract; apply abstract_constraint first")
        return phi.state in a.occupied
    return phi.state not in a.occupied
