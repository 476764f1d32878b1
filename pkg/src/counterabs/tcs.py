"""Transition counter systems.

A TCS has no controller.  Every step picks one minimal step D (a set of
local transitions) and takes each of its transitions one or more times.
Controller-free lossy broadcast and disjunctive protocols convert to TCSs;
synchronization protocols do not.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator

from .constraints import (
    Constraint,
    ConstraintClass,
    ConstraintError,
    ZeroCount,
    abstract_constraint,
    atoms,
    classify,
    conjunction,
    disjunction,
    eval_abstract,
)
from .protocol import AbstractConfiguration, Kind, Primitive, Protocol, Transition


class NotATcs(ValueError):
    """The protocol cannot be presented as a transition counter system."""


@dataclass(frozen=True)
class MinimalStep:
    transitions: frozenset[Transition]

    def __post_init__(self):
        if not self.transitions:
            raise ValueError("a minimal step needs at least one transition")

    @cached_property
    def pre(self) -> Counter:
        return Counter(t.src for t in self.transitions)

    @cached_property
    def post(self) -> Counter:
        return Counter(t.dst for t in self.transitions)

    @cached_property
    def pre_support(self) -> frozenset[str]:
        return frozenset(self.pre)

    @cached_property
    def post_support(self) -> frozenset[str]:
        return frozenset(self.post)

    def ordered(self) -> list[Transition]:
        return sorted(self.transitions, key=lambda t: (t.src, t.dst, str(t)))

    def __str__(self) -> str:
        return "D: " + ", ".join(f"{t.src}->{t.dst}" for t in self.ordered())


@dataclass(frozen=True)
class Tcs:
    user_states: tuple[str, ...]
    delta: frozenset[Transition]
    dmin: tuple[MinimalStep, ...]
    initial_users: frozenset[str]

    @classmethod
    def from_pairs(
        cls, user_states: Iterable[str], initial: Iterable[str], steps: Iterable[Iterable[tuple[str, str]]]
    ) -> "Tcs":
        """Build a TCS directly from minimal steps given as (src, dst) pairs."""
        dmin = []
        for pairs in steps:
            dmin.append(MinimalStep(frozenset(Transition(Kind.INTERNAL, s, d) for s, d in pairs)))
        delta = frozenset(t for D in dmin for t in D.transitions)
        return cls(tuple(user_states), delta, tuple(dmin), frozenset(initial))

    def dump(self) -> str:
        return "".join(f"{D}\n" for D in self.dmin)


# ---------------------------------------------------------------------------
# conversion


def to_tcs(p: Protocol) -> Tcs:
    """Minimal steps of a controller-free lossy or disjunctive protocol.

    Internal transitions are accepted alongside either kind, each one
    forming a minimal step on its own.
    """
    kinds = p.kind_profile - {Primitive.INTERNAL}
    if kinds & {Primitive.SYNC, Primitive.GUARDED_SYNC}:
        raise NotATcs(f"protocol {p.name!r} is not a TCS: synchronization steps force every enabled process to move")
    if Primitive.ASM in kinds:
        raise NotATcs(f"protocol {p.name!r} is not a TCS: ASM steps act on the controller")
    if len(kinds) > 1:
        raise NotATcs(f"protocol {p.name!r} is not a TCS: mixes lossy broadcast and disjunctive guards")
    if p.has_controller_transitions:
        raise NotATcs(f"protocol {p.name!r} is not a TCS: the controller has transitions")

    dmin: list[MinimalStep] = []
    for t in p.of_kind(Kind.INTERNAL):
        dmin.append(MinimalStep(frozenset({t})))
    for t in p.of_kind(Kind.DISJUNCTIVE):
        if t.guard & p.controller_set:
            raise NotATcs(f"guard of {t} mentions a controller state")
        for r in sorted(t.guard):
            dmin.append(MinimalStep(frozenset({t, Transition(Kind.INTERNAL, r, r)})))
    receives: dict[str, list[Transition]] = {}
    for t in p.of_kind(Kind.RECEIVE):
        receives.setdefault(t.label, []).append(t)
    for t0 in p.of_kind(Kind.BROADCAST):
        rs = receives.get(t0.label, [])
        for k in range(len(rs) + 1):
            for R in itertools.combinations(rs, k):
                dmin.append(MinimalStep(frozenset((t0,) + R)))

    dmin = list(dict.fromkeys(dmin))
    delta = frozenset(t for D in dmin for t in D.transitions)
    return Tcs(p.user_states, delta, tuple(dmin), p.initial_users)


# ---------------------------------------------------------------------------
# abstract steps


def _subsets(items: Iterable[str]) -> Iterator[frozenset[str]]:
    items = sorted(items)
    for r in range(len(items) + 1):
        for c in itertools.combinations(items, r):
            yield frozenset(c)


def apply_abstract(D: MinimalStep, a: frozenset[str]) -> set[frozenset[str]]:
    """Occupied sets reachable from ``a`` by one step based on ``D``."""
    if not D.pre_support <= a:
        return set()
    free = D.pre_support - D.post_support
    base = (a - free) | D.post_support
    return {base | keep for keep in _subsets(free)}


def tcs_abstract_successors(t: Tcs, a: Iterable[str]) -> set[frozenset[str]]:
    a = frozenset(a)
    out: set[frozenset[str]] = set()
    for D in t.dmin:
        out |= apply_abstract(D, a)
    return out


# ---------------------------------------------------------------------------
# reachability


@dataclass
class TcsResult:
    reachable: bool
    run: list[frozenset[str]] = field(default_factory=list)
    rounds: int = 0
    max_run_length: int = 0
    explored: int = 0

    def __bool__(self) -> bool:
        return self.reachable

    def to_json(self) -> dict:
        return {
            "reachable": self.reachable,
            "witness": [sorted(s) for s in self.run],
            "stats": {"rounds": self.rounds, "max_run_length": self.max_run_length, "states": self.explored},
        }


def _holds(phi_a: Constraint, occupied: frozenset[str]) -> bool:
    return eval_abstract(phi_a, AbstractConfiguration("", occupied))


def _check_states(t: Tcs, phi: Constraint) -> None:
    known = set(t.user_states)
    for a in atoms(phi):
        if getattr(a, "state", None) not in known:
            raise ConstraintError(f"constraint mentions {a}, which is not about a user state of the TCS")


def decide_crp_geq(t: Tcs, phi: Constraint) -> TcsResult:
    """Saturation: from Q0, keep applying minimal steps while keeping every
    occupied state occupied, until nothing new appears."""
    if classify(phi) is not ConstraintClass.GEQ:
        raise ConstraintError(f"'{phi}' is not in the class of >=-constraints")
    _check_states(t, phi)
    phi_a = abstract_constraint(phi)
    cur = frozenset(t.initial_users)
    run, rounds = [cur], 0
    while True:
        grown = cur
        for D in t.dmin:
            if D.pre_support <= grown and not D.post_support <= grown:
                grown = grown | D.post_support
        if grown == cur:
            break
        rounds += 1
        cur = grown
        run.append(cur)
    ok = _holds(phi_a, cur)
    return TcsResult(ok, run if ok else [], rounds, len(run) - 1, len(run))


class _TwoPhase:
    """Backtracking search for an increasing-then-decreasing abstract run."""

    def __init__(self, t: Tcs, phi_a: Constraint):
        self.t = t
        self.phi_a = phi_a
        self.seen_up: set[frozenset[str]] = set()
        self.seen_down: set[frozenset[str]] = set()
        self.max_len = 0

    def up(self, cur: frozenset[str], path: list[frozenset[str]]) -> list[frozenset[str]] | None:
        if cur in self.seen_up:
            return None
        self.seen_up.add(cur)
        self.max_len = max(self.max_len, len(path) - 1)
        hit = self.down(cur, path)
        if hit is not None:
            return hit
        for D in self.t.dmin:
            if D.pre_support <= cur and not D.post_support <= cur:
                nxt = cur | D.post_support
                hit = self.up(nxt, path + [nxt])
                if hit is not None:
                    return hit
        return None

    def down(self, cur: frozenset[str], path: list[frozenset[str]]) -> list[frozenset[str]] | None:
        self.max_len = max(self.max_len, len(path) - 1)
        if _holds(self.phi_a, cur):
            return path
        if cur in self.seen_down:
            return None
        self.seen_down.add(cur)
        for D in self.t.dmin:
            if not (D.pre_support <= cur and D.post_support <= cur):
                continue
            free = D.pre_support - D.post_support
            for drop in _subsets(free):
                if drop:
                    nxt = cur - drop
                    hit = self.down(nxt, path + [nxt])
                    if hit is not None:
                        return hit
        return None


def decide_crp_geq_zero(t: Tcs, phi: Constraint, allow_empty_start: bool = True) -> TcsResult:
    """Search for a run that first only gains occupied states, then only
    loses them, ending in a set satisfying ``phi``.

    Every start support S0 within Q0 is tried (the empty one only when
    ``allow_empty_start``).  The search is exhaustive backtracking.
    """
    if classify(phi) is ConstraintClass.FULL:
        raise ConstraintError(f"'{phi}' mentions the controller; TCSs have none")
    _check_states(t, phi)
    search = _TwoPhase(t, abstract_constraint(phi))
    starts = [s for s in _subsets(t.initial_users) if s or allow_empty_start]
    for s0 in sorted(starts, key=lambda s: (-len(s), sorted(s))):
        hit = search.up(s0, [s0])
        if hit is not None:
            return TcsResult(True, hit, max_run_length=search.max_len,
                             explored=len(search.seen_up) + len(search.seen_down))
    return TcsResult(False, max_run_length=search.max_len,
                     explored=len(search.seen_up) + len(search.seen_down))


# ---------------------------------------------------------------------------
# deadlocks


def deadlock_constraint(t: Tcs) -> Constraint | None:
    """Every minimal step has an empty source state; None if there are no
    minimal steps (then every configuration is a deadlock)."""
    for D in t.dmin:
        bad = [p for p, k in D.pre.items() if k >= 2]
        if bad:
            raise ValueError(f"minimal step '{D}' has several transitions leaving {bad[0]!r}; "
                             "deadlocks are not decidable on occupancy alone")
    if not t.dmin:
        return None
    return conjunction([disjunction([ZeroCount(q) for q in sorted(D.pre_support)]) for D in t.dmin])


@dataclass
class DeadlockVerdict:
    with_empty_start: bool
    without_empty_start: bool
    run: list[frozenset[str]] = field(default_factory=list)

    @property
    def differs(self) -> bool:
        return self.with_empty_start != self.without_empty_start


def deadlock_verdicts(t: Tcs) -> DeadlockVerdict:
    phi = deadlock_constraint(t)
    if phi is None:
        return DeadlockVerdict(True, bool(t.initial_users), [frozenset(t.initial_users)])
    with_empty = decide_crp_geq_zero(t, phi, allow_empty_start=True)
    without = decide_crp_geq_zero(t, phi, allow_empty_start=False)
    return DeadlockVerdict(with_empty.reachable, without.reachable, without.run or with_empty.run)


def detect_deadlock(t: Tcs, allow_empty_start: bool = True) -> bool:
    v = deadlock_verdicts(t)
    return v.with_empty_start if allow_empty_start else v.without_empty_start
