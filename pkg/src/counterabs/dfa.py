"""Complete DFAs and the reduction from DFA-intersection non-emptiness to
cardinality reachability in controller-free synchronization protocols."""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass

from .constraints import And, Constraint, GeqCount, ZeroCount, conjunction, disjunction
from .protocol import Kind, Protocol, Transition, validate_protocol, ProtocolError
from .traces import SpecError, parse_spec


class DfaError(ValueError):
    pass


@dataclass(frozen=True)
class Dfa:
    states: tuple[str, ...]
    alphabet: tuple[str, ...]
    delta: dict[tuple[str, str], str]
    initial: str
    finals: frozenset[str]

    __hash__ = object.__hash__

    def validate(self) -> list[str]:
        diags = []
        known = set(self.states)
        if self.initial not in known:
            diags.append(f"initial state {self.initial!r} is not declared")
        for f in sorted(self.finals - known):
            diags.append(f"final state {f!r} is not declared")
        for q in self.states:
            for a in self.alphabet:
                if (q, a) not in self.delta:
                    diags.append(f"incomplete: no transition from {q!r} on {a!r}")
        return diags

    def accepts(self, word) -> bool:
        q = self.initial
        for a in word:
            q = self.delta[(q, a)]
        return q in self.finals

    def renamed(self, prefix: str) -> "Dfa":
        return Dfa(
            tuple(prefix + q for q in self.states),
            self.alphabet,
            {(prefix + q, a): prefix + d for (q, a), d in self.delta.items()},
            prefix + self.initial,
            frozenset(prefix + q for q in self.finals),
        )

    def to_text(self) -> str:
        lines = ["alphabet " + " ".join(self.alphabet)]
        for q in self.states:
            flags = (" init" if q == self.initial else "") + (" accept" if q in self.finals else "")
            lines.append(f"state {q}{flags}")
        for (q, a), d in sorted(self.delta.items()):
            lines.append(f"on {a} {q} -> {d}")
        return "\n".join(lines) + "\n"


def parse_dfa(text: str) -> Dfa:
    """Parse the spec-automaton table format with a mandatory alphabet line."""
    if not any(line.split()[:1] == ["alphabet"] for line in text.splitlines()):
        raise DfaError("missing 'alphabet' line")
    try:
        aut = parse_spec(text)
    except SpecError as exc:
        raise DfaError(str(exc)) from exc
    if len(aut.initial) != 1:
        raise DfaError("a DFA needs exactly one initial state")
    delta = {}
    for key, targets in aut.delta.items():
        if len(targets) != 1:
            raise DfaError(f"nondeterministic transition from {key[0]!r} on {key[1]!r}")
        delta[key] = next(iter(targets))
    dfa = Dfa(tuple(aut.states), tuple(sorted(aut.alphabet)), delta, next(iter(aut.initial)), aut.accepting)
    diags = dfa.validate()
    if diags:
        raise DfaError("; ".join(diags))
    return dfa


def load_dfa(path) -> Dfa:
    with open(path, encoding="utf-8") as fh:
        return parse_dfa(fh.read())


def intersection_nonempty(automata: list[Dfa]) -> bool:
    """Direct check by BFS over the product automaton."""
    if not automata:
        raise DfaError("need at least one automaton")
    sigma = _common_alphabet(automata)
    start = tuple(d.initial for d in automata)
    seen = {start}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        if all(q in d.finals for q, d in zip(cur, automata)):
            return True
        for a in sigma:
            nxt = tuple(d.delta[(q, a)] for q, d in zip(cur, automata))
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return False


def _common_alphabet(automata: list[Dfa]) -> tuple[str, ...]:
    sigma = set(automata[0].alphabet)
    for d in automata[1:]:
        if set(d.alphabet) != sigma:
            raise DfaError(f"alphabet mismatch: {sorted(sigma)} vs {sorted(d.alphabet)}")
    return tuple(sorted(sigma))


def gen_dfa_intersection(automata: list[Dfa]) -> tuple[Protocol, Constraint]:
    """Synchronization protocol whose users run the DFAs in lockstep.

    States of the i-th automaton are prefixed with ``d<i>_``; the controller
    is a single idle state.  The constraint asks for one user in a final
    state of every automaton.  An automaton without final states yields
    the unsatisfiable clause ``#q = 0 & #q >= 1``.
    """
    if not automata:
        raise DfaError("need at least one automaton")
    for d in automata:
        diags = d.validate()
        if diags:
            raise DfaError("; ".join(diags))
    _common_alphabet(automata)
    renamed = [d.renamed(f"d{i}_") for i, d in enumerate(automata)]
    users = tuple(q for d in renamed for q in d.states)
    transitions = tuple(
        Transition(Kind.SYNC, q, dst, a) for d in renamed for (q, a), dst in sorted(d.delta.items())
    )
    p = Protocol(
        name="dfa_intersection",
        controller_states=("idle",),
        user_states=users,
        initial_controller="idle",
        initial_users=frozenset(d.initial for d in renamed),
        transitions=transitions,
        declared_kind="sync",
    )
    diags = validate_protocol(p)
    if diags:
        raise ProtocolError(diags)
    clauses = []
    for d in renamed:
        if d.finals:
            clauses.append(disjunction([GeqCount(q, 1) for q in sorted(d.finals)]))
        else:
            clauses.append(And(ZeroCount(d.initial), GeqCount(d.initial, 1)))
    return p, conjunction(clauses)


def random_dfa(rng: random.Random, alphabet: tuple[str, ...], max_states: int = 5) -> Dfa:
    n = rng.randint(1, max_states)
    states = tuple(f"s{i}" for i in range(n))
    delta = {(q, a): rng.choice(states) for q in states for a in alphabet}
    finals = frozenset(q for q in states if rng.random() < 0.3)
    return Dfa(states, alphabet, delta, states[0], finals)
