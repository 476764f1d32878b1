"""Cardinality reachability over the 01-counter system.

A configuration satisfying a cardinality constraint is reachable in the
parameterized system iff an abstract configuration satisfying the
abstracted constraint is reachable in the 01-counter system.  The search is
a deterministic BFS over (controller state, occupied set) pairs.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .budget import Budget, BudgetExceeded, Meter
from .constraints import (
    Constraint,
    ConstraintError,
    CtrlEq,
    GeqCount,
    Or,
    ZeroCount,
    abstract_constraint,
    check_constraint,
    conjunction,
    eval_abstract,
    eval_constraint,
    max_threshold,
)
from .protocol import AbstractConfiguration, Configuration, Protocol
from .semantics import _compositions, abstract_successors, concrete_successors, config_key

Successors = Callable[[Protocol, AbstractConfiguration], Iterable[AbstractConfiguration]]


@dataclass
class SearchStats:
    states: int = 0
    frontier_peak: int = 0
    millis: int = 0


@dataclass
class ConcreteWitness:
    population: int
    run: list[Configuration]

    def to_json(self) -> dict:
        return {"n": self.population, "run": [{"ctrl": c.ctrl, "counts": list(c.counts)} for c in self.run]}


@dataclass
class CrpResult:
    reachable: bool
    abstract_witness: list[AbstractConfiguration] | None = None
    satisfied_target: AbstractConfiguration | None = None
    stats: SearchStats = field(default_factory=SearchStats)
    concrete: ConcreteWitness | None = None

    def to_json(self) -> dict:
        return {
            "reachable": self.reachable,
            "witness": [a.to_json() for a in self.abstract_witness] if self.abstract_witness else [],
            "concrete": self.concrete.to_json() if self.concrete else None,
            "stats": {"states": self.stats.states, "millis": self.stats.millis,
                      "frontier_peak": self.stats.frontier_peak},
        }


def initial_abstract(p: Protocol) -> list[AbstractConfiguration]:
    """Every (c0, S) with S a subset of the initial user states."""
    q0 = sorted(p.initial_users)
    return [
        AbstractConfiguration(p.initial_controller, frozenset(s))
        for r in range(len(q0) + 1)
        for s in itertools.combinations(q0, r)
    ]


def _bfs(
    p: Protocol,
    budget: Budget | None,
    stop: Callable[[AbstractConfiguration], bool] | None = None,
    successors: Successors = abstract_successors,
) -> tuple[dict, AbstractConfiguration | None, SearchStats]:
    meter: Meter = (budget or Budget.from_env()).meter()
    parent: dict[AbstractConfiguration, AbstractConfiguration | None] = {}
    queue: deque[AbstractConfiguration] = deque()
    stats = SearchStats()
    for a in initial_abstract(p):
        parent[a] = None
        queue.append(a)
        if stop is not None and stop(a):
            stats.states = len(parent)
            stats.millis = meter.millis
            return parent, a, stats
    while queue:
        stats.frontier_peak = max(stats.frontier_peak, len(queue))
        a = queue.popleft()
        for b in sorted(successors(p, a), key=config_key):
            if b in parent:
                continue
            parent[b] = a
            if stop is not None and stop(b):
                stats.states = len(parent)
                stats.millis = meter.millis
                return parent, b, stats
            queue.append(b)
        meter.check(len(parent))
    stats.states = len(parent)
    stats.millis = meter.millis
    return parent, None, stats


def reachable_abstract(
    p: Protocol, budget: Budget | None = None, successors: Successors = abstract_successors
) -> set[AbstractConfiguration]:
    """All abstract configurations reachable from an initial one.

    Raises BudgetExceeded when the state or time budget runs out.
    """
    parent, _, _ = _bfs(p, budget, successors=successors)
    return set(parent)


def _path(parent: dict, node: AbstractConfiguration) -> list[AbstractConfiguration]:
    path = [node]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    return path[::-1]


def decide_crp(p: Protocol, phi: Constraint, budget: Budget | None = None) -> CrpResult:
    check_constraint(phi, p)
    phi_a = abstract_constraint(phi)
    parent, hit, stats = _bfs(p, budget, stop=lambda a: eval_abstract(phi_a, a))
    if hit is None:
        return CrpResult(False, stats=stats)
    return CrpResult(True, _path(parent, hit), hit, stats)


# ---------------------------------------------------------------------------
# concretization


def _with_support(p: Protocol, ctrl: str, support: frozenset[str], n: int) -> list[Configuration]:
    occ = [q for q in p.user_states if q in support]
    if not occ:
        return [p.configuration(ctrl)] if n == 0 else []
    if n < len(occ):
        return []
    out = []
    for extra in _compositions(n - len(occ), len(occ)):
        out.append(p.configuration(ctrl, {q: 1 + e for q, e in zip(occ, extra)}))
    return out


def default_population_cap(p: Protocol, w: list[AbstractConfiguration], phi: Constraint) -> int:
    return max(max_threshold(phi), 1) * len(p.user_states) * (len(w) + 1)


def concretize_witness(
    p: Protocol,
    w: list[AbstractConfiguration],
    phi: Constraint,
    n_max: int | None = None,
    budget: Budget | None = None,
) -> ConcreteWitness | None:
    """Search populations upwards for a concrete run abstracting to ``w``
    whose last configuration satisfies ``phi``.

    Returns None if nothing is found up to ``n_max``; that is not a proof of
    absence, since a realizing population may be larger than the cap.
    """
    if not w:
        raise ValueError("empty abstract witness")
    if n_max is None:
        n_max = default_population_cap(p, w, phi)
    meter = (budget or Budget.from_env()).meter()
    n_lo = max(len(a.occupied) for a in w)
    for n in range(n_lo, n_max + 1):
        layers: list[dict[Configuration, Configuration | None]] = [
            {c: None for c in _with_support(p, w[0].ctrl, w[0].occupied, n)}
        ]
        seen = len(layers[0])
        for target in w[1:]:
            nxt: dict[Configuration, Configuration | None] = {}
            for c in layers[-1]:
                for d in concrete_successors(p, c):
                    if d not in nxt and p.alpha(d) == target:
                        nxt[d] = c
            seen += len(nxt)
            meter.check(seen)
            layers.append(nxt)
            if not nxt:
                break
        if not layers[-1] or len(layers) != len(w):
            continue
        finals = sorted((c for c in layers[-1] if eval_constraint(phi, c, p)), key=lambda c: c.counts)
        if not finals:
            continue
        run = [finals[0]]
        for layer in reversed(layers[1:]):
            run.append(layer[run[-1]])
        return ConcreteWitness(n, run[::-1])
    return None


# ---------------------------------------------------------------------------
# named problems


def _tautology(p: Protocol) -> Constraint:
    q = p.user_states[0]
    return Or(GeqCount(q, 1), ZeroCount(q))


def encode_named_problem(name: str, p: Protocol, arg) -> Constraint:
    """Constraint for cover(q), coverctrl(c), coverability(cfg) or target(q)."""
    if name == "cover":
        if arg not in p.user_set:
            raise ConstraintError(f"unknown user state {arg!r}")
        return GeqCount(arg, 1)
    if name == "coverctrl":
        if arg not in p.controller_set:
            raise ConstraintError(f"unknown controller state {arg!r}")
        return CtrlEq(arg)
    if name == "coverability":
        cfg: Configuration = arg
        if len(cfg.counts) != len(p.user_states):
            raise ConstraintError("configuration does not match the protocol's user states")
        parts = [GeqCount(q, k) for q, k in zip(p.user_states, cfg.counts) if k > 0]
        return conjunction(parts) if parts else _tautology(p)
    if name == "target":
        if arg not in p.user_set:
            raise ConstraintError(f"unknown user state {arg!r}")
        parts = [ZeroCount(q) for q in p.user_states if q != arg]
        return conjunction(parts) if parts else _tautology(p)
    raise ValueError(f"unknown problem {name!r}")


__all__ = [
    "BudgetExceeded",
    "ConcreteWitness",
    "CrpResult",
    "SearchStats",
    "concretize_witness",
    "decide_crp",
    "encode_named_problem",
    "initial_abstract",
    "reachable_abstract",
]
