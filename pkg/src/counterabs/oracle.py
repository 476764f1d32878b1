"""Brute-force exploration of concrete populations.

Ground truth for the abstract engines at small population sizes, plus an
exhaustive checker for forward/backward compatibility with the
support-preserving order.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .budget import Budget
from .constraints import Constraint, check_constraint, eval_constraint
from .protocol import AbstractConfiguration, Configuration, Protocol, wqo_leq
from .semantics import _compositions, concrete_successors

ConcreteSuccessors = Callable[[Protocol, Configuration], Iterable[Configuration]]


@dataclass
class OracleReport:
    population: int
    reachable: set[Configuration] = field(default_factory=set)
    alpha_image: set[AbstractConfiguration] = field(default_factory=set)
    violations: list[tuple[str, tuple]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "n": self.population,
            "reachable": len(self.reachable),
            "abstract": sorted(str(a) for a in self.alpha_image),
            "violations": [
                {"kind": kind, "witness": [str(c) for c in wit]} for kind, wit in self.violations
            ],
        }


def initial_configurations(p: Protocol, n: int) -> list[Configuration]:
    q0 = [q for q in p.user_states if q in p.initial_users]
    return [
        p.configuration(p.initial_controller, dict(zip(q0, comp)))
        for comp in _compositions(n, len(q0))
    ]


def concrete_reach(
    p: Protocol,
    n: int,
    budget: Budget | None = None,
    successors: ConcreteSuccessors = concrete_successors,
) -> OracleReport:
    """Exact set of configurations reachable with ``n`` user processes."""
    meter = (budget or Budget.from_env()).meter()
    seen = set(initial_configurations(p, n))
    queue = deque(seen)
    while queue:
        c = queue.popleft()
        for d in successors(p, c):
            if d not in seen:
                seen.add(d)
                queue.append(d)
        meter.check(len(seen))
    return OracleReport(n, seen, {p.alpha(c) for c in seen})


def all_configurations(p: Protocol, n: int) -> list[Configuration]:
    """Every configuration with exactly ``n`` user processes."""
    return [
        Configuration(c, comp)
        for c in p.controller_states
        for comp in _compositions(n, len(p.user_states))
    ]


def _upper(p: Protocol, c: Configuration, by_support: dict) -> list[Configuration]:
    return [d for d in by_support[(c.ctrl, p.support(c))] if wqo_leq(c, d)]


def check_compatibility(
    p: Protocol,
    n_max: int,
    successors: ConcreteSuccessors = concrete_successors,
    budget: Budget | None = None,
) -> OracleReport:
    """Exhaustively test forward and backward compatibility of the step
    relation with the support-preserving order on populations <= n_max."""
    if n_max < 2:
        raise ValueError("n_max must be at least 2")
    meter = (budget or Budget.from_env()).meter()
    configs = [c for n in range(n_max + 1) for c in all_configurations(p, n)]
    succ = {c: set(successors(p, c)) for c in configs}
    pred: dict[Configuration, set[Configuration]] = defaultdict(set)
    for c, ds in succ.items():
        for d in ds:
            pred[d].add(c)
    by_support: dict[tuple, list[Configuration]] = defaultdict(list)
    for c in configs:
        by_support[(c.ctrl, p.support(c))].append(c)
    meter.check(len(configs))

    report = OracleReport(n_max)
    for src in configs:
        for dst in sorted(succ[src], key=str):
            for big in _upper(p, src, by_support):
                if big == src:
                    continue
                if not any(wqo_leq(dst, b2) for b2 in succ[big]):
                    report.violations.append(("forward", (src, dst, big)))
            for big_dst in _upper(p, dst, by_support):
                if big_dst == dst:
                    continue
                if not any(wqo_leq(src, s2) for s2 in pred[big_dst]):
                    report.violations.append(("backward", (src, dst, big_dst)))
        meter.check(len(configs))
    return report


@dataclass
class OracleVerdict:
    per_population: dict[int, bool]

    @property
    def aggregated(self) -> bool:
        return any(self.per_population.values())

    @property
    def smallest(self) -> int | None:
        hits = [n for n, ok in sorted(self.per_population.items()) if ok]
        return hits[0] if hits else None


def crp_oracle(p: Protocol, phi: Constraint, n_set: Iterable[int], budget: Budget | None = None) -> OracleVerdict:
    """Whether a configuration satisfying ``phi`` is reachable, per population."""
    check_constraint(phi, p)
    out = {}
    for n in n_set:
        report = concrete_reach(p, n, budget)
        out[n] = any(eval_constraint(phi, c, p) for c in report.reachable)
    return OracleVerdict(out)
