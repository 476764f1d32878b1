"""Step semantics of counter systems and of their 01-abstraction.

Steps are accelerated: the same local transition may be taken by several
processes at once.  Every step is induced by exactly one primitive.
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Iterator

import networkx as nx

from .protocol import (
    AbstractConfiguration,
    Configuration,
    Kind,
    Primitive,
    Protocol,
    Transition,
)


@dataclass(frozen=True)
class StepWitness:
    """Which local transitions a step takes, with multiplicities."""

    kind: Primitive
    moves: dict[Transition, int] = field(default_factory=dict)
    sender: Transition | None = None
    label: str | None = None

    __hash__ = object.__hash__


@dataclass(frozen=True)
class StepBound:
    value: int

    def __post_init__(self):
        if self.value < 1:
            raise ValueError("step bound must be at least 1")


# ---------------------------------------------------------------------------
# protocol indexes


class _Index:
    """Per-protocol lookup tables used by the step functions."""

    def __init__(self, p: Protocol):
        self.p = p
        n = len(p.user_states)
        self.n = n
        ix = p.user_index
        self.internal_ctrl = [t for t in p.of_kind(Kind.INTERNAL) if p.is_controller(t.src)]
        self.internal_user = [t for t in p.of_kind(Kind.INTERNAL) if not p.is_controller(t.src)]
        self.disj_ctrl = [t for t in p.of_kind(Kind.DISJUNCTIVE) if p.is_controller(t.src)]
        self.disj_user = [t for t in p.of_kind(Kind.DISJUNCTIVE) if not p.is_controller(t.src)]
        self.writes = p.of_kind(Kind.WRITE)
        self.reads = p.of_kind(Kind.READ)

        self.broadcasts: dict[str, list[Transition]] = defaultdict(list)
        self.ctrl_receives: dict[tuple[str, str], list[Transition]] = defaultdict(list)
        self.user_receives: dict[tuple[str, str], list[Transition]] = defaultdict(list)
        for t in p.of_kind(Kind.BROADCAST):
            self.broadcasts[t.label].append(t)
        for t in p.of_kind(Kind.RECEIVE):
            side = self.ctrl_receives if p.is_controller(t.src) else self.user_receives
            side[(t.label, t.src)].append(t)

        self.ctrl_sync: dict[tuple[str, str], list[Transition]] = defaultdict(list)
        self.user_sync: dict[tuple[str, str], list[Transition]] = defaultdict(list)
        for t in p.of_kind(Kind.SYNC):
            side = self.ctrl_sync if p.is_controller(t.src) else self.user_sync
            side[(t.label, t.src)].append(t)
        self.sync_labels = p.sync_labels
        self.ix = ix
        self.unit = [tuple(int(i == j) for j in range(n)) for i in range(n)]

    def move(self, counts: tuple[int, ...], src: str, dst: str, k: int) -> tuple[int, ...]:
        v = list(counts)
        v[self.ix[src]] -= k
        v[self.ix[dst]] += k
        return tuple(v)


_INDEX_CACHE: dict[int, tuple[Protocol, _Index]] = {}


def _index(p: Protocol) -> _Index:
    hit = _INDEX_CACHE.get(id(p))
    if hit is None or hit[0] is not p:
        hit = (p, _Index(p))
        if len(_INDEX_CACHE) > 256:
            _INDEX_CACHE.clear()
        _INDEX_CACHE[id(p)] = hit
    return hit[1]


def _sat(guard: frozenset[str], ctrl: str, occupied: Iterable[str]) -> bool:
    return ctrl in guard or any(q in guard for q in occupied)


def _sync_enabled(p: Protocol, label: str, ctrl: str, occupied: frozenset[str]) -> bool:
    g = p.sync_guards.get(label)
    if g is None:
        return True
    S = occupied | {ctrl}
    return bool(S & g.exists) and S <= g.forall


# ---------------------------------------------------------------------------
# concrete successors


@lru_cache(maxsize=4096)
def _compositions(total: int, parts: int) -> tuple[tuple[int, ...], ...]:
    """All ways to write ``total`` as an ordered sum of ``parts`` naturals."""
    if parts == 0:
        return ((),) if total == 0 else ()
    out = []
    for bars in itertools.combinations(range(total + parts - 1), parts - 1):
        prev, comp = -1, []
        for b in bars:
            comp.append(b - prev - 1)
            prev = b
        comp.append(total + parts - 2 - prev)
        out.append(tuple(comp))
    return tuple(out)


def _spread(ix: _Index, count: int, targets: list[str]) -> set[tuple[int, ...]]:
    """Contribution vectors of ``count`` processes split over ``targets``."""
    if count == 0:
        return {(0,) * ix.n}
    tidx = [ix.ix[t] for t in targets]
    out = set()
    for comp in _compositions(count, len(tidx)):
        v = [0] * ix.n
        for i, k in zip(tidx, comp):
            v[i] += k
        out.add(tuple(v))
    return out


def _sum_all(parts: list[set[tuple[int, ...]]], n: int) -> set[tuple[int, ...]]:
    acc = {(0,) * n}
    for part in parts:
        acc = {tuple(x + y for x, y in zip(a, b)) for a in acc for b in part}
    return acc


def _successors_internal(ix: _Index, cfg: Configuration) -> Iterator[Configuration]:
    for t in ix.internal_ctrl:
        if cfg.ctrl == t.src:
            yield Configuration(t.dst, cfg.counts)
    for t in ix.internal_user:
        for i in range(1, cfg.counts[ix.ix[t.src]] + 1):
            yield Configuration(cfg.ctrl, ix.move(cfg.counts, t.src, t.dst, i))


def _successors_disj(ix: _Index, cfg: Configuration) -> Iterator[Configuration]:
    p = ix.p
    occ = p.support(cfg)
    for t in ix.disj_ctrl:
        if cfg.ctrl == t.src and _sat(t.guard, cfg.ctrl, occ) and _sat(t.guard, t.dst, occ):
            yield Configuration(t.dst, cfg.counts)
    for t in ix.disj_user:
        if not _sat(t.guard, cfg.ctrl, occ):
            continue
        for i in range(1, cfg.counts[ix.ix[t.src]] + 1):
            counts = ix.move(cfg.counts, t.src, t.dst, i)
            new_occ = (q for q, k in zip(p.user_states, counts) if k)
            if _sat(t.guard, cfg.ctrl, new_occ):
                yield Configuration(cfg.ctrl, counts)


def _successors_asm(ix: _Index, cfg: Configuration) -> Iterator[Configuration]:
    p = ix.p
    for t in ix.writes:
        ctrl = p.asm_written(cfg.ctrl, t.label)
        for i in range(1, cfg.counts[ix.ix[t.src]] + 1):
            yield Configuration(ctrl, ix.move(cfg.counts, t.src, t.dst, i))
    for t in ix.reads:
        if p.asm_value(cfg.ctrl) != t.label:
            continue
        for i in range(1, cfg.counts[ix.ix[t.src]] + 1):
            yield Configuration(cfg.ctrl, ix.move(cfg.counts, t.src, t.dst, i))


def _receive_targets(ix: _Index, m: str, q: str) -> list[str]:
    return sorted({q} | {t.dst for t in ix.user_receives.get((m, q), ())})


def _successors_lossy(ix: _Index, cfg: Configuration, only: str | None = None) -> Iterator[Configuration]:
    p = ix.p
    for m, senders in ix.broadcasts.items():
        if only is not None and m != only:
            continue
        for t0 in senders:
            if p.is_controller(t0.src):
                if cfg.ctrl != t0.src:
                    continue
                ctrls = [t0.dst]
                parts = [_spread(ix, k, _receive_targets(ix, m, q)) for q, k in zip(p.user_states, cfg.counts)]
            else:
                k0 = cfg.counts[ix.ix[t0.src]]
                if k0 == 0:
                    continue
                ctrls = sorted({cfg.ctrl} | {t.dst for t in ix.ctrl_receives.get((m, cfg.ctrl), ())})
                parts = []
                for q, k in zip(p.user_states, cfg.counts):
                    if q != t0.src:
                        parts.append(_spread(ix, k, _receive_targets(ix, m, q)))
                        continue
                    part = set()
                    dst_unit = ix.unit[ix.ix[t0.dst]]
                    for j in range(1, k + 1):
                        for rest in _spread(ix, k - j, _receive_targets(ix, m, q)):
                            part.add(tuple(r + j * u for r, u in zip(rest, dst_unit)))
                    parts.append(part)
            for counts in _sum_all(parts, ix.n):
                for c in ctrls:
                    yield Configuration(c, counts)


def _sync_targets(ix: _Index, label: str, q: str) -> list[str]:
    return sorted({t.dst for t in ix.user_sync.get((label, q), ())})


def _successors_sync(ix: _Index, cfg: Configuration, only: str | None = None) -> Iterator[Configuration]:
    p = ix.p
    occ = p.support(cfg)
    for label in ix.sync_labels:
        if only is not None and label != only:
            continue
        ctrl_moves = ix.ctrl_sync.get((label, cfg.ctrl), ())
        movers = [q for q in occ if (label, q) in ix.user_sync]
        if not ctrl_moves and not movers:
            continue
        if not _sync_enabled(p, label, cfg.ctrl, occ):
            continue
        ctrls = sorted({t.dst for t in ctrl_moves}) or [cfg.ctrl]
        parts = []
        for q, k in zip(p.user_states, cfg.counts):
            targets = _sync_targets(ix, label, q)
            parts.append(_spread(ix, k, targets or [q]))
        for counts in _sum_all(parts, ix.n):
            for c in ctrls:
                yield Configuration(c, counts)


def concrete_successors(p: Protocol, cfg: Configuration) -> set[Configuration]:
    """All configurations reachable from ``cfg`` in one (accelerated) step."""
    ix = _index(p)
    out: set[Configuration] = set()
    for gen in (_successors_internal, _successors_disj, _successors_asm, _successors_lossy, _successors_sync):
        out.update(gen(ix, cfg))
    return out


def labeled_successors(p: Protocol, cfg: Configuration, label: str) -> set[Configuration]:
    """Successors by broadcast steps on message ``label`` or synchronization
    steps on ``label``."""
    ix = _index(p)
    return set(_successors_lossy(ix, cfg, label)) | set(_successors_sync(ix, cfg, label))


def sync_enabled(p: Protocol, cfg: Configuration, label: str) -> bool:
    """Whether a synchronization step on ``label`` may fire from ``cfg``."""
    ix = _index(p)
    occ = p.support(cfg)
    if label not in ix.sync_labels:
        return False
    if not ix.ctrl_sync.get((label, cfg.ctrl)) and not any((label, q) in ix.user_sync for q in occ):
        return False
    return _sync_enabled(p, label, cfg.ctrl, occ)


# ---------------------------------------------------------------------------
# step membership


def _single_move(ix: _Index, src: Configuration, dst: Configuration, t: Transition) -> int | None:
    """Number of processes taking user transition ``t`` if src->dst is exactly that."""
    i, j = ix.ix[t.src], ix.ix[t.dst]
    if i == j:
        return src.counts[i] if src.counts == dst.counts and src.counts[i] >= 1 else None
    k = src.counts[i] - dst.counts[i]
    if k < 1 or dst.counts[j] - src.counts[j] != k:
        return None
    for idx, (a, b) in enumerate(zip(src.counts, dst.counts)):
        if idx not in (i, j) and a != b:
            return None
    return k


def _transport(
    ix: _Index,
    supply: tuple[int, ...],
    demand: tuple[int, ...],
    options: dict[str, list[tuple[object, str]]],
    forced: tuple[str, object, str] | None = None,
) -> dict[tuple[str, object], int] | None:
    """Split ``supply`` over per-state options so as to produce ``demand``.

    ``options[q]`` lists (key, target) pairs usable by processes in ``q``;
    ``forced`` names one option that must carry at least one process.
    Returns the number of processes per (state, key) or None if infeasible.
    """
    supply, demand = list(supply), list(demand)
    if forced is not None:
        q, key, target = forced
        supply[ix.ix[q]] -= 1
        demand[ix.ix[target]] -= 1
        if supply[ix.ix[q]] < 0 or demand[ix.ix[target]] < 0:
            return None
    total = sum(supply)
    if total != sum(demand):
        return None
    flow_of: dict[tuple[str, object], int] = defaultdict(int)
    if forced is not None:
        flow_of[(forced[0], forced[1])] += 1
    if total == 0:
        return dict(flow_of)
    g = nx.DiGraph()
    states = ix.p.user_states
    for qi, q in enumerate(states):
        if supply[qi]:
            g.add_edge("source", ("q", q), capacity=supply[qi])
            for n, (key, target) in enumerate(options.get(q, ())):
                g.add_edge(("q", q), ("o", q, n))
                g.add_edge(("o", q, n), ("d", target))
        if demand[qi]:
            g.add_edge(("d", q), "sink", capacity=demand[qi])
    if "sink" not in g:
        return None
    value, flows = nx.maximum_flow(g, "source", "sink")
    if value != total:
        return None
    for q in states:
        for n, (key, _) in enumerate(options.get(q, ())):
            f = flows.get(("q", q), {}).get(("o", q, n), 0)
            if f:
                flow_of[(q, key)] += f
    return dict(flow_of)


def _moves_from_flow(flow: dict[tuple[str, object], int]) -> dict[Transition, int]:
    moves: dict[Transition, int] = defaultdict(int)
    for (q, key), k in flow.items():
        if isinstance(key, Transition):
            moves[key] += k
        elif isinstance(key, tuple) and key[0] == "send":
            moves[key[1]] += k
    return dict(moves)


def is_step(p: Protocol, src: Configuration, dst: Configuration) -> StepWitness | None:
    """Return a witness iff ``src -> dst`` is a step of ``p``.

    Decided constructively per primitive; lossy broadcast and
    synchronization reduce to a small transportation (max-flow) problem.
    """
    if src.size != dst.size:
        raise ValueError(f"size mismatch: {src} has size {src.size}, {dst} has size {dst.size}")
    ix = _index(p)
    same_users = src.counts == dst.counts

    for t in ix.internal_ctrl:
        if src.ctrl == t.src and dst.ctrl == t.dst and same_users:
            return StepWitness(Primitive.INTERNAL, {t: 1})
    if src.ctrl == dst.ctrl:
        for t in ix.internal_user:
            k = _single_move(ix, src, dst, t)
            if k:
                return StepWitness(Primitive.INTERNAL, {t: k})

    src_occ, dst_occ = p.support(src), p.support(dst)
    for t in ix.disj_ctrl:
        if (src.ctrl == t.src and dst.ctrl == t.dst and same_users
                and _sat(t.guard, src.ctrl, src_occ) and _sat(t.guard, dst.ctrl, dst_occ)):
            return StepWitness(Primitive.DISJUNCTIVE, {t: 1})
    if src.ctrl == dst.ctrl:
        for t in ix.disj_user:
            if not (_sat(t.guard, src.ctrl, src_occ) and _sat(t.guard, dst.ctrl, dst_occ)):
                continue
            k = _single_move(ix, src, dst, t)
            if k:
                return StepWitness(Primitive.DISJUNCTIVE, {t: k})

    for t in ix.writes:
        if dst.ctrl == p.asm_written(src.ctrl, t.label):
            k = _single_move(ix, src, dst, t)
            if k:
                return StepWitness(Primitive.ASM, {t: k})
    if src.ctrl == dst.ctrl:
        for t in ix.reads:
            if p.asm_value(src.ctrl) == t.label:
                k = _single_move(ix, src, dst, t)
                if k:
                    return StepWitness(Primitive.ASM, {t: k})

    w = _lossy_step(ix, src, dst)
    if w is not None:
        return w
    return _sync_step(ix, src, dst, src_occ)


def _lossy_step(ix: _Index, src: Configuration, dst: Configuration) -> StepWitness | None:
    p = ix.p
    for m, senders in sorted(ix.broadcasts.items()):
        receive_opts = {
            q: [("stay", q)] + [(t, t.dst) for t in ix.user_receives.get((m, q), ())]
            for q in p.user_states
        }
        for t0 in senders:
            if p.is_controller(t0.src):
                if src.ctrl != t0.src or dst.ctrl != t0.dst:
                    continue
                flow = _transport(ix, src.counts, dst.counts, receive_opts)
                if flow is not None:
                    moves = _moves_from_flow(flow)
                    moves[t0] = 1
                    return StepWitness(Primitive.LOSSY, moves, sender=t0, label=m)
                continue
            if src.counts[ix.ix[t0.src]] == 0:
                continue
            ctrl_choices: list[Transition | None] = []
            if dst.ctrl == src.ctrl:
                ctrl_choices.append(None)
            ctrl_choices += [t for t in ix.ctrl_receives.get((m, src.ctrl), ()) if t.dst == dst.ctrl]
            if not ctrl_choices:
                continue
            opts = dict(receive_opts)
            opts[t0.src] = opts[t0.src] + [(("send", t0), t0.dst)]
            flow = _transport(ix, src.counts, dst.counts, opts, forced=(t0.src, ("send", t0), t0.dst))
            if flow is None:
                continue
            moves = _moves_from_flow(flow)
            if ctrl_choices[0] is not None:
                moves[ctrl_choices[0]] = 1
            return StepWitness(Primitive.LOSSY, moves, sender=t0, label=m)
    return None


def _sync_step(ix: _Index, src: Configuration, dst: Configuration, occ: frozenset[str]) -> StepWitness | None:
    p = ix.p
    for label in ix.sync_labels:
        ctrl_moves = ix.ctrl_sync.get((label, src.ctrl), ())
        if not ctrl_moves and not any((label, q) in ix.user_sync for q in occ):
            continue
        if not _sync_enabled(p, label, src.ctrl, occ):
            continue
        if ctrl_moves:
            ctrl_choice = next((t for t in ctrl_moves if t.dst == dst.ctrl), None)
            if ctrl_choice is None:
                continue
        elif dst.ctrl != src.ctrl:
            continue
        else:
            ctrl_choice = None
        opts = {
            q: [(t, t.dst) for t in ix.user_sync.get((label, q), ())] or [("stay", q)]
            for q in p.user_states
        }
        flow = _transport(ix, src.counts, dst.counts, opts)
        if flow is None:
            continue
        moves = _moves_from_flow(flow)
        if ctrl_choice is not None:
            moves[ctrl_choice] = 1
        kind = Primitive.GUARDED_SYNC if label in p.sync_guards else Primitive.SYNC
        return StepWitness(kind, moves, label=label)
    return None


# ---------------------------------------------------------------------------
# bounds

_PRIMITIVE_BOUND = {
    Primitive.INTERNAL: lambda q: 1,
    Primitive.ASM: lambda q: 1,
    Primitive.DISJUNCTIVE: lambda q: 2,
    Primitive.LOSSY: lambda q: q,
    Primitive.SYNC: lambda q: q,
    Primitive.GUARDED_SYNC: lambda q: q,
}


def step_bound(p: Protocol) -> StepBound:
    """Per-primitive bound on user counts needed to witness abstract steps.

    lossy |Q|, disjunctive 2, (guarded) synchronization |Q|, ASM 1,
    internal 1; the maximum over the primitives present.
    """
    nq = len(p.user_states)
    return StepBound(max([_PRIMITIVE_BOUND[k](nq) for k in p.kind_profile] + [1]))


def witness_bound(p: Protocol) -> StepBound:
    """Bound that is sufficient for the accelerated semantics.

    Keeping a source state occupied while some of its processes take an
    internal or ASM transition needs two processes there, so those
    primitives need 2 rather than the value reported by ``step_bound``.
    """
    b = step_bound(p).value
    if p.kind_profile & {Primitive.INTERNAL, Primitive.ASM}:
        b = max(b, 2)
    return StepBound(b)


# ---------------------------------------------------------------------------
# abstract successors


def generic_abstract_successors(p: Protocol, a: AbstractConfiguration, bound: StepBound | int) -> set[AbstractConfiguration]:
    """Abstract successors found by enumerating every concrete witness whose
    occupied counts lie in 1..bound."""
    B = bound.value if isinstance(bound, StepBound) else bound
    occ = [q for q in p.user_states if q in a.occupied]
    out = set()
    for values in itertools.product(range(1, B + 1), repeat=len(occ)):
        counts = dict(zip(occ, values))
        src = p.configuration(a.ctrl, counts)
        for dst in concrete_successors(p, src):
            out.add(p.alpha(dst))
    return out


def _nonempty_subsets(items: Iterable[str]) -> list[frozenset[str]]:
    items = sorted(set(items))
    return [frozenset(c) for r in range(1, len(items) + 1) for c in itertools.combinations(items, r)]


def _unions(choices: list[list[frozenset[str]]]) -> set[frozenset[str]]:
    acc = {frozenset()}
    for options in choices:
        acc = {x | y for x in acc for y in options}
    return acc


def abstract_successors(p: Protocol, a: AbstractConfiguration) -> set[AbstractConfiguration]:
    """Successors in the 01-counter system, by direct per-primitive rules."""
    ix = _index(p)
    occ, c = a.occupied, a.ctrl
    out: set[AbstractConfiguration] = set()
    add = out.add

    for t in ix.internal_ctrl:
        if c == t.src:
            add(AbstractConfiguration(t.dst, occ))
    for t in ix.internal_user:
        if t.src in occ:
            add(AbstractConfiguration(c, occ | {t.dst}))
            if t.src != t.dst:
                add(AbstractConfiguration(c, (occ - {t.src}) | {t.dst}))

    for t in ix.disj_ctrl:
        if c == t.src and _sat(t.guard, c, occ) and _sat(t.guard, t.dst, occ):
            add(AbstractConfiguration(t.dst, occ))
    for t in ix.disj_user:
        if t.src not in occ or not _sat(t.guard, c, occ):
            continue
        add(AbstractConfiguration(c, occ | {t.dst}))
        if t.src != t.dst:
            emptied = (occ - {t.src}) | {t.dst}
            if _sat(t.guard, c, emptied):
                add(AbstractConfiguration(c, emptied))

    for t in ix.writes:
        if t.src in occ:
            ctrl = p.asm_written(c, t.label)
            add(AbstractConfiguration(ctrl, occ | {t.dst}))
            add(AbstractConfiguration(ctrl, (occ - {t.src}) | {t.dst}))
    for t in ix.reads:
        if t.src in occ and p.asm_value(c) == t.label:
            add(AbstractConfiguration(c, occ | {t.dst}))
            add(AbstractConfiguration(c, (occ - {t.src}) | {t.dst}))

    for m, senders in ix.broadcasts.items():
        stay_or_receive = {q: _nonempty_subsets(_receive_targets(ix, m, q)) for q in occ}
        for t0 in senders:
            if p.is_controller(t0.src):
                if c != t0.src:
                    continue
                ctrls = [t0.dst]
                choices = [stay_or_receive[q] for q in occ]
            else:
                if t0.src not in occ:
                    continue
                ctrls = {c} | {t.dst for t in ix.ctrl_receives.get((m, c), ())}
                choices = []
                for q in occ:
                    if q == t0.src:
                        base = frozenset({t0.dst})
                        choices.append([base] + [base | s for s in stay_or_receive[q]])
                    else:
                        choices.append(stay_or_receive[q])
            for new_occ in _unions(choices):
                for ctrl in ctrls:
                    add(AbstractConfiguration(ctrl, new_occ))

    for label in ix.sync_labels:
        ctrl_moves = ix.ctrl_sync.get((label, c), ())
        if not ctrl_moves and not any((label, q) in ix.user_sync for q in occ):
            continue
        if not _sync_enabled(p, label, c, occ):
            continue
        ctrls = {t.dst for t in ctrl_moves} or {c}
        choices = []
        for q in occ:
            targets = _sync_targets(ix, label, q)
            choices.append(_nonempty_subsets(targets) if targets else [frozenset({q})])
        for new_occ in _unions(choices):
            for ctrl in ctrls:
                add(AbstractConfiguration(ctrl, new_occ))
    return out


def config_key(a: AbstractConfiguration) -> tuple:
    """Deterministic sort key for abstract configurations."""
    return (a.ctrl, len(a.occupied), tuple(sorted(a.occupied)))
