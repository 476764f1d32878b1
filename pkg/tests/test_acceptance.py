"""End-to-end acceptance checks.

Each test prints one ``PASS criterion N: ...`` or ``FAIL criterion N: ...``
line (also collected into the pytest terminal summary) before asserting.
Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline.
"""

import itertools
import random
import time

from conftest import ACCEPTANCE_LINES, CORPUS, corpus, corpus_path
from counterabs.constraints import ConstraintClass, classify, parse_constraint
from counterabs.crp import concretize_witness, decide_crp, reachable_abstract
from counterabs.dfa import gen_dfa_intersection, intersection_nonempty, random_dfa
from counterabs.oracle import check_compatibility, concrete_reach, crp_oracle
from counterabs.protocol import Configuration, Primitive
from counterabs.semantics import (
    abstract_successors,
    concrete_successors,
    generic_abstract_successors,
    labeled_successors,
    step_bound,
    sync_enabled,
    witness_bound,
)
from counterabs.tcs import NotATcs, decide_crp_geq, decide_crp_geq_zero, to_tcs
from counterabs.traces import (
    BUCHI,
    KindError,
    abstract_traces,
    check_omega,
    concrete_traces,
    load_spec,
    monotone_successors,
    parse_spec,
    trace_of,
)


def verdict(n: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def C(ctrl, *counts):
    return Configuration(ctrl, tuple(counts))


# 1 -------------------------------------------------------------------------------


def test_criterion_1_golden_examples():
    t0 = time.perf_counter()
    lossy_demo, sync_demo, gsync = corpus("lossy_demo"), corpus("sync_demo"), corpus("gsync")
    lossy = labeled_successors(lossy_demo, C("c1", 2, 1, 0), "a") == {
        C("c2", 1, 2, 0), C("c1", 2, 1, 0), C("c2", 2, 1, 0), C("c1", 1, 2, 0)
    }
    sync = labeled_successors(sync_demo, C("c1", 2, 1, 0), "a") == {C("c2", 2, 1, 0), C("c2", 1, 2, 0), C("c2", 0, 3, 0)}
    guarded = (
        sync_enabled(gsync, C("c1", 2, 1, 0), "a"),
        sync_enabled(gsync, C("c2", 0, 2, 0), "a"),
        sync_enabled(gsync, C("c1", 0, 2, 1), "a"),
    ) == (True, False, False)
    secs = time.perf_counter() - t0
    verdict(1, lossy and sync and guarded and secs < 1.0,
            f"lossy={lossy} sync={sync} guarded={guarded} in {secs:.3f}s (limit 1s)")


# 2 -------------------------------------------------------------------------------

PER_PRIMITIVE = ["internal", "lossy_demo", "disj", "sync_demo", "gsync", "asm", "mixed"]


def one_leaver_semantics(p, cfg):
    """Mutated semantics: at most one process leaves each state per step."""
    return {d for d in concrete_successors(p, cfg) if all(a - b <= 1 for a, b in zip(cfg.counts, d.counts))}


def test_criterion_2_compatibility():
    t0 = time.perf_counter()
    counts = {name: len(check_compatibility(corpus(name), 4).violations) for name in PER_PRIMITIVE}
    mutated = len(check_compatibility(corpus("sync_demo"), 4, successors=one_leaver_semantics).violations)
    secs = time.perf_counter() - t0
    ok = not any(counts.values()) and mutated >= 1 and secs < 120
    verdict(2, ok, f"violations {counts}, mutation found {mutated}, {secs:.1f}s (limit 120s)")


# 3 -------------------------------------------------------------------------------


def test_criterion_3_abstraction_precision():
    t0 = time.perf_counter()
    unsound, unrealized = [], []
    for name in CORPUS:
        p = corpus(name)
        reach = reachable_abstract(p)
        image = set()
        for n in range(9):
            img = concrete_reach(p, n).alpha_image
            if n <= 6 and not img <= reach:
                unsound.append((name, n))
            image |= img
        unrealized += [(name, str(a)) for a in reach - image]
    secs = time.perf_counter() - t0
    ok = not unsound and not unrealized and secs < 300
    verdict(3, ok, f"{len(CORPUS)} protocols, unsound={unsound}, unrealized={unrealized}, {secs:.1f}s (limit 300s)")


# 4 -------------------------------------------------------------------------------


def constraint_suite(p):
    qs, cs = p.user_states, p.controller_states
    out = [f"#{q} >= 1" for q in qs] + [f"#{q} >= 2" for q in qs]
    out += [f"#{a} >= 1 & #{b} = 0" for a, b in itertools.permutations(qs, 2)]
    out += [f"ctrl = {c} & #{q} >= 1" for c in cs for q in qs]
    out += [f"ctrl = {c} & #{q} = 0" for c in cs for q in qs]
    return [parse_constraint(s, p) for s in out]


def test_criterion_4_engine_agreement():
    pairs, mismatches = 0, []
    classes = {k: 0 for k in ConstraintClass}
    for name in CORPUS:
        p = corpus(name)
        for phi in constraint_suite(p):
            pairs += 1
            classes[classify(phi)] += 1
            ours = decide_crp(p, phi).reachable
            oracle = crp_oracle(p, phi, range(9)).aggregated
            if ours != oracle:
                mismatches.append((name, str(phi), ours, oracle))
    ok = pairs >= 50 and all(classes.values()) and not mismatches
    summary = ", ".join(f"{k.name}={v}" for k, v in classes.items())
    verdict(4, ok, f"{pairs} pairs ({summary}), mismatches={mismatches[:5]}")


# 5 -------------------------------------------------------------------------------


def test_criterion_5_tcs_algorithms():
    eligible, problems, checked = [], [], 0
    for name in CORPUS:
        p = corpus(name)
        try:
            t = to_tcs(p)
        except NotATcs:
            continue
        eligible.append(name)
        nq = len(p.user_states)
        for phi in constraint_suite(p):
            cls = classify(phi)
            if cls is ConstraintClass.FULL:
                continue
            checked += 1
            expected = decide_crp(p, phi).reachable
            two = decide_crp_geq_zero(t, phi)
            if two.reachable != expected or two.max_run_length > 2 * nq:
                problems.append((name, str(phi), "two-phase", two.reachable, two.max_run_length))
            if cls is ConstraintClass.GEQ:
                sat = decide_crp_geq(t, phi)
                if sat.reachable != expected or sat.rounds > nq:
                    problems.append((name, str(phi), "saturation", sat.reachable, sat.rounds))
    ok = bool(eligible) and not problems
    verdict(5, ok, f"eligible={eligible}, {checked} queries, problems={problems[:5]}")


# 6 -------------------------------------------------------------------------------


def test_criterion_6_dfa_reduction():
    rng = random.Random(2024)
    agree, positives = 0, 0
    for _ in range(10):
        sigma = ("a", "b", "c")[: rng.randint(1, 3)]
        automata = [random_dfa(rng, sigma, 5) for _ in range(3)]
        p, phi = gen_dfa_intersection(automata)
        expected = intersection_nonempty(automata)
        positives += expected
        agree += decide_crp(p, phi).reachable == expected
    verdict(6, agree == 10, f"{agree}/10 random triples agree ({positives} non-empty intersections)")


# 7 -------------------------------------------------------------------------------


def test_criterion_7_bound_validation():
    mismatches, flagged, checked = [], {}, 0
    for name in CORPUS:
        p = corpus(name)
        B = witness_bound(p)
        literal = step_bound(p)
        for a in reachable_abstract(p):
            checked += 1
            direct = abstract_successors(p, a)
            if direct != generic_abstract_successors(p, a, B):
                mismatches.append((name, str(a)))
            if literal != B and direct != generic_abstract_successors(p, a, literal):
                flagged[name] = flagged.get(name, 0) + 1
    # a lower bound than max(step_bound, 2) is only expected to fall short
    # where a moving process must leave a copy behind in its source state
    unexplained = [n for n in flagged if not corpus(n).kind_profile & {Primitive.INTERNAL, Primitive.ASM}]
    ok = not mismatches and not unexplained
    verdict(7, ok, f"{checked} configurations, mismatches at max(step_bound, 2)={mismatches[:5]}; "
                   f"flagged at step_bound (internal/ASM emptying needs 2): {flagged}")


# 8 -------------------------------------------------------------------------------


def test_criterion_8_traces():
    L = 5
    differ = []
    for name in CORPUS:
        p = corpus(name)
        concrete = set()
        for n in range(7):
            concrete |= concrete_traces(p, n, L)
        if concrete != abstract_traces(p, L):
            differ.append(name)

    # spurious loop: the abstraction loops on a forever, every concrete step
    # strictly empties qhat, finite prefixes agree, and omega checking refuses
    spurious = corpus("spurious")
    top = next(a for a in reachable_abstract(spurious) if len(a.occupied) == 2)
    abstract_loop = top in abstract_successors(spurious, top)
    concrete_finite = all(
        d.counts[0] < c.counts[0]
        for n in range(1, 7)
        for c in concrete_reach(spurious, n).reachable
        for d in concrete_successors(spurious, c)
    )
    try:
        check_omega(spurious, load_spec(corpus_path("inf_c2.spec"), BUCHI))
        refused = False
    except KindError:
        refused = True
    guard = abstract_loop and concrete_finite and refused and "spurious" not in differ

    # omega: a replayable accepting lasso and an empty product
    cycle = corpus("cycle")
    neg = load_spec(corpus_path("inf_c2.spec"), BUCHI)
    res = check_omega(cycle, neg)
    lasso = res.counterexample
    replay = False
    if not res.holds:
        seq = lasso.stem + lasso.loop[1:] + [lasso.loop[0]]
        steps_ok = all(b in monotone_successors(cycle, a) for a, b in zip(seq, seq[1:]))
        states = neg.run(lasso.stem_word)[-1]
        for _ in range(len(neg.states) + 1):
            states = _advance(neg, states, lasso.loop_word)
        hits = False
        for letter in lasso.loop_word:
            states = _advance(neg, states, (letter,))
            hits |= bool(states & neg.accepting)
        replay = steps_ok and hits and trace_of(lasso.stem) == lasso.stem_word
    empty = check_omega(corpus("oneshot"), neg).holds and check_omega(
        cycle, parse_spec("state s init\non c1 s -> s\non c2 s -> s\n", BUCHI)
    ).holds

    ok = not differ and guard and replay and empty
    verdict(8, ok, f"Tr=Tr_alpha (L={L}, n<=6) differs on {differ}; spurious guard={guard}; "
                   f"lasso replay={replay}; emptiness={empty}")


def _advance(aut, states, word):
    for letter in word:
        states = frozenset(s2 for s in states for s2 in aut.post(s, letter))
    return states


def test_concretization_of_positive_verdicts():
    """Every positive abstract verdict in the agreement suite comes with a
    concrete run found within the population cap."""
    missing = []
    for name in ["lossy_demo", "sync_demo", "asm", "mixed"]:
        p = corpus(name)
        for phi in constraint_suite(p)[:12]:
            r = decide_crp(p, phi)
            if r.reachable and concretize_witness(p, r.abstract_witness, phi, n_max=8) is None:
                missing.append((name, str(phi)))
    assert not missing
