import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CORPUS, corpus
from counterabs.crp import reachable_abstract
from counterabs.oracle import all_configurations
from counterabs.protocol import AbstractConfiguration, Configuration, Primitive, parse_protocol
from counterabs.semantics import (
    StepBound,
    abstract_successors,
    concrete_successors,
    generic_abstract_successors,
    is_step,
    labeled_successors,
    step_bound,
    sync_enabled,
    witness_bound,
)


def A(ctrl, *occ):
    return AbstractConfiguration(ctrl, frozenset(occ))


def C(ctrl, *counts):
    return Configuration(ctrl, tuple(counts))


# -- worked examples ---------------------------------------------------------


def test_lossy_example_successors(lossy_demo):
    got = labeled_successors(lossy_demo, C("c1", 2, 1, 0), "a")
    assert got == {C("c2", 1, 2, 0), C("c1", 2, 1, 0), C("c2", 2, 1, 0), C("c1", 1, 2, 0)}


def test_sync_example_successors(sync_demo):
    got = labeled_successors(sync_demo, C("c1", 2, 1, 0), "a")
    assert got == {C("c2", 2, 1, 0), C("c2", 1, 2, 0), C("c2", 0, 3, 0)}


def test_guarded_sync_example_enabledness(gsync):
    assert sync_enabled(gsync, C("c1", 2, 1, 0), "a")
    assert not sync_enabled(gsync, C("c2", 0, 2, 0), "a")
    assert not sync_enabled(gsync, C("c1", 0, 2, 1), "a")
    assert not labeled_successors(gsync, C("c1", 0, 2, 1), "a")


def test_asm_example_run(asm):
    run = [C("00", 2, 0, 0), C("10", 1, 1, 0), C("01", 1, 1, 0), C("01", 1, 0, 1)]
    for src, dst in zip(run, run[1:]):
        assert dst in concrete_successors(asm, src)
        assert is_step(asm, src, dst) is not None


def test_asm_single_user_cannot_reach_q3(asm):
    from counterabs.oracle import concrete_reach

    reach = concrete_reach(asm, 1).reachable
    assert all(c.counts[2] == 0 for c in reach)


# -- step membership ---------------------------------------------------------


def test_is_step_lossy_witness(lossy_demo):
    w = is_step(lossy_demo, C("c1", 2, 1, 0), C("c2", 1, 2, 0))
    assert w is not None and w.kind is Primitive.LOSSY
    moved = {str(t) for t in w.moves}
    assert {"q1 !a q1", "c1 ?a c2", "q1 ?a q2"} <= moved


def test_is_step_sync_rejects_stutter(sync_demo):
    assert is_step(sync_demo, C("c1", 2, 1, 0), C("c1", 2, 1, 0)) is None


def test_is_step_internal_self_loop():
    p = parse_protocol("protocol x kind internal\nctrl c init\nuser q init\nt q -> q\n")
    assert is_step(p, C("c", 2), C("c", 2)) is not None


def test_is_step_size_mismatch(lossy_demo):
    with pytest.raises(ValueError, match="size mismatch"):
        is_step(lossy_demo, C("c1", 1, 0, 0), C("c1", 2, 0, 0))


@pytest.mark.parametrize("name", CORPUS)
def test_is_step_matches_successors(name):
    p = corpus(name)
    for n in range(4):
        configs = all_configurations(p, n)
        for src in configs:
            succ = concrete_successors(p, src)
            for dst in configs:
                assert (is_step(p, src, dst) is not None) == (dst in succ), (src, dst)


@pytest.mark.parametrize("name", CORPUS)
def test_steps_preserve_size_and_are_sound(name):
    p = corpus(name)
    for n in range(5):
        for src in all_configurations(p, n):
            abs_succ = abstract_successors(p, p.alpha(src))
            for dst in concrete_successors(p, src):
                assert dst.size == src.size
                assert p.alpha(dst) in abs_succ


# -- bounds -----------------------------------------------------------------


def test_step_bound_values(lossy_demo, asm):
    assert step_bound(lossy_demo).value == 3
    assert step_bound(asm).value == 1
    mixed = parse_protocol(
        "protocol m kind mixed\nctrl a init\nctrl b\nuser p init\nuser q\nt p [q] q\nt p w(b) q\n"
    )
    assert step_bound(mixed).value == 2


def test_witness_bound_covers_emptying(asm):
    assert witness_bound(asm).value == 2
    assert witness_bound(corpus("lossy_demo")).value == 3


def test_step_bound_rejects_zero():
    with pytest.raises(ValueError):
        StepBound(0)


def test_generic_lossy_example(lossy_demo):
    got = generic_abstract_successors(lossy_demo, A("c1", "q1"), 3)
    assert {A("c2", "q1", "q2"), A("c1", "q1", "q2"), A("c2", "q1"), A("c1", "q1")} <= got


def test_generic_asm_write_needs_two_processes():
    p = parse_protocol("protocol w kind asm\nctrl c init\nctrl x\nuser p init\nuser q\nt p w(x) q\n")
    assert generic_abstract_successors(p, A("c", "p"), 1) == {A("x", "q")}
    assert generic_abstract_successors(p, A("c", "p"), 2) == {A("x", "q"), A("x", "p", "q")}
    assert abstract_successors(p, A("c", "p")) == {A("x", "q"), A("x", "p", "q")}


def test_generic_no_enabled_transition():
    p = parse_protocol("protocol x kind disj\nctrl c init\nuser p init\nuser q\nt p [q] q\n")
    assert generic_abstract_successors(p, A("c", "p"), 2) == set()
    assert abstract_successors(p, A("c", "p")) == set()


# -- direct abstract rules ----------------------------------------------------


def test_sync_abstract_example(sync_demo):
    got = {b for b in abstract_successors(sync_demo, A("c1", "q1", "q2")) if b.ctrl == "c2"}
    assert got == {A("c2", "q1", "q2"), A("c2", "q2")}


def test_gsync_abstract_disabled(gsync, sync_demo):
    # only a-steps move the controller from c1 to c2
    assert all(b.ctrl == "c1" for b in abstract_successors(gsync, A("c1", "q2", "q3")))
    assert any(b.ctrl == "c2" for b in abstract_successors(sync_demo, A("c1", "q2", "q3")))
    assert any(b.ctrl == "c2" for b in abstract_successors(gsync, A("c1", "q1", "q2")))


def test_disjunctive_self_guard_cannot_empty():
    p = parse_protocol("protocol x kind disj\nctrl c init\nuser p init\nuser q\nt p [p] q\n")
    assert abstract_successors(p, A("c", "p")) == {A("c", "p", "q")}
    assert generic_abstract_successors(p, A("c", "p"), 2) == {A("c", "p", "q")}


@pytest.mark.parametrize("name", CORPUS)
def test_direct_rules_equal_generic_oracle(name):
    p = corpus(name)
    B = witness_bound(p)
    for a in reachable_abstract(p):
        assert abstract_successors(p, a) == generic_abstract_successors(p, a, B), a


@pytest.mark.parametrize("name", CORPUS)
def test_generic_oracle_stable_above_bound(name):
    p = corpus(name)
    B = witness_bound(p).value
    for a in reachable_abstract(p):
        assert generic_abstract_successors(p, a, B + 1) == generic_abstract_successors(p, a, B), a


def test_bound_discrepancy_is_confined_to_internal_and_asm():
    for name in CORPUS:
        p = corpus(name)
        if witness_bound(p) == step_bound(p):
            continue
        assert p.kind_profile & {Primitive.INTERNAL, Primitive.ASM}


# -- random protocols -------------------------------------------------------------


@st.composite
def small_protocols(draw):
    users = ["p", "q", "r"]
    ctrls = ["c", "d"]
    lines = ["protocol rnd kind mixed", "ctrl c init", "ctrl d", "user p init", "user q init", "user r"]
    for _ in range(draw(st.integers(1, 5))):
        kind = draw(st.sampled_from(["int", "bc", "rc", "dj", "sy", "w", "r"]))
        side = users if kind in ("w", "r") or draw(st.booleans()) else ctrls
        s, d = draw(st.sampled_from(side)), draw(st.sampled_from(side))
        if kind == "int":
            lines.append(f"t {s} -> {d}")
        elif kind == "bc":
            lines.append(f"t {s} !m {d}")
        elif kind == "rc":
            lines.append(f"t {s} ?m {d}")
        elif kind == "dj":
            g = draw(st.lists(st.sampled_from(users + ctrls), min_size=1, max_size=2, unique=True))
            lines.append(f"t {s} [{','.join(g)}] {d}")
        elif kind == "sy":
            lines.append(f"t {s} @{draw(st.sampled_from('ab'))} {d}")
        else:
            lines.append(f"t {s} {kind}({draw(st.sampled_from(ctrls))}) {d}")
    if draw(st.booleans()) and any("@a" in line for line in lines):
        ex = draw(st.lists(st.sampled_from(users + ctrls), min_size=1, max_size=3, unique=True))
        lines.append(f"guard @a exists {{{','.join(ex)}}}")
    return parse_protocol("\n".join(lines) + "\n")


@settings(max_examples=60, deadline=None)
@given(small_protocols())
def test_random_protocols_direct_equals_generic(p):
    B = witness_bound(p)
    for ctrl in p.controller_states:
        for bits in range(8):
            a = A(ctrl, *[q for i, q in enumerate(p.user_states) if bits >> i & 1])
            assert abstract_successors(p, a) == generic_abstract_successors(p, a, B)


@settings(max_examples=40, deadline=None)
@given(small_protocols())
def test_random_protocols_is_step_matches_successors(p):
    for n in range(3):
        configs = all_configurations(p, n)
        for src, dst in itertools.product(configs, configs):
            assert (is_step(p, src, dst) is not None) == (dst in concrete_successors(p, src))
