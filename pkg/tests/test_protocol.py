import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CORPUS, corpus, corpus_text
from counterabs.protocol import (
    AbstractConfiguration,
    Configuration,
    Kind,
    Primitive,
    ProtocolError,
    ProtocolSyntaxError,
    alpha,
    embed,
    parse_protocol,
    serialize_protocol,
    validate_protocol,
    wqo_leq,
)


def test_lossy_demo_parses(lossy_demo):
    assert len(lossy_demo.controller_states) == 2
    assert len(lossy_demo.user_states) == 3
    assert len(lossy_demo.transitions) == 9
    assert lossy_demo.kind_profile == {Primitive.LOSSY}
    assert lossy_demo.initial_users == {"q1", "q2"}
    assert validate_protocol(lossy_demo) == []


def test_sync_demo_parses(sync_demo):
    # the q1 -> q2 edge carries two labels, a and b
    assert sync_demo.kind_profile == {Primitive.SYNC}
    assert len(sync_demo.transitions) == 9
    assert sync_demo.sync_labels == ("a", "b", "c")


def test_gsync_guard_defaults_and_profile(gsync):
    g = gsync.sync_guards["a"]
    assert g.exists == {"c1", "q1"}
    assert g.forall == {"c1", "c2", "q1", "q2"}
    assert Primitive.GUARDED_SYNC in gsync.kind_profile


def test_forall_defaults_to_all_states():
    text = corpus_text("sync_demo").replace("kind sync", "kind gsync") + "guard @b exists {q1}\n"
    p = parse_protocol(text)
    assert p.sync_guards["b"].forall == {"c1", "c2", "q1", "q2", "q3"}


def test_asm_without_controller_transitions_is_valid(asm):
    assert validate_protocol(asm) == []
    assert asm.kind_profile == {Primitive.ASM}
    assert not asm.has_controller_transitions


def test_mixed_endpoint_rejected():
    text = "protocol bad kind internal\nctrl c init\nuser q init\nt c -> q\n"
    with pytest.raises(ProtocolError) as exc:
        parse_protocol(text)
    assert any("mixes a controller state and a user state" in d for d in exc.value.diagnostics)


def test_empty_initial_users_gives_one_diagnostic():
    text = "protocol bad kind internal\nctrl c init\nuser q\nt q -> q\n"
    with pytest.raises(ProtocolError) as exc:
        parse_protocol(text)
    assert exc.value.diagnostics == ["no initial user state declared"]


def test_syntax_error_has_position():
    text = "protocol x kind lossy\nctrl c init\nuser q init\nt q ! q\n"
    with pytest.raises(ProtocolSyntaxError) as exc:
        parse_protocol(text)
    assert exc.value.line == 4
    assert exc.value.column == 5


def test_duplicate_sync_guard_rejected():
    text = corpus_text("gsync") + "guard @a exists {q1}\n"
    with pytest.raises(ProtocolError, match="duplicate guard"):
        parse_protocol(text)


def test_unknown_state_in_guard_rejected():
    text = "protocol x kind disj\nctrl c init\nuser q init\nt q [zz] q\n"
    with pytest.raises(ProtocolError, match="undeclared state 'zz'"):
        parse_protocol(text)


def test_declared_kind_must_match():
    text = "protocol x kind lossy\nctrl c init\nuser q init\nt q @a q\n"
    with pytest.raises(ProtocolError, match="uses 'sync'"):
        parse_protocol(text)


def test_state_in_both_sets_rejected():
    text = "protocol x kind internal\nctrl c init\nuser c init\n"
    with pytest.raises(ProtocolError, match="both controller and user"):
        parse_protocol(text)


def test_asm_value_must_be_controller_state():
    text = "protocol x kind asm\nctrl c init\nuser q init\nt q w(z) q\n"
    with pytest.raises(ProtocolError, match="not a controller state"):
        parse_protocol(text)


@pytest.mark.parametrize("name", CORPUS)
def test_round_trip(name):
    p = corpus(name)
    q = parse_protocol(serialize_protocol(p))
    assert q.controller_states == p.controller_states
    assert q.user_states == p.user_states
    assert q.initial_controller == p.initial_controller
    assert q.initial_users == p.initial_users
    assert q.transitions == p.transitions
    assert dict(q.sync_guards) == dict(p.sync_guards)
    assert q.declared_kind == p.declared_kind


def test_alpha_examples(lossy_demo):
    assert alpha(lossy_demo, Configuration("c1", (2, 1, 0))) == AbstractConfiguration("c1", frozenset({"q1", "q2"}))
    assert alpha(lossy_demo, Configuration("c2", (0, 0, 0))) == AbstractConfiguration("c2", frozenset())
    assert alpha(lossy_demo, Configuration("c1", (1, 1, 1))).occupied == {"q1", "q2", "q3"}


def test_wqo_examples():
    assert wqo_leq(Configuration("c2", (1, 0, 2)), Configuration("c2", (2, 0, 3)))
    assert not wqo_leq(Configuration("c1", (1, 0, 0)), Configuration("c1", (1, 1, 0)))
    assert not wqo_leq(Configuration("c1", (1, 0, 0)), Configuration("c2", (1, 0, 0)))


configs = st.builds(
    Configuration,
    st.sampled_from(["c1", "c2"]),
    st.tuples(*[st.integers(0, 3)] * 3),
)


@settings(max_examples=200)
@given(configs, configs, configs)
def test_wqo_is_a_partial_order(a, b, c):
    assert wqo_leq(a, a)
    if wqo_leq(a, b) and wqo_leq(b, c):
        assert wqo_leq(a, c)
    if wqo_leq(a, b) and wqo_leq(b, a):
        assert a == b


@settings(max_examples=200)
@given(configs)
def test_alpha_embed_characterizes_support(d):
    p = corpus("lossy_demo")
    for ctrl in p.controller_states:
        for bits in range(8):
            a = AbstractConfiguration(ctrl, frozenset(q for i, q in enumerate(p.user_states) if bits >> i & 1))
            assert (alpha(p, d) == a) == wqo_leq(embed(p, a), d)


def test_transition_kinds_parsed(asm, lossy_demo):
    assert {t.kind for t in asm.transitions} == {Kind.WRITE, Kind.READ}
    assert {t.kind for t in lossy_demo.transitions} == {Kind.BROADCAST, Kind.RECEIVE}
