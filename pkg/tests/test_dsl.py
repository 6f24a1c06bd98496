import random

import pytest
from hypothesis import given, settings, strategies as st

from flowthing.core import Endpoint, FlowArc, Machine, Model, Ruleset, Sphere, StageKind as K
from flowthing.dsl import ParseError, SerializeError, parse, quote, serialize, tokenize

from conftest import CORPUS, MODELS
from modelgen import random_model

MINIMAL = """sphere S {
  machine M of Thing {
    stages: create, release
  }
}

flow S.M.create -> S.M.release
"""


def test_parse_minimal():
    model = parse(MINIMAL)
    assert model == Model(
        (Sphere("S", (), (Machine("M", "Thing", (K.CREATE, K.RELEASE)),)),),
        (FlowArc(Endpoint(("S", "M"), K.CREATE), Endpoint(("S", "M"), K.RELEASE)),),
    )
    arc = model.flows[0]
    assert arc.src == Endpoint(("S", "M"), K.CREATE)
    assert arc.dst == Endpoint(("S", "M"), K.RELEASE)
    assert arc.guard is None
    assert (arc.span.line, arc.span.column) == (7, 1)


def test_empty_source():
    assert parse("") == Model()
    assert parse("  \n# only a comment\n") == Model()
    assert serialize(Model()) == ""


def test_unclosed_sphere():
    with pytest.raises(ParseError) as info:
        parse("sphere S {")
    err = info.value
    assert err.span.line == 1
    assert "'}'" in err.expected
    assert err.found == "end of input"


@pytest.mark.parametrize("src,line,col", [
    ("sphere {", 1, 8),
    ("sphere S {\n  machine M Thing {", 2, 13),
    ("sphere S {\n  machine M of T {\n    stages: create, bogus\n  }\n}", 3, 21),
    ("flow A.B.create => A.B.release", 1, 17),
    ("flow A.B -> A.C.create", 1, 10),
    ("sphere S { note \"open", 1, 17),
    ("sphere S { note \"bad \\n escape\" }", 1, 22),
    ("trigger A.M.create -> A.M.create when guard", 1, 39),
    ("machine M of T { stages: create }", 1, 1),
    ("sphere S { machine M of T { stages: create, } }", 1, 45),
])
def test_error_positions(src, line, col):
    with pytest.raises(ParseError) as info:
        parse(src)
    assert (info.value.span.line, info.value.span.column) == (line, col)


def test_keywords_are_reserved():
    with pytest.raises(ParseError):
        parse("sphere flow { }")
    with pytest.raises(ParseError):
        parse("sphere S { machine create of T { stages: create } }")


def test_crlf_and_comments():
    src = MINIMAL.replace("\n", "\r\n").replace("sphere S {", "sphere S { # outer")
    assert parse(src) == parse(MINIMAL)


def test_string_escapes():
    src = 'sphere S { note "say \\"hi\\" \\\\ # not a comment" }'
    model = parse(src)
    assert model.roots[0].annotations == ('say "hi" \\ # not a comment',)
    assert parse(serialize(model)) == model


def test_quote():
    assert quote('a"b\\c') == '"a\\"b\\\\c"'


def test_guards_and_nesting():
    src = """sphere A {
  sphere B {
    machine M of T {
      stages: create, release
    }
  }
}

trigger A.B.M.create -> A.B.M.release when "ok"
"""
    model = parse(src)
    assert model.triggers[0].guard == "ok"
    assert model.triggers[0].src.machine_path == ("A", "B", "M")
    assert serialize(model) == src


def test_ruleset_is_a_parse_option():
    assert parse(MINIMAL).ruleset is Ruleset.STRICT
    assert parse(MINIMAL, "lenient").ruleset is Ruleset.LENIENT


def test_serialize_orders_notes_first():
    src = 'sphere S {\n  sphere T {\n  }\n  machine M of X { stages: create }\n  note "n"\n}\n'
    assert serialize(parse(src)) == (
        'sphere S {\n  note "n"\n  machine M of X {\n    stages: create\n  }\n'
        '  sphere T {\n  }\n}\n'
    )


def test_serialize_rejects_unrepresentable():
    with pytest.raises(SerializeError):
        serialize(Model((Sphere("bad name"),)))
    with pytest.raises(SerializeError):
        serialize(Model((Sphere("S", annotations=("line\nbreak",)),)))
    with pytest.raises(SerializeError):
        serialize(Model((Sphere("S", (), (Machine("M", "T", ()),)),)))
    with pytest.raises(SerializeError):
        serialize(Model((Sphere("S"), Sphere("S"))))
    with pytest.raises(SerializeError):
        serialize(Model((Sphere("flow"),)))


def test_tokenize_positions():
    toks = tokenize('sphere  S {\n "x"}')
    assert [(t.kind, t.line, t.column) for t in toks] == [
        ("kw", 1, 1), ("ident", 1, 9), ("punct", 1, 11), ("string", 2, 2),
        ("punct", 2, 5), ("eof", 2, 6)]


@pytest.mark.parametrize("name", CORPUS)
def test_corpus_is_canonical(name):
    text = (MODELS / name).read_text(encoding="utf-8")
    model = parse(text)
    assert serialize(model) == text
    assert parse(serialize(model)) == model


@pytest.mark.parametrize("seed", range(200))
def test_random_model_round_trip(seed):
    model = random_model(random.Random(seed))
    text = serialize(model)
    again = parse(text)
    assert again == model
    assert serialize(again) == text


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=2**32))
def test_round_trip_property(seed):
    model = random_model(random.Random(seed))
    assert parse(serialize(model)) == model


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet='sphere machine of stages flow trigger when note create {}:,.-> "\\#\nAbc_', max_size=80))
def test_errors_point_inside_the_source(src):
    try:
        parse(src)
    except ParseError as err:
        lines = src.replace("\r\n", "\n").split("\n")
        assert 1 <= err.span.line <= len(lines)
        assert 1 <= err.span.column <= len(lines[err.span.line - 1]) + 1
        assert err.expected
