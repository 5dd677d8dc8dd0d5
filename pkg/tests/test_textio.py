import random

import pytest
from hypothesis import given, settings, strategies as st

from hengine import casepack as cp
from hengine.matcher import Leaf, Not
from hengine.model import InstanceGraph
from hengine.rules import apply_rule
from hengine.textio import (
    DSLSyntaxError,
    ParseError,
    ResolutionError,
    parse_model,
    parse_system,
    print_model,
    print_system,
)

from conftest import GRAPH1

MINIMAL = """
metamodel hello {
  class Greeting {
    text: string
  }
}
rule Hi(out g) {
  create g: Greeting { text = "Hello World" }
}
"""


def test_minimal_system():
    s = parse_system(MINIMAL)
    assert set(s.metamodels) == {"hello"}
    assert list(s.rules) == ["Hi"]
    assert s.rules["Hi"].parameters[0].name == "g"


def test_undeclared_reference_is_resolution_error():
    s = parse_system(GRAPH1)
    with pytest.raises(ResolutionError) as exc:
        parse_model("model graph1 {\n  a : Node\n  b : Node\n  a -likes-> b\n}\n", s)
    assert exc.value.line == 4


def test_unknown_metamodel_in_header():
    with pytest.raises(ResolutionError):
        parse_model("model nope { }", parse_system(GRAPH1))


def test_syntax_error_position():
    with pytest.raises(DSLSyntaxError) as exc:
        parse_system("metamodel m {\n  class A {\n    x int\n  }\n}\n")
    assert (exc.value.line, exc.value.col) == (3, 7)


def test_reverse_one_edge_has_one_nac():
    rule = cp.system_for("3.1").rules["ReverseOneEdge"]
    assert isinstance(rule.condition, Not)
    leaf = rule.condition.operand
    assert isinstance(leaf, Leaf) and leaf.kind == "forbid"
    assert leaf.name == "AlreadyReversed"


def test_empty_graph_print():
    s = parse_system(GRAPH1)
    g = InstanceGraph(s.metamodels.values())
    assert print_model(g) == "model graph1 {\n}\n"
    assert print_model(parse_model(print_model(g), s).graph) == print_model(g)


def test_create_then_revert_prints_same():
    s = cp.system_for("1.1")
    g = s.attach(InstanceGraph(s.metamodels.values()))
    before = print_model(g)
    sp = g.savepoint()
    apply_rule(s.rules["CreateSimple"], g)
    assert print_model(g) != before
    g.revert_to(sp)
    assert print_model(g) == before


def test_labels_and_explicit_ids():
    s = parse_system(GRAPH1)
    g = parse_model("model graph1 {\n #7 : Graph\n a : Node\n #7 -nodes-> a\n}\n", s).graph
    assert sorted(g.objects) == [7, 8]
    assert g.links == [(7, "nodes", 8)]


@pytest.mark.parametrize("tid", list(cp.TaskId))
def test_assets_print_idempotently(tid):
    s = cp.system_for(tid)
    text = print_system(s)
    assert print_system(parse_system(text)) == text
    fixture = cp.fixture_for(tid, s).graph
    mtext = print_model(fixture)
    assert print_model(parse_model(mtext, s).graph) == mtext


def test_round_trip_random_graphs():
    for seed in range(500):
        g = cp.random_graph(seed)
        text = print_model(g)
        back = parse_model(text, cp.system_for("2.1")).graph
        assert print_model(back) == text
        assert cp.isomorphic(g, back)


def test_round_trip_unicode_strings():
    s = parse_system(GRAPH1)
    g = InstanceGraph(s.metamodels.values())
    n = g.create_object("Node")
    g.set_attribute(n, "name", 'quote " back\\ nl\n tab\t é ☃')
    back = parse_model(print_model(g), s).graph
    assert back.get(n).attrs["name"] == g.get(n).attrs["name"]


_TOKENS = st.sampled_from([
    "model", "graph1", "{", "}", "a", "b", ":", "Node", "Edge", "Graph", "-src->",
    "-nodes->", "#1", "#x", "=", '"s"', "1", ",", "name", "\n", " ", "rule", "unit",
    "metamodel", "class", "(", ")", "[", "]", "*", "preserve", "forbid", "-",
])


@settings(max_examples=400, deadline=None)
@given(st.lists(_TOKENS, max_size=25))
def test_model_parse_is_total(parts):
    text = " ".join(parts)
    try:
        parse_model(text, parse_system(GRAPH1))
    except ParseError as exc:
        n_lines = text.count("\n") + 1
        assert 1 <= exc.line <= n_lines
        assert 1 <= exc.col <= max(len(line) for line in text.split("\n")) + 1


@settings(max_examples=400, deadline=None)
@given(st.one_of(st.lists(_TOKENS, max_size=25).map(" ".join), st.text(max_size=40)))
def test_system_parse_is_total(text):
    try:
        parse_system(text)
    except ParseError as exc:
        assert 1 <= exc.line <= text.count("\n") + 1


def test_random_mutations_of_assets_fail_cleanly():
    rng = random.Random(5)
    base = (cp.CASES_DIR / "task5" / "system.gts").read_text()
    for _ in range(200):
        i = rng.randrange(len(base))
        mutated = base[:i] + rng.choice(["", "{", "}", "->", "x", "("]) + base[i + rng.randint(0, 3):]
        try:
            parse_system(mutated)
        except ParseError:
            pass
