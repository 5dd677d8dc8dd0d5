import pytest

from hengine import casepack as cp
from hengine.matcher import Not
from hengine.model import InstanceGraph, Registry
from hengine.rules import AmalgamationScheme
from hengine.textio import print_model
from hengine.units import AmalgamationUnit, CountedUnit, SequentialUnit


def g1_system():
    return cp.system_for("3.1")


def build_graph1(nodes, edges):
    s = g1_system()
    g = InstanceGraph(Registry([s.metamodels["graph1"]]))
    root = g.create_object("graph1.Graph")
    ids = []
    for name in nodes:
        n = g.create_object("graph1.Node")
        g.set_attribute(n, "name", name)
        g.add_link(root, "nodes", n)
        ids.append(n)
    for s_, t_ in edges:
        e = g.create_object("graph1.Edge")
        g.add_link(root, "edges", e)
        if s_ is not None:
            g.add_link(e, "src", ids[s_])
        if t_ is not None:
            g.add_link(e, "trg", ids[t_])
    return g


def build_graph3(n, links):
    s = cp.system_for("6.1")
    g = InstanceGraph(Registry([s.metamodels["graph3"]]))
    root = g.create_object("graph3.Graph")
    ids = []
    for i in range(n):
        v = g.create_object("graph3.Node")
        g.add_link(root, "nodes", v)
        ids.append(v)
    for a, b in links:
        g.add_link(ids[a], "linksTo", ids[b])
    return g, ids


def counts(g):
    return {k: cp.oracle_count(k, g) for k in cp.COUNT_KINDS}


def test_count_single_node():
    assert counts(build_graph1(["a"], [])) == {
        "nodes": 1, "looping": 0, "isolated": 1, "circles": 0, "dangling": 0}


def test_count_self_loop():
    c = counts(build_graph1(["a"], [(0, 0)]))
    assert (c["looping"], c["isolated"], c["dangling"]) == (1, 0, 0)


def test_count_triangle_and_dangling():
    assert cp.oracle_count("circles", build_graph1("abc", [(0, 1), (1, 2), (2, 0)])) == 1
    g = build_graph1("ab", [(0, None), (None, 1), (None, None), (0, 1)])
    assert cp.oracle_count("dangling", g) == 3
    assert cp.oracle_count("isolated", g) == 0
    with pytest.raises(ValueError):
        cp.oracle_count("triangles", g)


def test_closure_examples():
    g, v = build_graph3(4, [(0, 1), (1, 2), (2, 3)])
    assert len(cp.oracle_closure(g)) == 6
    assert cp.oracle_transitive_rule(g) == cp.oracle_closure(g)
    g, v = build_graph3(3, [])
    assert cp.oracle_closure(g) == set()
    g, v = build_graph3(3, [(0, 1), (1, 2), (2, 0)])
    assert cp.oracle_closure(g) == {(a, b) for a in v for b in v}
    # the rule never relates a node to itself
    assert cp.oracle_transitive_rule(g) == {(a, b) for a in v for b in v if a != b}


def test_migrate_examples():
    g = build_graph1(["a", "b"], [(0, 1)])
    out = cp.oracle_migrate(g)
    names = sorted(o.attrs["name"] for o in out.objects.values() if o.cls.name == "Node")
    assert names == ["a", "b"]
    assert sum(o.cls.name == "Edge" for o in out.objects.values()) == 1
    assert {o.cls.metamodel for o in out.objects.values()} == {"graph2"}
    assert out.conforms() == []

    dangling = build_graph1(["a", "b"], [(0, None), (0, 1)])
    topo = cp.oracle_migrate_topology(dangling)
    assert len(cp.link_pairs(topo)) == 1

    empty = build_graph1([], [])
    assert [o.cls.qualname for o in cp.oracle_migrate(empty).objects.values()] == ["graph2.Graph"]
    assert [o.cls.qualname for o in cp.oracle_migrate_topology(empty).objects.values()] == ["graph3.Graph"]


def test_random_graph_repeatable_and_bounded():
    for seed in range(30):
        a, b = cp.random_graph(seed), cp.random_graph(seed)
        assert print_model(a) == print_model(b)
        assert a.conforms() == []
        c = counts(a)
        assert c["nodes"] <= 8 and len(cp.edge_ends(a)) <= 16
    small = cp.random_graph(3, max_nodes=2, max_edges=3)
    assert counts(small)["nodes"] <= 2 and len(cp.edge_ends(small)) <= 3


def test_random_graph_dangling_audit():
    assert any(cp.oracle_count("dangling", cp.random_graph(s)) > 0 for s in range(100))
    assert all(cp.oracle_count("dangling", cp.random_graph(s, allow_dangling=False)) == 0
               for s in range(100))


def test_random_graph3_repeatable():
    for seed in range(20):
        a, b = cp.random_graph3(seed), cp.random_graph3(seed)
        assert print_model(a) == print_model(b) and a.conforms() == []


def test_every_task_has_assets():
    for tid in cp.TaskId:
        t = cp.task(tid)
        d = cp.CASES_DIR / t.directory
        assert (d / "system.gts").is_file() and (d / "README").is_file()
        assert (d / t.fixture).is_file()
        assert t.unit in cp.system_for(tid)
        assert cp.fixture_for(tid).graph.conforms() == []
    assert {p.name for p in cp.case_dirs()} == {t.directory for t in cp.TASKS.values()}
    assert cp.task("2.4") is cp.task(cp.TaskId.T2_4)


def test_counting_units_share_counter_rule():
    s = cp.system_for("2.1")
    create = s.rules["CreateCounterObject"]
    for kind, tid in cp.COUNT_KINDS.items():
        unit = s.units[cp.task(tid).unit]
        assert isinstance(unit, SequentialUnit)
        first, loop = unit.subunits
        assert first is create
        assert isinstance(loop, CountedUnit) and loop.count == -1


def test_dangling_rule_has_three_negated_conditions():
    rule = cp.system_for("2.5").rules["CountDanglingEdges_Increase"]

    def negated(f):
        if isinstance(f, Not):
            return 1
        return sum(negated(getattr(f, side)) for side in ("left", "right") if hasattr(f, side))
    assert negated(rule.condition) == 3


def test_task5_scheme_shape():
    unit = cp.system_for("5.1").units["DeleteNodeN1Simple"]
    assert isinstance(unit, AmalgamationUnit)
    scheme = unit.scheme
    assert isinstance(scheme, AmalgamationScheme)
    assert scheme.kernel.name == "DeleteNodeN1"
    assert [m.rule.name for m in scheme.multis] == ["DeleteIncomingRef", "DeleteOutgoingRef"]


def test_task4_1_shape():
    unit = cp.system_for("4.1").units["SimpleMigration"]
    assert isinstance(unit, SequentialUnit)
    create, nodes, edges = unit.subunits
    assert create.name == "CreateNewGraph"
    assert isinstance(nodes, CountedUnit) and nodes.count == -1 and nodes.subunit.name == "MigrateNode"
    assert isinstance(edges, CountedUnit) and edges.count == -1
    assert edges.subunit.name == "MigrateEdge"


@pytest.mark.parametrize("kind", sorted(cp.COUNT_KINDS))
def test_fixture_counts_match_oracle(kind):
    tid = cp.COUNT_KINDS[kind]
    res, g = cp.run_task(tid)
    assert res.success
    expected = cp.oracle_count(kind, cp.fixture_for(tid).graph)
    assert g.get(res.outputs["counter"].id).attrs["result"] == expected


def test_run_task_leaves_input_alone():
    g = cp.random_graph(5)
    before = print_model(g)
    res, out = cp.run_task("3.1", g)
    assert res.success and print_model(g) == before and out is not g


def test_task6_fixture():
    res, g = cp.run_task("6.1")
    assert res.success
    assert len(cp.link_pairs(g)) == 6
    assert all(a != b for a, b in cp.link_pairs(g))


def test_isomorphic_ignores_ids():
    a = build_graph1(["x", "y"], [(0, 1)])
    b = build_graph1(["y", "x"], [(1, 0)])
    assert cp.isomorphic(a, b)
    c = build_graph1(["x", "y"], [(1, 0)])
    assert not cp.isomorphic(a, c)
