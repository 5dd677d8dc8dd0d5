"""The Hello World cases as bundled assets, with brute-force oracles.

Every task id maps to a directory under ``cases/`` holding ``system.gts``,
one or more fixture models and a README. The oracles here deliberately avoid
the matcher and the rule engine: they work on plain Python sets so that the
engine can be checked against them.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from itertools import permutations
from pathlib import Path

import networkx as nx
from networkx.algorithms import isomorphism as iso

from ..model import InstanceGraph, Registry, strip_traces
from ..textio import ModelFile, SystemFile, parse_model, parse_system
from ..units import ExecResult, run

CASES_DIR = Path(__file__).parent / "cases"


class TaskId(str, Enum):
    T1_1 = "1.1"
    T1_2 = "1.2"
    T1_3 = "1.3"
    T2_1 = "2.1"
    T2_2 = "2.2"
    T2_3 = "2.3"
    T2_4 = "2.4"
    T2_5 = "2.5"
    T3_1 = "3.1"
    T4_1 = "4.1"
    T4_2 = "4.2"
    T5_1 = "5.1"
    T5_2 = "5.2"
    T6_1 = "6.1"


@dataclass(frozen=True)
class Task:
    id: TaskId
    directory: str
    unit: str
    fixture: str = "input.gim"


TASKS: dict[TaskId, Task] = {t.id: t for t in [
    Task(TaskId.T1_1, "task1", "CreateSimple"),
    Task(TaskId.T1_2, "task1", "CreateExtended"),
    Task(TaskId.T1_3, "task1", "M2T", "m2t.gim"),
    Task(TaskId.T2_1, "task2", "CountNodes"),
    Task(TaskId.T2_2, "task2", "CountLoopingEdges"),
    Task(TaskId.T2_3, "task2", "CountIsolatedNodes"),
    Task(TaskId.T2_4, "task2", "CountCircles"),
    Task(TaskId.T2_5, "task2", "CountDanglingEdges"),
    Task(TaskId.T3_1, "task3", "ReverseEdges"),
    Task(TaskId.T4_1, "task4_1", "SimpleMigration"),
    Task(TaskId.T4_2, "task4_2", "SimpleMigrationExt"),
    Task(TaskId.T5_1, "task5", "DeleteNodeN1Simple"),
    Task(TaskId.T5_2, "task5", "DeleteNodeN1WithAllEdges"),
    Task(TaskId.T6_1, "task6", "InsertTransitiveEdges"),
]}

COUNT_KINDS = {
    "nodes": TaskId.T2_1,
    "looping": TaskId.T2_2,
    "isolated": TaskId.T2_3,
    "circles": TaskId.T2_4,
    "dangling": TaskId.T2_5,
}


def task(task_id) -> Task:
    """Look up a task by :class:`TaskId` or its text ("2.4")."""
    if not isinstance(task_id, TaskId):
        task_id = TaskId(str(task_id))
    return TASKS[task_id]


def case_dirs() -> list[Path]:
    return sorted(p for p in CASES_DIR.iterdir() if p.is_dir())


def system_for(task_id) -> SystemFile:
    """Parse the bundled system of a task (a fresh copy on every call)."""
    t = task(task_id)
    return parse_system((CASES_DIR / t.directory / "system.gts").read_text())


def fixture_for(task_id, system: SystemFile | None = None) -> ModelFile:
    """Parse the task's fixture, typed over ``system`` (default: a fresh
    :func:`system_for`) with all of the system's metamodels attached."""
    t = task(task_id)
    system = system or system_for(task_id)
    model = parse_model((CASES_DIR / t.directory / t.fixture).read_text(), system)
    system.attach(model.graph)
    return model


def prepare(graph: InstanceGraph, system: SystemFile) -> InstanceGraph:
    """Copy of ``graph`` retyped over ``system``'s metamodels."""
    return graph.retyped(Registry(system.metamodels.values()))


def run_task(task_id, graph: InstanceGraph | None = None, **options) -> tuple[ExecResult, InstanceGraph]:
    """Run a task's unit on ``graph`` (default: its fixture).

    The input graph is not modified; the transformed copy is returned.
    """
    system = system_for(task_id)
    if graph is None:
        graph = fixture_for(task_id, system).graph
    else:
        graph = prepare(graph, system)
    result = run(system.get(task(task_id).unit), graph, **options)
    return result, graph


# -- plain views of graph1 / graph3 instances --------------------------------

def _objects(graph: InstanceGraph, mm: str, cls: str) -> list[int]:
    return sorted(o.id for o in graph.objects.values()
                  if o.cls.metamodel == mm and o.cls.name == cls)


def _ref(graph: InstanceGraph, oid: int, ref: str) -> int | None:
    ts = graph.targets(oid, ref)
    return ts[0] if ts else None


def edge_ends(graph: InstanceGraph, mm: str = "graph1") -> dict[int, tuple[int | None, int | None]]:
    """Edge id -> (src node, trg node), None where the reference is missing."""
    return {e: (_ref(graph, e, "src"), _ref(graph, e, "trg")) for e in _objects(graph, mm, "Edge")}


def link_pairs(graph: InstanceGraph, mm: str = "graph3") -> set[tuple[int, int]]:
    nodes = set(_objects(graph, mm, "Node"))
    return {(s, t) for s, ref, t in graph.links if ref == "linksTo" and s in nodes}


# -- oracles ------------------------------------------------------------------

def oracle_count(kind: str, graph: InstanceGraph) -> int:
    """Exhaustive answer to one of the five counting queries on graph1."""
    nodes = _objects(graph, "graph1", "Node")
    ends = edge_ends(graph)
    if kind == "nodes":
        return len(nodes)
    if kind == "looping":
        return sum(1 for s, t in ends.values() if s is not None and s == t)
    if kind == "isolated":
        touched = {n for pair in ends.values() for n in pair if n is not None}
        return sum(1 for n in nodes if n not in touched)
    if kind == "circles":
        adj = {(s, t) for s, t in ends.values() if s is not None and t is not None}
        # every directed 3-cycle over distinct nodes appears as 3 rotations
        rotations = sum(1 for a, b, c in permutations(nodes, 3)
                        if (a, b) in adj and (b, c) in adj and (c, a) in adj)
        return rotations // 3
    if kind == "dangling":
        return sum(1 for s, t in ends.values() if s is None or t is None)
    raise ValueError(f"unknown count kind {kind!r}")


def oracle_closure(graph: InstanceGraph) -> set[tuple[int, int]]:
    """Reachability in one or more linksTo steps (relational composition to
    a fixpoint)."""
    reach = set(link_pairs(graph))
    while True:
        step = {(a, d) for a, b in reach for c, d in reach if b == c} - reach
        if not step:
            return reach
        reach |= step


def oracle_transitive_rule(graph: InstanceGraph) -> set[tuple[int, int]]:
    """linksTo pairs after applying "a->b, b->c, no a->c => add a->c" over
    pairwise distinct a, b, c until nothing changes."""
    rel = set(link_pairs(graph))
    nodes = _objects(graph, "graph3", "Node")
    changed = True
    while changed:
        changed = False
        for a, b, c in permutations(nodes, 3):
            if (a, b) in rel and (b, c) in rel and (a, c) not in rel:
                rel.add((a, c))
                changed = True
    return rel


def oracle_migrate(graph: InstanceGraph) -> InstanceGraph:
    """Direct construction of the graph2 copy of a graph1 instance."""
    system = system_for(TaskId.T4_1)
    out = InstanceGraph(Registry([system.metamodels["graph2"]]))
    for g in _objects(graph, "graph1", "Graph"):
        g2 = out.create_object("graph2.Graph")
        node_map = {}
        for n in graph.targets(g, "nodes"):
            n2 = out.create_object("graph2.Node")
            out.set_attribute(n2, "name", graph.objects[n].attrs["name"])
            out.add_link(g2, "nodes", n2)
            node_map[n] = n2
        for e in graph.targets(g, "edges"):
            e2 = out.create_object("graph2.Edge")
            out.add_link(g2, "edges", e2)
            s, t = _ref(graph, e, "src"), _ref(graph, e, "trg")
            if s in node_map:
                out.add_link(e2, "src", node_map[s])
            if t in node_map:
                out.add_link(e2, "trg", node_map[t])
    return out


def oracle_migrate_topology(graph: InstanceGraph) -> InstanceGraph:
    """Direct construction of the graph3 view: complete edges become linksTo
    references, dangling edges are dropped."""
    system = system_for(TaskId.T4_2)
    out = InstanceGraph(Registry([system.metamodels["graph3"]]))
    for g in _objects(graph, "graph1", "Graph"):
        g3 = out.create_object("graph3.Graph")
        node_map = {}
        for n in graph.targets(g, "nodes"):
            n3 = out.create_object("graph3.Node")
            out.set_attribute(n3, "name", graph.objects[n].attrs["name"])
            out.add_link(g3, "nodes", n3)
            node_map[n] = n3
        pairs = []
        for e in graph.targets(g, "edges"):
            s, t = _ref(graph, e, "src"), _ref(graph, e, "trg")
            if s in node_map and t in node_map and (s, t) not in pairs:
                pairs.append((s, t))
        for s, t in pairs:
            out.add_link(node_map[s], "linksTo", node_map[t])
    return out


# -- graph comparison ---------------------------------------------------------

def extract(graph: InstanceGraph, metamodel: str) -> InstanceGraph:
    """Sub-graph of the objects typed over ``metamodel`` and the links among
    them (e.g. the target side of an in-place migration)."""
    keep = {oid for oid, o in graph.objects.items() if o.cls.metamodel == metamodel}
    sub = graph.copy()
    for oid in sorted(set(sub.objects) - keep):
        sub.delete_object(oid, mode="cascade")
    return sub


def without_traces(graph: InstanceGraph) -> InstanceGraph:
    g = graph.copy()
    strip_traces(g)
    return g


def to_networkx(graph: InstanceGraph) -> nx.MultiDiGraph:
    g = nx.MultiDiGraph()
    for oid, obj in graph.objects.items():
        label = (obj.cls.qualname, tuple(sorted((k, repr(v)) for k, v in obj.attrs.items())))
        g.add_node(oid, label=label)
    for src, ref, tgt in graph.links:
        g.add_edge(src, tgt, ref=ref)
    return g


def isomorphic(a: InstanceGraph, b: InstanceGraph) -> bool:
    """Typed, attributed graph isomorphism (object ids are ignored)."""
    return nx.is_isomorphic(
        to_networkx(a), to_networkx(b),
        node_match=iso.categorical_node_match("label", None),
        edge_match=iso.categorical_multiedge_match("ref", None),
    )


# -- random instances -----------------------------------------------------------

def _graph1_system() -> SystemFile:
    return system_for(TaskId.T3_1)


def random_graph(seed: int, max_nodes: int = 8, max_edges: int = 16,
                 allow_dangling: bool = True) -> InstanceGraph:
    """A seeded random graph1 instance: one Graph containing up to
    ``max_nodes`` named nodes and up to ``max_edges`` edges. With
    ``allow_dangling`` an edge may lack its src, its trg or both."""
    rng = random.Random(seed)
    system = _graph1_system()
    graph = InstanceGraph(Registry([system.metamodels["graph1"]]))
    root = graph.create_object("graph1.Graph")
    nodes = []
    for i in range(rng.randint(0, max_nodes)):
        n = graph.create_object("graph1.Node")
        graph.set_attribute(n, "name", f"n{i + 1}")
        graph.add_link(root, "nodes", n)
        nodes.append(n)
    n_edges = rng.randint(0, max_edges) if (nodes or allow_dangling) else 0
    for _ in range(n_edges):
        e = graph.create_object("graph1.Edge")
        graph.add_link(root, "edges", e)
        for ref in ("src", "trg"):
            if nodes and not (allow_dangling and rng.random() < 0.15):
                graph.add_link(e, ref, rng.choice(nodes))
    return graph


def random_graph3(seed: int, max_nodes: int = 7, max_links: int = 12) -> InstanceGraph:
    """A seeded random graph3 instance (self references allowed)."""
    rng = random.Random(seed)
    system = system_for(TaskId.T6_1)
    graph = InstanceGraph(Registry([system.metamodels["graph3"]]))
    root = graph.create_object("graph3.Graph")
    nodes = []
    for i in range(rng.randint(0, max_nodes)):
        n = graph.create_object("graph3.Node")
        graph.set_attribute(n, "name", f"v{i + 1}")
        graph.add_link(root, "nodes", n)
        nodes.append(n)
    if nodes:
        for _ in range(rng.randint(0, max_links)):
            s, t = rng.choice(nodes), rng.choice(nodes)
            if not graph.has_link(s, "linksTo", t):
                graph.add_link(s, "linksTo", t)
    return graph


__all__ = [
    "CASES_DIR", "COUNT_KINDS", "TASKS", "Task", "TaskId", "case_dirs", "edge_ends", "extract",
    "fixture_for", "isomorphic", "link_pairs", "oracle_closure", "oracle_count", "oracle_migrate",
    "oracle_migrate_topology", "oracle_transitive_rule", "prepare", "random_graph",
    "random_graph3", "run_task", "system_for", "task", "to_networkx", "without_traces",
]
