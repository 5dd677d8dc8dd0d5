import pytest

from hengine.model import InstanceGraph, Metamodel, RefDef
from hengine.textio import parse_system

GRAPH1 = """
metamodel graph1 {
  class Graph {
    contains nodes: Node[*]
    contains edges: Edge[*]
  }
  class Node {
    name: string
  }
  class Edge {
    src: Node
    trg: Node
  }
}
"""

GRAPH3 = """
metamodel graph3 {
  class Graph {
    contains nodes: Node[*]
  }
  class Node {
    name: string
    linksTo: Node[*]
  }
}
"""


def make_graph1() -> Metamodel:
    mm = Metamodel("graph1")
    g = mm.add_class("Graph")
    n = mm.add_class("Node")
    e = mm.add_class("Edge")
    g.references["nodes"] = RefDef("nodes", "graph1.Node", many=True, containment=True)
    g.references["edges"] = RefDef("edges", "graph1.Edge", many=True, containment=True)
    n.attributes["name"] = "string"
    e.references["src"] = RefDef("src", "graph1.Node")
    e.references["trg"] = RefDef("trg", "graph1.Node")
    return mm


@pytest.fixture
def graph1():
    return make_graph1()


@pytest.fixture
def g1(graph1):
    return InstanceGraph([graph1])


def system(body: str, *metamodels: str):
    """Parse a system made of the given metamodel texts plus ``body``."""
    return parse_system("\n".join(metamodels) + "\n" + body)


def add_edge(graph: InstanceGraph, src, trg, root=None):
    e = graph.create_object("graph1.Edge")
    if root is not None:
        graph.add_link(root, "edges", e)
    if src is not None:
        graph.add_link(e, "src", src)
    if trg is not None:
        graph.add_link(e, "trg", trg)
    return e
