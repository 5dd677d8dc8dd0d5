"""Random case generators and brute-force references shared by the tests."""
import random
from itertools import product

from hengine.expr import Lit
from hengine.matcher import Pattern, PatternEdge, PatternNode
from hengine.model import InstanceGraph
from hengine.textio import parse_system
from hengine.units import (
    ConditionalUnit,
    CountedUnit,
    IndependentUnit,
    PriorityUnit,
    SequentialUnit,
)

SMALL_MM = """
metamodel m {
  class A {
    v: int
    r: B[*]
    s: A[*]
  }
  class B {
    v: int
    t: A
  }
}
"""

# (source class, ref, target class)
SMALL_REFS = [("A", "r", "B"), ("A", "s", "A"), ("B", "t", "A")]


def small_system():
    return parse_system(SMALL_MM)


def random_small_graph(rng: random.Random, system, max_objects=8) -> InstanceGraph:
    g = InstanceGraph(system.metamodels.values())
    for _ in range(rng.randint(0, max_objects)):
        o = g.create_object(rng.choice("AB"))
        g.set_attribute(o, "v", rng.randint(0, 2))
    ids = sorted(g.objects)
    for _ in range(rng.randint(0, 14)):
        if not ids:
            break
        s, t = rng.choice(ids), rng.choice(ids)
        sc, tc = g.objects[s].cls.name, g.objects[t].cls.name
        refs = [r for a, r, b in SMALL_REFS if a == sc and b == tc]
        if not refs:
            continue
        ref = rng.choice(refs)
        if g.has_link(s, ref, t) or (ref == "t" and g.targets(s, "t")):
            continue
        g.add_link(s, ref, t)
    return g


def random_pattern(rng: random.Random, system, max_nodes=4) -> Pattern:
    mm = system.metamodels["m"]
    nodes = []
    for i in range(rng.randint(0, max_nodes)):
        cls = mm.classes[rng.choice("AB")]
        cons = [("v", Lit(rng.randint(0, 2)))] if rng.random() < 0.25 else []
        nodes.append(PatternNode(f"x{i}", cls, cons))
    edges = []
    for _ in range(rng.randint(0, 4)):
        if not nodes:
            break
        a, b = rng.choice(nodes), rng.choice(nodes)
        refs = [r for s, r, t in SMALL_REFS if s == a.cls.name and t == b.cls.name]
        if refs:
            e = PatternEdge(a.var, rng.choice(refs), b.var)
            if e not in edges:
                edges.append(e)
    return Pattern(nodes, edges)


def brute_force_matches(pattern: Pattern, graph: InstanceGraph, injective: bool):
    """Every assignment of pattern variables to objects that respects classes,
    constant attribute constraints, edges and (optionally) injectivity."""
    vars_ = pattern.variables()
    ids = sorted(graph.objects)
    found = set()
    for combo in product(ids, repeat=len(vars_)):
        if injective and len(set(combo)) != len(combo):
            continue
        b = dict(zip(vars_, combo))
        ok = all(graph.objects[b[n.var]].cls is n.cls for n in pattern.nodes)
        ok = ok and all(graph.objects[b[n.var]].attrs[a] == c.value
                        for n in pattern.nodes for a, c in n.constraints)
        ok = ok and all(graph.has_link(b[e.src], e.ref, b[e.tgt]) for e in pattern.edges)
        if ok:
            found.add(tuple(sorted(b.items())))
    return found


# -- random unit programs -------------------------------------------------------

PROGRAM_RULES = """
metamodel p {
  class Item {
    n: int
  }
}

rule Make {
  create i: Item { n = 0 }
}

rule Bump {
  preserve i: Item { n := i.n + 1 }
}

rule Drop {
  delete i: Item
}

rule Never {
  preserve i: Item { n = 0 - 1 }
}
"""


def program_system():
    return parse_system(PROGRAM_RULES)


def random_program(rng: random.Random, rules: dict, depth: int = 0, fail_rate: float = 0.25):
    """A random unit tree over the rules above; ``Never`` leaves inject failures."""
    if depth >= 3 or rng.random() < 0.3:
        if rng.random() < fail_rate:
            return rules["Never"]
        return rules[rng.choice(["Make", "Bump", "Drop"])]
    name = f"u{rng.randrange(10**9)}"
    kind = rng.choice(["seq", "counted", "priority", "independent", "conditional"])
    kids = [random_program(rng, rules, depth + 1, fail_rate) for _ in range(rng.randint(1, 3))]
    if kind == "seq":
        return SequentialUnit(name, subunits=kids)
    if kind == "priority":
        return PriorityUnit(name, subunits=kids)
    if kind == "independent":
        return IndependentUnit(name, subunits=kids)
    if kind == "counted":
        return CountedUnit(name, subunit=kids[0], count=rng.choice([-1, 0, 1, 2, 3]))
    else_unit = kids[2] if len(kids) > 2 else None
    then_unit = kids[1] if len(kids) > 1 else kids[0]
    return ConditionalUnit(name, if_unit=kids[0], then_unit=then_unit, else_unit=else_unit)


def random_program_graph(rng: random.Random, system) -> InstanceGraph:
    g = InstanceGraph(system.metamodels.values())
    for _ in range(rng.randint(0, 4)):
        i = g.create_object("Item")
        g.set_attribute(i, "n", rng.randint(0, 3))
    return g
