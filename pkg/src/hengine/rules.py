"""Rules and their application, including amalgamated kernel/multi steps.

Applying a rule computes an effect plan for a candidate match, validates the
plan against the graph (dangling links, identification, multiplicities,
containment), and only then performs the edits inside a savepoint.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

from .expr import Env, EvalError, Expr, eval_expr
from .matcher import Formula, Match, Pattern, PatternEdge, eval_formula, find_matches, leaves
from .model import GraphError, InstanceGraph, Link, ObjectRef

DIRECTIONS = ("in", "out", "inout")


class RuleError(Exception):
    pass


class ApplicationError(RuleError):
    """A rule matched but its effects could not be carried out; the graph
    was restored."""


@dataclass
class Parameter:
    name: str
    direction: str = "in"

    @property
    def is_input(self) -> bool:
        return self.direction in ("in", "inout")

    @property
    def is_output(self) -> bool:
        return self.direction in ("out", "inout")


@dataclass
class Rule:
    name: str
    lhs: Pattern = field(default_factory=Pattern)
    rhs: Pattern = field(default_factory=Pattern)
    mapping: dict[str, str] = field(default_factory=dict)
    condition: Formula | None = None
    assignments: list[tuple[str, str, Expr]] = field(default_factory=list)
    parameters: list[Parameter] = field(default_factory=list)

    def parameter(self, name: str) -> Parameter | None:
        for p in self.parameters:
            if p.name == name:
                return p
        return None

    def is_object_param(self, name: str) -> bool:
        return self.lhs.node(name) is not None or self.rhs.node(name) is not None

    def created_vars(self) -> list[str]:
        image = set(self.mapping.values())
        return [n.var for n in self.rhs.nodes if n.var not in image]

    def deleted_vars(self) -> list[str]:
        return [n.var for n in self.lhs.nodes if n.var not in self.mapping]

    def preserved_edge(self, e: PatternEdge) -> bool:
        if e.src not in self.mapping or e.tgt not in self.mapping:
            return False
        return PatternEdge(self.mapping[e.src], e.ref, self.mapping[e.tgt]) in self.rhs.edges

    def created_edges(self) -> list[PatternEdge]:
        inverse = {v: k for k, v in self.mapping.items()}
        out = []
        for e in self.rhs.edges:
            if e.src in inverse and e.tgt in inverse:
                if PatternEdge(inverse[e.src], e.ref, inverse[e.tgt]) in self.lhs.edges:
                    continue
            out.append(e)
        return out

    def validate(self) -> list[str]:
        problems = []
        for side, pat in (("lhs", self.lhs), ("rhs", self.rhs)):
            seen = set()
            for n in pat.nodes:
                if n.var in seen:
                    problems.append(f"{side}: duplicate variable {n.var!r}")
                seen.add(n.var)
                for attr, _ in n.constraints:
                    if attr not in n.cls.attributes:
                        problems.append(f"{side}: {n.cls.qualname} has no attribute {attr!r}")
            problems += _edge_problems(pat, side, set())
        for lv, rv in self.mapping.items():
            ln, rn = self.lhs.node(lv), self.rhs.node(rv)
            if ln is None or rn is None:
                problems.append(f"mapping {lv}->{rv} names an unknown variable")
            elif ln.cls is not rn.cls:
                problems.append(f"mapping {lv}->{rv} changes class")
        if len(set(self.mapping.values())) != len(self.mapping):
            problems.append("mapping is not injective")
        host = set(self.lhs.variables())
        for leaf in leaves(self.condition):
            problems += _condition_problems(leaf, host)
        for var, attr, _ in self.assignments:
            n = self.rhs.node(var)
            if n is None:
                problems.append(f"assignment to unknown variable {var!r}")
            elif attr not in n.cls.attributes:
                problems.append(f"{n.cls.qualname} has no attribute {attr!r}")
        names = [p.name for p in self.parameters]
        if len(set(names)) != len(names):
            problems.append("duplicate parameter names")
        for p in self.parameters:
            if p.direction not in DIRECTIONS:
                problems.append(f"parameter {p.name}: bad direction {p.direction!r}")
        return problems


def _edge_problems(pat: Pattern, side: str, context: set[str]) -> list[str]:
    problems = []
    for e in pat.edges:
        ends = []
        for end in (e.src, e.tgt):
            node = pat.node(end)
            if node is None and end not in context:
                problems.append(f"{side}: edge endpoint {end!r} undeclared")
            ends.append(node)
        s, t = ends
        if s is not None:
            rdef = s.cls.references.get(e.ref)
            if rdef is None:
                problems.append(f"{side}: {s.cls.qualname} has no reference {e.ref!r}")
            elif t is not None and rdef.target is not None and rdef.target != t.cls.qualname:
                problems.append(f"{side}: {e.src}.{e.ref} must target {rdef.target}")
    return problems


def _condition_problems(leaf, host: set[str]) -> list[str]:
    problems = _edge_problems(leaf.pattern, f"condition {leaf.name}", host)
    inner = host | set(leaf.pattern.variables())
    for sub in leaves(leaf.nested):
        problems += _condition_problems(sub, inner)
    return problems


@dataclass
class ApplyOutcome:
    success: bool
    match: Match | None = None
    out_values: dict[str, object] = field(default_factory=dict)
    edits: int = 0
    created: dict[str, int] = field(default_factory=dict)


# -- effect plans ---------------------------------------------------------------

# An endpoint is either ("old", object id) or ("new", key) for a node created
# by this step.

@dataclass
class _Effect:
    del_links: list[Link] = field(default_factory=list)
    del_objects: list[int] = field(default_factory=list)
    preserved: set[int] = field(default_factory=set)
    new_objects: dict[tuple, object] = field(default_factory=dict)  # key -> ClassDef
    new_links: list[tuple] = field(default_factory=list)
    assigns: list[tuple] = field(default_factory=list)  # (endpoint, attr, expr, env)
    ends: dict[str, tuple] = field(default_factory=dict)  # rhs variable -> endpoint

    def merge(self, other: _Effect) -> None:
        for ln in other.del_links:
            if ln not in self.del_links:
                self.del_links.append(ln)
        for o in other.del_objects:
            if o not in self.del_objects:
                self.del_objects.append(o)
        self.preserved |= other.preserved
        self.new_objects.update(other.new_objects)
        self.new_links.extend(other.new_links)
        self.assigns.extend(other.assigns)


def _effect(rule: Rule, match: Match, graph: InstanceGraph, key_prefix: tuple,
            shared: dict[str, tuple] | None = None,
            skip_edges: set[PatternEdge] | None = None,
            skip_assigns: set[tuple[str, str]] | None = None) -> _Effect:
    """Plan the edits of ``rule`` at ``match``.

    ``shared`` maps rhs variables created elsewhere (by a kernel) to their
    endpoints; ``skip_edges``/``skip_assigns`` suppress elements already
    contributed by the kernel.
    """
    shared = shared or {}
    skip_edges = skip_edges or set()
    skip_assigns = skip_assigns or set()
    b = match.bindings
    eff = _Effect()
    for e in rule.lhs.edges:
        if not rule.preserved_edge(e):
            ln = (b[e.src], e.ref, b[e.tgt])
            if ln not in eff.del_links:
                eff.del_links.append(ln)
    for var in rule.lhs.variables():
        if var in rule.mapping:
            eff.preserved.add(b[var])
        elif b[var] not in eff.del_objects:
            eff.del_objects.append(b[var])
    inverse = {v: k for k, v in rule.mapping.items()}
    ends: dict[str, tuple] = {}
    for node in rule.rhs.nodes:
        if node.var in inverse:
            ends[node.var] = ("old", b[inverse[node.var]])
        elif node.var in shared:
            ends[node.var] = shared[node.var]
        else:
            key = key_prefix + (node.var,)
            ends[node.var] = ("new", key)
            eff.new_objects[key] = node.cls
    for e in rule.created_edges():
        if e in skip_edges:
            continue
        eff.new_links.append((ends[e.src], e.ref, ends[e.tgt]))
    env = Env(dict(match.values), {v: graph.objects[oid].attrs for v, oid in b.items()
                                   if oid in graph.objects})
    for var, attr, expr in rule.assignments:
        if (var, attr) in skip_assigns:
            continue
        eff.assigns.append((ends[var], attr, expr, env))
    eff.ends = ends
    return eff


def _violation(graph: InstanceGraph, eff: _Effect, dangling: str) -> str | None:
    """Why ``eff`` cannot be applied to ``graph``, or None if it can.

    Side effect: in cascade mode, incident links of deleted objects are
    appended to ``eff.del_links``.
    """
    deleted = set(eff.del_objects)
    if deleted & eff.preserved:
        return "object both deleted and preserved"
    del_links = set(eff.del_links)
    for oid in eff.del_objects:
        for ln in graph.incident_links(oid):
            if ln not in del_links:
                if dangling != "cascade":
                    return f"deleting #{oid} would leave a dangling link"
                eff.del_links.append(ln)
                del_links.add(ln)

    def resolve(end):
        return end if end[0] == "new" else end[1]

    def cls_of(end):
        return eff.new_objects[end[1]] if end[0] == "new" else graph.objects[end[1]].cls

    created: list[tuple] = []
    seen = set()
    for s, ref, t in eff.new_links:
        if (s[0] == "old" and s[1] in deleted) or (t[0] == "old" and t[1] in deleted):
            return "link to a deleted object"
        key = (resolve(s), ref, resolve(t))
        if key in seen:
            continue  # identical creations coalesce
        seen.add(key)
        if s[0] == "old" and t[0] == "old" and graph.has_link(s[1], ref, t[1]) \
                and (s[1], ref, t[1]) not in del_links:
            return "link already exists"
        created.append((s, ref, t, key))
    slot_counts: dict[tuple, int] = {}
    container: dict[object, object] = {}
    for src, ref, tgt in graph.links:
        if (src, ref, tgt) in del_links:
            continue
        rdef = graph.objects[src].cls.references[ref]
        slot_counts[(src, ref)] = slot_counts.get((src, ref), 0) + 1
        if rdef.containment:
            container[tgt] = src
    for s, ref, t, key in created:
        rdef = cls_of(s).references[ref]
        slot = (key[0], ref)
        slot_counts[slot] = slot_counts.get(slot, 0) + 1
        if not rdef.many and slot_counts[slot] > 1:
            return f"reference {ref} would exceed upper bound 1"
        if rdef.containment:
            if key[2] in container:
                return "object would get two containers"
            container[key[2]] = key[0]
    for start in container:
        node, hops = start, 0
        while node in container and hops <= len(container):
            node = container[node]
            hops += 1
            if node == start:
                return "containment cycle"
    return None


def _perform(graph: InstanceGraph, eff: _Effect) -> tuple[int, dict[tuple, int]]:
    # evaluate against the pre-step snapshot, before any edit
    values = []
    try:
        for end, attr, expr, env in eff.assigns:
            values.append((end, attr, eval_expr(expr, env)))
    except EvalError as exc:
        raise ApplicationError(str(exc)) from exc
    sp = graph.savepoint()
    ids: dict[tuple, int] = {}
    try:
        for ln in eff.del_links:
            graph.remove_link(*ln)
        for oid in eff.del_objects:
            graph.delete_object(oid)
        for key, cls in eff.new_objects.items():
            ids[key] = graph.create_object(cls)

        def oid_of(end):
            return ids[end[1]] if end[0] == "new" else end[1]

        added = set()
        for s, ref, t in eff.new_links:
            ln = (oid_of(s), ref, oid_of(t))
            if ln not in added:
                added.add(ln)
                graph.add_link(*ln)
        for end, attr, value in values:
            graph.set_attribute(oid_of(end), attr, value)
    except GraphError as exc:
        graph.revert_to(sp)
        raise ApplicationError(str(exc)) from exc
    graph.release(sp)
    edits = len(eff.del_links) + len(eff.del_objects) + len(ids) + len(added) + len(values)
    return edits, ids


def _candidates(rule: Rule, graph: InstanceGraph, pre: Match, injective: bool) -> Iterator[Match]:
    partial = Match({k: v for k, v in pre.bindings.items() if rule.lhs.node(k) is not None},
                    dict(pre.values))
    for m in find_matches(rule.lhs, graph, partial, injective):
        if eval_formula(rule.condition, m, graph, injective):
            yield m


def _outputs(rule: Rule, match: Match, ends: dict[str, tuple], ids: dict[tuple, int],
             graph: InstanceGraph) -> dict[str, object]:
    out = {}
    for p in rule.parameters:
        if not p.is_output:
            continue
        if rule.rhs.node(p.name) is not None:
            end = ends[p.name]
            out[p.name] = ObjectRef(ids[end[1]] if end[0] == "new" else end[1])
        elif rule.lhs.node(p.name) is not None:
            oid = match.bindings[p.name]
            if oid in graph.objects:
                out[p.name] = ObjectRef(oid)
        elif p.name in match.values:
            out[p.name] = match.values[p.name]
    return out


def applicable(rule: Rule, graph: InstanceGraph, pre: Match | None = None,
               injective: bool = True, dangling: str = "forbid") -> Match | None:
    """The match :func:`apply_rule` would use, without touching the graph."""
    for m in _candidates(rule, graph, pre or Match(), injective):
        if _violation(graph, _effect(rule, m, graph, ()), dangling) is None:
            return m
    return None


def apply_rule(rule: Rule, graph: InstanceGraph, pre: Match | None = None,
               injective: bool = True, dangling: str = "forbid") -> ApplyOutcome:
    for m in _candidates(rule, graph, pre or Match(), injective):
        eff = _effect(rule, m, graph, ())
        if _violation(graph, eff, dangling) is not None:
            continue
        edits, ids = _perform(graph, eff)
        created = {key[-1]: oid for key, oid in ids.items()}
        return ApplyOutcome(True, m, _outputs(rule, m, eff.ends, ids, graph), edits, created)
    return ApplyOutcome(False)


# -- amalgamation ----------------------------------------------------------------

@dataclass
class MultiRule:
    rule: Rule
    lhs_embedding: dict[str, str]
    rhs_embedding: dict[str, str]


def embed_by_name(kernel: Rule, multi: Rule) -> MultiRule:
    """Embedding that maps each kernel variable to the same-named multi variable."""
    return MultiRule(multi,
                     {v: v for v in kernel.lhs.variables()},
                     {v: v for v in kernel.rhs.variables()})


@dataclass
class AmalgamationScheme:
    kernel: Rule
    multis: list[MultiRule] = field(default_factory=list)

    def validate(self) -> list[str]:
        k = self.kernel
        problems = []
        for mr in self.multis:
            m = mr.rule
            tag = f"multi {m.name}"
            for side, kp, mp, emb in (("lhs", k.lhs, m.lhs, mr.lhs_embedding),
                                      ("rhs", k.rhs, m.rhs, mr.rhs_embedding)):
                for node in kp.nodes:
                    target = mp.node(emb.get(node.var, ""))
                    if target is None:
                        problems.append(f"{tag}: kernel {side} variable {node.var} not embedded")
                    elif target.cls is not node.cls:
                        problems.append(f"{tag}: embedding of {node.var} changes class")
                for e in kp.edges:
                    img = PatternEdge(emb.get(e.src), e.ref, emb.get(e.tgt))
                    if img not in mp.edges:
                        problems.append(f"{tag}: kernel {side} edge {e.src}-{e.ref}->{e.tgt} missing")
            for lv in k.lhs.variables():
                ml = mr.lhs_embedding.get(lv)
                if lv in k.mapping:
                    expect = mr.rhs_embedding.get(k.mapping[lv])
                    if m.mapping.get(ml) != expect:
                        problems.append(f"{tag}: embedding does not commute at {lv}")
                elif ml in m.mapping:
                    problems.append(f"{tag}: kernel deletes {lv} but multi preserves it")
            image = set(m.mapping.values())
            for rv in k.created_vars():
                if mr.rhs_embedding.get(rv) in image:
                    problems.append(f"{tag}: kernel creates {rv} but multi preserves it")
        return problems


def _multi_matches(scheme: AmalgamationScheme, km: Match, graph: InstanceGraph,
                   injective: bool) -> list[list[Match]]:
    found = []
    for mr in scheme.multis:
        partial = Match({mr.lhs_embedding[v]: oid for v, oid in km.bindings.items()},
                        dict(km.values))
        seen, ms = set(), []
        for m in _candidates(mr.rule, graph, partial, injective):
            sig = tuple(sorted(m.bindings.items()))
            if sig not in seen:
                seen.add(sig)
                ms.append(m)
        found.append(ms)
    return found


def _combined_effect(scheme: AmalgamationScheme, km: Match, multi_matches, graph):
    k = scheme.kernel
    eff = _effect(k, km, graph, ("k",))
    kernel_ends = eff.ends
    for i, (mr, matches) in enumerate(zip(scheme.multis, multi_matches)):
        created = set(k.created_vars())
        shared = {mr.rhs_embedding[v]: kernel_ends[v] for v in created}
        skip_edges = {PatternEdge(mr.rhs_embedding[e.src], e.ref, mr.rhs_embedding[e.tgt])
                      for e in k.created_edges()}
        skip_assigns = {(mr.rhs_embedding[v], a) for v, a, _ in k.assignments}
        for j, m in enumerate(matches):
            eff.merge(_effect(mr.rule, m, graph, ("m", i, j), shared, skip_edges, skip_assigns))
    eff.ends = kernel_ends
    return eff


def apply_amalgamated(scheme: AmalgamationScheme, graph: InstanceGraph, pre: Match | None = None,
                      injective: bool = True, dangling: str = "forbid") -> ApplyOutcome:
    """One forall step: the first kernel match whose combined effect (kernel plus
    every multi match found in the unchanged graph) is applicable is applied
    atomically."""
    for km in _candidates(scheme.kernel, graph, pre or Match(), injective):
        multi_matches = _multi_matches(scheme, km, graph, injective)
        eff = _combined_effect(scheme, km, multi_matches, graph)
        if _violation(graph, eff, dangling) is not None:
            continue
        edits, ids = _perform(graph, eff)
        created = {key[-1]: oid for key, oid in ids.items() if key[0] == "k"}
        return ApplyOutcome(True, km, _outputs(scheme.kernel, km, eff.ends, ids, graph),
                            edits, created)
    return ApplyOutcome(False)
