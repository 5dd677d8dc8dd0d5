"""Pattern matching over instance graphs and application-condition formulas.

The search backtracks over pattern variables in declaration order and tries
candidates by ascending object id, so every enumeration is deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping

from .expr import Env, EvalError, Expr, Param, UnboundName, _compare, eval_expr, free_names
from .model import ClassDef, InstanceGraph


@dataclass
class PatternNode:
    var: str
    cls: ClassDef
    constraints: list[tuple[str, Expr]] = field(default_factory=list)


@dataclass(frozen=True)
class PatternEdge:
    src: str
    ref: str
    tgt: str


@dataclass
class Pattern:
    nodes: list[PatternNode] = field(default_factory=list)
    edges: list[PatternEdge] = field(default_factory=list)

    def node(self, var: str) -> PatternNode | None:
        for n in self.nodes:
            if n.var == var:
                return n
        return None

    def variables(self) -> list[str]:
        return [n.var for n in self.nodes]


@dataclass(frozen=True)
class Match:
    bindings: Mapping[str, int] = field(default_factory=dict)
    values: Mapping[str, object] = field(default_factory=dict)

    def extend(self, var: str, oid: int) -> Match:
        return Match({**self.bindings, var: oid}, self.values)

    def with_values(self, values: Mapping[str, object]) -> Match:
        return Match(self.bindings, {**self.values, **values})


# -- formulas ---------------------------------------------------------------

@dataclass
class Leaf:
    """Holds iff the host match extends to ``pattern`` (and, when given,
    the extension satisfies ``nested``)."""

    name: str
    pattern: Pattern
    kind: str = "require"  # "forbid" | "require": how the condition was declared
    nested: Formula | None = None


@dataclass
class Not:
    operand: Formula


@dataclass
class And:
    left: Formula
    right: Formula


@dataclass
class Or:
    left: Formula
    right: Formula


Formula = Leaf | Not | And | Or


def leaves(formula: Formula | None) -> list[Leaf]:
    if formula is None:
        return []
    if isinstance(formula, Leaf):
        return [formula]
    if isinstance(formula, Not):
        return leaves(formula.operand)
    return leaves(formula.left) + leaves(formula.right)


# -- search -------------------------------------------------------------------

@dataclass
class _Check:
    owner: str
    attr: str
    expr: Expr
    params: frozenset[str]
    variables: frozenset[str]


def _plan_checks(pattern: Pattern) -> list[_Check]:
    checks = []
    for node in pattern.nodes:
        for attr, expr in node.constraints:
            params, variables = free_names(expr)
            checks.append(_Check(node.var, attr, expr, frozenset(params), frozenset(variables)))
    return checks


class _Search:
    def __init__(self, pattern: Pattern, graph: InstanceGraph, partial: Match, injective: bool):
        self.pattern = pattern
        self.graph = graph
        self.injective = injective
        self.partial = partial
        self.order = [n for n in pattern.nodes if n.var not in partial.bindings]
        self.prebound = [n for n in pattern.nodes if n.var in partial.bindings]
        self.checks = _plan_checks(pattern)
        # edges incident to each free variable, resolved once its partner is bound
        self.edges_at: dict[str, list[PatternEdge]] = {}
        known = set(pattern.variables()) | set(partial.bindings)
        for e in pattern.edges:
            for end in (e.src, e.tgt):
                if end not in known:
                    raise ValueError(f"edge endpoint {end!r} is neither declared nor bound")
            self.edges_at.setdefault(e.src, []).append(e)
            if e.tgt != e.src:
                self.edges_at.setdefault(e.tgt, []).append(e)

    def run(self) -> Iterator[Match]:
        bindings = dict(self.partial.bindings)
        values = dict(self.partial.values)
        for node in self.prebound:
            oid = bindings[node.var]
            obj = self.graph.objects.get(oid)
            if obj is None or obj.cls is not node.cls:
                return
        if self.injective and len(set(bindings.values())) != len(bindings):
            return
        for e in self.pattern.edges:
            if e.src in bindings and e.tgt in bindings:
                if not self.graph.has_link(bindings[e.src], e.ref, bindings[e.tgt]):
                    return
        done: set[int] = set()
        if not self._run_checks(bindings, values, done):
            return
        yield from self._extend(0, bindings, values, done)

    def _candidates(self, node: PatternNode, bindings: dict[str, int]) -> list[int]:
        g = self.graph
        # narrow via an edge to an already-bound variable when one exists
        for e in self.edges_at.get(node.var, []):
            if e.src == node.var and e.tgt in bindings and e.tgt != node.var:
                cands = g.sources(bindings[e.tgt], e.ref)
                return sorted(c for c in set(cands) if g.objects[c].cls is node.cls)
            if e.tgt == node.var and e.src in bindings and e.src != node.var:
                cands = g.targets(bindings[e.src], e.ref)
                return sorted(c for c in cands if g.objects[c].cls is node.cls)
        return list(g.ids_of_class(node.cls))

    def _extend(self, depth: int, bindings: dict[str, int], values: dict, done: set[int]):
        if depth == len(self.order):
            if len(done) != len(self.checks):
                missing = [c for i, c in enumerate(self.checks) if i not in done]
                raise UnboundName(
                    f"constraint {missing[0].owner}.{missing[0].attr} references unbound names")
            yield Match(dict(bindings), dict(values))
            return
        node = self.order[depth]
        used = set(bindings.values()) if self.injective else ()
        for oid in self._candidates(node, bindings):
            if oid in used:
                continue
            bindings[node.var] = oid
            if self._edges_ok(node.var, bindings):
                new_values = dict(values)
                new_done = set(done)
                if self._run_checks(bindings, new_values, new_done):
                    yield from self._extend(depth + 1, bindings, new_values, new_done)
            del bindings[node.var]

    def _edges_ok(self, var: str, bindings: dict[str, int]) -> bool:
        for e in self.edges_at.get(var, []):
            if e.src in bindings and e.tgt in bindings:
                if not self.graph.has_link(bindings[e.src], e.ref, bindings[e.tgt]):
                    return False
        return True

    def _run_checks(self, bindings: dict[str, int], values: dict, done: set[int]) -> bool:
        """Evaluate every constraint that became decidable; binds bare
        parameter constraints whose parameter is still unbound."""
        progress = True
        while progress:
            progress = False
            for i, chk in enumerate(self.checks):
                if i in done or chk.owner not in bindings:
                    continue
                if not all(v in bindings for v in chk.variables):
                    continue
                actual = self.graph.objects[bindings[chk.owner]].attrs[chk.attr]
                if isinstance(chk.expr, Param) and chk.expr.name not in values:
                    values[chk.expr.name] = actual
                    done.add(i)
                    progress = True
                    continue
                if not all(p in values for p in chk.params):
                    continue
                env = Env(values, _AttrView(self.graph, bindings))
                expected = eval_expr(chk.expr, env)
                done.add(i)
                progress = True
                if not _compare("==", actual, expected):
                    return False
        return True


class _AttrView(Mapping):
    """Read-only mapping variable -> attribute dict of the bound object."""

    def __init__(self, graph: InstanceGraph, bindings: Mapping[str, int]):
        self.graph = graph
        self.bindings = bindings

    def __getitem__(self, var):
        return self.graph.objects[self.bindings[var]].attrs

    def __iter__(self):
        return iter(self.bindings)

    def __len__(self):
        return len(self.bindings)


def find_matches(pattern: Pattern, graph: InstanceGraph, partial: Match | None = None,
                 injective: bool = True) -> Iterator[Match]:
    """Lazily enumerate all complete matches of ``pattern`` extending ``partial``.

    ``partial`` may bind variables that the pattern does not declare; they
    act as context: edges may mention them and, in injective mode, fresh
    variables must avoid their objects.
    """
    partial = partial or Match()
    return _Search(pattern, graph, partial, injective).run()


def eval_formula(formula: Formula | None, host: Match, graph: InstanceGraph,
                 injective: bool = True) -> bool:
    if formula is None:
        return True
    if isinstance(formula, Leaf):
        for ext in find_matches(formula.pattern, graph, host, injective):
            if eval_formula(formula.nested, ext, graph, injective):
                return True
        return False
    if isinstance(formula, Not):
        return not eval_formula(formula.operand, host, graph, injective)
    if isinstance(formula, And):
        return eval_formula(formula.left, host, graph, injective) and \
            eval_formula(formula.right, host, graph, injective)
    return eval_formula(formula.left, host, graph, injective) or \
        eval_formula(formula.right, host, graph, injective)


def count_matches(pattern: Pattern, formula: Formula | None, graph: InstanceGraph,
                  injective: bool = True, partial: Match | None = None) -> int:
    return sum(1 for m in find_matches(pattern, graph, partial, injective)
               if eval_formula(formula, m, graph, injective))


__all__ = [
    "And", "EvalError", "Formula", "Leaf", "Match", "Not", "Or", "Pattern",
    "PatternEdge", "PatternNode", "count_matches", "eval_formula", "find_matches", "leaves",
]
