"""Textual formats: transformation systems (``.gts``) and instance models (``.gim``).

System files hold metamodels, rules written in an integrated stereotype
syntax, and units::

    metamodel graph3 {
      class Node {
        name: string
        linksTo: Node[*]
      }
    }

    rule InsertTransitiveEdge {
      preserve a: Node
      preserve b: Node
      preserve c: Node
      preserve a -linksTo-> b
      preserve b -linksTo-> c
      create a -linksTo-> c
      forbid(exists) a -linksTo-> c
    }

    unit InsertTransitiveEdges = counted(-1) [InsertTransitiveEdge]

Model files list objects and links::

    model graph3 {
      #1 : graph3.Node { name = "a" }
      #2 : graph3.Node { name = "b" }
      #1 -linksTo-> #2
    }
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from . import expr as ex
from .matcher import And, Formula, Leaf, Not, Or, Pattern, PatternEdge, PatternNode
from .model import (
    PRIMITIVE_TYPES,
    TRACE_METAMODEL,
    ClassDef,
    GraphError,
    InstanceGraph,
    Metamodel,
    MetamodelError,
    ObjectRef,
    RefDef,
    Registry,
    UnknownClass,
    UnknownFeature,
    value_type,
)
from .rules import AmalgamationScheme, Parameter, Rule, embed_by_name
from .units import (
    AmalgamationUnit,
    ConditionalUnit,
    CountedUnit,
    IndependentUnit,
    ParamMapping,
    PriorityUnit,
    SequentialUnit,
    Unit,
    UnitError,
    check_acyclic,
)


class ParseError(Exception):
    kind = "syntax"

    def __init__(self, message: str, line: int = 1, col: int = 1):
        super().__init__(f"{line}:{col}: {self.kind} error: {message}")
        self.message = message
        self.line = line
        self.col = col


class DSLSyntaxError(ParseError):
    kind = "syntax"


class ResolutionError(ParseError):
    kind = "resolution"


class ConformanceError(ParseError):
    kind = "conformance"


# -- lexing ----------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*)
  | (?P<float>\d+\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+)
  | (?P<int>\d+)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>->|:=|\|\||&&|==|!=|<=|>=|\.\.|[-+*/%<>!().{}\[\],:=\#&|])
    """,
    re.VERBOSE,
)


@dataclass
class Tok:
    kind: str
    text: str
    pos: int


def _line_col(text: str, pos: int) -> tuple[int, int]:
    pos = max(0, min(pos, len(text)))
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


def _tokenize(text: str) -> list[Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise DSLSyntaxError(f"unexpected character {text[pos]!r}", *_line_col(text, pos))
        if m.lastgroup not in ("ws", "comment"):
            toks.append(Tok(m.lastgroup, m.group(), pos))
        pos = m.end()
    toks.append(Tok("eof", "", len(text)))
    return toks


class _Reader:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self, k: int = 0) -> Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def take(self) -> Tok:
        tok = self.peek()
        if tok.kind != "eof":
            self.i += 1
        return tok

    def error(self, message: str, tok: Tok | None = None, cls=DSLSyntaxError):
        tok = tok or self.peek()
        return cls(message, *_line_col(self.text, tok.pos))

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok.text == text and tok.kind in ("op", "name")

    def accept(self, text: str) -> Tok | None:
        if self.at(text):
            return self.take()
        return None

    def expect(self, text: str) -> Tok:
        if not self.at(text):
            found = self.peek().text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        return self.take()

    def name(self, what: str = "name") -> Tok:
        tok = self.peek()
        if tok.kind != "name":
            raise self.error(f"expected {what}, found {tok.text or 'end of input'!r}")
        return self.take()

    def dotted(self, what: str = "name") -> tuple[str, Tok]:
        first = self.name(what)
        parts = [first.text]
        while self.at(".") and self.peek(1).kind == "name":
            self.take()
            parts.append(self.take().text)
        return ".".join(parts), first

    def expression(self) -> tuple[ex.Expr, Tok]:
        """Read an expression up to a top-level ``,`` or ``}``."""
        start = self.peek()
        depth = 0
        while True:
            tok = self.peek()
            if tok.kind == "eof":
                break
            if tok.kind == "op":
                if tok.text == "(":
                    depth += 1
                elif tok.text == ")":
                    if depth == 0:
                        break
                    depth -= 1
                elif depth == 0 and tok.text in (",", "}", "{", "->", "[", "]", ":=", ":"):
                    break
            self.take()
        end = self.peek().pos
        source = self.text[start.pos:end]
        if not source.strip():
            raise self.error("expected an expression", start)
        try:
            return ex.parse_expr(source), start
        except ex.ExprSyntaxError as exc:
            raise DSLSyntaxError(str(exc), *_line_col(self.text, start.pos + exc.pos)) from None

    def literal(self):
        tok = self.peek()
        neg = False
        if tok.text == "-" and tok.kind == "op":
            self.take()
            neg = True
            tok = self.peek()
        self.take()
        if tok.kind == "int":
            v = int(tok.text)
        elif tok.kind == "float":
            v = float(tok.text)
        elif tok.kind == "string" and not neg:
            try:
                return ex.unescape(tok.text[1:-1])
            except ex.ExprSyntaxError:
                raise self.error("bad string escape", tok) from None
        elif tok.kind == "name" and tok.text in ("true", "false") and not neg:
            return tok.text == "true"
        else:
            raise self.error(f"expected a literal, found {tok.text or 'end of input'!r}", tok)
        return -v if neg else v


# -- system files ---------------------------------------------------------------

@dataclass
class SystemFile:
    registry: Registry
    metamodels: dict[str, Metamodel] = field(default_factory=dict)
    rules: dict[str, Rule] = field(default_factory=dict)
    units: dict[str, Unit] = field(default_factory=dict)

    def get(self, name: str) -> Rule | Unit:
        if name in self.units:
            return self.units[name]
        if name in self.rules:
            return self.rules[name]
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return name in self.units or name in self.rules

    def attach(self, graph: InstanceGraph) -> InstanceGraph:
        """Register every metamodel of this system with ``graph`` so rules
        may create objects of classes the model did not declare."""
        for mm in self.metamodels.values():
            graph.registry.register(mm)
        return graph


@dataclass
class _Element:
    action: str  # preserve | create | delete | forbid | require
    group: str | None
    tok: Tok
    var: str | None = None
    cls_name: str | None = None
    attrs: list = field(default_factory=list)  # (attr, op, expr)
    edge: tuple[str, str, str] | None = None


def parse_system(text: str) -> SystemFile:
    """Parse a transformation system; raises :class:`ParseError` on any defect."""
    try:
        return _parse_system(text)
    except ParseError:
        raise
    except (RecursionError, MetamodelError, UnitError, ValueError, KeyError) as exc:
        raise DSLSyntaxError(f"malformed input ({exc})") from None


def _parse_system(text: str) -> SystemFile:
    rd = _Reader(text)
    raw_metamodels = []
    raw_rules = []
    raw_units = []
    names: dict[str, Tok] = {}
    while rd.peek().kind != "eof":
        tok = rd.peek()
        if rd.accept("metamodel"):
            raw_metamodels.append(_read_metamodel(rd))
        elif rd.accept("rule"):
            raw_rules.append(_read_rule(rd))
        elif rd.accept("unit"):
            raw_units.append(_read_unit(rd))
        else:
            raise rd.error(f"expected 'metamodel', 'rule' or 'unit', found {tok.text!r}")
    for name_tok, *_ in raw_rules + raw_units:
        if name_tok.text in names:
            raise rd.error(f"duplicate name {name_tok.text!r}", name_tok, ResolutionError)
        names[name_tok.text] = name_tok

    registry = Registry()
    sys = SystemFile(registry)
    for mm_tok, classes in raw_metamodels:
        if mm_tok.text in sys.metamodels or mm_tok.text == TRACE_METAMODEL:
            raise rd.error(f"duplicate metamodel {mm_tok.text!r}", mm_tok, ResolutionError)
        mm = Metamodel(mm_tok.text)
        for cls_tok, features in classes:
            if cls_tok.text in mm.classes:
                raise rd.error(f"duplicate class {cls_tok.text!r}", cls_tok, ResolutionError)
            mm.add_class(cls_tok.text)
        sys.metamodels[mm.name] = mm
        registry.register(mm)
    for mm_tok, classes in raw_metamodels:
        mm = sys.metamodels[mm_tok.text]
        for cls_tok, features in classes:
            cls = mm.classes[cls_tok.text]
            for f_tok, type_name, type_tok, many, containment in features:
                if f_tok.text in cls.attributes or f_tok.text in cls.references:
                    raise rd.error(f"duplicate feature {f_tok.text!r}", f_tok, ResolutionError)
                if type_name in PRIMITIVE_TYPES:
                    if many is not None or containment:
                        raise rd.error("attributes take no bounds", f_tok)
                    cls.attributes[f_tok.text] = type_name
                    continue
                try:
                    target = registry.resolve(type_name, prefer=mm.name)
                except UnknownClass as exc:
                    raise rd.error(f"unknown class {exc}", type_tok, ResolutionError) from None
                cls.references[f_tok.text] = RefDef(f_tok.text, target.qualname, bool(many),
                                                    containment)

    for name_tok, params, elements, conditions in raw_rules:
        sys.rules[name_tok.text] = _build_rule(rd, registry, name_tok, params, elements, conditions)
    pending = {u[0].text: u for u in raw_units}
    for name_tok, params, kind, body, mappings in raw_units:
        sys.units[name_tok.text] = _make_unit(kind, name_tok.text, params)
    for name_tok, params, kind, body, mappings in raw_units:
        _link_unit(rd, sys, sys.units[name_tok.text], kind, body, mappings)
    for unit in sys.units.values():
        try:
            check_acyclic(unit)
        except UnitError as exc:
            raise rd.error(str(exc), pending[unit.name][0], ResolutionError) from None
    return sys


def _read_metamodel(rd: _Reader):
    mm_tok = rd.name("metamodel name")
    rd.expect("{")
    classes = []
    while not rd.accept("}"):
        rd.expect("class")
        cls_tok = rd.name("class name")
        rd.expect("{")
        features = []
        while not rd.accept("}"):
            containment = bool(rd.accept("contains"))
            f_tok = rd.name("feature name")
            rd.expect(":")
            type_name, type_tok = rd.dotted("type")
            many = None
            if rd.accept("["):
                bound = rd.take()
                if bound.text == "*":
                    many = True
                elif bound.text == "1":
                    many = False
                elif bound.text == "0" and rd.accept(".."):
                    ub = rd.take()
                    if ub.text not in ("1", "*"):
                        raise rd.error("expected upper bound 1 or *", ub)
                    many = ub.text == "*"
                else:
                    raise rd.error("expected bound '*', '1', '0..1' or '0..*'", bound)
                rd.expect("]")
            features.append((f_tok, type_name, type_tok, many, containment))
        classes.append((cls_tok, features))
    return mm_tok, classes


def _read_params(rd: _Reader) -> list[tuple[Tok, str]]:
    params = []
    if rd.accept("("):
        if not rd.accept(")"):
            while True:
                direction = "in"
                if rd.peek().text in ("in", "out", "inout") and rd.peek(1).kind == "name":
                    direction = rd.take().text
                params.append((rd.name("parameter name"), direction))
                if rd.accept(")"):
                    break
                rd.expect(",")
    return params


def _read_rule(rd: _Reader):
    name_tok = rd.name("rule name")
    params = _read_params(rd)
    rd.expect("{")
    elements = []
    conditions = []  # (group or None, formula-ast, tok)
    while not rd.accept("}"):
        tok = rd.peek()
        if rd.accept("condition"):
            group = None
            if not rd.at("="):
                group, _ = rd.dotted("condition name")
            rd.expect("=")
            conditions.append((group, _read_formula(rd), tok))
            continue
        action = rd.name("element action").text
        if action not in ("preserve", "create", "delete", "forbid", "require"):
            raise rd.error(f"unknown action {action!r}", tok)
        group = None
        if action in ("forbid", "require"):
            rd.expect("(")
            group, _ = rd.dotted("condition name")
            rd.expect(")")
        var_tok = rd.name("variable")
        el = _Element(action, group, var_tok)
        if rd.accept(":"):
            el.var = var_tok.text
            el.cls_name, _ = rd.dotted("class name")
            if rd.accept("{"):
                if not rd.accept("}"):
                    while True:
                        attr_tok = rd.name("attribute name")
                        if rd.accept(":="):
                            op = ":="
                        else:
                            rd.expect("=")
                            op = "="
                        expr, _ = rd.expression()
                        el.attrs.append((attr_tok, op, expr))
                        if rd.accept("}"):
                            break
                        rd.expect(",")
        elif rd.accept("-"):
            ref = rd.name("reference name").text
            rd.expect("->")
            tgt = rd.name("variable").text
            el.edge = (var_tok.text, ref, tgt)
        else:
            raise rd.error("expected ':' (node) or '-ref->' (edge)")
        elements.append(el)
    return name_tok, params, elements, conditions


def _read_formula(rd: _Reader):
    def f_or():
        left = f_and()
        while rd.accept("|"):
            left = ("or", left, f_and())
        return left

    def f_and():
        left = f_not()
        while rd.accept("&"):
            left = ("and", left, f_not())
        return left

    def f_not():
        if rd.accept("!"):
            return ("not", f_not())
        if rd.accept("("):
            inner = f_or()
            rd.expect(")")
            return inner
        name, tok = rd.dotted("condition name")
        return ("ref", name, tok)

    return f_or()


def _build_rule(rd: _Reader, registry: Registry, name_tok: Tok, params, elements, conditions) -> Rule:
    rule = Rule(name_tok.text)
    rerr = lambda msg, tok: rd.error(msg, tok, ResolutionError)  # noqa: E731
    node_action: dict[str, str] = {}
    node_group: dict[str, str | None] = {}
    groups: dict[str, Pattern] = {}
    group_kind: dict[str, str] = {}
    group_order: list[str] = []

    def group_pattern(el: _Element) -> Pattern:
        if el.group not in groups:
            parts = el.group.split(".")
            for k in range(1, len(parts)):
                if ".".join(parts[:k]) not in groups:
                    raise rerr(f"condition {el.group!r} declared before its parent", el.tok)
            groups[el.group] = Pattern()
            group_kind[el.group] = el.action
            group_order.append(el.group)
        elif group_kind[el.group] != el.action:
            raise rerr(f"condition {el.group!r} mixes forbid and require", el.tok)
        return groups[el.group]

    for el in elements:
        if el.var is None:
            continue
        if el.var in node_action:
            raise rerr(f"variable {el.var!r} declared twice", el.tok)
        try:
            cls = registry.resolve(el.cls_name)
        except UnknownClass as exc:
            raise rerr(f"unknown class {exc}", el.tok) from None
        node_action[el.var] = el.action
        node_group[el.var] = el.group
        constraints = []
        for attr_tok, op, expr in el.attrs:
            if attr_tok.text not in cls.attributes:
                raise rerr(f"{cls.qualname} has no attribute {attr_tok.text!r}", attr_tok)
            if el.action == "create" or op == ":=":
                if el.action not in ("create", "preserve"):
                    raise rerr("':=' is only allowed on preserved nodes", attr_tok)
                rule.assignments.append((el.var, attr_tok.text, expr))
            else:
                constraints.append((attr_tok.text, expr))
        if el.action in ("preserve", "delete"):
            rule.lhs.nodes.append(PatternNode(el.var, cls, constraints))
        if el.action in ("preserve", "create"):
            rule.rhs.nodes.append(PatternNode(el.var, cls, [] if el.action == "create" else []))
        if el.action == "preserve":
            rule.mapping[el.var] = el.var
        if el.action in ("forbid", "require"):
            group_pattern(el).nodes.append(PatternNode(el.var, cls, constraints))

    def visible(var: str, group: str | None) -> bool:
        if var not in node_action:
            return False
        owner = node_group[var]
        if owner is None:
            return node_action[var] in ("preserve", "delete")
        return group is not None and (group == owner or group.startswith(owner + "."))

    for el in elements:
        if el.edge is None:
            continue
        src, ref, tgt = el.edge
        edge = PatternEdge(src, ref, tgt)
        for end in (src, tgt):
            if end not in node_action:
                raise rerr(f"unknown variable {end!r}", el.tok)
        if el.action in ("forbid", "require"):
            if not (visible(src, el.group) and visible(tgt, el.group)):
                raise rerr(f"edge endpoints not visible in condition {el.group!r}", el.tok)
            group_pattern(el).edges.append(edge)
            continue
        allowed = {"preserve": ("preserve",), "delete": ("preserve", "delete"),
                   "create": ("preserve", "create")}[el.action]
        for end in (src, tgt):
            if node_group[end] is not None or node_action[end] not in allowed:
                raise rerr(f"{el.action} edge cannot use {node_action[end]} node {end!r}", el.tok)
        if el.action in ("preserve", "delete"):
            rule.lhs.edges.append(edge)
        if el.action in ("preserve", "create"):
            rule.rhs.edges.append(edge)

    leaves_by_name = {g: Leaf(g, groups[g], group_kind[g]) for g in group_order}
    explicit = {}
    for group, ast, tok in conditions:
        if group in explicit:
            raise rerr("condition formula given twice", tok)
        if group is not None and group not in groups:
            raise rerr(f"unknown condition {group!r}", tok)
        explicit[group] = (ast, tok)

    def children(parent: str | None) -> list[str]:
        depth = 0 if parent is None else parent.count(".") + 1
        return [g for g in group_order if g.count(".") == depth
                and (parent is None or g.startswith(parent + "."))]

    def to_formula(ast, scope: list[str]) -> Formula:
        tag = ast[0]
        if tag == "ref":
            if ast[1] not in scope:
                raise rerr(f"condition {ast[1]!r} not available here", ast[2])
            return leaves_by_name[ast[1]]
        if tag == "not":
            return Not(to_formula(ast[1], scope))
        cls = And if tag == "and" else Or
        return cls(to_formula(ast[1], scope), to_formula(ast[2], scope))

    def build(parent: str | None) -> Formula | None:
        scope = children(parent)
        if parent in explicit:
            return to_formula(explicit[parent][0], scope)
        formula = None
        for g in scope:
            leaf = leaves_by_name[g]
            term = Not(leaf) if group_kind[g] == "forbid" else leaf
            formula = term if formula is None else And(formula, term)
        return formula

    for g in group_order:
        leaves_by_name[g].nested = build(g)
    rule.condition = build(None)

    lhs_vars = set(rule.lhs.variables())
    for var, attr, e in rule.assignments:
        _, variables = ex.free_names(e)
        bad = variables - lhs_vars
        if bad:
            raise rerr(f"expression for {var}.{attr} reads non-lhs variable {sorted(bad)[0]!r}",
                       name_tok)
    for p_tok, direction in params:
        if rule.parameter(p_tok.text) is not None:
            raise rerr(f"duplicate parameter {p_tok.text!r}", p_tok)
        rule.parameters.append(Parameter(p_tok.text, direction))
    problems = rule.validate()
    if problems:
        raise rerr(f"rule {rule.name}: {problems[0]}", name_tok)
    return rule


def _read_names(rd: _Reader) -> list[Tok]:
    rd.expect("[")
    out = []
    if rd.accept("]"):
        return out
    while True:
        out.append(rd.name("unit or rule name"))
        if rd.accept("]"):
            return out
        rd.expect(",")


def _read_unit(rd: _Reader):
    name_tok = rd.name("unit name")
    params = _read_params(rd)
    rd.expect("=")
    kind_tok = rd.name("unit kind")
    kind = kind_tok.text
    if kind in ("sequential", "independent", "priority"):
        body = _read_names(rd)
    elif kind == "counted":
        rd.expect("(")
        neg = bool(rd.accept("-"))
        n_tok = rd.take()
        if n_tok.kind != "int":
            raise rd.error("expected an integer count", n_tok)
        rd.expect(")")
        count = -int(n_tok.text) if neg else int(n_tok.text)
        if count < -1:
            raise rd.error("count must be -1 or non-negative", n_tok)
        names = _read_names(rd)
        if len(names) != 1:
            raise rd.error("counted units take exactly one subunit", kind_tok)
        body = (count, names[0])
    elif kind == "conditional":
        rd.expect("if")
        if_tok = rd.name()
        rd.expect("then")
        then_tok = rd.name()
        else_tok = rd.name() if rd.accept("else") else None
        body = (if_tok, then_tok, else_tok)
    elif kind == "amalgamation":
        rd.expect("kernel")
        kernel_tok = rd.name("kernel rule")
        rd.expect("multis")
        body = (kernel_tok, _read_names(rd))
    else:
        raise rd.error(f"unknown unit kind {kind!r}", kind_tok)
    mappings = []
    if rd.accept("{"):
        while not rd.accept("}"):
            map_tok = rd.expect("map")
            su = rd.name().text
            rd.expect(".")
            sp = rd.name().text
            rd.expect("->")
            tu = rd.name().text
            rd.expect(".")
            tp = rd.name().text
            mappings.append((map_tok, (su, sp), (tu, tp)))
    return name_tok, params, kind, body, mappings


def _make_unit(kind: str, name: str, params) -> Unit:
    parameters = [Parameter(t.text, d) for t, d in params]
    cls = {"sequential": SequentialUnit, "independent": IndependentUnit, "priority": PriorityUnit,
           "counted": CountedUnit, "conditional": ConditionalUnit,
           "amalgamation": AmalgamationUnit}[kind]
    return cls(name, parameters)


def _link_unit(rd: _Reader, sys: SystemFile, unit: Unit, kind: str, body, mappings) -> None:
    def lookup(tok: Tok):
        if tok.text == unit.name:
            raise rd.error(f"unit {unit.name} contains itself", tok, ResolutionError)
        try:
            return sys.get(tok.text)
        except KeyError:
            raise rd.error(f"unknown unit or rule {tok.text!r}", tok, ResolutionError) from None

    names = [p.name for p in unit.parameters]
    if len(set(names)) != len(names):
        raise rd.error(f"duplicate parameter in unit {unit.name}", None, ResolutionError)
    if kind in ("sequential", "independent", "priority"):
        unit.subunits = [lookup(t) for t in body]
    elif kind == "counted":
        unit.count = body[0]
        unit.subunit = lookup(body[1])
    elif kind == "conditional":
        unit.if_unit = lookup(body[0])
        unit.then_unit = lookup(body[1])
        unit.else_unit = lookup(body[2]) if body[2] is not None else None
    else:
        kernel_tok, multi_toks = body
        kernel = lookup(kernel_tok)
        multis = [lookup(t) for t in multi_toks]
        for t, r in [(kernel_tok, kernel)] + list(zip(multi_toks, multis)):
            if not isinstance(r, Rule):
                raise rd.error(f"{t.text} is not a rule", t, ResolutionError)
        scheme = AmalgamationScheme(kernel, [embed_by_name(kernel, m) for m in multis])
        problems = scheme.validate()
        if problems:
            raise rd.error(problems[0], kernel_tok, ResolutionError)
        unit.scheme = scheme
    children = {c.name: c for c in unit.children()}
    for map_tok, source, target in mappings:
        for end, role in ((source, "source"), (target, "target")):
            owner = unit if end[0] == unit.name else children.get(end[0])
            if owner is None:
                raise rd.error(f"{end[0]} is neither {unit.name} nor one of its children",
                               map_tok, ResolutionError)
            p = owner.parameter(end[1])
            if p is None:
                raise rd.error(f"{end[0]} has no parameter {end[1]!r}", map_tok, ResolutionError)
            if owner is not unit:
                if role == "target" and not p.is_input:
                    raise rd.error(f"{end[0]}.{end[1]} is not an input", map_tok, ResolutionError)
                if role == "source" and not p.is_output:
                    raise rd.error(f"{end[0]}.{end[1]} is not an output", map_tok, ResolutionError)
        unit.mappings.append(ParamMapping(source, target))


# -- system printing -----------------------------------------------------------------

def _class_label(cls: ClassDef, registry: Registry, home: str | None = None) -> str:
    if home == cls.metamodel:
        return cls.name
    try:
        if registry.resolve(cls.name) is cls:
            return cls.name
    except UnknownClass:
        pass
    return cls.qualname


def _print_params(params: list[Parameter]) -> str:
    if not params:
        return ""
    return "(" + ", ".join(f"{p.direction} {p.name}" for p in params) + ")"


def _print_formula(f: Formula, prec: int = 0) -> str:
    if isinstance(f, Leaf):
        return f.name
    if isinstance(f, Not):
        return "!" + _print_formula(f.operand, 3)
    if isinstance(f, And):
        text = f"{_print_formula(f.left, 2)} & {_print_formula(f.right, 3)}"
        return f"({text})" if prec > 2 else text
    text = f"{_print_formula(f.left, 1)} | {_print_formula(f.right, 2)}"
    return f"({text})" if prec > 1 else text


def _print_attrs(items: list[tuple[str, str, ex.Expr]]) -> str:
    if not items:
        return ""
    return " { " + ", ".join(f"{a} {op} {ex.print_expr(e)}" for a, op, e in items) + " }"


def print_rule(rule: Rule, registry: Registry) -> str:
    if any(k != v for k, v in rule.mapping.items()):
        raise ValueError("only identity-named mappings have a textual form")
    lines = [f"rule {rule.name}{_print_params(rule.parameters)} {{"]
    assigns: dict[str, list] = {}
    for var, attr, e in rule.assignments:
        assigns.setdefault(var, []).append((attr, e))
    for node in rule.lhs.nodes:
        action = "preserve" if node.var in rule.mapping else "delete"
        items = [(a, "=", e) for a, e in node.constraints]
        items += [(a, ":=", e) for a, e in assigns.get(node.var, [])]
        label = _class_label(node.cls, registry)
        lines.append(f"  {action} {node.var}: {label}{_print_attrs(items)}")
    for var in rule.created_vars():
        node = rule.rhs.node(var)
        items = [(a, "=", e) for a, e in assigns.get(var, [])]
        lines.append(f"  create {var}: {_class_label(node.cls, registry)}{_print_attrs(items)}")
    for e in rule.lhs.edges:
        action = "preserve" if rule.preserved_edge(e) else "delete"
        lines.append(f"  {action} {e.src} -{e.ref}-> {e.tgt}")
    for e in rule.created_edges():
        lines.append(f"  create {e.src} -{e.ref}-> {e.tgt}")

    formulas = []

    def emit(leaf: Leaf):
        for node in leaf.pattern.nodes:
            items = [(a, "=", e) for a, e in node.constraints]
            lines.append(f"  {leaf.kind}({leaf.name}) {node.var}: "
                         f"{_class_label(node.cls, registry)}{_print_attrs(items)}")
        for e in leaf.pattern.edges:
            lines.append(f"  {leaf.kind}({leaf.name}) {e.src} -{e.ref}-> {e.tgt}")
        if leaf.nested is not None:
            formulas.append((leaf.name, leaf.nested))
        for sub in _unique_leaves(leaf.nested):
            emit(sub)

    for leaf in _unique_leaves(rule.condition):
        emit(leaf)
    if rule.condition is not None:
        lines.append(f"  condition = {_print_formula(rule.condition)}")
    for name, f in formulas:
        lines.append(f"  condition {name} = {_print_formula(f)}")
    lines.append("}")
    return "\n".join(lines)


def _unique_leaves(f: Formula | None) -> list[Leaf]:
    out: list[Leaf] = []

    def walk(x):
        if x is None:
            return
        if isinstance(x, Leaf):
            if all(x is not y for y in out):
                out.append(x)
        elif isinstance(x, Not):
            walk(x.operand)
        else:
            walk(x.left)
            walk(x.right)

    walk(f)
    return out


def print_metamodel(mm: Metamodel, registry: Registry) -> str:
    lines = [f"metamodel {mm.name} {{"]
    for cls in mm.classes.values():
        if not cls.attributes and not cls.references:
            lines.append(f"  class {cls.name} {{}}")
            continue
        lines.append(f"  class {cls.name} {{")
        for name, t in cls.attributes.items():
            lines.append(f"    {name}: {t}")
        for ref in cls.references.values():
            target = registry.resolve(ref.target)
            label = target.name if target.metamodel == mm.name else target.qualname
            bound = "[*]" if ref.many else ""
            prefix = "contains " if ref.containment else ""
            lines.append(f"    {prefix}{ref.name}: {label}{bound}")
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines)


def _print_unit(unit: Unit) -> str:
    head = f"unit {unit.name}{_print_params(unit.parameters)} = "
    if isinstance(unit, (SequentialUnit, IndependentUnit, PriorityUnit)):
        kind = {SequentialUnit: "sequential", IndependentUnit: "independent",
                PriorityUnit: "priority"}[type(unit)]
        body = f"{kind} [{', '.join(u.name for u in unit.subunits)}]"
    elif isinstance(unit, CountedUnit):
        body = f"counted({unit.count}) [{unit.subunit.name}]"
    elif isinstance(unit, ConditionalUnit):
        body = f"conditional if {unit.if_unit.name} then {unit.then_unit.name}"
        if unit.else_unit is not None:
            body += f" else {unit.else_unit.name}"
    else:
        multis = ", ".join(m.rule.name for m in unit.scheme.multis)
        body = f"amalgamation kernel {unit.scheme.kernel.name} multis [{multis}]"
    text = head + body
    if unit.mappings:
        maps = [f"  map {m.source[0]}.{m.source[1]} -> {m.target[0]}.{m.target[1]}"
                for m in unit.mappings]
        text += " {\n" + "\n".join(maps) + "\n}"
    return text


def print_system(sys: SystemFile) -> str:
    blocks = [print_metamodel(mm, sys.registry) for mm in sys.metamodels.values()]
    blocks += [print_rule(r, sys.registry) for r in sys.rules.values()]
    blocks += [_print_unit(u) for u in sys.units.values()]
    return "\n\n".join(blocks) + "\n"


# -- model files ---------------------------------------------------------------------

@dataclass
class ModelFile:
    graph: InstanceGraph
    metamodels: list[str]


def parse_model(text: str, metamodels=None) -> ModelFile:
    """Parse an instance model.

    ``metamodels`` supplies the available metamodels (a :class:`Registry`,
    a :class:`SystemFile`, or an iterable of :class:`Metamodel`); the
    model header selects which of them the graph is typed over.
    """
    try:
        return _parse_model(text, metamodels)
    except ParseError:
        raise
    except (RecursionError, ValueError, KeyError) as exc:
        raise DSLSyntaxError(f"malformed input ({exc})") from None


def _available(metamodels) -> dict[str, Metamodel]:
    if metamodels is None:
        return {}
    if isinstance(metamodels, SystemFile):
        return dict(metamodels.metamodels)
    if isinstance(metamodels, Registry):
        return {mm.name: mm for mm in metamodels.user_metamodels()}
    return {mm.name: mm for mm in metamodels}


def _parse_model(text: str, metamodels) -> ModelFile:
    available = _available(metamodels)
    rd = _Reader(text)
    rd.expect("model")
    header: list[Tok] = []
    if rd.peek().kind == "name":
        header.append(rd.name())
        while rd.accept(","):
            header.append(rd.name("metamodel name"))
    rd.expect("{")
    objects = []  # (label tok, explicit id | None, class tok, class name, attrs)
    links = []
    while not rd.accept("}"):
        label_tok, explicit = _read_label(rd)
        if rd.accept(":"):
            cls_name, cls_tok = rd.dotted("class name")
            attrs = []
            if rd.accept("{"):
                if not rd.accept("}"):
                    while True:
                        a_tok = rd.name("attribute name")
                        rd.expect("=")
                        attrs.append((a_tok, rd.literal()))
                        if rd.accept("}"):
                            break
                        rd.expect(",")
            objects.append((label_tok, explicit, cls_tok, cls_name, attrs))
        elif rd.accept("-"):
            ref_tok = rd.name("reference name")
            rd.expect("->")
            tgt_tok, tgt_explicit = _read_label(rd)
            links.append((label_tok, explicit, ref_tok, tgt_tok, tgt_explicit))
        else:
            raise rd.error("expected ':' (object) or '-ref->' (link)")
    if rd.peek().kind != "eof":
        raise rd.error("trailing input after model")

    chosen = []
    for t in header:
        if t.text == TRACE_METAMODEL:
            continue
        if t.text not in available:
            raise rd.error(f"unknown metamodel {t.text!r}", t, ResolutionError)
        chosen.append(available[t.text])
    graph = InstanceGraph(chosen)

    ids: dict[str, int] = {}
    explicit_ids = [e for _, e, *_ in objects if e is not None]
    next_free = max(explicit_ids, default=0) + 1
    for label_tok, explicit, cls_tok, cls_name, attrs in objects:
        key = _label_key(label_tok.text, explicit)
        if key in ids:
            raise rd.error(f"object {label_tok.text} declared twice", label_tok, ResolutionError)
        if explicit is None:
            oid, next_free = next_free, next_free + 1
        else:
            oid = explicit
        ids[key] = oid
        try:
            cls = graph.resolve_class(cls_name)
        except UnknownClass as exc:
            raise rd.error(f"unknown class {exc}", cls_tok, ResolutionError) from None
        graph.insert_object(oid, cls)
        for a_tok, value in attrs:
            if a_tok.text not in cls.attributes:
                raise rd.error(f"{cls.qualname} has no attribute {a_tok.text!r}", a_tok,
                               ResolutionError)
            try:
                graph.set_attribute(oid, a_tok.text, value)
            except GraphError as exc:
                raise rd.error(str(exc), a_tok, ConformanceError) from None
    for src_tok, src_explicit, ref_tok, tgt_tok, tgt_explicit in links:
        ends = []
        for tok, explicit in ((src_tok, src_explicit), (tgt_tok, tgt_explicit)):
            key = _label_key(tok.text, explicit)
            if key not in ids:
                raise rd.error(f"unknown object {tok.text}", tok, ResolutionError)
            ends.append(ids[key])
        try:
            graph.add_link(ends[0], ref_tok.text, ends[1])
        except UnknownFeature as exc:
            raise rd.error(str(exc), ref_tok, ResolutionError) from None
        except GraphError as exc:
            raise rd.error(str(exc), ref_tok, ConformanceError) from None
    problems = graph.conforms()
    if problems:
        raise ConformanceError(problems[0], 1, 1)
    return ModelFile(graph, [mm.name for mm in chosen])


def _read_label(rd: _Reader) -> tuple[Tok, int | None]:
    if rd.accept("#"):
        tok = rd.take()
        if tok.kind != "int":
            raise rd.error("expected an object number after '#'", tok)
        return tok, int(tok.text)
    return rd.name("object label"), None


def _label_key(text: str, explicit: int | None) -> str:
    return f"#{explicit}" if explicit is not None else text


def print_model(graph: InstanceGraph) -> str:
    """Canonical text of a graph: objects by id, attributes by name, links in
    stored order."""
    names = [mm.name for mm in graph.registry.user_metamodels()]
    header = "model " + ", ".join(names) if names else "model"
    lines = [header + " {"]
    for oid in sorted(graph.objects):
        obj = graph.objects[oid]
        attrs = ", ".join(f"{a} = {ex.format_value(obj.attrs[a])}" for a in sorted(obj.attrs))
        suffix = f" {{ {attrs} }}" if attrs else ""
        lines.append(f"  #{oid} : {obj.cls.qualname}{suffix}")
    for src, ref, tgt in graph.links:
        lines.append(f"  #{src} -{ref}-> #{tgt}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def format_param_value(value, graph: InstanceGraph) -> str:
    """``<object Class#id>`` for objects, a literal otherwise."""
    if isinstance(value, ObjectRef):
        obj = graph.objects.get(value.id)
        cls = obj.cls.name if obj is not None else "?"
        return f"<object {cls}#{value.id}>"
    if value_type(value) is None:
        return repr(value)
    return ex.format_value(value)
