"""Transformation units: control structures over rule applications.

Every unit execution is transactional: a failing unit leaves the graph as it
found it. Parameters flow between a unit and its children (and between
siblings) only along declared :class:`ParamMapping` edges.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from .matcher import Match
from .model import InstanceGraph, ObjectRef
from .rules import (
    AmalgamationScheme,
    Parameter,
    Rule,
    apply_amalgamated,
    apply_rule,
)


class UnitError(Exception):
    pass


class MaxStepsExceeded(UnitError):
    pass


class ParameterTypeMismatch(UnitError):
    pass


class UnknownParameter(UnitError):
    pass


class ParameterDirectionError(UnitError):
    pass


@dataclass(frozen=True)
class ParamMapping:
    source: tuple[str, str]  # (unit name, parameter)
    target: tuple[str, str]


@dataclass
class Unit:
    name: str
    parameters: list[Parameter] = field(default_factory=list)
    mappings: list[ParamMapping] = field(default_factory=list)

    def parameter(self, name: str) -> Parameter | None:
        for p in self.parameters:
            if p.name == name:
                return p
        return None

    def children(self) -> list[Unit | Rule]:
        return []


@dataclass
class SequentialUnit(Unit):
    subunits: list[Unit | Rule] = field(default_factory=list)

    def children(self):
        return list(self.subunits)


@dataclass
class IndependentUnit(Unit):
    subunits: list[Unit | Rule] = field(default_factory=list)

    def children(self):
        return list(self.subunits)


@dataclass
class PriorityUnit(Unit):
    subunits: list[Unit | Rule] = field(default_factory=list)

    def children(self):
        return list(self.subunits)


@dataclass
class CountedUnit(Unit):
    subunit: Unit | Rule | None = None
    count: int = -1

    def children(self):
        return [self.subunit]


@dataclass
class ConditionalUnit(Unit):
    if_unit: Unit | Rule | None = None
    then_unit: Unit | Rule | None = None
    else_unit: Unit | Rule | None = None

    def children(self):
        return [u for u in (self.if_unit, self.then_unit, self.else_unit) if u is not None]


@dataclass
class AmalgamationUnit(Unit):
    scheme: AmalgamationScheme | None = None

    def children(self):
        return [self.scheme.kernel]


Executable = Unit | Rule


@dataclass
class ExecContext:
    graph: InstanceGraph
    seed: int = 0
    max_steps: int = 100_000
    injective: bool = True
    dangling: str = "forbid"
    steps: int = 0

    def __post_init__(self):
        self.rng = random.Random(self.seed)

    def step(self) -> None:
        self.steps += 1
        if self.steps > self.max_steps:
            raise MaxStepsExceeded(f"more than {self.max_steps} steps")


@dataclass
class ExecResult:
    success: bool
    outputs: dict[str, object] = field(default_factory=dict)


def check_acyclic(unit: Executable) -> None:
    """Raise if a unit (transitively) contains itself."""
    def visit(u, path):
        if isinstance(u, Rule):
            return
        if any(u is p for p in path):
            raise UnitError(f"unit {u.name} contains itself")
        for c in u.children():
            visit(c, path + [u])
    visit(unit, [])


def _rule_pre_bindings(rule: Rule, inputs: dict[str, object]) -> Match:
    bindings, values = {}, {}
    for p in rule.parameters:
        if not p.is_input or p.name not in inputs:
            continue
        v = inputs[p.name]
        if rule.is_object_param(p.name):
            if not isinstance(v, ObjectRef):
                raise ParameterTypeMismatch(f"{rule.name}.{p.name} expects an object, got {v!r}")
            if rule.lhs.node(p.name) is not None:
                bindings[p.name] = v.id
        else:
            if isinstance(v, ObjectRef):
                raise ParameterTypeMismatch(f"{rule.name}.{p.name} expects a value, got {v!r}")
            values[p.name] = v
    return Match(bindings, values)


def _run_rule(rule: Rule, ctx: ExecContext, inputs: dict) -> ExecResult:
    ctx.step()
    out = apply_rule(rule, ctx.graph, _rule_pre_bindings(rule, inputs), ctx.injective, ctx.dangling)
    return ExecResult(out.success, out.out_values)


class _Frame:
    """Parameter store of one composite unit execution."""

    def __init__(self, unit: Unit, inputs: dict):
        self.unit = unit
        self.store = {k: v for k, v in inputs.items()}
        self.child_out: dict[str, dict] = {}

    def inputs_for(self, child: Executable) -> dict:
        got = {}
        for m in self.unit.mappings:
            if m.target[0] != child.name or m.target[0] == self.unit.name:
                continue
            src_unit, src_param = m.source
            if src_unit == self.unit.name:
                if src_param in self.store:
                    got[m.target[1]] = self.store[src_param]
            elif src_param in self.child_out.get(src_unit, {}):
                got[m.target[1]] = self.child_out[src_unit][src_param]
        return got

    def absorb(self, child: Executable, outputs: dict) -> None:
        self.child_out[child.name] = dict(outputs)
        for m in self.unit.mappings:
            if m.source[0] == child.name and m.target[0] == self.unit.name \
                    and m.source[1] in outputs:
                self.store[m.target[1]] = outputs[m.source[1]]

    def outputs(self) -> dict:
        return {p.name: self.store[p.name] for p in self.unit.parameters
                if p.is_output and p.name in self.store}


def _run_child(frame: _Frame, child: Executable, ctx: ExecContext) -> bool:
    res = execute(child, ctx, frame.inputs_for(child))
    if res.success:
        frame.absorb(child, res.outputs)
    return res.success


def execute(unit: Executable, ctx: ExecContext, inputs: dict | None = None) -> ExecResult:
    """Run ``unit``; on failure (or error) the graph is restored."""
    inputs = inputs or {}
    if isinstance(unit, Rule):
        return _run_rule(unit, ctx, inputs)
    graph = ctx.graph
    sp = graph.savepoint()
    try:
        res = _execute_composite(unit, ctx, inputs)
    except BaseException:
        graph.revert_to(sp)
        raise
    if res.success:
        graph.release(sp)
    else:
        graph.revert_to(sp)
        graph.release(sp)
    return res


def _attempt(frame: _Frame, child: Executable, ctx: ExecContext) -> bool:
    sp = ctx.graph.savepoint()
    ok = _run_child(frame, child, ctx)
    if not ok:
        ctx.graph.revert_to(sp)
    ctx.graph.release(sp)
    return ok


def _execute_composite(unit: Unit, ctx: ExecContext, inputs: dict) -> ExecResult:
    frame = _Frame(unit, inputs)
    if isinstance(unit, SequentialUnit):
        for child in unit.subunits:
            if not _run_child(frame, child, ctx):
                return ExecResult(False)
        return ExecResult(True, frame.outputs())
    if isinstance(unit, CountedUnit):
        if unit.count >= 0:
            for _ in range(unit.count):
                if not _run_child(frame, unit.subunit, ctx):
                    return ExecResult(False)
        else:
            while True:
                ctx.step()
                if not _attempt(frame, unit.subunit, ctx):
                    break
        return ExecResult(True, frame.outputs())
    if isinstance(unit, (PriorityUnit, IndependentUnit)):
        order = list(unit.subunits)
        if isinstance(unit, IndependentUnit):
            ctx.rng.shuffle(order)
        for child in order:
            if _attempt(frame, child, ctx):
                return ExecResult(True, frame.outputs())
        return ExecResult(False)
    if isinstance(unit, ConditionalUnit):
        if _attempt(frame, unit.if_unit, ctx):
            if not _run_child(frame, unit.then_unit, ctx):
                return ExecResult(False)
            return ExecResult(True, frame.outputs())
        if unit.else_unit is None:
            return ExecResult(True, frame.outputs())
        ok = _run_child(frame, unit.else_unit, ctx)
        return ExecResult(ok, frame.outputs() if ok else {})
    if isinstance(unit, AmalgamationUnit):
        kernel = unit.scheme.kernel
        ctx.step()
        pre = _rule_pre_bindings(kernel, frame.inputs_for(kernel))
        out = apply_amalgamated(unit.scheme, ctx.graph, pre, ctx.injective, ctx.dangling)
        if not out.success:
            return ExecResult(False)
        frame.absorb(kernel, out.out_values)
        return ExecResult(True, frame.outputs())
    raise UnitError(f"unknown unit kind {type(unit).__name__}")


def bind_parameters(unit: Executable, external: dict[str, object]) -> dict[str, object]:
    """Validate externally supplied parameter values for a root unit."""
    bound = {}
    for name, value in external.items():
        p = unit.parameter(name)
        if p is None:
            raise UnknownParameter(f"{unit.name} has no parameter {name!r}")
        if not p.is_input:
            raise ParameterDirectionError(f"{unit.name}.{name} is an out parameter")
        if isinstance(unit, Rule):
            if unit.is_object_param(name) != isinstance(value, ObjectRef):
                kind = "an object" if unit.is_object_param(name) else "a value"
                raise ParameterTypeMismatch(f"{unit.name}.{name} expects {kind}")
        bound[name] = value
    return bound


def run(unit: Executable, graph: InstanceGraph, params: dict | None = None, **options) -> ExecResult:
    """Bind ``params`` and execute ``unit`` on ``graph`` in a fresh context."""
    check_acyclic(unit)
    ctx = ExecContext(graph, **options)
    return execute(unit, ctx, bind_parameters(unit, params or {}))
