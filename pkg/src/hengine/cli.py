"""Command-line front end: run units, count matches, validate files.

Exit codes: 0 success, 1 the transformation failed (or a file has
violations), 2 bad input (unreadable/unparseable files, unknown names,
malformed parameters).
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import expr as ex
from .matcher import count_matches
from .model import InstanceGraph, ObjectRef, strip_traces
from .rules import ApplicationError
from .textio import (
    DSLSyntaxError,
    ParseError,
    SystemFile,
    format_param_value,
    parse_model,
    parse_system,
    print_model,
)
from .units import MaxStepsExceeded, UnitError, run

EXIT_OK, EXIT_FAILED, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    """Bad command-line input; reported with exit code 2."""


@dataclass
class RunConfig:
    system: Path
    unit: str
    model: Path | None = None
    params: list[str] = field(default_factory=list)  # "name=value"
    injective: bool = True
    dangling: str = "forbid"
    seed: int = 0
    max_steps: int = 100_000
    out: Path | None = None
    strip_traces: bool = False


def _err(msg: str) -> None:
    print(f"hengine: {msg}", file=sys.stderr)


def _read(path: Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


def _load_system(path: Path) -> SystemFile:
    try:
        return parse_system(_read(path))
    except ParseError as exc:
        raise InputError(f"{path}:{exc}") from None


def _load_graph(path: Path | None, system: SystemFile) -> InstanceGraph:
    if path is None:
        graph = InstanceGraph(system.metamodels.values())
    else:
        try:
            graph = parse_model(_read(path), system).graph
        except ParseError as exc:
            raise InputError(f"{path}:{exc}") from None
    return system.attach(graph)


def parse_param(text: str, graph: InstanceGraph) -> tuple[str, object]:
    """``name=value``; value is a literal or ``#id`` for an object."""
    name, sep, raw = text.partition("=")
    name, raw = name.strip(), raw.strip()
    if not sep or not name:
        raise InputError(f"malformed --param {text!r} (expected name=value)")
    if raw.startswith("#"):
        try:
            oid = int(raw[1:])
        except ValueError:
            raise InputError(f"malformed object reference {raw!r}") from None
        if oid not in graph.objects:
            raise InputError(f"no object {raw} in the model")
        return name, ObjectRef(oid)
    try:
        return name, ex.parse_value(raw)
    except ex.ExprError as exc:
        raise InputError(f"bad value for {name}: {exc}") from None


def cmd_run(cfg: RunConfig) -> int:
    try:
        system = _load_system(cfg.system)
        graph = _load_graph(cfg.model, system)
        if cfg.unit not in system:
            raise InputError(f"no unit or rule named {cfg.unit!r}")
        unit = system.get(cfg.unit)
        params = dict(parse_param(p, graph) for p in cfg.params)
    except InputError as exc:
        _err(str(exc))
        return EXIT_INPUT

    try:
        result = run(unit, graph, params, seed=cfg.seed, max_steps=cfg.max_steps,
                     injective=cfg.injective, dangling=cfg.dangling)
    except MaxStepsExceeded as exc:
        _err(f"{cfg.unit}: step limit exceeded ({exc})")
        return EXIT_FAILED
    except UnitError as exc:  # parameter binding problems
        _err(str(exc))
        return EXIT_INPUT
    except ApplicationError as exc:
        _err(f"{cfg.unit}: application error: {exc}")
        return EXIT_FAILED
    if not result.success:
        _err(f"{cfg.unit}: not applicable")
        return EXIT_FAILED

    # out-parameters in declaration order
    for p in unit.parameters:
        if p.is_output and p.name in result.outputs:
            print(f"{p.name} = {format_param_value(result.outputs[p.name], graph)}")
    if cfg.strip_traces:
        strip_traces(graph)
    text = print_model(graph)
    if cfg.out is None:
        sys.stdout.write(text)
    else:
        try:
            Path(cfg.out).write_text(text, encoding="utf-8", newline="\n")
        except OSError as exc:
            _err(f"cannot write {cfg.out}: {exc}")
            return EXIT_INPUT
    return EXIT_OK


def cmd_match(system_path: Path, model_path: Path | None, rule_name: str,
              injective: bool = True) -> int:
    try:
        system = _load_system(system_path)
        graph = _load_graph(model_path, system)
        rule = system.rules.get(rule_name)
        if rule is None:
            raise InputError(f"no rule named {rule_name!r}")
    except InputError as exc:
        _err(str(exc))
        return EXIT_INPUT
    try:
        n = count_matches(rule.lhs, rule.condition, graph, injective)
    except ex.EvalError as exc:
        _err(f"{rule_name}: {exc}")
        return EXIT_FAILED
    print(n)
    return EXIT_OK


def cmd_validate(path: Path, system_path: Path | None = None) -> int:
    """Parse and conformance-check a ``.gts`` or ``.gim`` file."""
    path = Path(path)
    try:
        text = _read(path)
        if path.suffix == ".gim":
            if system_path is None and (path.parent / "system.gts").exists():
                system_path = path.parent / "system.gts"
            system = _load_system(system_path) if system_path is not None else None
            graph = parse_model(text, system).graph
            problems = graph.conforms()
        else:
            system = parse_system(text)
            problems = system.registry.check()
            for rule in system.rules.values():
                problems += [f"rule {rule.name}: {p}" for p in rule.validate()]
    except InputError as exc:
        _err(str(exc))
        return EXIT_INPUT
    except DSLSyntaxError as exc:
        _err(f"{path}:{exc}")
        return EXIT_INPUT
    except ParseError as exc:  # resolution or conformance problems
        print(f"{path}:{exc}")
        return EXIT_FAILED
    if problems:
        for p in problems:
            print(f"{path}: {p}")
        return EXIT_FAILED
    print(f"{path}: ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hengine", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="execute a unit or rule")
    r.add_argument("system", type=Path)
    r.add_argument("unit")
    r.add_argument("--model", type=Path, help="input model (default: empty graph)")
    r.add_argument("--param", action="append", default=[], metavar="NAME=VALUE",
                   help="parameter value: a literal, or #id for an object (repeatable)")
    r.add_argument("--injective", action=argparse.BooleanOptionalAction, default=True)
    r.add_argument("--dangling", choices=("forbid", "cascade"), default="forbid")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--max-steps", type=int, default=100_000)
    r.add_argument("--out", type=Path, help="write the result model here instead of stdout")
    r.add_argument("--strip-traces", action="store_true",
                   help="drop Trace objects before writing the result")

    m = sub.add_parser("match", help="count condition-satisfying matches of a rule's LHS")
    m.add_argument("system", type=Path)
    m.add_argument("model", type=Path)
    m.add_argument("rule")
    m.add_argument("--injective", action=argparse.BooleanOptionalAction, default=True)

    v = sub.add_parser("validate", help="parse and check a .gts or .gim file")
    v.add_argument("path", type=Path)
    v.add_argument("--system", type=Path, help="system file for a .gim model")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        cfg = RunConfig(args.system, args.unit, args.model, args.param, args.injective,
                        args.dangling, args.seed, args.max_steps, args.out, args.strip_traces)
        return cmd_run(cfg)
    if args.command == "match":
        return cmd_match(args.system, args.model, args.rule, args.injective)
    return cmd_validate(args.path, args.system)


if __name__ == "__main__":
    sys.exit(main())
