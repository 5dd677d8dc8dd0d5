"""Typed attributed graphs: metamodels, instance graphs and the change journal.

An :class:`InstanceGraph` is typed over a set of registered metamodels. Every
primitive edit is appended to a journal so that the graph can be reverted to
any outstanding savepoint.
"""
from __future__ import annotations

from bisect import insort
from dataclasses import dataclass, field
from typing import Iterable, Iterator

PRIMITIVE_TYPES = ("string", "int", "float", "bool")

TYPE_DEFAULTS = {"string": "", "int": 0, "float": 0.0, "bool": False}

TRACE_METAMODEL = "trace"


class GraphError(Exception):
    """Base class for errors raised by graph edits."""


class UnknownClass(GraphError):
    pass


class UnknownObject(GraphError):
    pass


class UnknownFeature(GraphError):
    """Attribute or reference not declared on the object's class."""


class TypeMismatch(GraphError):
    pass


class MultiplicityViolation(GraphError):
    pass


class ContainmentViolation(GraphError):
    pass


class DuplicateLink(GraphError):
    pass


class NoSuchLink(GraphError):
    pass


class DanglingViolation(GraphError):
    pass


class StaleSavepoint(GraphError):
    pass


class MetamodelError(GraphError):
    pass


def value_type(value) -> str | None:
    """Primitive type name of a Python value, or None if it is not primitive."""
    # bool first: bool is a subclass of int
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    if isinstance(value, str):
        return "string"
    return None


@dataclass(frozen=True)
class ObjectRef:
    """A parameter value that denotes a graph object rather than a primitive."""

    id: int

    def __repr__(self) -> str:
        return f"#{self.id}"


@dataclass
class RefDef:
    name: str
    target: str | None  # qualified class name; None means untyped (Trace only)
    many: bool = False
    containment: bool = False


@dataclass
class ClassDef:
    name: str
    metamodel: str
    attributes: dict[str, str] = field(default_factory=dict)
    references: dict[str, RefDef] = field(default_factory=dict)

    @property
    def qualname(self) -> str:
        return f"{self.metamodel}.{self.name}"

    def __repr__(self) -> str:
        return f"<class {self.qualname}>"


@dataclass
class Metamodel:
    name: str
    classes: dict[str, ClassDef] = field(default_factory=dict)

    def add_class(self, name: str) -> ClassDef:
        if name in self.classes:
            raise MetamodelError(f"duplicate class {name!r} in metamodel {self.name!r}")
        cls = ClassDef(name, self.name)
        self.classes[name] = cls
        return cls

    def __getitem__(self, name: str) -> ClassDef:
        return self.classes[name]


def _build_trace_metamodel() -> Metamodel:
    mm = Metamodel(TRACE_METAMODEL)
    cls = mm.add_class("Trace")
    cls.references["source"] = RefDef("source", None, many=True)
    cls.references["target"] = RefDef("target", None, many=True)
    return mm


_TRACE = _build_trace_metamodel()


def trace_metamodel() -> Metamodel:
    """The built-in helper metamodel: one class Trace with untyped source/target.

    It is a shared singleton so Trace objects from different registries have
    the same class.
    """
    return _TRACE


class Registry:
    """Ordered set of metamodels a graph (or a rule system) is typed over."""

    def __init__(self, metamodels: Iterable[Metamodel] = ()):
        self.metamodels: dict[str, Metamodel] = {}
        self.register(trace_metamodel())
        for mm in metamodels:
            self.register(mm)

    def register(self, mm: Metamodel) -> None:
        existing = self.metamodels.get(mm.name)
        if existing is not None:
            if existing is mm or mm.name == TRACE_METAMODEL:
                return
            raise MetamodelError(f"metamodel {mm.name!r} already registered")
        self.metamodels[mm.name] = mm

    def user_metamodels(self) -> list[Metamodel]:
        return [mm for name, mm in self.metamodels.items() if name != TRACE_METAMODEL]

    def classes(self) -> Iterator[ClassDef]:
        for mm in self.metamodels.values():
            yield from mm.classes.values()

    def resolve(self, name: str, prefer: str | None = None) -> ClassDef:
        """Resolve ``mm.Class`` or a bare class name.

        A bare name resolves within ``prefer`` first, then must be unique
        across all registered metamodels.
        """
        if "." in name:
            mm_name, cls_name = name.split(".", 1)
            mm = self.metamodels.get(mm_name)
            if mm is None or cls_name not in mm.classes:
                raise UnknownClass(name)
            return mm.classes[cls_name]
        if prefer is not None and prefer in self.metamodels:
            cls = self.metamodels[prefer].classes.get(name)
            if cls is not None:
                return cls
        found = [mm.classes[name] for mm in self.metamodels.values() if name in mm.classes]
        if not found:
            raise UnknownClass(name)
        if len(found) > 1:
            raise UnknownClass(f"ambiguous class name {name!r}; qualify it")
        return found[0]

    def check(self) -> list[str]:
        """Metamodel-level invariant violations (unresolvable reference targets)."""
        problems = []
        for cls in self.classes():
            for ref in cls.references.values():
                if ref.target is None:
                    if cls.metamodel != TRACE_METAMODEL:
                        problems.append(f"{cls.qualname}.{ref.name}: untyped reference")
                    continue
                try:
                    self.resolve(ref.target)
                except UnknownClass:
                    problems.append(f"{cls.qualname}.{ref.name}: unknown target {ref.target}")
        return problems


@dataclass
class GraphObject:
    id: int
    cls: ClassDef
    attrs: dict[str, object]


# Journal entries. Each is a tuple whose first element names the edit.
# ("create", id)
# ("delete", id, cls, attrs)
# ("set", id, attr, old_value)
# ("add", link)
# ("remove", link, position)

Link = tuple[int, str, int]


class InstanceGraph:
    """A mutable instance graph with a revertible change journal.

    Links are kept in an ordered list; each (source, ref, target) triple
    occurs at most once.
    """

    def __init__(self, metamodels: Iterable[Metamodel] | Registry = ()):
        self.registry = metamodels if isinstance(metamodels, Registry) else Registry(metamodels)
        self.objects: dict[int, GraphObject] = {}
        self.links: list[Link] = []
        self._link_set: set[Link] = set()
        self._out: dict[tuple[int, str], list[int]] = {}
        self._in: dict[int, list[tuple[int, str]]] = {}
        self._by_class: dict[str, list[int]] = {}
        self._next_id = 1
        self._journal: list[tuple] = []
        self._savepoints: dict[int, int] = {}
        self._next_savepoint = 1

    # -- queries -----------------------------------------------------------

    def resolve_class(self, name: str) -> ClassDef:
        return self.registry.resolve(name)

    def get(self, oid: int) -> GraphObject:
        try:
            return self.objects[oid]
        except KeyError:
            raise UnknownObject(oid) from None

    def ids_of_class(self, cls: ClassDef) -> list[int]:
        """Object ids of exactly this class, ascending."""
        return self._by_class.get(cls.qualname, [])

    def targets(self, src: int, ref: str) -> list[int]:
        return self._out.get((src, ref), [])

    def sources(self, tgt: int, ref: str | None = None) -> list[int]:
        return [s for s, r in self._in.get(tgt, []) if ref is None or r == ref]

    def has_link(self, src: int, ref: str, tgt: int) -> bool:
        return (src, ref, tgt) in self._link_set

    def incident_links(self, oid: int) -> list[Link]:
        """All links touching ``oid``, in stored order."""
        return [ln for ln in self.links if ln[0] == oid or ln[2] == oid]

    def container_of(self, oid: int) -> int | None:
        for src, ref in self._in.get(oid, []):
            if self.objects[src].cls.references[ref].containment:
                return src
        return None

    @property
    def next_id(self) -> int:
        return self._next_id

    def __len__(self) -> int:
        return len(self.objects)

    # -- primitive edits ---------------------------------------------------

    def create_object(self, cls: ClassDef | str) -> int:
        if isinstance(cls, str):
            cls = self.resolve_class(cls)
        elif self.registry.metamodels.get(cls.metamodel) is None or \
                self.registry.metamodels[cls.metamodel].classes.get(cls.name) is not cls:
            raise UnknownClass(cls.qualname)
        oid = self._next_id
        self._next_id += 1
        attrs = {name: TYPE_DEFAULTS[t] for name, t in cls.attributes.items()}
        self._insert_object(GraphObject(oid, cls, attrs))
        self._log(("create", oid))
        return oid

    def insert_object(self, oid: int, cls: ClassDef, attrs: dict | None = None) -> int:
        """Create an object with a caller-chosen id (used by loaders)."""
        if oid in self.objects or oid < 1:
            raise GraphError(f"object id #{oid} unavailable")
        values = {name: TYPE_DEFAULTS[t] for name, t in cls.attributes.items()}
        self._insert_object(GraphObject(oid, cls, values))
        self._next_id = max(self._next_id, oid + 1)
        self._log(("create", oid))
        for name, value in (attrs or {}).items():
            self.set_attribute(oid, name, value)
        return oid

    def delete_object(self, oid: int, mode: str = "forbid") -> None:
        """Delete an object. ``mode`` is ``"forbid"`` (dangling links are an
        error) or ``"cascade"`` (incident links are removed first)."""
        obj = self.get(oid)
        incident = self.incident_links(oid)
        if incident:
            if mode != "cascade":
                raise DanglingViolation(f"object #{oid} still has {len(incident)} incident link(s)")
            for ln in incident:
                self.remove_link(*ln)
        self._remove_object(oid)
        self._log(("delete", oid, obj.cls, dict(obj.attrs)))

    def set_attribute(self, oid: int, attr: str, value) -> None:
        obj = self.get(oid)
        declared = obj.cls.attributes.get(attr)
        if declared is None:
            raise UnknownFeature(f"{obj.cls.qualname} has no attribute {attr!r}")
        vt = value_type(value)
        if vt != declared:
            if declared == "float" and vt == "int":
                value = float(value)
            else:
                raise TypeMismatch(f"{obj.cls.qualname}.{attr} is {declared}, got {vt or type(value).__name__}")
        old = obj.attrs[attr]
        obj.attrs[attr] = value
        self._log(("set", oid, attr, old))

    def add_link(self, src: int, ref: str, tgt: int) -> None:
        s = self.get(src)
        t = self.get(tgt)
        rdef = s.cls.references.get(ref)
        if rdef is None:
            raise UnknownFeature(f"{s.cls.qualname} has no reference {ref!r}")
        if rdef.target is not None and t.cls.qualname != rdef.target:
            raise TypeMismatch(f"{s.cls.qualname}.{ref} expects {rdef.target}, got {t.cls.qualname}")
        if (src, ref, tgt) in self._link_set:
            raise DuplicateLink(f"#{src} -{ref}-> #{tgt} already exists")
        if not rdef.many and self._out.get((src, ref)):
            raise MultiplicityViolation(f"#{src}.{ref} already set (upper bound 1)")
        if rdef.containment:
            if self.container_of(tgt) is not None:
                raise ContainmentViolation(f"#{tgt} already has a container")
            node = src
            while node is not None:
                if node == tgt:
                    raise ContainmentViolation(f"containment cycle through #{tgt}")
                node = self.container_of(node)
        self._insert_link((src, ref, tgt), len(self.links))
        self._log(("add", (src, ref, tgt)))

    def remove_link(self, src: int, ref: str, tgt: int) -> None:
        link = (src, ref, tgt)
        if link not in self._link_set:
            raise NoSuchLink(f"#{src} -{ref}-> #{tgt}")
        pos = self._remove_link(link)
        self._log(("remove", link, pos))

    # -- journal -----------------------------------------------------------

    def _log(self, entry: tuple) -> None:
        # nothing can be reverted past the oldest savepoint, so only log under one
        if self._savepoints:
            self._journal.append(entry)

    def savepoint(self) -> int:
        sp = self._next_savepoint
        self._next_savepoint += 1
        self._savepoints[sp] = len(self._journal)
        return sp

    def revert_to(self, sp: int) -> None:
        if sp not in self._savepoints:
            raise StaleSavepoint(sp)
        pos = self._savepoints[sp]
        while len(self._journal) > pos:
            self._undo(self._journal.pop())
        for later in [k for k in self._savepoints if k > sp]:
            del self._savepoints[later]

    def release(self, sp: int) -> None:
        """Discard a savepoint (and all later ones), keeping the edits."""
        if sp not in self._savepoints:
            raise StaleSavepoint(sp)
        for k in [k for k in self._savepoints if k >= sp]:
            del self._savepoints[k]
        if not self._savepoints:
            self._journal.clear()

    def journal_length(self) -> int:
        return len(self._journal)

    def _undo(self, entry: tuple) -> None:
        kind = entry[0]
        if kind == "create":
            self._remove_object(entry[1])
        elif kind == "delete":
            _, oid, cls, attrs = entry
            self._insert_object(GraphObject(oid, cls, dict(attrs)))
        elif kind == "set":
            _, oid, attr, old = entry
            self.objects[oid].attrs[attr] = old
        elif kind == "add":
            self._remove_link(entry[1])
        elif kind == "remove":
            _, link, pos = entry
            self._insert_link(link, pos)
        else:  # pragma: no cover
            raise AssertionError(kind)

    # -- index maintenance (unjournaled) -------------------------------------

    def _insert_object(self, obj: GraphObject) -> None:
        self.objects[obj.id] = obj
        insort(self._by_class.setdefault(obj.cls.qualname, []), obj.id)

    def _remove_object(self, oid: int) -> None:
        obj = self.objects.pop(oid)
        self._by_class[obj.cls.qualname].remove(oid)

    def _insert_link(self, link: Link, pos: int) -> None:
        src, ref, tgt = link
        self.links.insert(pos, link)
        self._link_set.add(link)
        self._rebuild_link_index(src, ref, tgt)

    def _remove_link(self, link: Link) -> int:
        pos = self.links.index(link)
        del self.links[pos]
        self._link_set.discard(link)
        self._rebuild_link_index(*link)
        return pos

    def _rebuild_link_index(self, src: int, ref: str, tgt: int) -> None:
        # Keeps per-key lists in stored link order; graphs here are small.
        outs = [t for s, r, t in self.links if s == src and r == ref]
        if outs:
            self._out[(src, ref)] = outs
        else:
            self._out.pop((src, ref), None)
        ins = [(s, r) for s, r, t in self.links if t == tgt]
        if ins:
            self._in[tgt] = ins
        else:
            self._in.pop(tgt, None)

    # -- whole-graph helpers -------------------------------------------------

    def copy(self) -> InstanceGraph:
        """Deep copy of objects and links (journal not copied; ids preserved)."""
        g = InstanceGraph(self.registry)
        for oid in sorted(self.objects):
            obj = self.objects[oid]
            g._insert_object(GraphObject(oid, obj.cls, dict(obj.attrs)))
        for link in self.links:
            g._insert_link(link, len(g.links))
        g._next_id = self._next_id
        return g

    def retyped(self, registry: Registry) -> InstanceGraph:
        """Copy whose objects are typed over ``registry``, matching classes by
        qualified name. Used to move a graph between independently parsed
        systems that declare the same metamodels."""
        for mm in self.registry.user_metamodels():
            if mm.name not in registry.metamodels:
                registry.register(mm)
        g = InstanceGraph(registry)
        for oid in sorted(self.objects):
            obj = self.objects[oid]
            cls = registry.resolve(obj.cls.qualname)
            g._insert_object(GraphObject(oid, cls, dict(obj.attrs)))
        for link in self.links:
            g._insert_link(link, len(g.links))
        g._next_id = self._next_id
        return g

    def conforms(self) -> list[str]:
        """List of invariant violations; empty iff the graph is well-formed."""
        out: list[str] = []
        for oid in sorted(self.objects):
            obj = self.objects[oid]
            try:
                known = self.registry.resolve(obj.cls.qualname) is obj.cls
            except UnknownClass:
                known = False
            if not known:
                out.append(f"#{oid}: class {obj.cls.qualname} not registered")
            for attr, t in obj.cls.attributes.items():
                if attr not in obj.attrs:
                    out.append(f"#{oid}.{attr}: missing value")
                elif value_type(obj.attrs[attr]) != t:
                    out.append(f"#{oid}.{attr}: expected {t}")
            for attr in obj.attrs:
                if attr not in obj.cls.attributes:
                    out.append(f"#{oid}.{attr}: undeclared attribute")
        seen: set[Link] = set()
        per_slot: dict[tuple[int, str], int] = {}
        containers: dict[int, list[int]] = {}
        for src, ref, tgt in self.links:
            label = f"#{src} -{ref}-> #{tgt}"
            if (src, ref, tgt) in seen:
                out.append(f"{label}: duplicate link")
            seen.add((src, ref, tgt))
            if src not in self.objects or tgt not in self.objects:
                out.append(f"{label}: references a missing object")
                continue
            s, t = self.objects[src], self.objects[tgt]
            rdef = s.cls.references.get(ref)
            if rdef is None:
                out.append(f"{label}: {s.cls.qualname} has no reference {ref!r}")
                continue
            if rdef.target is not None and t.cls.qualname != rdef.target:
                out.append(f"{label}: target must be {rdef.target}")
            per_slot[(src, ref)] = per_slot.get((src, ref), 0) + 1
            if not rdef.many and per_slot[(src, ref)] == 2:
                out.append(f"#{src}.{ref}: more than one link (upper bound 1)")
            if rdef.containment:
                containers.setdefault(tgt, []).append(src)
        for tgt, srcs in sorted(containers.items()):
            if len(srcs) > 1:
                out.append(f"#{tgt}: {len(srcs)} containers")
        for start in sorted(containers):
            node, hops = start, 0
            while node in containers and hops <= len(self.objects):
                node = containers[node][0]
                hops += 1
                if node == start:
                    out.append(f"#{start}: containment cycle")
                    break
        return out


def strip_traces(graph: InstanceGraph) -> int:
    """Delete every Trace object together with its links; returns how many
    objects were removed."""
    trace_cls = _TRACE.classes["Trace"]
    doomed = list(graph.ids_of_class(trace_cls))
    for oid in doomed:
        graph.delete_object(oid, mode="cascade")
    return len(doomed)
