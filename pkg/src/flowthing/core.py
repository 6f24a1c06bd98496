"""In-memory flow machine model and its semantic validator.

A model is a forest of spheres. Spheres nest, and each one owns machines.
A machine handles one thing type and declares the stages it uses. Flow
arcs (solid) move a thing from stage to stage. Trigger arcs (dashed)
activate a flow anywhere in the model.

All model types are frozen dataclasses. Source spans take no part in
equality, so a parsed model compares equal to a re-parsed copy of its
serialization.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, Optional


class StageKind(str, enum.Enum):
    CREATE = "create"
    RELEASE = "release"
    TRANSFER = "transfer"
    ARRIVE = "arrive"
    ACCEPT = "accept"
    RECEIVE = "receive"
    PROCESS = "process"

    def __str__(self) -> str:
        return self.value


STAGE_NAMES = frozenset(k.value for k in StageKind)


class Ruleset(str, enum.Enum):
    STRICT = "strict"
    LENIENT = "lenient"


class Severity(str, enum.Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int
    length: int = 0

    def __post_init__(self):
        if self.line < 1 or self.column < 1:
            raise ValueError(f"invalid span {self.line}:{self.column}")


@dataclass(frozen=True)
class Machine:
    name: str
    thing_type: str
    stages: tuple[StageKind, ...]
    annotations: tuple[str, ...] = ()
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Sphere:
    name: str
    children: tuple["Sphere", ...] = ()
    machines: tuple[Machine, ...] = ()
    annotations: tuple[str, ...] = ()
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Endpoint:
    machine_path: tuple[str, ...]
    stage: StageKind

    @property
    def machine(self) -> str:
        return ".".join(self.machine_path)

    def __str__(self) -> str:
        return f"{self.machine}.{self.stage.value}"

    @classmethod
    def parse(cls, text: str) -> "Endpoint":
        """Split ``A.B.M.stage`` without consulting any model."""
        parts = text.split(".")
        if len(parts) < 2 or not all(parts) or parts[-1] not in STAGE_NAMES:
            raise ValueError(f"malformed endpoint path {text!r}")
        return cls(tuple(parts[:-1]), StageKind(parts[-1]))


@dataclass(frozen=True)
class FlowArc:
    src: Endpoint
    dst: Endpoint
    guard: Optional[str] = None
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class TriggerArc:
    src: Endpoint
    dst: Endpoint
    guard: Optional[str] = None
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Model:
    roots: tuple[Sphere, ...] = ()
    flows: tuple[FlowArc, ...] = ()
    triggers: tuple[TriggerArc, ...] = ()
    ruleset: Ruleset = Ruleset.STRICT

    def walk(self) -> Iterator[tuple[tuple[str, ...], Sphere]]:
        """Yield ``(path, sphere)`` in declaration (pre)order."""
        def rec(prefix, sphere):
            path = prefix + (sphere.name,)
            yield path, sphere
            for child in sphere.children:
                yield from rec(path, child)

        for root in self.roots:
            yield from rec((), root)

    def machines(self) -> Iterator[tuple[tuple[str, ...], Machine]]:
        """Yield ``(machine_path, machine)`` in declaration order."""
        for path, sphere in self.walk():
            for m in sphere.machines:
                yield path + (m.name,), m

    def machine_index(self) -> dict[tuple[str, ...], Machine]:
        # first declaration wins on duplicates; validate reports those
        index: dict[tuple[str, ...], Machine] = {}
        for path, m in self.machines():
            index.setdefault(path, m)
        return index

    def stage_endpoints(self) -> list[Endpoint]:
        out = []
        for path, m in self.machines():
            seen = set()
            for s in m.stages:
                if s not in seen:
                    seen.add(s)
                    out.append(Endpoint(path, s))
        return out


@dataclass(frozen=True)
class Diagnostic:
    code: str
    severity: Severity
    path: str
    message: str
    span: Optional[SourceSpan] = None

    def format(self, filename: str = "<model>") -> str:
        line, col = (self.span.line, self.span.column) if self.span else (1, 1)
        return f"{filename}:{line}:{col}: {self.code} {self.severity.value}: {self.message}"


class FMError(Exception):
    """Base class for toolkit errors."""


class ResolveError(FMError):
    def __init__(self, path_text: str, segment: str, diagnostic: Diagnostic):
        super().__init__(diagnostic.message)
        self.path_text = path_text
        self.segment = segment
        self.diagnostic = diagnostic


S = StageKind

_STRICT: dict[StageKind, frozenset[StageKind]] = {
    S.CREATE: frozenset({S.PROCESS, S.RELEASE}),
    S.ARRIVE: frozenset({S.ACCEPT}),
    S.ACCEPT: frozenset({S.PROCESS, S.RELEASE}),
    S.RECEIVE: frozenset({S.PROCESS, S.RELEASE}),
    S.PROCESS: frozenset({S.RELEASE}),
    S.RELEASE: frozenset({S.TRANSFER}),
    S.TRANSFER: frozenset({S.ARRIVE, S.RECEIVE}),
}

_LENIENT = dict(_STRICT)
_LENIENT[S.CREATE] = _STRICT[S.CREATE] | {S.TRANSFER}
_LENIENT[S.PROCESS] = _STRICT[S.PROCESS] | {S.TRANSFER}

SUCCESSION_TABLES = {Ruleset.STRICT: _STRICT, Ruleset.LENIENT: _LENIENT}


def legal_successor(ruleset, src: StageKind, dst: StageKind, same_machine: bool) -> bool:
    if not same_machine:
        return src is S.TRANSFER and dst is S.TRANSFER
    return dst in SUCCESSION_TABLES[Ruleset(ruleset)].get(src, frozenset())


class _Resolver:
    def __init__(self, model: Model):
        self.spheres = {}
        for path, sphere in model.walk():
            self.spheres.setdefault(path, sphere)
        self.machines = model.machine_index()

    def first_failure(self, endpoint: Endpoint) -> Optional[tuple[str, str]]:
        parts = endpoint.machine_path
        if not parts:
            return "", "empty machine path"
        for i in range(1, len(parts)):
            if parts[:i] not in self.spheres:
                return parts[i - 1], f"no sphere {'.'.join(parts[:i])!r}"
        machine = self.machines.get(parts)
        if machine is None:
            return parts[-1], f"no machine {'.'.join(parts)!r}"
        if endpoint.stage not in machine.stages:
            return endpoint.stage.value, (
                f"machine {'.'.join(parts)!r} does not declare stage {endpoint.stage.value!r}"
            )
        return None


def resolve(model: Model, path_text: str) -> Endpoint:
    """Resolve dotted ``sphere(.sphere)*.machine.stage`` text against *model*.

    Raises ResolveError (FM-E001) naming the first segment that fails.
    """
    parts = path_text.split(".")
    last = parts[-1]
    if len(parts) < 2 or last not in STAGE_NAMES:
        seg = last if len(parts) >= 2 else path_text
        diag = Diagnostic("FM-E001", Severity.ERROR, path_text,
                          f"unresolved endpoint {path_text!r}: {seg!r} is not a stage")
        raise ResolveError(path_text, seg, diag)
    endpoint = Endpoint(tuple(parts[:-1]), StageKind(last))
    failure = _Resolver(model).first_failure(endpoint)
    if failure is not None:
        seg, reason = failure
        diag = Diagnostic("FM-E001", Severity.ERROR, path_text,
                          f"unresolved endpoint {path_text!r} at {seg!r}: {reason}")
        raise ResolveError(path_text, seg, diag)
    return endpoint


def validate(model: Model) -> list[Diagnostic]:
    """Check every invariant and return all findings.

    Never stops at the first problem. The result is ordered by element
    declaration order (spheres and machines preorder, then flows, then
    triggers) and by code within an element.
    """
    found: list[tuple[int, str, Diagnostic]] = []
    order = 0

    def add(code, path, message, span=None):
        sev = Severity.ERROR if code.startswith("FM-E") else Severity.WARNING
        found.append((order, code, Diagnostic(code, sev, path, message, span)))

    # sphere tree: shared objects (cycles/DAGs) and sibling name clashes
    visited: set[int] = set()
    # stage warnings sort with their machine
    machine_slot: dict[tuple[str, ...], int] = {}

    def check_names(owner, spheres, machines, span):
        seen: set[str] = set()
        for item in list(spheres) + list(machines):
            if item.name in seen:
                kind = "sphere" if isinstance(item, Sphere) else "machine"
                where = ".".join(owner) or "<top level>"
                add("FM-E006", ".".join(owner + (item.name,)),
                    f"duplicate name {item.name!r} ({kind}) in {where}", item.span or span)
            seen.add(item.name)

    check_names((), model.roots, (), None)

    def visit(prefix, sphere):
        nonlocal order
        path = prefix + (sphere.name,)
        dotted = ".".join(path)
        if id(sphere) in visited:
            add("FM-E006", dotted,
                f"sphere {dotted!r} is reachable more than once (cycle or shared subtree)",
                sphere.span)
            order += 1
            return
        visited.add(id(sphere))
        check_names(path, sphere.children, sphere.machines, sphere.span)
        order += 1
        for m in sphere.machines:
            mpath = dotted + "." + m.name
            kinds = list(m.stages)
            if not kinds:
                add("FM-W002", mpath, f"machine {mpath!r} declares no stages", m.span)
            dup = sorted({k.value for k in kinds if kinds.count(k) > 1})
            for k in dup:
                add("FM-E002", mpath, f"stage {k!r} declared more than once in {mpath!r}", m.span)
            if S.RECEIVE in kinds and (S.ARRIVE in kinds or S.ACCEPT in kinds):
                add("FM-E005", mpath,
                    f"machine {mpath!r} declares receive together with arrive/accept", m.span)
            machine_slot.setdefault(path + (m.name,), order)
            order += 1
        for child in sphere.children:
            visit(path, child)

    for root in model.roots:
        visit((), root)

    resolver = _Resolver(model)
    incident: set[Endpoint] = set()

    for kind, arcs in (("flow", model.flows), ("trigger", model.triggers)):
        for arc in arcs:
            label = f"{kind} {arc.src} -> {arc.dst}"
            ok = True
            for end in (arc.src, arc.dst):
                failure = resolver.first_failure(end)
                if failure is None:
                    incident.add(end)
                else:
                    ok = False
                    seg, reason = failure
                    add("FM-E001", str(end),
                        f"unresolved endpoint {str(end)!r} at {seg!r}: {reason}", arc.span)
            if ok and kind == "flow":
                same = arc.src.machine_path == arc.dst.machine_path
                if not legal_successor(model.ruleset, arc.src.stage, arc.dst.stage, same):
                    if same:
                        add("FM-E003", label,
                            f"illegal succession {arc.src.stage.value} -> {arc.dst.stage.value} "
                            f"inside {arc.src.machine!r} ({model.ruleset.value} rules)", arc.span)
                    else:
                        add("FM-E004", label,
                            f"flow between machines must be transfer -> transfer, got "
                            f"{arc.src.stage.value} -> {arc.dst.stage.value}", arc.span)
            order += 1

    for end in model.stage_endpoints():
        if end not in incident:
            m = resolver.machines.get(end.machine_path)
            found.append((machine_slot.get(end.machine_path, 0), "FM-W001", Diagnostic(
                "FM-W001", Severity.WARNING, str(end),
                f"stage {str(end)!r} has no incident flow or trigger", m.span if m else None)))

    found.sort(key=lambda t: (t[0], t[1]))
    return [d for _, _, d in found]


def errors(diagnostics) -> list[Diagnostic]:
    return [d for d in diagnostics if d.severity is Severity.ERROR]
