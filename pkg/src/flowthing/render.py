"""DOT output and stage-free simplification of models."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .core import FMError, Model, Sphere, errors, validate


class Level(str, enum.Enum):
    FULL = "full"
    MACHINES = "machines"
    SPHERES = "spheres"


@dataclass(frozen=True)
class RenderOptions:
    level: Level = Level.FULL
    show_annotations: bool = False
    rankdir: str = "LR"

    def __post_init__(self):
        object.__setattr__(self, "level", Level(self.level))
        if self.rankdir not in ("LR", "TB"):
            raise ValueError(f"rankdir must be LR or TB, got {self.rankdir!r}")


class RenderError(FMError):
    pass


@dataclass(frozen=True)
class SimpleEdge:
    src: str
    dst: str
    kind: str  # "flow" or "trigger"
    multiplicity: int


@dataclass
class SimpleGraph:
    level: Level
    nodes: list[str] = field(default_factory=list)
    edges: list[SimpleEdge] = field(default_factory=list)

    def edge(self, src, dst, kind):
        for e in self.edges:
            if (e.src, e.dst, e.kind) == (src, dst, kind):
                return e
        return None


def _require_valid(model: Model):
    errs = errors(validate(model))
    if errs:
        raise RenderError(f"model has {len(errs)} validation error(s); first: "
                          f"{errs[0].code} {errs[0].message}")


def group_of(machine_path: tuple[str, ...], level) -> str:
    """Name of the simplified node a machine collapses into."""
    level = Level(level)
    if level is Level.MACHINES:
        return ".".join(machine_path)
    if level is Level.SPHERES:
        return ".".join(machine_path[:-1])
    raise ValueError("simplification levels are machines and spheres")


def simplify(model: Model, level) -> SimpleGraph:
    """Drop stages and merge arcs that fall between the same two groups.

    At ``machines`` every machine is a node; at ``spheres`` every sphere
    that directly owns a machine is. Arcs inside one group vanish. Parallel
    arcs of the same kind become one edge whose multiplicity counts them.
    """
    _require_valid(model)
    level = Level(level)
    if level is Level.FULL:
        raise ValueError("simplify takes level machines or spheres")
    g = SimpleGraph(level)
    for path, _ in model.machines():
        name = group_of(path, level)
        if name not in g.nodes:
            g.nodes.append(name)
    counts: dict[tuple[str, str, str], int] = {}
    for kind, arcs in (("flow", model.flows), ("trigger", model.triggers)):
        for arc in arcs:
            a = group_of(arc.src.machine_path, level)
            b = group_of(arc.dst.machine_path, level)
            if a != b:
                counts[(a, b, kind)] = counts.get((a, b, kind), 0) + 1
    g.edges = [SimpleEdge(a, b, k, n) for (a, b, k), n in counts.items()]
    return g


def _q(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _attrs(label=None, dashed=False) -> str:
    parts = []
    if label is not None:
        parts.append(f"label={_q(label)}")
    if dashed:
        parts.append("style=dashed")
    return f" [{', '.join(parts)}]" if parts else ""


def _label(title, notes, show):
    if show and notes:
        return " | ".join([title] + list(notes))
    return title


def render_dot(model: Model, opts: RenderOptions = RenderOptions()) -> str:
    """Emit a DOT digraph for *model* at the requested level.

    Spheres become nested ``cluster_<path>`` subgraphs (full and machines
    levels). Node ids are quoted dotted paths. Trigger edges are dashed.
    """
    _require_valid(model)
    out = ["digraph fm {", f"  rankdir={opts.rankdir};"]

    if opts.level is Level.SPHERES:
        g = simplify(model, Level.SPHERES)
        notes = {".".join(p): s.annotations for p, s in model.walk()}
        for n in g.nodes:
            out.append(f"  {_q(n)}{_attrs(_label(n, notes.get(n, ()), opts.show_annotations))};")
        for e in g.edges:
            label = str(e.multiplicity) if e.multiplicity > 1 else None
            out.append(f"  {_q(e.src)} -> {_q(e.dst)}{_attrs(label, e.kind == 'trigger')};")
        out.append("}")
        return "\n".join(out) + "\n"

    def sphere_block(prefix, sphere: Sphere, depth):
        pad = "  " * depth
        path = prefix + (sphere.name,)
        dotted = ".".join(path)
        out.append(f"{pad}subgraph {_q('cluster_' + dotted)} {{")
        title = _label(sphere.name, sphere.annotations, opts.show_annotations)
        out.append(f"{pad}  label={_q(title)};")
        for m in sphere.machines:
            mpath = dotted + "." + m.name
            if opts.level is Level.MACHINES:
                title = _label(f"{m.name} ({m.thing_type})", m.annotations, opts.show_annotations)
                out.append(f"{pad}  {_q(mpath)}{_attrs(title)};")
                continue
            for i, stage in enumerate(m.stages):
                title = f"{m.name}.{stage.value}"
                if i == 0:
                    title = _label(title, m.annotations, opts.show_annotations)
                out.append(f"{pad}  {_q(mpath + '.' + stage.value)}{_attrs(title)};")
        for child in sphere.children:
            sphere_block(path, child, depth + 1)
        out.append(f"{pad}}}")

    for root in model.roots:
        sphere_block((), root, 1)

    if opts.level is Level.MACHINES:
        g = simplify(model, Level.MACHINES)
        for e in g.edges:
            label = str(e.multiplicity) if e.multiplicity > 1 else None
            out.append(f"  {_q(e.src)} -> {_q(e.dst)}{_attrs(label, e.kind == 'trigger')};")
    else:
        for arc in model.flows:
            out.append(f"  {_q(str(arc.src))} -> {_q(str(arc.dst))}{_attrs(arc.guard)};")
        for arc in model.triggers:
            out.append(f"  {_q(str(arc.src))} -> {_q(str(arc.dst))}{_attrs(arc.guard, True)};")
    out.append("}")
    return "\n".join(out) + "\n"
